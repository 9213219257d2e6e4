//! Raster types and the integral-image primitives every windowed operation
//! builds on.
//!
//! Windows are always clipped to the image bounds; means divide by the number
//! of in-bounds cells.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Luma weights used by [`to_grayscale`].
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// A single-channel `height x width` grid of finite reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter("plane dimensions must be >= 1"));
        }
        if data.len() != height * width {
            return Err(Error::InvalidParameter("plane data length != height * width"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("plane values must be finite"));
        }
        Ok(Self { height, width, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "plane dimensions must be >= 1");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "plane dimensions must be >= 1");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Result<Plane> {
        self.check_dims(other)?;
        Ok(Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_dims(&self, other: &Plane) -> Result<()> {
        check_dims(self.dims(), other.dims())
    }
}

pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Three planes (R, G, B) of identical size with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: [Plane; 3],
}

impl Image {
    pub fn new(r: Plane, g: Plane, b: Plane) -> Result<Self> {
        r.check_dims(&g)?;
        r.check_dims(&b)?;
        for p in [&r, &g, &b] {
            if p.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidParameter("image values must lie in [0, 1]"));
            }
        }
        Ok(Self { channels: [r, g, b] })
    }

    /// Builds an image from a per-pixel closure; values are clamped to `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut planes = [
            Vec::with_capacity(height * width),
            Vec::with_capacity(height * width),
            Vec::with_capacity(height * width),
        ];
        for r in 0..height {
            for c in 0..width {
                let px = f(r, c);
                for (plane, v) in planes.iter_mut().zip(px) {
                    plane.push(v.clamp(0.0, 1.0));
                }
            }
        }
        let [r, g, b] = planes;
        let mk = |data: Vec<f64>| Plane::new(height, width, data).expect("finite pixel values");
        Self {
            channels: [mk(r), mk(g), mk(b)],
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn channels(&self) -> &[Plane; 3] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &Plane {
        &self.channels[index]
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        [
            self.channels[0].get(row, col),
            self.channels[1].get(row, col),
            self.channels[2].get(row, col),
        ]
    }
}

/// Per-pixel class ids; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter("mask dimensions must be >= 1"));
        }
        if data.len() != height * width {
            return Err(Error::InvalidParameter("mask data length != height * width"));
        }
        Ok(Self { height, width, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(height: usize, width: usize, class: u8) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be >= 1");
        Self {
            height,
            width,
            data: vec![class; height * width],
        }
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be >= 1");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Collapses every nonzero class to 1.
    pub fn foreground(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| u8::from(v != 0)).collect(),
        }
    }
}

/// `C` planes giving a per-pixel distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    planes: Vec<Plane>,
}

impl ProbMap {
    /// Tolerance on per-pixel sums accepted by [`ProbMap::new`].
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(planes: Vec<Plane>) -> Result<Self> {
        let first = planes.first().ok_or(Error::Empty("probability map"))?;
        for p in &planes[1..] {
            first.check_dims(p)?;
        }
        for i in 0..first.len() {
            let mut sum = 0.0;
            for p in &planes {
                let v = p.as_slice()[i];
                if v < 0.0 {
                    return Err(Error::InvalidParameter("probabilities must be >= 0"));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
                return Err(Error::InvalidParameter("probabilities must sum to 1 per pixel"));
            }
        }
        Ok(Self { planes })
    }

    pub(crate) fn from_planes_unchecked(planes: Vec<Plane>) -> Self {
        Self { planes }
    }

    pub fn uniform(height: usize, width: usize, classes: usize) -> Self {
        assert!(classes > 0, "at least one class");
        let v = 1.0 / classes as f64;
        Self {
            planes: (0..classes).map(|_| Plane::filled(height, width, v)).collect(),
        }
    }

    /// One-hot encoding of a mask.
    pub fn one_hot(mask: &Mask, classes: usize) -> Result<Self> {
        if let Some(&bad) = mask.as_slice().iter().find(|&&v| v as usize >= classes) {
            return Err(Error::ClassOutOfRange { class: bad, classes });
        }
        let (h, w) = mask.dims();
        Ok(Self {
            planes: (0..classes)
                .map(|c| Plane::from_fn(h, w, |r, col| f64::from(u8::from(mask.get(r, col) as usize == c))))
                .collect(),
        })
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.planes.len()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, class: usize) -> &Plane {
        &self.planes[class]
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }
}

/// `(height + 1) x (width + 1)` table of prefix sums; row 0 and column 0 are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralPlane {
    height: usize,
    width: usize,
    sums: Vec<f64>,
}

impl IntegralPlane {
    /// Source dimensions.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Sum of source rows `< row`, cols `< col`.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.sums[row * (self.width + 1) + col]
    }

    /// Sum over the half-open window `[top, bottom) x [left, right)`.
    #[inline]
    pub fn window_sum(&self, top: usize, left: usize, bottom: usize, right: usize) -> f64 {
        self.get(bottom, right) - self.get(top, right) - self.get(bottom, left) + self.get(top, left)
    }
}

pub fn integral(p: &Plane) -> IntegralPlane {
    let (h, w) = p.dims();
    let stride = w + 1;
    let mut sums = vec![0.0; (h + 1) * stride];
    for r in 0..h {
        let mut row_sum = 0.0;
        for c in 0..w {
            row_sum += p.get(r, c);
            sums[(r + 1) * stride + c + 1] = sums[r * stride + c + 1] + row_sum;
        }
    }
    IntegralPlane {
        height: h,
        width: w,
        sums,
    }
}

/// In-bounds extent `[lo, hi)` of a radius-`r` window centred at `i` along an
/// axis of length `n`.
#[inline]
pub(crate) fn clip_window(i: usize, r: usize, n: usize) -> (usize, usize) {
    (i.saturating_sub(r), (i + r + 1).min(n))
}

/// Mean over the `(2r+1)^2` window clipped to the image.
pub fn box_mean(p: &Plane, r: usize) -> Plane {
    if r == 0 {
        return p.clone();
    }
    let table = integral(p);
    let (h, w) = p.dims();
    Plane::from_fn(h, w, |row, col| {
        let (top, bottom) = clip_window(row, r, h);
        let (left, right) = clip_window(col, r, w);
        let count = ((bottom - top) * (right - left)) as f64;
        table.window_sum(top, left, bottom, right) / count
    })
}

/// `0.299 R + 0.587 G + 0.114 B`, clamped to `[0, 1]`.
pub fn to_grayscale(img: &Image) -> Plane {
    let [r, g, b] = img.channels();
    let (h, w) = img.dims();
    let data = r
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .zip(b.as_slice())
        .map(|((&r, &g), &b)| (LUMA[0] * r + LUMA[1] * g + LUMA[2] * b).clamp(0.0, 1.0))
        .collect();
    Plane {
        height: h,
        width: w,
        data,
    }
}
