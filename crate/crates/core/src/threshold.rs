//! Otsu's method over 256-bin histograms.
//!
//! Class 0 is bins `<= t`. The between-class variance at `t` is compared
//! exactly: with `n0` pixels summing to `s0` below the threshold out of `n`
//! pixels summing to `s`,
//!
//! ```text
//! w0 w1 (mu0 - mu1)^2 = (n s0 - n0 s)^2 / (n^2 n0 n1)
//! ```
//!
//! so candidates are ranked by `(n s0 - n0 s)^2 / (n0 n1)` using integer
//! cross-multiplication. Ties go to the smallest `t`.

use crate::raster::{to_grayscale, Image, Mask, Plane};
use crate::{Error, Result};

pub type Histogram = [u64; 256];

/// Which side of the threshold is the object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    Bright,
    Dark,
    /// The side holding fewer pixels.
    #[default]
    Auto,
}

/// `floor(v * 255 + 0.5)`, clamped to a byte.
#[inline]
pub fn quantize(v: f64) -> u8 {
    libm::floor(v * 255.0 + 0.5).clamp(0.0, 255.0) as u8
}

pub fn histogram(plane: &Plane) -> Histogram {
    let mut hist = [0u64; 256];
    for &v in plane.as_slice() {
        hist[quantize(v) as usize] += 1;
    }
    hist
}

/// Exact score `num^2 / den`; `den == 0` encodes a one-sided split (score 0).
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

/// `a * b` as a 256-bit `(hi, lo)` pair.
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);
    let ll = a_lo * b_lo;
    let lh = a_lo * b_hi;
    let hl = a_hi * b_lo;
    let hh = a_hi * b_hi;
    let mid = (ll >> 64) + (lh & MASK) + (hl & MASK);
    let lo = (ll & MASK) | (mid << 64);
    let hi = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
    (hi, lo)
}

impl Score {
    fn greater_than(&self, other: &Score) -> bool {
        match (self.den, other.den) {
            (0, _) => false,
            (_, 0) => self.num != 0,
            _ => {
                // num fits in 64 bits whenever the pixel count is below 2^28.
                if self.num >> 64 == 0 && other.num >> 64 == 0 {
                    mul_wide(self.num * self.num, other.den) > mul_wide(other.num * other.num, self.den)
                } else {
                    let a = self.num as f64;
                    let b = other.num as f64;
                    a * a / self.den as f64 > b * b / other.den as f64
                }
            }
        }
    }
}

pub fn otsu_threshold(hist: &Histogram) -> Result<u8> {
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    if n == 0 {
        return Err(Error::Empty("histogram"));
    }
    let s: u128 = hist.iter().enumerate().map(|(b, &c)| b as u128 * c as u128).sum();
    let mut n0: u128 = 0;
    let mut s0: u128 = 0;
    let mut best = 0u8;
    let mut best_score = Score { num: 0, den: 0 };
    for (t, &count) in hist.iter().enumerate() {
        n0 += count as u128;
        s0 += t as u128 * count as u128;
        let n1 = n - n0;
        let score = if n0 == 0 || n1 == 0 {
            Score { num: 0, den: 0 }
        } else {
            Score {
                num: (n * s0).abs_diff(n0 * s),
                den: n0 * n1,
            }
        };
        if score.greater_than(&best_score) {
            best_score = score;
            best = t as u8;
        }
    }
    Ok(best)
}

/// Otsu binarization of a single-channel plane.
pub fn otsu_mask_plane(gray: &Plane, polarity: Polarity) -> Mask {
    let hist = histogram(gray);
    let t = otsu_threshold(&hist).expect("plane has at least one pixel");
    let dark: u64 = hist[..=t as usize].iter().sum();
    let bright = gray.len() as u64 - dark;
    let fg_bright = match polarity {
        Polarity::Bright => true,
        Polarity::Dark => false,
        Polarity::Auto => bright <= dark,
    };
    let (h, w) = gray.dims();
    Mask::from_fn(h, w, |r, c| {
        let above = quantize(gray.get(r, c)) > t;
        u8::from(above == fg_bright)
    })
}

/// Grayscale, histogram, Otsu threshold, binary mask (1 = object).
pub fn otsu_mask(img: &Image, polarity: Polarity) -> Mask {
    otsu_mask_plane(&to_grayscale(img), polarity)
}
