//! Deterministic synthetic scenes with exact ground-truth masks.
//!
//! "Simple" scenes put one object on a flat background whose luma is far from
//! the object's, so Otsu recovers the object. "Complex" scenes put the same
//! kind of object on gradient or textured backgrounds drawn from a colour
//! range that overlaps the object's.
//!
//! Sample `i` draws from its own ChaCha8 stream (`tag << 32 | i`, keyed by the
//! spec seed), so samples are independent of `n` and of each other.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{Image, Mask, LUMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    Disk,
    Rectangle,
    /// Union of a few overlapping disks.
    Blob,
    /// Picks one of the above per sample.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    Constant,
    Gradient,
    Texture,
}

/// Axis-aligned box in RGB space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorRange {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl ColorRange {
    pub const FULL: ColorRange = ColorRange {
        lo: [0.0; 3],
        hi: [1.0; 3],
    };

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        core::array::from_fn(|k| self.lo[k] + (self.hi[k] - self.lo[k]) * rng.random::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub side: usize,
    pub shape: ShapeFamily,
    /// One range per object class; sample `i` uses class `i % len`.
    pub object_colors: Vec<ColorRange>,
    pub background: BackgroundMode,
    /// Colour range for gradient/texture backgrounds.
    pub background_colors: ColorRange,
    /// Half-width of the uniform per-channel noise.
    pub noise: f64,
    pub seed: u64,
}

/// Reddish objects.
pub const OBJECT_RED: ColorRange = ColorRange {
    lo: [0.65, 0.08, 0.05],
    hi: [0.95, 0.32, 0.28],
};

/// Bright yellow objects, for brightness-separable two-class scenes.
pub const OBJECT_BRIGHT: ColorRange = ColorRange {
    lo: [0.85, 0.8, 0.2],
    hi: [1.0, 0.95, 0.4],
};

/// Dark blue objects, for brightness-separable two-class scenes.
pub const OBJECT_DARK: ColorRange = ColorRange {
    lo: [0.0, 0.02, 0.15],
    hi: [0.1, 0.12, 0.35],
};

/// Warm background palette that shares hues with [`OBJECT_RED`].
pub const WARM_CLUTTER: ColorRange = ColorRange {
    lo: [0.0, 0.0, 0.0],
    hi: [1.0, 0.6, 0.6],
};

impl SceneSpec {
    pub fn simple(seed: u64) -> Self {
        Self {
            side: 40,
            shape: ShapeFamily::Mixed,
            object_colors: alloc::vec![OBJECT_RED],
            background: BackgroundMode::Constant,
            background_colors: ColorRange::FULL,
            noise: 0.02,
            seed,
        }
    }

    pub fn complex(seed: u64) -> Self {
        Self {
            background: BackgroundMode::Texture,
            noise: 0.06,
            ..Self::simple(seed)
        }
    }

    /// Textured backgrounds drawn from [`WARM_CLUTTER`], so colour alone
    /// often confuses object and background.
    pub fn cluttered(seed: u64) -> Self {
        Self {
            background_colors: WARM_CLUTTER,
            ..Self::complex(seed)
        }
    }

    /// Two object classes (bright / dark) on class-independent mid-grey
    /// gradients.
    pub fn two_class(seed: u64) -> Self {
        Self {
            object_colors: alloc::vec![OBJECT_BRIGHT, OBJECT_DARK],
            background: BackgroundMode::Gradient,
            background_colors: ColorRange {
                lo: [0.4; 3],
                hi: [0.6; 3],
            },
            noise: 0.03,
            ..Self::simple(seed)
        }
    }

    pub fn classes(&self) -> usize {
        self.object_colors.len().max(1)
    }
}

/// One generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub mask: Mask,
    /// Object class, `i % object_colors.len()`.
    pub label: usize,
}

/// Object area fraction is kept in this band; below one half the object is the
/// minority side for Otsu.
pub const AREA_BAND: (f64, f64) = (0.12, 0.45);

const SIMPLE_TAG: u64 = 1;
const COMPLEX_TAG: u64 = 2;
/// Minimum luma gap between the flat background and the object's base colour.
const SIMPLE_LUMA_GAP: f64 = 0.3;

fn luma(c: [f64; 3]) -> f64 {
    LUMA[0] * c[0] + LUMA[1] * c[1] + LUMA[2] * c[2]
}

fn sample_rng(seed: u64, tag: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 32) | index as u64);
    rng
}

#[derive(Debug, Clone, Copy)]
struct Disk {
    cx: f64,
    cy: f64,
    r: f64,
}

enum Shape {
    Disks(Vec<Disk>),
    Rect {
        cx: f64,
        cy: f64,
        hw: f64,
        hh: f64,
        angle: f64,
    },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Disks(disks) => disks.iter().any(|d| {
                let (dx, dy) = (x - d.cx, y - d.cy);
                dx * dx + dy * dy <= d.r * d.r
            }),
            Shape::Rect { cx, cy, hw, hh, angle } => {
                let (s, c) = libm::sincos(*angle);
                let (dx, dy) = (x - cx, y - cy);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                u.abs() <= *hw && v.abs() <= *hh
            }
        }
    }

    fn rasterize(&self, side: usize) -> Mask {
        Mask::from_fn(side, side, |r, c| {
            u8::from(self.contains(c as f64 + 0.5, r as f64 + 0.5))
        })
    }
}

fn sample_shape(rng: &mut ChaCha8Rng, family: ShapeFamily, side: usize) -> Shape {
    let s = side as f64;
    let family = match family {
        ShapeFamily::Mixed => match rng.random_range(0..3) {
            0 => ShapeFamily::Disk,
            1 => ShapeFamily::Rectangle,
            _ => ShapeFamily::Blob,
        },
        f => f,
    };
    let area = (AREA_BAND.0 + 0.02 + (AREA_BAND.1 - AREA_BAND.0 - 0.06) * rng.random::<f64>()) * s * s;
    let cx = s * rng.random_range(0.38..0.62);
    let cy = s * rng.random_range(0.38..0.62);
    match family {
        ShapeFamily::Disk => Shape::Disks(alloc::vec![Disk {
            cx,
            cy,
            r: libm::sqrt(area / PI),
        }]),
        ShapeFamily::Rectangle => {
            let aspect = rng.random_range(0.6..1.6);
            let w = libm::sqrt(area * aspect);
            Shape::Rect {
                cx,
                cy,
                hw: w / 2.0,
                hh: area / w / 2.0,
                angle: rng.random_range(0.0..PI),
            }
        }
        _ => {
            let lobes = rng.random_range(3..5usize);
            // Lobes overlap heavily; the union is roughly 1.6 lobe areas.
            let r = libm::sqrt(area / (1.6 * PI));
            let disks = (0..lobes)
                .map(|k| {
                    let a = 2.0 * PI * (k as f64 + rng.random::<f64>() * 0.5) / lobes as f64;
                    let d = r * rng.random_range(0.5..0.9);
                    Disk {
                        cx: cx + d * libm::cos(a),
                        cy: cy + d * libm::sin(a),
                        r: r * rng.random_range(0.8..1.1),
                    }
                })
                .collect();
            Shape::Disks(disks)
        }
    }
}

/// Object mask with area fraction inside [`AREA_BAND`]; resamples until it fits.
fn sample_mask(rng: &mut ChaCha8Rng, family: ShapeFamily, side: usize) -> Mask {
    let total = (side * side) as f64;
    for _ in 0..32 {
        let mask = sample_shape(rng, family, side).rasterize(side);
        let frac = mask.count_nonzero() as f64 / total;
        if (AREA_BAND.0..=AREA_BAND.1).contains(&frac) {
            return mask;
        }
    }
    // Fallback: centred square of 25 % area.
    let half = side / 4;
    let lo = side / 2 - half;
    Mask::from_fn(side, side, |r, c| {
        u8::from((lo..lo + 2 * half).contains(&r) && (lo..lo + 2 * half).contains(&c))
    })
}

/// Flat background colour whose luma is at least [`SIMPLE_LUMA_GAP`] from `object_luma`.
fn flat_background(rng: &mut ChaCha8Rng, object_luma: f64) -> [f64; 3] {
    let dark = (0.03, object_luma - SIMPLE_LUMA_GAP);
    let bright = (object_luma + SIMPLE_LUMA_GAP, 0.97);
    let dark_ok = dark.1 > dark.0;
    let bright_ok = bright.1 > bright.0;
    let (lo, hi) = match (dark_ok, bright_ok) {
        (true, true) => {
            if rng.random::<bool>() {
                dark
            } else {
                bright
            }
        }
        (true, false) => dark,
        _ => bright,
    };
    let target = lo + (hi - lo) * rng.random::<f64>();
    for _ in 0..16 {
        let v: [f64; 3] = core::array::from_fn(|_| rng.random::<f64>());
        let shift = target - luma(v);
        let c = v.map(|x| x + shift);
        if c.iter().all(|x| (0.0..=1.0).contains(x)) {
            return c;
        }
    }
    [target; 3]
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    core::array::from_fn(|k| a[k] + (b[k] - a[k]) * t)
}

struct Backdrop {
    a: [f64; 3],
    b: [f64; 3],
    c: [f64; 3],
    dir: (f64, f64),
    texture: Option<Texture>,
}

struct Texture {
    fx: f64,
    fy: f64,
    gx: f64,
    gy: f64,
    phase: f64,
    strength: f64,
}

impl Backdrop {
    fn sample(rng: &mut ChaCha8Rng, range: &ColorRange, textured: bool) -> Self {
        let angle = rng.random_range(0.0..2.0 * PI);
        let texture = textured.then(|| {
            let period_a = rng.random_range(3.0..8.0);
            let period_b = rng.random_range(3.0..8.0);
            let ta = rng.random_range(0.0..PI);
            Texture {
                fx: 2.0 * PI * libm::cos(ta) / period_a,
                fy: 2.0 * PI * libm::sin(ta) / period_a,
                gx: -2.0 * PI * libm::sin(ta) / period_b,
                gy: 2.0 * PI * libm::cos(ta) / period_b,
                phase: rng.random_range(0.0..2.0 * PI),
                strength: rng.random_range(0.5..1.0),
            }
        });
        Self {
            a: range.sample(rng),
            b: range.sample(rng),
            c: range.sample(rng),
            dir: (libm::cos(angle), libm::sin(angle)),
            texture,
        }
    }

    fn color(&self, x: f64, y: f64, side: f64) -> [f64; 3] {
        let t = 0.5 + ((x / side - 0.5) * self.dir.0 + (y / side - 0.5) * self.dir.1) / 1.5;
        let base = lerp(self.a, self.b, t.clamp(0.0, 1.0));
        match &self.texture {
            None => base,
            Some(tx) => {
                let u = libm::sin(tx.fx * x + tx.fy * y + tx.phase);
                let v = libm::sin(tx.gx * x + tx.gy * y);
                let w = 0.5 + 0.5 * u * v;
                lerp(base, self.c, tx.strength * w)
            }
        }
    }
}

fn generate_one(spec: &SceneSpec, mode: BackgroundMode, tag: u64, index: usize) -> Sample {
    let side = spec.side;
    let mut rng = sample_rng(spec.seed, tag, index);
    let label = index % spec.classes();
    let palette = spec.object_colors.get(label).copied().unwrap_or(OBJECT_RED);
    let mask = sample_mask(&mut rng, spec.shape, side);
    let object = palette.sample(&mut rng);
    let shade_angle = rng.random_range(0.0..2.0 * PI);
    let (sx, sy) = (libm::cos(shade_angle), libm::sin(shade_angle));
    let backdrop = match mode {
        BackgroundMode::Constant => None,
        BackgroundMode::Gradient => Some(Backdrop::sample(&mut rng, &spec.background_colors, false)),
        BackgroundMode::Texture => Some(Backdrop::sample(&mut rng, &spec.background_colors, true)),
    };
    let flat = flat_background(&mut rng, luma(object));
    let s = side as f64;
    let noise = spec.noise;
    let image = Image::from_fn(side, side, |r, c| {
        let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
        let base = if mask.get(r, c) != 0 {
            let shade = 0.04 * ((x / s - 0.5) * sx + (y / s - 0.5) * sy) * 2.0;
            object.map(|v| v + shade)
        } else {
            match &backdrop {
                None => flat,
                Some(b) => b.color(x, y, s),
            }
        };
        base.map(|v| v + noise * (2.0 * rng.random::<f64>() - 1.0))
    });
    Sample { image, mask, label }
}

/// Scenes using `spec.background` as given.
pub fn generate(spec: &SceneSpec, n: usize) -> Vec<Sample> {
    let tag = if spec.background == BackgroundMode::Constant {
        SIMPLE_TAG
    } else {
        COMPLEX_TAG
    };
    (0..n).map(|i| generate_one(spec, spec.background, tag, i)).collect()
}

/// Flat-background scenes that Otsu segments cleanly.
pub fn gen_simple(spec: &SceneSpec, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| generate_one(spec, BackgroundMode::Constant, SIMPLE_TAG, i))
        .collect()
}

/// Textured (or gradient) background scenes. A `Constant` spec is upgraded to
/// `Texture`.
pub fn gen_complex(spec: &SceneSpec, n: usize) -> Vec<Sample> {
    let mode = match spec.background {
        BackgroundMode::Constant => BackgroundMode::Texture,
        m => m,
    };
    (0..n).map(|i| generate_one(spec, mode, COMPLEX_TAG, i)).collect()
}
