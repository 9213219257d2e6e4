//! Guided filter.
//!
//! The output is `g_i = sum_j W_ij(I) p_j` with
//!
//! ```text
//! W_ij(I) = sum_{k : i,j in w_k} (1 + (I_i - mu_k)(I_j - mu_k) / (sigma_k^2 + eps)) / (|w_i| |w_k|)
//! ```
//!
//! where `w_k` is the radius-`r` square window centred at `k`, clipped to the
//! image, and `|w|` counts its in-bounds pixels. Away from the borders
//! `|w_i| = |w_k| = (2r+1)^2`. With this normalization every row of `W` sums
//! to one, including at the borders.
//!
//! [`guided_filter_naive`] evaluates the sum literally and is only meant for
//! small inputs. [`guided_filter_fast`] uses the usual `a`/`b` decomposition
//! over box means and agrees with it to rounding.

use alloc::vec;
use alloc::vec::Vec;

use crate::raster::{box_mean, clip_window, Plane, ProbMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedFilterParams {
    radius: usize,
    epsilon: f64,
}

impl GuidedFilterParams {
    pub fn new(radius: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter("guided filter epsilon must be > 0"));
        }
        Ok(Self { radius, epsilon })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for GuidedFilterParams {
    fn default() -> Self {
        Self {
            radius: 2,
            epsilon: 1e-2,
        }
    }
}

/// Mean and population variance of `guide` over every clipped window.
struct WindowStats {
    count: Vec<usize>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

fn window_stats(guide: &Plane, r: usize) -> WindowStats {
    let (h, w) = guide.dims();
    let n = h * w;
    let mut stats = WindowStats {
        count: Vec::with_capacity(n),
        mean: Vec::with_capacity(n),
        var: Vec::with_capacity(n),
    };
    for kr in 0..h {
        let (top, bottom) = clip_window(kr, r, h);
        for kc in 0..w {
            let (left, right) = clip_window(kc, r, w);
            let count = (bottom - top) * (right - left);
            let mut sum = 0.0;
            for i in top..bottom {
                for j in left..right {
                    sum += guide.get(i, j);
                }
            }
            let mean = sum / count as f64;
            let mut sq = 0.0;
            for i in top..bottom {
                for j in left..right {
                    let d = guide.get(i, j) - mean;
                    sq += d * d;
                }
            }
            stats.count.push(count);
            stats.mean.push(mean);
            stats.var.push(sq / count as f64);
        }
    }
    stats
}

fn row_into(guide: &Plane, stats: &WindowStats, params: GuidedFilterParams, row: usize, col: usize, out: &mut [f64]) {
    let (h, w) = guide.dims();
    let r = params.radius;
    out.iter_mut().for_each(|v| *v = 0.0);
    let (ktop, kbottom) = clip_window(row, r, h);
    let (kleft, kright) = clip_window(col, r, w);
    let count_i = ((kbottom - ktop) * (kright - kleft)) as f64;
    let gi = guide.get(row, col);
    for kr in ktop..kbottom {
        for kc in kleft..kright {
            let k = kr * w + kc;
            let mu = stats.mean[k];
            let denom = stats.var[k] + params.epsilon;
            let norm = count_i * stats.count[k] as f64;
            let (top, bottom) = clip_window(kr, r, h);
            let (left, right) = clip_window(kc, r, w);
            for jr in top..bottom {
                for jc in left..right {
                    let gj = guide.get(jr, jc);
                    out[jr * w + jc] += (1.0 + (gi - mu) * (gj - mu) / denom) / norm;
                }
            }
        }
    }
}

/// Row `i = (row, col)` of the weight matrix `W(I)`, laid out as a plane over `j`.
pub fn weight_row(guide: &Plane, params: GuidedFilterParams, row: usize, col: usize) -> Plane {
    let stats = window_stats(guide, params.radius);
    let (h, w) = guide.dims();
    let mut out = vec![0.0; h * w];
    row_into(guide, &stats, params, row, col, &mut out);
    Plane::new(h, w, out).expect("finite weights")
}

/// Literal evaluation of `g = W(I) p`. Quadratic in the pixel count; use on
/// small inputs only.
pub fn guided_filter_naive(guide: &Plane, input: &Plane, params: GuidedFilterParams) -> Result<Plane> {
    guide.check_dims(input)?;
    let stats = window_stats(guide, params.radius);
    let (h, w) = guide.dims();
    let mut weights = vec![0.0; h * w];
    Ok(Plane::from_fn(h, w, |row, col| {
        row_into(guide, &stats, params, row, col, &mut weights);
        weights.iter().zip(input.as_slice()).map(|(a, b)| a * b).sum()
    }))
}

/// Box-filter guided filter: `a_k = cov_k(I, p) / (var_k(I) + eps)`,
/// `b_k = mean_k(p) - a_k mean_k(I)`, `g = mean(a) I + mean(b)`.
pub fn guided_filter_fast(guide: &Plane, input: &Plane, params: GuidedFilterParams) -> Result<Plane> {
    guide.check_dims(input)?;
    let r = params.radius;
    let mean_i = box_mean(guide, r);
    let mean_p = box_mean(input, r);
    let mean_ip = box_mean(&guide.zip_map(input, |a, b| a * b)?, r);
    let mean_ii = box_mean(&guide.map(|v| v * v), r);

    let n = guide.len();
    let (h, w) = guide.dims();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        let mi = mean_i.as_slice()[k];
        let mp = mean_p.as_slice()[k];
        let var = mean_ii.as_slice()[k] - mi * mi;
        let cov = mean_ip.as_slice()[k] - mi * mp;
        let ak = cov / (var + params.epsilon);
        a.push(ak);
        b.push(mp - ak * mi);
    }
    let mean_a = box_mean(&Plane::new(h, w, a)?, r);
    let mean_b = box_mean(&Plane::new(h, w, b)?, r);
    let scaled = mean_a.zip_map(guide, |a, i| a * i)?;
    scaled.zip_map(&mean_b, |x, b| x + b)
}

/// Filters every class plane of `probs` with `guide`, clamps to `[0, 1]` and
/// renormalizes each pixel. A pixel whose clamped channels all vanish falls
/// back to the uniform distribution.
pub fn refine_probmap(guide: &Plane, probs: &ProbMap, params: GuidedFilterParams) -> Result<ProbMap> {
    let dims = probs.dims();
    crate::raster::check_dims(guide.dims(), dims)?;
    let classes = probs.classes();
    let mut filtered: Vec<Vec<f64>> = probs
        .planes()
        .iter()
        .map(|p| guided_filter_fast(guide, p, params).map(|f| f.into_vec()))
        .collect::<Result<_>>()?;
    for v in filtered.iter_mut().flatten() {
        *v = v.clamp(0.0, 1.0);
    }
    let uniform = 1.0 / classes as f64;
    for i in 0..guide.len() {
        let sum: f64 = filtered.iter().map(|p| p[i]).sum();
        for p in filtered.iter_mut() {
            p[i] = if sum > 0.0 { p[i] / sum } else { uniform };
        }
    }
    let planes = filtered
        .into_iter()
        .map(|d| Plane::new(dims.0, dims.1, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbMap::from_planes_unchecked(planes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Mask;
    use proptest::prelude::*;

    fn lcg_plane(h: usize, w: usize, seed: u64) -> Plane {
        let mut s = seed ^ 0x2545_f491_4f6c_dd1d;
        Plane::from_fn(h, w, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    fn params(r: usize, eps: f64) -> GuidedFilterParams {
        GuidedFilterParams::new(r, eps).unwrap()
    }

    fn max_abs_diff(a: &Plane, b: &Plane) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn params_reject_nonpositive_epsilon() {
        assert!(GuidedFilterParams::new(1, 0.0).is_err());
        assert!(GuidedFilterParams::new(1, -1.0).is_err());
        assert!(GuidedFilterParams::new(1, f64::NAN).is_err());
    }

    #[test]
    fn radius_zero_is_identity() {
        let guide = lcg_plane(5, 6, 1);
        let p = lcg_plane(5, 6, 2);
        for eps in [1e-4, 1e-2, 1.0] {
            assert_eq!(guided_filter_naive(&guide, &p, params(0, eps)).unwrap(), p);
            assert_eq!(guided_filter_fast(&guide, &p, params(0, eps)).unwrap(), p);
        }
    }

    #[test]
    fn constant_inputs_stay_constant() {
        let guide = Plane::filled(6, 6, 0.4);
        let p = Plane::filled(6, 6, 0.7);
        for out in [
            guided_filter_naive(&guide, &p, params(2, 0.01)).unwrap(),
            guided_filter_fast(&guide, &p, params(2, 0.01)).unwrap(),
        ] {
            assert!(out.as_slice().iter().all(|v| (v - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn fast_matches_naive_on_seven_by_seven() {
        let guide = lcg_plane(7, 7, 3);
        let p = lcg_plane(7, 7, 4);
        let naive = guided_filter_naive(&guide, &p, params(1, 0.01)).unwrap();
        let fast = guided_filter_fast(&guide, &p, params(1, 0.01)).unwrap();
        assert!(max_abs_diff(&naive, &fast) < 1e-6);
    }

    #[test]
    fn weight_rows_sum_to_one() {
        let guide = lcg_plane(6, 5, 5);
        for (r, eps) in [(1, 1e-4), (2, 1e-2), (3, 1.0)] {
            for row in 0..6 {
                for col in 0..5 {
                    let sum: f64 = weight_row(&guide, params(r, eps), row, col).as_slice().iter().sum();
                    assert!((sum - 1.0).abs() < 1e-9, "r={r} ({row},{col}) sum={sum}");
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = Plane::filled(3, 3, 0.0);
        let b = Plane::filled(3, 4, 0.0);
        assert!(guided_filter_fast(&a, &b, params(1, 0.1)).is_err());
        assert!(guided_filter_naive(&a, &b, params(1, 0.1)).is_err());
    }

    #[test]
    fn guide_and_epsilon_scale_together() {
        let guide = lcg_plane(8, 8, 6);
        let p = lcg_plane(8, 8, 7);
        let s = 3.5;
        let scaled_guide = guide.map(|v| v * s);
        let base_naive = guided_filter_naive(&guide, &p, params(1, 0.02)).unwrap();
        let scaled_naive = guided_filter_naive(&scaled_guide, &p, params(1, 0.02 * s * s)).unwrap();
        assert!(max_abs_diff(&base_naive, &scaled_naive) < 1e-9);
        let scaled_fast = guided_filter_fast(&scaled_guide, &p, params(1, 0.02 * s * s)).unwrap();
        assert!(max_abs_diff(&base_naive, &scaled_fast) < 1e-9);
    }

    #[test]
    fn refine_keeps_one_hot_normalized_under_constant_guide() {
        let mask = Mask::from_fn(6, 6, |r, c| u8::from(r + c > 5));
        let probs = ProbMap::one_hot(&mask, 2).unwrap();
        let out = refine_probmap(&Plane::filled(6, 6, 0.5), &probs, params(1, 0.1)).unwrap();
        for i in 0..36 {
            let s = out.plane(0).as_slice()[i] + out.plane(1).as_slice()[i];
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_preserves_uniform() {
        let probs = ProbMap::uniform(5, 7, 3);
        let out = refine_probmap(&lcg_plane(5, 7, 8), &probs, params(2, 0.01)).unwrap();
        for p in out.planes() {
            assert!(p.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn refine_random_probmap_sums_to_one() {
        let raw: Vec<Plane> = (0..3).map(|c| lcg_plane(8, 8, 20 + c)).collect();
        let planes: Vec<Plane> = (0..3)
            .map(|c| {
                Plane::from_fn(8, 8, |i, j| {
                    let s: f64 = raw.iter().map(|p| p.get(i, j)).sum();
                    raw[c].get(i, j) / s
                })
            })
            .collect();
        let probs = ProbMap::new(planes).unwrap();
        let out = refine_probmap(&lcg_plane(8, 8, 30), &probs, params(1, 1e-3)).unwrap();
        for i in 0..64 {
            let s: f64 = out.planes().iter().map(|p| p.as_slice()[i]).sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(out.planes().iter().all(|p| p.as_slice()[i] >= 0.0));
        }
    }

    #[test]
    fn refine_rejects_mismatched_guide() {
        let probs = ProbMap::uniform(4, 4, 2);
        assert!(refine_probmap(&Plane::filled(4, 5, 0.0), &probs, params(1, 0.1)).is_err());
    }

    fn pair(max: usize) -> impl Strategy<Value = (Plane, Plane, Plane)> {
        (1..=max, 1..=max).prop_flat_map(|(h, w)| {
            let pl =
                move || proptest::collection::vec(0.0f64..1.0, h * w).prop_map(move |d| Plane::new(h, w, d).unwrap());
            (pl(), pl(), pl())
        })
    }

    proptest! {
        #[test]
        fn linear_in_input((guide, p, q) in pair(12), alpha in -2.0f64..2.0, beta in -2.0f64..2.0, r in 0usize..4) {
            let prm = params(r, 0.01);
            let combo = p.zip_map(&q, |a, b| alpha * a + beta * b).unwrap();
            let lhs = guided_filter_fast(&guide, &combo, prm).unwrap();
            let gp = guided_filter_fast(&guide, &p, prm).unwrap();
            let gq = guided_filter_fast(&guide, &q, prm).unwrap();
            let rhs = gp.zip_map(&gq, |a, b| alpha * a + beta * b).unwrap();
            prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-9);
        }

        #[test]
        fn invariant_to_guide_shift((guide, p, _q) in pair(12), c in -2.0f64..2.0, r in 0usize..4) {
            let prm = params(r, 0.01);
            let base = guided_filter_fast(&guide, &p, prm).unwrap();
            let shifted = guided_filter_fast(&guide.map(|v| v + c), &p, prm).unwrap();
            prop_assert!(max_abs_diff(&base, &shifted) <= 1e-9);
        }
    }
}
