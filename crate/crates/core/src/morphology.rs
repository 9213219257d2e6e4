//! Sliding-window max/min pooling and the boundary extractor
//! `D(X) = maxpool(X) - minpool(X)`.

use alloc::vec::Vec;

use crate::raster::Plane;
use crate::{Error, Result};

/// Square pooling window. Padded cells never take part in the extremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::InvalidParameter("pool kernel must be odd and >= 1"));
        }
        if stride == 0 {
            return Err(Error::InvalidParameter("pool stride must be >= 1"));
        }
        if padding >= kernel {
            return Err(Error::InvalidParameter("pool padding must be < kernel"));
        }
        Ok(Self {
            kernel,
            stride,
            padding,
        })
    }

    /// Stride 1 and padding `(k - 1) / 2`: output has the input's size.
    pub fn same(kernel: usize) -> Result<Self> {
        Self::new(kernel, 1, kernel.saturating_sub(1) / 2)
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn is_same_size(&self) -> bool {
        self.stride == 1 && 2 * self.padding + 1 == self.kernel
    }

    /// Output length along an axis of length `n`, or `None` when the padded
    /// axis is shorter than the kernel.
    pub fn output_len(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    /// In-bounds `[lo, hi)` of output cell `o` along an axis of length `n`.
    fn extent(&self, o: usize, n: usize) -> (usize, usize) {
        let start = (o * self.stride) as isize - self.padding as isize;
        let end = start + self.kernel as isize;
        (start.max(0) as usize, (end.min(n as isize)) as usize)
    }
}

impl Default for PoolSpec {
    /// 3x3, stride 1, padding 1.
    fn default() -> Self {
        Self {
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Min,
}

pub fn pool(x: &Plane, spec: PoolSpec, mode: PoolMode) -> Result<Plane> {
    let (h, w) = x.dims();
    let (Some(out_h), Some(out_w)) = (spec.output_len(h), spec.output_len(w)) else {
        return Err(Error::InvalidParameter("pool window larger than padded input"));
    };
    let pick = match mode {
        PoolMode::Max => f64::max,
        PoolMode::Min => f64::min,
    };
    let init = match mode {
        PoolMode::Max => f64::NEG_INFINITY,
        PoolMode::Min => f64::INFINITY,
    };

    // Separable: horizontal extrema per source row, then vertical.
    let mut rows: Vec<f64> = Vec::with_capacity(h * out_w);
    for r in 0..h {
        for oc in 0..out_w {
            let (lo, hi) = spec.extent(oc, w);
            rows.push((lo..hi).map(|c| x.get(r, c)).fold(init, pick));
        }
    }
    Ok(Plane::from_fn(out_h, out_w, |or, oc| {
        let (lo, hi) = spec.extent(or, h);
        (lo..hi).map(|r| rows[r * out_w + oc]).fold(init, pick)
    }))
}

/// Boundary map `maxpool(x) + maxpool(-x)`, which is `maxpool(x) - minpool(x)`
/// bit for bit. Zero on flat regions, large across edges.
pub fn boundary_extract(x: &Plane, spec: PoolSpec) -> Result<Plane> {
    if !spec.is_same_size() {
        return Err(Error::InvalidParameter(
            "boundary extractor needs stride 1 and padding (kernel - 1) / 2",
        ));
    }
    let hi = pool(x, spec, PoolMode::Max)?;
    let neg_lo = pool(&x.map(|v| -v), spec, PoolMode::Max)?;
    hi.zip_map(&neg_lo, |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lcg_plane(h: usize, w: usize, seed: u64) -> Plane {
        let mut s = seed ^ 0x9e37_79b9_7f4a_7c15;
        Plane::from_fn(h, w, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn spec_validation() {
        assert!(PoolSpec::new(2, 1, 0).is_err());
        assert!(PoolSpec::new(3, 0, 0).is_err());
        assert!(PoolSpec::new(3, 1, 3).is_err());
        assert!(PoolSpec::new(3, 1, 2).is_ok());
        assert_eq!(PoolSpec::same(3).unwrap(), PoolSpec::default());
    }

    #[test]
    fn constant_plane_pools_to_constant() {
        let x = Plane::filled(7, 5, 0.25);
        for spec in [
            PoolSpec::default(),
            PoolSpec::new(5, 2, 1).unwrap(),
            PoolSpec::new(1, 3, 0).unwrap(),
        ] {
            for mode in [PoolMode::Max, PoolMode::Min] {
                let out = pool(&x, spec, mode).unwrap();
                assert!(out.as_slice().iter().all(|&v| v == 0.25));
            }
        }
    }

    #[test]
    fn three_by_three_same_padding_keeps_dims() {
        let x = lcg_plane(9, 4, 1);
        let out = pool(&x, PoolSpec::new(3, 1, 1).unwrap(), PoolMode::Max).unwrap();
        assert_eq!(out.dims(), (9, 4));
    }

    #[test]
    fn strided_pool_matches_direct_loop() {
        let x = lcg_plane(5, 5, 2);
        let spec = PoolSpec::new(3, 2, 0).unwrap();
        let mx = pool(&x, spec, PoolMode::Max).unwrap();
        let mn = pool(&x, spec, PoolMode::Min).unwrap();
        assert_eq!(mx.dims(), (2, 2));
        for or in 0..2 {
            for oc in 0..2 {
                let mut hi = f64::NEG_INFINITY;
                let mut lo = f64::INFINITY;
                for i in 2 * or..2 * or + 3 {
                    for j in 2 * oc..2 * oc + 3 {
                        hi = hi.max(x.get(i, j));
                        lo = lo.min(x.get(i, j));
                    }
                }
                assert_eq!(mx.get(or, oc), hi);
                assert_eq!(mn.get(or, oc), lo);
            }
        }
    }

    #[test]
    fn too_small_input_is_rejected() {
        let x = Plane::filled(1, 1, 0.0);
        assert!(pool(&x, PoolSpec::new(5, 1, 1).unwrap(), PoolMode::Max).is_err());
    }

    #[test]
    fn boundary_of_constant_is_zero() {
        let d = boundary_extract(&Plane::filled(6, 6, 0.8), PoolSpec::default()).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_localizes_step_edge() {
        // Columns 0..4 are 0, columns 4..8 are 1: the step sits between 3 and 4.
        let x = Plane::from_fn(6, 8, |_, c| if c < 4 { 0.0 } else { 1.0 });
        let d = boundary_extract(&x, PoolSpec::default()).unwrap();
        for r in 0..6 {
            for c in 0..8 {
                let want = if c == 3 || c == 4 { 1.0 } else { 0.0 };
                assert_eq!(d.get(r, c), want, "({r},{c})");
            }
        }
    }

    #[test]
    fn boundary_rejects_shrinking_spec() {
        let x = Plane::filled(6, 6, 0.0);
        assert!(boundary_extract(&x, PoolSpec::new(3, 1, 0).unwrap()).is_err());
        assert!(boundary_extract(&x, PoolSpec::new(3, 2, 1).unwrap()).is_err());
    }

    fn arb_plane() -> impl Strategy<Value = Plane> {
        (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
            proptest::collection::vec(-5.0f64..5.0, h * w).prop_map(move |d| Plane::new(h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn two_formulations_agree_bit_exactly(x in arb_plane(), k in prop::sample::select(vec![1usize, 3, 5])) {
            let spec = PoolSpec::same(k).unwrap();
            let d = boundary_extract(&x, spec).unwrap();
            let hi = pool(&x, spec, PoolMode::Max).unwrap();
            let lo = pool(&x, spec, PoolMode::Min).unwrap();
            let diff = hi.zip_map(&lo, |a, b| a - b).unwrap();
            prop_assert_eq!(d.as_slice(), diff.as_slice());
            prop_assert!(d.as_slice().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn shift_invariant_and_scale_equivariant(x in arb_plane(), c in -10.0f64..10.0, s in 0.01f64..10.0) {
            let spec = PoolSpec::default();
            let d = boundary_extract(&x, spec).unwrap();
            let shifted = boundary_extract(&x.map(|v| v + c), spec).unwrap();
            let scaled = boundary_extract(&x.map(|v| v * s), spec).unwrap();
            for i in 0..d.len() {
                let base = d.as_slice()[i];
                prop_assert!((shifted.as_slice()[i] - base).abs() <= 1e-12);
                prop_assert!((scaled.as_slice()[i] - s * base).abs() <= 1e-12);
            }
        }
    }
}
