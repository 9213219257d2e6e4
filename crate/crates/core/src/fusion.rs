//! Feature fusion: HGL (high-level guided low-level) and BG (boundary guided).

use alloc::string::String;
use alloc::vec::Vec;

use crate::morphology::{boundary_extract, PoolSpec};
use crate::raster::Plane;
use crate::{Error, Result};

/// Named planes of identical size.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    channels: Vec<Plane>,
    names: Vec<String>,
}

impl FeatureStack {
    pub fn new(channels: Vec<Plane>, names: Vec<String>) -> Result<Self> {
        let first = channels.first().ok_or(Error::Empty("feature stack"))?;
        for c in &channels[1..] {
            first.check_dims(c)?;
        }
        if names.len() != channels.len() {
            return Err(Error::ChannelMismatch {
                expected: channels.len(),
                found: names.len(),
            });
        }
        Ok(Self { channels, names })
    }

    /// Channels named `ch0`, `ch1`, ...
    pub fn unnamed(channels: Vec<Plane>) -> Result<Self> {
        let names = (0..channels.len()).map(|i| alloc::format!("ch{i}")).collect();
        Self::new(channels, names)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn channels(&self) -> &[Plane] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &Plane {
        &self.channels[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Values of every channel at one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> impl Iterator<Item = f64> + '_ {
        let idx = row * self.dims().1 + col;
        self.channels.iter().map(move |c| c.as_slice()[idx])
    }

    fn check_paired(&self, other: &FeatureStack) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::ChannelMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        self.channels[0].check_dims(&other.channels[0])
    }
}

/// `HF ⊛ LF`: channel-wise, element-wise product. Channels pair positionally;
/// names are taken from `lf`.
pub fn hgl(hf: &FeatureStack, lf: &FeatureStack) -> Result<FeatureStack> {
    hf.check_paired(lf)?;
    let channels = hf
        .channels
        .iter()
        .zip(&lf.channels)
        .map(|(h, l)| h.zip_map(l, |a, b| a * b))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureStack {
        channels,
        names: lf.names.clone(),
    })
}

/// `high + low ⊛ D(high)` per channel, where `D` is the boundary extractor.
pub fn bg(high: &FeatureStack, low: &FeatureStack, spec: PoolSpec) -> Result<FeatureStack> {
    high.check_paired(low)?;
    let mut channels = Vec::with_capacity(high.len());
    for (h, l) in high.channels.iter().zip(&low.channels) {
        let edges = boundary_extract(h, spec)?;
        let gated = l.zip_map(&edges, |a, b| a * b)?;
        channels.push(h.zip_map(&gated, |a, b| a + b)?);
    }
    Ok(FeatureStack {
        channels,
        names: high.names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{pool, PoolMode};
    use alloc::vec;
    use proptest::prelude::*;

    fn lcg_stack(n: usize, h: usize, w: usize, seed: u64) -> FeatureStack {
        let mut s = seed.wrapping_add(0x1234_5678);
        let chans = (0..n)
            .map(|_| {
                Plane::from_fn(h, w, |_, _| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
                })
            })
            .collect();
        FeatureStack::unnamed(chans).unwrap()
    }

    fn constant_stack(vals: &[f64], h: usize, w: usize) -> FeatureStack {
        FeatureStack::unnamed(vals.iter().map(|&v| Plane::filled(h, w, v)).collect()).unwrap()
    }

    #[test]
    fn constructor_checks() {
        assert!(FeatureStack::unnamed(vec![]).is_err());
        assert!(FeatureStack::unnamed(vec![Plane::filled(2, 2, 0.0), Plane::filled(2, 3, 0.0)]).is_err());
        assert!(FeatureStack::new(vec![Plane::filled(2, 2, 0.0)], vec![]).is_err());
    }

    #[test]
    fn hgl_with_ones_is_identity() {
        let lf = lcg_stack(3, 4, 5, 1);
        let ones = constant_stack(&[1.0, 1.0, 1.0], 4, 5);
        assert_eq!(hgl(&ones, &lf).unwrap().channels(), lf.channels());
    }

    #[test]
    fn hgl_with_zeros_is_zero() {
        let hf = lcg_stack(2, 4, 4, 2);
        let zeros = constant_stack(&[0.0, 0.0], 4, 4);
        let out = hgl(&hf, &zeros).unwrap();
        assert!(out.channels().iter().all(|c| c.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn hgl_matches_direct_product() {
        let hf = lcg_stack(2, 4, 4, 3);
        let lf = lcg_stack(2, 4, 4, 4);
        let out = hgl(&hf, &lf).unwrap();
        for c in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(
                        out.channel(c).get(i, j),
                        hf.channel(c).get(i, j) * lf.channel(c).get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn mismatches_are_reported() {
        let a = lcg_stack(2, 4, 4, 5);
        let b = lcg_stack(3, 4, 4, 6);
        let c = lcg_stack(2, 4, 5, 7);
        assert!(matches!(hgl(&a, &b), Err(Error::ChannelMismatch { .. })));
        assert!(matches!(hgl(&a, &c), Err(Error::DimensionMismatch { .. })));
        assert!(bg(&a, &b, PoolSpec::default()).is_err());
        assert!(bg(&a, &a, PoolSpec::new(3, 1, 0).unwrap()).is_err());
    }

    #[test]
    fn bg_of_constant_high_is_high() {
        let high = constant_stack(&[0.3, -0.2], 5, 5);
        let low = lcg_stack(2, 5, 5, 8);
        assert_eq!(bg(&high, &low, PoolSpec::default()).unwrap(), high);
    }

    #[test]
    fn bg_with_zero_low_is_high() {
        let high = lcg_stack(2, 5, 6, 9);
        let low = constant_stack(&[0.0, 0.0], 5, 6);
        assert_eq!(
            bg(&high, &low, PoolSpec::default()).unwrap().channels(),
            high.channels()
        );
    }

    #[test]
    fn bg_matches_composition() {
        let high = lcg_stack(3, 6, 7, 10);
        let low = lcg_stack(3, 6, 7, 11);
        let out = bg(&high, &low, PoolSpec::default()).unwrap();
        for c in 0..3 {
            let mx = pool(high.channel(c), PoolSpec::default(), PoolMode::Max).unwrap();
            let mn = pool(high.channel(c), PoolSpec::default(), PoolMode::Min).unwrap();
            for i in 0..6 {
                for j in 0..7 {
                    let d = mx.get(i, j) - mn.get(i, j);
                    let want = high.channel(c).get(i, j) + low.channel(c).get(i, j) * d;
                    assert_eq!(out.channel(c).get(i, j), want);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn hgl_commutes(seed in any::<u64>(), n in 1usize..4, h in 1usize..8, w in 1usize..8) {
            let a = lcg_stack(n, h, w, seed);
            let b = lcg_stack(n, h, w, seed ^ 0xff);
            let (ab, ba) = (hgl(&a, &b).unwrap(), hgl(&b, &a).unwrap());
            prop_assert_eq!(ab.channels(), ba.channels());
            prop_assert_eq!(bg(&a, &b, PoolSpec::default()).unwrap().dims(), (h, w));
        }
    }
}
