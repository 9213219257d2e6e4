//! Reference implementations shared by the oracle and acceptance tests.
//! Deliberately naive: exact big-integer fractions, full confusion matrices, finite
//! differences.
#![allow(dead_code)]

use autolabel_core::Mask;
use num_bigint::BigInt;

/// Threshold maximizing between-class variance `w0 w1 (mu0 - mu1)^2` in exact
/// arithmetic; class 0 is bins `0..=t`. Splits with an empty side score zero.
/// Ties go to the smallest `t`.
///
/// With `w = n_k / n` and `mu = s_k / n_k` the variance is the unreduced
/// fraction `n0 n1 (s0 n1 - s1 n0)^2 / (n^2 n0^2 n1^2)`; candidates are
/// compared by cross-multiplication.
pub fn otsu_exhaustive(hist: &[u64; 256]) -> u8 {
    let big = |v: u128| BigInt::from(v);
    let n: u64 = hist.iter().sum();
    let s: u128 = hist.iter().enumerate().map(|(b, &c)| b as u128 * c as u128).sum();
    let mut best_t = 0u8;
    let (mut best_num, mut best_den) = (BigInt::from(0), BigInt::from(1));
    let (mut n0, mut s0) = (0u64, 0u128);
    for (t, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += t as u128 * count as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let (a0, a1) = (big(n0 as u128), big(n1 as u128));
        let d = big(s0) * &a1 - big(s - s0) * &a0;
        let num = &a0 * &a1 * &d * &d;
        let den = big(n as u128) * big(n as u128) * &a0 * &a0 * &a1 * &a1;
        if &num * &best_den > &best_num * &den {
            best_t = t as u8;
            (best_num, best_den) = (num, den);
        }
    }
    best_t
}

/// Per-class IoU from a full confusion matrix, and the mean over classes
/// with a nonzero union (1.0 if there are none).
pub fn confusion_miou(preds: &[Mask], gts: &[Mask], classes: usize) -> (Vec<Option<f64>>, f64) {
    let mut conf = vec![vec![0u64; classes]; classes];
    for (p, g) in preds.iter().zip(gts) {
        for (&a, &b) in p.as_slice().iter().zip(g.as_slice()) {
            conf[b as usize][a as usize] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let tp = conf[c][c];
            let fn_: u64 = (0..classes).filter(|&k| k != c).map(|k| conf[c][k]).sum();
            let fp: u64 = (0..classes).filter(|&k| k != c).map(|k| conf[k][c]).sum();
            let union = tp + fn_ + fp;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = if present.is_empty() {
        1.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    (per_class, miou)
}

/// Central differences of `f` at `params`, one coordinate at a time.
pub fn numeric_grad(params: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let up = f(&p);
            p[i] = orig - step;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)`, with differences below `1e-9` counted as zero
/// so that vanishing gradients do not blow up the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff < 1e-9 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}
