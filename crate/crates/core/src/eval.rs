//! IoU, dataset-level mIoU and pixel accuracy.
//!
//! mIoU sums intersections and unions over the whole dataset before dividing
//! (PASCAL VOC convention). Classes that appear in neither predictions nor
//! ground truth are left out of the mean.

use alloc::vec;
use alloc::vec::Vec;

use crate::raster::{check_dims, Mask};
use crate::{Error, Result};

pub fn iou(pred: &Mask, gt: &Mask, class: u8) -> Result<f64> {
    check_dims(gt.dims(), pred.dims())?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        let (p, g) = (p == class, g == class);
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Per-class IoU plus their mean over the classes present in the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    /// `None` for classes absent from both predictions and ground truth.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

/// Dataset-aggregated intersection and union counts per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    pub intersection: Vec<u64>,
    pub union: Vec<u64>,
}

pub fn class_counts(preds: &[Mask], gts: &[Mask], classes: usize) -> Result<ClassCounts> {
    if preds.is_empty() {
        return Err(Error::Empty("mIoU dataset"));
    }
    if preds.len() != gts.len() {
        return Err(Error::ChannelMismatch {
            expected: gts.len(),
            found: preds.len(),
        });
    }
    let mut counts = ClassCounts {
        intersection: vec![0; classes],
        union: vec![0; classes],
    };
    for (pred, gt) in preds.iter().zip(gts) {
        check_dims(gt.dims(), pred.dims())?;
        for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
            for v in [p, g] {
                if v as usize >= classes {
                    return Err(Error::ClassOutOfRange { class: v, classes });
                }
            }
            if p == g {
                counts.intersection[p as usize] += 1;
                counts.union[p as usize] += 1;
            } else {
                counts.union[p as usize] += 1;
                counts.union[g as usize] += 1;
            }
        }
    }
    Ok(counts)
}

pub fn miou_report(preds: &[Mask], gts: &[Mask], classes: usize) -> Result<MiouReport> {
    let counts = class_counts(preds, gts, classes)?;
    let per_class: Vec<Option<f64>> = counts
        .intersection
        .iter()
        .zip(&counts.union)
        .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = if present.is_empty() {
        1.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(MiouReport { per_class, miou })
}

pub fn miou(preds: &[Mask], gts: &[Mask], classes: usize) -> Result<f64> {
    miou_report(preds, gts, classes).map(|r| r.miou)
}

pub fn pixel_accuracy(pred: &Mask, gt: &Mask) -> Result<f64> {
    check_dims(gt.dims(), pred.dims())?;
    let same = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .filter(|(a, b)| a == b)
        .count();
    Ok(same as f64 / pred.len() as f64)
}
