//! Bootstrapping initial masks and refining them by self-training.
//!
//! Three ways to get initial masks for unlabelled target images:
//!
//! * [`bootstrap_transfer`]: train on a labelled source set, predict targets.
//! * [`bootstrap_simple_to_complex`]: Otsu-label flat-background images, train
//!   on them, predict the textured targets.
//! * [`bootstrap_cam`]: train an image-level classifier, threshold its class
//!   activation maps, refine them with the guided filter.
//!
//! [`iterate`] then alternates: keep images whose labelled area ratio is
//! plausible, train on their pseudo labels, re-predict every target, score the
//! validation split. It stops at the first round that does not beat the best
//! validation mIoU so far (after `patience` such rounds) and returns the best
//! round.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::classifier::{
    cam_prepared, forward_prepared, prepare, train_image_classifier_prepared, train_prepared, FeatureSpec, Model,
    Prepared, PreparedSample, TrainConfig,
};
use crate::eval::miou;
use crate::guided_filter::{refine_probmap, GuidedFilterParams};
use crate::raster::{Image, Mask, ProbMap};
use crate::threshold::{otsu_mask, Polarity};
use crate::{Error, Result};

/// Area-ratio bounds (inclusive) for trusting a pseudo label, and the
/// foreground probability threshold used to binarize predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    lo: f64,
    hi: f64,
    tau: f64,
}

impl SelectionPolicy {
    pub fn new(lo: f64, hi: f64, tau: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidParameter("selection bounds need 0 <= lo < hi <= 1"));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter("binarize threshold must lie in (0, 1)"));
        }
        Ok(Self { lo, hi, tau })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn accepts(&self, ratio: f64) -> bool {
        self.lo <= ratio && ratio <= self.hi
    }
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            lo: 0.1,
            hi: 0.9,
            tau: 0.5,
        }
    }
}

/// Labelled pixels over all pixels.
pub fn area_ratio(mask: &Mask) -> f64 {
    mask.count_nonzero() as f64 / mask.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub selected: Vec<usize>,
    pub rejected: Vec<usize>,
}

pub fn select_reliable(masks: &[Mask], policy: &SelectionPolicy) -> Selection {
    let mut out = Selection::default();
    for (i, m) in masks.iter().enumerate() {
        if policy.accepts(area_ratio(m)) {
            out.selected.push(i);
        } else {
            out.rejected.push(i);
        }
    }
    out
}

/// Two classes: foreground where `p[1] >= tau`. More classes: per-pixel
/// argmax, ties to the lowest id.
pub fn binarize(probs: &ProbMap, tau: f64) -> Mask {
    let (h, w) = probs.dims();
    if probs.classes() == 2 {
        let fg = probs.plane(1);
        return Mask::from_fn(h, w, |r, c| u8::from(fg.get(r, c) >= tau));
    }
    Mask::from_fn(h, w, |r, c| {
        let mut best = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for (k, p) in probs.planes().iter().enumerate() {
            let v = p.get(r, c);
            if v > best_p {
                best = k;
                best_p = v;
            }
        }
        best as u8
    })
}

/// Everything needed to train and run the segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmenterConfig {
    pub features: FeatureSpec,
    pub train: TrainConfig,
    pub gf: GuidedFilterParams,
}

/// An image with its (ground-truth or pseudo) mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledImage {
    pub image: Image,
    pub mask: Mask,
}

/// Initial masks plus the model that produced them.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    pub model: Model,
    pub masks: Vec<Mask>,
}

/// Forward, refine and binarize every prepared image.
pub fn predict_masks(model: &Model, prepared: &[Prepared], gf: GuidedFilterParams, tau: f64) -> Result<Vec<Mask>> {
    prepared
        .iter()
        .map(|p| forward_prepared(model, p, gf).map(|probs| binarize(&probs, tau)))
        .collect()
}

fn prepare_all(images: &[Image], spec: &FeatureSpec) -> Vec<Prepared> {
    images.iter().map(|img| prepare(img, spec)).collect()
}

fn train_on(model: &Model, prepared: &[Prepared], masks: &[&Mask], cfg: &TrainConfig) -> Result<Model> {
    let samples: Vec<PreparedSample<'_>> = prepared
        .iter()
        .zip(masks)
        .map(|(p, m)| PreparedSample {
            prepared: p,
            target: m,
            valid: None,
        })
        .collect();
    train_prepared(model, &samples, cfg).map(|o| o.model)
}

/// Train a binary segmenter on `source`, then predict every target.
pub fn bootstrap_transfer(
    source: &[LabelledImage],
    targets: &[Image],
    seg: &SegmenterConfig,
    tau: f64,
) -> Result<Bootstrap> {
    if source.is_empty() {
        return Err(Error::Empty("transfer source set"));
    }
    let prepared = source
        .iter()
        .map(|s| prepare(&s.image, &seg.features))
        .collect::<Vec<_>>();
    let masks: Vec<&Mask> = source.iter().map(|s| &s.mask).collect();
    let model = train_on(&Model::new(seg.features, 2, 1)?, &prepared, &masks, &seg.train)?;
    let masks = predict_masks(&model, &prepare_all(targets, &seg.features), seg.gf, tau)?;
    Ok(Bootstrap { model, masks })
}

/// Otsu-label the simple images, train on them, predict the complex ones.
pub fn bootstrap_simple_to_complex(
    simple: &[Image],
    complex: &[Image],
    seg: &SegmenterConfig,
    tau: f64,
) -> Result<Bootstrap> {
    if simple.is_empty() {
        return Err(Error::Empty("simple image set"));
    }
    let source: Vec<LabelledImage> = simple
        .iter()
        .map(|img| LabelledImage {
            image: img.clone(),
            mask: otsu_mask(img, Polarity::Auto),
        })
        .collect();
    bootstrap_transfer(&source, complex, seg, tau)
}

/// Default activation threshold on `[0, 1]`-normalized CAMs.
pub const DEFAULT_TAU_CAM: f64 = 0.2;

/// Initial masks from class activation maps.
///
/// Each pixel takes the image-level class with the highest normalized
/// activation, or background when that activation is below `tau_cam`. Pixels
/// assigned to the image's own label form the object; the resulting one-hot
/// map is refined with the guided filter and binarized with `tau`.
pub fn bootstrap_cam(images: &[(Image, usize)], seg: &SegmenterConfig, tau: f64, tau_cam: f64) -> Result<Bootstrap> {
    if images.is_empty() {
        return Err(Error::Empty("CAM image set"));
    }
    let classes = images.iter().map(|(_, l)| l + 1).max().unwrap_or(0);
    let mut seen = vec![false; classes];
    for (_, l) in images {
        seen[*l] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::InvalidParameter("CAM needs at least two image-level classes"));
    }
    let prepared = prepare_all(
        &images.iter().map(|(i, _)| i.clone()).collect::<Vec<_>>(),
        &seg.features,
    );
    let pairs: Vec<(&Prepared, usize)> = prepared.iter().zip(images).map(|(p, (_, l))| (p, *l)).collect();
    let model = Model::new(seg.features, 2, classes)?;
    let model = train_image_classifier_prepared(&model, &pairs, &seg.train)?.model;

    let mut masks = Vec::with_capacity(images.len());
    for (p, (_, label)) in prepared.iter().zip(images) {
        let maps = cam_prepared(&model, p)?;
        let (h, w) = p.dims();
        let hard = Mask::from_fn(h, w, |r, c| {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for (k, m) in maps.iter().enumerate() {
                let v = m.get(r, c);
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            u8::from(best_v >= tau_cam && best == *label)
        });
        let refined = refine_probmap(p.guide(), &ProbMap::one_hot(&hard, 2)?, seg.gf)?;
        masks.push(binarize(&refined, tau));
    }
    Ok(Bootstrap { model, masks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterateConfig {
    pub max_rounds: usize,
    /// Consecutive non-improving rounds tolerated before stopping.
    pub patience: usize,
    /// Start every round from a fresh model instead of the previous round's.
    pub reinit: bool,
}

impl Default for IterateConfig {
    fn default() -> Self {
        Self {
            max_rounds: 8,
            patience: 1,
            reinit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    /// 1-based.
    pub round: usize,
    pub miou: f64,
    pub selected: usize,
    pub rejected: usize,
    pub checkpoint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Validation mIoU stopped growing.
    NoImprovement,
    MaxRounds,
    /// A round selected no pseudo-labelled image.
    NoneSelected,
}

#[derive(Debug, Clone)]
pub struct IterateOutcome {
    pub best_model: Model,
    /// 1-based round whose model and masks are returned.
    pub best_round: usize,
    pub best_masks: Vec<Mask>,
    pub reports: Vec<IterationReport>,
    /// Masks for every target, per completed round.
    pub round_masks: Vec<Vec<Mask>>,
    pub stop: StopReason,
    /// Validation mIoU of the initial masks.
    pub initial_miou: f64,
}

/// Held-out target images with ground truth.
#[derive(Debug, Clone)]
pub struct Validation {
    pub indices: Vec<usize>,
    pub masks: Vec<Mask>,
}

fn validation_miou(masks: &[Mask], val: &Validation) -> Result<f64> {
    let preds: Vec<Mask> = val.indices.iter().map(|&i| masks[i].foreground()).collect();
    let gts: Vec<Mask> = val.masks.iter().map(Mask::foreground).collect();
    miou(&preds, &gts, 2)
}

fn round_seed(seed: u64, round: usize) -> u64 {
    seed ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Self-training loop over `targets`.
///
/// Validation images are predicted every round but never trained on. Rejected
/// images get an all-invalid pixel mask, so they never reach the gradient.
#[allow(clippy::too_many_arguments)]
pub fn iterate(
    initial: &[Mask],
    targets: &[Image],
    validation: &Validation,
    start: Option<&Model>,
    seg: &SegmenterConfig,
    policy: &SelectionPolicy,
    cfg: &IterateConfig,
) -> Result<IterateOutcome> {
    if cfg.max_rounds == 0 {
        return Err(Error::InvalidParameter("max_rounds must be >= 1"));
    }
    if cfg.patience == 0 {
        return Err(Error::InvalidParameter("patience must be >= 1"));
    }
    if targets.is_empty() {
        return Err(Error::Empty("target images"));
    }
    if initial.len() != targets.len() {
        return Err(Error::ChannelMismatch {
            expected: targets.len(),
            found: initial.len(),
        });
    }
    if validation.indices.is_empty() || validation.indices.len() != validation.masks.len() {
        return Err(Error::Empty("validation split with ground truth"));
    }
    let mut is_val = vec![false; targets.len()];
    for &i in &validation.indices {
        if i >= targets.len() {
            return Err(Error::InvalidParameter("validation index out of range"));
        }
        is_val[i] = true;
    }
    let train_idx: Vec<usize> = (0..targets.len()).filter(|&i| !is_val[i]).collect();
    if train_idx.is_empty() {
        return Err(Error::Empty("non-validation target images"));
    }

    let prepared = prepare_all(targets, &seg.features);
    let fresh = Model::new(seg.features, 2, start.map_or(1, Model::image_classes))?;
    let mut current = start.cloned().unwrap_or_else(|| fresh.clone());
    let mut pseudo: Vec<Mask> = initial.iter().map(Mask::foreground).collect();
    let initial_miou = validation_miou(&pseudo, validation)?;
    let all_valid: Vec<Mask> = train_idx
        .iter()
        .map(|&i| Mask::filled(pseudo[i].height(), pseudo[i].width(), 1))
        .collect();
    let none_valid: Vec<Mask> = train_idx
        .iter()
        .map(|&i| Mask::filled(pseudo[i].height(), pseudo[i].width(), 0))
        .collect();

    let mut reports = Vec::new();
    let mut round_masks: Vec<Vec<Mask>> = Vec::new();
    let mut best: Option<(usize, f64, Model)> = None;
    let mut stale = 0usize;
    let mut stop = StopReason::MaxRounds;

    for round in 1..=cfg.max_rounds {
        let train_masks: Vec<Mask> = train_idx.iter().map(|&i| pseudo[i].clone()).collect();
        let selection = select_reliable(&train_masks, policy);
        if selection.selected.is_empty() {
            if best.is_none() {
                return Err(Error::NoneSelected { round });
            }
            stop = StopReason::NoneSelected;
            break;
        }
        let mut keep = vec![false; train_idx.len()];
        for &s in &selection.selected {
            keep[s] = true;
        }
        let samples: Vec<PreparedSample<'_>> = train_idx
            .iter()
            .enumerate()
            .map(|(k, &i)| PreparedSample {
                prepared: &prepared[i],
                target: &train_masks[k],
                valid: Some(if keep[k] { &all_valid[k] } else { &none_valid[k] }),
            })
            .collect();
        let base = if cfg.reinit { &fresh } else { &current };
        let train_cfg = TrainConfig {
            seed: round_seed(seg.train.seed, round),
            ..seg.train
        };
        let model = train_prepared(base, &samples, &train_cfg)?.model;
        let masks = predict_masks(&model, &prepared, seg.gf, policy.tau())?;
        let score = validation_miou(&masks, validation)?;
        reports.push(IterationReport {
            round,
            miou: score,
            selected: selection.selected.len(),
            rejected: selection.rejected.len(),
            checkpoint: model.checkpoint_id(),
        });

        let improved = best.as_ref().is_none_or(|(_, b, _)| score > *b);
        if improved {
            best = Some((round, score, model.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        pseudo = masks.clone();
        round_masks.push(masks);
        current = model;
        if stale >= cfg.patience {
            stop = StopReason::NoImprovement;
            break;
        }
    }

    let (best_round, _, best_model) = best.expect("at least one round completed");
    Ok(IterateOutcome {
        best_model,
        best_round,
        best_masks: round_masks[best_round - 1].clone(),
        reports,
        round_masks,
        stop,
        initial_miou,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub radius: usize,
    pub epsilon: f64,
    pub miou: f64,
}

/// Grid search over guided-filter radius and epsilon, scored by validation
/// mIoU of the refined, binarized predictions. Points come back in
/// radius-major order; the best is the first with the highest mIoU.
pub fn sweep_guided_filter(
    model: &Model,
    images: &[Image],
    gts: &[Mask],
    radii: &[usize],
    epsilons: &[f64],
    tau: f64,
) -> Result<(Vec<SweepPoint>, SweepPoint)> {
    if radii.is_empty() || epsilons.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let prepared = prepare_all(images, model.spec());
    let gts: Vec<Mask> = gts.iter().map(Mask::foreground).collect();
    let mut points = Vec::with_capacity(radii.len() * epsilons.len());
    for &radius in radii {
        for &epsilon in epsilons {
            let gf = GuidedFilterParams::new(radius, epsilon)?;
            let preds = predict_masks(model, &prepared, gf, tau)?;
            points.push(SweepPoint {
                radius,
                epsilon,
                miou: miou(&preds, &gts, 2)?,
            });
        }
    }
    let best = points
        .iter()
        .copied()
        .fold(None::<SweepPoint>, |acc, p| match acc {
            Some(a) if a.miou >= p.miou => Some(a),
            _ => Some(p),
        })
        .expect("non-empty grid");
    Ok((points, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Plane;

    fn mask_with_ratio(side: usize, fg: usize) -> Mask {
        Mask::from_fn(side, side, |r, c| u8::from(r * side + c < fg))
    }

    #[test]
    fn area_ratio_examples() {
        assert_eq!(area_ratio(&Mask::filled(4, 4, 1)), 1.0);
        assert_eq!(area_ratio(&Mask::filled(4, 4, 0)), 0.0);
        assert_eq!(area_ratio(&mask_with_ratio(10, 25)), 0.25);
    }

    #[test]
    fn selection_examples() {
        let policy = SelectionPolicy::default();
        assert_eq!(select_reliable(&[mask_with_ratio(20, 380)], &policy).rejected, vec![0]);
        assert_eq!(select_reliable(&[mask_with_ratio(10, 10)], &policy).selected, vec![0]);
        let masks = [
            mask_with_ratio(20, 20),
            mask_with_ratio(20, 200),
            mask_with_ratio(25, 575),
        ];
        let sel = select_reliable(&masks, &policy);
        assert_eq!(sel.selected, vec![1]);
        assert_eq!(sel.rejected, vec![0, 2]);
    }

    #[test]
    fn policy_validation() {
        assert!(SelectionPolicy::new(0.5, 0.5, 0.5).is_err());
        assert!(SelectionPolicy::new(-0.1, 0.5, 0.5).is_err());
        assert!(SelectionPolicy::new(0.1, 1.1, 0.5).is_err());
        assert!(SelectionPolicy::new(0.1, 0.9, 1.0).is_err());
        assert!(SelectionPolicy::new(0.0, 1.0, 0.3).is_ok());
    }

    #[test]
    fn binarize_examples() {
        let uniform = ProbMap::uniform(3, 3, 2);
        assert_eq!(binarize(&uniform, 0.5).count_nonzero(), 9);
        let target = Mask::from_fn(4, 5, |r, c| ((r * 5 + c) % 4) as u8);
        assert_eq!(binarize(&ProbMap::one_hot(&target, 4).unwrap(), 0.5), target);
    }

    #[test]
    fn binarize_ties_go_to_lowest_class() {
        let probs = ProbMap::uniform(2, 2, 3);
        assert_eq!(binarize(&probs, 0.5).count_nonzero(), 0);
        let planes = vec![
            Plane::filled(1, 1, 0.2),
            Plane::filled(1, 1, 0.4),
            Plane::filled(1, 1, 0.4),
        ];
        assert_eq!(binarize(&ProbMap::new(planes).unwrap(), 0.5).get(0, 0), 1);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let seg = SegmenterConfig::default();
        assert!(matches!(
            bootstrap_simple_to_complex(&[], &[], &seg, 0.5),
            Err(Error::Empty(_))
        ));
        assert!(matches!(bootstrap_transfer(&[], &[], &seg, 0.5), Err(Error::Empty(_))));
        assert!(matches!(bootstrap_cam(&[], &seg, 0.5, 0.2), Err(Error::Empty(_))));
    }

    #[test]
    fn cam_needs_two_classes() {
        let img = Image::from_fn(8, 8, |r, _| [r as f64 / 8.0; 3]);
        let seg = SegmenterConfig::default();
        let err = bootstrap_cam(&[(img.clone(), 0), (img, 0)], &seg, 0.5, 0.2).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }
}
