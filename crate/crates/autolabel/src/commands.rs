//! Subcommand implementations. Each takes already-parsed arguments and writes
//! its human-readable output to `out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use autolabel_core::classifier::Model;
use autolabel_core::eval::miou_report;
use autolabel_core::guided_filter::{guided_filter_fast, GuidedFilterParams};
use autolabel_core::morphology::{boundary_extract, PoolSpec};
use autolabel_core::raster::to_grayscale;
use autolabel_core::selftrain::{
    bootstrap_cam, bootstrap_simple_to_complex, bootstrap_transfer, iterate, sweep_guided_filter, Bootstrap,
    IterateOutcome, LabelledImage, StopReason, Validation,
};
use autolabel_core::synth::{self, SceneSpec};
use autolabel_core::threshold::{otsu_mask, Polarity};
use autolabel_core::{Image, Mask, Plane};

use crate::config::{Settings, Strategy};
use crate::error::{Error, Result};
use crate::manifest::{load_entries, Entry, Manifest, Record};
use crate::planes;
use crate::pnm::{self, Pnm};

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn emit(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(line)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    Simple,
    Complex,
    Cluttered,
    TwoClass,
}

impl GenMode {
    pub fn scene(self, seed: u64) -> SceneSpec {
        match self {
            GenMode::Simple => SceneSpec::simple(seed),
            GenMode::Complex => SceneSpec::complex(seed),
            GenMode::Cluttered => SceneSpec::cluttered(seed),
            GenMode::TwoClass => SceneSpec::two_class(seed),
        }
    }
}

/// Writes `images/NNNN.ppm`, `masks/NNNN.pgm` and `manifest.txt` under `out_dir`.
pub fn gen(mode: GenMode, n: usize, seed: u64, side: Option<usize>, out_dir: &Path) -> Result<()> {
    let mut spec = mode.scene(seed);
    if let Some(side) = side {
        if side < 8 {
            return Err(Error::Usage("--side must be at least 8".into()));
        }
        spec.side = side;
    }
    let samples = match mode {
        GenMode::Simple => synth::gen_simple(&spec, n),
        _ => synth::generate(&spec, n),
    };
    create_dir(&out_dir.join("images"))?;
    create_dir(&out_dir.join("masks"))?;
    let width = n.saturating_sub(1).to_string().len().max(4);
    let mut records = Vec::with_capacity(n);
    for (i, s) in samples.iter().enumerate() {
        let image = PathBuf::from(format!("images/{i:0width$}.ppm"));
        let mask = PathBuf::from(format!("masks/{i:0width$}.pgm"));
        pnm::save_image(&s.image, &out_dir.join(&image))?;
        pnm::save_mask(&s.mask, &out_dir.join(&mask))?;
        records.push(Record {
            image,
            mask: Some(mask),
            label: Some(s.label),
        });
    }
    Manifest {
        root: out_dir.to_path_buf(),
        records,
    }
    .save(&out_dir.join("manifest.txt"))
}

pub fn otsu(input: &Path, output: &Path, polarity: Polarity) -> Result<()> {
    let mask = match pnm::load_pnm(input)? {
        Pnm::Rgb(img) => otsu_mask(&img, polarity),
        Pnm::Gray(p) => autolabel_core::threshold::otsu_mask_plane(&p, polarity),
    };
    pnm::save_mask(&mask, output)
}

/// Max-minus-min response per channel.
pub fn boundary(input: &Path, kernel: usize, output: &Path) -> Result<()> {
    let spec = PoolSpec::same(kernel)?;
    match pnm::load_pnm(input)? {
        Pnm::Gray(p) => pnm::save_plane(&boundary_extract(&p, spec)?, output),
        Pnm::Rgb(img) => {
            let [r, g, b] = img.channels().clone().map(|c| boundary_extract(&c, spec));
            pnm::save_image(&Image::new(r?, g?, b?)?, output)
        }
    }
}

/// Filters every plane of `prob` with the grayscale of `image` as guide.
pub fn guide(image: &Path, prob: &Path, params: GuidedFilterParams, output: &Path) -> Result<()> {
    let gray = match pnm::load_pnm(image)? {
        Pnm::Rgb(img) => to_grayscale(&img),
        Pnm::Gray(p) => p,
    };
    let filtered = planes::load(prob)?
        .iter()
        .map(|p| guided_filter_fast(&gray, p, params))
        .collect::<autolabel_core::Result<Vec<Plane>>>()?;
    planes::save(&filtered, output)
}

/// Alpha-blends red over pixels with a nonzero class.
pub fn overlay(image: &Path, mask: &Path, alpha: f64, output: &Path) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Usage("--alpha must lie in [0, 1]".into()));
    }
    let img = pnm::load_image(image)?;
    let mask = pnm::load_mask(mask)?;
    if mask.dims() != img.dims() {
        return Err(autolabel_core::Error::DimensionMismatch {
            expected: img.dims(),
            found: mask.dims(),
        }
        .into());
    }
    const TINT: [f64; 3] = [1.0, 0.0, 0.0];
    let (h, w) = img.dims();
    let blended = Image::from_fn(h, w, |r, c| {
        let px = img.pixel(r, c);
        if mask.get(r, c) == 0 {
            px
        } else {
            std::array::from_fn(|k| (1.0 - alpha) * px[k] + alpha * TINT[k])
        }
    });
    pnm::save_image(&blended, output)
}

fn pgm_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            if let Some(name) = path.file_name() {
                names.push(name.to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Dataset mIoU over the `.pgm` masks of `gt`, matched by file name in `pred`.
pub fn eval(pred: &Path, gt: &Path, classes: usize, out: &mut dyn Write) -> Result<f64> {
    let names = pgm_names(gt)?;
    if names.is_empty() {
        return Err(Error::Invalid(format!("no .pgm masks in {}", gt.display())));
    }
    let mut preds = Vec::with_capacity(names.len());
    let mut gts = Vec::with_capacity(names.len());
    for name in &names {
        let p = pred.join(name);
        if !p.exists() {
            return Err(Error::Invalid(format!("{}: no prediction for {name}", pred.display())));
        }
        preds.push(pnm::load_mask(&p)?);
        gts.push(pnm::load_mask(&gt.join(name))?);
    }
    let report = miou_report(&preds, &gts, classes)?;
    for (c, iou) in report.per_class.iter().enumerate() {
        match iou {
            Some(v) => emit(out, format_args!("class_{c}_iou={v:.6}"))?,
            None => emit(out, format_args!("class_{c}_iou=absent"))?,
        }
    }
    emit(out, format_args!("miou={:.6}", report.miou))?;
    Ok(report.miou)
}

fn require(path: &Option<PathBuf>, key: &str, strategy: Strategy) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Usage(format!("strategy {strategy} needs `{key}` in the config")))
}

fn load_manifest(path: &Path) -> Result<Vec<Entry>> {
    let entries = load_entries(&Manifest::load(path)?)?;
    if entries.is_empty() {
        return Err(Error::Invalid(format!("{}: manifest is empty", path.display())));
    }
    Ok(entries)
}

/// Target entries from the settings.
pub fn load_targets(settings: &Settings) -> Result<Vec<Entry>> {
    load_manifest(&require(&settings.target, "target", settings.strategy)?)
}

/// Initial masks for every target under the configured strategy.
pub fn run_bootstrap(settings: &Settings, targets: &[Entry]) -> Result<Bootstrap> {
    let seg = settings.segmenter()?;
    let images: Vec<Image> = targets.iter().map(|e| e.image.clone()).collect();
    let b = match settings.strategy {
        Strategy::SimpleToComplex => {
            let simple = load_manifest(&require(&settings.simple, "simple", settings.strategy)?)?;
            let simple: Vec<Image> = simple.into_iter().map(|e| e.image).collect();
            bootstrap_simple_to_complex(&simple, &images, &seg, settings.tau)?
        }
        Strategy::Transfer => {
            let source = load_manifest(&require(&settings.source, "source", settings.strategy)?)?;
            let source = source
                .into_iter()
                .map(|e| {
                    let mask = e
                        .mask
                        .ok_or_else(|| Error::Invalid(format!("source image {} has no mask", e.name)))?;
                    Ok(LabelledImage { image: e.image, mask })
                })
                .collect::<Result<Vec<_>>>()?;
            bootstrap_transfer(&source, &images, &seg, settings.tau)?
        }
        Strategy::Cam => {
            let labelled = targets
                .iter()
                .map(|e| {
                    e.label
                        .map(|l| (e.image.clone(), l))
                        .ok_or_else(|| Error::Invalid(format!("target image {} has no label", e.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            bootstrap_cam(&labelled, &seg, settings.tau, settings.tau_cam)?
        }
    };
    Ok(b)
}

fn save_masks(dir: &Path, entries: &[Entry], masks: &[Mask]) -> Result<()> {
    create_dir(dir)?;
    for (e, m) in entries.iter().zip(masks) {
        pnm::save_mask(m, &dir.join(format!("{}.pgm", e.name)))?;
    }
    Ok(())
}

/// Writes `<out>/<name>.pgm` per target plus `<out>/model.bin`.
pub fn bootstrap(settings: &Settings, out_dir: &Path, out: &mut dyn Write) -> Result<Bootstrap> {
    let targets = load_targets(settings)?;
    let b = run_bootstrap(settings, &targets)?;
    save_masks(out_dir, &targets, &b.masks)?;
    write_file(&out_dir.join("model.bin"), &b.model.to_bytes())?;
    emit(
        out,
        format_args!("masks={} checkpoint={}", b.masks.len(), b.model.checkpoint_id()),
    )?;
    Ok(b)
}

/// The last `settings.validation` targets, all of which need a ground-truth mask.
pub fn validation_split(settings: &Settings, targets: &[Entry]) -> Result<Validation> {
    let n = settings.validation;
    if n == 0 || n >= targets.len() {
        return Err(Error::Usage(format!(
            "validation must be in 1..{} for {} targets, got {n}",
            targets.len(),
            targets.len()
        )));
    }
    let indices: Vec<usize> = (targets.len() - n..targets.len()).collect();
    let masks = indices
        .iter()
        .map(|&i| {
            targets[i]
                .mask
                .clone()
                .ok_or_else(|| Error::Invalid(format!("validation image {} has no mask", targets[i].name)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Validation { indices, masks })
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::NoImprovement => "no_improvement",
        StopReason::MaxRounds => "max_rounds",
        StopReason::NoneSelected => "none_selected",
    }
}

/// Bootstrap then self-train. Writes `initial/`, `round_<k>/`, `final/`,
/// `report.txt` (one `round miou selected rejected` line per round) and the
/// best round's `model.bin`.
pub fn iterate_cmd(settings: &Settings, out_dir: &Path, out: &mut dyn Write) -> Result<IterateOutcome> {
    let targets = load_targets(settings)?;
    let validation = validation_split(settings, &targets)?;
    let boot = run_bootstrap(settings, &targets)?;
    let images: Vec<Image> = targets.iter().map(|e| e.image.clone()).collect();
    let outcome = iterate(
        &boot.masks,
        &images,
        &validation,
        Some(&boot.model),
        &settings.segmenter()?,
        &settings.policy()?,
        &settings.iterate(),
    )?;

    create_dir(out_dir)?;
    save_masks(&out_dir.join("initial"), &targets, &boot.masks)?;
    for (k, masks) in outcome.round_masks.iter().enumerate() {
        save_masks(&out_dir.join(format!("round_{}", k + 1)), &targets, masks)?;
    }
    save_masks(&out_dir.join("final"), &targets, &outcome.best_masks)?;
    let report: String = outcome
        .reports
        .iter()
        .map(|r| format!("{} {:.6} {} {}\n", r.round, r.miou, r.selected, r.rejected))
        .collect();
    write_file(&out_dir.join("report.txt"), report.as_bytes())?;
    write_file(&out_dir.join("model.bin"), &outcome.best_model.to_bytes())?;

    emit(out, format_args!("initial_miou={:.6}", outcome.initial_miou))?;
    for r in &outcome.reports {
        emit(
            out,
            format_args!(
                "round={} miou={:.6} selected={} rejected={} checkpoint={}",
                r.round, r.miou, r.selected, r.rejected, r.checkpoint
            ),
        )?;
    }
    emit(
        out,
        format_args!("best_round={} stop={}", outcome.best_round, stop_name(outcome.stop)),
    )?;
    Ok(outcome)
}

/// Guided-filter grid search on the validation split. Uses `model` if given,
/// otherwise bootstraps one.
pub fn sweep(
    settings: &Settings,
    radii: &[usize],
    epsilons: &[f64],
    model: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(usize, f64)> {
    let targets = load_targets(settings)?;
    let validation = validation_split(settings, &targets)?;
    let model = match model {
        Some(path) => Model::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)?,
        None => run_bootstrap(settings, &targets)?.model,
    };
    let images: Vec<Image> = validation.indices.iter().map(|&i| targets[i].image.clone()).collect();
    let (points, best) = sweep_guided_filter(&model, &images, &validation.masks, radii, epsilons, settings.tau)?;
    for p in &points {
        emit(out, format_args!("r={} eps={} miou={:.6}", p.radius, p.epsilon, p.miou))?;
    }
    emit(
        out,
        format_args!("best r={} eps={} miou={:.6}", best.radius, best.epsilon, best.miou),
    )?;
    Ok((best.radius, best.epsilon))
}
