//! Stand-in segmentation network.
//!
//! Features are fixed and handcrafted: a low-level stack (colour, luma, luma
//! boundary map, pixel coordinates) and a high-level stack (box means of the
//! low-level channels at a wider radius). They are fused with
//! `bg(high, hgl(high, low))` and fed to two linear heads:
//!
//! * a per-pixel softmax classifier trained with pixel-averaged cross-entropy,
//! * an image-level classifier over the spatial mean of the fused features
//!   (global average pooling), whose weights also produce class activation
//!   maps.
//!
//! [`forward`] refines the per-pixel posteriors with the guided filter, using
//! the first HGL channel as guidance.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::fusion::{bg, hgl, FeatureStack};
use crate::guided_filter::{refine_probmap, GuidedFilterParams};
use crate::morphology::{boundary_extract, PoolSpec};
use crate::raster::{box_mean, check_dims, to_grayscale, Image, Mask, Plane, ProbMap};
use crate::{Error, Result};

/// Lower clamp applied to probabilities inside the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Recipe for the handcrafted feature stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    high_radius: usize,
}

impl FeatureSpec {
    /// Bumped whenever the channel recipe changes.
    pub const VERSION: u32 = 1;
    pub const CHANNELS: [&'static str; 8] = ["r", "g", "b", "luma", "edge", "texture", "x", "y"];

    pub fn new(high_radius: usize) -> Result<Self> {
        if high_radius == 0 {
            return Err(Error::InvalidParameter("high-level feature radius must be >= 1"));
        }
        Ok(Self { high_radius })
    }

    pub fn high_radius(&self) -> usize {
        self.high_radius
    }

    pub fn channel_count(&self) -> usize {
        Self::CHANNELS.len()
    }

    pub fn identifier(&self) -> String {
        format!("handcrafted-v{}-r{}", Self::VERSION, self.high_radius)
    }
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self { high_radius: 3 }
    }
}

/// Low- and high-level stacks, both full resolution with the same channels.
pub fn extract_features(img: &Image, spec: &FeatureSpec) -> (FeatureStack, FeatureStack) {
    let (h, w) = img.dims();
    let gray = to_grayscale(img);
    let edge = boundary_extract(&gray, PoolSpec::default()).expect("default pool spec is same-size");
    // Largest per-channel 3x3 range: colour texture that luma alone can miss.
    let texture = img
        .channels()
        .iter()
        .map(|p| boundary_extract(p, PoolSpec::default()).expect("default pool spec is same-size"))
        .reduce(|a, b| a.zip_map(&b, f64::max).expect("channels share dims"))
        .expect("three channels");
    let low_planes = vec![
        img.channel(0).clone(),
        img.channel(1).clone(),
        img.channel(2).clone(),
        gray,
        edge,
        texture,
        Plane::from_fn(h, w, |_, c| c as f64 / w as f64),
        Plane::from_fn(h, w, |r, _| r as f64 / h as f64),
    ];
    let high_planes = low_planes.iter().map(|p| box_mean(p, spec.high_radius)).collect();
    let names: Vec<String> = FeatureSpec::CHANNELS.iter().map(|s| String::from(*s)).collect();
    let low = FeatureStack::new(low_planes, names.clone()).expect("channels share dims");
    let high = FeatureStack::new(high_planes, names).expect("channels share dims");
    (low, high)
}

/// `bg(high, hgl(high, low))` with the default 3x3 boundary extractor.
pub fn fuse(low: &FeatureStack, high: &FeatureStack) -> Result<FeatureStack> {
    let guided = hgl(high, low)?;
    bg(high, &guided, PoolSpec::default())
}

/// Image features in the layout the heads consume.
#[derive(Debug, Clone)]
pub struct Prepared {
    height: usize,
    width: usize,
    features: usize,
    /// Pixel-major: `fused[pixel * features + f]`.
    fused: Vec<f64>,
    pooled: Vec<f64>,
    guide: Plane,
}

impl Prepared {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.fused[index * self.features..(index + 1) * self.features]
    }

    /// Spatial mean of every fused channel.
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    /// Guidance plane for refinement: the first HGL channel.
    pub fn guide(&self) -> &Plane {
        &self.guide
    }
}

pub fn prepare(img: &Image, spec: &FeatureSpec) -> Prepared {
    let (low, high) = extract_features(img, spec);
    let guided = hgl(&high, &low).expect("stacks built together");
    let fused = bg(&high, &guided, PoolSpec::default()).expect("stacks built together");
    let (h, w) = img.dims();
    let f = fused.len();
    let n = h * w;
    let mut flat = vec![0.0; n * f];
    let mut pooled = vec![0.0; f];
    for (c, plane) in fused.channels().iter().enumerate() {
        for (i, &v) in plane.as_slice().iter().enumerate() {
            flat[i * f + c] = v;
        }
        pooled[c] = plane.as_slice().iter().sum::<f64>() / n as f64;
    }
    Prepared {
        height: h,
        width: w,
        features: f,
        fused: flat,
        pooled,
        guide: guided.channel(0).clone(),
    }
}

/// A linear layer `logits = W x + b` with `W` stored row-major `[outputs x inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    outputs: usize,
    inputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Head {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            outputs,
            inputs,
            weights: vec![0.0; outputs * inputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn from_parts(outputs: usize, inputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != outputs * inputs || bias.len() != outputs {
            return Err(Error::InvalidParameter("head parameter block has the wrong length"));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("head parameters must be finite"));
        }
        Ok(Self {
            outputs,
            inputs,
            weights,
            bias,
        })
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Weights then bias.
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn param(&self, index: usize) -> f64 {
        if index < self.weights.len() {
            self.weights[index]
        } else {
            self.bias[index - self.weights.len()]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let nw = self.weights.len();
        if index < nw {
            self.weights[index] = value;
        } else {
            self.bias[index - nw] = value;
        }
    }

    pub fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs)) {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    /// Class scores without the bias, as used for activation maps.
    fn activation(&self, class: usize, x: &[f64]) -> f64 {
        self.weights[class * self.inputs..(class + 1) * self.inputs]
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum()
    }
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - m);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Pixel head, image-level (GAP) head and the feature recipe both consume.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: FeatureSpec,
    pixel: Head,
    gap: Head,
}

impl Model {
    /// Zero-initialized model with `classes` pixel classes and
    /// `image_classes` image-level classes.
    pub fn new(spec: FeatureSpec, classes: usize, image_classes: usize) -> Result<Self> {
        if classes < 1 || image_classes < 1 {
            return Err(Error::InvalidParameter("class counts must be >= 1"));
        }
        let f = spec.channel_count();
        Ok(Self {
            spec,
            pixel: Head::zeros(classes, f),
            gap: Head::zeros(image_classes, f),
        })
    }

    pub fn from_parts(spec: FeatureSpec, pixel: Head, gap: Head) -> Result<Self> {
        let f = spec.channel_count();
        if pixel.inputs != f || gap.inputs != f {
            return Err(Error::ChannelMismatch {
                expected: f,
                found: if pixel.inputs != f { pixel.inputs } else { gap.inputs },
            });
        }
        Ok(Self { spec, pixel, gap })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn classes(&self) -> usize {
        self.pixel.outputs
    }

    pub fn image_classes(&self) -> usize {
        self.gap.outputs
    }

    pub fn features(&self) -> usize {
        self.pixel.inputs
    }

    pub fn pixel_head(&self) -> &Head {
        &self.pixel
    }

    pub fn pixel_head_mut(&mut self) -> &mut Head {
        &mut self.pixel
    }

    pub fn gap_head(&self) -> &Head {
        &self.gap
    }

    pub fn gap_head_mut(&mut self) -> &mut Head {
        &mut self.gap
    }

    fn check_prepared(&self, prepared: &Prepared) -> Result<()> {
        if prepared.features != self.features() {
            return Err(Error::ChannelMismatch {
                expected: self.features(),
                found: prepared.features,
            });
        }
        Ok(())
    }

    const MAGIC: &'static [u8; 4] = b"GFNM";
    const FORMAT_VERSION: u32 = 1;

    /// Flat little-endian record: magic, format version, feature-spec version
    /// and radius, `C`, `F`, `C_img`, then pixel weights, pixel bias, GAP
    /// weights and GAP bias as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 8 * (self.pixel.param_count() + self.gap.param_count()));
        out.extend_from_slice(Self::MAGIC);
        for v in [
            Self::FORMAT_VERSION,
            FeatureSpec::VERSION,
            self.spec.high_radius as u32,
            self.classes() as u32,
            self.features() as u32,
            self.image_classes() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self
            .pixel
            .weights
            .iter()
            .chain(&self.pixel.bias)
            .chain(&self.gap.weights)
            .chain(&self.gap.bias)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rest = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if rest.len() < n {
                return Err(Error::Decode("truncated model record"));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        if take(4)? != Self::MAGIC {
            return Err(Error::Decode("bad magic"));
        }
        let mut header = [0u32; 6];
        for h in header.iter_mut() {
            *h = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        }
        let [format, spec_version, radius, classes, features, image_classes] = header;
        if format != Self::FORMAT_VERSION {
            return Err(Error::Decode("unsupported model format version"));
        }
        if spec_version != FeatureSpec::VERSION {
            return Err(Error::Decode("unsupported feature spec version"));
        }
        let spec = FeatureSpec::new(radius as usize).map_err(|_| Error::Decode("bad feature radius"))?;
        let (c, f, ci) = (classes as usize, features as usize, image_classes as usize);
        if f != spec.channel_count() {
            return Err(Error::Decode("feature count does not match feature spec"));
        }
        let mut read = |n: usize| -> Result<Vec<f64>> {
            let raw = take(n.checked_mul(8).ok_or(Error::Decode("oversized block"))?)?;
            Ok(raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect())
        };
        let pw = read(c * f)?;
        let pb = read(c)?;
        let gw = read(ci * f)?;
        let gb = read(ci)?;
        if !rest.is_empty() {
            return Err(Error::Decode("trailing bytes after model record"));
        }
        let pixel = Head::from_parts(c, f, pw, pb).map_err(|_| Error::Decode("bad pixel head"))?;
        let gap = Head::from_parts(ci, f, gw, gb).map_err(|_| Error::Decode("bad gap head"))?;
        Self::from_parts(spec, pixel, gap)
    }

    /// Short content hash of the serialized record.
    pub fn checkpoint_id(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-pixel softmax posteriors without refinement.
pub fn posteriors(model: &Model, prepared: &Prepared) -> Result<ProbMap> {
    model.check_prepared(prepared)?;
    let (h, w) = prepared.dims();
    let c = model.classes();
    let mut planes = vec![Vec::with_capacity(h * w); c];
    let mut z = vec![0.0; c];
    for i in 0..prepared.pixels() {
        model.pixel.logits_into(prepared.pixel(i), &mut z);
        softmax_in_place(&mut z);
        for (plane, &p) in planes.iter_mut().zip(&z) {
            plane.push(p);
        }
    }
    let planes = planes
        .into_iter()
        .map(|d| Plane::new(h, w, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbMap::from_planes_unchecked(planes))
}

pub fn forward_prepared(model: &Model, prepared: &Prepared, gf: GuidedFilterParams) -> Result<ProbMap> {
    let probs = posteriors(model, prepared)?;
    refine_probmap(prepared.guide(), &probs, gf)
}

/// Features, fusion, per-pixel softmax and guided-filter refinement.
pub fn forward(model: &Model, img: &Image, gf: GuidedFilterParams) -> Result<ProbMap> {
    forward_prepared(model, &prepare(img, model.spec()), gf)
}

/// Mean over pixels of `-log p[target]`, probabilities floored at [`LOG_FLOOR`].
pub fn loss(probs: &ProbMap, target: &Mask) -> Result<f64> {
    check_dims(probs.dims(), target.dims())?;
    let c = probs.classes();
    let mut total = 0.0;
    for (i, &t) in target.as_slice().iter().enumerate() {
        if t as usize >= c {
            return Err(Error::ClassOutOfRange { class: t, classes: c });
        }
        total -= libm::log(probs.plane(t as usize).as_slice()[i].max(LOG_FLOOR));
    }
    Ok(total / target.len() as f64)
}

/// Optimizer settings. Learning rate is divided by 10 every `lr_step` epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lr_step: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.007,
            momentum: 0.9,
            weight_decay: 0.0002,
            batch_size: 8,
            lr_step: 5,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidParameter("weight decay must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1"));
        }
        if self.lr_step == 0 {
            return Err(Error::InvalidParameter("lr step must be >= 1"));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate / libm::pow(10.0, (epoch / self.lr_step) as f64)
    }
}

/// One training image with its per-pixel target and optional validity mask
/// (nonzero = pixel contributes to the loss).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Image,
    pub target: Mask,
    pub valid: Option<Mask>,
}

/// A prepared image paired with its labels, borrowed for training.
#[derive(Debug, Clone, Copy)]
pub struct PreparedSample<'a> {
    pub prepared: &'a Prepared,
    pub target: &'a Mask,
    pub valid: Option<&'a Mask>,
}

impl PreparedSample<'_> {
    fn is_valid(&self, index: usize) -> bool {
        self.valid.is_none_or(|v| v.as_slice()[index] != 0)
    }

    fn valid_count(&self) -> usize {
        self.valid.map_or(self.target.len(), |v| v.count_nonzero())
    }
}

/// Pixel-averaged cross-entropy of one image over its valid pixels, and its
/// gradient with respect to the head parameters (weights then bias).
pub fn pixel_loss_and_grad(head: &Head, sample: &PreparedSample<'_>) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; head.param_count()];
    let loss = accumulate_pixel_grad(head, sample, 1.0, &mut grad);
    (loss, grad)
}

fn accumulate_pixel_grad(head: &Head, sample: &PreparedSample<'_>, scale: f64, grad: &mut [f64]) -> f64 {
    let n_valid = sample.valid_count();
    if n_valid == 0 {
        return 0.0;
    }
    let f = head.inputs;
    let nw = head.weights.len();
    let norm = scale / n_valid as f64;
    let mut z = vec![0.0; head.outputs];
    let mut total = 0.0;
    for i in 0..sample.prepared.pixels() {
        if !sample.is_valid(i) {
            continue;
        }
        let x = sample.prepared.pixel(i);
        let t = sample.target.as_slice()[i] as usize;
        head.logits_into(x, &mut z);
        softmax_in_place(&mut z);
        total -= libm::log(z[t].max(LOG_FLOOR));
        for (c, &p) in z.iter().enumerate() {
            let d = (p - f64::from(u8::from(c == t))) * norm;
            for (g, &v) in grad[c * f..(c + 1) * f].iter_mut().zip(x) {
                *g += d * v;
            }
            grad[nw + c] += d;
        }
    }
    total / n_valid as f64
}

/// Cross-entropy of the image-level head on one pooled feature vector, and
/// its gradient (weights then bias).
pub fn image_loss_and_grad(head: &Head, pooled: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; head.param_count()];
    let loss = accumulate_image_grad(head, pooled, label, 1.0, &mut grad);
    (loss, grad)
}

fn accumulate_image_grad(head: &Head, pooled: &[f64], label: usize, scale: f64, grad: &mut [f64]) -> f64 {
    let f = head.inputs;
    let nw = head.weights.len();
    let mut z = vec![0.0; head.outputs];
    head.logits_into(pooled, &mut z);
    softmax_in_place(&mut z);
    for (c, &p) in z.iter().enumerate() {
        let d = (p - f64::from(u8::from(c == label))) * scale;
        for (g, &v) in grad[c * f..(c + 1) * f].iter_mut().zip(pooled) {
            *g += d * v;
        }
        grad[nw + c] += d;
    }
    -libm::log(z[label].max(LOG_FLOOR))
}

/// SGD with momentum (`v = m v + g; p -= lr v`); weight decay applies to
/// weights only.
struct Sgd {
    velocity: Vec<f64>,
}

impl Sgd {
    fn new(head: &Head) -> Self {
        Self {
            velocity: vec![0.0; head.param_count()],
        }
    }

    fn step(&mut self, head: &mut Head, grad: &mut [f64], lr: f64, cfg: &TrainConfig) {
        let nw = head.weights.len();
        for (g, w) in grad[..nw].iter_mut().zip(&head.weights) {
            *g += cfg.weight_decay * w;
        }
        for (i, (v, g)) in self.velocity.iter_mut().zip(grad.iter()).enumerate() {
            *v = cfg.momentum * *v + g;
            let p = head.param(i) - lr * *v;
            head.set_param(i, p);
        }
    }
}

/// Per-epoch mean training loss alongside the trained model.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub epoch_losses: Vec<f64>,
}

/// Trains the pixel head. Samples without any valid pixel are dropped before
/// shuffling, so they cannot influence the result.
pub fn train_prepared(model: &Model, samples: &[PreparedSample<'_>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let classes = model.classes();
    for s in samples {
        model.check_prepared(s.prepared)?;
        check_dims(s.prepared.dims(), s.target.dims())?;
        if let Some(v) = s.valid {
            check_dims(s.prepared.dims(), v.dims())?;
        }
        if let Some(&bad) = s.target.as_slice().iter().find(|&&t| t as usize >= classes) {
            return Err(Error::ClassOutOfRange { class: bad, classes });
        }
    }
    let active: Vec<&PreparedSample<'_>> = samples.iter().filter(|s| s.valid_count() > 0).collect();
    if active.is_empty() {
        return Err(Error::NoValidPixels);
    }

    let mut model = model.clone();
    let mut sgd = Sgd::new(&model.pixel);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..active.len()).collect();
    let mut grad = vec![0.0; model.pixel.param_count()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += accumulate_pixel_grad(&model.pixel, active[i], scale, &mut grad);
            }
            sgd.step(&mut model.pixel, &mut grad, lr, cfg);
        }
        epoch_losses.push(epoch_loss / active.len() as f64);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

pub fn train_logged(model: &Model, dataset: &[TrainSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let prepared: Vec<Prepared> = dataset.iter().map(|s| prepare(&s.image, model.spec())).collect();
    let samples: Vec<PreparedSample<'_>> = dataset
        .iter()
        .zip(&prepared)
        .map(|(s, p)| PreparedSample {
            prepared: p,
            target: &s.target,
            valid: s.valid.as_ref(),
        })
        .collect();
    train_prepared(model, &samples, cfg)
}

/// Mini-batch SGD on the per-pixel cross-entropy restricted to valid pixels.
pub fn train(model: &Model, dataset: &[TrainSample], cfg: &TrainConfig) -> Result<Model> {
    train_logged(model, dataset, cfg).map(|o| o.model)
}

/// Trains the image-level head on `(prepared image, label)` pairs.
pub fn train_image_classifier_prepared(
    model: &Model,
    samples: &[(&Prepared, usize)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("image-level training set"));
    }
    let ci = model.image_classes();
    for &(p, label) in samples {
        model.check_prepared(p)?;
        if label >= ci {
            return Err(Error::ClassOutOfRange {
                class: label.min(255) as u8,
                classes: ci,
            });
        }
    }
    let mut model = model.clone();
    let mut sgd = Sgd::new(&model.gap);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = vec![0.0; model.gap.param_count()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (p, label) = samples[i];
                epoch_loss += accumulate_image_grad(&model.gap, p.pooled(), label, scale, &mut grad);
            }
            sgd.step(&mut model.gap, &mut grad, lr, cfg);
        }
        epoch_losses.push(epoch_loss / samples.len() as f64);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// GAP + linear classifier trained with softmax cross-entropy on image-level labels.
pub fn train_image_classifier(model: &Model, images: &[(Image, usize)], cfg: &TrainConfig) -> Result<Model> {
    let prepared: Vec<Prepared> = images.iter().map(|(img, _)| prepare(img, model.spec())).collect();
    let samples: Vec<(&Prepared, usize)> = prepared.iter().zip(images).map(|(p, (_, l))| (p, *l)).collect();
    train_image_classifier_prepared(model, &samples, cfg).map(|o| o.model)
}

/// Image-level class probabilities from the GAP head.
pub fn classify_image(model: &Model, prepared: &Prepared) -> Result<Vec<f64>> {
    model.check_prepared(prepared)?;
    let mut z = vec![0.0; model.image_classes()];
    model.gap.logits_into(prepared.pooled(), &mut z);
    softmax_in_place(&mut z);
    Ok(z)
}

/// Raw activation `gapW_c . fused(i, j)` for one class.
pub fn class_activation(model: &Model, prepared: &Prepared, class: usize) -> Result<Plane> {
    model.check_prepared(prepared)?;
    if class >= model.image_classes() {
        return Err(Error::ClassOutOfRange {
            class: class.min(255) as u8,
            classes: model.image_classes(),
        });
    }
    let (h, w) = prepared.dims();
    Ok(Plane::from_fn(h, w, |r, c| {
        model.gap.activation(class, prepared.pixel(r * w + c))
    }))
}

/// Min-max scaling to `[0, 1]`. Maps whose spread is at rounding level are
/// treated as constant and become zeros.
pub fn normalize_unit(p: &Plane) -> Plane {
    let (lo, hi) = (p.min(), p.max());
    if hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        p.map(|v| (v - lo) / (hi - lo))
    } else {
        p.map(|_| 0.0)
    }
}

pub fn cam_prepared(model: &Model, prepared: &Prepared) -> Result<Vec<Plane>> {
    (0..model.image_classes())
        .map(|c| class_activation(model, prepared, c).map(|a| normalize_unit(&a)))
        .collect()
}

/// One normalized class activation map per image-level class.
pub fn cam(model: &Model, img: &Image) -> Result<Vec<Plane>> {
    cam_prepared(model, &prepare(img, model.spec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_image(h: usize, w: usize, seed: u64) -> Image {
        let mut s = seed ^ 0x5851_f42d_4c95_7f2d;
        Image::from_fn(h, w, |_, _| {
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            [next(), next(), next()]
        })
    }

    #[test]
    fn feature_stacks_share_channels() {
        let img = toy_image(6, 7, 1);
        let (low, high) = extract_features(&img, &FeatureSpec::default());
        assert_eq!(low.len(), high.len());
        assert_eq!(low.len(), FeatureSpec::default().channel_count());
        assert_eq!(low.names(), high.names());
    }

    #[test]
    fn constant_gray_image_features() {
        let img = Image::from_fn(8, 8, |_, _| [0.4, 0.4, 0.4]);
        let (low, _) = extract_features(&img, &FeatureSpec::default());
        for c in 0..4 {
            assert!(low.channel(c).as_slice().iter().all(|&v| v == low.channel(c).get(0, 0)));
        }
        assert!(low.channel(4).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn high_channels_are_box_means_of_low() {
        let img = toy_image(9, 6, 2);
        let spec = FeatureSpec::new(2).unwrap();
        let (low, high) = extract_features(&img, &spec);
        for c in 0..low.len() {
            let want = box_mean(low.channel(c), 2);
            for (a, b) in high.channel(c).as_slice().iter().zip(want.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_model_gives_uniform_output() {
        let model = Model::new(FeatureSpec::default(), 3, 2).unwrap();
        let img = toy_image(8, 8, 3);
        let out = forward(&model, &img, GuidedFilterParams::default()).unwrap();
        for p in out.planes() {
            assert!(p.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn logit_shift_leaves_softmax_unchanged() {
        let mut a = [0.3, -1.2, 2.5];
        let mut b = [0.3 + 7.0, -1.2 + 7.0, 2.5 + 7.0];
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        let target = Mask::from_fn(3, 4, |r, c| ((r + c) % 2) as u8);
        let one_hot = ProbMap::one_hot(&target, 2).unwrap();
        assert_eq!(loss(&one_hot, &target).unwrap(), 0.0);
        let uniform = ProbMap::uniform(3, 4, 4);
        assert!((loss(&uniform, &target).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(matches!(
            loss(&ProbMap::uniform(3, 4, 1), &target),
            Err(Error::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn lr_schedule_divides_by_ten_every_five_epochs() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 0.007);
        assert_eq!(cfg.lr_at(4), 0.007);
        assert!((cfg.lr_at(5) - 0.0007).abs() < 1e-18);
        assert!((cfg.lr_at(10) - 0.00007).abs() < 1e-18);
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                momentum: 1.0,
                ..Default::default()
            },
            TrainConfig {
                weight_decay: -1.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn train_rejects_empty_and_fully_masked_sets() {
        let model = Model::new(FeatureSpec::default(), 2, 1).unwrap();
        assert_eq!(
            train(&model, &[], &TrainConfig::default()).unwrap_err(),
            Error::Empty("training set")
        );
        let sample = TrainSample {
            image: toy_image(4, 4, 4),
            target: Mask::filled(4, 4, 1),
            valid: Some(Mask::filled(4, 4, 0)),
        };
        assert_eq!(
            train(&model, &[sample], &TrainConfig::default()).unwrap_err(),
            Error::NoValidPixels
        );
    }

    #[test]
    fn model_bytes_round_trip() {
        let mut model = Model::new(FeatureSpec::new(4).unwrap(), 3, 2).unwrap();
        for i in 0..model.pixel_head().param_count() {
            model.pixel_head_mut().set_param(i, i as f64 * 0.25 - 1.0);
        }
        for i in 0..model.gap_head().param_count() {
            model.gap_head_mut().set_param(i, -(i as f64) / 3.0);
        }
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"GFNM");
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(model.checkpoint_id().len(), 16);
        assert!(Model::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(Model::from_bytes(&bad).unwrap_err(), Error::Decode("bad magic"));
    }

    #[test]
    fn constant_image_cam_is_zero() {
        let mut model = Model::new(FeatureSpec::default(), 2, 2).unwrap();
        for i in 0..model.gap_head().param_count() {
            model.gap_head_mut().set_param(i, (i % 5) as f64 - 2.0);
        }
        let img = Image::from_fn(6, 6, |_, _| [0.2, 0.5, 0.7]);
        // Coordinates vary, so zero their weights to get a truly constant map.
        for c in 0..2 {
            let f = model.features();
            model.gap_head_mut().set_param(c * f + f - 2, 0.0);
            model.gap_head_mut().set_param(c * f + f - 1, 0.0);
        }
        for map in cam(&model, &img).unwrap() {
            assert!(map.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gap_of_constant_stack_is_the_constant() {
        let img = Image::from_fn(5, 5, |_, _| [0.3, 0.6, 0.9]);
        let p = prepare(&img, &FeatureSpec::default());
        // Colour channels of a flat image are flat after fusion too.
        for c in 0..4 {
            assert!((p.pooled()[c] - p.pixel(0)[c]).abs() < 1e-12);
        }
    }
}
