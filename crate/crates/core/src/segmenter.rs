//! Reference per-voxel logistic segmenter over handcrafted features, with
//! the Adam + cosine-annealing training loop that optimizes the combined
//! objective.
//!
//! The model is deliberately small — a logistic regression over an 8- or
//! 9-dimensional feature stack — so every gradient is analytic and every
//! training run is desk-verifiable. Two independent instances cover the
//! global task (liver vs rest, whole volume, with the y coordinate as a
//! ninth feature) and the local task (tumor vs liver tissue, on the liver
//! crop).

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::filters::{box_mean, box_variance, gaussian_smooth};
use crate::losses::{combined_loss, FocalParams, LossBundle, LossError, LossWeights};
use crate::volio::{Mask, TissueClass, VoxelKind, Volume};

/// Feature count of the local (tumor) model.
pub const NUM_LOCAL_FEATURES: usize = 8;
/// Feature count of the global (liver) model (adds the y coordinate).
pub const NUM_GLOBAL_FEATURES: usize = 9;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

const PARAMS_MAGIC: &[u8; 4] = b"SEGP";
const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("parameter count {params} does not match feature count {features}")]
    DimMismatch { params: usize, features: usize },
    #[error("non-finite gradient encountered at step {step} (|grad| overflowed)")]
    NonFiniteGradient { step: u64 },
    #[error("bad parameter file: {0}")]
    BadParamsFile(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-voxel feature vectors, voxel-major (`data[i * F + f]`).
#[derive(Debug, Clone)]
pub struct FeatureStack {
    dims: [usize; 3],
    num_features: usize,
    data: Vec<f64>,
}

impl FeatureStack {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn voxel(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_features..(i + 1) * self.num_features]
    }
}

fn coordinate_plane(dims: [usize; 3], axis: usize) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let denom = (dims[axis].max(2) - 1) as f64;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let c = [x, y, z][axis] as f64;
                out.push(if dims[axis] == 1 { 0.0 } else { c / denom });
            }
        }
    }
    out
}

fn stack_planes(dims: [usize; 3], planes: Vec<Vec<f64>>) -> FeatureStack {
    let num_features = planes.len();
    let n = dims[0] * dims[1] * dims[2];
    let mut data = vec![0.0; n * num_features];
    for (f, plane) in planes.iter().enumerate() {
        for (i, &v) in plane.iter().enumerate() {
            data[i * num_features + f] = v;
        }
    }
    FeatureStack {
        dims,
        num_features,
        data,
    }
}

fn intensity_planes(v: &Volume) -> Vec<Vec<f64>> {
    assert_eq!(
        v.kind(),
        VoxelKind::Normalized,
        "feature extraction requires a normalized volume"
    );
    let dims = v.dims();
    let intensity: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
    vec![
        intensity.clone(),
        box_mean(&intensity, dims, 1),
        box_mean(&intensity, dims, 2),
        box_variance(&intensity, dims, 2),
        gaussian_smooth(&intensity, dims, 1.0),
        gaussian_smooth(&intensity, dims, 2.0),
    ]
}

/// Local feature stack (F = 8): intensity, box means (r = 1, 2), box
/// variance (r = 2), Gaussian smoothings (σ = 1, 2), normalized x and z
/// coordinates. Neighborhood filters replicate edges.
pub fn extract_features(v: &Volume) -> FeatureStack {
    let dims = v.dims();
    let mut planes = intensity_planes(v);
    planes.push(coordinate_plane(dims, 0));
    planes.push(coordinate_plane(dims, 2));
    stack_planes(dims, planes)
}

/// Global feature stack (F = 9): the local features plus the normalized y
/// coordinate, which separates the liver from structures above/below it.
pub fn extract_features_global(v: &Volume) -> FeatureStack {
    let dims = v.dims();
    let mut planes = intensity_planes(v);
    planes.push(coordinate_plane(dims, 0));
    planes.push(coordinate_plane(dims, 2));
    planes.push(coordinate_plane(dims, 1));
    stack_planes(dims, planes)
}

/// Logistic model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SegmenterParams {
    pub fn zeros(num_features: usize) -> Self {
        SegmenterParams {
            weights: vec![0.0; num_features],
            bias: 0.0,
        }
    }

    /// Versioned binary blob: magic, version, feature count, weights, bias
    /// (little-endian f64).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * (self.weights.len() + 1));
        out.extend_from_slice(PARAMS_MAGIC);
        let mut buf4 = [0u8; 4];
        LittleEndian::write_u32(&mut buf4, PARAMS_VERSION);
        out.extend_from_slice(&buf4);
        LittleEndian::write_u32(&mut buf4, self.weights.len() as u32);
        out.extend_from_slice(&buf4);
        let mut buf8 = [0u8; 8];
        for &w in &self.weights {
            LittleEndian::write_f64(&mut buf8, w);
            out.extend_from_slice(&buf8);
        }
        LittleEndian::write_f64(&mut buf8, self.bias);
        out.extend_from_slice(&buf8);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SegmenterError> {
        if bytes.len() < 12 || &bytes[0..4] != PARAMS_MAGIC {
            return Err(SegmenterError::BadParamsFile("bad magic".into()));
        }
        let version = LittleEndian::read_u32(&bytes[4..8]);
        if version != PARAMS_VERSION {
            return Err(SegmenterError::BadParamsFile(format!(
                "unsupported version {version}"
            )));
        }
        let count = LittleEndian::read_u32(&bytes[8..12]) as usize;
        let expected = 12 + 8 * (count + 1);
        if bytes.len() != expected {
            return Err(SegmenterError::BadParamsFile(format!(
                "expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let mut weights = Vec::with_capacity(count);
        for i in 0..count {
            weights.push(LittleEndian::read_f64(&bytes[12 + 8 * i..20 + 8 * i]));
        }
        let bias = LittleEndian::read_f64(&bytes[12 + 8 * count..20 + 8 * count]);
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(SegmenterError::BadParamsFile("non-finite parameter".into()));
        }
        Ok(SegmenterParams { weights, bias })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SegmenterError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SegmenterError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-voxel probabilities `sigmoid(w · f_i + b)`.
pub fn forward(params: &SegmenterParams, features: &FeatureStack) -> Result<Vec<f64>, SegmenterError> {
    if params.weights.len() != features.num_features() {
        return Err(SegmenterError::DimMismatch {
            params: params.weights.len(),
            features: features.num_features(),
        });
    }
    let n = features.num_voxels();
    let mut probs = Vec::with_capacity(n);
    for i in 0..n {
        let f = features.voxel(i);
        let z: f64 = params.bias
            + params
                .weights
                .iter()
                .zip(f)
                .map(|(w, x)| w * x)
                .sum::<f64>();
        probs.push(sigmoid(z));
    }
    Ok(probs)
}

/// Probability vector wrapped as a probability-kind volume (f32).
pub fn probabilities_to_volume(probs: &[f64], reference: &Volume) -> Volume {
    let data: Vec<f32> = probs.iter().map(|&p| (p as f32).clamp(0.0, 1.0)).collect();
    Volume::new(
        reference.dims(),
        reference.spacing(),
        *reference.orientation(),
        VoxelKind::Probability,
        data,
    )
    .expect("probabilities are in range")
}

/// Thresholded prediction: voxels with `p >= threshold` (inclusive) get
/// `class`. The feature set (local/global) follows the parameter count.
pub fn predict(
    params: &SegmenterParams,
    v: &Volume,
    threshold: f64,
    class: TissueClass,
) -> Result<Mask, SegmenterError> {
    let features = if params.weights.len() == NUM_GLOBAL_FEATURES {
        extract_features_global(v)
    } else {
        extract_features(v)
    };
    let probs = forward(params, &features)?;
    let fg: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
    Ok(
        Mask::from_foreground(v.dims(), v.spacing(), *v.orientation(), &fg, class)
            .expect("prediction mask geometry matches the volume"),
    )
}

/// Adam state with a cosine-annealed learning-rate schedule.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub total_steps: u64,
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: f64,
    v_b: f64,
}

impl OptimizerState {
    pub fn new(num_weights: usize, base_lr: f64, weight_decay: f64, total_steps: u64) -> Self {
        OptimizerState {
            step: 0,
            base_lr,
            weight_decay,
            total_steps: total_steps.max(1),
            m_w: vec![0.0; num_weights],
            v_w: vec![0.0; num_weights],
            m_b: 0.0,
            v_b: 0.0,
        }
    }

    /// Learning rate at this state's current step.
    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.base_lr, self.step, self.total_steps)
    }
}

/// Cosine annealing: `base * (1 + cos(pi * t / T)) / 2`; `base` at t = 0,
/// 0 at t = T.
pub fn cosine_lr(base: f64, step: u64, total_steps: u64) -> f64 {
    let t = (step.min(total_steps)) as f64 / total_steps as f64;
    base * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

/// One training sample for the logistic model.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: FeatureStack,
    pub target: Vec<bool>,
    /// Weak-loss support region (liver ∪ tumor voxels of the crop).
    pub region: Option<Vec<bool>>,
    /// Clinically predicted TLVR for this patient.
    pub r_hat: f64,
}

/// Validation sample; evaluated with clean targets and no postprocessing.
#[derive(Debug, Clone)]
pub struct ValSample {
    pub features: FeatureStack,
    pub target: Vec<bool>,
}

/// One Adam step on a single sample: combined loss, chain rule through the
/// sigmoid, bias-corrected moments, decoupled weight decay.
pub fn train_step(
    params: &mut SegmenterParams,
    opt: &mut OptimizerState,
    sample: &TrainSample,
    w: &LossWeights,
    fp: &FocalParams,
) -> Result<LossBundle, SegmenterError> {
    let probs = forward(params, &sample.features)?;
    let bundle = combined_loss(
        &probs,
        &sample.target,
        sample.region.as_deref(),
        sample.r_hat,
        w,
        fp,
    )?;

    let num_features = params.weights.len();
    let mut g_w = vec![0.0; num_features];
    let mut g_b = 0.0;
    for i in 0..probs.len() {
        let dz = bundle.grad[i] * probs[i] * (1.0 - probs[i]);
        let f = sample.features.voxel(i);
        for (gw, &x) in g_w.iter_mut().zip(f) {
            *gw += dz * x;
        }
        g_b += dz;
    }
    if g_w.iter().any(|g| !g.is_finite()) || !g_b.is_finite() {
        return Err(SegmenterError::NonFiniteGradient { step: opt.step });
    }

    let lr = opt.current_lr();
    let t = (opt.step + 1) as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for j in 0..num_features {
        opt.m_w[j] = BETA1 * opt.m_w[j] + (1.0 - BETA1) * g_w[j];
        opt.v_w[j] = BETA2 * opt.v_w[j] + (1.0 - BETA2) * g_w[j] * g_w[j];
        let update = (opt.m_w[j] / bc1) / ((opt.v_w[j] / bc2).sqrt() + ADAM_EPS);
        params.weights[j] -= lr * update + lr * opt.weight_decay * params.weights[j];
    }
    opt.m_b = BETA1 * opt.m_b + (1.0 - BETA1) * g_b;
    opt.v_b = BETA2 * opt.v_b + (1.0 - BETA2) * g_b * g_b;
    let update = (opt.m_b / bc1) / ((opt.v_b / bc2).sqrt() + ADAM_EPS);
    params.bias -= lr * update + lr * opt.weight_decay * params.bias;
    opt.step += 1;
    Ok(bundle)
}

/// Training configuration (batch size is fixed at 1).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub weights: LossWeights,
    pub focal: FocalParams,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            base_lr: 1e-4,
            weight_decay: 1e-5,
            weights: LossWeights::default(),
            focal: FocalParams::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

/// Per-epoch mean loss terms and validation Dice.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub total: f64,
    pub dice: f64,
    pub focal: f64,
    pub weak: f64,
    /// NaN when no validation sample had a defined Dice.
    pub val_dice: f64,
}

/// Loss/metric trajectory of one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainingCurves {
    pub epochs: Vec<EpochStats>,
}

impl TrainingCurves {
    /// CSV with one row per epoch: epoch, total, dice, focal, weak, val_dice.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,dice,focal,weak,val_dice\n");
        for (e, s) in self.epochs.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
                e, s.total, s.dice, s.focal, s.weak, s.val_dice
            ));
        }
        out
    }

    pub fn final_stats(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

fn binary_dice(pred: &[bool], target: &[bool]) -> Option<f64> {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fneg = 0u64;
    for (&p, &t) in pred.iter().zip(target) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let den = 2 * tp + fp + fneg;
    if den == 0 {
        None
    } else {
        Some(2.0 * tp as f64 / den as f64)
    }
}

fn validation_dice(
    params: &SegmenterParams,
    val: &[ValSample],
    threshold: f64,
) -> Result<f64, SegmenterError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for sample in val {
        let probs = forward(params, &sample.features)?;
        let pred: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
        if let Some(d) = binary_dice(&pred, &sample.target) {
            sum += d;
            count += 1;
        }
    }
    Ok(if count == 0 { f64::NAN } else { sum / count as f64 })
}

/// Epoch loop with per-epoch shuffling, per-epoch validation Dice on
/// thresholded (postprocess-free) predictions, and best-validation
/// checkpointing. Reproducible bit-for-bit under a fixed seed.
pub fn train(
    samples: &[TrainSample],
    val: &[ValSample],
    cfg: &TrainConfig,
) -> Result<(SegmenterParams, TrainingCurves), SegmenterError> {
    assert!(!samples.is_empty(), "training set must be nonempty");
    let num_features = samples[0].features.num_features();
    let mut params = SegmenterParams::zeros(num_features);
    let mut opt = OptimizerState::new(
        num_features,
        cfg.base_lr,
        cfg.weight_decay,
        (cfg.epochs * samples.len()) as u64,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curves = TrainingCurves::default();
    let mut best: Option<(f64, SegmenterParams)> = None;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        for &i in &order {
            let bundle = train_step(&mut params, &mut opt, &samples[i], &cfg.weights, &cfg.focal)?;
            sums[0] += bundle.total;
            sums[1] += bundle.dice;
            sums[2] += bundle.focal;
            sums[3] += bundle.weak;
        }
        let inv = 1.0 / samples.len() as f64;
        let val_dice = validation_dice(&params, val, cfg.threshold)?;
        curves.epochs.push(EpochStats {
            total: sums[0] * inv,
            dice: sums[1] * inv,
            focal: sums[2] * inv,
            weak: sums[3] * inv,
            val_dice,
        });
        if val_dice.is_finite() && best.as_ref().map_or(true, |(b, _)| val_dice > *b) {
            best = Some((val_dice, params.clone()));
        }
    }

    let final_params = best.map(|(_, p)| p).unwrap_or(params);
    Ok((final_params, curves))
}
