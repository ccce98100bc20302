//! Ablation harness: trains the multiclass proxy and the two-step variants
//! (with/without weak-label smoothing, with/without contour refinement)
//! under identical seeds and reports the cohort table.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::PipelineConfig;
use super::phantom::{generate_cohort, PhantomSample, PhantomSpec, TissueStats};
use super::training::{
    apply_label_noise, organ_mask, seed_from_index, train_liver_model, train_tumor_model,
};
use super::two_step::{evaluate_two_step, run_two_step, TwoStepOutput};
use super::PipelineError;
use crate::clinical::{fit_linear, predict_tlvr};
use crate::metrics::{aggregate, cohort_csv, evaluate_volume, CohortRow, Scores};
use crate::preprocess::{standardize_orientation, standardize_orientation_mask, window_and_normalize};
use crate::segmenter::{extract_features_global, FeatureStack};
use crate::volio::{Mask, Volume};

/// Ablation arm names, in reporting order.
pub const ABLATION_METHODS: [&str; 5] = [
    "multiclass",
    "two_step",
    "two_step+smoothing",
    "two_step+contour",
    "two_step+contour+smoothing",
];

/// 3-class softmax logistic over the global feature stack — the stand-in
/// for a single multi-class segmentation model.
#[derive(Debug, Clone)]
pub struct MulticlassParams {
    /// `weights[c]` is the feature weight vector of class c.
    pub weights: [Vec<f64>; 3],
    pub bias: [f64; 3],
}

impl MulticlassParams {
    fn zeros(num_features: usize) -> Self {
        MulticlassParams {
            weights: [
                vec![0.0; num_features],
                vec![0.0; num_features],
                vec![0.0; num_features],
            ],
            bias: [0.0; 3],
        }
    }
}

fn softmax3(z: [f64; 3]) -> [f64; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

fn multiclass_logits(params: &MulticlassParams, f: &[f64]) -> [f64; 3] {
    let mut z = params.bias;
    for c in 0..3 {
        z[c] += params.weights[c]
            .iter()
            .zip(f)
            .map(|(w, x)| w * x)
            .sum::<f64>();
    }
    z
}

/// Mean softmax cross-entropy step with Adam (same β/lr machinery as the
/// binary model, inlined for the 3-class case).
struct MulticlassAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    base_lr: f64,
    weight_decay: f64,
    total_steps: u64,
}

impl MulticlassAdam {
    fn new(n_params: usize, base_lr: f64, weight_decay: f64, total_steps: u64) -> Self {
        MulticlassAdam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            base_lr,
            weight_decay,
            total_steps: total_steps.max(1),
        }
    }

    fn apply(&mut self, theta: &mut [f64], grad: &[f64]) {
        let lr = crate::segmenter::cosine_lr(self.base_lr, self.step, self.total_steps);
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - 0.9f64.powi(t);
        let bc2 = 1.0 - 0.999f64.powi(t);
        for j in 0..theta.len() {
            self.m[j] = 0.9 * self.m[j] + 0.1 * grad[j];
            self.v[j] = 0.999 * self.v[j] + 0.001 * grad[j] * grad[j];
            let update = (self.m[j] / bc1) / ((self.v[j] / bc2).sqrt() + 1e-8);
            theta[j] -= lr * update + lr * self.weight_decay * theta[j];
        }
        self.step += 1;
    }
}

fn flatten(params: &MulticlassParams) -> Vec<f64> {
    let mut theta = Vec::with_capacity(3 * (params.weights[0].len() + 1));
    for c in 0..3 {
        theta.extend_from_slice(&params.weights[c]);
        theta.push(params.bias[c]);
    }
    theta
}

fn unflatten(theta: &[f64], num_features: usize) -> MulticlassParams {
    let stride = num_features + 1;
    let mut params = MulticlassParams::zeros(num_features);
    for c in 0..3 {
        params.weights[c].copy_from_slice(&theta[c * stride..c * stride + num_features]);
        params.bias[c] = theta[c * stride + num_features];
    }
    params
}

/// Trains the 3-class proxy on (features, per-voxel class) samples.
pub fn train_multiclass(
    samples: &[(FeatureStack, Vec<u8>)],
    cfg: &PipelineConfig,
    seed: u64,
) -> MulticlassParams {
    assert!(!samples.is_empty());
    let num_features = samples[0].0.num_features();
    let stride = num_features + 1;
    let mut theta = flatten(&MulticlassParams::zeros(num_features));
    let mut opt = MulticlassAdam::new(
        theta.len(),
        cfg.learning_rate,
        cfg.weight_decay,
        (cfg.epochs * samples.len()) as u64,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (features, labels) = &samples[i];
            let params = unflatten(&theta, num_features);
            let n = features.num_voxels() as f64;
            let mut grad = vec![0.0; theta.len()];
            for vx in 0..features.num_voxels() {
                let f = features.voxel(vx);
                let probs = softmax3(multiclass_logits(&params, f));
                let y = labels[vx] as usize;
                for c in 0..3 {
                    let d = (probs[c] - if c == y { 1.0 } else { 0.0 }) / n;
                    for (j, &x) in f.iter().enumerate() {
                        grad[c * stride + j] += d * x;
                    }
                    grad[c * stride + num_features] += d;
                }
            }
            opt.apply(&mut theta, &grad);
        }
    }
    unflatten(&theta, num_features)
}

/// Argmax prediction over the three classes.
pub fn predict_multiclass(params: &MulticlassParams, features: &FeatureStack) -> Vec<u8> {
    (0..features.num_voxels())
        .map(|i| {
            let z = multiclass_logits(params, features.voxel(i));
            let mut best = 0usize;
            for c in 1..3 {
                if z[c] > z[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

fn multiclass_input(v: &Volume, cfg: &PipelineConfig) -> Result<FeatureStack, PipelineError> {
    let oriented = standardize_orientation(v);
    let norm = window_and_normalize(&oriented, cfg.liver_window())?;
    Ok(extract_features_global(&norm))
}

fn multiclass_labels(ph: &PhantomSample, noise_seed: Option<u64>) -> Vec<u8> {
    let liver = standardize_orientation_mask(&ph.liver);
    let tumor = standardize_orientation_mask(&ph.tumor);
    let tumor = match noise_seed {
        Some(seed) => apply_label_noise(&tumor, seed),
        None => tumor,
    };
    organ_mask(&liver, &tumor).labels().to_vec()
}

fn mask_from_labels(ph: &PhantomSample, labels: &[u8]) -> Result<Mask, PipelineError> {
    let oriented = standardize_orientation(&ph.volume);
    Ok(Mask::new(
        oriented.dims(),
        oriented.spacing(),
        *oriented.orientation(),
        labels.to_vec(),
        crate::volio::standard_label_map(),
    )?)
}

/// Ablation results: the cohort table plus per-seed mean tumor Dice per
/// method (the ordinal comparisons feed on these).
#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub rows: Vec<CohortRow>,
    pub per_seed_tumor_dice: BTreeMap<String, Vec<f64>>,
    pub csv: String,
}

struct ScoreBag {
    liver: Vec<Scores>,
    tumor: Vec<Scores>,
}

/// Runs all five arms on explicit train/test cohorts. Training labels for
/// the tumor task carry injected dilation/erosion noise (the weak-label
/// smoothing arms are meant to counteract exactly that); evaluation uses
/// clean ground truth.
pub fn run_ablation(
    train_set: &[PhantomSample],
    test_set: &[PhantomSample],
    cfg: &PipelineConfig,
    seeds: &[u64],
) -> Result<AblationOutcome, PipelineError> {
    assert!(train_set.len() >= 2 && test_set.len() >= 2, "need >= 2 train and test phantoms");
    let mut bags: BTreeMap<&str, ScoreBag> = ABLATION_METHODS
        .iter()
        .map(|&m| {
            (
                m,
                ScoreBag {
                    liver: Vec::new(),
                    tumor: Vec::new(),
                },
            )
        })
        .collect();
    let mut per_seed_tumor_dice: BTreeMap<String, Vec<f64>> = ABLATION_METHODS
        .iter()
        .map(|&m| (m.to_string(), Vec::new()))
        .collect();

    for &seed in seeds {
        // Clinical knowledge: fit on the training cohort, predict r-hat.
        let records: Vec<_> = train_set.iter().map(|p| p.record.clone()).collect();
        let tlvrs: Vec<f64> = train_set.iter().map(|p| p.tlvr).collect();
        let clinical = fit_linear(&records, &tlvrs)?;
        let r_hats: Vec<f64> = records.iter().map(|r| predict_tlvr(&clinical, r)).collect();

        let (liver_params, _) = train_liver_model(train_set, &[], cfg, seed)?;
        let (tumor_plain, _) =
            train_tumor_model(train_set, &r_hats, &[], cfg, seed, 0.0, true)?;
        let (tumor_smooth, _) =
            train_tumor_model(train_set, &r_hats, &[], cfg, seed, cfg.lambda_weak, true)?;

        let mc_samples: Vec<(FeatureStack, Vec<u8>)> = train_set
            .iter()
            .enumerate()
            .map(|(i, ph)| {
                Ok((
                    multiclass_input(&ph.volume, cfg)?,
                    multiclass_labels(ph, Some(seed_from_index(seed, 7000 + i))),
                ))
            })
            .collect::<Result<_, PipelineError>>()?;
        let mc_params = train_multiclass(&mc_samples, cfg, seed);

        let mut no_contour = cfg.clone();
        no_contour.contour_iterations = 0;
        let with_contour = cfg.clone();

        let eval_two_step =
            |method: &str,
             tumor_params: &crate::segmenter::SegmenterParams,
             variant_cfg: &PipelineConfig,
             bags: &mut BTreeMap<&str, ScoreBag>|
             -> Result<f64, PipelineError> {
                let mut dice_sum = 0.0;
                let mut dice_n = 0usize;
                for ph in test_set {
                    let out: TwoStepOutput =
                        run_two_step(&ph.volume, &liver_params, tumor_params, variant_cfg)?;
                    let report = evaluate_two_step(&out, &ph.liver, &ph.tumor)?;
                    let bag = bags.get_mut(method).expect("known method");
                    bag.liver.push(report.liver);
                    bag.tumor.push(report.tumor);
                    if let Some(d) = report.tumor.dice {
                        dice_sum += d;
                        dice_n += 1;
                    }
                }
                Ok(if dice_n == 0 { f64::NAN } else { dice_sum / dice_n as f64 })
            };

        let arms: [(&str, &crate::segmenter::SegmenterParams, &PipelineConfig); 4] = [
            ("two_step", &tumor_plain, &no_contour),
            ("two_step+smoothing", &tumor_smooth, &no_contour),
            ("two_step+contour", &tumor_plain, &with_contour),
            ("two_step+contour+smoothing", &tumor_smooth, &with_contour),
        ];
        for (method, params, variant_cfg) in arms {
            let mean_dice = eval_two_step(method, params, variant_cfg, &mut bags)?;
            per_seed_tumor_dice
                .get_mut(method)
                .expect("known method")
                .push(mean_dice);
        }

        // Multiclass arm: raw argmax, no task-specific postprocessing.
        let mut dice_sum = 0.0;
        let mut dice_n = 0usize;
        for ph in test_set {
            let features = multiclass_input(&ph.volume, cfg)?;
            let labels = predict_multiclass(&mc_params, &features);
            let pred = mask_from_labels(ph, &labels)?;
            let gl = standardize_orientation_mask(&ph.liver);
            let gt = standardize_orientation_mask(&ph.tumor);
            let report = evaluate_volume(&pred, &pred, &gl, &gt)?;
            let bag = bags.get_mut("multiclass").expect("known method");
            bag.liver.push(report.liver);
            bag.tumor.push(report.tumor);
            if let Some(d) = report.tumor.dice {
                dice_sum += d;
                dice_n += 1;
            }
        }
        per_seed_tumor_dice
            .get_mut("multiclass")
            .expect("known method")
            .push(if dice_n == 0 { f64::NAN } else { dice_sum / dice_n as f64 });
    }

    let mut rows = Vec::new();
    for &method in &ABLATION_METHODS {
        let bag = &bags[method];
        for (class, scores) in [("liver", &bag.liver), ("tumor", &bag.tumor)] {
            rows.push(CohortRow {
                method: method.to_string(),
                class: class.to_string(),
                accuracy: aggregate(scores.iter().map(|s| s.accuracy)).map(|a| a.mean),
                dice: aggregate(scores.iter().map(|s| s.dice)).map(|a| a.mean),
                sensitivity: aggregate(scores.iter().map(|s| s.sensitivity)).map(|a| a.mean),
                iou: aggregate(scores.iter().map(|s| s.iou)).map(|a| a.mean),
            });
        }
    }
    let csv = cohort_csv(&rows);
    Ok(AblationOutcome {
        rows,
        per_seed_tumor_dice,
        csv,
    })
}

impl PhantomSpec {
    /// Low liver/tumor contrast and heavier noise: the regime where
    /// boundary refinement and weak-label smoothing earn their keep.
    pub fn low_contrast() -> Self {
        PhantomSpec {
            hu_liver: TissueStats { mean: 50.0, std: 18.0 },
            hu_tumor: TissueStats { mean: 145.0, std: 18.0 },
            hu_background: TissueStats { mean: -100.0, std: 18.0 },
            blur_sigma: 1.0,
            ..PhantomSpec::default()
        }
    }

    /// Clean separation for the end-to-end sanity gate.
    pub fn high_contrast() -> Self {
        PhantomSpec {
            hu_liver: TissueStats { mean: 60.0, std: 8.0 },
            hu_tumor: TissueStats { mean: 200.0, std: 8.0 },
            hu_background: TissueStats { mean: -110.0, std: 10.0 },
            blur_sigma: 0.5,
            ..PhantomSpec::default()
        }
    }
}

/// The standard ablation protocol: a low-contrast phantom cohort (6 train,
/// 4 test) derived from the config seed.
pub fn run_ablation_protocol(
    cfg: &PipelineConfig,
    seeds: &[u64],
) -> Result<AblationOutcome, PipelineError> {
    let mut proto = cfg.clone();
    proto.phantom = PhantomSpec::low_contrast();
    let train_set = generate_cohort(&proto.phantom, 6, proto.seed.wrapping_add(1000))?;
    let test_set = generate_cohort(&proto.phantom, 4, proto.seed.wrapping_add(2000))?;
    run_ablation(&train_set, &test_set, &proto, seeds)
}
