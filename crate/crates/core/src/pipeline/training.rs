//! Training-set assembly from phantoms: task-specific preprocessing chains,
//! label-noise injection, and the liver/tumor model training entry points.
//!
//! The tumor model trains on crops around the ground-truth liver region
//! (prediction-time crops come from the predicted liver instead), with the
//! clinically predicted TLVR as its weak label. Liver-task targets are the
//! whole organ (liver ∪ tumor).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::PipelineConfig;
use super::phantom::PhantomSample;
use super::PipelineError;
use crate::losses::LossWeights;
use crate::postprocess::{dilate_class, erode_class};
use crate::preprocess::{
    liver_bbox, mask_outside_liver, standardize_orientation, standardize_orientation_mask,
    window_and_normalize, BoundingBox, CropMode, CropPlan,
};
use crate::segmenter::{
    extract_features, extract_features_global, train, SegmenterParams, TrainConfig, TrainSample,
    TrainingCurves, ValSample,
};
use crate::volio::{Mask, TissueClass};

/// Merges disjoint liver/tumor masks into one organ mask (labels 0/1/2).
/// Tumor wins where both claim a voxel.
pub fn organ_mask(liver: &Mask, tumor: &Mask) -> Mask {
    assert!(liver.aligned_with(tumor), "organ masks must be aligned");
    let labels: Vec<u8> = (0..liver.num_voxels())
        .map(|i| {
            if tumor.class_at(i) == TissueClass::Tumor {
                2
            } else if liver.class_at(i) == TissueClass::Liver {
                1
            } else {
                0
            }
        })
        .collect();
    Mask::new(
        liver.dims(),
        liver.spacing(),
        *liver.orientation(),
        labels,
        crate::volio::standard_label_map(),
    )
    .expect("merged mask preserves geometry")
}

/// Label noise for regularization experiments: a fair coin picks dilation
/// or erosion of the tumor class by one 6-neighborhood pass.
pub fn apply_label_noise(tumor: &Mask, seed: u64) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.gen_bool(0.5) {
        dilate_class(tumor, TissueClass::Tumor, 1)
    } else {
        erode_class(tumor, TissueClass::Tumor, 1)
    }
}

fn liver_inputs(
    ph: &PhantomSample,
    cfg: &PipelineConfig,
    mode: CropMode,
) -> Result<(crate::segmenter::FeatureStack, Vec<bool>), PipelineError> {
    let oriented = standardize_orientation(&ph.volume);
    let norm = window_and_normalize(&oriented, cfg.liver_window())?;
    let organ = organ_mask(
        &standardize_orientation_mask(&ph.liver),
        &standardize_orientation_mask(&ph.tumor),
    );
    let plan = CropPlan::compute(BoundingBox::full(norm.dims()), cfg.liver_crop, mode);
    let crop = plan.apply_to_volume(&norm);
    let organ_crop = plan.apply_to_mask(&organ);
    let target: Vec<bool> = (0..organ_crop.num_voxels())
        .map(|i| organ_crop.is_foreground(i))
        .collect();
    Ok((extract_features_global(&crop), target))
}

/// Global-task sample: whole-volume liver-window crop, organ target.
pub fn build_liver_sample(
    ph: &PhantomSample,
    cfg: &PipelineConfig,
    mode: CropMode,
) -> Result<TrainSample, PipelineError> {
    let (features, target) = liver_inputs(ph, cfg, mode)?;
    Ok(TrainSample {
        features,
        target,
        region: None,
        r_hat: 0.0,
    })
}

pub fn build_liver_val_sample(
    ph: &PhantomSample,
    cfg: &PipelineConfig,
) -> Result<ValSample, PipelineError> {
    let (features, target) = liver_inputs(ph, cfg, CropMode::Center)?;
    Ok(ValSample { features, target })
}

/// Options for tumor-sample assembly.
#[derive(Debug, Clone, Copy)]
pub struct TumorSampleOptions {
    /// Clinically predicted TLVR (the weak label).
    pub r_hat: f64,
    /// Inject label noise with this seed (training-time only).
    pub noise_seed: Option<u64>,
    pub crop_mode: CropMode,
}

/// Local-task sample: tumor-window normalization, masking outside the
/// ground-truth organ, organ-bbox crop; target is the (optionally noisy)
/// tumor class, region the organ voxels of the crop.
pub fn build_tumor_sample(
    ph: &PhantomSample,
    cfg: &PipelineConfig,
    opts: &TumorSampleOptions,
) -> Result<TrainSample, PipelineError> {
    let oriented = standardize_orientation(&ph.volume);
    let liver = standardize_orientation_mask(&ph.liver);
    let tumor = standardize_orientation_mask(&ph.tumor);
    let organ = organ_mask(&liver, &tumor);

    let target_mask = match opts.noise_seed {
        Some(seed) => apply_label_noise(&tumor, seed),
        None => tumor,
    };

    let norm = window_and_normalize(&oriented, cfg.tumor_window())?;
    let masked = mask_outside_liver(&norm, &organ)?;
    let bbox = liver_bbox(&organ, cfg.bbox_margin)?;
    let plan = CropPlan::compute(bbox, cfg.tumor_crop, opts.crop_mode);
    let crop = plan.apply_to_volume(&masked);
    let target_crop = plan.apply_to_mask(&target_mask);
    let organ_crop = plan.apply_to_mask(&organ);

    let target: Vec<bool> = (0..target_crop.num_voxels())
        .map(|i| target_crop.class_at(i) == TissueClass::Tumor)
        .collect();
    let region: Vec<bool> = (0..organ_crop.num_voxels())
        .map(|i| organ_crop.is_foreground(i))
        .collect();
    Ok(TrainSample {
        features: extract_features(&crop),
        target,
        region: Some(region),
        r_hat: opts.r_hat,
    })
}

/// Clean-label centered-crop validation counterpart.
pub fn build_tumor_val_sample(
    ph: &PhantomSample,
    cfg: &PipelineConfig,
) -> Result<ValSample, PipelineError> {
    let sample = build_tumor_sample(
        ph,
        cfg,
        &TumorSampleOptions {
            r_hat: 0.0,
            noise_seed: None,
            crop_mode: CropMode::Center,
        },
    )?;
    Ok(ValSample {
        features: sample.features,
        target: sample.target,
    })
}

fn train_config(cfg: &PipelineConfig, weights: LossWeights, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        base_lr: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        weights,
        focal: cfg.focal(),
        threshold: cfg.threshold,
        seed,
    }
}

/// Trains the global liver model (no weak term).
pub fn train_liver_model(
    cohort: &[PhantomSample],
    val: &[PhantomSample],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(SegmenterParams, TrainingCurves), PipelineError> {
    let samples: Vec<TrainSample> = cohort
        .iter()
        .enumerate()
        .map(|(i, ph)| build_liver_sample(ph, cfg, CropMode::Random(seed_from_index(seed, i))))
        .collect::<Result<_, _>>()?;
    let val_samples: Vec<ValSample> = val
        .iter()
        .map(|ph| build_liver_val_sample(ph, cfg))
        .collect::<Result<_, _>>()?;
    let weights = LossWeights::new(cfg.lambda_focal, cfg.lambda_dice, 0.0);
    let tc = train_config(cfg, weights, seed);
    Ok(train(&samples, &val_samples, &tc)?)
}

/// Trains the local tumor model. `lambda_weak` overrides the config's weak
/// weight (ablation arms switch it off); `noisy_labels` injects per-sample
/// dilation/erosion noise.
pub fn train_tumor_model(
    cohort: &[PhantomSample],
    r_hats: &[f64],
    val: &[PhantomSample],
    cfg: &PipelineConfig,
    seed: u64,
    lambda_weak: f64,
    noisy_labels: bool,
) -> Result<(SegmenterParams, TrainingCurves), PipelineError> {
    assert_eq!(cohort.len(), r_hats.len());
    let samples: Vec<TrainSample> = cohort
        .iter()
        .zip(r_hats)
        .enumerate()
        .map(|(i, (ph, &r_hat))| {
            build_tumor_sample(
                ph,
                cfg,
                &TumorSampleOptions {
                    r_hat,
                    noise_seed: noisy_labels.then(|| seed_from_index(seed, 7000 + i)),
                    crop_mode: CropMode::Random(seed_from_index(seed, 100 + i)),
                },
            )
        })
        .collect::<Result<_, _>>()?;
    let val_samples: Vec<ValSample> = val
        .iter()
        .map(|ph| build_tumor_val_sample(ph, cfg))
        .collect::<Result<_, _>>()?;
    let weights = LossWeights::new(cfg.lambda_focal, cfg.lambda_dice, lambda_weak);
    let tc = train_config(cfg, weights, seed);
    Ok(train(&samples, &val_samples, &tc)?)
}

/// Stable per-sample seed derivation.
pub fn seed_from_index(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
}
