//! Two-step inference: the global branch segments the liver from the whole
//! abdomen and cleans it up (largest component, fill holes); the local
//! branch crops to the predicted liver, segments the tumor inside it, and
//! refines the boundary with the active contour. Clinical features are
//! never consumed here — the weak label exists only at training time.

use super::config::PipelineConfig;
use super::PipelineError;
use crate::metrics::{evaluate_volume, MetricsReport};
use crate::postprocess::{
    active_contour_refine, fill_holes, largest_component, PostprocessError,
};
use crate::preprocess::{
    liver_bbox, mask_outside_liver, standardize_orientation, standardize_orientation_mask,
    window_and_normalize, CropMode, CropPlan,
};
use crate::segmenter::{predict, SegmenterParams};
use crate::volio::{Mask, TissueClass, Volume};

/// Two-step inference result, in standardized (R/A/S) orientation.
#[derive(Debug, Clone)]
pub struct TwoStepOutput {
    pub liver: Mask,
    pub tumor: Mask,
    pub warnings: Vec<String>,
}

/// Full two-step inference on an HU volume.
pub fn run_two_step(
    v: &Volume,
    liver_params: &SegmenterParams,
    tumor_params: &SegmenterParams,
    cfg: &PipelineConfig,
) -> Result<TwoStepOutput, PipelineError> {
    let oriented = standardize_orientation(v);
    let mut warnings = Vec::new();

    // Global branch: whole-volume liver prediction plus anatomical cleanup.
    let norm = window_and_normalize(&oriented, cfg.liver_window())?;
    let raw = predict(liver_params, &norm, cfg.threshold, TissueClass::Liver)?;
    let liver = fill_holes(
        &largest_component(&raw, TissueClass::Liver),
        TissueClass::Liver,
    );

    if liver.count_class(TissueClass::Liver) == 0 {
        warnings.push("empty liver prediction; tumor segmentation skipped".into());
        let tumor = Mask::from_foreground(
            liver.dims(),
            liver.spacing(),
            *liver.orientation(),
            &vec![false; liver.num_voxels()],
            TissueClass::Tumor,
        )?;
        return Ok(TwoStepOutput {
            liver,
            tumor,
            warnings,
        });
    }

    let (tumor, mut local_warnings) = run_local_branch(&oriented, &liver, tumor_params, cfg)?;
    warnings.append(&mut local_warnings);
    Ok(TwoStepOutput {
        liver,
        tumor,
        warnings,
    })
}

/// Local branch against a given liver mask (predicted at inference time;
/// callers may pass ground truth for training-mode evaluation).
pub fn run_local_branch(
    oriented: &Volume,
    liver: &Mask,
    tumor_params: &SegmenterParams,
    cfg: &PipelineConfig,
) -> Result<(Mask, Vec<String>), PipelineError> {
    let mut warnings = Vec::new();
    let norm = window_and_normalize(oriented, cfg.tumor_window())?;
    let masked = mask_outside_liver(&norm, liver)?;
    let bbox = liver_bbox(liver, cfg.bbox_margin)?;
    let plan = CropPlan::compute(bbox, cfg.tumor_crop, CropMode::Center);
    let crop = plan.apply_to_volume(&masked);

    let raw = predict(tumor_params, &crop, cfg.threshold, TissueClass::Tumor)?;
    let refined = if cfg.contour_iterations == 0 {
        raw
    } else {
        match active_contour_refine(&crop, &raw, &cfg.contour()) {
            Ok(outcome) => {
                if outcome.degenerate {
                    warnings.push("active contour degenerated; kept last valid mask".into());
                }
                outcome.mask
            }
            // Nothing (or everything) predicted: no boundary to refine.
            Err(PostprocessError::DegenerateInit) => raw,
            Err(e) => return Err(e.into()),
        }
    };

    let tumor = crate::preprocess::embed_mask(
        &refined,
        plan.origin,
        oriented.dims(),
        oriented.spacing(),
        *oriented.orientation(),
    );
    Ok((tumor, warnings))
}

/// Scores a two-step output against ground truth (masks standardized to the
/// output's orientation first).
pub fn evaluate_two_step(
    out: &TwoStepOutput,
    gt_liver: &Mask,
    gt_tumor: &Mask,
) -> Result<MetricsReport, PipelineError> {
    let gl = standardize_orientation_mask(gt_liver);
    let gt = standardize_orientation_mask(gt_tumor);
    Ok(evaluate_volume(&out.liver, &out.tumor, &gl, &gt)?)
}
