//! Weak-label regularization experiment: trains λ_weak ∈ {0, configured}
//! pairs per seed on a small noisy-label split and records loss/validation
//! trajectories, the material for the overfitting-reduction comparison.

use super::config::PipelineConfig;
use super::phantom::{generate_cohort, PhantomSample, PhantomSpec};
use super::training::train_tumor_model;
use super::PipelineError;
use crate::clinical::{fit_linear, predict_tlvr};
use crate::segmenter::TrainingCurves;

/// One training run of the pair.
#[derive(Debug, Clone)]
pub struct SmoothingRun {
    pub lambda_weak: f64,
    pub curves: TrainingCurves,
    /// Data-fit portion of the final epoch's training loss
    /// (λ_f·focal + λ_d·dice — comparable across runs, unlike the total,
    /// which includes the weak term only when λ_w > 0).
    pub final_fit_loss: f64,
    pub final_val_dice: f64,
}

/// Paired runs per seed plus the summary table.
#[derive(Debug, Clone)]
pub struct SmoothingOutcome {
    /// (seed, λ_w = 0 run, λ_w = configured run).
    pub per_seed: Vec<(u64, SmoothingRun, SmoothingRun)>,
    pub summary_csv: String,
}

impl SmoothingOutcome {
    /// Seeds where the regularized run kept a higher (or equal) final
    /// training data-fit loss — the smoother fits the noisy labels less
    /// tightly.
    pub fn seeds_with_higher_final_loss(&self) -> usize {
        self.per_seed
            .iter()
            .filter(|(_, base, weak)| weak.final_fit_loss >= base.final_fit_loss)
            .count()
    }

    pub fn mean_final_val_dice(&self) -> (f64, f64) {
        let n = self.per_seed.len() as f64;
        let base = self.per_seed.iter().map(|(_, b, _)| b.final_val_dice).sum::<f64>() / n;
        let weak = self.per_seed.iter().map(|(_, _, w)| w.final_val_dice).sum::<f64>() / n;
        (base, weak)
    }
}

fn run_one(
    train_set: &[PhantomSample],
    val_set: &[PhantomSample],
    r_hats: &[f64],
    cfg: &PipelineConfig,
    seed: u64,
    lambda_weak: f64,
) -> Result<SmoothingRun, PipelineError> {
    let (_, curves) = train_tumor_model(train_set, r_hats, val_set, cfg, seed, lambda_weak, true)?;
    let last = curves.final_stats().expect("at least one epoch");
    Ok(SmoothingRun {
        lambda_weak,
        final_fit_loss: cfg.lambda_focal * last.focal + cfg.lambda_dice * last.dice,
        final_val_dice: last.val_dice,
        curves,
    })
}

/// Trains the λ_w pair for every seed on a noisy-label split (≤ 8 train
/// phantoms); validation uses clean labels. Deterministic per seed.
pub fn run_smoothing_experiment(
    train_set: &[PhantomSample],
    val_set: &[PhantomSample],
    cfg: &PipelineConfig,
    seeds: &[u64],
) -> Result<SmoothingOutcome, PipelineError> {
    assert!(
        train_set.len() <= 8,
        "the regularization experiment is a small-data protocol"
    );
    let records: Vec<_> = train_set.iter().map(|p| p.record.clone()).collect();
    let tlvrs: Vec<f64> = train_set.iter().map(|p| p.tlvr).collect();
    let clinical = fit_linear(&records, &tlvrs)?;
    let r_hats: Vec<f64> = records.iter().map(|r| predict_tlvr(&clinical, r)).collect();

    let mut per_seed = Vec::new();
    for &seed in seeds {
        let base = run_one(train_set, val_set, &r_hats, cfg, seed, 0.0)?;
        let weak = run_one(train_set, val_set, &r_hats, cfg, seed, cfg.lambda_weak)?;
        per_seed.push((seed, base, weak));
    }

    let mut summary_csv =
        String::from("seed,lambda_weak,final_total,final_fit_loss,final_val_dice\n");
    for (seed, base, weak) in &per_seed {
        for run in [base, weak] {
            let last = run.curves.final_stats().expect("nonempty curves");
            summary_csv.push_str(&format!(
                "{seed},{},{:.9},{:.9},{:.9}\n",
                run.lambda_weak, last.total, run.final_fit_loss, run.final_val_dice
            ));
        }
    }
    Ok(SmoothingOutcome {
        per_seed,
        summary_csv,
    })
}

/// The standard protocol: 6 noisy-label training phantoms and 4 clean
/// validation phantoms at low contrast, derived from the config seed.
pub fn run_smoothing_protocol(
    cfg: &PipelineConfig,
    seeds: &[u64],
) -> Result<SmoothingOutcome, PipelineError> {
    let mut proto = cfg.clone();
    proto.phantom = PhantomSpec::low_contrast();
    let train_set = generate_cohort(&proto.phantom, 6, proto.seed.wrapping_add(3000))?;
    let val_set = generate_cohort(&proto.phantom, 4, proto.seed.wrapping_add(4000))?;
    run_smoothing_experiment(&train_set, &val_set, &proto, seeds)
}
