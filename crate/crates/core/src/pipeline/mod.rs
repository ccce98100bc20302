//! End-to-end orchestration: the two-step global/local segmentation flow,
//! phantom data generation, training-set assembly, the ablation and
//! weak-label regularization experiments, and report emission.

mod ablation;
mod config;
mod phantom;
mod report;
mod smoothing;
mod training;
mod two_step;

pub use ablation::{
    run_ablation, run_ablation_protocol, AblationOutcome, MulticlassParams, ABLATION_METHODS,
};
pub use config::PipelineConfig;
pub use phantom::{generate_cohort, generate_phantom, PhantomSample, PhantomSpec, TissueStats};
pub use report::{emit_report, LesionInfo, TumorReport};
pub use smoothing::{run_smoothing_experiment, run_smoothing_protocol, SmoothingOutcome, SmoothingRun};
pub use training::{
    apply_label_noise, build_liver_sample, build_liver_val_sample, build_tumor_sample,
    build_tumor_val_sample, organ_mask, train_liver_model, train_tumor_model,
};
pub use two_step::{evaluate_two_step, run_local_branch, run_two_step, TwoStepOutput};

use thiserror::Error;

use crate::clinical::ClinicalError;
use crate::losses::LossError;
use crate::metrics::MetricsError;
use crate::postprocess::PostprocessError;
use crate::preprocess::PreprocessError;
use crate::segmenter::SegmenterError;
use crate::volio::VolioError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("infeasible phantom spec: {0}")]
    InfeasibleSpec(String),
    #[error("bad pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Volio(#[from] VolioError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Clinical(#[from] ClinicalError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
