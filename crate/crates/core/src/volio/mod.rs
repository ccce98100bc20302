//! Volume/mask grid types and file ingestion (NIfTI-1 subset, clinical CSV).
//!
//! Voxel storage is x-fastest (NIfTI native): linear index
//! `x + dims[0] * (y + dims[1] * z)`. All grids are immutable after
//! construction and safe to share across threads.

mod clinical_csv;
mod nifti;
mod types;

pub use clinical_csv::{read_clinical_csv, ClinicalRecord, CLINICAL_FEATURES, NUM_CLINICAL_FEATURES};
pub use nifti::{read_mask_nifti, read_nifti, write_mask_nifti, write_nifti};
pub use types::{
    standard_label_map, Mask, Orientation, TissueClass, VoxelKind, Volume, LABEL_BACKGROUND,
    LABEL_LIVER, LABEL_TUMOR,
};

use thiserror::Error;

/// Errors from grid construction and file ingestion/emission.
#[derive(Debug, Error)]
pub enum VolioError {
    #[error("bad NIfTI magic {0:?} (expected \"n+1\\0\" or \"ni1\\0\")")]
    BadMagic([u8; 4]),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated file: need {expected} bytes, have {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("non-finite voxel value at linear index {index}")]
    NonFinite { index: usize },
    #[error("bad NIfTI header: {0}")]
    BadHeader(String),
    #[error("missing clinical column '{0}'")]
    MissingColumn(String),
    #[error("unknown clinical column '{0}' (pass allow_extra to skip)")]
    UnknownColumn(String),
    #[error("unparsable cell at data row {row}, column '{column}': {detail}")]
    UnparsableCell {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
