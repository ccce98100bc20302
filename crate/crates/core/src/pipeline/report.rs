//! Rule-based segmentation summary: lesion inventory, sizes, TLVR, and a
//! deterministic text report with a structured JSON twin.

use serde::Serialize;

use super::PipelineError;
use crate::clinical::compute_tlvr;
use crate::metrics::{class_volume_cm3, stratify_by_volume, SizeClass};
use crate::postprocess::connected_components;
use crate::volio::{ClinicalRecord, Mask, TissueClass};

/// One connected tumor component.
#[derive(Debug, Clone, Serialize)]
pub struct LesionInfo {
    pub volume_cm3: f64,
    /// Largest axis-aligned extent in cm.
    pub diameter_cm: f64,
}

/// Structured summary; `text` is the rendered template.
#[derive(Debug, Clone, Serialize)]
pub struct TumorReport {
    pub patient_id: Option<String>,
    pub lesion_count: usize,
    /// Sorted by diameter, descending.
    pub lesions: Vec<LesionInfo>,
    pub largest_diameter_cm: f64,
    pub total_tumor_volume_cm3: f64,
    pub liver_volume_cm3: f64,
    pub tlvr: f64,
    pub size_class: String,
    pub text: String,
}

fn sig3(x: f64) -> String {
    if x == 0.0 {
        return "0.00".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Lesion inventory and TLVR from aligned liver/tumor masks. The clinical
/// record contributes only identifying context; segmentation-derived values
/// never depend on it.
pub fn emit_report(
    liver: &Mask,
    tumor: &Mask,
    record: Option<&ClinicalRecord>,
) -> Result<TumorReport, PipelineError> {
    let tlvr = compute_tlvr(liver, tumor)?;
    let spacing = tumor.spacing();
    let voxel_cm3 = spacing.iter().map(|&s| s as f64).product::<f64>() / 1000.0;
    let dims = tumor.dims();

    let mut lesions: Vec<LesionInfo> = connected_components(tumor, TissueClass::Tumor)
        .into_iter()
        .map(|component| {
            let mut min = dims;
            let mut max = [0usize; 3];
            for &i in &component {
                let x = i % dims[0];
                let y = (i / dims[0]) % dims[1];
                let z = i / (dims[0] * dims[1]);
                let p = [x, y, z];
                for a in 0..3 {
                    min[a] = min[a].min(p[a]);
                    max[a] = max[a].max(p[a]);
                }
            }
            let diameter_cm = (0..3)
                .map(|a| (max[a] - min[a] + 1) as f64 * spacing[a] as f64 / 10.0)
                .fold(0.0, f64::max);
            LesionInfo {
                volume_cm3: component.len() as f64 * voxel_cm3,
                diameter_cm,
            }
        })
        .collect();
    lesions.sort_by(|a, b| b.diameter_cm.total_cmp(&a.diameter_cm));

    let total_tumor_volume_cm3 = class_volume_cm3(tumor, TissueClass::Tumor);
    let liver_volume_cm3 = class_volume_cm3(liver, TissueClass::Liver);
    let largest_diameter_cm = lesions.first().map_or(0.0, |l| l.diameter_cm);
    let size_class = stratify_by_volume(total_tumor_volume_cm3);

    let mut text = String::new();
    match record {
        Some(r) => text.push_str(&format!("Segmentation summary for patient {}\n", r.patient_id)),
        None => text.push_str("Segmentation summary\n"),
    }
    if lesions.is_empty() {
        text.push_str("No lesion detected.\n");
        text.push_str(&format!("Liver volume: {} cm3\n", sig3(liver_volume_cm3)));
        text.push_str("Tumor-to-liver volume ratio: 0.00\n");
    } else {
        text.push_str(&format!("Lesion count: {}\n", lesions.len()));
        text.push_str(&format!(
            "Largest lesion diameter: {} cm\n",
            sig3(largest_diameter_cm)
        ));
        let volumes: Vec<String> = lesions.iter().map(|l| sig3(l.volume_cm3)).collect();
        text.push_str(&format!("Lesion volumes (cm3): {}\n", volumes.join(", ")));
        text.push_str(&format!(
            "Total tumor volume: {} cm3\n",
            sig3(total_tumor_volume_cm3)
        ));
        text.push_str(&format!("Liver volume: {} cm3\n", sig3(liver_volume_cm3)));
        text.push_str(&format!("Tumor-to-liver volume ratio: {}\n", sig3(tlvr)));
        text.push_str(&format!("Size class: {}\n", size_class.as_str()));
    }
    if let Some(r) = record {
        if let Some(afp) = r.feature("afp") {
            text.push_str(&format!("Clinical context: AFP {} ng/ml", sig3(afp)));
            if let Some(clip) = r.feature("clip_score") {
                text.push_str(&format!(", CLIP score {clip:.0}"));
            }
            text.push('\n');
        }
    }

    Ok(TumorReport {
        patient_id: record.map(|r| r.patient_id.clone()),
        lesion_count: lesions.len(),
        lesions,
        largest_diameter_cm,
        total_tumor_volume_cm3,
        liver_volume_cm3,
        tlvr,
        size_class: match size_class {
            SizeClass::Small => "small",
            SizeClass::Large => "large",
            SizeClass::NA => "n/a",
        }
        .to_string(),
        text,
    })
}

impl TumorReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
