//! Class-wise segmentation evaluation: confusion counts, accuracy / Dice /
//! IoU / sensitivity, tumor size stratification, and cohort aggregation.
//!
//! Metrics with a zero denominator are reported as undefined (`None`) and
//! excluded from cohort means rather than zero-filled, which would bias
//! small-tumor rows.

use thiserror::Error;

use crate::volio::{Mask, TissueClass};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("masks are not aligned (dims/spacing/orientation differ)")]
    ShapeMismatch,
}

/// Voxelwise binary confusion for one class-vs-rest problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

/// Counts `class`-vs-rest agreement between prediction and ground truth.
pub fn confusion(pred: &Mask, gt: &Mask, class: TissueClass) -> Result<ConfusionCounts, MetricsError> {
    if !pred.aligned_with(gt) {
        return Err(MetricsError::ShapeMismatch);
    }
    let mut c = ConfusionCounts::default();
    for i in 0..pred.num_voxels() {
        match (pred.class_at(i) == class, gt.class_at(i) == class) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Per-class scores; `None` marks an undefined (zero-denominator) metric.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Scores {
    pub accuracy: Option<f64>,
    pub dice: Option<f64>,
    pub iou: Option<f64>,
    pub sensitivity: Option<f64>,
}

/// accuracy = (TP+TN)/total; dice = 2TP/(2TP+FP+FN); iou = TP/(TP+FP+FN);
/// sensitivity = TP/(TP+FN).
pub fn scores(c: &ConfusionCounts) -> Scores {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    Scores {
        accuracy: ratio(c.true_pos + c.true_neg, c.total()),
        dice: ratio(2 * c.true_pos, 2 * c.true_pos + c.false_pos + c.false_neg),
        iou: ratio(c.true_pos, c.true_pos + c.false_pos + c.false_neg),
        sensitivity: ratio(c.true_pos, c.true_pos + c.false_neg),
    }
}

/// Foreground volume of `class` in cm³ (`count · Π spacing / 1000`).
pub fn class_volume_cm3(m: &Mask, class: TissueClass) -> f64 {
    let count = m.count_class(class) as f64;
    let voxel_mm3 = m.spacing().iter().map(|&s| s as f64).product::<f64>();
    count * voxel_mm3 / 1000.0
}

/// Largest axis-aligned extent of `class` in cm (max over the three axes of
/// `(max_idx - min_idx + 1) · spacing`). 0 for an empty class.
pub fn max_axis_diameter_cm(m: &Mask, class: TissueClass) -> f64 {
    let dims = m.dims();
    let mut min = dims;
    let mut max = [0usize; 3];
    let mut any = false;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if m.class_at(m.index(x, y, z)) == class {
                    any = true;
                    let p = [x, y, z];
                    for a in 0..3 {
                        min[a] = min[a].min(p[a]);
                        max[a] = max[a].max(p[a]);
                    }
                }
            }
        }
    }
    if !any {
        return 0.0;
    }
    (0..3)
        .map(|a| (max[a] - min[a] + 1) as f64 * m.spacing()[a] as f64 / 10.0)
        .fold(0.0, f64::max)
}

/// Tumor size class for stratified reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    Small,
    Large,
    NA,
}

impl SizeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Large => "large",
            SizeClass::NA => "n/a",
        }
    }
}

/// Large iff volume ≥ 500 cm³; empty (0) is n/a.
pub fn stratify_by_volume(volume_cm3: f64) -> SizeClass {
    if volume_cm3 <= 0.0 {
        SizeClass::NA
    } else if volume_cm3 >= 500.0 {
        SizeClass::Large
    } else {
        SizeClass::Small
    }
}

/// Large iff diameter ≥ 10 cm; empty (0) is n/a.
pub fn stratify_by_diameter(diameter_cm: f64) -> SizeClass {
    if diameter_cm <= 0.0 {
        SizeClass::NA
    } else if diameter_cm >= 10.0 {
        SizeClass::Large
    } else {
        SizeClass::Small
    }
}

/// Per-volume evaluation of liver and tumor predictions against ground
/// truth, with the tumor size worked out from the ground-truth mask.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub liver: Scores,
    pub tumor: Scores,
    pub tumor_volume_cm3: f64,
    pub tumor_diameter_cm: f64,
    pub size_class: SizeClass,
}

pub fn evaluate_volume(
    pred_liver: &Mask,
    pred_tumor: &Mask,
    gt_liver: &Mask,
    gt_tumor: &Mask,
) -> Result<MetricsReport, MetricsError> {
    let liver = scores(&confusion(pred_liver, gt_liver, TissueClass::Liver)?);
    let tumor = scores(&confusion(pred_tumor, gt_tumor, TissueClass::Tumor)?);
    let tumor_volume_cm3 = class_volume_cm3(gt_tumor, TissueClass::Tumor);
    Ok(MetricsReport {
        liver,
        tumor,
        tumor_volume_cm3,
        tumor_diameter_cm: max_axis_diameter_cm(gt_tumor, TissueClass::Tumor),
        size_class: stratify_by_volume(tumor_volume_cm3),
    })
}

/// Mean and sample standard deviation over the defined entries only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub fn aggregate(values: impl IntoIterator<Item = Option<f64>>) -> Option<Aggregate> {
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    if defined.is_empty() {
        return None;
    }
    let n = defined.len();
    let mean = defined.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Some(Aggregate {
        mean,
        std,
        count: n,
    })
}

/// One row of a cohort table; `None` cells stay empty in the CSV.
#[derive(Debug, Clone)]
pub struct CohortRow {
    pub method: String,
    pub class: String,
    pub accuracy: Option<f64>,
    pub dice: Option<f64>,
    pub sensitivity: Option<f64>,
    pub iou: Option<f64>,
}

/// Exact cohort CSV header.
pub const COHORT_CSV_HEADER: &str = "method,class,accuracy,dice,sensitivity,iou";

/// Cohort CSV with the documented header; one row per (method, class).
pub fn cohort_csv(rows: &[CohortRow]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from(COHORT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method,
            r.class,
            fmt(r.accuracy),
            fmt(r.dice),
            fmt(r.sensitivity),
            fmt(r.iou)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volio::{standard_label_map, Mask, Orientation};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mask_of(labels: Vec<u8>, dims: [usize; 3], spacing: [f32; 3]) -> Mask {
        Mask::new(dims, spacing, Orientation::identity(), labels, standard_label_map()).unwrap()
    }

    #[test]
    fn identical_and_complement_masks() {
        let dims = [4, 4, 4];
        let labels: Vec<u8> = (0..64).map(|i| if i % 3 == 0 { 2 } else { 0 }).collect();
        let m = mask_of(labels.clone(), dims, [1.0; 3]);
        let c = confusion(&m, &m, TissueClass::Tumor).unwrap();
        assert_eq!(c.false_pos, 0);
        assert_eq!(c.false_neg, 0);
        assert_eq!(c.total(), 64);
        let s = scores(&c);
        assert_eq!(s.accuracy, Some(1.0));
        assert_eq!(s.dice, Some(1.0));
        assert_eq!(s.iou, Some(1.0));
        assert_eq!(s.sensitivity, Some(1.0));

        let flipped: Vec<u8> = labels.iter().map(|&l| if l == 2 { 0 } else { 2 }).collect();
        let f = mask_of(flipped, dims, [1.0; 3]);
        let c = confusion(&f, &m, TissueClass::Tumor).unwrap();
        assert_eq!(c.true_pos, 0);
        assert_eq!(c.true_neg, 0);
    }

    #[test]
    fn random_pair_matches_quadruple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = [4, 4, 4];
        for _ in 0..20 {
            let a: Vec<u8> = (0..64).map(|_| if rng.gen_bool(0.4) { 2 } else { 0 }).collect();
            let b: Vec<u8> = (0..64).map(|_| if rng.gen_bool(0.4) { 2 } else { 0 }).collect();
            let ma = mask_of(a.clone(), dims, [1.0; 3]);
            let mb = mask_of(b.clone(), dims, [1.0; 3]);
            let c = confusion(&ma, &mb, TissueClass::Tumor).unwrap();
            let (mut tp, mut tn, mut fp, mut fneg) = (0u64, 0u64, 0u64, 0u64);
            for i in 0..64 {
                match (a[i] == 2, b[i] == 2) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    (false, false) => tn += 1,
                }
            }
            assert_eq!(
                c,
                ConfusionCounts {
                    true_pos: tp,
                    true_neg: tn,
                    false_pos: fp,
                    false_neg: fneg
                }
            );
        }
    }

    #[test]
    fn direct_formula_fixture() {
        // tp=5, fp=5, fn=0, tn=90.
        let c = ConfusionCounts {
            true_pos: 5,
            true_neg: 90,
            false_pos: 5,
            false_neg: 0,
        };
        let s = scores(&c);
        assert!((s.dice.unwrap() - 10.0 / 15.0).abs() < 1e-12);
        assert_eq!(s.iou, Some(0.5));
        assert_eq!(s.sensitivity, Some(1.0));
        assert_eq!(s.accuracy, Some(0.95));
    }

    #[test]
    fn empty_empty_is_undefined_except_accuracy() {
        let c = ConfusionCounts {
            true_pos: 0,
            true_neg: 100,
            false_pos: 0,
            false_neg: 0,
        };
        let s = scores(&c);
        assert_eq!(s.accuracy, Some(1.0));
        assert_eq!(s.dice, None);
        assert_eq!(s.iou, None);
        assert_eq!(s.sensitivity, None);
    }

    #[test]
    fn dice_iou_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let c = ConfusionCounts {
                true_pos: rng.gen_range(0..200),
                true_neg: rng.gen_range(0..200),
                false_pos: rng.gen_range(0..200),
                false_neg: rng.gen_range(0..200),
            };
            let s = scores(&c);
            if let (Some(dice), Some(iou)) = (s.dice, s.iou) {
                assert!((dice - 2.0 * iou / (1.0 + iou)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn volume_and_diameter_stratification() {
        // 1000 voxels at 1 mm isotropic: 1 cm³, small.
        let dims = [10, 10, 10];
        let m = mask_of(vec![2u8; 1000], dims, [1.0; 3]);
        let v = class_volume_cm3(&m, TissueClass::Tumor);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(stratify_by_volume(v), SizeClass::Small);

        // 10x10x10 cm solid block: exactly 1000 cm³, large; diameter 10 cm.
        let m = mask_of(vec![2u8; 1000], dims, [10.0; 3]);
        let v = class_volume_cm3(&m, TissueClass::Tumor);
        assert!((v - 1000.0).abs() < 1e-9);
        assert_eq!(stratify_by_volume(v), SizeClass::Large);
        let d = max_axis_diameter_cm(&m, TissueClass::Tumor);
        assert!((d - 10.0).abs() < 1e-9);
        assert_eq!(stratify_by_diameter(d), SizeClass::Large);

        // Empty mask: 0 cm³, n/a.
        let m = mask_of(vec![0u8; 1000], dims, [1.0; 3]);
        assert_eq!(class_volume_cm3(&m, TissueClass::Tumor), 0.0);
        assert_eq!(stratify_by_volume(0.0), SizeClass::NA);
        assert_eq!(max_axis_diameter_cm(&m, TissueClass::Tumor), 0.0);
    }

    #[test]
    fn anisotropic_diameter_uses_per_axis_spacing() {
        let dims = [8, 4, 2];
        let mut labels = vec![0u8; 64];
        // Extent 3 voxels in x, 2 in y, 2 in z.
        for z in 0..2 {
            for y in 1..3 {
                for x in 2..5 {
                    labels[x + 8 * (y + 4 * z)] = 2;
                }
            }
        }
        let m = mask_of(labels, dims, [0.7, 0.7, 2.5]);
        let d = max_axis_diameter_cm(&m, TissueClass::Tumor);
        // x: 3*0.7 = 2.1 mm; y: 2*0.7 = 1.4; z: 2*2.5 = 5.0 -> 0.5 cm.
        assert!((d - 0.5).abs() < 1e-9);
    }

    #[test]
    fn aggregation_matches_spreadsheet_oracle() {
        // Five volumes; mean and sample stddev computed independently:
        // mean = 0.8, var = (0 + .01 + .01 + .0025 + .0025)/4 = 0.00625.
        let dice = [0.8, 0.9, 0.7, 0.85, 0.75].map(Some);
        let agg = aggregate(dice).unwrap();
        assert!((agg.mean - 0.8).abs() < 1e-12);
        assert!((agg.std - 0.00625f64.sqrt()).abs() < 1e-12);
        assert_eq!(agg.count, 5);
    }

    #[test]
    fn aggregation_excludes_undefined() {
        let agg = aggregate([Some(0.5), None, Some(0.7)]).unwrap();
        assert_eq!(agg.count, 2);
        assert!((agg.mean - 0.6).abs() < 1e-12);
        assert_eq!(aggregate([None, None]), None);
    }

    #[test]
    fn cohort_csv_schema() {
        let rows = vec![CohortRow {
            method: "two_step".into(),
            class: "tumor".into(),
            accuracy: Some(0.99),
            dice: Some(0.5),
            sensitivity: None,
            iou: Some(0.4),
        }];
        let csv = cohort_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("method,class,accuracy,dice,sensitivity,iou"));
        assert_eq!(lines.next(), Some("two_step,tumor,0.990000,0.500000,,0.400000"));
    }
}
