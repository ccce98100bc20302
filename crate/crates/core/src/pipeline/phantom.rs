//! Synthetic abdominal phantoms: a liver ellipsoid with spherical tumors,
//! tissue-specific HU statistics, boundary blur, and a clinical record
//! generated to satisfy a known linear TLVR model.
//!
//! Phantoms stand in for an access-restricted CT cohort: ground truth
//! geometry is exact, and the clinical linear model is known by
//! construction, so every pipeline claim is testable.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::PipelineError;
use crate::filters::gaussian_smooth;
use crate::volio::{
    standard_label_map, ClinicalRecord, Mask, Orientation, TissueClass, VoxelKind, Volume,
    LABEL_LIVER, LABEL_TUMOR, NUM_CLINICAL_FEATURES,
};

/// Mean/stddev of a tissue's HU distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueStats {
    pub mean: f64,
    pub std: f64,
}

/// Geometry, intensity, and clinical-model parameters of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    /// Liver ellipsoid center in voxel coordinates.
    pub liver_center: [f64; 3],
    /// Liver ellipsoid semi-axes in voxels.
    pub liver_radii: [f64; 3],
    /// Inclusive range of tumor count.
    pub tumor_count: (usize, usize),
    /// Tumor sphere radius range in voxels.
    pub tumor_radius: (f64, f64),
    pub hu_background: TissueStats,
    pub hu_liver: TissueStats,
    pub hu_tumor: TissueStats,
    /// Boundary blur sigma in voxels (0 disables).
    pub blur_sigma: f64,
    /// Linear model tying clinical features to the true TLVR.
    pub clinical_coefs: [f64; NUM_CLINICAL_FEATURES],
    pub clinical_intercept: f64,
    /// Stddev of the noise between the clinical relation and the true TLVR.
    pub clinical_noise_std: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [48, 48, 24],
            spacing: [1.0, 1.0, 1.0],
            liver_center: [24.0, 24.0, 12.0],
            liver_radii: [17.0, 14.0, 9.0],
            tumor_count: (1, 2),
            tumor_radius: (3.0, 5.0),
            hu_background: TissueStats { mean: -110.0, std: 15.0 },
            hu_liver: TissueStats { mean: 70.0, std: 10.0 },
            hu_tumor: TissueStats { mean: 170.0, std: 10.0 },
            blur_sigma: 0.8,
            clinical_coefs: [
                0.05, -0.04, 0.03, 0.05, -0.02, 0.03, 0.02, -0.03, 0.04, 0.02, -0.02, 0.03,
                -0.04, 0.05, 0.03,
            ],
            clinical_intercept: 0.1,
            clinical_noise_std: 0.01,
        }
    }
}

/// One generated patient: HU volume, disjoint liver/tumor ground truth,
/// clinical record, and the true TLVR.
#[derive(Debug, Clone)]
pub struct PhantomSample {
    pub volume: Volume,
    /// Liver tissue only (tumor voxels are not liver class).
    pub liver: Mask,
    pub tumor: Mask,
    pub record: ClinicalRecord,
    pub tlvr: f64,
}

fn ellipsoid_norm(p: [f64; 3], center: [f64; 3], radii: [f64; 3]) -> f64 {
    (0..3)
        .map(|a| ((p[a] - center[a]) / radii[a]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Deterministic per seed: same seed, bit-identical output.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<PhantomSample, PipelineError> {
    if spec.tumor_count.0 > spec.tumor_count.1 || spec.tumor_radius.0 > spec.tumor_radius.1 {
        return Err(PipelineError::InfeasibleSpec(
            "tumor count/radius ranges must be ordered".into(),
        ));
    }
    let [nx, ny, nz] = spec.dims;
    let n = nx * ny * nz;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_radius = spec
        .liver_radii
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    // Tumor spheres fully inside the liver ellipsoid with a one-voxel
    // interior margin (conservative Lipschitz bound).
    let count = rng.gen_range(spec.tumor_count.0..=spec.tumor_count.1);
    let mut tumors: Vec<([f64; 3], f64)> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _attempt in 0..500 {
            let radius = rng.gen_range(spec.tumor_radius.0..=spec.tumor_radius.1);
            let center = [
                rng.gen_range(0.0..nx as f64),
                rng.gen_range(0.0..ny as f64),
                rng.gen_range(0.0..nz as f64),
            ];
            let fits = ellipsoid_norm(center, spec.liver_center, spec.liver_radii)
                + (radius + 1.0) / min_radius
                <= 1.0;
            if fits {
                tumors.push((center, radius));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(PipelineError::InfeasibleSpec(format!(
                "cannot place a tumor of radius in {:?} inside liver radii {:?}",
                spec.tumor_radius, spec.liver_radii
            )));
        }
    }

    let mut labels = vec![0u8; n];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [x as f64, y as f64, z as f64];
                let i = x + nx * (y + ny * z);
                if ellipsoid_norm(p, spec.liver_center, spec.liver_radii) <= 1.0 {
                    labels[i] = LABEL_LIVER;
                }
                for (c, r) in &tumors {
                    let d2 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>();
                    if d2 <= r * r {
                        labels[i] = LABEL_TUMOR;
                    }
                }
            }
        }
    }

    // Per-tissue Gaussian HU, then boundary blur.
    let dist_bg = Normal::new(spec.hu_background.mean, spec.hu_background.std)
        .map_err(|e| PipelineError::InfeasibleSpec(e.to_string()))?;
    let dist_liver = Normal::new(spec.hu_liver.mean, spec.hu_liver.std)
        .map_err(|e| PipelineError::InfeasibleSpec(e.to_string()))?;
    let dist_tumor = Normal::new(spec.hu_tumor.mean, spec.hu_tumor.std)
        .map_err(|e| PipelineError::InfeasibleSpec(e.to_string()))?;
    let mut hu: Vec<f64> = labels
        .iter()
        .map(|&l| match l {
            LABEL_LIVER => dist_liver.sample(&mut rng),
            LABEL_TUMOR => dist_tumor.sample(&mut rng),
            _ => dist_bg.sample(&mut rng),
        })
        .collect();
    if spec.blur_sigma > 0.0 {
        hu = gaussian_smooth(&hu, spec.dims, spec.blur_sigma);
    }
    let volume = Volume::new(
        spec.dims,
        spec.spacing,
        Orientation::identity(),
        VoxelKind::Hu,
        hu.iter().map(|&v| v as f32).collect(),
    )?;

    let liver_labels: Vec<u8> = labels
        .iter()
        .map(|&l| if l == LABEL_LIVER { LABEL_LIVER } else { 0 })
        .collect();
    let tumor_labels: Vec<u8> = labels
        .iter()
        .map(|&l| if l == LABEL_TUMOR { LABEL_TUMOR } else { 0 })
        .collect();
    let liver = Mask::new(
        spec.dims,
        spec.spacing,
        Orientation::identity(),
        liver_labels,
        standard_label_map(),
    )?;
    let tumor = Mask::new(
        spec.dims,
        spec.spacing,
        Orientation::identity(),
        tumor_labels,
        standard_label_map(),
    )?;

    let t = tumor.count_class(TissueClass::Tumor) as f64;
    let l = liver.count_class(TissueClass::Liver) as f64;
    let tlvr = if t + l == 0.0 { 0.0 } else { t / (t + l) };

    // Clinical features: draw a Gaussian vector, then shift it along the
    // coefficient direction so that coefs · f + intercept = tlvr + noise
    // holds exactly. Zero-coefficient features stay pure noise.
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = [0.0f64; NUM_CLINICAL_FEATURES];
    for f in features.iter_mut() {
        *f = unit.sample(&mut rng);
    }
    let noise = if spec.clinical_noise_std > 0.0 {
        Normal::new(0.0, spec.clinical_noise_std)
            .expect("noise normal")
            .sample(&mut rng)
    } else {
        0.0
    };
    let w_dot_w: f64 = spec.clinical_coefs.iter().map(|w| w * w).sum();
    if w_dot_w > 0.0 {
        let current: f64 = spec
            .clinical_coefs
            .iter()
            .zip(&features)
            .map(|(w, f)| w * f)
            .sum::<f64>()
            + spec.clinical_intercept;
        let shift = (tlvr + noise - current) / w_dot_w;
        for (f, w) in features.iter_mut().zip(&spec.clinical_coefs) {
            *f += w * shift;
        }
    }
    let record = ClinicalRecord::complete(format!("phantom-{seed:05}"), features);

    Ok(PhantomSample {
        volume,
        liver,
        tumor,
        record,
        tlvr,
    })
}

/// Cohort with consecutive seeds `base_seed..base_seed + count`.
pub fn generate_cohort(
    spec: &PhantomSpec,
    count: usize,
    base_seed: u64,
) -> Result<Vec<PhantomSample>, PipelineError> {
    (0..count)
        .map(|i| generate_phantom(spec, base_seed + i as u64))
        .collect()
}
