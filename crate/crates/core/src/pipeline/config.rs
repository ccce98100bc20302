//! Pipeline configuration: every tunable constant of the preprocessing,
//! loss, optimizer, contour, and phantom-generation stages, serialized as a
//! flat `key = value` text file (one key per line, `#` comments,
//! comma-separated lists for small fixed-length vectors).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::phantom::{PhantomSpec, TissueStats};
use super::PipelineError;
use crate::losses::{FocalParams, LossWeights};
use crate::postprocess::ContourConfig;
use crate::preprocess::HuWindow;
use crate::volio::NUM_CLINICAL_FEATURES;

/// All pipeline constants. Defaults carry the reference values (HU windows,
/// crop targets, optimizer settings); [`PipelineConfig::desk_scale`] shrinks
/// the geometry and rescales the optimizer for phantom-sized runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Liver-task HU window (lo, hi).
    pub liver_hu: (f32, f32),
    /// Tumor-task HU window (lo, hi).
    pub tumor_hu: (f32, f32),
    /// Liver-task crop/pad target.
    pub liver_crop: [usize; 3],
    /// Tumor-task crop/pad target.
    pub tumor_crop: [usize; 3],
    /// Liver bounding-box margin in voxels.
    pub bbox_margin: usize,
    pub contour_iterations: u32,
    pub contour_lambda1: f64,
    pub contour_lambda2: f64,
    pub contour_smoothing_passes: u32,
    pub lambda_focal: f64,
    pub lambda_dice: f64,
    pub lambda_weak: f64,
    pub focal_gamma: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Prediction threshold (inclusive).
    pub threshold: f64,
    pub seed: u64,
    pub phantom: PhantomSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            liver_hu: (-150.0, 250.0),
            tumor_hu: (-200.0, 250.0),
            liver_crop: [512, 512, 16],
            tumor_crop: [256, 256, 32],
            bbox_margin: 2,
            contour_iterations: 2,
            contour_lambda1: 2.0,
            contour_lambda2: 1.0,
            contour_smoothing_passes: 1,
            lambda_focal: 1.0,
            lambda_dice: 1.0,
            lambda_weak: 0.5,
            focal_gamma: 2.0,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            epochs: 150,
            threshold: 0.5,
            seed: 0,
            phantom: PhantomSpec::default(),
        }
    }
}

impl PipelineConfig {
    /// Desk-scale preset: phantom-sized crops and an optimizer budget sized
    /// for the reference logistic model (a few hundred Adam steps rather
    /// than the ~10k of a full training run).
    pub fn desk_scale() -> Self {
        let phantom = PhantomSpec::default();
        PipelineConfig {
            liver_crop: phantom.dims,
            tumor_crop: [40, 40, 24],
            learning_rate: 0.25,
            epochs: 100,
            ..PipelineConfig::default()
        }
    }

    pub fn liver_window(&self) -> HuWindow {
        HuWindow::new(self.liver_hu.0, self.liver_hu.1)
    }

    pub fn tumor_window(&self) -> HuWindow {
        HuWindow::new(self.tumor_hu.0, self.tumor_hu.1)
    }

    pub fn contour(&self) -> ContourConfig {
        ContourConfig {
            iterations: self.contour_iterations,
            lambda1: self.contour_lambda1,
            lambda2: self.contour_lambda2,
            smoothing_passes: self.contour_smoothing_passes,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights::new(self.lambda_focal, self.lambda_dice, self.lambda_weak)
    }

    pub fn focal(&self) -> FocalParams {
        FocalParams::new(self.focal_gamma)
    }

    /// Serializes as the flat key-value format, keys in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let kv = self.entries();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Parses the flat key-value format; unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = PipelineConfig::default();
        let known: BTreeMap<String, String> =
            cfg.entries().into_iter().map(|(k, v)| (k, v)).collect();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PipelineError::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !known.contains_key(&key) {
                return Err(PipelineError::Config(format!("unknown key '{key}'")));
            }
            seen.insert(key, value.trim().to_string());
        }
        for (key, value) in seen {
            cfg.apply(&key, &value)
                .map_err(|e| PipelineError::Config(format!("key '{key}': {e}")))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    fn entries(&self) -> Vec<(String, String)> {
        let p = &self.phantom;
        let list_f64 = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("liver_hu".into(), format!("{},{}", self.liver_hu.0, self.liver_hu.1)),
            ("tumor_hu".into(), format!("{},{}", self.tumor_hu.0, self.tumor_hu.1)),
            ("liver_crop".into(), format!("{},{},{}", self.liver_crop[0], self.liver_crop[1], self.liver_crop[2])),
            ("tumor_crop".into(), format!("{},{},{}", self.tumor_crop[0], self.tumor_crop[1], self.tumor_crop[2])),
            ("bbox_margin".into(), self.bbox_margin.to_string()),
            ("contour_iterations".into(), self.contour_iterations.to_string()),
            ("contour_lambda1".into(), format!("{}", self.contour_lambda1)),
            ("contour_lambda2".into(), format!("{}", self.contour_lambda2)),
            ("contour_smoothing_passes".into(), self.contour_smoothing_passes.to_string()),
            ("lambda_focal".into(), format!("{}", self.lambda_focal)),
            ("lambda_dice".into(), format!("{}", self.lambda_dice)),
            ("lambda_weak".into(), format!("{}", self.lambda_weak)),
            ("focal_gamma".into(), format!("{}", self.focal_gamma)),
            ("learning_rate".into(), format!("{}", self.learning_rate)),
            ("weight_decay".into(), format!("{}", self.weight_decay)),
            ("epochs".into(), self.epochs.to_string()),
            ("threshold".into(), format!("{}", self.threshold)),
            ("seed".into(), self.seed.to_string()),
            ("phantom_dims".into(), format!("{},{},{}", p.dims[0], p.dims[1], p.dims[2])),
            ("phantom_spacing".into(), format!("{},{},{}", p.spacing[0], p.spacing[1], p.spacing[2])),
            ("phantom_liver_center".into(), list_f64(&p.liver_center)),
            ("phantom_liver_radii".into(), list_f64(&p.liver_radii)),
            ("phantom_tumor_count".into(), format!("{},{}", p.tumor_count.0, p.tumor_count.1)),
            ("phantom_tumor_radius".into(), format!("{},{}", p.tumor_radius.0, p.tumor_radius.1)),
            ("phantom_hu_background".into(), format!("{},{}", p.hu_background.mean, p.hu_background.std)),
            ("phantom_hu_liver".into(), format!("{},{}", p.hu_liver.mean, p.hu_liver.std)),
            ("phantom_hu_tumor".into(), format!("{},{}", p.hu_tumor.mean, p.hu_tumor.std)),
            ("phantom_blur_sigma".into(), format!("{}", p.blur_sigma)),
            ("phantom_clinical_coefs".into(), list_f64(&p.clinical_coefs)),
            ("phantom_clinical_intercept".into(), format!("{}", p.clinical_intercept)),
            ("phantom_clinical_noise".into(), format!("{}", p.clinical_noise_std)),
        ]
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn scalar<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.trim().parse().map_err(|_| format!("cannot parse '{v}'"))
        }
        fn list<T: std::str::FromStr + Copy, const N: usize>(v: &str) -> Result<[T; N], String> {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != N {
                return Err(format!("expected {N} comma-separated values, got {}", parts.len()));
            }
            let mut out: Vec<T> = Vec::with_capacity(N);
            for p in parts {
                out.push(scalar(p)?);
            }
            Ok(std::array::from_fn(|i| out[i]))
        }
        fn pair<T: std::str::FromStr + Copy>(v: &str) -> Result<(T, T), String> {
            let a: [T; 2] = list(v)?;
            Ok((a[0], a[1]))
        }
        match key {
            "liver_hu" => self.liver_hu = pair(value)?,
            "tumor_hu" => self.tumor_hu = pair(value)?,
            "liver_crop" => self.liver_crop = list(value)?,
            "tumor_crop" => self.tumor_crop = list(value)?,
            "bbox_margin" => self.bbox_margin = scalar(value)?,
            "contour_iterations" => self.contour_iterations = scalar(value)?,
            "contour_lambda1" => self.contour_lambda1 = scalar(value)?,
            "contour_lambda2" => self.contour_lambda2 = scalar(value)?,
            "contour_smoothing_passes" => self.contour_smoothing_passes = scalar(value)?,
            "lambda_focal" => self.lambda_focal = scalar(value)?,
            "lambda_dice" => self.lambda_dice = scalar(value)?,
            "lambda_weak" => self.lambda_weak = scalar(value)?,
            "focal_gamma" => self.focal_gamma = scalar(value)?,
            "learning_rate" => self.learning_rate = scalar(value)?,
            "weight_decay" => self.weight_decay = scalar(value)?,
            "epochs" => self.epochs = scalar(value)?,
            "threshold" => self.threshold = scalar(value)?,
            "seed" => self.seed = scalar(value)?,
            "phantom_dims" => self.phantom.dims = list(value)?,
            "phantom_spacing" => self.phantom.spacing = list(value)?,
            "phantom_liver_center" => self.phantom.liver_center = list(value)?,
            "phantom_liver_radii" => self.phantom.liver_radii = list(value)?,
            "phantom_tumor_count" => self.phantom.tumor_count = pair(value)?,
            "phantom_tumor_radius" => self.phantom.tumor_radius = pair(value)?,
            "phantom_hu_background" => self.phantom.hu_background = tissue(value)?,
            "phantom_hu_liver" => self.phantom.hu_liver = tissue(value)?,
            "phantom_hu_tumor" => self.phantom.hu_tumor = tissue(value)?,
            "phantom_blur_sigma" => self.phantom.blur_sigma = scalar(value)?,
            "phantom_clinical_coefs" => {
                let coefs: [f64; NUM_CLINICAL_FEATURES] = list(value)?;
                self.phantom.clinical_coefs = coefs;
            }
            "phantom_clinical_intercept" => self.phantom.clinical_intercept = scalar(value)?,
            "phantom_clinical_noise" => self.phantom.clinical_noise_std = scalar(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        return Ok(());

        fn tissue(v: &str) -> Result<TissueStats, String> {
            let (mean, std) = pair(v)?;
            Ok(TissueStats { mean, std })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reference_values() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.liver_hu, (-150.0, 250.0));
        assert_eq!(cfg.tumor_hu, (-200.0, 250.0));
        assert_eq!(cfg.liver_crop, [512, 512, 16]);
        assert_eq!(cfg.tumor_crop, [256, 256, 32]);
        assert_eq!(cfg.epochs, 150);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.weight_decay, 1e-5);
        assert_eq!(cfg.lambda_weak, 0.5);
    }

    #[test]
    fn config_roundtrips_through_text() {
        let mut cfg = PipelineConfig::desk_scale();
        cfg.lambda_weak = 0.6;
        cfg.seed = 1234;
        cfg.phantom.tumor_count = (2, 3);
        let text = cfg.to_text();
        let back = PipelineConfig::from_text(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_unknown_keys() {
        let ok = "# comment\nseed = 7 # trailing\n\nepochs = 3\n";
        let cfg = PipelineConfig::from_text(ok).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.epochs, 3);
        assert!(PipelineConfig::from_text("nope = 1\n").is_err());
        assert!(PipelineConfig::from_text("seed 7\n").is_err());
    }
}
