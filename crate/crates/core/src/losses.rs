//! Training objective: Dice overlap loss, focal loss, and the weak
//! soft-TLVR loss, each returning its value and analytic per-voxel gradient,
//! plus their weighted combination.
//!
//! All three operate on f64 probability slices laid out like the volume they
//! came from (x-fastest), with a binary ground-truth/region slice alongside.
//! Reductions run in a fixed sequential order so gradient checks reproduce
//! bit-for-bit.
//!
//! The weak loss relaxes the counting TLVR ratio: over a fixed liver-region
//! crop the denominator |liver ∪ tumor| is constant, so the soft ratio
//! reduces to the mean predicted tumor probability over that region. For
//! binary predictions it coincides exactly with the counting ratio.

use thiserror::Error;

/// Dice smoothing constant (numerator and denominator).
pub const DICE_EPS: f64 = 1e-6;
/// Additive guard inside the focal/cross-entropy logarithm.
pub const LOG_GUARD: f64 = 1e-12;
/// Probabilities may overshoot [0, 1] by at most this much.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("prediction and target lengths differ ({p} vs {g})")]
    ShapeMismatch { p: usize, g: usize },
    #[error("probability {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("weak-loss region has no voxels")]
    EmptyRegion,
}

/// Balancing weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    lambda_focal: f64,
    lambda_dice: f64,
    lambda_weak: f64,
}

impl LossWeights {
    /// All weights must be non-negative with at least one positive.
    pub fn new(lambda_focal: f64, lambda_dice: f64, lambda_weak: f64) -> Self {
        assert!(
            lambda_focal >= 0.0 && lambda_dice >= 0.0 && lambda_weak >= 0.0,
            "loss weights must be non-negative"
        );
        assert!(
            lambda_focal + lambda_dice + lambda_weak > 0.0,
            "at least one loss weight must be positive"
        );
        LossWeights {
            lambda_focal,
            lambda_dice,
            lambda_weak,
        }
    }

    pub fn lambda_focal(&self) -> f64 {
        self.lambda_focal
    }

    pub fn lambda_dice(&self) -> f64 {
        self.lambda_dice
    }

    pub fn lambda_weak(&self) -> f64 {
        self.lambda_weak
    }

    /// Same weights with the weak term switched off.
    pub fn without_weak(&self) -> Self {
        LossWeights::new(self.lambda_focal, self.lambda_dice, 0.0)
    }
}

impl Default for LossWeights {
    /// λ_focal = λ_dice = 1.0, λ_weak = 0.5.
    fn default() -> Self {
        LossWeights::new(1.0, 1.0, 0.5)
    }
}

/// Focusing parameter of the focal loss; γ = 0 reduces it to mean binary
/// cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    gamma: f64,
}

impl FocalParams {
    pub fn new(gamma: f64) -> Self {
        assert!(gamma >= 0.0, "focal gamma must be non-negative");
        FocalParams { gamma }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams::new(2.0)
    }
}

/// One loss term: scalar value and d(value)/d(p_i).
#[derive(Debug, Clone)]
pub struct LossTerm {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Combined objective with its per-term breakdown.
#[derive(Debug, Clone)]
pub struct LossBundle {
    pub total: f64,
    pub dice: f64,
    pub focal: f64,
    pub weak: f64,
    /// d(total)/d(p_i).
    pub grad: Vec<f64>,
}

fn check_probs(p: &[f64], g_len: usize) -> Result<(), LossError> {
    if p.len() != g_len {
        return Err(LossError::ShapeMismatch {
            p: p.len(),
            g: g_len,
        });
    }
    for (index, &value) in p.iter().enumerate() {
        if !(value >= -PROB_TOLERANCE && value <= 1.0 + PROB_TOLERANCE) {
            return Err(LossError::OutOfRange { index, value });
        }
    }
    Ok(())
}

/// Squared-denominator Dice loss:
/// `1 - (2 Σ p_i g_i + ε) / (Σ p_i² + Σ g_i² + ε)`.
pub fn dice_loss(p: &[f64], g: &[bool]) -> Result<LossTerm, LossError> {
    check_probs(p, g.len())?;
    let mut inter = 0.0;
    let mut p_sq = 0.0;
    let mut g_sq = 0.0;
    for (&pi, &gi) in p.iter().zip(g) {
        let gv = gi as u8 as f64;
        inter += pi * gv;
        p_sq += pi * pi;
        g_sq += gv;
    }
    let num = 2.0 * inter + DICE_EPS;
    let den = p_sq + g_sq + DICE_EPS;
    let value = 1.0 - num / den;
    let den_sq = den * den;
    let grad = p
        .iter()
        .zip(g)
        .map(|(&pi, &gi)| {
            let gv = gi as u8 as f64;
            -(2.0 * gv * den - num * 2.0 * pi) / den_sq
        })
        .collect();
    Ok(LossTerm { value, grad })
}

/// Focal loss with true-class probability `p_t`:
/// `-(1/N) Σ (1 - p_t)^γ ln(p_t + δ)`.
pub fn focal_loss(p: &[f64], g: &[bool], fp: &FocalParams) -> Result<LossTerm, LossError> {
    check_probs(p, g.len())?;
    let gamma = fp.gamma();
    let n = p.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &gi) in p.iter().zip(g) {
        let pt = if gi { pi } else { 1.0 - pi }.clamp(0.0, 1.0);
        let one_m = 1.0 - pt;
        let log_pt = (pt + LOG_GUARD).ln();
        value -= one_m.powf(gamma) * log_pt;
        // d/d(p_t), with the γ (1-p_t)^(γ-1) ln term vanishing at γ = 0 and
        // guarded against 0^negative at p_t = 1.
        let modulating = if gamma > 0.0 && one_m > 0.0 {
            gamma * one_m.powf(gamma - 1.0) * log_pt
        } else {
            0.0
        };
        let d_pt = (modulating - one_m.powf(gamma) / (pt + LOG_GUARD)) / n;
        grad.push(if gi { d_pt } else { -d_pt });
    }
    Ok(LossTerm {
        value: value / n,
        grad,
    })
}

/// Weak soft-TLVR loss over a fixed region: with
/// `R = (Σ_{i∈region} p_i) / |region|`, the value is `(R - r_hat)²` and the
/// gradient `2 (R - r_hat) / |region|` inside the region, 0 outside.
pub fn weak_loss(p: &[f64], region: &[bool], r_hat: f64) -> Result<LossTerm, LossError> {
    if p.len() != region.len() {
        return Err(LossError::ShapeMismatch {
            p: p.len(),
            g: region.len(),
        });
    }
    let count = region.iter().filter(|&&r| r).count();
    if count == 0 {
        return Err(LossError::EmptyRegion);
    }
    let count_f = count as f64;
    let sum: f64 = p
        .iter()
        .zip(region)
        .filter(|(_, &r)| r)
        .map(|(&pi, _)| pi)
        .sum();
    let ratio = sum / count_f;
    let diff = ratio - r_hat;
    let g = 2.0 * diff / count_f;
    let grad = region.iter().map(|&r| if r { g } else { 0.0 }).collect();
    Ok(LossTerm {
        value: diff * diff,
        grad,
    })
}

/// Weighted combination `λ_f·focal + λ_d·dice + λ_w·weak`.
///
/// The weak term is evaluated only when `λ_w > 0`; liver-branch training
/// passes `λ_w = 0` and needs no region. `region` defaults to the whole
/// grid when absent.
pub fn combined_loss(
    p: &[f64],
    g: &[bool],
    region: Option<&[bool]>,
    r_hat: f64,
    w: &LossWeights,
    fp: &FocalParams,
) -> Result<LossBundle, LossError> {
    let dice = dice_loss(p, g)?;
    let focal = focal_loss(p, g, fp)?;
    let weak = if w.lambda_weak() > 0.0 {
        let whole = vec![true; p.len()];
        let region = region.unwrap_or(&whole);
        Some(weak_loss(p, region, r_hat)?)
    } else {
        None
    };
    let weak_value = weak.as_ref().map_or(0.0, |t| t.value);
    let total = w.lambda_focal() * focal.value + w.lambda_dice() * dice.value
        + w.lambda_weak() * weak_value;
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let weak_g = weak.as_ref().map_or(0.0, |t| t.grad[i]);
        grad.push(
            w.lambda_focal() * focal.grad[i]
                + w.lambda_dice() * dice.grad[i]
                + w.lambda_weak() * weak_g,
        );
    }
    Ok(LossBundle {
        total,
        dice: dice.value,
        focal: focal.value,
        weak: weak_value,
        grad,
    })
}
