//! Shared helpers for integration tests: the central finite-difference
//! oracle and relative-error reporting.

/// Central finite differences: `(f(p+h) - f(p-h)) / 2h` per coordinate.
/// Independent of any analytic gradient path.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(at.len());
    let mut probe = at.to_vec();
    for i in 0..at.len() {
        probe[i] = at[i] + h;
        let up = f(&probe);
        probe[i] = at[i] - h;
        let down = f(&probe);
        probe[i] = at[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Infinity-norm relative error: `max_i |a_i - n_i|` over the larger of the
/// two gradient scales. Per-component ratios blow up where terms of a
/// combined loss cancel to near zero and the oracle's truncation noise
/// dominates; normalizing by the vector scale keeps the check about the
/// analytic gradient, not the oracle. The 1e-6 floor handles exactly-zero
/// gradients (for example a matched weak-loss ratio).
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale_a = analytic.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let scale_n = numeric.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    diff / scale_a.max(scale_n).max(1e-6)
}

/// Deterministic pseudo-random f64 stream for fixtures (splitmix64).
pub struct FixtureRng(u64);

impl FixtureRng {
    pub fn new(seed: u64) -> Self {
        FixtureRng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn flag(&mut self, p_true: f64) -> bool {
        self.unit() < p_true
    }
}
