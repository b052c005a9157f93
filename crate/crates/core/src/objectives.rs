//! Sequence-prediction losses: cross-entropy, the Rényi-α family measured
//! against the uniform distribution over prediction steps, and perplexity.
//!
//! A loss over `T` steps is computed from normalized step probabilities
//! `q_j = p_j / N_j`. With `u_T` uniform on `T` points,
//!
//! ```text
//! L_α(q) = D_α(u_T ‖ q) + log T,   D_α(u‖q) = log(Σ_j u_j^α q_j^{1−α}) / (α − 1)
//! ```
//!
//! and `α = 1` is the cross-entropy `−(1/T) Σ_j log q_j`.

use crate::error::{config, Result};
use crate::scalar::Real;

/// Probabilities below this floor are clamped before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-30;

/// Target perplexities of the reference experiments (d = 4, L = 5,
/// 300 length-5 sequences). Documentation only; nothing asserts them.
pub mod reference {
    pub const CLASSICAL_TRAIN_QSA: f64 = 3.158;
    pub const CLASSICAL_TRAIN_SCSA: f64 = 680.44;
    pub const CLASSICAL_TRAIN_LCSA: f64 = 3.35;
    pub const CLASSICAL_TEST_QSA: (f64, f64) = (6.62, 0.06);
    pub const CLASSICAL_TEST_SCSA: (f64, f64) = (858.0, 1.0);
    pub const CLASSICAL_TEST_LCSA: (f64, f64) = (3.39, 0.01);
    pub const ISING_TRAIN_QSA: f64 = 7.17;
    pub const ISING_TRAIN_SCSA: f64 = 6.64;
    pub const ISING_TRAIN_LCSA: f64 = 2.59;
    pub const ISING_TEST_QSA: (f64, f64) = (5.6, 0.2);
    pub const ISING_TEST_SCSA: (f64, f64) = (8.4, 0.6);
    pub const ISING_TEST_LCSA: (f64, f64) = (2.8, 0.9);
}

/// Per-step probabilities `p_{j+1}` with their normalizers `N_{j+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepProbabilities<R> {
    values: Vec<R>,
    normalizers: Vec<R>,
}

impl<R: Real> StepProbabilities<R> {
    pub fn new(values: Vec<R>, normalizers: Vec<R>) -> Result<Self> {
        if values.len() != normalizers.len() {
            return config("values and normalizers differ in length");
        }
        if values.is_empty() {
            return config("at least one step probability is required");
        }
        if values.iter().any(|p| !p.is_finite() || *p < R::zero() || *p > R::one() + R::lit(1e-12)) {
            return config("step probabilities must be finite and in [0, 1]");
        }
        if normalizers.iter().any(|n| !n.is_finite() || *n <= R::zero()) {
            return config("normalizers must be finite and positive");
        }
        Ok(Self { values, normalizers })
    }

    /// Probabilities that are already normalized (`N = 1`).
    pub fn normalized(values: Vec<R>) -> Result<Self> {
        let ones = vec![R::one(); values.len()];
        Self::new(values, ones)
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn normalizers(&self) -> &[R] {
        &self.normalizers
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `p_j / N_j`, floored at [`PROBABILITY_FLOOR`]; the flag reports whether any entry was clamped.
    fn ratios(&self) -> (Vec<R>, bool) {
        let floor = R::lit(PROBABILITY_FLOOR);
        let mut clamped = false;
        let q = self
            .values
            .iter()
            .zip(&self.normalizers)
            .map(|(p, n)| {
                let q = *p / *n;
                if q < floor {
                    clamped = true;
                    floor
                } else {
                    q
                }
            })
            .collect();
        (q, clamped)
    }
}

/// A loss value and whether a probability floor was hit while computing it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue<R> {
    pub value: R,
    pub clamped: bool,
}

pub fn cross_entropy_loss<R: Real>(p: &StepProbabilities<R>) -> LossValue<R> {
    let (q, clamped) = p.ratios();
    let t = R::lit(q.len() as f64);
    let value = -q.iter().map(|x| x.ln()).sum::<R>() / t;
    LossValue { value, clamped }
}

pub fn renyi_alpha_loss<R: Real>(p: &StepProbabilities<R>, alpha: f64) -> Result<LossValue<R>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return config(format!("Renyi order must be positive and finite, got {alpha}"));
    }
    if alpha == 1.0 {
        return Ok(cross_entropy_loss(p));
    }
    let (q, clamped) = p.ratios();
    let t = q.len() as f64;
    let a = R::lit(alpha);
    let u_pow = R::lit(t.powf(-alpha));
    let inner: R = q.iter().map(|x| u_pow * x.powf(R::one() - a)).sum();
    let value = inner.ln() / (a - R::one()) + R::lit(t.ln());
    Ok(LossValue { value, clamped })
}

/// `−log(expectation) + log T` with the expectation floored at [`PROBABILITY_FLOOR`].
pub fn renyi_half_from_expectation<R: Real>(expectation: R, seq_len: usize) -> LossValue<R> {
    let floor = R::lit(PROBABILITY_FLOOR);
    let clamped = !(expectation >= floor);
    let e = if clamped { floor } else { expectation };
    LossValue { value: -e.ln() + R::lit((seq_len as f64).ln()), clamped }
}

pub fn perplexity<R: Real>(loss: R) -> R {
    loss.exp()
}
