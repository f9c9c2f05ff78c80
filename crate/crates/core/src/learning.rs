//! Estimators mapping a learner's examples to a point estimate ĉ.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LearningConfig, PhoneticModel, PriorSpec};
use crate::numerics::maximize_scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearningError {
    #[error("a batch needs at least 2 examples, got {0}")]
    BatchTooSmall(usize),
    #[error("example {index} is not finite")]
    NonFiniteExample { index: usize },
    #[error("DomainError: log prior argument {value} at c = {c} is not positive")]
    Domain { c: f64, value: f64 },
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
}

/// A learner's observations y₁…y_n in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleBatch {
    values: Vec<f64>,
}

impl ExampleBatch {
    pub fn new(values: Vec<f64>) -> Result<Self, LearningError> {
        if values.len() < 2 {
            return Err(LearningError::BatchTooSmall(values.len()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(LearningError::NonFiniteExample { index });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub post_mean: f64,
    pub post_var: f64,
}

pub fn estimate_naive(batch: &ExampleBatch) -> f64 {
    batch.mean()
}

fn shrinkage(model: &PhoneticModel, n: usize, tau: f64) -> f64 {
    model.sigma_a * model.sigma_a / (n as f64 * tau * tau)
}

/// Gaussian posterior over c under the prior N(μ_a, τ²).
pub fn simple_posterior(batch: &ExampleBatch, model: &PhoneticModel, tau: f64) -> PosteriorSummary {
    let n = batch.len();
    let r = shrinkage(model, n, tau);
    let d = 1.0 + r;
    PosteriorSummary {
        post_mean: (batch.mean() + (d - 1.0) * model.mu_a) / d,
        post_var: model.sigma_a * model.sigma_a / n as f64 / d,
    }
}

/// Posterior mean, which is also the MAP estimate.
pub fn estimate_simple(batch: &ExampleBatch, model: &PhoneticModel, tau: f64) -> f64 {
    simple_from_mean(batch.mean(), batch.len(), model, tau)
}

fn simple_from_mean(ybar: f64, n: usize, model: &PhoneticModel, tau: f64) -> f64 {
    let d = 1.0 + shrinkage(model, n, tau);
    (ybar + (d - 1.0) * model.mu_a) / d
}

/// Unnormalized log posterior of c under the quadratic prior
/// p(c) ∝ a(μ_a−μ_i)² + (c − mid)².
pub fn complex_log_posterior(
    c: f64,
    batch: &ExampleBatch,
    model: &PhoneticModel,
    a: f64,
) -> Result<f64, LearningError> {
    let s2 = model.sigma_a * model.sigma_a;
    let sse: f64 = batch.values().iter().map(|y| (y - c) * (y - c)).sum();
    let u = c - model.midpoint();
    let arg = a * model.span() * model.span() + u * u;
    if !(arg > 0.0) {
        return Err(LearningError::Domain { c, value: arg });
    }
    Ok(-sse / (2.0 * s2) + arg.ln())
}

/// Below this value of `a` the quadratic-prior posterior may have two
/// separate modes: 4σ_a²/(n(μ_a−μ_i)²).
pub fn concavity_threshold(model: &PhoneticModel, n: usize) -> f64 {
    4.0 * model.sigma_a * model.sigma_a / (n as f64 * model.span() * model.span())
}

/// Global MAP estimate over [μ_i, μ_a] under the quadratic prior.
pub fn estimate_complex(batch: &ExampleBatch, model: &PhoneticModel, a: f64) -> f64 {
    QuadraticMap::new(model, batch.len(), a).estimate(batch.mean())
}

/// Best point of the grid μ_i, μ_i + spacing, … (plus μ_a itself), by
/// direct evaluation of [`complex_log_posterior`]. Ties go to the smaller c.
pub fn grid_map_oracle(
    batch: &ExampleBatch,
    model: &PhoneticModel,
    a: f64,
    spacing: f64,
) -> Result<f64, LearningError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(LearningError::InvalidSpacing(spacing));
    }
    let steps = ((model.mu_a - model.mu_i) / spacing).floor() as usize;
    let mut points: Vec<f64> = (0..=steps).map(|k| model.mu_i + k as f64 * spacing).collect();
    if *points.last().unwrap() < model.mu_a {
        points.push(model.mu_a);
    }
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for c in points {
        let value = complex_log_posterior(c, batch, model, a)?;
        if value > best.1 {
            best = (c, value);
        }
    }
    Ok(best.0)
}

/// Precomputed quadratic-prior MAP search for a fixed (model, n, a).
///
/// With u = c − mid and k = n/σ_a², the log posterior in terms of ȳ is
/// −k(ȳ − c)²/2 + ln(A + u²), A = a(μ_a−μ_i)². It is convex exactly on
/// |u| < u₀ where u₀² = (√(4kA+1) − kA − 1)/k (empty when kA ≥ 2), so the
/// range splits into at most two concave pieces, each searched by Brent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticMap {
    k: f64,
    big_a: f64,
    mid: f64,
    lo: f64,
    hi: f64,
    inflection: Option<f64>,
    tol: f64,
}

impl QuadraticMap {
    pub fn new(model: &PhoneticModel, n: usize, a: f64) -> Self {
        let k = n as f64 / (model.sigma_a * model.sigma_a);
        let span = model.span();
        let big_a = a * span * span;
        let ka = k * big_a;
        let inflection = (ka < 2.0).then(|| {
            let w = ((4.0 * ka + 1.0).sqrt() - ka - 1.0) / k;
            w.max(0.0).sqrt()
        });
        Self {
            k,
            big_a,
            mid: model.midpoint(),
            lo: model.mu_i,
            hi: model.mu_a,
            inflection,
            tol: 1e-5 * span,
        }
    }

    /// Whether the search has to consider two separate pieces.
    pub fn is_concave(&self) -> bool {
        self.inflection.is_none()
    }

    fn objective(&self, ybar: f64, c: f64) -> f64 {
        let u = c - self.mid;
        -0.5 * self.k * (ybar - c) * (ybar - c) + (self.big_a + u * u).ln()
    }

    pub fn estimate(&self, ybar: f64) -> f64 {
        let f = |c: f64| self.objective(ybar, c);
        let mut pieces = [(self.lo, self.hi), (f64::NAN, f64::NAN)];
        if let Some(u0) = self.inflection {
            pieces = [
                (self.lo, (self.mid - u0).max(self.lo)),
                ((self.mid + u0).min(self.hi), self.hi),
            ];
        }

        let mut candidates = [f64::NAN; 6];
        let mut len = 0;
        for &(lo, hi) in &pieces {
            if lo.is_nan() {
                continue;
            }
            candidates[len] = lo;
            candidates[len + 1] = hi;
            len += 2;
            if lo < hi {
                if let Ok(m) = maximize_scalar(f, lo, hi, self.tol) {
                    candidates[len] = m.x;
                    len += 1;
                }
            }
        }
        let candidates = &mut candidates[..len];
        candidates.sort_by(f64::total_cmp);

        let mut best = (candidates[0], f(candidates[0]));
        for &c in &candidates[1..] {
            let value = f(c);
            if value > best.1 {
                best = (c, value);
            }
        }
        best.0
    }
}

/// A learner's estimator with everything that does not depend on the data
/// precomputed. All three priors are functions of the batch mean alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Learner {
    Naive,
    Simple { d: f64, mu_a: f64 },
    Complex(QuadraticMap),
}

impl Learner {
    pub fn new(model: &PhoneticModel, learn: &LearningConfig) -> Self {
        match learn.prior {
            PriorSpec::Naive => Learner::Naive,
            PriorSpec::SimpleGaussian { tau } => Learner::Simple {
                d: 1.0 + shrinkage(model, learn.n, tau),
                mu_a: model.mu_a,
            },
            PriorSpec::ComplexQuadratic { a } => Learner::Complex(QuadraticMap::new(model, learn.n, a)),
        }
    }

    pub fn estimate_from_mean(&self, ybar: f64) -> f64 {
        match self {
            Learner::Naive => ybar,
            Learner::Simple { d, mu_a } => (ybar + (d - 1.0) * mu_a) / d,
            Learner::Complex(map) => map.estimate(ybar),
        }
    }

    pub fn estimate(&self, batch: &ExampleBatch) -> f64 {
        self.estimate_from_mean(batch.mean())
    }
}
