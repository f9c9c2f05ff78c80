//! Mean/variance recurrences of the population distribution for naive and
//! Gaussian-prior learners, their fixed points and large-n expansions.
//!
//! These describe the infinite-population limit. The teacher count `m` is
//! general here; the simulator only exposes one, two and all teachers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LearningConfig, MomentState, PhoneticModel, PriorSpec, TeacherRule};

/// Number of teachers per learner in the infinite-population limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeacherCount {
    Finite(u64),
    Infinite,
}

impl TeacherCount {
    /// (n + m − 1)/(nm), the fraction of the parent variance passed on
    /// through a learner's pooled examples. Tends to 1/n as m → ∞.
    pub fn retention(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            TeacherCount::Finite(m) => {
                let m = m as f64;
                (n + m - 1.0) / (n * m)
            }
            TeacherCount::Infinite => 1.0 / n,
        }
    }

    /// (m − 1)/m, with limit 1.
    fn pooled_fraction(&self) -> f64 {
        match *self {
            TeacherCount::Finite(m) => (m as f64 - 1.0) / m as f64,
            TeacherCount::Infinite => 1.0,
        }
    }

    fn validate(&self) -> Result<(), AnalyticError> {
        match *self {
            TeacherCount::Finite(m) if m < 2 => Err(AnalyticError::InvalidTeacherCount(m)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecurrenceKind {
    NaiveSingle,
    NaiveMulti(TeacherCount),
    SimpleSingle,
    SimpleMulti(TeacherCount),
}

impl RecurrenceKind {
    /// The recurrence matching a prior and a simulator teacher rule, with
    /// "all" read as m → ∞. Fails for the quadratic prior, which has no
    /// closed-form moments.
    pub fn for_rule(prior: &PriorSpec, rule: TeacherRule) -> Result<Self, AnalyticError> {
        let multi = match rule {
            TeacherRule::One => None,
            TeacherRule::Two => Some(TeacherCount::Finite(2)),
            TeacherRule::All => Some(TeacherCount::Infinite),
        };
        match (prior, multi) {
            (PriorSpec::Naive, None) => Ok(RecurrenceKind::NaiveSingle),
            (PriorSpec::Naive, Some(m)) => Ok(RecurrenceKind::NaiveMulti(m)),
            (PriorSpec::SimpleGaussian { .. }, None) => Ok(RecurrenceKind::SimpleSingle),
            (PriorSpec::SimpleGaussian { .. }, Some(m)) => Ok(RecurrenceKind::SimpleMulti(m)),
            (PriorSpec::ComplexQuadratic { .. }, _) => Err(AnalyticError::NoClosedForm),
        }
    }

    fn teachers(&self) -> Option<TeacherCount> {
        match *self {
            RecurrenceKind::NaiveMulti(m) | RecurrenceKind::SimpleMulti(m) => Some(m),
            _ => None,
        }
    }

    fn is_simple(&self) -> bool {
        matches!(self, RecurrenceKind::SimpleSingle | RecurrenceKind::SimpleMulti(_))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("PriorMismatch: recurrence {kind:?} does not apply to a {prior} prior")]
    PriorMismatch { kind: RecurrenceKind, prior: &'static str },
    #[error("teacher count must be at least 2, got {0}")]
    InvalidTeacherCount(u64),
    #[error("the quadratic prior has no closed-form moment recurrence")]
    NoClosedForm,
    #[error("ComparisonRequiresZeroBias: lambda and omega must both be 0")]
    ComparisonRequiresZeroBias,
    #[error("trajectory length must be at least 1")]
    EmptyTrajectory,
}

/// Long-run behaviour of the population mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeanFixedPoint {
    /// Converges to this value.
    Attracted(f64),
    /// Every mean is preserved (no channel bias, no prior).
    Neutral,
    /// Moves by `per_step` every generation without bound.
    Drifting { per_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub mean: MeanFixedPoint,
    /// Stationary variance; `None` when the variance grows without bound.
    pub var_fp: Option<f64>,
    /// 1/B: the factor by which |Var − var_fp| shrinks per generation.
    pub geometric_rate: Option<f64>,
}

impl FixedPointReport {
    pub fn mean_fp(&self) -> Option<f64> {
        match self.mean {
            MeanFixedPoint::Attracted(x) => Some(x),
            _ => None,
        }
    }
}

/// D = 1 + σ_a²/(nτ²).
pub fn shrinkage_denominator(model: &PhoneticModel, n: usize, tau: f64) -> f64 {
    1.0 + model.sigma_a * model.sigma_a / (n as f64 * tau * tau)
}

fn check(kind: RecurrenceKind, learn: &LearningConfig) -> Result<Option<f64>, AnalyticError> {
    if let Some(m) = kind.teachers() {
        m.validate()?;
    }
    match (kind.is_simple(), learn.prior) {
        (false, PriorSpec::Naive) => Ok(None),
        (true, PriorSpec::SimpleGaussian { tau }) => Ok(Some(tau)),
        (_, prior) => Err(AnalyticError::PriorMismatch {
            kind,
            prior: prior.kind_name(),
        }),
    }
}

/// Slope of the mean map and the noise added to the variance each step.
#[derive(Debug, Clone, Copy)]
struct AffineStep {
    mean_slope: f64,
    var_offset: f64,
}

fn affine_step(
    kind: RecurrenceKind,
    model: &PhoneticModel,
    learn: &LearningConfig,
) -> Result<AffineStep, AnalyticError> {
    let tau = check(kind, learn)?;
    let n = learn.n;
    let noise = model.production_variance() / n as f64;
    let d = tau.map_or(1.0, |tau| shrinkage_denominator(model, n, tau));
    Ok(AffineStep {
        mean_slope: 1.0 / d,
        var_offset: noise / (d * d),
    })
}

/// Advances (mean, variance) by one generation.
pub fn step_moments(
    kind: RecurrenceKind,
    state: MomentState,
    model: &PhoneticModel,
    learn: &LearningConfig,
) -> Result<MomentState, AnalyticError> {
    let tau = check(kind, learn)?;
    let n = learn.n as f64;
    let noise = model.production_variance() / n;
    let next = match kind {
        RecurrenceKind::NaiveSingle => MomentState {
            mean: state.mean - model.lambda,
            var: state.var + noise,
        },
        RecurrenceKind::NaiveMulti(m) => MomentState {
            mean: state.mean - model.lambda,
            var: noise + state.var * m.retention(learn.n),
        },
        RecurrenceKind::SimpleSingle | RecurrenceKind::SimpleMulti(_) => {
            let d = shrinkage_denominator(model, learn.n, tau.unwrap_or(f64::INFINITY));
            let retention = kind.teachers().map_or(1.0, |m| m.retention(learn.n));
            MomentState {
                mean: (state.mean - model.lambda + (d - 1.0) * model.mu_a) / d,
                var: noise / (d * d) + state.var * retention / (d * d),
            }
        }
    };
    Ok(next)
}

/// `generations` states starting with `start`; element `t` is `t`
/// applications of [`step_moments`].
pub fn trajectory_moments(
    kind: RecurrenceKind,
    start: MomentState,
    model: &PhoneticModel,
    learn: &LearningConfig,
    generations: usize,
) -> Result<Vec<MomentState>, AnalyticError> {
    if generations == 0 {
        return Err(AnalyticError::EmptyTrajectory);
    }
    let mut out = Vec::with_capacity(generations);
    let mut state = start;
    out.push(state);
    for _ in 1..generations {
        state = step_moments(kind, state, model, learn)?;
        out.push(state);
    }
    Ok(out)
}

/// Stationary mean and variance, written out in closed form rather than by
/// solving the recurrence.
pub fn fixed_points(
    kind: RecurrenceKind,
    model: &PhoneticModel,
    learn: &LearningConfig,
) -> Result<FixedPointReport, AnalyticError> {
    let tau = check(kind, learn)?;
    let n = learn.n as f64;
    let s2 = model.sigma_a * model.sigma_a;
    let production = model.production_variance();
    let naive_mean = if model.lambda == 0.0 {
        MeanFixedPoint::Neutral
    } else {
        MeanFixedPoint::Drifting {
            per_step: -model.lambda,
        }
    };
    let report = match kind {
        RecurrenceKind::NaiveSingle => FixedPointReport {
            mean: naive_mean,
            var_fp: None,
            geometric_rate: None,
        },
        RecurrenceKind::NaiveMulti(m) => {
            let var_fp = production / (m.pooled_fraction() * (n - 1.0));
            FixedPointReport {
                mean: naive_mean,
                var_fp: Some(var_fp),
                geometric_rate: Some(m.retention(learn.n)),
            }
        }
        RecurrenceKind::SimpleSingle | RecurrenceKind::SimpleMulti(_) => {
            let tau = tau.unwrap_or(f64::INFINITY);
            let t2 = tau * tau;
            let k = model.noise_ratio();
            let d = shrinkage_denominator(model, learn.n, tau);
            let tail = 2.0 + s2 / (n * t2);
            let (var_fp, rate) = match kind.teachers() {
                None => (t2 * k / tail, 1.0 / (d * d)),
                Some(m) => {
                    let pooled = (n - 1.0) * m.pooled_fraction() * t2 / s2;
                    (t2 * k / (pooled + tail), m.retention(learn.n) / (d * d))
                }
            };
            FixedPointReport {
                mean: MeanFixedPoint::Attracted(model.mu_a - model.lambda * n * t2 / s2),
                var_fp: Some(var_fp),
                geometric_rate: Some(rate),
            }
        }
    };
    Ok(report)
}

/// Variance and mean after `t − 1` steps from generation-1 moments, from the
/// geometric closed form (or the linear one when there is no fixed point).
pub fn closed_form_moments(
    kind: RecurrenceKind,
    start: MomentState,
    model: &PhoneticModel,
    learn: &LearningConfig,
    t: usize,
) -> Result<MomentState, AnalyticError> {
    let report = fixed_points(kind, model, learn)?;
    let steps = t.saturating_sub(1) as i32;
    let step = affine_step(kind, model, learn)?;
    let mean = match report.mean {
        MeanFixedPoint::Attracted(fp) => fp + (start.mean - fp) * step.mean_slope.powi(steps),
        MeanFixedPoint::Neutral => start.mean,
        MeanFixedPoint::Drifting { per_step } => start.mean + per_step * steps as f64,
    };
    let var = match (report.var_fp, report.geometric_rate) {
        (Some(fp), Some(rate)) => fp + (start.var - fp) * rate.powi(steps),
        _ => start.var + step.var_offset * steps as f64,
    };
    Ok(MomentState { mean, var })
}

/// First-order large-n stable variance for Gaussian-prior learners, with
/// K = 1 + ω²/σ_a²:
/// single teacher τ²K/2 − σ_a²K/(4n); m teachers σ_a²K·(m/(m−1))/n.
pub fn large_n_var_expansion(
    kind: RecurrenceKind,
    model: &PhoneticModel,
    learn: &LearningConfig,
) -> Result<f64, AnalyticError> {
    let tau = check(kind, learn)?;
    let Some(tau) = tau else {
        return Err(AnalyticError::PriorMismatch {
            kind,
            prior: learn.prior.kind_name(),
        });
    };
    let n = learn.n as f64;
    let s2 = model.sigma_a * model.sigma_a;
    let k = model.noise_ratio();
    Ok(match kind.teachers() {
        None => tau * tau * k / 2.0 - s2 * k / (4.0 * n),
        Some(m) => s2 * k / (m.pooled_fraction() * n),
    })
}

/// Stable variances of a single-teacher population and of an iterated
/// learning chain under the same Gaussian-prior learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainComparison {
    /// τ²(2 + σ_a²/(nτ²))⁻¹
    pub population_var: f64,
    /// τ²(1 + σ_a²/(nτ²))
    pub chain_var: f64,
}

/// Requires λ = 0 and ω = 0.
pub fn iterated_learning_comparison(
    model: &PhoneticModel,
    learn: &LearningConfig,
) -> Result<ChainComparison, AnalyticError> {
    let PriorSpec::SimpleGaussian { tau } = learn.prior else {
        return Err(AnalyticError::PriorMismatch {
            kind: RecurrenceKind::SimpleSingle,
            prior: learn.prior.kind_name(),
        });
    };
    if model.lambda != 0.0 || model.omega != 0.0 {
        return Err(AnalyticError::ComparisonRequiresZeroBias);
    }
    let t2 = tau * tau;
    let ratio = model.sigma_a * model.sigma_a / (learn.n as f64 * t2);
    Ok(ChainComparison {
        population_var: t2 / (2.0 + ratio),
        chain_var: t2 * (1.0 + ratio),
    })
}
