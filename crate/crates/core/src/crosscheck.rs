//! Monte Carlo moments against the analytic recurrences.
//!
//! The analytic trajectory starts from the simulated generation-1 moments.
//! Sampling error then enters every generation and is carried forward by
//! the same linear maps that move the moments: with `q` the mean slope and
//! `r` the variance slope of one recurrence step, the deviations follow
//! e' = q·e + η and d' = r·d + ε with Var(η) = V'/M and Var(ε) = 2V'²/M,
//! where V' is the analytic variance after the step. The standard error at
//! each generation is the square root of the accumulated variance.

use serde::{Deserialize, Serialize};

use crate::analytic::{fixed_points, step_moments, trajectory_moments, AnalyticError, RecurrenceKind};
use crate::model::{Config, MomentState};
use crate::simulate::{Engine, StopRule};

pub const SE_TOLERANCE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckRow {
    pub t: usize,
    pub mc_mean: f64,
    pub analytic_mean: f64,
    pub mean_se: f64,
    pub mc_var: f64,
    pub analytic_var: f64,
    pub var_se: f64,
}

impl CrossCheckRow {
    fn z(diff: f64, se: f64) -> f64 {
        if se > 0.0 {
            diff.abs() / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn mean_z(&self) -> f64 {
        Self::z(self.mc_mean - self.analytic_mean, self.mean_se)
    }

    pub fn var_z(&self) -> f64 {
        Self::z(self.mc_var - self.analytic_var, self.var_se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub kind: RecurrenceKind,
    pub population: usize,
    pub rows: Vec<CrossCheckRow>,
}

impl CrossCheckReport {
    pub fn max_mean_z(&self) -> f64 {
        self.rows.iter().map(CrossCheckRow::mean_z).fold(0.0, f64::max)
    }

    pub fn max_var_z(&self) -> f64 {
        self.rows.iter().map(CrossCheckRow::var_z).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_mean_z() <= SE_TOLERANCE && self.max_var_z() <= SE_TOLERANCE
    }
}

/// Slopes of the mean and variance maps, read off two recurrence steps.
fn slopes(kind: RecurrenceKind, config: &Config) -> Result<(f64, f64), AnalyticError> {
    let (model, learn) = (&config.model, &config.learning);
    let zero = step_moments(kind, MomentState { mean: 0.0, var: 0.0 }, model, learn)?;
    let one = step_moments(kind, MomentState { mean: 1.0, var: 1.0 }, model, learn)?;
    Ok((one.mean - zero.mean, one.var - zero.var))
}

/// Builds the report from simulated per-generation moments (generation 1
/// first) and the population size.
pub fn compare_moments(
    kind: RecurrenceKind,
    config: &Config,
    simulated: &[MomentState],
) -> Result<CrossCheckReport, AnalyticError> {
    fixed_points(kind, &config.model, &config.learning)?;
    let analytic = trajectory_moments(kind, simulated[0], &config.model, &config.learning, simulated.len())?;
    let (q, r) = slopes(kind, config)?;
    let m = config.population.size as f64;
    let (mut mean_acc, mut var_acc) = (0.0f64, 0.0f64);
    let rows = simulated
        .iter()
        .zip(&analytic)
        .enumerate()
        .map(|(i, (mc, an))| {
            if i > 0 {
                mean_acc = q * q * mean_acc + an.var / m;
                var_acc = r * r * var_acc + 2.0 * an.var * an.var / m;
            }
            CrossCheckRow {
                t: i + 1,
                mc_mean: mc.mean,
                analytic_mean: an.mean,
                mean_se: mean_acc.sqrt(),
                mc_var: mc.var,
                analytic_var: an.var,
                var_se: var_acc.sqrt(),
            }
        })
        .collect();
    Ok(CrossCheckReport {
        kind,
        population: config.population.size,
        rows,
    })
}

/// Simulates `generations` generations with `engine` and compares them with
/// the matching recurrence. Fails for the quadratic prior.
pub fn run_cross_check(engine: &Engine, generations: usize) -> Result<CrossCheckReport, AnalyticError> {
    let config = engine.config();
    let kind = RecurrenceKind::for_rule(&config.learning.prior, config.population.teachers)?;
    if generations == 0 {
        return Err(AnalyticError::EmptyTrajectory);
    }
    let traj = engine.run(StopRule::FixedGenerations { generations });
    let simulated: Vec<MomentState> = traj
        .summaries
        .iter()
        .map(|s| MomentState { mean: s.mean, var: s.var })
        .collect();
    compare_moments(kind, config, &simulated)
}
