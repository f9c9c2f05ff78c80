//! Agent-based generational engine.
//!
//! Each generation, every learner picks teachers from the frozen previous
//! generation, hears `n` noisy tokens, and keeps its estimator's output as
//! its own contextual variant. Learner `i` of generation `t` draws all of its
//! randomness from the stream keyed by `(seed, t, i)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::learning::{ExampleBatch, Learner};
use crate::model::{Config, PhoneticModel, PopulationConfig, PopulationState, PriorSpec, TeacherRule};
use crate::numerics::rng::fair_binomial;
use crate::numerics::{assign_teachers, sample_normal, summarize, DistributionSummary, HistogramRange, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    FixedGenerations { generations: usize },
    /// Stop once mean, p05 and p95 have each moved by at most `delta` Hz
    /// over the last `window` generations, or at generation `cap`.
    Plateau { window: usize, delta: f64, cap: usize },
}

impl StopRule {
    pub const fn plateau() -> Self {
        StopRule::Plateau {
            window: 500,
            delta: 2.0,
            cap: 10_000,
        }
    }

    pub fn validate(&self) -> Result<(), StopRuleError> {
        match *self {
            StopRule::FixedGenerations { generations } if generations < 1 => Err(StopRuleError::Invalid(
                "fixed generation count must be at least 1".into(),
            )),
            StopRule::Plateau { window, delta, cap } => {
                if window < 1 {
                    Err(StopRuleError::Invalid("plateau window must be at least 1".into()))
                } else if !(delta > 0.0) || !delta.is_finite() {
                    Err(StopRuleError::Invalid(format!("plateau delta must be positive, got {delta}")))
                } else if cap < window {
                    Err(StopRuleError::Invalid(format!("cap {cap} is below window {window}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StopRuleError {
    #[error("invalid stop rule: {0}")]
    Invalid(String),
    #[error("cannot parse stop rule {0:?}; expected fixed:T, plateau or plateau:WINDOW:DELTA:CAP")]
    Syntax(String),
}

impl FromStr for StopRule {
    type Err = StopRuleError;

    /// `fixed:T`, `plateau`, or `plateau:WINDOW:DELTA:CAP`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || StopRuleError::Syntax(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let rule = match parts.as_slice() {
            ["fixed", t] => StopRule::FixedGenerations {
                generations: t.parse().map_err(|_| syntax())?,
            },
            ["plateau"] => StopRule::plateau(),
            ["plateau", w, d, c] => StopRule::Plateau {
                window: w.parse().map_err(|_| syntax())?,
                delta: d.parse().map_err(|_| syntax())?,
                cap: c.parse().map_err(|_| syntax())?,
            },
            _ => return Err(syntax()),
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopRule::FixedGenerations { generations } => write!(f, "fixed:{generations}"),
            StopRule::Plateau { window, delta, cap } => write!(f, "plateau:{window}:{delta}:{cap}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    CapReached,
    #[serde(rename = "fixed_T")]
    FixedT,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::CapReached => "cap_reached",
            StopReason::FixedT => "fixed_T",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StopReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "converged" => Ok(StopReason::Converged),
            "cap_reached" => Ok(StopReason::CapReached),
            "fixed_T" => Ok(StopReason::FixedT),
            other => Err(format!("unknown stop reason {other:?}")),
        }
    }
}

/// How a learner's examples are generated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Draw the batch mean directly from its exact conditional distribution
    /// given the teachers. Every estimator depends on the data only through
    /// the mean, so this is equivalent in distribution to `Examples`.
    #[default]
    Sufficient,
    /// Draw all `n` tokens individually.
    Examples,
}

impl FromStr for BatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sufficient" => Ok(BatchMode::Sufficient),
            "examples" => Ok(BatchMode::Examples),
            other => Err(format!("unknown batch mode {other:?}; expected sufficient or examples")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// One summary per generation, starting with the initial population.
    pub summaries: Vec<DistributionSummary>,
    pub final_state: PopulationState,
    pub stop_reason: StopReason,
    pub range: HistogramRange,
}

impl Trajectory {
    pub fn generations(&self) -> usize {
        self.summaries.len()
    }

    pub fn last(&self) -> &DistributionSummary {
        self.summaries.last().expect("trajectories are never empty")
    }
}

/// Tokens produced from per-example teacher values: y_i ~ N(c_i − λ, σ_a² + ω²).
pub fn produce_batch<R: Rng + ?Sized>(
    teacher_values: &[f64],
    model: &PhoneticModel,
    rng: &mut R,
) -> Result<ExampleBatch, crate::learning::LearningError> {
    let sd = model.production_variance().sqrt();
    let values = teacher_values
        .iter()
        .map(|&c| sample_normal(rng, c - model.lambda, sd))
        .collect();
    ExampleBatch::new(values)
}

/// Generation 1: M draws from N(start_mean, start_var), clamped to
/// [μ_i, μ_a] for the quadratic prior.
pub fn init_population(config: &Config, execution: Execution) -> PopulationState {
    let pop = &config.population;
    let model = &config.model;
    let sd = pop.start_var.sqrt();
    let clamp = matches!(config.learning.prior, PriorSpec::ComplexQuadratic { .. });
    let c_values = execution.map(pop.size, |i| {
        let mut rng = RngStream::new(pop.seed, 0, i as u64);
        let c = sample_normal(&mut rng, pop.start_mean, sd);
        if clamp {
            c.clamp(model.mu_i, model.mu_a)
        } else {
            c
        }
    });
    PopulationState { t: 1, c_values }
}

/// A configured simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Engine {
    config: Config,
    learner: Learner,
    execution: Execution,
    batch_mode: BatchMode,
}

impl Engine {
    /// Does not validate `config`; see [`crate::validate_config`].
    pub fn new(config: Config) -> Self {
        Self {
            learner: Learner::new(&config.model, &config.learning),
            config,
            execution: Execution::default(),
            batch_mode: BatchMode::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_batch_mode(mut self, batch_mode: BatchMode) -> Self {
        self.batch_mode = batch_mode;
        self
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn histogram_range(&self) -> HistogramRange {
        HistogramRange::for_model(&self.config.model)
    }

    pub fn init_population(&self) -> PopulationState {
        init_population(&self.config, self.execution)
    }

    /// New contextual variant for learner `i` of generation `t`, taught by
    /// `teachers` (generation `t − 1`).
    pub fn learn(&self, teachers: &[f64], t: usize, i: usize) -> f64 {
        let pop: &PopulationConfig = &self.config.population;
        let model = &self.config.model;
        let n = self.config.learning.n;
        let mut rng = RngStream::new(pop.seed, t as u64, i as u64);
        match self.batch_mode {
            BatchMode::Sufficient => {
                let m = teachers.len();
                let teacher_mean = match pop.teachers {
                    TeacherRule::One => teachers[rng.random_range(0..m)],
                    TeacherRule::Two => {
                        let first = teachers[rng.random_range(0..m)];
                        let second = teachers[rng.random_range(0..m)];
                        let k = fair_binomial(&mut rng, n) as f64;
                        (k * first + (n as f64 - k) * second) / n as f64
                    }
                    TeacherRule::All => {
                        (0..n).map(|_| teachers[rng.random_range(0..m)]).sum::<f64>() / n as f64
                    }
                };
                let sd = (model.production_variance() / n as f64).sqrt();
                let ybar = sample_normal(&mut rng, teacher_mean - model.lambda, sd);
                self.learner.estimate_from_mean(ybar)
            }
            BatchMode::Examples => {
                let idx = assign_teachers(&mut rng, pop.teachers, teachers.len(), n);
                let values: Vec<f64> = idx.into_iter().map(|j| teachers[j]).collect();
                let batch = produce_batch(&values, model, &mut rng).expect("n ≥ 2 finite examples");
                self.learner.estimate(&batch)
            }
        }
    }

    /// Writes generation `prev.t + 1` into `next`, reusing its buffer.
    pub fn step_into(&self, prev: &PopulationState, next: &mut PopulationState) {
        let t = prev.t + 1;
        next.t = t;
        next.c_values.resize(prev.c_values.len(), 0.0);
        let teachers = prev.c_values.as_slice();
        self.execution.fill(&mut next.c_values, |i| self.learn(teachers, t, i));
    }

    pub fn step_generation(&self, prev: &PopulationState) -> PopulationState {
        let mut next = PopulationState {
            t: prev.t + 1,
            c_values: Vec::new(),
        };
        self.step_into(prev, &mut next);
        next
    }

    /// Iterates from the initial population until `stop` fires.
    pub fn run(&self, stop: StopRule) -> Trajectory {
        self.run_from(self.init_population(), stop)
    }

    /// As [`Engine::run`], starting from an explicit generation-1 state.
    pub fn run_from(&self, start: PopulationState, stop: StopRule) -> Trajectory {
        let range = self.histogram_range();
        let mut current = start;
        let mut spare = PopulationState {
            t: 0,
            c_values: Vec::with_capacity(current.size()),
        };
        let mut summaries = vec![summarize(&current.c_values, &range)];
        let stop_reason = loop {
            let done = match stop {
                StopRule::FixedGenerations { generations } => {
                    (summaries.len() >= generations).then_some(StopReason::FixedT)
                }
                StopRule::Plateau { window, delta, cap } => {
                    let len = summaries.len();
                    if len > window && plateaued(&summaries[len - 1 - window], &summaries[len - 1], delta) {
                        Some(StopReason::Converged)
                    } else if len >= cap {
                        Some(StopReason::CapReached)
                    } else {
                        None
                    }
                }
            };
            if let Some(reason) = done {
                break reason;
            }
            self.step_into(&current, &mut spare);
            std::mem::swap(&mut current, &mut spare);
            summaries.push(summarize(&current.c_values, &range));
        };
        Trajectory {
            summaries,
            final_state: current,
            stop_reason,
            range,
        }
    }
}

fn plateaued(before: &DistributionSummary, after: &DistributionSummary, delta: f64) -> bool {
    (after.mean - before.mean).abs() <= delta
        && (after.p05 - before.p05).abs() <= delta
        && (after.p95 - before.p95).abs() <= delta
}

/// One generation with the default (parallel, sufficient-statistic) engine.
pub fn step_generation(state: &PopulationState, config: &Config) -> PopulationState {
    Engine::new(*config).step_generation(state)
}

/// A full run with the default engine.
pub fn run(config: &Config, stop: StopRule) -> Trajectory {
    Engine::new(*config).run(stop)
}
