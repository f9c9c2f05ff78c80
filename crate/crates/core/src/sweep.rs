//! Parameter grids over prior strength, channel bias and teacher rule, and
//! detection of abrupt jumps in the final population mean.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::model::{as_count, as_float, as_str, flatten, Config, ConfigBuilder, ParseError, TeacherRule};
use crate::numerics::derive_seed;
use crate::simulate::{BatchMode, Engine, StopReason, StopRule};

pub const DEFAULT_A_VALUES: [f64; 6] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Everything not varied by the grid. Its prior kind selects what
    /// `strengths` means (a for the quadratic prior, τ for the Gaussian one).
    pub base: Config,
    pub strengths: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub rules: Vec<TeacherRule>,
    pub replicates: usize,
    pub stop_multi: StopRule,
    pub stop_single: StopRule,
    pub size_multi: usize,
    pub size_single: usize,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("InsufficientGrid: need at least 4 lambda values, got {0}")]
    InsufficientGrid(usize),
}

impl SweepGrid {
    /// Default grid around `base`: λ ∈ {0, 0.25, …, 2}, all
    /// three rules, 3 replicates, 2500 fixed generations with M = 2500 for
    /// multi-teacher cells and the plateau rule with M = 50000 for one
    /// teacher.
    pub fn with_base(base: Config) -> Self {
        let strengths = match base.learning.prior.strength() {
            Some(_) if base.learning.prior.is_bounded() => DEFAULT_A_VALUES.to_vec(),
            Some(s) => vec![s],
            None => Vec::new(),
        };
        Self {
            base,
            strengths,
            lambdas: (0..=8).map(|k| k as f64 * 0.25).collect(),
            rules: TeacherRule::ALL_RULES.to_vec(),
            replicates: 3,
            stop_multi: StopRule::FixedGenerations { generations: 2500 },
            stop_single: StopRule::plateau(),
            size_multi: 2500,
            size_single: 50_000,
        }
    }

    /// Parses a grid file: sweep keys (`a_values` or `tau_values`,
    /// `lambda_values`, `teachers`, `replicates`, `stop_multi`,
    /// `stop_single`, `M_multi`, `M_single`) plus any configuration key for
    /// the base.
    pub fn from_kv_str(text: &str) -> Result<Self, SweepError> {
        let table: toml::Table = text.parse().map_err(ParseError::from)?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);

        let mut builder = ConfigBuilder::default();
        let mut strengths = None;
        let mut lambdas = None;
        let mut rules = None;
        let mut replicates = None;
        let mut stops = [None, None];
        let mut sizes = [None, None];
        for (key, value) in &flat {
            match key.as_str() {
                "a_values" | "tau_values" => strengths = Some(float_list(key, value)?),
                "lambda_values" => lambdas = Some(float_list(key, value)?),
                "teachers" if value.is_array() => {
                    let list = value.as_array().unwrap();
                    let parsed = list
                        .iter()
                        .map(|v| as_str(key, v)?.parse::<TeacherRule>())
                        .collect::<Result<Vec<_>, _>>()?;
                    rules = Some(parsed);
                }
                "replicates" => replicates = Some(as_count(key, value)?),
                "stop_multi" | "stop_single" => {
                    let raw = as_str(key, value)?;
                    let rule = raw.parse::<StopRule>().map_err(|_| ParseError::BadValue {
                        key: key.clone(),
                        value: raw.into(),
                    })?;
                    stops[(key == "stop_single") as usize] = Some(rule);
                }
                "M_multi" => sizes[0] = Some(as_count(key, value)?),
                "M_single" => sizes[1] = Some(as_count(key, value)?),
                _ => builder.set_value(key, value)?,
            }
        }
        if let Some(first) = strengths.as_ref().and_then(|s: &Vec<f64>| s.first()) {
            builder.default_strength(*first);
        }
        let base = builder.build()?;
        let mut grid = Self::with_base(base);
        if let Some(s) = strengths {
            grid.strengths = s;
        }
        if let Some(l) = lambdas {
            grid.lambdas = l;
        }
        if let Some(r) = rules {
            grid.rules = r;
        }
        grid.replicates = replicates.unwrap_or(grid.replicates);
        grid.stop_multi = stops[0].unwrap_or(grid.stop_multi);
        grid.stop_single = stops[1].unwrap_or(grid.stop_single);
        grid.size_multi = sizes[0].unwrap_or(grid.size_multi);
        grid.size_single = sizes[1].unwrap_or(grid.size_single);
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |msg: &str| Err(SweepError::InvalidGrid(msg.into()));
        if self.lambdas.is_empty() {
            return bad("lambda_values is empty");
        }
        if self.rules.is_empty() {
            return bad("teachers is empty");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.base.learning.prior.strength().is_some() && self.strengths.is_empty() {
            return bad("the prior needs a nonempty a_values or tau_values list");
        }
        self.stop_multi
            .validate()
            .and(self.stop_single.validate())
            .map_err(|e| SweepError::InvalidGrid(e.to_string()))
    }

    /// Strength axis; a single `None` for the naive prior.
    fn strength_axis(&self) -> Vec<Option<f64>> {
        if self.base.learning.prior.strength().is_some() {
            self.strengths.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    }

    /// All cells in output order: rule, strength, λ, replicate.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &rule in &self.rules {
            for strength in self.strength_axis() {
                for &lambda in &self.lambdas {
                    for replicate in 0..self.replicates {
                        cells.push(Cell {
                            rule,
                            strength,
                            lambda,
                            replicate,
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn stop_for(&self, rule: TeacherRule) -> StopRule {
        match rule {
            TeacherRule::One => self.stop_single,
            _ => self.stop_multi,
        }
    }

    /// The full run configuration of one cell, seeded from the cell's own
    /// coordinates so no cell depends on which others are in the grid.
    pub fn cell_config(&self, cell: &Cell) -> Config {
        let mut config = self.base;
        if let Some(s) = cell.strength {
            config.learning.prior = config.learning.prior.with_strength(s);
        }
        config.model.lambda = cell.lambda;
        config.population.teachers = cell.rule;
        config.population.size = match cell.rule {
            TeacherRule::One => self.size_single,
            _ => self.size_multi,
        };
        config.population.seed = derive_seed(
            self.base.population.seed,
            &[
                cell.rule as u64,
                cell.strength.map_or(u64::MAX, f64::to_bits),
                cell.lambda.to_bits(),
                cell.replicate as u64,
            ],
        );
        config
    }
}

fn float_list(key: &str, value: &toml::Value) -> Result<Vec<f64>, ParseError> {
    value
        .as_array()
        .ok_or_else(|| ParseError::WrongType {
            key: key.into(),
            expected: "a list of numbers",
        })?
        .iter()
        .map(|v| as_float(key, v))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub rule: TeacherRule,
    pub strength: Option<f64>,
    pub lambda: f64,
    pub replicate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellOutcome {
    Finished {
        final_mean: f64,
        final_var: f64,
        stop_reason: StopReason,
        generations: usize,
    },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub cell: Cell,
    pub outcome: CellOutcome,
    pub seconds: f64,
}

impl SweepRecord {
    pub fn final_mean(&self) -> Option<f64> {
        match self.outcome {
            CellOutcome::Finished { final_mean, .. } => Some(final_mean),
            CellOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub records: Vec<SweepRecord>,
}

/// Runs one cell. Invalid cell parameters become a `Failed` outcome.
pub fn run_cell(grid: &SweepGrid, cell: &Cell, execution: Execution, batch_mode: BatchMode) -> SweepRecord {
    let start = Instant::now();
    let config = grid.cell_config(cell);
    let outcome = match config.validate() {
        Err(report) => CellOutcome::Failed(report.to_string()),
        Ok(()) => {
            let traj = Engine::new(config)
                .with_execution(execution)
                .with_batch_mode(batch_mode)
                .run(grid.stop_for(cell.rule));
            let last = traj.last();
            CellOutcome::Finished {
                final_mean: last.mean,
                final_var: last.var,
                stop_reason: traj.stop_reason,
                generations: traj.generations(),
            }
        }
    };
    SweepRecord {
        cell: *cell,
        outcome,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every cell, distributing whole cells across workers.
pub fn run_sweep(grid: &SweepGrid, execution: Execution, batch_mode: BatchMode) -> SweepResult {
    let cells = grid.cells();
    let records = execution.map(cells.len(), |i| run_cell(grid, &cells[i], Execution::Sequential, batch_mode));
    SweepResult {
        grid: grid.clone(),
        records,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bifurcation {
    pub lambda_star: f64,
    pub jump: f64,
}

/// Largest jump in a (λ, final mean) row. Replicates at equal λ are
/// averaged first. Returns `None` unless the jump exceeds half of `span`.
pub fn detect_bifurcation_row(points: &[(f64, f64)], span: f64) -> Result<Option<Bifurcation>, SweepError> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut row: Vec<(f64, f64, usize)> = Vec::new();
    for (lambda, mean) in sorted {
        match row.last_mut() {
            Some(last) if last.0 == lambda => {
                last.1 += mean;
                last.2 += 1;
            }
            _ => row.push((lambda, mean, 1)),
        }
    }
    if row.len() < 4 {
        return Err(SweepError::InsufficientGrid(row.len()));
    }
    let row: Vec<(f64, f64)> = row.into_iter().map(|(l, sum, k)| (l, sum / k as f64)).collect();
    let best = row
        .windows(2)
        .map(|w| Bifurcation {
            lambda_star: 0.5 * (w[0].0 + w[1].0),
            jump: (w[1].1 - w[0].1).abs(),
        })
        .fold(None::<Bifurcation>, |best, b| match best {
            Some(prev) if prev.jump >= b.jump => Some(prev),
            _ => Some(b),
        })
        .expect("at least 4 points");
    Ok((best.jump > 0.5 * span).then_some(best))
}

/// [`detect_bifurcation_row`] over the finished cells of one (strength,
/// rule) row of a sweep.
pub fn detect_bifurcation(
    result: &SweepResult,
    strength: Option<f64>,
    rule: TeacherRule,
) -> Result<Option<Bifurcation>, SweepError> {
    let points: Vec<(f64, f64)> = result
        .records
        .iter()
        .filter(|r| r.cell.rule == rule && r.cell.strength.map(f64::to_bits) == strength.map(f64::to_bits))
        .filter_map(|r| r.final_mean().map(|m| (r.cell.lambda, m)))
        .collect();
    detect_bifurcation_row(&points, result.grid.base.model.span())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PriorSpec;

    fn small_grid() -> SweepGrid {
        let mut base = Config::default();
        base.learning.prior = PriorSpec::ComplexQuadratic { a: 0.01 };
        let mut grid = SweepGrid::with_base(base);
        grid.strengths = vec![0.01];
        grid.lambdas = vec![0.25, 1.0];
        grid.rules = vec![TeacherRule::Two];
        grid.replicates = 2;
        grid.stop_multi = StopRule::FixedGenerations { generations: 20 };
        grid.size_multi = 100;
        grid
    }

    #[test]
    fn step_row() {
        let row = [(1.0, 730.0), (2.0, 730.0), (3.0, 530.0), (4.0, 530.0)];
        let b = detect_bifurcation_row(&row, 200.0).unwrap().unwrap();
        assert_eq!(b.lambda_star, 2.5);
        assert_eq!(b.jump, 200.0);
        let reversed: Vec<_> = row.iter().rev().copied().collect();
        assert_eq!(detect_bifurcation_row(&reversed, 200.0).unwrap(), Some(b));
    }

    #[test]
    fn gentle_row_has_no_bifurcation() {
        let row: Vec<(f64, f64)> = (0..9).map(|k| (k as f64 * 0.25, 730.0 - 10.0 * k as f64)).collect();
        assert_eq!(detect_bifurcation_row(&row, 200.0).unwrap(), None);
    }

    #[test]
    fn short_row_is_rejected() {
        let row = [(1.0, 730.0), (2.0, 530.0), (3.0, 530.0), (3.0, 531.0)];
        assert!(matches!(
            detect_bifurcation_row(&row, 200.0),
            Err(SweepError::InsufficientGrid(3))
        ));
    }

    #[test]
    fn replicates_are_averaged() {
        let row = [(1.0, 730.0), (2.0, 730.0), (2.0, 530.0), (3.0, 530.0), (4.0, 530.0)];
        let b = detect_bifurcation_row(&row, 190.0).unwrap().unwrap();
        assert_eq!((b.lambda_star, b.jump), (1.5, 100.0));
        // the threshold is strict
        assert_eq!(detect_bifurcation_row(&row, 200.0).unwrap(), None);
    }

    #[test]
    fn grid_file_parsing() {
        let text = r#"
            prior.kind = "complex"
            a_values = [0.001, 0.01]
            lambda_values = [0, 0.5, 1]
            teachers = ["two", "all"]
            replicates = 2
            stop_multi = "fixed:100"
            M_multi = 400
            seed = 9
        "#;
        let grid = SweepGrid::from_kv_str(text).unwrap();
        assert_eq!(grid.strengths, vec![0.001, 0.01]);
        assert_eq!(grid.lambdas, vec![0.0, 0.5, 1.0]);
        assert_eq!(grid.rules, vec![TeacherRule::Two, TeacherRule::All]);
        assert_eq!(grid.stop_multi, StopRule::FixedGenerations { generations: 100 });
        assert_eq!(grid.stop_single, StopRule::plateau());
        assert_eq!(grid.size_multi, 400);
        assert_eq!(grid.base.population.seed, 9);
        assert_eq!(grid.cells().len(), 2 * 2 * 3 * 2);

        assert!(SweepGrid::from_kv_str("replicates = 0").is_err());
        assert!(SweepGrid::from_kv_str("lambda_values = []").is_err());
        assert!(SweepGrid::from_kv_str("bogus = 1").is_err());
        assert!(SweepGrid::from_kv_str("stop_multi = \"forever\"").is_err());
    }

    #[test]
    fn naive_grid_has_one_strength() {
        let grid = SweepGrid::with_base(Config::default());
        assert!(grid.cells().iter().all(|c| c.strength.is_none()));
        assert_eq!(grid.cells().len(), 9 * 3 * 3);
    }

    #[test]
    fn single_cell_matches_direct_run() {
        let mut grid = small_grid();
        grid.lambdas = vec![1.0];
        grid.replicates = 1;
        let result = run_sweep(&grid, Execution::Parallel, BatchMode::Sufficient);
        let cell = grid.cells()[0];
        let traj = Engine::new(grid.cell_config(&cell)).run(grid.stop_multi);
        assert_eq!(result.records[0].final_mean(), Some(traj.last().mean));
    }

    #[test]
    fn cells_do_not_depend_on_their_neighbours() {
        let grid = small_grid();
        let full = run_sweep(&grid, Execution::Parallel, BatchMode::Sufficient);
        let mut reduced = grid.clone();
        reduced.lambdas = vec![1.0];
        let part = run_sweep(&reduced, Execution::Sequential, BatchMode::Sufficient);
        let pick = |r: &SweepResult| {
            r.records
                .iter()
                .filter(|x| x.cell.lambda == 1.0)
                .map(|x| x.outcome.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(pick(&full), pick(&part));
        assert_ne!(full.records[0].outcome, full.records[1].outcome);
    }

    #[test]
    fn failed_cells_are_recorded() {
        let mut grid = small_grid();
        grid.lambdas = vec![-1.0, 0.5];
        grid.replicates = 1;
        let result = run_sweep(&grid, Execution::Sequential, BatchMode::Sufficient);
        assert!(matches!(result.records[0].outcome, CellOutcome::Failed(_)));
        assert!(matches!(result.records[1].outcome, CellOutcome::Finished { .. }));
    }
}
