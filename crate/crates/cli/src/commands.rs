use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde_json::json;

use actuator::analytic::{
    fixed_points, iterated_learning_comparison, large_n_var_expansion, trajectory_moments, RecurrenceKind,
    TeacherCount,
};
use actuator::crosscheck::run_cross_check;
use actuator::learning::{grid_map_oracle, simple_posterior, ExampleBatch, Learner};
use actuator::output::{
    read_sweep_csv, write_bifurcation_csv, write_cross_check_csv, write_density_csv, write_manifest,
    write_moments_csv, write_sweep_csv, write_trajectory_csv, BifurcationRow, Manifest,
};
use actuator::simulate::{BatchMode, Engine, StopRule};
use actuator::sweep::{detect_bifurcation_row, run_sweep, SweepError, SweepGrid};
use actuator::{Config, ConfigBuilder, Execution, MomentState, PriorSpec, TeacherRule};

use crate::{Command, ConfigArgs, Failure};

type Outcome = Result<(), Failure>;

pub fn dispatch(command: Command, threads: usize) -> Outcome {
    match command {
        Command::Validate { config } => validate(&config),
        Command::Analytic {
            config,
            generations,
            m,
            out,
        } => analytic(&config, generations, m, out.as_deref(), threads),
        Command::Estimate {
            config,
            batch,
            grid_spacing,
        } => estimate(&config, &batch, grid_spacing),
        Command::Simulate {
            config,
            stop,
            out,
            density,
            batch_mode,
        } => simulate(&config, &stop, &out, density.as_deref(), &batch_mode, threads),
        Command::Sweep {
            grid,
            out,
            no_timing,
            batch_mode,
        } => sweep(&grid, &out, no_timing, &batch_mode, threads),
        Command::Bifurcate { input, out, config } => bifurcate(&input, &out, &config, threads),
        Command::CrossCheck {
            config,
            generations,
            population,
            out,
            batch_mode,
        } => cross_check(&config, generations, population, out.as_deref(), &batch_mode, threads),
    }
}

/// Reads the file and overrides without validating.
fn load_unchecked(args: &ConfigArgs) -> Result<Config, Failure> {
    let mut builder = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            ConfigBuilder::from_kv_str(&text).with_context(|| format!("cannot parse {}", path.display()))?
        }
        None => ConfigBuilder::default(),
    };
    for assignment in &args.overrides {
        builder
            .set_assignment(assignment)
            .with_context(|| format!("bad override {assignment:?}"))?;
    }
    let mut config = builder.build().context("incomplete configuration")?;
    if let Some(seed) = args.seed {
        config.population.seed = seed;
    }
    Ok(config)
}

fn load(args: &ConfigArgs) -> Result<Config, Failure> {
    let config = load_unchecked(args)?;
    config.validate().map_err(|report| Failure::Domain(itemize(&report.0)))?;
    Ok(config)
}

fn itemize<E: ToString>(errors: &[E]) -> String {
    let mut text = String::from("invalid configuration:");
    for e in errors {
        text.push_str("\n  - ");
        text.push_str(&e.to_string());
    }
    text
}

fn batch_mode(raw: &str) -> Result<BatchMode, Failure> {
    raw.parse().map_err(Failure::Domain)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn finish_csv<F>(path: &Path, write: F) -> Outcome
where
    F: FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
{
    let mut w = create(path)?;
    write(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn save_manifest(csv_path: &Path, manifest: &Manifest) -> Outcome {
    write_manifest(csv_path, manifest).with_context(|| format!("cannot write manifest for {}", csv_path.display()))?;
    Ok(())
}

fn manifest_for(command: &str, config: serde_json::Value, seed: Option<u64>, threads: usize, started: Instant) -> Manifest {
    let mut m = Manifest::new(command, config);
    m.seed = seed;
    m.threads = threads;
    m.wall_seconds = started.elapsed().as_secs_f64();
    m
}

fn config_json(config: &Config) -> serde_json::Value {
    serde_json::to_value(config).unwrap_or(serde_json::Value::Null)
}

fn validate(args: &ConfigArgs) -> Outcome {
    let config = load_unchecked(args)?;
    match config.validate() {
        Ok(()) => {
            println!("valid");
            Ok(())
        }
        Err(report) => Err(Failure::Domain(itemize(&report.0))),
    }
}

fn analytic(args: &ConfigArgs, generations: usize, m: Option<u64>, out: Option<&Path>, threads: usize) -> Outcome {
    let started = Instant::now();
    let config = load(args)?;
    let domain = |e: actuator::analytic::AnalyticError| Failure::Domain(e.to_string());
    let prior = config.learning.prior;
    let kind = match m {
        None => RecurrenceKind::for_rule(&prior, config.population.teachers).map_err(domain)?,
        Some(m) => {
            let count = TeacherCount::Finite(m);
            match prior {
                PriorSpec::Naive => RecurrenceKind::NaiveMulti(count),
                PriorSpec::SimpleGaussian { .. } => RecurrenceKind::SimpleMulti(count),
                PriorSpec::ComplexQuadratic { .. } => {
                    return Err(domain(actuator::analytic::AnalyticError::NoClosedForm))
                }
            }
        }
    };
    let (model, learn) = (&config.model, &config.learning);
    let report = fixed_points(kind, model, learn).map_err(domain)?;
    let start = MomentState {
        mean: config.population.start_mean,
        var: config.population.start_var,
    };
    let moments = trajectory_moments(kind, start, model, learn, generations).map_err(domain)?;
    let summary = json!({
        "recurrence": kind,
        "fixed_points": report,
        "large_n_variance": large_n_var_expansion(kind, model, learn).ok(),
        "chain_comparison": iterated_learning_comparison(model, learn).ok(),
        "final": moments.last(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).context("cannot encode report")?);
    if let Some(path) = out {
        finish_csv(path, |w| write_moments_csv(w, &moments))?;
        let mut manifest = manifest_for("analytic", config_json(&config), None, threads, started);
        manifest.outputs.push(path.display().to_string());
        manifest.config = json!({ "config": manifest.config, "report": summary });
        save_manifest(path, &manifest)?;
    }
    Ok(())
}

fn read_batch(path: &Path) -> Result<Vec<f64>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("cannot read {}", path.display()))?;
        let field = record.get(0).unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            // a header line
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(anyhow::anyhow!("{}: line {}: not a number: {field:?}", path.display(), i + 1).into())
            }
        }
    }
    Ok(values)
}

fn estimate(args: &ConfigArgs, path: &Path, grid_spacing: Option<f64>) -> Outcome {
    let mut config = load(args)?;
    let values = read_batch(path)?;
    let batch = ExampleBatch::new(values).map_err(|e| Failure::Domain(e.to_string()))?;
    config.learning.n = batch.len();
    let (model, learn) = (&config.model, &config.learning);
    let estimate = Learner::new(model, learn).estimate(&batch);
    let mut report = json!({
        "prior": learn.prior,
        "n": batch.len(),
        "batch_mean": batch.mean(),
        "estimate": estimate,
    });
    match learn.prior {
        PriorSpec::SimpleGaussian { tau } => {
            report["posterior"] = json!(simple_posterior(&batch, model, tau));
        }
        PriorSpec::ComplexQuadratic { a } => {
            if let Some(spacing) = grid_spacing {
                let grid = grid_map_oracle(&batch, model, a, spacing).map_err(|e| Failure::Domain(e.to_string()))?;
                report["grid_estimate"] = json!(grid);
            }
        }
        PriorSpec::Naive => {}
    }
    println!("{}", serde_json::to_string_pretty(&report).context("cannot encode report")?);
    Ok(())
}

fn simulate(
    args: &ConfigArgs,
    stop: &str,
    out: &Path,
    density: Option<&Path>,
    mode: &str,
    threads: usize,
) -> Outcome {
    let started = Instant::now();
    let config = load(args)?;
    let stop: StopRule = stop.parse().map_err(|e: actuator::simulate::StopRuleError| Failure::Domain(e.to_string()))?;
    let engine = Engine::new(config)
        .with_execution(Execution::Parallel)
        .with_batch_mode(batch_mode(mode)?);
    let traj = engine.run(stop);
    finish_csv(out, |w| write_trajectory_csv(w, &traj))?;
    let mut outputs = vec![out.display().to_string()];
    if let Some(path) = density {
        finish_csv(path, |w| write_density_csv(w, &traj))?;
        outputs.push(path.display().to_string());
    }
    let last = traj.last();
    let mut manifest = manifest_for(
        "simulate",
        json!({
            "config": config,
            "stop": stop.to_string(),
            "batch_mode": mode,
            "stop_reason": traj.stop_reason,
            "generations": traj.generations(),
        }),
        Some(config.population.seed),
        threads,
        started,
    );
    manifest.outputs = outputs;
    save_manifest(out, &manifest)?;
    println!(
        "{} generations ({}), final mean {} var {}",
        traj.generations(),
        traj.stop_reason,
        last.mean,
        last.var
    );
    Ok(())
}

fn sweep(grid_path: &Path, out: &Path, no_timing: bool, mode: &str, threads: usize) -> Outcome {
    let started = Instant::now();
    let text = std::fs::read_to_string(grid_path).with_context(|| format!("cannot read {}", grid_path.display()))?;
    let grid = match SweepGrid::from_kv_str(&text) {
        Ok(grid) => grid,
        Err(SweepError::InvalidGrid(msg)) => return Err(Failure::Domain(format!("invalid grid: {msg}"))),
        Err(e) => return Err(anyhow::Error::new(e).context(format!("cannot parse {}", grid_path.display())).into()),
    };
    if let Err(report) = grid.base.validate() {
        return Err(Failure::Domain(itemize(&report.0)));
    }
    let result = run_sweep(&grid, Execution::Parallel, batch_mode(mode)?);
    finish_csv(out, |w| write_sweep_csv(w, &result, !no_timing))?;
    let failed = result
        .records
        .iter()
        .filter(|r| r.final_mean().is_none())
        .count();
    let mut manifest = manifest_for(
        "sweep",
        json!({ "grid": grid, "batch_mode": mode, "failed_cells": failed }),
        Some(grid.base.population.seed),
        threads,
        started,
    );
    manifest.outputs.push(out.display().to_string());
    save_manifest(out, &manifest)?;
    println!("{} cells ({} failed)", result.records.len(), failed);
    Ok(())
}

fn bifurcate(input: &Path, out: &Path, args: &ConfigArgs, threads: usize) -> Outcome {
    let started = Instant::now();
    let config = load(args)?;
    let file = File::open(input).with_context(|| format!("cannot read {}", input.display()))?;
    let rows = read_sweep_csv(file).with_context(|| format!("cannot parse {}", input.display()))?;

    let mut keys: Vec<(TeacherRule, Option<u64>)> = Vec::new();
    for r in &rows {
        let key = (r.rule, r.strength.map(f64::to_bits));
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut report = Vec::new();
    for (rule, bits) in keys {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.rule == rule && r.strength.map(f64::to_bits) == bits)
            .filter_map(|r| r.final_mean.map(|m| (r.lambda, m)))
            .collect();
        let result = detect_bifurcation_row(&points, config.model.span()).map_err(|e| Failure::Domain(e.to_string()))?;
        report.push(BifurcationRow {
            rule,
            strength: bits.map(f64::from_bits),
            result,
        });
    }
    finish_csv(out, |w| write_bifurcation_csv(w, &report))?;
    let mut manifest = manifest_for(
        "bifurcate",
        json!({ "input": input.display().to_string(), "mu_a": config.model.mu_a, "mu_i": config.model.mu_i }),
        None,
        threads,
        started,
    );
    manifest.outputs.push(out.display().to_string());
    save_manifest(out, &manifest)?;
    Ok(())
}

fn cross_check(
    args: &ConfigArgs,
    generations: usize,
    population: Option<usize>,
    out: Option<&Path>,
    mode: &str,
    threads: usize,
) -> Outcome {
    let started = Instant::now();
    let mut config = load_unchecked(args)?;
    if let Some(m) = population {
        config.population.size = m;
    }
    config.validate().map_err(|report| Failure::Domain(itemize(&report.0)))?;
    let engine = Engine::new(config)
        .with_execution(Execution::Parallel)
        .with_batch_mode(batch_mode(mode)?);
    let report = run_cross_check(&engine, generations).map_err(|e| Failure::Domain(e.to_string()))?;
    let mut stdout = std::io::stdout().lock();
    write_cross_check_csv(&mut stdout, &report).context("cannot write report")?;
    if let Some(path) = out {
        finish_csv(path, |w| write_cross_check_csv(w, &report))?;
        let mut manifest = manifest_for(
            "cross-check",
            json!({ "config": config, "generations": generations, "batch_mode": mode }),
            Some(config.population.seed),
            threads,
            started,
        );
        manifest.outputs.push(path.display().to_string());
        save_manifest(path, &manifest)?;
    }
    if report.passes() {
        Ok(())
    } else {
        Err(Failure::Domain(format!(
            "moments disagree: max mean z {}, max var z {} (limit {})",
            report.max_mean_z(),
            report.max_var_z(),
            actuator::crosscheck::SE_TOLERANCE
        )))
    }
}
