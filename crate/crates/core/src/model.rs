//! Domain types, configuration parsing and validation.
//!
//! Units are carried in documentation only: formant values and means are in
//! Hz, variances in Hz².

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed linguistic constants of the three-vowel lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhoneticModel {
    /// F1 mean of the isolated vowel V₁ (Hz).
    pub mu_a: f64,
    /// F1 mean of the isolated vowel V₂ (Hz).
    pub mu_i: f64,
    /// Production SD of V₁ and of the contextual variant (Hz).
    pub sigma_a: f64,
    /// SD of the channel bias (Hz).
    pub omega: f64,
    /// Mean channel bias, subtracted from every production (Hz).
    pub lambda: f64,
}

impl PhoneticModel {
    /// The reference setting used throughout: μ_a = 730, μ_i = 530, σ_a = 50,
    /// no channel bias.
    pub const fn reference() -> Self {
        Self {
            mu_a: 730.0,
            mu_i: 530.0,
            sigma_a: 50.0,
            omega: 0.0,
            lambda: 0.0,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.mu_a + self.mu_i)
    }

    /// μ_a − μ_i.
    pub fn span(&self) -> f64 {
        self.mu_a - self.mu_i
    }

    /// σ_a² + ω², the variance of a single production around c − λ.
    pub fn production_variance(&self) -> f64 {
        self.sigma_a * self.sigma_a + self.omega * self.omega
    }

    /// K = 1 + ω²/σ_a².
    pub fn noise_ratio(&self) -> f64 {
        1.0 + (self.omega * self.omega) / (self.sigma_a * self.sigma_a)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Which estimator a learner applies to its examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Maximum likelihood, no prior.
    Naive,
    /// Gaussian prior N(μ_a, τ²).
    SimpleGaussian { tau: f64 },
    /// Quadratic prior a(μ_a − μ_i)² + (c − midpoint)², MAP over [μ_i, μ_a].
    ComplexQuadratic { a: f64 },
}

impl PriorSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PriorSpec::Naive => "naive",
            PriorSpec::SimpleGaussian { .. } => "simple",
            PriorSpec::ComplexQuadratic { .. } => "complex",
        }
    }

    /// The prior's single strength parameter (τ or a), if any.
    pub fn strength(&self) -> Option<f64> {
        match *self {
            PriorSpec::Naive => None,
            PriorSpec::SimpleGaussian { tau } => Some(tau),
            PriorSpec::ComplexQuadratic { a } => Some(a),
        }
    }

    /// Same family, different strength. Naive ignores the value.
    pub fn with_strength(&self, value: f64) -> Self {
        match self {
            PriorSpec::Naive => PriorSpec::Naive,
            PriorSpec::SimpleGaussian { .. } => PriorSpec::SimpleGaussian { tau: value },
            PriorSpec::ComplexQuadratic { .. } => PriorSpec::ComplexQuadratic { a: value },
        }
    }

    /// Name of the strength parameter: `tau` or `a`.
    pub fn strength_name(&self) -> &'static str {
        match self {
            PriorSpec::SimpleGaussian { .. } => "tau",
            _ => "a",
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, PriorSpec::ComplexQuadratic { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    /// Examples per learner.
    pub n: usize,
    pub prior: PriorSpec,
}

/// Number of previous-generation teachers supplying a learner's examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherRule {
    One,
    Two,
    All,
}

impl TeacherRule {
    pub const ALL_RULES: [TeacherRule; 3] = [TeacherRule::One, TeacherRule::Two, TeacherRule::All];

    pub fn as_str(&self) -> &'static str {
        match self {
            TeacherRule::One => "one",
            TeacherRule::Two => "two",
            TeacherRule::All => "all",
        }
    }
}

impl fmt::Display for TeacherRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TeacherRule {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one" | "1" => Ok(TeacherRule::One),
            "two" | "2" => Ok(TeacherRule::Two),
            "all" | "m" => Ok(TeacherRule::All),
            _ => Err(ParseError::BadValue {
                key: "teachers".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    /// Population size M.
    pub size: usize,
    pub teachers: TeacherRule,
    pub seed: u64,
    pub start_mean: f64,
    /// Initial spread as a variance (Hz²).
    pub start_var: f64,
}

/// Generation index plus each agent's contextual-variant mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub t: usize,
    pub c_values: Vec<f64>,
}

impl PopulationState {
    pub fn size(&self) -> usize {
        self.c_values.len()
    }

    /// Population mean and variance (divisor M).
    pub fn moments(&self) -> MomentState {
        let m = self.c_values.len() as f64;
        let mean = self.c_values.iter().sum::<f64>() / m;
        let var = self
            .c_values
            .iter()
            .map(|c| (c - mean) * (c - mean))
            .sum::<f64>()
            / m;
        MomentState { mean, var }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub mean: f64,
    pub var: f64,
}

/// A complete run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub model: PhoneticModel,
    pub learning: LearningConfig,
    pub population: PopulationConfig,
}

impl Default for Config {
    /// The reference constants with a naive learner, n = 100, M = 2500 and the
    /// N(μ_a − 10, 10) start.
    fn default() -> Self {
        let model = PhoneticModel::reference();
        Self {
            model,
            learning: LearningConfig {
                n: 100,
                prior: PriorSpec::Naive,
            },
            population: PopulationConfig {
                size: 2500,
                teachers: TeacherRule::All,
                seed: 1,
                start_mean: model.mu_a - 10.0,
                start_var: 10.0,
            },
        }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("NonFinite: {field} is not finite")]
    NonFinite { field: &'static str },
    #[error("MeansOutOfOrder: mu_a ({mu_a}) must exceed mu_i ({mu_i})")]
    MeansOutOfOrder { mu_a: f64, mu_i: f64 },
    #[error("NonPositiveSigma: sigma_a = {0} must be > 0")]
    NonPositiveSigma(f64),
    #[error("NegativeOmega: omega = {0} must be >= 0")]
    NegativeOmega(f64),
    #[error("NegativeLambda: lambda = {0} must be >= 0")]
    NegativeLambda(f64),
    #[error("NonPositiveTau: prior.tau = {0} must be > 0")]
    NonPositiveTau(f64),
    #[error("NonPositiveStrength: prior.a = {0} must be > 0")]
    NonPositiveStrength(f64),
    #[error("TooFewExamples: n = {0} must be >= 2")]
    TooFewExamples(usize),
    #[error("PopulationTooSmall: M = {0} must be >= 2")]
    PopulationTooSmall(usize),
    #[error("NegativeStartVariance: start_var = {0} must be >= 0")]
    NegativeStartVariance(f64),
}

/// Every violated invariant of a configuration.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} invariant violation(s): {}", .0.len(), join_errors(.0))]
pub struct ValidationReport(pub Vec<ConfigError>);

fn join_errors(errors: &[ConfigError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn finite(errors: &mut Vec<ConfigError>, field: &'static str, value: f64) -> bool {
    if value.is_finite() {
        true
    } else {
        errors.push(ConfigError::NonFinite { field });
        false
    }
}

impl PhoneticModel {
    pub(crate) fn collect_violations(&self, errors: &mut Vec<ConfigError>) {
        let mu_ok = finite(errors, "mu_a", self.mu_a) & finite(errors, "mu_i", self.mu_i);
        if mu_ok && self.mu_a <= self.mu_i {
            errors.push(ConfigError::MeansOutOfOrder {
                mu_a: self.mu_a,
                mu_i: self.mu_i,
            });
        }
        if finite(errors, "sigma_a", self.sigma_a) && self.sigma_a <= 0.0 {
            errors.push(ConfigError::NonPositiveSigma(self.sigma_a));
        }
        if finite(errors, "omega", self.omega) && self.omega < 0.0 {
            errors.push(ConfigError::NegativeOmega(self.omega));
        }
        if finite(errors, "lambda", self.lambda) && self.lambda < 0.0 {
            errors.push(ConfigError::NegativeLambda(self.lambda));
        }
    }

    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut errors = Vec::new();
        self.collect_violations(&mut errors);
        report(errors)
    }
}

impl LearningConfig {
    pub(crate) fn collect_violations(&self, errors: &mut Vec<ConfigError>) {
        if self.n < 2 {
            errors.push(ConfigError::TooFewExamples(self.n));
        }
        match self.prior {
            PriorSpec::Naive => {}
            PriorSpec::SimpleGaussian { tau } => {
                if finite(errors, "prior.tau", tau) && tau <= 0.0 {
                    errors.push(ConfigError::NonPositiveTau(tau));
                }
            }
            PriorSpec::ComplexQuadratic { a } => {
                if finite(errors, "prior.a", a) && a <= 0.0 {
                    errors.push(ConfigError::NonPositiveStrength(a));
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut errors = Vec::new();
        self.collect_violations(&mut errors);
        report(errors)
    }
}

impl PopulationConfig {
    pub(crate) fn collect_violations(&self, errors: &mut Vec<ConfigError>) {
        if self.size < 2 {
            errors.push(ConfigError::PopulationTooSmall(self.size));
        }
        finite(errors, "start_mean", self.start_mean);
        if finite(errors, "start_var", self.start_var) && self.start_var < 0.0 {
            errors.push(ConfigError::NegativeStartVariance(self.start_var));
        }
    }
}

fn report(errors: Vec<ConfigError>) -> Result<(), ValidationReport> {
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport(errors))
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut errors = Vec::new();
        self.model.collect_violations(&mut errors);
        self.learning.collect_violations(&mut errors);
        self.population.collect_violations(&mut errors);
        report(errors)
    }

    /// Renders the configuration in the flat key–value file format.
    pub fn to_kv_string(&self) -> String {
        let m = &self.model;
        let p = &self.population;
        let mut out = String::new();
        let mut line = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        line("mu_a", fmt_float(m.mu_a));
        line("mu_i", fmt_float(m.mu_i));
        line("sigma_a", fmt_float(m.sigma_a));
        line("omega", fmt_float(m.omega));
        line("lambda", fmt_float(m.lambda));
        line("n", self.learning.n.to_string());
        line("prior.kind", format!("\"{}\"", self.learning.prior.kind_name()));
        match self.learning.prior {
            PriorSpec::Naive => {}
            PriorSpec::SimpleGaussian { tau } => line("prior.tau", fmt_float(tau)),
            PriorSpec::ComplexQuadratic { a } => line("prior.a", fmt_float(a)),
        }
        line("M", p.size.to_string());
        line("teachers", format!("\"{}\"", p.teachers));
        if p.seed <= i64::MAX as u64 {
            line("seed", p.seed.to_string());
        } else {
            line("seed", format!("\"{}\"", p.seed));
        }
        line("start_mean", fmt_float(p.start_mean));
        line("start_var", fmt_float(p.start_var));
        out
    }

    pub fn from_kv_str(text: &str) -> Result<Self, ParseError> {
        ConfigBuilder::from_kv_str(text)?.build()
    }
}

/// `{:?}` keeps a decimal point or exponent, so floats stay floats in TOML.
fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

/// Failure to read a configuration or grid file.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed key-value text: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}` expects {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("bad value `{value}` for key `{key}`")]
    BadValue { key: String, value: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
}

/// Accumulates key–value assignments (file first, then overrides) before
/// producing a [`Config`].
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    model: PhoneticModel,
    n: usize,
    prior_kind: String,
    tau: Option<f64>,
    a: Option<f64>,
    population: PopulationConfig,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        let c = Config::default();
        Self {
            model: c.model,
            n: c.learning.n,
            prior_kind: "naive".into(),
            tau: None,
            a: None,
            population: c.population,
        }
    }
}

impl ConfigBuilder {
    pub fn from_kv_str(text: &str) -> Result<Self, ParseError> {
        let table: toml::Table = text.parse()?;
        let mut builder = Self::default();
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        for (key, value) in flat {
            builder.set_value(&key, &value)?;
        }
        Ok(builder)
    }

    /// Applies one `key=value` override. Bare words are taken as strings.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<&mut Self, ParseError> {
        let value = parse_scalar(raw);
        self.set_value(key.trim(), &value)?;
        Ok(self)
    }

    /// Applies a `key=value` assignment as written on a command line.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<&mut Self, ParseError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ParseError::BadValue {
                key: "--set".into(),
                value: assignment.into(),
            })?;
        self.set(key, raw)
    }

    pub(crate) fn set_value(&mut self, key: &str, value: &toml::Value) -> Result<(), ParseError> {
        match key {
            "mu_a" => self.model.mu_a = as_float(key, value)?,
            "mu_i" => self.model.mu_i = as_float(key, value)?,
            "sigma_a" => self.model.sigma_a = as_float(key, value)?,
            "omega" => self.model.omega = as_float(key, value)?,
            "lambda" => self.model.lambda = as_float(key, value)?,
            "n" => self.n = as_count(key, value)?,
            "prior.kind" => {
                let kind = as_str(key, value)?.to_ascii_lowercase();
                if !matches!(kind.as_str(), "naive" | "simple" | "complex") {
                    return Err(ParseError::BadValue {
                        key: key.into(),
                        value: kind,
                    });
                }
                self.prior_kind = kind;
            }
            "prior.tau" => self.tau = Some(as_float(key, value)?),
            "prior.a" => self.a = Some(as_float(key, value)?),
            "M" => self.population.size = as_count(key, value)?,
            "teachers" => self.population.teachers = as_str(key, value)?.parse()?,
            "seed" => self.population.seed = as_seed(key, value)?,
            "start_mean" => self.population.start_mean = as_float(key, value)?,
            "start_var" => self.population.start_var = as_float(key, value)?,
            other => return Err(ParseError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Supplies the prior strength for the selected prior kind if the text
    /// did not set one.
    pub(crate) fn default_strength(&mut self, value: f64) {
        match self.prior_kind.as_str() {
            "simple" => self.tau = self.tau.or(Some(value)),
            "complex" => self.a = self.a.or(Some(value)),
            _ => {}
        }
    }

    pub fn build(&self) -> Result<Config, ParseError> {
        let prior = match self.prior_kind.as_str() {
            "naive" => PriorSpec::Naive,
            "simple" => PriorSpec::SimpleGaussian {
                tau: self
                    .tau
                    .ok_or_else(|| ParseError::MissingKey("prior.tau".into()))?,
            },
            _ => PriorSpec::ComplexQuadratic {
                a: self
                    .a
                    .ok_or_else(|| ParseError::MissingKey("prior.a".into()))?,
            },
        };
        Ok(Config {
            model: self.model,
            learning: LearningConfig { n: self.n, prior },
            population: self.population,
        })
    }
}

pub(crate) fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(inner) => flatten(&key, inner, out),
            other => out.push((key, other.clone())),
        }
    }
}

pub(crate) fn parse_scalar(raw: &str) -> toml::Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub(crate) fn as_float(key: &str, value: &toml::Value) -> Result<f64, ParseError> {
    match value {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(ParseError::WrongType {
            key: key.into(),
            expected: "a number",
        }),
    }
}

pub(crate) fn as_count(key: &str, value: &toml::Value) -> Result<usize, ParseError> {
    match value {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        toml::Value::Integer(i) => Err(ParseError::BadValue {
            key: key.into(),
            value: i.to_string(),
        }),
        _ => Err(ParseError::WrongType {
            key: key.into(),
            expected: "a non-negative integer",
        }),
    }
}

pub(crate) fn as_str<'a>(key: &str, value: &'a toml::Value) -> Result<&'a str, ParseError> {
    value.as_str().ok_or_else(|| ParseError::WrongType {
        key: key.into(),
        expected: "a string",
    })
}

fn as_seed(key: &str, value: &toml::Value) -> Result<u64, ParseError> {
    match value {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        toml::Value::String(s) => s.trim().parse().map_err(|_| ParseError::BadValue {
            key: key.into(),
            value: s.clone(),
        }),
        other => Err(ParseError::BadValue {
            key: key.into(),
            value: other.to_string(),
        }),
    }
}

/// Returns the configuration unchanged when every invariant holds.
pub fn validate_config(config: Config) -> Result<Config, ValidationReport> {
    config.validate().map(|()| config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_configuration_is_valid() {
        let cfg = Config {
            population: PopulationConfig {
                size: 100,
                teachers: TeacherRule::All,
                seed: 1,
                start_mean: 720.0,
                start_var: 10.0,
            },
            ..Config::default()
        };
        assert_eq!(validate_config(cfg).unwrap(), cfg);
    }

    #[test]
    fn swapped_means_are_rejected() {
        let mut cfg = Config::default();
        cfg.model.mu_a = 530.0;
        cfg.model.mu_i = 730.0;
        let report = validate_config(cfg).unwrap_err();
        assert!(matches!(report.0[..], [ConfigError::MeansOutOfOrder { .. }]));
    }

    #[test]
    fn single_example_is_rejected() {
        let mut cfg = Config::default();
        cfg.learning.n = 1;
        let report = cfg.validate().unwrap_err();
        assert_eq!(report.0, vec![ConfigError::TooFewExamples(1)]);
    }

    #[test]
    fn every_violation_is_listed() {
        let mut cfg = Config::default();
        cfg.model.sigma_a = -1.0;
        cfg.model.lambda = -0.5;
        cfg.model.omega = f64::NAN;
        cfg.learning.prior = PriorSpec::ComplexQuadratic { a: 0.0 };
        cfg.population.size = 1;
        cfg.population.start_var = -2.0;
        let report = cfg.validate().unwrap_err();
        assert_eq!(report.0.len(), 6);
        assert!(report.to_string().contains("NonPositiveSigma"));
        assert!(report.0.contains(&ConfigError::NonFinite { field: "omega" }));
    }

    #[test]
    fn parses_flat_and_dotted_keys() {
        let text = r#"
            mu_a = 730
            mu_i = 530.0
            sigma_a = 50
            lambda = 0.25
            n = 100
            prior.kind = "complex"
            prior.a = 0.001
            M = 2000
            teachers = "two"
            seed = 42
            start_mean = 720
            start_var = 10
        "#;
        let cfg = Config::from_kv_str(text).unwrap();
        assert_eq!(cfg.learning.prior, PriorSpec::ComplexQuadratic { a: 0.001 });
        assert_eq!(cfg.population.teachers, TeacherRule::Two);
        assert_eq!(cfg.population.size, 2000);
        assert_eq!(cfg.model.lambda, 0.25);
    }

    #[test]
    fn table_syntax_is_accepted_for_prior() {
        let cfg = Config::from_kv_str("[prior]\nkind = \"simple\"\ntau = 5\n").unwrap();
        assert_eq!(cfg.learning.prior, PriorSpec::SimpleGaussian { tau: 5.0 });
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut b = ConfigBuilder::from_kv_str("lambda = 0.25\nteachers = \"one\"").unwrap();
        b.set_assignment("lambda=4").unwrap();
        b.set_assignment("teachers=all").unwrap();
        b.set_assignment("prior.kind=simple").unwrap();
        b.set_assignment("prior.tau=5").unwrap();
        let cfg = b.build().unwrap();
        assert_eq!(cfg.model.lambda, 4.0);
        assert_eq!(cfg.population.teachers, TeacherRule::All);
        assert_eq!(cfg.learning.prior, PriorSpec::SimpleGaussian { tau: 5.0 });
    }

    #[test]
    fn unknown_keys_and_bad_types_fail() {
        assert!(matches!(
            Config::from_kv_str("sigma = 3"),
            Err(ParseError::UnknownKey(_))
        ));
        assert!(matches!(
            Config::from_kv_str("sigma_a = \"wide\""),
            Err(ParseError::WrongType { .. })
        ));
        assert!(matches!(
            Config::from_kv_str("teachers = \"three\""),
            Err(ParseError::BadValue { .. })
        ));
        assert!(matches!(
            Config::from_kv_str("prior.kind = \"simple\""),
            Err(ParseError::MissingKey(_))
        ));
        assert!(matches!(
            Config::from_kv_str("mu_a = = 3"),
            Err(ParseError::Syntax(_))
        ));
    }

    #[test]
    fn large_seeds_survive_serialization() {
        let mut cfg = Config::default();
        cfg.population.seed = u64::MAX - 7;
        let back = Config::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }
}
