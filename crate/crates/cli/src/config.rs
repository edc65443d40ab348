//! Plain-text experiment configuration: one `key = value` per line, `#`
//! starts a comment.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use mpmc::Variant;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue { line: usize, key: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Table1,
    Table2,
    Pima,
    Run,
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table1" => Ok(Experiment::Table1),
            "table2" => Ok(Experiment::Table2),
            "pima" => Ok(Experiment::Pima),
            "run" => Ok(Experiment::Run),
            _ => Err(format!("unknown experiment `{s}`")),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Table1 => "table1",
            Experiment::Table2 => "table2",
            Experiment::Pima => "pima",
            Experiment::Run => "run",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Toy,
    Pima,
}

impl FromStr for TargetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "toy" => Ok(TargetKind::Toy),
            "pima" => Ok(TargetKind::Pima),
            _ => Err(format!("unknown target `{s}`")),
        }
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Toy => "toy",
            TargetKind::Pima => "pima",
        })
    }
}

/// Component family: `gauss`, or `t:<nu>,<nu>,...` with one entry per
/// component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySpec {
    Gauss,
    T(Vec<f64>),
}

impl FromStr for FamilySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "gauss" {
            return Ok(FamilySpec::Gauss);
        }
        let list = s.strip_prefix("t:").ok_or_else(|| format!("expected `gauss` or `t:<nu,...>`, got `{s}`"))?;
        let nus = list
            .split(',')
            .map(|v| match v.trim().parse::<f64>() {
                Ok(nu) if nu > 0.0 && nu.is_finite() => Ok(nu),
                _ => Err(format!("bad degrees of freedom `{v}`")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FamilySpec::T(nus))
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySpec::Gauss => f.write_str("gauss"),
            FamilySpec::T(nus) => {
                let parts: Vec<String> = nus.iter().map(|v| v.to_string()).collect();
                write!(f, "t:{}", parts.join(","))
            }
        }
    }
}

pub fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "plain" => Ok(Variant::Plain),
        "rb" => Ok(Variant::RaoBlackwell),
        _ => Err(format!("expected `plain` or `rb`, got `{s}`")),
    }
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Plain => "plain",
        Variant::RaoBlackwell => "rb",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub target: TargetKind,
    pub seed: u64,
    pub particles: usize,
    pub iters: usize,
    pub components: usize,
    pub variant: Variant,
    pub defensive: Option<f64>,
    pub family: FamilySpec,
    /// Table 1: seeds per proposal. Table 2: runs per variant.
    pub runs: usize,
    pub dim: usize,
    pub shift: f64,
    pub perturbation: f64,
    pub early_stop: Option<f64>,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = ExperimentConfig {
            experiment,
            target: TargetKind::Toy,
            seed: 0,
            particles: 5_000,
            iters: 20,
            components: 3,
            variant: Variant::RaoBlackwell,
            defensive: None,
            family: FamilySpec::Gauss,
            runs: 100,
            dim: crate::experiments::TOY_DIM,
            shift: crate::experiments::TOY_SHIFT,
            perturbation: mpmc::adapt::DEFAULT_PERTURBATION,
            early_stop: None,
            data: None,
            out: PathBuf::from("out"),
        };
        match experiment {
            Experiment::Table1 => ExperimentConfig {
                particles: 1_000_000,
                runs: 5,
                ..base
            },
            Experiment::Table2 | Experiment::Run => base,
            Experiment::Pima => ExperimentConfig {
                target: TargetKind::Pima,
                particles: 10_000,
                iters: 50,
                components: 4,
                family: FamilySpec::T(vec![3.0, 6.0, 9.0, 18.0]),
                runs: 1,
                ..base
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            pairs.push((line, k.trim().to_string(), v.trim().to_string()));
        }
        let experiment = match pairs.iter().find(|(_, k, _)| k == "experiment") {
            Some((line, k, v)) => v.parse().map_err(|reason| ConfigError::BadValue {
                line: *line,
                key: k.clone(),
                reason,
            })?,
            None => Experiment::Run,
        };
        let mut cfg = Self::defaults(experiment);
        for (line, key, value) in pairs {
            cfg.set(&key, &value).map_err(|e| match e {
                SetError::Unknown => ConfigError::UnknownKey { line, key: key.clone() },
                SetError::Bad(reason) => ConfigError::BadValue { line, key: key.clone(), reason },
            })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        fn num<V: FromStr>(v: &str) -> Result<V, SetError> {
            v.parse().map_err(|_| SetError::Bad(format!("cannot parse `{v}`")))
        }
        fn optional(v: &str) -> Result<Option<f64>, SetError> {
            if v == "none" {
                Ok(None)
            } else {
                num(v).map(Some)
            }
        }
        match key {
            "experiment" => self.experiment = value.parse().map_err(SetError::Bad)?,
            "target" => self.target = value.parse().map_err(SetError::Bad)?,
            "seed" => self.seed = num(value)?,
            "particles" => self.particles = num(value)?,
            "iters" => self.iters = num(value)?,
            "components" => self.components = num(value)?,
            "variant" => self.variant = parse_variant(value).map_err(SetError::Bad)?,
            "defensive" => self.defensive = optional(value)?,
            "family" => self.family = value.parse().map_err(SetError::Bad)?,
            "runs" => self.runs = num(value)?,
            "dim" => self.dim = num(value)?,
            "shift" => self.shift = num(value)?,
            "perturbation" => self.perturbation = num(value)?,
            "early_stop" => self.early_stop = optional(value)?,
            "data" => self.data = if value == "none" { None } else { Some(PathBuf::from(value)) },
            "out" => self.out = PathBuf::from(value),
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }
}

enum SetError {
    Unknown,
    Bad(String),
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        writeln!(f, "experiment = {}", self.experiment)?;
        writeln!(f, "target = {}", self.target)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "particles = {}", self.particles)?;
        writeln!(f, "iters = {}", self.iters)?;
        writeln!(f, "components = {}", self.components)?;
        writeln!(f, "variant = {}", variant_name(self.variant))?;
        writeln!(f, "defensive = {}", opt(self.defensive))?;
        writeln!(f, "family = {}", self.family)?;
        writeln!(f, "runs = {}", self.runs)?;
        writeln!(f, "dim = {}", self.dim)?;
        writeln!(f, "shift = {}", self.shift)?;
        writeln!(f, "perturbation = {}", self.perturbation)?;
        writeln!(f, "early_stop = {}", opt(self.early_stop))?;
        writeln!(
            f,
            "data = {}",
            self.data.as_ref().map_or("none".to_string(), |p| p.display().to_string())
        )?;
        writeln!(f, "out = {}", self.out.display())
    }
}
