//! Experiment configuration: one flat TOML table, validated per command.

use std::fmt;
use std::path::{Path, PathBuf};

use heisenkern::group::GroupContext;
use heisenkern::io;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Normalize,
    Kernel,
    Sample,
    LsiScan,
    TensorCheck,
    Distance,
    Cascade,
    Pushforward,
    Plot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Normalize => "normalize",
            Command::Kernel => "kernel",
            Command::Sample => "sample",
            Command::LsiScan => "lsi-scan",
            Command::TensorCheck => "tensor-check",
            Command::Distance => "distance",
            Command::Cascade => "cascade",
            Command::Pushforward => "pushforward",
            Command::Plot => "plot",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(
            self,
            Command::Sample | Command::LsiScan | Command::TensorCheck | Command::Cascade | Command::Pushforward
        )
    }
}

/// A scalar or a list, so `t = 1.0` and `t = [0.5, 1.0]` both parse.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    F,
    Pi,
    PiOmega,
}

/// Every key any command understands. Unknown keys are rejected at parse
/// time; keys a command does not use are ignored by that command.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Optional here; the command-line argument wins when both are given.
    pub command: Option<String>,
    pub out: Option<PathBuf>,

    // group context
    pub n: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub matrix: Option<PathBuf>,
    /// Several contexts for `lsi-scan`.
    pub contexts: Option<Vec<Vec<f64>>>,

    pub t: Option<OneOrMany>,
    pub seed: Option<u64>,
    /// Sample count `N`.
    pub samples: Option<usize>,
    /// Time steps `m`.
    pub steps: Option<usize>,
    pub tol: Option<f64>,

    // kernel
    /// Evaluation point `(x₁, y₁, …, z)`; also the distance target.
    pub g: Option<Vec<f64>>,
    pub expect: Option<f64>,
    pub profile: Option<String>,
    pub range: Option<[f64; 2]>,
    pub points: Option<usize>,
    pub normalization: Option<bool>,
    pub semigroup_s: Option<f64>,

    // lsi
    pub fields: Option<Vec<String>>,

    // tensor-check
    pub factors: Option<[f64; 2]>,
    pub f: Option<String>,
    pub h: Option<String>,

    // distance
    pub segments: Option<usize>,
    pub starts: Option<usize>,
    pub lambdas: Option<Vec<f64>>,

    // cascade
    pub n_max: Option<usize>,

    // pushforward
    pub map: Option<MapKind>,
    pub control_alpha: Option<f64>,

    // plot
    pub artifact: Option<PathBuf>,
}

/// A configuration problem, reported with the offending key.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

pub type CResult<T> = std::result::Result<T, ConfigError>;

/// The default lsi catalog.
pub const DEFAULT_FIELDS: &[&str] =
    &["coord:x1", "exp_x1:0.5", "exp_x1:1", "exp_x1:2", "linear_z:0.05", "poly:x1^2*z", "bump:1"];

impl Config {
    pub fn parse(text: &str) -> CResult<Config> {
        toml::from_str(text).map_err(|e| err("", format!("config: {}", e.to_string().trim_end())))
    }

    pub fn load(path: &Path) -> CResult<(Config, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| err("", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Config::parse(&text)?, base))
    }

    /// Checks that apply whatever the command.
    pub fn validate(&self, command: Command) -> CResult<()> {
        if command.stochastic() && self.seed.is_none() {
            return Err(err("seed", format!("required for the stochastic command {}", command.name())));
        }
        if let Some(t) = &self.t {
            let ts = t.values();
            if ts.is_empty() {
                return Err(err("t", "needs at least one value"));
            }
            if let Some(bad) = ts.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(err("t", format!("must be positive, got {bad}")));
            }
        }
        positive("tol", self.tol)?;
        positive("semigroup_s", self.semigroup_s)?;
        positive("control_alpha", self.control_alpha)?;
        for (name, v) in [
            ("samples", self.samples),
            ("steps", self.steps),
            ("points", self.points),
            ("segments", self.segments),
            ("starts", self.starts),
            ("n", self.n),
            ("n_max", self.n_max),
        ] {
            if v == Some(0) {
                return Err(err(name, "must be at least 1"));
            }
        }
        if let Some(ls) = &self.lambdas {
            if let Some(bad) = ls.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(err("lambdas", format!("must be positive, got {bad}")));
            }
        }
        Ok(())
    }

    pub fn times(&self) -> CResult<Vec<f64>> {
        Ok(self.t.as_ref().ok_or_else(|| err("t", "required"))?.values())
    }

    pub fn time(&self) -> CResult<f64> {
        let ts = self.times()?;
        if ts.len() != 1 {
            return Err(err("t", "this command takes a single time"));
        }
        Ok(ts[0])
    }

    pub fn seed(&self) -> CResult<u64> {
        self.seed.ok_or_else(|| err("seed", "required"))
    }

    pub fn samples(&self) -> CResult<usize> {
        self.samples.ok_or_else(|| err("samples", "required"))
    }

    pub fn steps(&self) -> CResult<usize> {
        self.steps.ok_or_else(|| err("steps", "required"))
    }

    /// The single context given by `alphas`, `n` (isotropic) or `matrix`.
    pub fn context(&self, base: &Path) -> CResult<GroupContext<f64>> {
        let given = [self.alphas.is_some(), self.matrix.is_some()].iter().filter(|b| **b).count();
        if given > 1 {
            return Err(err("alphas", "give either alphas or matrix, not both"));
        }
        let alphas = if let Some(a) = &self.alphas {
            if let Some(n) = self.n {
                if n != a.len() {
                    return Err(err("n", format!("{n} does not match {} alphas", a.len())));
                }
            }
            a.clone()
        } else if let Some(m) = &self.matrix {
            self.normal_form(base, m)?.alphas
        } else if let Some(n) = self.n {
            vec![1.0; n]
        } else {
            return Err(err("alphas", "a group context needs alphas, n or matrix"));
        };
        GroupContext::new(alphas).map_err(|e| err("alphas", e.to_string()))
    }

    pub fn normal_form(&self, base: &Path, file: &Path) -> CResult<heisenkern::symplectic::NormalForm<f64>> {
        let path = base.join(file);
        let text = std::fs::read_to_string(&path).map_err(|e| err("matrix", format!("cannot read {}: {e}", path.display())))?;
        let form = io::form_from_str(&text).map_err(|e| err("matrix", e.to_string()))?;
        form.normalize().map_err(|e| err("matrix", e.to_string()))
    }

    pub fn contexts(&self, base: &Path) -> CResult<Vec<GroupContext<f64>>> {
        match &self.contexts {
            Some(list) if list.is_empty() => Err(err("contexts", "needs at least one context")),
            Some(list) => list
                .iter()
                .map(|a| GroupContext::new(a.clone()).map_err(|e| err("contexts", e.to_string())))
                .collect(),
            None => Ok(vec![self.context(base)?]),
        }
    }
}

fn positive(name: &str, v: Option<f64>) -> CResult<()> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(err(name, format!("must be positive, got {x}"))),
        _ => Ok(()),
    }
}
