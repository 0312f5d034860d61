//! Run configuration: a plain `key = value` file overlaid with command-line
//! flags. The serialized form written next to every result parses back to
//! the same settings.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use dptree::cascade::{Budget, Perturbation, Sign};
use dptree::rwfunctional::Star;
use dptree::EnvironmentModel;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Critical,
    Enumerate,
    Gibbs,
    Spine,
    RwFunctional,
    Moments,
    FitReport,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Critical => "critical",
            Command::Enumerate => "enumerate",
            Command::Gibbs => "gibbs",
            Command::Spine => "spine",
            Command::RwFunctional => "rw-functional",
            Command::Moments => "moments",
            Command::FitReport => "fit-report",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "critical" => Command::Critical,
            "enumerate" => Command::Enumerate,
            "gibbs" => Command::Gibbs,
            "spine" => Command::Spine,
            "rw-functional" => Command::RwFunctional,
            "moments" => Command::Moments,
            "fit-report" => Command::FitReport,
            other => return Err(CliError::config("command", format!("unknown command {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Gaussian,
    TwoPoint,
    Uniform,
    Rademacher,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Gaussian => "gaussian",
            EnvKind::TwoPoint => "two-point",
            EnvKind::Uniform => "uniform",
            EnvKind::Rademacher => "rademacher",
        }
    }
}

impl FromStr for EnvKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "gaussian" => EnvKind::Gaussian,
            "two-point" | "two_point" => EnvKind::TwoPoint,
            "uniform" => EnvKind::Uniform,
            "rademacher" => EnvKind::Rademacher,
            other => {
                return Err(CliError::config(
                    "env",
                    format!("expected gaussian, two-point, uniform or rademacher, got {other:?}"),
                ))
            }
        })
    }
}

/// Everything a run depends on. Fields a command does not use are still
/// echoed so that the echo is the complete input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub command: Command,
    pub env: EnvKind,
    pub env_mean: f64,
    pub env_std: f64,
    /// Probability of `+1` for `two-point`.
    pub p_plus: f64,
    pub n: u32,
    pub n_grid: Vec<u32>,
    pub delta: Option<f64>,
    pub sign: Option<Sign>,
    pub gamma: Vec<f64>,
    pub eps: f64,
    pub eps_prime: f64,
    pub kappa: f64,
    pub star: Star,
    /// Environment replicas (or walks, for `rw-functional`).
    pub replicas: u64,
    /// Gibbs draws, or spine walks for `spine`.
    pub samples: u64,
    /// Environment replica used by `gibbs`.
    pub replica: u64,
    pub seed: u64,
    /// 0 means one per core. Never affects results.
    pub workers: usize,
    pub output: PathBuf,
    pub force: bool,
    pub tol: f64,
    pub slope_tol: Option<f64>,
    pub input: Option<PathBuf>,
}

/// Keys in echo order.
pub const KEYS: &[&str] = &[
    "command", "env", "env_mean", "env_std", "p_plus", "n", "n_grid", "delta", "sign", "gamma", "eps",
    "eps_prime", "kappa", "star", "replicas", "samples", "replica", "seed", "workers", "output", "force",
    "tol", "slope_tol", "input",
];

impl Settings {
    pub fn defaults(command: Command) -> Self {
        let (n_grid, replicas) = match command {
            Command::RwFunctional => (vec![64, 256, 1024, 4096, 16384], 20_000),
            _ => (vec![8, 12, 16, 20, 24], 100),
        };
        Settings {
            command,
            env: EnvKind::Gaussian,
            env_mean: 0.0,
            env_std: 1.0,
            p_plus: 0.25,
            n: 10,
            n_grid,
            delta: None,
            sign: None,
            gamma: vec![0.5],
            eps: 0.45,
            eps_prime: 0.45,
            kappa: 10.0,
            star: Star::Max,
            replicas,
            samples: 10_000,
            replica: 0,
            seed: 1,
            workers: 1,
            output: PathBuf::from("."),
            force: false,
            tol: 1e-6,
            slope_tol: None,
            input: None,
        }
    }

    /// Set one key from its text form. Dashes and underscores in `key` are
    /// interchangeable.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "command" => {
                let c: Command = value.parse()?;
                if c != self.command {
                    return Err(CliError::config(
                        "command",
                        format!("file is for {:?} but the run is {:?}", c.as_str(), self.command.as_str()),
                    ));
                }
            }
            "env" => self.env = value.parse()?,
            "env_mean" => self.env_mean = parse_f64("env_mean", value)?,
            "env_std" => self.env_std = parse_f64("env_std", value)?,
            "p_plus" => self.p_plus = parse_f64("p_plus", value)?,
            "n" => self.n = parse_int("n", value)?,
            "n_grid" | "ngrid" => self.n_grid = parse_list("n_grid", value, parse_int)?,
            "delta" => self.delta = parse_opt("delta", value, parse_f64)?,
            "sign" => {
                self.sign = match value {
                    "none" | "" => None,
                    other => Some(other.parse().map_err(CliError::from)?),
                }
            }
            "gamma" => self.gamma = parse_list("gamma", value, parse_f64)?,
            "eps" => self.eps = parse_f64("eps", value)?,
            "eps_prime" => self.eps_prime = parse_f64("eps_prime", value)?,
            "kappa" => self.kappa = parse_f64("kappa", value)?,
            "star" => self.star = value.parse().map_err(CliError::from)?,
            "replicas" => self.replicas = parse_int("replicas", value)?,
            "samples" => self.samples = parse_int("samples", value)?,
            "replica" => self.replica = parse_int("replica", value)?,
            "seed" | "master_seed" => self.seed = parse_int("seed", value)?,
            "workers" => self.workers = parse_int("workers", value)?,
            "output" => self.output = PathBuf::from(value),
            "force" => {
                self.force = match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(CliError::config("force", format!("expected true or false, got {other:?}"))),
                }
            }
            "tol" => self.tol = parse_f64("tol", value)?,
            "slope_tol" => self.slope_tol = parse_opt("slope_tol", value, parse_f64)?,
            "input" => self.input = (!value.is_empty() && value != "none").then(|| PathBuf::from(value)),
            other => return Err(CliError::config("config", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Apply a `key = value` document. `#` starts a comment; blank lines
    /// are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config("config", format!("line {}: expected key = value", i + 1)));
            };
            self.apply(key, value)?;
        }
        Ok(())
    }

    /// The `key = value` form of these settings. Unset optional keys are
    /// written as `none`.
    pub fn to_kv(&self) -> String {
        let join = |xs: Vec<String>| xs.join(",");
        let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| v.to_string());
        let mut out = String::new();
        for key in KEYS {
            let value = match *key {
                "command" => self.command.as_str().to_string(),
                "env" => self.env.as_str().to_string(),
                "env_mean" => self.env_mean.to_string(),
                "env_std" => self.env_std.to_string(),
                "p_plus" => self.p_plus.to_string(),
                "n" => self.n.to_string(),
                "n_grid" => join(self.n_grid.iter().map(|x| x.to_string()).collect()),
                "delta" => opt(self.delta),
                "sign" => self.sign.map_or("none", |s| s.as_str()).to_string(),
                "gamma" => join(self.gamma.iter().map(|x| x.to_string()).collect()),
                "eps" => self.eps.to_string(),
                "eps_prime" => self.eps_prime.to_string(),
                "kappa" => self.kappa.to_string(),
                "star" => self.star.as_str().to_string(),
                "replicas" => self.replicas.to_string(),
                "samples" => self.samples.to_string(),
                "replica" => self.replica.to_string(),
                "seed" => self.seed.to_string(),
                "workers" => self.workers.to_string(),
                "output" => self.output.display().to_string(),
                "force" => self.force.to_string(),
                "tol" => self.tol.to_string(),
                "slope_tol" => opt(self.slope_tol),
                "input" => self.input.as_ref().map_or("none".to_string(), |p| p.display().to_string()),
                _ => unreachable!("KEYS and to_kv out of sync"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn model(&self) -> EnvironmentModel {
        match self.env {
            EnvKind::Gaussian => EnvironmentModel::Gaussian {
                mean: self.env_mean,
                std_dev: self.env_std,
            },
            EnvKind::TwoPoint => EnvironmentModel::TwoPoint { p_plus: self.p_plus },
            EnvKind::Uniform => EnvironmentModel::Uniform01,
            EnvKind::Rademacher => EnvironmentModel::rademacher(),
        }
    }

    pub fn budget(&self) -> Budget {
        if self.force {
            Budget::forced()
        } else {
            Budget::default()
        }
    }

    /// `delta` and `sign` must be given together.
    pub fn perturbation(&self) -> Result<Option<Perturbation>, CliError> {
        match (self.delta, self.sign) {
            (None, None) => Ok(None),
            (Some(delta), Some(sign)) => Ok(Some(Perturbation::new(delta, sign)?)),
            (Some(_), None) => Err(CliError::config("sign", "plus or minus is required with delta")),
            (None, Some(_)) => Err(CliError::config("delta", "required with sign")),
        }
    }

    /// Checks shared by all commands; command-specific ones live with the
    /// commands.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model().validate()?;
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(CliError::config("delta", "must be positive"));
            }
        }
        if self.gamma.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
            return Err(CliError::config("gamma", "every entry must lie in (0, 1]"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("n_grid", "must be strictly increasing"));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(CliError::config("eps", "must lie in (0, 1/2)"));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime.is_finite()) {
            return Err(CliError::config("eps_prime", "must be positive"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(CliError::config("kappa", "must be non-negative"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::config("tol", "must be positive"));
        }
        if let Some(t) = self.slope_tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::config("slope_tol", "must be positive"));
            }
        }
        if self.replicas == 0 {
            return Err(CliError::config("replicas", "must be at least 1"));
        }
        Ok(())
    }
}

fn parse_f64(field: &'static str, value: &str) -> Result<f64, CliError> {
    let x: f64 = value
        .parse()
        .map_err(|_| CliError::config(field, format!("expected a number, got {value:?}")))?;
    if x.is_nan() {
        return Err(CliError::config(field, "must not be NaN"));
    }
    Ok(x)
}

fn parse_int<T: FromStr>(field: &'static str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::config(field, format!("expected a non-negative integer, got {value:?}")))
}

fn parse_opt<T>(
    field: &'static str,
    value: &str,
    parse: fn(&'static str, &str) -> Result<T, CliError>,
) -> Result<Option<T>, CliError> {
    if value == "none" || value.is_empty() {
        return Ok(None);
    }
    parse(field, value).map(Some)
}

fn parse_list<T>(
    field: &'static str,
    value: &str,
    parse: fn(&'static str, &str) -> Result<T, CliError>,
) -> Result<Vec<T>, CliError> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(field, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::config(field, "must not be empty"));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut s = Settings::defaults(Command::Moments);
        s.apply_text("env = two-point\np_plus = 0.3\ndelta = 0.25 # comment\nsign = plus\ngamma = 0.5, 1\ntol = 1e-9\n")
            .unwrap();
        let mut back = Settings::defaults(Command::Moments);
        back.apply_text(&s.to_kv()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.gamma, vec![0.5, 1.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let mut s = Settings::defaults(Command::Enumerate);
        let field = |r: Result<(), CliError>| match r.unwrap_err() {
            CliError::Config { field, .. } => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(s.apply("n", "-3")), "n");
        assert_eq!(field(s.apply("ngrid", "8,x")), "n_grid");
        assert_eq!(field(s.apply("sign", "up")), "sign");
        assert_eq!(field(s.apply("colour", "red")), "config");
        assert_eq!(field(s.apply("command", "gibbs")), "command");
        s.apply("p-plus", "1.5").unwrap();
        s.apply("env", "two-point").unwrap();
        assert_eq!(field(s.validate()), "p_plus");
    }

    #[test]
    fn delta_and_sign_come_together() {
        let mut s = Settings::defaults(Command::Moments);
        s.delta = Some(0.25);
        assert!(matches!(s.perturbation(), Err(CliError::Config { field, .. }) if field == "sign"));
        s.sign = Some(Sign::Minus);
        assert_eq!(s.perturbation().unwrap().unwrap().sign, Sign::Minus);
    }
}
