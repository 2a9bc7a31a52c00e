//! Run configuration: command-line flags merged over an optional JSON file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "radial-aggregation", version, about = "Radial equilibria, dynamics and asymptotics of the aggregation equation")]
pub struct Cli {
    /// JSON file with default values for any of the flags (kebab-case keys).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Equilibrium of mass M: profile CSV and summary JSON.
    Steady(Settings),
    /// RK4 evolution along characteristics: trajectory and diagnostics CSV.
    Evolve(Settings),
    /// Large-q approximations for a list of q.
    AsympLargeq(Settings),
    /// Small-eps limit profile and expansion coefficients.
    AsympSmalleps(Settings),
    /// Numerical versus asymptotic table for a q-list or an eps-list.
    Compare(Settings),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Steady(_) => "steady",
            Command::Evolve(_) => "evolve",
            Command::AsympLargeq(_) => "asymp-largeq",
            Command::AsympSmalleps(_) => "asymp-smalleps",
            Command::Compare(_) => "compare",
        }
    }

    pub fn settings(&self) -> &Settings {
        match self {
            Command::Steady(s)
            | Command::Evolve(s)
            | Command::AsympLargeq(s)
            | Command::AsympSmalleps(s)
            | Command::Compare(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    PaperFig2,
    UniformBall,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Largeq,
    Smalleps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

/// Flags shared by all subcommands; every field is optional so that file values can fill gaps.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Subcommand name; only meaningful inside a config file, where it must match the command line.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    /// Space dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Attraction exponent.
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Total mass M.
    #[arg(long)]
    pub mass: Option<f64>,
    /// Number of grid intervals N.
    #[arg(long)]
    pub intervals: Option<usize>,
    /// Power-method tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Power-method iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Steps between recorded samples.
    #[arg(long)]
    pub sample_every: Option<usize>,
    /// Initial datum for evolve.
    #[arg(long, value_enum)]
    pub initial: Option<InitialKind>,
    /// CSV with columns r,rho on a uniform grid starting at 0 (initial = custom).
    #[arg(long)]
    pub initial_csv: Option<PathBuf>,
    /// Outer radius of the paper-fig2 datum.
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Radius of the uniform-ball datum.
    #[arg(long)]
    pub ball_radius: Option<f64>,
    /// Comma-separated q values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub q_list: Option<Vec<f64>>,
    /// Comma-separated eps = q + n − 2 values.
    #[arg(long, value_delimiter = ',')]
    pub eps_list: Option<Vec<f64>>,
    /// Asymptotic regime for compare.
    #[arg(long, value_enum)]
    pub regime: Option<Regime>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

macro_rules! merge_fields {
    ($top:expr, $base:expr, $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    /// Fields of `self` take precedence over `base`.
    pub fn merged_over(self, base: Settings) -> Settings {
        merge_fields!(
            self, base, subcommand, n, q, mass, intervals, tol, max_iter, dt, t_final, sample_every, initial,
            initial_csv, r_max, ball_radius, q_list, eps_list, regime, output, format
        )
    }

    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub subcommand: String,
    pub n: usize,
    pub q: Option<f64>,
    pub mass: f64,
    pub intervals: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub dt: f64,
    pub t_final: f64,
    pub sample_every: usize,
    pub initial: InitialKind,
    pub initial_csv: Option<PathBuf>,
    pub r_max: f64,
    pub ball_radius: f64,
    pub q_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub regime: Option<Regime>,
    pub output: PathBuf,
    pub format: Format,
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Applies defaults and range checks to merged settings.
    pub fn resolve(command: &str, s: Settings) -> Result<RunConfig, CliError> {
        if let Some(name) = &s.subcommand {
            if name != command {
                return Err(CliError::Config(format!("config is for subcommand {name}, not {command}")));
            }
        }
        let default_n = if command == "asymp-smalleps" { 1 } else { 3 };
        let cfg = RunConfig {
            subcommand: command.to_string(),
            n: s.n.unwrap_or(default_n),
            q: s.q,
            mass: positive("mass", s.mass.unwrap_or(1.0))?,
            intervals: s.intervals.unwrap_or(200),
            tol: positive("tol", s.tol.unwrap_or(1e-10))?,
            max_iter: s.max_iter.unwrap_or(200_000),
            dt: positive("dt", s.dt.unwrap_or(1e-3))?,
            t_final: s.t_final.unwrap_or(10.0),
            sample_every: s.sample_every.unwrap_or(100),
            initial: s.initial.unwrap_or(InitialKind::PaperFig2),
            initial_csv: s.initial_csv,
            r_max: positive("r-max", s.r_max.unwrap_or(0.8))?,
            ball_radius: positive("ball-radius", s.ball_radius.unwrap_or(0.5))?,
            q_list: s.q_list.unwrap_or_default(),
            eps_list: s.eps_list.unwrap_or_default(),
            regime: s.regime,
            output: s.output.unwrap_or_else(|| PathBuf::from(".")),
            format: s.format.unwrap_or(Format::Csv),
        };
        if cfg.intervals < 2 {
            return Err(CliError::Config(format!("intervals must be at least 2, got {}", cfg.intervals)));
        }
        if cfg.max_iter == 0 || cfg.sample_every == 0 {
            return Err(CliError::Config("max-iter and sample-every must be positive".into()));
        }
        if !(cfg.t_final.is_finite() && cfg.t_final >= 0.0) {
            return Err(CliError::Config(format!("t-final must be nonnegative, got {}", cfg.t_final)));
        }
        if cfg.q_list.iter().chain(&cfg.eps_list).any(|v| !v.is_finite()) {
            return Err(CliError::Config("list values must be finite".into()));
        }
        Ok(cfg)
    }

    pub fn require_q(&self) -> Result<f64, CliError> {
        self.q.ok_or_else(|| CliError::Config(format!("{} needs --q", self.subcommand)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_overrides_file() {
        let file: Settings = serde_json::from_str(r#"{"n": 1, "q": 3.0, "intervals": 50, "q-list": [5, 10]}"#).unwrap();
        let cli = Settings { q: Some(4.0), ..Default::default() };
        let s = cli.merged_over(file);
        assert_eq!(s.n, Some(1));
        assert_eq!(s.q, Some(4.0));
        assert_eq!(s.intervals, Some(50));
        assert_eq!(s.q_list, Some(vec![5.0, 10.0]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<Settings>(r#"{"grid": 10}"#).is_err());
    }

    #[test]
    fn defaults_and_checks() {
        let cfg = RunConfig::resolve("steady", Settings::default()).unwrap();
        assert_eq!((cfg.n, cfg.intervals, cfg.mass, cfg.format), (3, 200, 1.0, Format::Csv));
        assert_eq!(RunConfig::resolve("asymp-smalleps", Settings::default()).unwrap().n, 1);
        let bad = Settings { dt: Some(0.0), ..Default::default() };
        assert!(matches!(RunConfig::resolve("evolve", bad), Err(CliError::Config(_))));
        let other = Settings { subcommand: Some("evolve".into()), ..Default::default() };
        assert!(RunConfig::resolve("steady", other).is_err());
    }
}
