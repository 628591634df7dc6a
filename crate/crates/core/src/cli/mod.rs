//! Command-line front end: argument parsing, layered configuration, and
//! orchestration of the experiments with reproducible output files.

mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EstimateError, FitWindow, TailMethod};
use crate::exact::ExactError;
use crate::orientation::{sample_environment, FieldError, OrientationField};

pub use experiments::execute;
pub use output::{header, Check, Execution, OutputDigest, OutputFile, RunManifest};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "ORIENT_WALK_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
#[value(rename_all = "lower")]
pub enum Command {
    /// Exact identity suite on short walks.
    Oracle,
    /// Renewal identity on long exact series.
    Renewal,
    /// Decay exponent of the annealed return probability.
    Llt,
    /// Growth of the mean range.
    Range,
    /// Concentration of R_n / n.
    Wlln,
    /// Scaling of the range variance.
    Variance,
    /// Planar simple random walk calibration.
    Baseline,
    /// Green function and escape probability per environment.
    Green,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Oracle => "oracle",
            Command::Renewal => "renewal",
            Command::Llt => "llt",
            Command::Range => "range",
            Command::Wlln => "wlln",
            Command::Variance => "variance",
            Command::Baseline => "baseline",
            Command::Green => "green",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One fixed environment (needs --env-seed/--env-index or --env-file).
    Quenched,
    /// A fresh environment per trajectory or per environment slot.
    Annealed,
    /// The deterministic field with +1 on even levels.
    Alternating,
    /// Unoriented planar walk.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TailArg {
    None,
    PowerLaw,
    /// Power law with the exponent fixed by --tail-exponent.
    Pinned,
}

/// Where a quenched environment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvSpec {
    Sampled { seed: u64, index: u64 },
    File(PathBuf),
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub n: usize,
    pub grid: Vec<usize>,
    pub samples: usize,
    pub envs: usize,
    pub truncation: usize,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_ref: Option<f64>,
    pub fit_window: [u64; 2],
    pub tail: TailArg,
    pub tail_exponent: f64,
    pub batches: usize,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSpec>,
    pub out: PathBuf,
    pub threads: usize,
}

/// Any subset of the settings; used for both the config file and the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub grid: Option<Vec<usize>>,
    pub samples: Option<usize>,
    pub envs: Option<usize>,
    pub truncation: Option<usize>,
    pub delta: Option<f64>,
    pub gamma_ref: Option<f64>,
    pub fit_window: Option<[u64; 2]>,
    pub tail: Option<TailArg>,
    pub tail_exponent: Option<f64>,
    pub batches: Option<usize>,
    pub mode: Option<Mode>,
    pub env_seed: Option<u64>,
    pub env_index: Option<u64>,
    pub env_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl ConfigLayer {
    /// `self` with every field set in `over` replaced.
    fn overlay(self, over: ConfigLayer) -> ConfigLayer {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigLayer { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            seed,
            n,
            grid,
            samples,
            envs,
            truncation,
            delta,
            gamma_ref,
            fit_window,
            tail,
            tail_exponent,
            batches,
            mode,
            env_seed,
            env_index,
            env_file,
            out,
            threads
        )
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

fn dyadic(lo: usize, hi: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut n = lo;
    while n <= hi {
        v.push(n);
        n *= 2;
    }
    v
}

fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

impl ExperimentConfig {
    /// Built-in settings for `command`.
    pub fn defaults(command: Command) -> Self {
        let mut c = ExperimentConfig {
            command,
            seed: 1,
            n: 8,
            grid: dyadic(512, 4096),
            samples: 10_000,
            envs: 100,
            truncation: 400,
            delta: 0.05,
            gamma_ref: None,
            fit_window: [64, 512],
            tail: TailArg::PowerLaw,
            tail_exponent: 1.25,
            batches: 20,
            mode: Mode::Annealed,
            env: None,
            out: PathBuf::from("results"),
            threads: default_threads(),
        };
        match command {
            Command::Oracle => c.envs = 5,
            Command::Renewal => {
                c.n = 400;
                c.envs = 10;
            }
            Command::Llt => c.truncation = 512,
            Command::Range | Command::Wlln => {}
            Command::Variance => {
                c.grid = dyadic(512, 8192);
                c.fit_window = [512, 8192];
            }
            Command::Baseline => {
                c.grid = vec![1_000, 10_000, 100_000];
                c.samples = 1_000;
                c.mode = Mode::Baseline;
            }
            Command::Green => c.envs = 10,
        }
        c
    }

    /// Defaults, then the config file, then the flags.
    pub fn resolve(
        command: Command,
        file: ConfigLayer,
        flags: ConfigLayer,
    ) -> Result<Self, RunError> {
        let layer = file.overlay(flags);
        let mut c = Self::defaults(command);
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = layer.$f { c.$f = v; })* };
        }
        take!(
            seed,
            n,
            grid,
            samples,
            envs,
            truncation,
            delta,
            fit_window,
            tail,
            tail_exponent,
            batches,
            mode,
            out,
            threads
        );
        c.gamma_ref = layer.gamma_ref;
        c.env = match (layer.env_file, layer.env_seed, layer.env_index) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(usage(
                    "give either an environment file or a seed/index pair, not both",
                ))
            }
            (Some(path), None, None) => Some(EnvSpec::File(path)),
            (None, None, None) => None,
            (None, seed, index) => Some(EnvSpec::Sampled {
                seed: seed.unwrap_or(c.seed),
                index: index.unwrap_or(0),
            }),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let positive = [
            ("n", self.n),
            ("samples", self.samples),
            ("envs", self.envs),
            ("threads", self.threads),
            ("batches", self.batches),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(usage(format!("{name} must be positive")));
        }
        if self.grid.is_empty() || self.grid[0] == 0 || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(usage(format!(
                "grid must be positive and strictly increasing, got {:?}",
                self.grid
            )));
        }
        if self.truncation < 2 || self.truncation % 2 != 0 {
            return Err(usage(format!(
                "truncation must be even and at least 2, got {}",
                self.truncation
            )));
        }
        if !(self.delta > 0.0) {
            return Err(usage(format!("delta must be positive, got {}", self.delta)));
        }
        if let Some(g) = self.gamma_ref {
            if !(g > 0.0 && g <= 1.0) {
                return Err(usage(format!("gamma-ref must lie in (0, 1], got {g}")));
            }
        }
        FitWindow::dyadic(self.fit_window[0], self.fit_window[1])
            .map_err(|e| usage(format!("fit window: {e}")))?;
        if self.tail == TailArg::Pinned && !(self.tail_exponent > 1.0) {
            return Err(usage("a pinned tail needs an exponent above 1"));
        }
        match (self.mode, &self.env) {
            (Mode::Quenched, None) => {
                return Err(usage(
                    "mode quenched needs --env-seed/--env-index or --env-file",
                ))
            }
            (Mode::Quenched, Some(_)) => {}
            (_, Some(_)) => return Err(usage("an environment spec only applies to mode quenched")),
            _ => {}
        }
        let exact = matches!(
            self.command,
            Command::Oracle | Command::Renewal | Command::Llt | Command::Green
        );
        if exact && self.mode == Mode::Baseline {
            return Err(usage(format!(
                "{} has no baseline mode",
                self.command.name()
            )));
        }
        match self.command {
            Command::Oracle if self.n > 10 => {
                return Err(usage(format!(
                    "oracle enumerates at most 10 steps, got n = {}",
                    self.n
                )))
            }
            Command::Llt if self.truncation < self.fit_window[1] as usize => {
                return Err(usage("truncation must reach the end of the fit window"))
            }
            Command::Variance if self.samples < 2 * self.batches => {
                return Err(usage("variance needs at least two samples per batch"))
            }
            Command::Range | Command::Wlln | Command::Variance | Command::Baseline
                if self.samples < 2 =>
            {
                return Err(usage("need at least two samples"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn tail_method(&self) -> TailMethod {
        match self.tail {
            TailArg::None => TailMethod::None,
            TailArg::PowerLaw => TailMethod::PowerLaw,
            TailArg::Pinned => TailMethod::PinnedPowerLaw {
                exponent: self.tail_exponent,
            },
        }
    }

    /// The fixed environment of mode quenched or alternating.
    pub fn fixed_field(&self) -> Result<Option<OrientationField>, RunError> {
        Ok(match (&self.mode, &self.env) {
            (Mode::Alternating, _) => Some(OrientationField::alternating()),
            (Mode::Quenched, Some(EnvSpec::Sampled { seed, index })) => {
                Some(sample_environment(*seed, *index))
            }
            (Mode::Quenched, Some(EnvSpec::File(path))) => {
                let field = OrientationField::load(path)?;
                let r = self.reach() as i64;
                if !field.covers(-r, r) {
                    return Err(usage(format!(
                        "{} must cover levels -{r}..={r} for this run",
                        path.display()
                    )));
                }
                Some(field)
            }
            _ => None,
        })
    }

    /// Largest level a walk of this run can reach.
    fn reach(&self) -> usize {
        let grid_max = self.grid.last().copied().unwrap_or(0);
        match self.command {
            Command::Oracle => 2 * self.n,
            Command::Renewal => self.n,
            Command::Llt | Command::Green => self.truncation,
            Command::Range | Command::Wlln => grid_max.max(self.truncation),
            Command::Variance | Command::Baseline => grid_max,
        }
    }

    /// The settings that determine the results (everything but the output
    /// location and the thread count), as TOML.
    pub fn echo(&self) -> String {
        let mut shown = self.clone();
        shown.out = PathBuf::new();
        shown.threads = 0;
        let mut v = toml::Value::try_from(&shown).expect("config serializes");
        if let Some(t) = v.as_table_mut() {
            t.remove("out");
            t.remove("threads");
        }
        toml::to_string(&v).expect("config serializes")
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "oriented-walk",
    version,
    about = "Random walks on randomly oriented lattices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub action: Action,
}

#[derive(Debug, Subcommand)]
pub enum Action {
    /// Run one experiment and write its outputs.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(value_enum, ignore_case = true)]
    pub command: Command,
    /// TOML file with any of the settings below (flags win).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Walk length for the oracle and renewal studies.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma list `512,1024` or dyadic range `512..8192`.
    #[arg(long, value_parser = parse_grid_arg)]
    pub grid: Option<GridArg>,
    /// Trajectories per grid point.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub envs: Option<usize>,
    /// Length of exact series (even).
    #[arg(long = "truncation", alias = "N")]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Centre for the concentration study; defaults to the estimated escape probability.
    #[arg(long)]
    pub gamma_ref: Option<f64>,
    /// `lo,hi`, both powers of two.
    #[arg(long, value_parser = parse_window)]
    pub fit_window: Option<[u64; 2]>,
    #[arg(long, value_enum)]
    pub tail: Option<TailArg>,
    #[arg(long)]
    pub tail_exponent: Option<f64>,
    /// Batches for the variance-exponent standard error.
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long, value_enum, ignore_case = true)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub env_seed: Option<u64>,
    #[arg(long)]
    pub env_index: Option<u64>,
    /// Explicit field: one `y sign` pair per line.
    #[arg(long)]
    pub env_file: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: $ORIENT_WALK_THREADS, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

fn parse_grid(s: &str) -> Result<Vec<usize>, String> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|e| format!("{e}"))?;
        let hi: usize = hi.trim().parse().map_err(|e| format!("{e}"))?;
        if lo == 0 || !lo.is_power_of_two() || !hi.is_power_of_two() || hi < lo {
            return Err(format!(
                "dyadic range needs powers of two lo <= hi, got {s}"
            ));
        }
        return Ok(dyadic(lo, hi));
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

/// A parsed `--grid` value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridArg(pub Vec<usize>);

fn parse_grid_arg(s: &str) -> Result<GridArg, String> {
    parse_grid(s).map(GridArg)
}

fn parse_window(s: &str) -> Result<[u64; 2], String> {
    let (a, b) = s
        .split_once(',')
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| format!("expected lo,hi, got {s}"))?;
    let p = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

impl RunArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            seed: self.seed,
            n: self.n,
            grid: self.grid.clone().map(|g| g.0),
            samples: self.samples,
            envs: self.envs,
            truncation: self.truncation,
            delta: self.delta,
            gamma_ref: self.gamma_ref,
            fit_window: self.fit_window,
            tail: self.tail,
            tail_exponent: self.tail_exponent,
            batches: self.batches,
            mode: self.mode,
            env_seed: self.env_seed,
            env_index: self.env_index,
            env_file: self.env_file.clone(),
            out: self.out.clone(),
            threads: self.threads,
        }
    }

    pub fn into_config(self) -> Result<ExperimentConfig, RunError> {
        let file = match &self.config {
            Some(path) => load_layer(path)?,
            None => ConfigLayer::default(),
        };
        ExperimentConfig::resolve(self.command, file, self.layer())
    }
}

pub fn load_layer(path: &Path) -> Result<ConfigLayer, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Runs `config` on its own thread pool, writes the outputs and the manifest.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest, RunError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()?;
    let execution = pool.install(|| execute(config))?;
    output::write(config, execution, started.elapsed().as_secs_f64())
}

/// Entry point of the binary.
pub fn main_from_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let Action::Run(args) = cli.action;
    let result = args.into_config().and_then(|c| run(&c));
    match result {
        Ok(manifest) => {
            for c in &manifest.checks {
                let tag = if c.passed { "pass" } else { "FAIL" };
                eprintln!("{tag} {}: {}", c.name, c.detail);
            }
            for o in &manifest.outputs {
                println!("{}", o.path.display());
            }
            match manifest.checks.iter().find(|c| !c.passed) {
                Some(c) => {
                    eprintln!("error: invariant {} failed", c.name);
                    ExitCode::from(1)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
