//! Command-line surface and the validated configuration it turns into.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rowspace_core::deep::InitKind;

use crate::error::{HarnessError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "rowspace",
    version,
    about = "Initialization-controlled gradient descent experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Step size; defaults to 1/‖A‖² for flat runs, less for layered and Riemannian ones.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Iteration cap; defaults to 100000, or 3000 for `trials`.
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Relative residual tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Random problem, e.g. `n=2,d=3,cond=10`.
    #[arg(long, global = true, conflicts_with = "data")]
    pub synthetic: Option<String>,
    /// svmlight file to load instead of the built-in 2x3 system.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Divide A and b by this constant after loading.
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    #[arg(long, global = true, default_value_t = 1)]
    pub depth: usize,
    #[arg(long, global = true, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub snapshot_every: usize,
    #[arg(long, global = true, default_value_t = 1)]
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum CommandArgs {
    /// Plain gradient descent.
    Solve {
        #[arg(long, value_enum, default_value_t = SolveMethod::Gd)]
        method: SolveMethod,
        #[arg(long, value_enum, default_value_t = FlatInit::Zero)]
        init: FlatInit,
    },
    /// Gradient descent started so that it converges to `--target`.
    Control {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        target: Vec<f64>,
    },
    /// One hidden layer from the bi-optimal initialization, full and vector forms.
    Hidden,
    /// Collapsed one-hidden-layer iteration.
    Compact1,
    /// Deep linear network with `--depth` hidden layers.
    Deep {
        #[arg(long, value_enum, default_value_t = DeepInit::Identity)]
        init: DeepInit,
    },
    /// Collapsed two-hidden-layer iteration.
    Compact2,
    /// Deep network started at a row-space point plus a kernel perturbation.
    Stability {
        #[arg(long, default_value_t = 1.0)]
        c_norm: f64,
    },
    /// Riemannian descent with orthogonal hidden layers.
    Riemann,
    /// Repeated Riemannian runs per depth, summarized.
    Trials {
        #[arg(long = "h", value_delimiter = ',', default_value = "1,3,6")]
        h_list: Vec<usize>,
    },
    /// Random 2-D projection of the gd, compact1 and compact2 paths.
    Project,
    /// Largest stable power-of-10 step for gd, compact1 and compact2.
    Lrgrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMethod {
    Gd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlatInit {
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeepInit {
    Xavier,
    He,
    Identity,
    Lemma9,
}

impl DeepInit {
    pub fn baseline(self) -> Option<InitKind> {
        match self {
            DeepInit::Xavier => Some(InitKind::Xavier),
            DeepInit::He => Some(InitKind::He),
            DeepInit::Identity => Some(InitKind::Identity),
            DeepInit::Lemma9 => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    /// `A = [[5, −3, 1], [3, 1, −1]]`, `b = (6, 4)`.
    Builtin,
    Synthetic {
        n: usize,
        d: usize,
        cond: f64,
    },
    File {
        path: PathBuf,
        scale: Option<f64>,
    },
}

impl FromStr for ProblemSource {
    type Err = HarnessError;

    /// Parses `n=..,d=..[,cond=..]`; `cond` defaults to 1.
    fn from_str(s: &str) -> Result<Self> {
        let (mut n, mut d, mut cond) = (None, None, 1.0);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("expected key=value, got {part:?}")))?;
            let bad = || HarnessError::Config(format!("bad value for {k}: {v:?}"));
            match k.trim() {
                "n" => n = Some(v.trim().parse().map_err(|_| bad())?),
                "d" => d = Some(v.trim().parse().map_err(|_| bad())?),
                "cond" => cond = v.trim().parse().map_err(|_| bad())?,
                other => return Err(HarnessError::Config(format!("unknown synthetic key {other:?}"))),
            }
        }
        match (n, d) {
            (Some(n), Some(d)) => Ok(ProblemSource::Synthetic { n, d, cond }),
            _ => Err(HarnessError::Config("synthetic problems need n and d".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: CommandArgs,
    pub source: ProblemSource,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub out: PathBuf,
    pub depth: usize,
    pub trials: usize,
    pub snapshot_every: usize,
    pub record_every: usize,
}

pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_TRIAL_ITERS: usize = 3000;

impl ExperimentConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let c = cli.common;
        let source = match (c.synthetic, c.data) {
            (Some(s), None) => {
                if c.scale.is_some() {
                    return Err(HarnessError::Config("--scale applies to --data only".into()));
                }
                s.parse()?
            }
            (None, Some(path)) => ProblemSource::File { path, scale: c.scale },
            (None, None) if c.scale.is_some() => {
                return Err(HarnessError::Config("--scale applies to --data only".into()))
            }
            (None, None) => ProblemSource::Builtin,
            (Some(_), Some(_)) => return Err(HarnessError::Config("--synthetic and --data conflict".into())),
        };
        let default_iters = match cli.command {
            CommandArgs::Trials { .. } => DEFAULT_TRIAL_ITERS,
            _ => DEFAULT_MAX_ITERS,
        };
        let cfg = Self {
            command: cli.command,
            source,
            seed: c.seed,
            alpha: c.alpha,
            max_iters: c.max_iters.unwrap_or(default_iters),
            tol: c.tol,
            out: c.out,
            depth: c.depth,
            trials: c.trials,
            snapshot_every: c.snapshot_every,
            record_every: c.record_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return fail(format!("--alpha must be positive, got {a}"));
            }
        }
        if self.max_iters == 0 {
            return fail("--max-iters must be at least 1".into());
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return fail(format!("--tol must be non-negative, got {}", self.tol));
        }
        if self.record_every == 0 {
            return fail("--record-every must be at least 1".into());
        }
        if self.trials == 0 {
            return fail("--trials must be at least 1".into());
        }
        match &self.source {
            ProblemSource::Synthetic { n, d, cond } => {
                if *n == 0 || d < n {
                    return fail(format!("synthetic problems need 1 <= n <= d, got n={n}, d={d}"));
                }
                if !(cond.is_finite() && *cond >= 1.0) {
                    return fail(format!("cond must be >= 1, got {cond}"));
                }
            }
            ProblemSource::File { scale: Some(s), .. } if !(s.is_finite() && *s > 0.0) => {
                return fail(format!("--scale must be positive, got {s}"));
            }
            _ => {}
        }
        match &self.command {
            CommandArgs::Deep { init: DeepInit::Lemma9 } if self.depth != 2 => fail(format!(
                "--init lemma9 builds two hidden layers, got --depth {}",
                self.depth
            )),
            CommandArgs::Deep { .. } | CommandArgs::Stability { .. } | CommandArgs::Riemann if self.depth == 0 => {
                fail("--depth must be at least 1".into())
            }
            CommandArgs::Stability { c_norm } if !(c_norm.is_finite() && *c_norm >= 0.0) => {
                fail(format!("--c-norm must be non-negative, got {c_norm}"))
            }
            CommandArgs::Trials { h_list } if h_list.is_empty() || h_list.contains(&0) => {
                fail("--h needs depths of at least 1".into())
            }
            CommandArgs::Control { target } if target.iter().any(|t| !t.is_finite()) => {
                fail("--target must be finite".into())
            }
            CommandArgs::Project if self.snapshot_every == 0 => fail("project needs --snapshot-every >= 1".into()),
            _ => Ok(()),
        }
    }

    pub fn command_name(&self) -> &'static str {
        match self.command {
            CommandArgs::Solve { .. } => "solve",
            CommandArgs::Control { .. } => "control",
            CommandArgs::Hidden => "hidden",
            CommandArgs::Compact1 => "compact1",
            CommandArgs::Deep { .. } => "deep",
            CommandArgs::Compact2 => "compact2",
            CommandArgs::Stability { .. } => "stability",
            CommandArgs::Riemann => "riemann",
            CommandArgs::Trials { .. } => "trials",
            CommandArgs::Project => "project",
            CommandArgs::Lrgrid => "lrgrid",
        }
    }

    /// Comment lines written at the top of every output file.
    pub fn describe(&self) -> Vec<String> {
        let source = match &self.source {
            ProblemSource::Builtin => "builtin 2x3".to_string(),
            ProblemSource::Synthetic { n, d, cond } => format!("synthetic n={n},d={d},cond={cond:e}"),
            ProblemSource::File { path, scale } => match scale {
                Some(s) => format!("file {} scale={s:e}", path.display()),
                None => format!("file {}", path.display()),
            },
        };
        vec![
            format!("rowspace {} {}", env!("CARGO_PKG_VERSION"), self.command_name()),
            format!("command: {:?}", self.command),
            format!("problem: {source}"),
            format!("seed: {}", self.seed),
            format!("alpha: {}", self.alpha.map_or("default".into(), |a| format!("{a:e}"))),
            format!("max_iters: {}", self.max_iters),
            format!("tol: {:e}", self.tol),
            format!("depth: {}", self.depth),
            format!("trials: {}", self.trials),
            format!("snapshot_every: {}", self.snapshot_every),
            format!("record_every: {}", self.record_every),
        ]
    }
}
