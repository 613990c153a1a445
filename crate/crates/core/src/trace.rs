//! Iteration configuration, stopping rules and per-iteration records shared by
//! every solver in the crate.

use alloc::format;
use alloc::vec::Vec;

// Float supplies sqrt/powf when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{ProblemInstance, Vector};

/// Residual growth factor (relative to `‖b‖`) beyond which a run is declared diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// Gradient norm, relative to `1 + ‖b‖`, below which a non-interpolating
/// iterate is treated as a saddle.
pub const SADDLE_TOL: f64 = 1e-14;

/// Residual, relative to `‖b‖`, above which an iterate counts as non-interpolating
/// for the saddle test. Near an interpolant the gradient vanishes with the residual.
pub const SADDLE_MIN_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once `‖Ay − b‖ ≤ tol_residual · ‖b‖`.
    pub tol_residual: f64,
    /// Stop once `‖y_{k+1} − y_k‖ ≤ tol_step`. Zero only stops at exact fixed points.
    pub tol_step: f64,
    /// Store the effective predictor every this many iterations; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Keep one trace record every this many iterations. The last iterate is always kept.
    pub record_every: usize,
}

impl GdConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            max_iters: 100_000,
            tol_residual: 1e-12,
            tol_step: 0.0,
            snapshot_every: 0,
            record_every: 1,
        }
    }

    /// Default step `1/‖A‖²`.
    pub fn for_problem(p: &ProblemInstance) -> Self {
        Self::new(p.default_alpha())
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol_residual(mut self, tol: f64) -> Self {
        self.tol_residual = tol;
        self
    }

    pub fn with_tol_step(mut self, tol: f64) -> Self {
        self.tol_step = tol;
        self
    }

    pub fn with_snapshot_every(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        for (name, v) in [("tol_residual", self.tol_residual), ("tol_step", self.tol_step)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Residual,
    Step,
    MaxIters,
    Diverged,
    SaddleStop,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Residual => "residual",
            Termination::Step => "step",
            Termination::MaxIters => "max_iters",
            Termination::Diverged => "diverged",
            Termination::SaddleStop => "saddle",
        }
    }

    pub fn converged(self) -> bool {
        matches!(self, Termination::Residual | Termination::Step)
    }
}

impl core::fmt::Display for Termination {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "residual" => Termination::Residual,
            "step" => Termination::Step,
            "max_iters" => Termination::MaxIters,
            "diverged" => Termination::Diverged,
            "saddle" => Termination::SaddleStop,
            other => return Err(Error::InvalidArgument(format!("unknown termination {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `‖A y_k − b‖` for the effective predictor `y_k`.
    pub residual: f64,
    /// `‖y_k − θ*‖`.
    pub dist_theta_star: f64,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    /// Effective predictor, when snapshots are enabled.
    pub snapshot: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    pub records: Vec<TraceRecord>,
    pub terminated_by: Termination,
}

impl IterateTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Index of the last iterate that was examined.
    pub fn iterations(&self) -> usize {
        self.last().map_or(0, |r| r.iter)
    }

    pub fn converged(&self) -> bool {
        self.terminated_by.converged()
    }

    pub fn final_residual(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn final_distance(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.dist_theta_star)
    }
}

/// Quantities observed at one iterate.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Observation {
    pub residual: f64,
    /// Norm of the step that produced this iterate, absent at `k = 0`.
    pub step: Option<f64>,
    /// Norm of the full parameter gradient at this iterate, when defined.
    pub grad_norm: Option<f64>,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
}

/// Applies the stopping rules and accumulates the trace.
pub(crate) struct Monitor<'a> {
    p: &'a ProblemInstance,
    cfg: &'a GdConfig,
    saddle_grad: f64,
    records: Vec<TraceRecord>,
}

impl<'a> Monitor<'a> {
    pub fn new(p: &'a ProblemInstance, cfg: &'a GdConfig) -> Self {
        Self {
            p,
            cfg,
            saddle_grad: SADDLE_TOL * (1.0 + p.b().norm()),
            records: Vec::new(),
        }
    }

    /// Records iterate `k` with effective predictor `y`; returns a reason to stop, if any.
    pub fn observe(&mut self, k: usize, y: &Vector, obs: Observation) -> Option<Termination> {
        let scale = self.p.b_scale();
        if !obs.residual.is_finite() || obs.residual > DIVERGENCE_FACTOR * scale {
            return Some(Termination::Diverged);
        }

        let stop = if obs.residual <= self.cfg.tol_residual * scale {
            Some(Termination::Residual)
        } else if obs.step.is_some_and(|s| s <= self.cfg.tol_step) {
            Some(Termination::Step)
        } else if obs.residual > SADDLE_MIN_RESIDUAL * scale && obs.grad_norm.is_some_and(|g| g <= self.saddle_grad) {
            Some(Termination::SaddleStop)
        } else if k >= self.cfg.max_iters {
            Some(Termination::MaxIters)
        } else {
            None
        };

        if stop.is_some() || k.is_multiple_of(self.cfg.record_every) {
            let se = self.cfg.snapshot_every;
            let snapshot = (se > 0 && (k.is_multiple_of(se) || stop.is_some())).then(|| y.clone());
            self.records.push(TraceRecord {
                iter: k,
                residual: obs.residual,
                dist_theta_star: dist(y, self.p.theta_star()),
                gamma: obs.gamma,
                rho: obs.rho,
                snapshot,
            });
        }
        stop
    }

    pub fn finish(self, terminated_by: Termination) -> IterateTrace {
        IterateTrace {
            records: self.records,
            terminated_by,
        }
    }
}

/// `‖a − b‖` without a temporary.
pub(crate) fn dist(a: &Vector, b: &Vector) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
