//! Depth-0 gradient descent on `½‖Ay − b‖²`.
//!
//! The component of `y` in `ker(A)` never moves under this iteration, so the
//! limit is the kernel part of `y₀` plus `θ*`. [`controlled_init`] inverts
//! that relation to pick a starting point that lands on a chosen interpolant.

use alloc::format;

use crate::error::{Error, Result};
use crate::linalg::{ProblemInstance, Vector};
use crate::trace::{GdConfig, IterateTrace, Monitor, Observation};

/// Tolerance, relative to `‖b‖`, for accepting a target as an interpolant.
pub const TARGET_TOL: f64 = 1e-8;

/// Relative accuracy demanded of the projection loop in [`controlled_init`].
pub const INNER_TOL: f64 = 1e-13;

/// `y − α Aᵀ(Ay − b)`.
pub fn gd_step(y: &Vector, p: &ProblemInstance, alpha: f64) -> Vector {
    let r = p.residual(y);
    y - p.a().tr_mul(&r) * alpha
}

/// Runs gradient descent from `y0`, recording residual and distance to `θ*`.
pub fn run_gd(y0: &Vector, p: &ProblemInstance, cfg: &GdConfig) -> Result<(Vector, IterateTrace)> {
    cfg.validate()?;
    check_len(y0, p.d())?;
    let a = p.a();
    let mut y = y0.clone();
    let mut r = Vector::zeros(p.n());
    let mut g = Vector::zeros(p.d());
    let mut mon = Monitor::new(p, cfg);
    let mut step = None;
    let mut k = 0;
    loop {
        r.copy_from(p.b());
        r.gemv(1.0, a, &y, -1.0);
        g.gemv_tr(1.0, a, &r, 0.0);
        let grad_norm = g.norm();
        let obs = Observation {
            residual: r.norm(),
            step,
            grad_norm: Some(grad_norm),
            ..Default::default()
        };
        if let Some(t) = mon.observe(k, &y, obs) {
            return Ok((y, mon.finish(t)));
        }
        y.axpy(-cfg.alpha, &g, 1.0);
        step = Some(cfg.alpha * grad_norm);
        k += 1;
    }
}

/// Closed-form limit `V₂V₂ᵀy₀ + θ*` of [`run_gd`] from `y0`.
pub fn predict_limit(y0: &Vector, p: &ProblemInstance, alpha: f64) -> Result<Vector> {
    check_len(y0, p.d())?;
    let s = p.spectral_norm();
    if !(alpha > 0.0) || s * s * alpha >= 2.0 {
        return Err(Error::StepTooLarge {
            alpha,
            limit: 2.0 / (s * s),
        });
    }
    Ok(p.kernel_component(y0) + p.theta_star())
}

/// Starting point from which [`run_gd`] converges to `target`.
///
/// Follows the two-stage recipe: gradient descent on `½‖V₂V₂ᵀz − (target − θ*)‖²`
/// from `z = 0`, whose result is then used as `y₀`. The projector has unit
/// norm, so the inner step is `min(α, 1)`.
pub fn controlled_init(p: &ProblemInstance, target: &Vector, cfg: &GdConfig) -> Result<Vector> {
    cfg.validate()?;
    check_len(target, p.d())?;
    let residual = p.residual_norm(target);
    if residual > TARGET_TOL * p.b_scale() {
        return Err(Error::NotASolution { residual });
    }
    let delta = target - p.theta_star();
    let tol = INNER_TOL * delta.norm().max(1.0);
    let step = cfg.alpha.min(1.0);
    let mut z = Vector::zeros(p.d());
    for _ in 0..cfg.max_iters {
        let e = p.kernel_component(&z) - &delta;
        if e.norm() <= tol {
            return Ok(z);
        }
        z.axpy(-step, &p.kernel_component(&e), 1.0);
    }
    let residual = (p.kernel_component(&z) - &delta).norm();
    if residual <= tol {
        Ok(z)
    } else {
        Err(Error::InnerNotConverged {
            iters: cfg.max_iters,
            residual,
        })
    }
}

fn check_len(v: &Vector, d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "expected a vector of length {d}, got {}",
            v.len()
        )));
    }
    Ok(())
}
