//! One hidden layer: `y = W x` with loss `½‖AWx − b‖²`.
//!
//! Started from `W₀ = Aᵀv₀x₀ᵀ`, gradient descent keeps `W` a rank-one outer
//! product with its column space inside `range(Aᵀ)`. That lets the iteration
//! be rewritten first over `(v, x)` and then over `(v, ρ)` alone, `n + 2`
//! numbers however large `d` is.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{min_norm_solve, Matrix, ProblemInstance, Vector};
use crate::rng::{self, RngSpec};
use crate::trace::{dist, GdConfig, IterateTrace, Monitor, Observation};

/// `|1 − γ|` below this aborts the compact iterations.
pub const GAMMA_GUARD: f64 = 1e-14;

/// Initial size of the collapsed predictor relative to `‖b‖`: `‖AAᵀv₀‖ = INIT_SCALE · ‖b‖`.
///
/// The compact iteration scales `v` by `1/(1 − γ)` every step, so a large
/// start drives `ρ` towards zero and stalls; a small one lets `ρ` grow into place.
pub const INIT_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenPair {
    pub w: Matrix,
    pub x: Vector,
}

impl HiddenPair {
    pub fn predictor(&self) -> Vector {
        &self.w * &self.x
    }
}

/// State of the compact iteration. `z` caches `Aᵀv` and is not part of the state proper.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactState {
    pub v: Vector,
    pub rho: f64,
    pub gamma: f64,
    pub z: Vector,
}

impl CompactState {
    pub fn new(p: &ProblemInstance, v0: Vector) -> Self {
        let z = p.a().tr_mul(&v0);
        Self {
            v: v0,
            rho: 1.0,
            gamma: 0.0,
            z,
        }
    }

    /// `v`, `ρ` and `γ`.
    pub fn param_count(&self) -> usize {
        self.v.len() + 2
    }
}

/// One simultaneous gradient step on `(W, x)`.
pub fn gd_step_hidden(s: &HiddenPair, p: &ProblemInstance, alpha: f64) -> HiddenPair {
    let r = p.residual(&s.predictor());
    let g = p.a().tr_mul(&r);
    let mut w = s.w.clone();
    w.ger(-alpha, &g, &s.x, 1.0);
    let x = &s.x - s.w.tr_mul(&g) * alpha;
    HiddenPair { w, x }
}

/// Draws `(v₀, x₀)`: `v₀` Gaussian rescaled to `‖AAᵀv₀‖ = INIT_SCALE·‖b‖`, `x₀` uniform on the sphere.
pub fn biopt_draw(p: &ProblemInstance, spec: &RngSpec) -> (Vector, Vector) {
    let mut rng = spec.rng();
    let v0 = loop {
        let g = rng::gaussian_vector(&mut rng, p.n());
        let size = (p.a() * p.a().tr_mul(&g)).norm();
        if size > 0.0 {
            break g * (INIT_SCALE * p.b_scale() / size);
        }
    };
    let x0 = rng::unit_sphere(&mut rng, p.d());
    (v0, x0)
}

/// `W₀ = Aᵀv₀x₀ᵀ`.
pub fn biopt_from(p: &ProblemInstance, v0: &Vector, x0: &Vector) -> HiddenPair {
    let z = p.a().tr_mul(v0);
    HiddenPair {
        w: &z * x0.transpose(),
        x: x0.clone(),
    }
}

pub fn biopt_init(p: &ProblemInstance, spec: &RngSpec) -> HiddenPair {
    let (v0, x0) = biopt_draw(p, spec);
    biopt_from(p, &v0, &x0)
}

/// Full gradient descent over `(W, x)`.
pub fn run_hidden(s0: &HiddenPair, p: &ProblemInstance, cfg: &GdConfig) -> Result<(HiddenPair, IterateTrace)> {
    cfg.validate()?;
    check_pair(s0, p)?;
    let a = p.a();
    let mut s = s0.clone();
    let mut y = Vector::zeros(p.d());
    let mut r = Vector::zeros(p.n());
    let mut g = Vector::zeros(p.d());
    let mut wtg = Vector::zeros(p.d());
    let mut mon = Monitor::new(p, cfg);
    let mut step = None;
    let mut k = 0;
    loop {
        y.gemv(1.0, &s.w, &s.x, 0.0);
        r.copy_from(p.b());
        r.gemv(1.0, a, &y, -1.0);
        g.gemv_tr(1.0, a, &r, 0.0);
        wtg.gemv_tr(1.0, &s.w, &g, 0.0);
        let grad_norm = (g.norm_squared() * s.x.norm_squared() + wtg.norm_squared()).sqrt();
        let obs = Observation {
            residual: r.norm(),
            step,
            grad_norm: Some(grad_norm),
            ..Default::default()
        };
        if let Some(t) = mon.observe(k, &y, obs) {
            return Ok((s, mon.finish(t)));
        }
        s.w.ger(-cfg.alpha, &g, &s.x, 1.0);
        s.x.axpy(-cfg.alpha, &wtg, 1.0);
        step = Some(cfg.alpha * grad_norm);
        k += 1;
    }
}

/// The reduced iteration over `(x, v)`, seeded like [`biopt_init`].
pub fn run_algorithm2(p: &ProblemInstance, cfg: &GdConfig, spec: &RngSpec) -> Result<(HiddenPair, IterateTrace)> {
    let (v0, x0) = biopt_draw(p, spec);
    run_algorithm2_from(p, &v0, &x0, cfg)
}

/// Iterates
///
/// ```text
/// x ← x − α x vᵀAAᵀ(AAᵀv xᵀx − b)
/// v ← (v − α(AAᵀv xᵀx − b)) xᵀx_new / ‖x_new‖²
/// ```
///
/// with both right-hand sides evaluated at the old `(x, v)`, and returns
/// `(Aᵀvxᵀ, x)`. The state is `d + n` numbers.
pub fn run_algorithm2_from(
    p: &ProblemInstance,
    v0: &Vector,
    x0: &Vector,
    cfg: &GdConfig,
) -> Result<(HiddenPair, IterateTrace)> {
    cfg.validate()?;
    check_len(v0, p.n(), "v0")?;
    check_len(x0, p.d(), "x0")?;
    let a = p.a();
    let mut x = x0.clone();
    let mut v = v0.clone();
    let mut z = a.tr_mul(&v);
    let mut y = Vector::zeros(p.n());
    let mut e = Vector::zeros(p.n());
    let mut g = Vector::zeros(p.d());
    let mut theta = Vector::zeros(p.d());
    let mut prev = Vector::zeros(p.d());
    let mut mon = Monitor::new(p, cfg);
    let mut k = 0;
    loop {
        let xx = x.norm_squared();
        y.gemv(1.0, a, &z, 0.0);
        e.copy_from(p.b());
        e.axpy(xx, &y, -1.0);
        g.gemv_tr(1.0, a, &e, 0.0);
        let c = y.dot(&e);
        theta.copy_from(&z);
        theta *= xx;
        let step = (k > 0).then(|| dist(&theta, &prev));
        let grad_norm = (g.norm_squared() * xx + c * c * xx).sqrt();
        let obs = Observation {
            residual: e.norm(),
            step,
            grad_norm: Some(grad_norm),
            ..Default::default()
        };
        if let Some(t) = mon.observe(k, &theta, obs) {
            let w = &z * x.transpose();
            return Ok((HiddenPair { w, x }, mon.finish(t)));
        }
        let shrink = 1.0 - cfg.alpha * c;
        if shrink.abs() < GAMMA_GUARD {
            return Err(Error::GammaSingular {
                iter: k,
                gamma: cfg.alpha * c,
            });
        }
        // xᵀx_new / ‖x_new‖² = 1 / shrink since x_new = shrink · x.
        let ratio = (xx * shrink) / (xx * shrink * shrink);
        x *= shrink;
        v.axpy(-cfg.alpha, &e, 1.0);
        v *= ratio;
        z.gemv_tr(1.0, a, &v, 0.0);
        core::mem::swap(&mut prev, &mut theta);
        k += 1;
    }
}

/// One step of the compact iteration; `γ` of the returned state is the one used for the step.
pub fn compact_step(state: &CompactState, p: &ProblemInstance, alpha: f64, iter: usize) -> Result<CompactState> {
    let y = p.a() * &state.z;
    let r = (&y * (state.rho * state.rho) - p.b()) * alpha;
    let gamma = y.dot(&r);
    if (1.0 - gamma).abs() < GAMMA_GUARD {
        return Err(Error::GammaSingular { iter, gamma });
    }
    let v = (&state.v - &r) / (1.0 - gamma);
    let z = p.a().tr_mul(&v);
    Ok(CompactState {
        v,
        rho: state.rho * (1.0 - gamma),
        gamma,
        z,
    })
}

/// Compact iteration seeded like [`biopt_init`] (only `v₀` is used; `‖x₀‖ = 1`).
pub fn run_algorithm3(p: &ProblemInstance, cfg: &GdConfig, spec: &RngSpec) -> Result<(Vector, IterateTrace)> {
    let (v0, _) = biopt_draw(p, spec);
    run_algorithm3_from(p, &v0, cfg)
}

/// Iterates `y = Az; r = α(ρ²y − b); γ = yᵀr; v ← (v − r)/(1 − γ); ρ ← ρ(1 − γ); z = Aᵀv`
/// and returns `ρ²z`. Trace records carry `γ_k` and `ρ_k`.
pub fn run_algorithm3_from(p: &ProblemInstance, v0: &Vector, cfg: &GdConfig) -> Result<(Vector, IterateTrace)> {
    run_compact(p, v0, cfg, 2)
}

/// Shared loop of the compact iterations; `power` is 2 for one hidden layer and 4 for two.
pub(crate) fn run_compact(
    p: &ProblemInstance,
    v0: &Vector,
    cfg: &GdConfig,
    power: i32,
) -> Result<(Vector, IterateTrace)> {
    cfg.validate()?;
    check_len(v0, p.n(), "v0")?;
    let a = p.a();
    let mut v = v0.clone();
    let mut rho = 1.0_f64;
    let mut z = a.tr_mul(&v);
    let mut y = Vector::zeros(p.n());
    let mut r = Vector::zeros(p.n());
    let mut theta = Vector::zeros(p.d());
    let mut prev = Vector::zeros(p.d());
    let mut mon = Monitor::new(p, cfg);
    let mut k = 0;
    loop {
        y.gemv(1.0, a, &z, 0.0);
        let scale = rho.powi(power);
        r.copy_from(p.b());
        r.axpy(scale, &y, -1.0);
        let residual = r.norm();
        r *= cfg.alpha;
        let gamma = if power == 2 { y.dot(&r) } else { rho * rho * y.dot(&r) };
        theta.copy_from(&z);
        theta *= scale;
        let step = (k > 0).then(|| dist(&theta, &prev));
        let obs = Observation {
            residual,
            step,
            gamma: Some(gamma),
            rho: Some(rho),
            ..Default::default()
        };
        if let Some(t) = mon.observe(k, &theta, obs) {
            return Ok((theta, mon.finish(t)));
        }
        let shrink = 1.0 - gamma;
        if shrink.abs() < GAMMA_GUARD {
            return Err(Error::GammaSingular { iter: k, gamma });
        }
        v -= &r;
        v /= if power == 2 { shrink } else { shrink * shrink };
        rho *= shrink;
        z.gemv_tr(1.0, a, &v, 0.0);
        core::mem::swap(&mut prev, &mut theta);
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem6Check {
    pub v_hat: Vector,
    /// `‖W − Aᵀv̂xᵀ‖_F`.
    pub residual: f64,
}

/// Reconstructs `v̂ = (Aᵀ)⁺Wx / ‖x‖²` and measures how far `W` is from `Aᵀv̂xᵀ`.
pub fn check_theorem6(s: &HiddenPair, p: &ProblemInstance) -> Result<Theorem6Check> {
    check_pair(s, p)?;
    let xx = s.x.norm_squared();
    if xx == 0.0 {
        return Err(Error::ZeroX);
    }
    let v_hat = p.transpose_pinv_apply(&(&s.w * &s.x)) / xx;
    let mut diff = s.w.clone();
    diff.ger(-1.0, &p.a().tr_mul(&v_hat), &s.x, 1.0);
    Ok(Theorem6Check {
        v_hat,
        residual: diff.norm(),
    })
}

/// Minimality residuals of a factored interpolant, each `‖a − b‖ / max(1, ‖b‖)`
/// against the corresponding minimum-norm solution.
#[derive(Debug, Clone, PartialEq)]
pub struct BioptReport {
    pub residuals: Vec<f64>,
    pub tol: f64,
}

impl BioptReport {
    pub fn passed(&self) -> Vec<bool> {
        self.residuals.iter().map(|r| *r <= self.tol).collect()
    }

    pub fn all_passed(&self) -> bool {
        self.residuals.iter().all(|r| *r <= self.tol)
    }
}

/// Checks the three minimality statements at an interpolating `(W, x)`:
/// `Wx` against `θ*`, `x` against the min-norm solution of `(AW)z = b`, and
/// `W` against the min-Frobenius-norm solution of `AZx = b`.
pub fn check_bioptimality(s: &HiddenPair, p: &ProblemInstance, tol: f64) -> Result<BioptReport> {
    check_pair(s, p)?;
    let xx = s.x.norm_squared();
    if xx == 0.0 {
        return Err(Error::ZeroX);
    }
    let y = s.predictor();
    let residual = p.residual_norm(&y);
    if residual > tol * p.b_scale() {
        return Err(Error::NotInterpolant { residual });
    }
    let aw = p.a() * &s.w;
    let x_min = min_norm_solve(&aw, p.b());
    let w_min = min_norm_outer(p.theta_star(), &s.x);
    Ok(BioptReport {
        residuals: alloc::vec![
            rel_diff(&y, p.theta_star()),
            rel_diff(&s.x, &x_min),
            rel_diff_mat(&s.w, &w_min),
        ],
        tol,
    })
}

/// Minimum-Frobenius-norm `Z` with `Zq = w`: `w qᵀ / ‖q‖²`.
pub(crate) fn min_norm_outer(w: &Vector, q: &Vector) -> Matrix {
    w * q.transpose() / q.norm_squared()
}

pub(crate) fn rel_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub(crate) fn rel_diff_mat(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

fn check_pair(s: &HiddenPair, p: &ProblemInstance) -> Result<()> {
    let d = p.d();
    if s.w.shape() != (d, d) || s.x.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "expected W {d}x{d} and x of length {d}, got W {:?} and x of length {}",
            s.w.shape(),
            s.x.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_len(v: &Vector, len: usize, name: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "{name} must have length {len}, got {}",
            v.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_problem;
    use crate::trace::Termination;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn line(b: f64) -> ProblemInstance {
        ProblemInstance::new(dmatrix![1.0, 1.0], dvector![b]).unwrap()
    }

    fn reference_system() -> ProblemInstance {
        ProblemInstance::new(dmatrix![5.0, -3.0, 1.0; 3.0, 1.0, -1.0], dvector![6.0, 4.0]).unwrap()
    }

    #[test]
    fn zero_pair_is_a_saddle() {
        let p = reference_system();
        let s = HiddenPair {
            w: Matrix::zeros(3, 3),
            x: Vector::zeros(3),
        };
        assert_eq!(gd_step_hidden(&s, &p, 0.1), s);
        let (_, trace) = run_hidden(&s, &p, &GdConfig::new(0.01)).unwrap();
        assert_eq!(trace.terminated_by, Termination::SaddleStop);
        assert_eq!(trace.iterations(), 0);
    }

    #[test]
    fn interpolating_pair_is_fixed() {
        let p = reference_system();
        let s = HiddenPair {
            w: Matrix::identity(3, 3),
            x: p.theta_star().clone(),
        };
        let next = gd_step_hidden(&s, &p, 0.1);
        assert_relative_eq!(next.w, s.w, epsilon = 1e-14);
        assert_relative_eq!(next.x, s.x, epsilon = 1e-14);
    }

    #[test]
    fn hand_step_on_shifted_line() {
        // r = −2, Aᵀr = (−2, −2); x' = −α Wᵀ Aᵀ r = (0.2, 0.2), ∇W = Aᵀr xᵀ = 0.
        let p = line(2.0);
        let s = HiddenPair {
            w: Matrix::identity(2, 2),
            x: Vector::zeros(2),
        };
        let next = gd_step_hidden(&s, &p, 0.1);
        assert_relative_eq!(next.x, dvector![0.2, 0.2], epsilon = 1e-15);
        assert_eq!(next.w, Matrix::identity(2, 2));
    }

    #[test]
    fn outer_product_init_by_hand() {
        let p = line(1.0);
        let s = biopt_from(&p, &dvector![1.0], &dvector![1.0, 0.0]);
        assert_eq!(s.w, dmatrix![1.0, 0.0; 1.0, 0.0]);
    }

    #[test]
    fn biopt_init_structure() {
        let p = random_problem(3, 8, 4.0, &RngSpec::new(11)).unwrap();
        let s = biopt_init(&p, &RngSpec::new(12));
        assert_relative_eq!(s.x.norm(), 1.0, epsilon = 1e-12);
        assert!(p.kernel_component_mat(&s.w).norm() <= 1e-12 * s.w.norm());
        let sv = s.w.singular_values();
        let mut sorted: Vec<f64> = sv.iter().cloned().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert!(sorted[1] <= 1e-12 * sorted[0]);
        assert!(check_theorem6(&s, &p).unwrap().residual <= 1e-12 * s.w.norm().max(1.0));
    }

    #[test]
    fn rank_one_factor_holds_along_trajectory() {
        let p = random_problem(4, 10, 3.0, &RngSpec::new(21)).unwrap();
        let mut s = biopt_init(&p, &RngSpec::new(22));
        let alpha = 0.5 * p.default_alpha();
        for _ in 0..100 {
            s = gd_step_hidden(&s, &p, alpha);
            let c = check_theorem6(&s, &p).unwrap();
            assert!(c.residual <= 1e-8 * s.w.norm());
        }
    }

    #[test]
    fn identity_is_not_a_rank_one_row_space_product() {
        let p = line(1.0);
        let s = HiddenPair {
            w: Matrix::identity(2, 2),
            x: dvector![0.3, 0.8],
        };
        assert!(check_theorem6(&s, &p).unwrap().residual > 0.1);
    }

    #[test]
    fn zero_x_is_reported() {
        let p = line(1.0);
        let s = HiddenPair {
            w: Matrix::identity(2, 2),
            x: Vector::zeros(2),
        };
        assert_eq!(check_theorem6(&s, &p), Err(Error::ZeroX));
    }

    #[test]
    fn course_correction_after_x_vanishes() {
        // A state reached when x_{k+1} = 0: W = Aᵀw x_kᵀ with x = 0.
        let p = random_problem(3, 7, 2.0, &RngSpec::new(5)).unwrap();
        let w = dvector![0.2, -0.4, 0.1];
        let xk = rng::unit_sphere(&mut RngSpec::new(6).rng(), 7);
        let s = HiddenPair {
            w: p.a().tr_mul(&w) * xk.transpose(),
            x: Vector::zeros(7),
        };
        assert_eq!(check_theorem6(&s, &p), Err(Error::ZeroX));
        let next = gd_step_hidden(&s, &p, 0.05);
        let c = check_theorem6(&next, &p).unwrap();
        assert!(c.residual <= 1e-12 * next.w.norm());
    }

    #[test]
    fn column_space_membership_is_conserved() {
        let p = random_problem(3, 9, 5.0, &RngSpec::new(30)).unwrap();
        let mut s = biopt_init(&p, &RngSpec::new(31));
        // Add a kernel part; it should stay exactly as it is.
        let extra = p.kernel_component_mat(&rng::gaussian_matrix(&mut RngSpec::new(32).rng(), 9, 9));
        s.w += &extra;
        let c0 = p.kernel_component_mat(&s.w);
        for _ in 0..50 {
            s = gd_step_hidden(&s, &p, 0.2 * p.default_alpha());
            assert!((p.kernel_component_mat(&s.w) - &c0).norm() <= 1e-12 * c0.norm());
        }
    }

    #[test]
    fn reduced_iteration_matches_full_gd_step_by_step() {
        let p = random_problem(4, 11, 6.0, &RngSpec::new(40)).unwrap();
        let spec = RngSpec::new(41);
        let cfg = GdConfig::for_problem(&p)
            .with_max_iters(60)
            .with_tol_residual(0.0)
            .with_snapshot_every(1);
        let (_, full) = run_hidden(&biopt_init(&p, &spec), &p, &cfg).unwrap();
        let (out, reduced) = run_algorithm2(&p, &cfg, &spec).unwrap();
        assert_eq!(full.records.len(), reduced.records.len());
        for (a, b) in full.records.iter().zip(&reduced.records) {
            let (ya, yb) = (a.snapshot.as_ref().unwrap(), b.snapshot.as_ref().unwrap());
            assert!((ya - yb).norm() <= 1e-10 * ya.norm().max(1.0));
        }
        assert_eq!(out.x.len() + p.n(), p.d() + p.n());
    }

    #[test]
    fn reduced_iteration_at_k0_is_the_init() {
        let p = reference_system();
        let spec = RngSpec::new(2);
        let cfg = GdConfig::new(0.01)
            .with_max_iters(1)
            .with_tol_residual(0.0)
            .with_snapshot_every(1);
        let (_, t) = run_algorithm2(&p, &cfg, &spec).unwrap();
        let init = biopt_init(&p, &spec);
        let y0 = t.records[0].snapshot.as_ref().unwrap();
        assert_relative_eq!(*y0, init.predictor(), epsilon = 1e-14);
    }

    #[test]
    fn compact_iteration_matches_full_gd_step_by_step() {
        let p = random_problem(5, 12, 4.0, &RngSpec::new(50)).unwrap();
        let spec = RngSpec::new(51);
        let cfg = GdConfig::for_problem(&p)
            .with_max_iters(60)
            .with_tol_residual(0.0)
            .with_snapshot_every(1);
        let (_, full) = run_hidden(&biopt_init(&p, &spec), &p, &cfg).unwrap();
        let (_, compact) = run_algorithm3(&p, &cfg, &spec).unwrap();
        for (a, b) in full.records.iter().zip(&compact.records) {
            let (ya, yb) = (a.snapshot.as_ref().unwrap(), b.snapshot.as_ref().unwrap());
            assert!((ya - yb).norm() <= 1e-8);
        }
        assert!(compact.records.iter().all(|r| r.gamma.is_some() && r.rho.is_some()));
    }

    #[test]
    fn compact_state_is_n_plus_two() {
        let p = reference_system();
        let st = CompactState::new(&p, dvector![0.1, 0.2]);
        assert_eq!(st.param_count(), 4);
        let next = compact_step(&st, &p, 0.01, 0).unwrap();
        assert_relative_eq!(next.z, p.a().tr_mul(&next.v), epsilon = 1e-12);
    }

    #[test]
    fn compact_converges_to_min_norm() {
        let p = reference_system();
        let cfg = GdConfig::new(0.01).with_max_iters(200_000);
        let (theta, trace) = run_algorithm3(&p, &cfg, &RngSpec::new(3)).unwrap();
        assert!(trace.converged());
        assert!((theta - p.theta_star()).norm() <= 1e-6 * p.theta_star().norm());
    }

    #[test]
    fn singular_gamma_is_an_error() {
        // With ρ = 1, y = Az and b = 0, γ = α‖y‖²; pick α so that γ = 1.
        let p = line(0.0);
        let v0 = dvector![1.0];
        let y = 2.0;
        let cfg = GdConfig::new(1.0 / (y * y)).with_max_iters(5);
        assert!(matches!(
            run_algorithm3_from(&p, &v0, &cfg),
            Err(Error::GammaSingular { iter: 0, .. })
        ));
    }

    #[test]
    fn bioptimality_at_convergence() {
        let p = reference_system();
        let spec = RngSpec::new(8);
        let cfg = GdConfig::new(0.01).with_max_iters(200_000).with_tol_residual(1e-13);
        let (s, trace) = run_hidden(&biopt_init(&p, &spec), &p, &cfg).unwrap();
        assert!(trace.converged());
        let rep = check_bioptimality(&s, &p, 1e-6).unwrap();
        assert!(rep.all_passed(), "{:?}", rep.residuals);
    }

    #[test]
    fn bioptimality_flags_the_wrong_factorization() {
        // W = θ*e₁ᵀ + e₂e₂ᵀ with x = e₁: the product is θ*, but the extra column
        // makes W larger than the min-Frobenius solution θ*e₁ᵀ.
        let p = reference_system();
        let mut w = p.theta_star() * dvector![1.0, 0.0, 0.0].transpose();
        w.column_mut(1).copy_from(&dvector![0.0, 1.0, 0.0]);
        let s = HiddenPair {
            w,
            x: dvector![1.0, 0.0, 0.0],
        };
        let rep = check_bioptimality(&s, &p, 1e-6).unwrap();
        let ok = rep.passed();
        assert!(ok[0]);
        assert!(!ok[2]);
    }

    #[test]
    fn bioptimality_flags_kernel_shift() {
        let p = reference_system();
        let k = p.svd_split().v2.column(0).into_owned();
        let s = HiddenPair {
            w: Matrix::identity(3, 3),
            x: p.theta_star() + k,
        };
        let rep = check_bioptimality(&s, &p, 1e-6).unwrap();
        assert!(!rep.passed()[0]);
    }

    #[test]
    fn bioptimality_requires_interpolant() {
        let p = reference_system();
        let s = HiddenPair {
            w: Matrix::identity(3, 3),
            x: Vector::zeros(3),
        };
        assert_eq!(check_bioptimality(&s, &p, 1e-6), Err(Error::ZeroX));
        let s = HiddenPair {
            w: Matrix::identity(3, 3),
            x: dvector![1.0, 0.0, 0.0],
        };
        assert!(matches!(
            check_bioptimality(&s, &p, 1e-6),
            Err(Error::NotInterpolant { .. })
        ));
    }
}
