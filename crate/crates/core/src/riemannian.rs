//! Deep linear networks whose hidden layers are orthogonal, trained by
//! Riemannian gradient descent on a product of `Stiefel(d, d)` manifolds with
//! an unconstrained outer vector.
//!
//! The metric is the Euclidean one inherited from `ℝ^{d×d}`, the tangent
//! projection is `G − W·sym(WᵀG)` and the retraction is the Q factor of a QR
//! decomposition with positive `diag(R)`. There is no line search.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

// Float supplies sqrt/powf when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::deep::{LayerStack, Workspace};
use crate::error::{Error, Result};
use crate::flat;
use crate::linalg::{self, orthogonality_defect, qr_positive, Matrix, ProblemInstance, Vector, RANK_TOL};
use crate::rng::{self, RngSpec};
use crate::trace::{dist, GdConfig, IterateTrace, Monitor, Observation, Termination};

/// Orthogonality defect accepted by [`StiefelPoint::new`].
pub const STIEFEL_TOL: f64 = 1e-10;

/// Relative column norm below which a retraction is declared singular.
const SINGULAR_TOL: f64 = 1e-12;

/// A square orthogonal matrix, `WWᵀ = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(Matrix);

impl StiefelPoint {
    pub fn new(w: Matrix) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Stiefel(d, d) points are square, got {:?}",
                w.shape()
            )));
        }
        let defect = orthogonality_defect(&w);
        if !(defect <= STIEFEL_TOL) {
            return Err(Error::NotOrthogonal { defect });
        }
        Ok(Self(w))
    }

    pub fn random(d: usize, spec: &RngSpec) -> Self {
        Self(linalg::random_orthogonal(d, spec))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Orthogonal projection of `G` onto the tangent space at `W`: `G − W·sym(WᵀG)`.
pub fn tangent_project(w: &StiefelPoint, g: &Matrix) -> Matrix {
    let w = w.matrix();
    let wtg = w.tr_mul(g);
    let sym = (&wtg + wtg.transpose()) * 0.5;
    g - w * sym
}

/// Q factor of `W + ξ` with `diag(R) > 0`. A zero step returns `W` unchanged.
pub fn qr_retract(w: &StiefelPoint, xi: &Matrix) -> Result<StiefelPoint> {
    if xi.shape() != w.matrix().shape() {
        return Err(Error::DimensionMismatch(format!(
            "step {:?} does not match point {:?}",
            xi.shape(),
            w.matrix().shape()
        )));
    }
    if xi.iter().all(|v| *v == 0.0) {
        return Ok(w.clone());
    }
    let qr = qr_positive(&(w.matrix() + xi), false);
    let diag = qr.r.diagonal();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if !(diag.iter().all(|v| *v > SINGULAR_TOL * max) && max.is_finite()) {
        return Err(Error::SingularStep);
    }
    Ok(StiefelPoint(qr.q))
}

/// `‖MM⁺W − W‖_F`, the Frobenius distance from `W` to `range(M)`.
pub fn range_distance(w: &StiefelPoint, m: &Matrix) -> Result<f64> {
    let (d, n) = m.shape();
    if d != w.matrix().nrows() || n > d || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "M must be {}xn with 1 <= n <= {}, got {d}x{n}",
            w.matrix().nrows(),
            w.matrix().nrows()
        )));
    }
    let sv = m.singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(sigma_max > 0.0) || sigma_min <= RANK_TOL * sigma_max {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    let q = qr_positive(m, false).q;
    let w = w.matrix();
    Ok((&q * q.tr_mul(w) - w).norm())
}

/// Random orthogonal hidden layers and `x` uniform on the sphere, all from one stream.
pub fn riemannian_init(d: usize, h: usize, spec: &RngSpec) -> LayerStack {
    let mut rng = spec.rng();
    let weights = (0..h).map(|_| linalg::random_orthogonal_with(&mut rng, d)).collect();
    let x = rng::unit_sphere(&mut rng, d);
    LayerStack { weights, x }
}

/// One Riemannian step: every layer moves along its projected negative
/// gradient and is retracted; `x` takes a plain gradient step. Depth zero is
/// ordinary gradient descent on `x`.
pub fn riemannian_step(s: &LayerStack, p: &ProblemInstance, alpha: f64) -> Result<LayerStack> {
    if s.depth() == 0 {
        return LayerStack::new(Vec::new(), flat::gd_step(&s.x, p, alpha));
    }
    for w in &s.weights {
        StiefelPoint::new(w.clone())?;
    }
    let mut next = LayerStack::new(s.weights.clone(), s.x.clone())?;
    let mut ws = Workspace::new(s.depth(), p.n(), p.d());
    let mut buf = Vector::zeros(p.d());
    ws.evaluate(&next, p);
    apply_riemannian(&ws, &mut next, alpha, &mut buf)?;
    Ok(next)
}

/// In-place update using gradients already in `ws`.
///
/// With `G = l sᵀ` (rank one), `W·sym(WᵀG) = ½((Wm)sᵀ + (Ws)mᵀ)` where
/// `m = Wᵀl` is the next back-propagated vector and `Ws` the previous suffix,
/// so the tangent step is three rank-one updates. The retraction is
/// Gram–Schmidt with reorthogonalization, which yields the same Q factor as
/// a positive-diagonal QR.
fn apply_riemannian(ws: &Workspace, st: &mut LayerStack, alpha: f64, wm: &mut Vector) -> Result<()> {
    let h = st.depth();
    for j in 0..h {
        let w = &mut st.weights[j];
        let (l, m) = (&ws.l[j], &ws.l[j + 1]);
        let (ws_vec, s) = (&ws.s[j], &ws.s[j + 1]);
        wm.gemv(1.0, w, m, 0.0);
        w.ger(-alpha, l, s, 1.0);
        w.ger(0.5 * alpha, wm, s, 1.0);
        w.ger(0.5 * alpha, ws_vec, m, 1.0);
        orthonormalize_columns(w)?;
    }
    st.x.axpy(-alpha, &ws.l[h], 1.0);
    Ok(())
}

/// Gram–Schmidt on the columns of a square matrix, two passes per column.
fn orthonormalize_columns(w: &mut Matrix) -> Result<()> {
    let d = w.nrows();
    let data = w.as_mut_slice();
    for j in 0..d {
        let (done, rest) = data.split_at_mut(j * d);
        let col = &mut rest[..d];
        let before = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..2 {
            for i in 0..j {
                let qi = &done[i * d..(i + 1) * d];
                let dot: f64 = qi.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for (c, q) in col.iter_mut().zip(qi) {
                    *c -= dot * q;
                }
            }
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > SINGULAR_TOL * before && norm.is_finite()) {
            return Err(Error::SingularStep);
        }
        for c in col.iter_mut() {
            *c /= norm;
        }
    }
    Ok(())
}

/// Runs Riemannian descent from [`riemannian_init`].
pub fn run_riemannian(
    p: &ProblemInstance,
    h: usize,
    cfg: &GdConfig,
    spec: &RngSpec,
) -> Result<(LayerStack, IterateTrace)> {
    if h == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    run_riemannian_from(&riemannian_init(p.d(), h, spec), p, cfg)
}

pub fn run_riemannian_from(s0: &LayerStack, p: &ProblemInstance, cfg: &GdConfig) -> Result<(LayerStack, IterateTrace)> {
    cfg.validate()?;
    for w in &s0.weights {
        StiefelPoint::new(w.clone())?;
    }
    let mut s = LayerStack::new(s0.weights.clone(), s0.x.clone())?;
    if s.dim() != p.d() {
        return Err(Error::DimensionMismatch(format!(
            "stack dimension {} does not match d = {}",
            s.dim(),
            p.d()
        )));
    }
    let mut ws = Workspace::new(s.depth(), p.n(), p.d());
    let mut buf = Vector::zeros(p.d());
    let mut prev = Vector::zeros(p.d());
    let mut mon = Monitor::new(p, cfg);
    let mut k = 0;
    loop {
        let (residual, _) = ws.evaluate(&s, p);
        let step = (k > 0).then(|| dist(&ws.s[0], &prev));
        let obs = Observation {
            residual,
            step,
            ..Default::default()
        };
        if let Some(t) = mon.observe(k, &ws.s[0], obs) {
            return Ok((s, mon.finish(t)));
        }
        prev.copy_from(&ws.s[0]);
        apply_riemannian(&ws, &mut s, cfg.alpha, &mut buf)?;
        k += 1;
    }
}

/// Result of one random-initialization trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// Final `‖W₁⋯W_hx − θ*‖`, or the last finite value if the run diverged.
    pub distance: f64,
    pub residual: f64,
    pub terminated_by: Termination,
}

/// Stream id of trial `trial` at depth `h`.
pub fn trial_stream(h: usize, trial: usize) -> u64 {
    ((h as u64) << 32) | trial as u64
}

/// One trial; only the final iterate is kept in memory.
pub fn trial_outcome(p: &ProblemInstance, h: usize, cfg: &GdConfig, spec: &RngSpec) -> Result<TrialOutcome> {
    let cfg = GdConfig {
        record_every: cfg.max_iters.max(1),
        snapshot_every: 0,
        ..cfg.clone()
    };
    let init = riemannian_init(p.d(), h, spec);
    let (_, trace) = match run_riemannian_from(&init, p, &cfg) {
        Ok(out) => out,
        Err(Error::SingularStep) => {
            return Ok(TrialOutcome {
                distance: (init.predictor() - p.theta_star()).norm(),
                residual: p.residual_norm(&init.predictor()),
                terminated_by: Termination::Diverged,
            })
        }
        Err(e) => return Err(e),
    };
    let (distance, residual) = match trace.last() {
        Some(r) => (r.dist_theta_star, r.residual),
        None => {
            let y = init.predictor();
            ((y - p.theta_star()).norm(), p.residual_norm(&init.predictor()))
        }
    };
    Ok(TrialOutcome {
        distance,
        residual,
        terminated_by: trace.terminated_by,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Percentiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` increasing edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialStats {
    pub distances: Vec<f64>,
    pub percentiles: Percentiles,
    pub histogram: Histogram,
    /// Population variance of the distances.
    pub variance: f64,
    pub diverged: usize,
}

pub const DEFAULT_BINS: usize = 30;

impl TrialStats {
    pub fn from_outcomes(outcomes: &[TrialOutcome], bins: usize) -> Result<Self> {
        let distances: Vec<f64> = outcomes.iter().map(|o| o.distance).collect();
        let mut stats = Self::from_distances(distances, bins)?;
        stats.diverged = outcomes
            .iter()
            .filter(|o| o.terminated_by == Termination::Diverged)
            .count();
        Ok(stats)
    }

    pub fn from_distances(distances: Vec<f64>, bins: usize) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::InvalidArgument("no trials to summarize".into()));
        }
        if bins == 0 {
            return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
        }
        let mut sorted = distances.clone();
        sorted.sort_by(f64::total_cmp);
        let percentiles = Percentiles {
            p25: percentile(&sorted, 25.0),
            p50: percentile(&sorted, 50.0),
            p75: percentile(&sorted, 75.0),
        };
        let len = distances.len() as f64;
        let mean = distances.iter().sum::<f64>() / len;
        let variance = distances.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
        let histogram = histogram(&sorted, bins);
        Ok(Self {
            distances,
            percentiles,
            histogram,
            variance,
            diverged: 0,
        })
    }

    /// Fraction of trials with distance at most `tol`.
    pub fn fraction_within(&self, tol: f64) -> f64 {
        self.distances.iter().filter(|d| **d <= tol).count() as f64 / self.distances.len() as f64
    }
}

/// Linear interpolation between order statistics of a sorted slice.
pub fn percentile(sorted: &[f64], level: f64) -> f64 {
    let pos = (level / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn histogram(sorted: &[f64], bins: usize) -> Histogram {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = alloc::vec![0usize; bins];
    for &v in sorted {
        let idx = if width > 0.0 && width.is_finite() {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}

/// Runs `trials` independent trials for every depth in `h_list`; trial `t`
/// at depth `h` draws from stream [`trial_stream`]`(h, t)` of the master seed.
pub fn run_trials(
    p: &ProblemInstance,
    h_list: &[usize],
    trials: usize,
    cfg: &GdConfig,
    spec: &RngSpec,
) -> Result<BTreeMap<usize, TrialStats>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut out = BTreeMap::new();
    for &h in h_list {
        if h == 0 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        let outcomes = (0..trials)
            .map(|t| trial_outcome(p, h, cfg, &spec.with_stream(trial_stream(h, t))))
            .collect::<Result<Vec<_>>>()?;
        out.insert(h, TrialStats::from_outcomes(&outcomes, DEFAULT_BINS)?);
    }
    Ok(out)
}
