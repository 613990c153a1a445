//! Deep linear networks `y = W₁W₂⋯W_h x` with square `d × d` layers.
//!
//! Gradients come from two vector recurrences instead of matrix products:
//!
//! ```text
//! s_{h+1} = x,       s_j = W_j s_{j+1}          (s₁ is the predictor)
//! l₁ = Aᵀ(As₁ − b),  l_{j+1} = W_jᵀ l_j
//! ∇W_j = l_j s_{j+1}ᵀ,  ∇x = l_{h+1}
//! ```
//!
//! so a step costs `O(h)` matrix-vector products and every layer update is
//! an exact rank-one correction.
//!
//! For `h = 2` there is a structured start (first column / first row) that
//! gradient descent preserves, and with it a compact `O(n)` iteration.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::hidden::{check_len, min_norm_outer, rel_diff, rel_diff_mat, run_compact, BioptReport};
use crate::linalg::{min_norm_solve, spectral_norm, Matrix, ProblemInstance, Vector};
use crate::rng::{self, RngSpec};
use crate::trace::{dist, GdConfig, IterateTrace, Monitor, Observation};

/// Relative tolerance for the two-layer construction identities.
pub const CONSTRUCTION_TOL: f64 = 1e-10;

/// `W₁ … W_h` and the outer vector `x`. Depth zero is allowed and means `y = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub weights: Vec<Matrix>,
    pub x: Vector,
}

impl LayerStack {
    pub fn new(weights: Vec<Matrix>, x: Vector) -> Result<Self> {
        let d = x.len();
        if let Some(w) = weights.iter().find(|w| w.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!(
                "every layer must be {d}x{d}, found {:?}",
                w.shape()
            )));
        }
        Ok(Self { weights, x })
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn predictor(&self) -> Vector {
        self.weights.iter().rev().fold(self.x.clone(), |acc, w| w * acc)
    }

    fn check(&self, p: &ProblemInstance) -> Result<()> {
        let d = p.d();
        if self.x.len() != d || self.weights.iter().any(|w| w.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!(
                "stack of dimension {} does not match problem with d = {d}",
                self.x.len()
            )));
        }
        Ok(())
    }
}

/// Dense Euclidean gradients of `½‖Ay − b‖²` with respect to every layer and `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub x: Vector,
}

/// Buffers for the forward and backward recurrences.
pub(crate) struct Workspace {
    /// `s[j]` is the suffix product applied to `x`; `s[0]` is the predictor.
    pub s: Vec<Vector>,
    /// `l[j]` is the back-propagated residual; `l[h]` is `∇x`.
    pub l: Vec<Vector>,
    pub r: Vector,
}

impl Workspace {
    pub fn new(h: usize, n: usize, d: usize) -> Self {
        Self {
            s: (0..=h).map(|_| Vector::zeros(d)).collect(),
            l: (0..=h).map(|_| Vector::zeros(d)).collect(),
            r: Vector::zeros(n),
        }
    }

    /// Fills the buffers at `st`; returns `(‖r‖, ‖∇‖)` over all parameters.
    pub fn evaluate(&mut self, st: &LayerStack, p: &ProblemInstance) -> (f64, f64) {
        let h = st.depth();
        self.s[h].copy_from(&st.x);
        for j in (0..h).rev() {
            let (lo, hi) = self.s.split_at_mut(j + 1);
            lo[j].gemv(1.0, &st.weights[j], &hi[0], 0.0);
        }
        self.r.copy_from(p.b());
        self.r.gemv(1.0, p.a(), &self.s[0], -1.0);
        self.l[0].gemv_tr(1.0, p.a(), &self.r, 0.0);
        for j in 0..h {
            let (lo, hi) = self.l.split_at_mut(j + 1);
            hi[0].gemv_tr(1.0, &st.weights[j], &lo[j], 0.0);
        }
        let mut g2 = self.l[h].norm_squared();
        for j in 0..h {
            g2 += self.l[j].norm_squared() * self.s[j + 1].norm_squared();
        }
        (self.r.norm(), g2.sqrt())
    }

    /// `∇W_j = l_j s_{j+1}ᵀ`.
    pub fn weight_gradient(&self, j: usize) -> Matrix {
        &self.l[j] * self.s[j + 1].transpose()
    }

    pub fn apply_gd(&self, st: &mut LayerStack, alpha: f64) {
        let h = st.depth();
        for (j, w) in st.weights.iter_mut().enumerate() {
            w.ger(-alpha, &self.l[j], &self.s[j + 1], 1.0);
        }
        st.x.axpy(-alpha, &self.l[h], 1.0);
    }
}

pub fn gradients(s: &LayerStack, p: &ProblemInstance) -> Result<Gradients> {
    s.check(p)?;
    let mut ws = Workspace::new(s.depth(), p.n(), p.d());
    ws.evaluate(s, p);
    Ok(Gradients {
        weights: (0..s.depth()).map(|j| ws.weight_gradient(j)).collect(),
        x: ws.l[s.depth()].clone(),
    })
}

/// One simultaneous gradient step on all layers and `x`.
pub fn gd_step_deep(s: &LayerStack, p: &ProblemInstance, alpha: f64) -> Result<LayerStack> {
    let mut next = s.clone();
    gd_step_deep_mut(&mut next, p, alpha)?;
    Ok(next)
}

pub fn gd_step_deep_mut(s: &mut LayerStack, p: &ProblemInstance, alpha: f64) -> Result<()> {
    s.check(p)?;
    let mut ws = Workspace::new(s.depth(), p.n(), p.d());
    ws.evaluate(s, p);
    ws.apply_gd(s, alpha);
    Ok(())
}

pub fn run_deep(s0: &LayerStack, p: &ProblemInstance, cfg: &GdConfig) -> Result<(LayerStack, IterateTrace)> {
    cfg.validate()?;
    s0.check(p)?;
    let mut s = s0.clone();
    let mut ws = Workspace::new(s.depth(), p.n(), p.d());
    let mut mon = Monitor::new(p, cfg);
    let mut prev = Vector::zeros(p.d());
    let mut k = 0;
    loop {
        let (residual, grad_norm) = ws.evaluate(&s, p);
        let step = (k > 0).then(|| dist(&ws.s[0], &prev));
        let obs = Observation {
            residual,
            step,
            grad_norm: Some(grad_norm),
            ..Default::default()
        };
        if let Some(t) = mon.observe(k, &ws.s[0], obs) {
            return Ok((s, mon.finish(t)));
        }
        prev.copy_from(&ws.s[0]);
        ws.apply_gd(&mut s, cfg.alpha);
        k += 1;
    }
}

/// Two-layer structured start together with the vectors that witness it.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma9Init {
    pub stack: LayerStack,
    pub v: Vector,
    pub u: Vector,
}

/// Builds the two-layer start from `v`:
/// `x = Aᵀv/‖Aᵀv‖²`, `u = AAᵀv/‖AAᵀv‖²`, `W₁ = [Aᵀv | 0 ⋯ 0]`, `W₂ = W₁ᵀAᵀu xᵀ`.
///
/// The identity `W₁ = Aᵀv xᵀW₂ᵀ` additionally needs `‖Aᵀv‖ = 1`; use
/// [`lemma9_init`] for a start where all three identities hold.
pub fn lemma9_from_v(p: &ProblemInstance, v: &Vector) -> Result<Lemma9Init> {
    check_len(v, p.n(), "v")?;
    let atv = p.a().tr_mul(v);
    let aatv = p.a() * &atv;
    let (n1, n2) = (atv.norm_squared(), aatv.norm_squared());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::InvalidArgument("v must be non-zero".into()));
    }
    let x = &atv / n1;
    let u = &aatv / n2;
    let d = p.d();
    let mut w1 = Matrix::zeros(d, d);
    w1.set_column(0, &atv);
    let w2 = w1.tr_mul(&p.a().tr_mul(&u)) * x.transpose();
    Ok(Lemma9Init {
        stack: LayerStack {
            weights: alloc::vec![w1, w2],
            x,
        },
        v: v.clone(),
        u,
    })
}

/// Relative residuals of `W₁ = Aᵀv xᵀW₂ᵀ`, `W₂ = W₁ᵀAᵀu xᵀ` and `x = W₂ᵀW₁ᵀAᵀu`.
pub fn lemma9_residuals(init: &Lemma9Init, p: &ProblemInstance) -> [f64; 3] {
    let LayerStack { weights, x } = &init.stack;
    let (w1, w2) = (&weights[0], &weights[1]);
    let atv = p.a().tr_mul(&init.v);
    let atu = p.a().tr_mul(&init.u);
    let r1 = rel_diff_mat(&(&atv * (w2 * x).transpose()), w1);
    let w1t_atu = w1.tr_mul(&atu);
    let r2 = rel_diff_mat(&(&w1t_atu * x.transpose()), w2);
    let r3 = rel_diff(&w2.tr_mul(&w1t_atu), x);
    [r1, r2, r3]
}

/// Draws `v` with `‖Aᵀv‖ = 1`, so that `‖x₀‖ = 1` and the compact iteration starts at `ρ = 1`.
pub fn lemma9_draw(p: &ProblemInstance, spec: &RngSpec) -> Vector {
    let mut rng = spec.rng();
    loop {
        let g = rng::gaussian_vector(&mut rng, p.n());
        let size = p.a().tr_mul(&g).norm();
        if size > 0.0 {
            return g / size;
        }
    }
}

/// Random structured two-layer start, verified against its three identities.
pub fn lemma9_init(p: &ProblemInstance, spec: &RngSpec) -> Result<Lemma9Init> {
    let init = lemma9_from_v(p, &lemma9_draw(p, spec))?;
    let residual = lemma9_residuals(&init, p).into_iter().fold(0.0, f64::max);
    if !(residual <= CONSTRUCTION_TOL) {
        return Err(Error::ConstructionFailed { residual });
    }
    Ok(init)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem12Witness {
    pub v: Vector,
    pub u: Vector,
    /// `‖W₁ − Aᵀv xᵀW₂ᵀ‖_F`.
    pub residual_w1: f64,
    /// `‖W₂ − W₁ᵀAᵀu xᵀ‖_F`.
    pub residual_w2: f64,
    /// `‖x − W₂ᵀW₁ᵀAᵀu‖`.
    pub residual_x: f64,
}

/// Reconstructs `v = (Aᵀ)⁺W₁W₂x / ‖x‖⁴` and `u = AW₁W₂x / (‖x‖²‖AW₁‖_F²)` and
/// measures the three two-layer identities.
pub fn check_theorem12(s: &LayerStack, p: &ProblemInstance) -> Result<Theorem12Witness> {
    s.check(p)?;
    require_depth(s, 2)?;
    let xx = s.x.norm_squared();
    if xx == 0.0 {
        return Err(Error::ZeroX);
    }
    let (w1, w2) = (&s.weights[0], &s.weights[1]);
    let w2x = w2 * &s.x;
    let q = w1 * &w2x;
    let v = p.transpose_pinv_apply(&q) / (xx * xx);
    let aw1 = p.a() * w1;
    let aw1_sq = aw1.norm_squared();
    let u = if aw1_sq > 0.0 {
        &aw1 * &w2x / (xx * aw1_sq)
    } else {
        Vector::zeros(p.n())
    };
    let atv = p.a().tr_mul(&v);
    let mut d1 = w1.clone();
    d1.ger(-1.0, &atv, &w2x, 1.0);
    let w1t_atu = w1.tr_mul(&p.a().tr_mul(&u));
    let mut d2 = w2.clone();
    d2.ger(-1.0, &w1t_atu, &s.x, 1.0);
    let residual_x = (&s.x - w2.tr_mul(&w1t_atu)).norm();
    Ok(Theorem12Witness {
        v,
        u,
        residual_w1: d1.norm(),
        residual_w2: d2.norm(),
        residual_x,
    })
}

/// Compact two-layer iteration seeded like [`lemma9_init`].
pub fn run_algorithm4(p: &ProblemInstance, cfg: &GdConfig, spec: &RngSpec) -> Result<(Vector, IterateTrace)> {
    run_algorithm4_from(p, &lemma9_draw(p, spec), cfg)
}

/// Iterates `y = Az; e = α(ρ⁴y − b); γ = ρ²yᵀe; v ← (v − e)/(1 − γ)²; ρ ← ρ(1 − γ); z = Aᵀv`
/// and returns `ρ⁴z`. Matches full two-layer descent from [`lemma9_from_v`]
/// when `‖Aᵀv₀‖ = 1`.
pub fn run_algorithm4_from(p: &ProblemInstance, v0: &Vector, cfg: &GdConfig) -> Result<(Vector, IterateTrace)> {
    run_compact(p, v0, cfg, 4)
}

/// The four minimality statements for an interpolating two-layer stack: the
/// product against `θ*`, `x` against the min-norm solution of `(AW₁W₂)z = b`,
/// `W₁` against the min-Frobenius solution of `AZ(W₂x) = b`, and `W₂` against
/// that of `(AW₁)Zx = b`.
pub fn check_corollary14(s: &LayerStack, p: &ProblemInstance, tol: f64) -> Result<BioptReport> {
    s.check(p)?;
    require_depth(s, 2)?;
    if s.x.norm_squared() == 0.0 {
        return Err(Error::ZeroX);
    }
    let (w1, w2) = (&s.weights[0], &s.weights[1]);
    let w2x = w2 * &s.x;
    let y = w1 * &w2x;
    let residual = p.residual_norm(&y);
    if residual > tol * p.b_scale() {
        return Err(Error::NotInterpolant { residual });
    }
    let aw1 = p.a() * w1;
    let x_min = min_norm_solve(&(&aw1 * w2), p.b());
    let w1_res = if w2x.norm_squared() > 0.0 {
        rel_diff_mat(w1, &min_norm_outer(p.theta_star(), &w2x))
    } else {
        f64::INFINITY
    };
    let w2_min = min_norm_outer(&min_norm_solve(&aw1, p.b()), &s.x);
    Ok(BioptReport {
        residuals: alloc::vec![
            rel_diff(&y, p.theta_star()),
            rel_diff(&s.x, &x_min),
            w1_res,
            rel_diff_mat(w2, &w2_min),
        ],
        tol,
    })
}

/// `W₁ = AᵀP + C` with `AC = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityDecomposition {
    pub p: Matrix,
    pub c: Matrix,
}

/// `P = (Aᵀ)⁺W₁`, `C = W₁ − AᵀP`.
pub fn stability_decompose(w1: &Matrix, prob: &ProblemInstance) -> Result<StabilityDecomposition> {
    let d = prob.d();
    if w1.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "W1 must have {d} rows, got {}",
            w1.nrows()
        )));
    }
    let p = prob.transpose_pinv_mat(w1);
    let c = w1 - prob.a().tr_mul(&p);
    Ok(StabilityDecomposition { p, c })
}

/// `‖W₂‖⋯‖W_h‖ · ‖x‖ · ‖C‖` in spectral norms; bounds `‖W₁⋯W_hx − θ*‖` at an
/// interpolating limit whose row-space part is `θ*`.
pub fn stability_bound(s: &LayerStack, c: &Matrix) -> f64 {
    let layers: f64 = s.weights.iter().skip(1).map(spectral_norm).product();
    layers * s.x.norm() * spectral_norm(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitKind {
    /// Entries uniform on `[−1/√d, 1/√d]`.
    Xavier,
    /// Entries normal with variance `2/d`.
    He,
    Identity,
}

impl core::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xavier" => Ok(InitKind::Xavier),
            "he" => Ok(InitKind::He),
            "identity" => Ok(InitKind::Identity),
            other => Err(Error::InvalidArgument(format!("unknown init kind {other:?}"))),
        }
    }
}

/// Standard entry-wise initializations. `x` is uniform on the unit sphere for every kind.
pub fn baseline_init(d: usize, h: usize, kind: InitKind, spec: &RngSpec) -> LayerStack {
    let mut rng = spec.rng();
    let s = d as f64;
    let weights = (0..h)
        .map(|_| match kind {
            InitKind::Xavier => rng::uniform_matrix(&mut rng, d, d, 1.0 / s.sqrt()),
            InitKind::He => rng::normal_matrix(&mut rng, d, d, (2.0 / s).sqrt()),
            InitKind::Identity => Matrix::identity(d, d),
        })
        .collect();
    let x = rng::unit_sphere(&mut rng, d);
    LayerStack { weights, x }
}

/// `W₁ = V₁V₁ᵀ + C` with `C` a random kernel-valued matrix of spectral norm
/// `c_norm`, the remaining layers `I`, and `x` uniform on the sphere.
pub fn kernel_perturbed_init(p: &ProblemInstance, h: usize, c_norm: f64, spec: &RngSpec) -> Result<LayerStack> {
    let (n, d) = (p.n(), p.d());
    if h == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if d == n {
        return Err(Error::InvalidArgument(
            "square systems have no kernel to perturb".into(),
        ));
    }
    let mut rng = spec.rng();
    let c = p.kernel_component_mat(&rng::gaussian_matrix(&mut rng, d, d));
    let c = &c * (c_norm / spectral_norm(&c));
    let w1 = p.v1() * p.v1().transpose() + c;
    let mut weights = alloc::vec![w1];
    weights.extend((1..h).map(|_| Matrix::identity(d, d)));
    let x = rng::unit_sphere(&mut rng, d);
    Ok(LayerStack { weights, x })
}

fn require_depth(s: &LayerStack, h: usize) -> Result<()> {
    if s.depth() != h {
        return Err(Error::InvalidArgument(format!("expected depth {h}, got {}", s.depth())));
    }
    Ok(())
}
