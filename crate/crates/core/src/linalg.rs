//! Dense linear-algebra kernel: the problem instance, SVD splits, QR with a
//! positive-diagonal convention, pseudoinverse solves and norms.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
// Float supplies sqrt/powf when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, RngSpec};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value threshold below which `A` is declared rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Relative cutoff used by [`min_norm_solve`] for matrices that may be rank deficient.
pub const PINV_RCOND: f64 = 1e-10;

/// The pair `(A, b)` of an underdetermined system `Ay = b`.
///
/// `A` is `n × d` with `d ≥ n` and full row rank. The thin SVD `A = U Σ V₁ᵀ`
/// and the minimum-norm solution `θ*` are computed once on construction,
/// since every iteration reports its distance to `θ*`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    a: Matrix,
    b: Vector,
    u: Matrix,
    sigma: Vector,
    v1: Matrix,
    theta_star: Vector,
    b_scale: f64,
}

impl ProblemInstance {
    /// Validates shape, finiteness and full row rank.
    ///
    /// A zero target is accepted (the homogeneous system `x + y = 0` is a
    /// useful example); relative tolerances then fall back to unit scale.
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        let (n, d) = a.shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!("empty matrix {n}x{d}")));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "A has {n} rows but b has length {}",
                b.len()
            )));
        }
        if d < n {
            return Err(Error::InvalidArgument(format!(
                "system must be underdetermined or square, got {n}x{d}"
            )));
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite entry in A or b".into()));
        }
        let ThinSvd { u, sigma, v } = thin_svd(&a);
        check_rank(&sigma)?;
        let theta_star = solve_with_svd(&u, &sigma, &v, &b);
        let b_norm = b.norm();
        Ok(Self {
            a,
            b,
            u,
            sigma,
            v1: v,
            theta_star,
            b_scale: if b_norm > 0.0 { b_norm } else { 1.0 },
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    /// Minimum-norm solution `θ* = V₁ Σ⁻¹ Uᵀ b`.
    pub fn theta_star(&self) -> &Vector {
        &self.theta_star
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> &Vector {
        &self.sigma
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v1(&self) -> &Matrix {
        &self.v1
    }

    pub fn spectral_norm(&self) -> f64 {
        self.sigma[0]
    }

    pub fn condition_number(&self) -> f64 {
        self.sigma[0] / self.sigma[self.sigma.len() - 1]
    }

    /// `1 / ‖A‖²`, inside the convergence region `‖A‖² < 2/α`.
    pub fn default_alpha(&self) -> f64 {
        1.0 / (self.sigma[0] * self.sigma[0])
    }

    /// `‖b‖`, or 1 when `b = 0`. Relative tolerances are taken against this.
    pub fn b_scale(&self) -> f64 {
        self.b_scale
    }

    pub fn residual(&self, y: &Vector) -> Vector {
        &self.a * y - &self.b
    }

    pub fn residual_norm(&self, y: &Vector) -> f64 {
        self.residual(y).norm()
    }

    pub fn loss(&self, y: &Vector) -> f64 {
        0.5 * self.residual(y).norm_squared()
    }

    /// `(Aᵀ)⁺ y = U Σ⁻¹ V₁ᵀ y`, the coefficients of the row-space part of `y`.
    pub fn transpose_pinv_apply(&self, y: &Vector) -> Vector {
        let mut c = self.v1.tr_mul(y);
        c.component_div_assign(&self.sigma);
        &self.u * c
    }

    /// `(Aᵀ)⁺ M` column by column.
    pub fn transpose_pinv_mat(&self, m: &Matrix) -> Matrix {
        let mut c = self.v1.tr_mul(m);
        for (mut row, s) in c.row_iter_mut().zip(self.sigma.iter()) {
            row /= *s;
        }
        &self.u * c
    }

    /// Component of `y` in `ker(A)`, i.e. `(I − V₁V₁ᵀ) y`.
    pub fn kernel_component(&self, y: &Vector) -> Vector {
        y - &self.v1 * self.v1.tr_mul(y)
    }

    /// Column-wise `(I − V₁V₁ᵀ) M`.
    pub fn kernel_component_mat(&self, m: &Matrix) -> Matrix {
        m - &self.v1 * self.v1.tr_mul(m)
    }

    /// Divides both `A` and `b` by `factor`, which keeps `θ*` and `κ(A)`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Self::new(&self.a / factor, &self.b / factor)
    }

    /// Full split including a basis of `ker(A)`.
    pub fn svd_split(&self) -> SvdSplit {
        let v2 = kernel_basis(&self.v1);
        SvdSplit {
            u: self.u.clone(),
            sigma_tilde: self.sigma.clone(),
            v1: self.v1.clone(),
            v2,
        }
    }
}

/// `A = U diag(Σ̃) V₁ᵀ`, with `[V₁ | V₂]` orthogonal and `A V₂ = 0`.
#[derive(Debug, Clone)]
pub struct SvdSplit {
    pub u: Matrix,
    pub sigma_tilde: Vector,
    pub v1: Matrix,
    pub v2: Matrix,
}

impl SvdSplit {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (mut col, s) in us.column_iter_mut().zip(self.sigma_tilde.iter()) {
            col *= *s;
        }
        us * self.v1.transpose()
    }

    /// `V₂ V₂ᵀ y`, the projection onto `ker(A)`.
    pub fn kernel_project(&self, y: &Vector) -> Vector {
        &self.v2 * self.v2.tr_mul(y)
    }
}

/// SVD split of a full-row-rank `A`.
pub fn svd_split(a: &Matrix) -> Result<SvdSplit> {
    let (n, d) = a.shape();
    if n == 0 || d < n {
        return Err(Error::InvalidArgument(format!(
            "svd_split needs a wide or square matrix, got {n}x{d}"
        )));
    }
    let ThinSvd { u, sigma, v } = thin_svd(a);
    check_rank(&sigma)?;
    let v2 = kernel_basis(&v);
    Ok(SvdSplit {
        u,
        sigma_tilde: sigma,
        v1: v,
        v2,
    })
}

pub fn min_norm_solution(p: &ProblemInstance) -> Vector {
    p.theta_star().clone()
}

/// Minimum-norm least-squares solution of `M z = rhs` for any shape and rank.
///
/// Singular values below `PINV_RCOND · σ_max` are treated as zero. nalgebra's
/// SVD can return inconsistent factors when some singular values are exactly
/// zero, so a rank-deficient `M` is first restricted to an orthonormal basis
/// `Q` of its row space (from a column-pivoted QR of `Mᵀ`) and the full-rank
/// `MQ` is decomposed instead.
pub fn min_norm_solve(m: &Matrix, rhs: &Vector) -> Vector {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Vector::zeros(cols);
    }
    let s = m.singular_values();
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let rank = s.iter().filter(|&&v| v > PINV_RCOND * s_max).count();
    if rank == 0 {
        return Vector::zeros(cols);
    }
    if rank == rows.min(cols) {
        return full_rank_solve(m, rhs);
    }
    let q = m.transpose().col_piv_qr().q().columns(0, rank).into_owned();
    &q * full_rank_solve(&(m * &q), rhs)
}

fn full_rank_solve(m: &Matrix, rhs: &Vector) -> Vector {
    let svd = m.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        unreachable!("requested both factors")
    };
    let mut z = Vector::zeros(m.ncols());
    for (i, s) in svd.singular_values.iter().enumerate() {
        z.axpy(u.column(i).dot(rhs) / s, &v_t.row(i).transpose(), 1.0);
    }
    z
}

/// Random instance with prescribed condition number.
///
/// `A = U diag(σ) V₁ᵀ` with Haar-random `U`, random orthonormal `V₁` and
/// singular values log-spaced from `cond` down to 1; `b` is a uniform unit
/// vector. With `n = 1` the only attainable condition number is 1.
pub fn random_problem(n: usize, d: usize, cond: f64, spec: &RngSpec) -> Result<ProblemInstance> {
    if n == 0 || d < n {
        return Err(Error::InvalidArgument(format!(
            "random_problem needs 1 <= n <= d, got n={n}, d={d}"
        )));
    }
    if !(cond.is_finite() && cond >= 1.0) {
        return Err(Error::InvalidArgument(format!("cond must be >= 1, got {cond}")));
    }
    if n == 1 && cond != 1.0 {
        return Err(Error::InvalidArgument(
            "a single-row matrix always has condition number 1".into(),
        ));
    }
    let mut rng = spec.rng();
    let u = random_orthogonal_with(&mut rng, n);
    let v1 = orthonormal_columns_with(&mut rng, d, n);
    let sigma = log_spaced_spectrum(n, cond);
    let mut us = u;
    for (mut col, s) in us.column_iter_mut().zip(sigma.iter()) {
        col *= *s;
    }
    let a = us * v1.transpose();
    let b = rng::unit_sphere(&mut rng, n);
    ProblemInstance::new(a, b)
}

fn log_spaced_spectrum(n: usize, cond: f64) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![1.0];
    }
    (0..n).map(|i| cond.powf((n - 1 - i) as f64 / (n - 1) as f64)).collect()
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal of `R` made positive.
pub fn random_orthogonal(d: usize, spec: &RngSpec) -> Matrix {
    random_orthogonal_with(&mut spec.rng(), d)
}

pub fn random_orthogonal_with<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Matrix {
    orthonormal_columns_with(rng, d, d)
}

/// `rows × cols` matrix with Haar-random orthonormal columns.
pub fn orthonormal_columns_with<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    loop {
        let g = rng::gaussian_matrix(rng, rows, cols);
        let qr = qr_positive(&g, false);
        // A Gaussian draw is rank deficient with probability zero; redraw if it happens.
        if qr.r.diagonal().iter().all(|v| *v > 1e-12) {
            return qr.q;
        }
    }
}

/// Householder QR with `diag(R) ≥ 0`.
#[derive(Debug, Clone)]
pub struct QrFactors {
    /// `rows × rows` when `full`, otherwise `rows × cols`.
    pub q: Matrix,
    /// `cols × cols` upper triangle.
    pub r: Matrix,
}

/// QR factorization of a tall or square matrix, `rows ≥ cols`.
///
/// With the sign convention the factorization of a full-column-rank matrix
/// is unique, which is what makes it usable as a retraction.
pub fn qr_positive(m: &Matrix, full: bool) -> QrFactors {
    let (rows, cols) = m.shape();
    assert!(rows >= cols, "qr_positive needs rows >= cols, got {rows}x{cols}");
    let mut r = m.clone();
    let mut reflectors: Vec<Option<Vector>> = Vec::with_capacity(cols);
    for k in 0..cols {
        let x = r.view((k, k), (rows - k, 1)).column(0).into_owned();
        let norm = x.norm();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vv = v.norm_squared();
        if vv == 0.0 {
            reflectors.push(None);
            continue;
        }
        {
            let mut block = r.view_mut((k, k), (rows - k, cols - k));
            // block -= (2/vv) v (vᵀ block)
            let w = block.tr_mul(&v);
            block.ger(-2.0 / vv, &v, &w, 1.0);
        }
        r[(k, k)] = alpha;
        for i in k + 1..rows {
            r[(i, k)] = 0.0;
        }
        reflectors.push(Some(v));
    }

    let q_cols = if full { rows } else { cols };
    let mut q = Matrix::identity(rows, q_cols);
    for k in (0..cols).rev() {
        if let Some(v) = &reflectors[k] {
            let vv = v.norm_squared();
            let mut block = q.view_mut((k, 0), (rows - k, q_cols));
            let w = block.tr_mul(v);
            block.ger(-2.0 / vv, v, &w, 1.0);
        }
    }

    let mut r = r.rows(0, cols).into_owned();
    for k in 0..cols {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
            r.row_mut(k).neg_mut();
        }
    }
    QrFactors { q, r }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub spectral: f64,
    pub frobenius: f64,
}

pub fn norms(m: &Matrix) -> Norms {
    Norms {
        spectral: spectral_norm(m),
        frobenius: m.norm(),
    }
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// `‖W Wᵀ − I‖_F`.
pub fn orthogonality_defect(w: &Matrix) -> f64 {
    let mut g = w * w.transpose();
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

struct ThinSvd {
    u: Matrix,
    sigma: Vector,
    v: Matrix,
}

/// Thin SVD of a wide matrix with descending singular values and the sign of
/// each right singular vector fixed so its largest-magnitude entry is positive.
fn thin_svd(a: &Matrix) -> ThinSvd {
    let svd = a.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        unreachable!("requested both factors")
    };
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let k = order.len();
    let mut u_sorted = Matrix::zeros(u.nrows(), k);
    let mut v_sorted = Matrix::zeros(v_t.ncols(), k);
    let mut s_sorted = Vector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut vcol = v_t.row(src).transpose();
        let mut ucol = u.column(src).into_owned();
        if leading_sign(&vcol) < 0.0 {
            vcol.neg_mut();
            ucol.neg_mut();
        }
        v_sorted.set_column(dst, &vcol);
        u_sorted.set_column(dst, &ucol);
        s_sorted[dst] = s[src];
    }
    ThinSvd {
        u: u_sorted,
        sigma: s_sorted,
        v: v_sorted,
    }
}

/// Sign of the largest-magnitude entry (first one on ties).
fn leading_sign(v: &Vector) -> f64 {
    let mut best = 0.0_f64;
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn check_rank(sigma: &Vector) -> Result<()> {
    let sigma_max = sigma[0];
    let sigma_min = sigma[sigma.len() - 1];
    if !(sigma_max > 0.0) || sigma_min <= RANK_TOL * sigma_max {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    Ok(())
}

fn solve_with_svd(u: &Matrix, sigma: &Vector, v: &Matrix, b: &Vector) -> Vector {
    let mut c = u.tr_mul(b);
    c.component_div_assign(sigma);
    v * c
}

/// Orthonormal basis of the complement of `span(V₁)`, signs normalized.
fn kernel_basis(v1: &Matrix) -> Matrix {
    let (d, n) = v1.shape();
    let q = qr_positive(v1, true).q;
    let mut v2 = q.columns(n, d - n).into_owned();
    for mut col in v2.column_iter_mut() {
        let owned = col.clone_owned();
        if leading_sign(&owned) < 0.0 {
            col.neg_mut();
        }
    }
    v2
}
