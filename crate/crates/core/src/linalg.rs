//! Dense kernels: thin SVD, numeric rank, Moore–Penrose pseudoinverse and its
//! truncated and ridge-regularized variants, plus the identity-distance
//! stopping metric.
//!
//! Two SVD routes are available. One-sided (Hestenes) Jacobi is accurate to
//! working precision and is used for small or roughly square inputs. For
//! large, strongly rectangular inputs (the usual `d × N` data matrix with
//! `d ≪ N`) the factors are assembled from the symmetric eigendecomposition of
//! the smaller Gram matrix, which costs `O(d²N)`.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{PilaeError, Result};
use crate::matrix::Matrix;

const JACOBI_MAX_SWEEPS: usize = 80;
const EIGEN_MAX_ITER: usize = 100_000;

/// Thin SVD `A = U · diag(σ) · Vᵀ` with `σ` non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `m × k`, orthonormal columns.
    pub u: Matrix,
    pub sigma: Vec<f64>,
    /// `n × k`, orthonormal columns.
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        numeric_rank(&self.sigma, self.u.rows(), self.v.rows())
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            us.column_mut(j).iter_mut().for_each(|v| *v *= s);
        }
        us.matmul_t(&self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdRoute {
    /// Gram route for large strongly rectangular inputs, Jacobi otherwise.
    Auto,
    Jacobi,
    Gram,
}

impl SvdRoute {
    fn resolve(self, m: usize, n: usize) -> SvdRoute {
        match self {
            SvdRoute::Auto => {
                let (lo, hi) = (m.min(n), m.max(n));
                if lo >= 128 && hi >= 2 * lo {
                    SvdRoute::Gram
                } else {
                    SvdRoute::Jacobi
                }
            }
            r => r,
        }
    }
}

pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    svd_with(a, SvdRoute::Auto)
}

pub fn svd_with(a: &Matrix, route: SvdRoute) -> Result<SvdFactors> {
    check_input("svd", a)?;
    let (m, n) = a.shape();
    let mut f = match route.resolve(m, n) {
        SvdRoute::Gram => gram_svd(a)?,
        _ => jacobi_svd(a, true)?.0,
    };
    fix_signs(&mut f);
    Ok(f)
}

/// Singular values only, computed by the same route `svd` would take.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    check_input("singular_values", a)?;
    let (m, n) = a.shape();
    match SvdRoute::Auto.resolve(m, n) {
        SvdRoute::Gram => {
            let g = if m <= n { a.gram_rows() } else { a.gram_cols() };
            let vals = g.to_dmatrix().symmetric_eigenvalues();
            let mut vals: Vec<f64> = vals.iter().copied().collect();
            vals.sort_by(|x, y| y.total_cmp(x));
            Ok(gram_sigma(&vals))
        }
        _ => Ok(jacobi_svd(a, false)?.1),
    }
}

/// Number of singular values above `max(m, n) · σ₀ · ε`.
pub fn numeric_rank(sigma: &[f64], m: usize, n: usize) -> usize {
    let Some(&s0) = sigma.first() else {
        return 0;
    };
    if s0 <= 0.0 {
        return 0;
    }
    let tol = m.max(n) as f64 * s0 * f64::EPSILON;
    sigma.iter().filter(|&&s| s > tol).count()
}

/// Moore–Penrose pseudoinverse `V · Σ⁺ · Uᵀ` (shape `cols × rows`).
pub fn pinv(a: &Matrix) -> Result<Matrix> {
    let f = svd(a)?;
    Ok(pinv_rows(&f, a.rows(), a.cols(), a.cols()))
}

/// First `p` rows of `pinv(a)`: `V̂ · Σ⁺ · Uᵀ` where `V̂` keeps the first `p`
/// rows of `V`.
pub fn truncated_pinv(a: &Matrix, p: usize) -> Result<Matrix> {
    if p == 0 || p > a.cols() {
        return Err(PilaeError::arg(format!(
            "truncated_pinv: p = {p} outside 1..={}",
            a.cols()
        )));
    }
    let f = svd(a)?;
    Ok(pinv_rows(&f, a.rows(), a.cols(), p))
}

/// Truncated pseudoinverse from precomputed factors of an `m × n` matrix.
pub fn truncated_pinv_from(f: &SvdFactors, m: usize, n: usize, p: usize) -> Result<Matrix> {
    if p == 0 || p > n {
        return Err(PilaeError::arg(format!(
            "truncated_pinv: p = {p} outside 1..={n}"
        )));
    }
    Ok(pinv_rows(f, m, n, p))
}

fn pinv_rows(f: &SvdFactors, m: usize, n: usize, p: usize) -> Matrix {
    let r = numeric_rank(&f.sigma, m, n);
    let vr = Matrix::from_fn(p, r, |i, j| f.v[(i, j)] / f.sigma[j]);
    let ur = f.u.col_range(0..r);
    if r == 0 {
        return Matrix::zeros(p, m);
    }
    vr.matmul_t(&ur)
}

/// `Hᵀ (H Hᵀ + λ I)⁻¹`, shape `N × p` for `H` of shape `p × N`.
pub fn ridge_pinv(h: &Matrix, lambda: f64) -> Result<Matrix> {
    check_lambda("ridge_pinv", lambda)?;
    check_input("ridge_pinv", h)?;
    let solver = ShiftedGram::new(&h.gram_rows(), lambda)?;
    Ok(solver.solve(h).transpose())
}

/// `B · ridge_pinv(H, λ)` computed as `(B Hᵀ)(H Hᵀ + λ I)⁻¹`, without forming
/// the `N × p` pseudoinverse.
pub fn ridge_fit(b: &Matrix, h: &Matrix, lambda: f64) -> Result<Matrix> {
    check_lambda("ridge_fit", lambda)?;
    check_input("ridge_fit", h)?;
    if b.cols() != h.cols() {
        return Err(PilaeError::shape(
            "ridge_fit",
            format!("targets have {} columns, features {}", b.cols(), h.cols()),
        ));
    }
    let solver = ShiftedGram::new(&h.gram_rows(), lambda)?;
    Ok(solver.solve_right(&b.matmul_t(h)))
}

/// `‖ridge_pinv(H, λ) · H − I_N‖²_F / N²`.
///
/// Evaluated through the singular values of `H`: the projection
/// `Hᵀ(HHᵀ + λI)⁻¹H` has eigenvalues `σᵢ² / (σᵢ² + λ)` on the row space and
/// zero elsewhere.
pub fn identity_distance(h: &Matrix, lambda: f64) -> Result<f64> {
    check_input("identity_distance", h)?;
    let sigma = singular_values(h)?;
    Ok(identity_distance_from_sigma(&sigma, h.cols(), lambda))
}

pub fn identity_distance_from_sigma(sigma: &[f64], n_cols: usize, lambda: f64) -> f64 {
    let k = sigma.len().min(n_cols);
    let on_span: f64 = sigma[..k]
        .iter()
        .map(|&s| {
            let s2 = s * s;
            let gap = if s2 + lambda > 0.0 { lambda / (s2 + lambda) } else { 1.0 };
            gap * gap
        })
        .sum();
    let n = n_cols as f64;
    (on_span + (n_cols - k) as f64) / (n * n)
}

/// `(G + λI)` factored once, solved many times.
///
/// Cholesky is tried first. If rounding makes the shifted matrix numerically
/// indefinite (tiny `λ` against a large, rank-deficient `G`), the solve falls
/// back to an eigendecomposition with eigenvalues clamped at `λ`.
pub(crate) struct ShiftedGram {
    inner: Factor,
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Eigen {
        vectors: nalgebra::DMatrix<f64>,
        values: Vec<f64>,
    },
}

impl ShiftedGram {
    pub(crate) fn new(gram: &Matrix, lambda: f64) -> Result<Self> {
        if !gram.is_finite() || !lambda.is_finite() {
            return Err(PilaeError::numerical(
                "ridge factorization",
                "non-finite Gram matrix or shift",
            ));
        }
        let mut shifted = gram.to_dmatrix();
        for i in 0..gram.rows() {
            shifted[(i, i)] += lambda;
        }
        if let Some(chol) = Cholesky::new(shifted.clone()) {
            return Ok(ShiftedGram {
                inner: Factor::Chol(chol),
            });
        }
        log::debug!("cholesky failed for shift {lambda:e}; using clamped eigensolve");
        let n = shifted.nrows();
        let eig = SymmetricEigen::try_new(shifted, f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| {
            PilaeError::numerical("ridge factorization", "eigensolver did not converge")
        })?;
        let values = (0..n).map(|i| eig.eigenvalues[i].max(lambda)).collect();
        Ok(ShiftedGram {
            inner: Factor::Eigen {
                vectors: eig.eigenvectors,
                values,
            },
        })
    }

    /// `(G + λI)⁻¹ B`
    pub(crate) fn solve(&self, b: &Matrix) -> Matrix {
        let rhs = b.to_dmatrix();
        let x = match &self.inner {
            Factor::Chol(c) => c.solve(&rhs),
            Factor::Eigen { vectors, values } => {
                let mut t = vectors.transpose() * rhs;
                for (i, &v) in values.iter().enumerate() {
                    t.row_mut(i).iter_mut().for_each(|x| *x /= v);
                }
                vectors * t
            }
        };
        Matrix::from_dmatrix(&x)
    }

    /// `B (G + λI)⁻¹`
    pub(crate) fn solve_right(&self, b: &Matrix) -> Matrix {
        self.solve(&b.transpose()).transpose()
    }
}

fn check_input(op: &'static str, a: &Matrix) -> Result<()> {
    if a.is_empty() {
        return Err(PilaeError::arg(format!("{op}: empty matrix")));
    }
    if !a.is_finite() {
        return Err(PilaeError::numerical(op, "input contains NaN or infinity"));
    }
    Ok(())
}

fn check_lambda(op: &'static str, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(PilaeError::arg(format!(
            "{op}: regularization must be positive, got {lambda}"
        )));
    }
    Ok(())
}

/// One-sided Jacobi on the orientation with at least as many rows as columns.
/// Returns the factors (when requested) and the sorted singular values.
fn jacobi_svd(a: &Matrix, vectors: bool) -> Result<(SvdFactors, Vec<f64>)> {
    let (m, n) = a.shape();
    let wide = m < n;
    let mut w = if wide { a.transpose() } else { a.clone() };
    let (rows, k) = w.shape();
    let mut v = if vectors {
        Matrix::identity(k)
    } else {
        Matrix::zeros(0, 0)
    };
    let tol = rows as f64 * f64::EPSILON;
    // columns at roundoff level relative to the whole matrix are left alone;
    // rotating them only reshuffles noise and can stall convergence
    let negligible = (f64::EPSILON * w.frobenius_norm()).powi(2);

    let mut converged = k < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k - 1 {
            for q in p + 1..k {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (w.column(p), w.column(q));
                    let mut a2 = 0.0;
                    let mut b2 = 0.0;
                    let mut g = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        a2 += x * x;
                        b2 += y * y;
                        g += x * y;
                    }
                    (a2, b2, g)
                };
                if gamma == 0.0
                    || alpha.min(beta) <= negligible
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                if vectors {
                    rotate(&mut v, p, q, c, s);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PilaeError::numerical(
            "svd",
            format!("one-sided Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"),
        ));
    }

    let norms: Vec<f64> = (0..k)
        .map(|j| w.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    if !vectors {
        return Ok((
            SvdFactors {
                u: Matrix::zeros(0, 0),
                sigma: sigma.clone(),
                v: Matrix::zeros(0, 0),
            },
            sigma,
        ));
    }

    let mut left = Matrix::zeros(rows, k);
    let mut null_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        if s > 0.0 {
            for (o, &x) in left.column_mut(dst).iter_mut().zip(w.column(src)) {
                *o = x / s;
            }
        } else {
            null_cols.push(dst);
        }
    }
    complete_orthonormal(&mut left, &null_cols);
    let right = v.select_columns(&order);

    let (u, v) = if wide { (right, left) } else { (left, right) };
    Ok((
        SvdFactors {
            u,
            sigma: sigma.clone(),
            v,
        },
        sigma,
    ))
}

#[inline]
fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * rows);
    let cp = &mut head[p * rows..(p + 1) * rows];
    let cq = &mut tail[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Eigenvalues below the Gram noise floor `dim · ε · λ_max` carry no
/// information about the singular values and are reported as exact zeros.
fn gram_sigma(sorted_eigs: &[f64]) -> Vec<f64> {
    let dim = sorted_eigs.len() as f64;
    let top = sorted_eigs.first().copied().unwrap_or(0.0).max(0.0);
    let floor = dim * f64::EPSILON * top;
    sorted_eigs
        .iter()
        .map(|&l| if l > floor && l > 0.0 { l.sqrt() } else { 0.0 })
        .collect()
}

fn gram_svd(a: &Matrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let wide = m <= n;
    let g = if wide { a.gram_rows() } else { a.gram_cols() };
    let eig = SymmetricEigen::try_new(g.to_dmatrix(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| PilaeError::numerical("svd", "symmetric eigensolver did not converge"))?;
    let k = g.rows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigs: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let sigma = gram_sigma(&eigs);
    let small = Matrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);

    // other = Aᵀ·U·Σ⁻¹ (wide) or A·V·Σ⁻¹ (tall)
    let mut other = if wide { a.t_matmul(&small) } else { a.matmul(&small) };
    let mut null_cols = Vec::new();
    for (j, &s) in sigma.iter().enumerate() {
        if s > 0.0 {
            other.column_mut(j).iter_mut().for_each(|x| *x /= s);
        } else {
            other.column_mut(j).iter_mut().for_each(|x| *x = 0.0);
            null_cols.push(j);
        }
    }
    complete_orthonormal(&mut other, &null_cols);
    Ok(if wide {
        SvdFactors {
            u: small,
            sigma,
            v: other,
        }
    } else {
        SvdFactors {
            u: other,
            sigma,
            v: small,
        }
    })
}

/// Fills the listed (zeroed) columns with unit vectors orthogonal to every
/// other column, drawing candidates from the standard basis.
fn complete_orthonormal(q: &mut Matrix, fill: &[usize]) {
    if fill.is_empty() {
        return;
    }
    let rows = q.rows();
    let mut filled: Vec<usize> = (0..q.cols()).filter(|j| !fill.contains(j)).collect();
    let mut candidate = 0usize;
    for &target in fill {
        loop {
            assert!(candidate < rows, "cannot complete an orthonormal basis");
            let mut vec = vec![0.0; rows];
            vec[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &j in &filled {
                    let col = q.column(j);
                    let dot: f64 = col.iter().zip(&vec).map(|(a, b)| a * b).sum();
                    for (x, c) in vec.iter_mut().zip(col) {
                        *x -= dot * c;
                    }
                }
            }
            let norm = vec.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for (o, x) in q.column_mut(target).iter_mut().zip(&vec) {
                    *o = x / norm;
                }
                filled.push(target);
                break;
            }
        }
    }
}

/// Makes the largest-magnitude entry of every `u` column non-negative,
/// flipping the paired `v` column with it.
fn fix_signs(f: &mut SvdFactors) {
    for j in 0..f.u.cols() {
        let col = f.u.column(j);
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            f.u.column_mut(j).iter_mut().for_each(|x| *x = -*x);
            f.v.column_mut(j).iter_mut().for_each(|x| *x = -*x);
        }
    }
}
