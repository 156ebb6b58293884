//! Dense linear-algebra primitives with fixed sign conventions.
//!
//! Everything here is a pure function of its input. Where a factorization is
//! only unique up to signs or phases (QR, eigenvectors, null bases) a
//! convention is applied so repeated runs give bit-identical results.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type Vector = DVector<f64>;
pub type CVector = DVector<Complex64>;

/// Relative asymmetry accepted by [`sym_eig`] before it refuses the input.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("vectors are linearly dependent")]
    LinearlyDependent,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular")]
    Singular,
}

/// Cutoff policy for numerical rank decisions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankTol {
    /// `max(rows, cols) * eps * sigma_max`.
    #[default]
    Default,
    /// `tol * sigma_max`.
    Relative(f64),
    /// Absolute singular-value cutoff.
    Absolute(f64),
}

impl RankTol {
    pub fn cutoff(self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        match self {
            RankTol::Default => rows.max(cols) as f64 * f64::EPSILON * sigma_max,
            RankTol::Relative(t) => t * sigma_max,
            RankTol::Absolute(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankDecision {
    pub rank: usize,
    pub tolerance: f64,
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn is_finite_c(m: &CMat) -> bool {
    m.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

fn check_finite(m: &Mat) -> Result<(), LinalgError> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

fn check_finite_c(m: &CMat) -> Result<(), LinalgError> {
    if is_finite_c(m) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Householder QR with a full square `Q`.
///
/// Returns `(Q, R)` with `M = Q R`, `R` upper trapezoidal with a nonnegative
/// diagonal. Columns of `Q` beyond `min(rows, cols)` are normalized so their
/// largest-magnitude entry is positive.
pub fn qr_decompose(m: &Mat) -> Result<(Mat, Mat), LinalgError> {
    check_finite(m)?;
    Ok(householder_qr(m))
}

/// Complex QR; the diagonal of `R` is real nonnegative and trailing columns
/// of `Q` have their largest-magnitude entry real positive.
pub fn qr_decompose_complex(m: &CMat) -> Result<(CMat, CMat), LinalgError> {
    check_finite_c(m)?;
    Ok(householder_qr(m))
}

fn householder_qr<T>(m: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>)
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (rows, cols) = m.shape();
    let mut r = m.clone();
    let mut q = DMatrix::<T>::identity(rows, rows);
    let mut v = vec![T::zero(); rows];
    for k in 0..cols.min(rows.saturating_sub(1)) {
        let len = rows - k;
        let norm_x = (0..len).map(|i| r[(k + i, k)].modulus_squared()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = r[(k, k)];
        let phase = if x0.modulus() == 0.0 { T::one() } else { x0.unscale(x0.modulus()) };
        let alpha = -phase.scale(norm_x);
        for i in 0..len {
            v[i] = r[(k + i, k)];
        }
        v[0] -= alpha;
        let vnorm2: f64 = v[..len].iter().map(|x| x.modulus_squared()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- (I - 2vv*/v*v) R on the trailing block.
        for c in k..cols {
            let mut dot = T::zero();
            for i in 0..len {
                dot += v[i].conjugate() * r[(k + i, c)];
            }
            let f = dot.scale(2.0 / vnorm2);
            for i in 0..len {
                r[(k + i, c)] -= v[i] * f;
            }
        }
        for i in 1..len {
            r[(k + i, k)] = T::zero();
        }
        // Q <- Q (I - 2vv*/v*v).
        for row in 0..rows {
            let mut dot = T::zero();
            for i in 0..len {
                dot += q[(row, k + i)] * v[i];
            }
            let f = dot.scale(2.0 / vnorm2);
            for i in 0..len {
                q[(row, k + i)] -= f * v[i].conjugate();
            }
        }
    }
    let diag = rows.min(cols);
    for k in 0..diag {
        let d = r[(k, k)];
        let mag = d.modulus();
        if mag == 0.0 {
            continue;
        }
        let ph = d.unscale(mag);
        if ph == T::one() {
            continue;
        }
        let ph_c = ph.conjugate();
        for c in 0..cols {
            r[(k, c)] *= ph_c;
        }
        r[(k, k)] = T::from_real(mag);
        for row in 0..rows {
            q[(row, k)] *= ph;
        }
    }
    for k in diag..rows {
        normalize_column_phase(&mut q, k);
    }
    (q, r)
}

/// Scales column `col` by a unit phase so its largest-magnitude entry is
/// real positive (first one wins on ties).
fn normalize_column_phase<T>(m: &mut DMatrix<T>, col: usize)
where
    T: ComplexField<RealField = f64> + Copy,
{
    let mut best = 0.0f64;
    let mut phase = T::one();
    for i in 0..m.nrows() {
        let a = m[(i, col)].modulus();
        if a > best {
            best = a;
            phase = m[(i, col)].unscale(a);
        }
    }
    if phase != T::one() {
        let fix = phase.conjugate();
        for i in 0..m.nrows() {
            m[(i, col)] *= fix;
        }
    }
}

/// Full SVD `M = U diag(s) V^*` with square `U` and `V` and descending
/// singular values (`min(rows, cols)` of them).
#[derive(Debug, Clone)]
pub struct SvdOf<T: nalgebra::Scalar> {
    pub u: DMatrix<T>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<T>,
}

pub type Svd = SvdOf<f64>;
pub type CSvd = SvdOf<Complex64>;

pub fn svd(m: &Mat) -> Result<Svd, LinalgError> {
    check_finite(m)?;
    Ok(full_svd(m))
}

pub fn svd_complex(m: &CMat) -> Result<CSvd, LinalgError> {
    check_finite_c(m)?;
    Ok(full_svd(m))
}

fn full_svd<T>(m: &DMatrix<T>) -> SvdOf<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return SvdOf { u: DMatrix::identity(rows, rows), singular_values: vec![], v: DMatrix::identity(cols, cols) };
    }
    // Work on the tall orientation, reduced to k x k by QR.
    let tall = rows >= cols;
    let work = if tall { m.clone() } else { m.adjoint() };
    let (q, r) = householder_qr(&work);
    let mut g = r.rows(0, k).into_owned();
    let mut v = DMatrix::<T>::identity(k, k);
    jacobi_sweeps(&mut g, Some(&mut v));
    let norms = column_norms(&g);
    let order = descending_order(&norms);
    let singular_values: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let nonzero = singular_values.iter().filter(|&&x| x > 0.0).count();
    let small = DMatrix::from_fn(k, nonzero, |i, j| g[(i, order[j])].unscale(norms[order[j]]));
    let left = complete_orthonormal(&(q.columns(0, k) * small));
    let right = DMatrix::from_fn(k, k, |i, j| v[(i, order[j])]);
    if tall {
        SvdOf { u: left, singular_values, v: right }
    } else {
        SvdOf { u: right, singular_values, v: left }
    }
}

/// One-sided (Hestenes) Jacobi: rotates column pairs of `g` until all are
/// mutually orthogonal to working precision, accumulating the rotations
/// into `v`. Accurate for rank-deficient input, where the bidiagonal
/// iteration in nalgebra occasionally fails to converge to a valid
/// factorization.
fn jacobi_sweeps<T>(g: &mut DMatrix<T>, mut v: Option<&mut DMatrix<T>>)
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (rows, n) = g.shape();
    let floor = negligible_norm(g);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (mut a, mut b, mut gam) = (0.0, 0.0, T::zero());
                for i in 0..rows {
                    let (x, y) = (g[(i, p)], g[(i, q)]);
                    a += x.modulus_squared();
                    b += y.modulus_squared();
                    gam += x.conjugate() * y;
                }
                let gm = gam.modulus();
                if a.sqrt() <= floor || b.sqrt() <= floor || gm == 0.0 || gm <= f64::EPSILON * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate (g_p, e^{-i phi} g_q) by the real angle that zeroes
                // their inner product.
                let ph = gam.unscale(gm).conjugate();
                let zeta = (b - a) / (2.0 * gm);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let apply = |m: &mut DMatrix<T>| {
                    for i in 0..m.nrows() {
                        let x = m[(i, p)];
                        let y = m[(i, q)] * ph;
                        m[(i, p)] = x.scale(c) - y.scale(s);
                        m[(i, q)] = x.scale(s) + y.scale(c);
                    }
                };
                apply(g);
                if let Some(v) = v.as_deref_mut() {
                    apply(v);
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// Columns shorter than `eps^2 ||M||_F` count as exact zeros. Far below any
/// rank cutoff, and keeps squared norms out of the subnormal range.
fn negligible_norm<T>(g: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64> + Copy,
{
    f64::EPSILON * f64::EPSILON * g.norm()
}

fn column_norms<T>(g: &DMatrix<T>) -> Vec<f64>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let floor = negligible_norm(g);
    (0..g.ncols())
        .map(|j| {
            let x = g.column(j).norm();
            if x <= floor {
                0.0
            } else {
                x
            }
        })
        .collect()
}

/// Singular values only, descending.
pub fn singular_values(m: &Mat) -> Result<Vec<f64>, LinalgError> {
    check_finite(m)?;
    Ok(values_only(m))
}

pub fn singular_values_complex(m: &CMat) -> Result<Vec<f64>, LinalgError> {
    check_finite_c(m)?;
    Ok(values_only(m))
}

fn values_only<T>(m: &DMatrix<T>) -> Vec<f64>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return vec![];
    }
    let work = if rows >= cols { m.clone() } else { m.adjoint() };
    let (_, r) = householder_qr(&work);
    let mut g = r.rows(0, k).into_owned();
    jacobi_sweeps(&mut g, None);
    let mut s = column_norms(&g);
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn descending_order(s: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    order
}

/// Extends orthonormal columns `q` (n x k) to a unitary n x n matrix; the new
/// columns are the trailing columns of a full QR of `q`.
fn complete_orthonormal<T>(q: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (n, k) = q.shape();
    if k == n {
        return q.clone();
    }
    let (qf, _) = householder_qr(q);
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (n, k)).copy_from(q);
    out.view_mut((0, k), (n, n - k)).copy_from(&qf.view((0, k), (n, n - k)));
    out
}

pub fn numerical_rank(m: &Mat, tol: RankTol) -> Result<RankDecision, LinalgError> {
    let s = singular_values(m)?;
    Ok(rank_from(&s, m.nrows(), m.ncols(), tol))
}

pub fn numerical_rank_complex(m: &CMat, tol: RankTol) -> Result<RankDecision, LinalgError> {
    let s = singular_values_complex(m)?;
    Ok(rank_from(&s, m.nrows(), m.ncols(), tol))
}

fn rank_from(s: &[f64], rows: usize, cols: usize, tol: RankTol) -> RankDecision {
    let smax = s.first().copied().unwrap_or(0.0);
    let cutoff = tol.cutoff(rows, cols, smax);
    let rank = s.iter().filter(|&&x| x > cutoff).count();
    RankDecision { rank, tolerance: cutoff, singular_values: s.to_vec() }
}

/// Orthonormal basis of `N(M)` from the trailing right singular vectors.
///
/// Column count is `cols(M) - rank(M)`; the result may have zero columns.
/// Each column has its largest-magnitude entry positive.
pub fn orthonormal_null_basis(m: &Mat, tol: RankTol) -> Result<Mat, LinalgError> {
    check_finite(m)?;
    Ok(null_from_svd(m, tol))
}

/// Complex null basis; each column is scaled by a unit phase making its
/// largest-magnitude entry real positive.
pub fn orthonormal_null_basis_complex(m: &CMat, tol: RankTol) -> Result<CMat, LinalgError> {
    check_finite_c(m)?;
    Ok(null_from_svd(m, tol))
}

fn null_from_svd<T>(m: &DMatrix<T>, tol: RankTol) -> DMatrix<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let dec = full_svd(m);
    let rank = rank_from(&dec.singular_values, m.nrows(), m.ncols(), tol).rank;
    let cols = m.ncols();
    let mut z = dec.v.columns(rank, cols - rank).into_owned();
    for c in 0..z.ncols() {
        normalize_column_phase(&mut z, c);
    }
    z
}

/// Null basis of a matrix assumed to have full row rank: the trailing
/// `cols - rows` columns of a full QR of `M^*`. Cheaper than the SVD route
/// and exact whenever the assumption holds; callers check the assumption
/// separately with [`singular_values`].
pub fn complement_null_basis(m: &Mat) -> Result<Mat, LinalgError> {
    check_finite(m)?;
    Ok(complement_of_rows(m))
}

pub fn complement_null_basis_complex(m: &CMat) -> Result<CMat, LinalgError> {
    check_finite_c(m)?;
    Ok(complement_of_rows(m))
}

fn complement_of_rows<T>(m: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (rows, cols) = m.shape();
    if rows >= cols {
        return DMatrix::zeros(cols, 0);
    }
    let (q, _) = householder_qr(&m.adjoint());
    q.columns(rows, cols - rows).into_owned()
}

/// Symmetric eigendecomposition with descending eigenvalues.
///
/// Each eigenvector's first entry above `1e-10` in magnitude is made
/// positive. Input asymmetry beyond [`SYMMETRY_TOL`] (relative) is an error.
pub fn sym_eig(h: &Mat) -> Result<(Vec<f64>, Mat), LinalgError> {
    check_finite(h)?;
    if !h.is_square() {
        return Err(LinalgError::Dimension(format!("sym_eig needs a square matrix, got {:?}", h.shape())));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok((vec![], Mat::zeros(0, 0)));
    }
    let scale = h.norm();
    let asym = (h - h.transpose()).norm();
    if scale > 0.0 && asym > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric(asym / scale));
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let order = descending_order(eig.eigenvalues.as_slice());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Mat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    for c in 0..n {
        if let Some(first) = (0..n).map(|i| vecs[(i, c)]).find(|x| x.abs() > 1e-10) {
            if first < 0.0 {
                for i in 0..n {
                    vecs[(i, c)] = -vecs[(i, c)];
                }
            }
        }
    }
    Ok((values, vecs))
}

/// Plane rotation that makes `x~ = c x - s y` and `y~ = s x + c y`
/// orthogonal, taking the smallest angle that does so.
pub fn jacobi_orthogonalize(x: &Vector, y: &Vector) -> Result<(f64, f64), LinalgError> {
    if x.len() != y.len() {
        return Err(LinalgError::Dimension(format!("lengths {} and {}", x.len(), y.len())));
    }
    let xx = x.norm_squared();
    let yy = y.norm_squared();
    let xy = x.dot(y);
    let cross = xx * yy - xy * xy;
    if xx == 0.0 || yy == 0.0 || cross <= 1e-20 * xx * yy {
        return Err(LinalgError::LinearlyDependent);
    }
    if xy == 0.0 {
        return Ok((1.0, 0.0));
    }
    // cs(|x|^2 - |y|^2) + (c^2 - s^2) x'y = 0  <=>  tan 2t = 2x'y / (|y|^2 - |x|^2)
    let num = 2.0 * xy;
    let den = yy - xx;
    let theta = if den == 0.0 { num.signum() * std::f64::consts::FRAC_PI_4 } else { 0.5 * (num / den).atan() };
    Ok((theta.cos(), theta.sin()))
}

/// Frobenius condition number `||M||_F ||M^-1||_F` via singular values.
pub fn kappa_fro(m: &Mat) -> Result<f64, LinalgError> {
    kappa_from_singular(&singular_values(m)?)
}

pub fn kappa_fro_complex(m: &CMat) -> Result<f64, LinalgError> {
    kappa_from_singular(&singular_values_complex(m)?)
}

fn kappa_from_singular(s: &[f64]) -> Result<f64, LinalgError> {
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = s.last().copied().unwrap_or(0.0);
    if smin <= smax * f64::EPSILON || smin == 0.0 {
        return Err(LinalgError::Singular);
    }
    let fro: f64 = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let inv: f64 = s.iter().map(|x| 1.0 / (x * x)).sum::<f64>().sqrt();
    Ok(fro * inv)
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMat) -> Mat {
    m.map(|x| x.re)
}

pub fn imag_part(m: &CMat) -> Mat {
    m.map(|x| x.im)
}

/// Stacks matrices with equal column counts vertically.
pub fn vstack<T: ComplexField<RealField = f64> + Copy>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r0, 0), b.shape()).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

/// Stacks matrices with equal row counts horizontally.
pub fn hstack<T: ComplexField<RealField = f64> + Copy>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c0), b.shape()).copy_from(*b);
        c0 += b.ncols();
    }
    out
}
