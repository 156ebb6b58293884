//! Robustness and accuracy metrics, and an oracle-based verifier that only
//! looks at the closed-loop pencil `(A + BF, E + BG)`.

mod matching;
mod oracle;

use serde::Serialize;
use thiserror::Error;

pub use matching::{hungarian, precs_metric, Precs, PRECS_FLOOR};
pub use oracle::{generalized_eig_oracle, Spectrum, ORACLE_TOL};

use crate::assign::{BlockDescriptor, BlockKind, Solution};
use crate::linalg::{hstack, kappa_fro, kappa_fro_complex, numerical_rank, orthonormal_null_basis, svd_complex, to_complex, CMat, LinalgError, Mat, RankTol};
use crate::problem::{PolePair, Problem, DEFAULT_RANK_TOL};
use crate::Complex64;

/// Poles closer than this (relative) count as repeated for the
/// eigenvector-matrix condition number.
pub const REPEATED_GAP: f64 = 1e-8;
/// `precs` at or below this passes verification.
pub const PRECS_PASS: f64 = -6.0;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("singular pencil: det(Ac - lambda Ec) vanishes identically")]
    SingularPencil,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("blocks inconsistent with S, T: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_blocks(n: usize, blocks: &[BlockDescriptor]) -> Result<(), MetricsError> {
    let mut at = 0;
    for b in blocks {
        if b.start != at || !(b.size == 1 || b.size == 2) {
            return Err(MetricsError::Inconsistent(format!("block at {} of size {} (expected start {at})", b.start, b.size)));
        }
        at += b.size;
    }
    if at != n {
        return Err(MetricsError::Inconsistent(format!("blocks cover {at} of {n} columns")));
    }
    Ok(())
}

/// Off-block-diagonal mass of `S` and `T` plus `tau^2 (delta - 1/delta)^2`
/// for every 2x2 block.
pub fn departure_measure(s: &Mat, t: &Mat, blocks: &[BlockDescriptor]) -> Result<f64, MetricsError> {
    let n = s.nrows();
    if s.shape() != (n, n) || t.shape() != (n, n) {
        return Err(MetricsError::Shape(format!("S {:?}, T {:?}", s.shape(), t.shape())));
    }
    check_blocks(n, blocks)?;
    let (mut so, mut to) = (s.clone(), t.clone());
    let mut skew = 0.0;
    for b in blocks {
        so.view_mut((b.start, b.start), (b.size, b.size)).fill(0.0);
        to.view_mut((b.start, b.start), (b.size, b.size)).fill(0.0);
        if b.size == 2 {
            skew += b.tau * b.tau * (b.delta - 1.0 / b.delta).powi(2);
        }
    }
    Ok(so.norm_squared() + to.norm_squared() + skew)
}

/// Roots of `det(S_jj - lambda T_jj)` for a 2x2 block as a canonical pair.
fn block_pair(sb: &Mat, tb: &Mat, kind: BlockKind) -> PolePair {
    // The identity side leaves the eigenvalues of the other block, mu, with
    // lambda = 1/mu (alpha-dominant) or lambda = mu (beta-dominant).
    let other = if kind == BlockKind::ComplexBetaDominant { sb } else { tb };
    let tr = other.trace() / 2.0;
    let det = other.determinant();
    let mu = Complex64::new(tr, (det - tr * tr).max(0.0).sqrt());
    let lambda = if kind == BlockKind::ComplexBetaDominant { mu } else { 1.0 / mu };
    PolePair::finite(lambda)
}

/// One pole per block; a 2x2 block yields the canonical representative of
/// its conjugate pair.
pub fn extract_poles_from_schur(s: &Mat, t: &Mat, blocks: &[BlockDescriptor]) -> Result<Vec<PolePair>, MetricsError> {
    check_blocks(s.nrows(), blocks)?;
    blocks
        .iter()
        .map(|b| {
            let i = b.start;
            if b.size == 1 {
                PolePair::new(Complex64::new(s[(i, i)], 0.0), Complex64::new(t[(i, i)], 0.0)).map_err(|e| MetricsError::Inconsistent(e.to_string()))
            } else {
                let sb = s.view((i, i), (2, 2)).into_owned();
                let tb = t.view((i, i), (2, 2)).into_owned();
                Ok(block_pair(&sb, &tb, b.kind))
            }
        })
        .collect()
}

/// Finite values of a pole list with conjugates expanded.
pub fn expand_values(poles: &[PolePair]) -> (Vec<Complex64>, usize) {
    let mut out = Vec::new();
    let mut inf = 0;
    for p in poles {
        match p.value() {
            None => inf += 1,
            Some(v) => {
                out.push(v);
                if p.multiplicity() == 2 {
                    out.push(v.conj());
                }
            }
        }
    }
    (out, inf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexCheck {
    pub regular: bool,
    pub index_le_1: bool,
    pub finite_count: usize,
    pub matches_expected: bool,
}

/// Regularity from the oracle; index at most one iff the finite count equals
/// `rank(Ec)` and `[Ec, Ac N_inf]` has full row rank.
pub fn index_and_regularity_check(ac: &Mat, ec: &Mat, expected_r: usize, tol: f64) -> IndexCheck {
    let spec = generalized_eig_oracle(ac, ec, ORACLE_TOL);
    index_check_with(ac, ec, spec.as_ref().ok(), expected_r, tol)
}

fn index_check_with(ac: &Mat, ec: &Mat, spec: Option<&Spectrum>, expected_r: usize, tol: f64) -> IndexCheck {
    let Some(spec) = spec else {
        return IndexCheck { regular: false, index_le_1: false, finite_count: 0, matches_expected: false };
    };
    let n = ac.nrows();
    let rt = RankTol::Relative(tol);
    let finite_count = spec.finite.len();
    let rank_e = numerical_rank(ec, rt).map(|d| d.rank).unwrap_or(0);
    let n_inf = orthonormal_null_basis(ec, rt).unwrap_or_else(|_| Mat::zeros(n, 0));
    let stacked = hstack(&[ec, &(ac * &n_inf)]);
    let full = numerical_rank(&stacked, rt).map(|d| d.rank == n).unwrap_or(false);
    IndexCheck { regular: true, index_le_1: finite_count == rank_e && full, finite_count, matches_expected: finite_count == expected_r }
}

/// Eigenvector matrix of a regular index-1 pencil with simple finite
/// eigenvalues: smallest right singular vectors of `Ac - lambda Ec`, then a
/// basis of `N(Ec)` for the infinite ones. `None` when unavailable.
/// Right null vector of a numerically singular `m` by two steps of inverse
/// iteration, falling back to the SVD when the LU hits an exact zero pivot.
fn null_vector(m: &CMat) -> Option<nalgebra::DVector<Complex64>> {
    let n = m.nrows();
    let lu = nalgebra::LU::new(m.clone());
    let mut x = nalgebra::DVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.1 * i as f64, 0.0));
    for _ in 0..2 {
        match lu.solve(&x) {
            Some(y) if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && y.norm() > 0.0 => x = y.unscale(y.norm()),
            _ => {
                let dec = svd_complex(m).ok()?;
                return Some(dec.v.column(n - 1).into_owned());
            }
        }
    }
    Some(x)
}

pub fn eigenvector_matrix(ac: &Mat, ec: &Mat, spec: &Spectrum) -> Option<CMat> {
    let n = ac.nrows();
    let f = &spec.finite;
    for i in 0..f.len() {
        for j in 0..i {
            if (f[i] - f[j]).norm() <= REPEATED_GAP * f[i].norm().max(f[j].norm()).max(1.0) {
                return None;
            }
        }
    }
    let n_inf = orthonormal_null_basis(ec, RankTol::Relative(DEFAULT_RANK_TOL)).ok()?;
    if n_inf.ncols() + f.len() != n {
        return None;
    }
    let (ca, ce) = (to_complex(ac), to_complex(ec));
    let mut v = CMat::zeros(n, n);
    for (c, &lambda) in f.iter().enumerate() {
        v.set_column(c, &null_vector(&(&ca - &ce * lambda))?);
    }
    v.columns_mut(f.len(), n_inf.ncols()).copy_from(&to_complex(&n_inf));
    Some(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    #[serde(rename = "normF")]
    pub norm_f: f64,
    #[serde(rename = "normG")]
    pub norm_g: f64,
    #[serde(rename = "kappaXGF")]
    pub kappa_xgf: Option<f64>,
    #[serde(rename = "kappaX")]
    pub kappa_eigvec: Option<f64>,
}

/// Norms of the gains and the two condition numbers. A singular `X_GF` is
/// an error since the construction guarantees invertibility.
pub fn condition_and_norms(f: &Mat, g: &Mat, x_gf: Option<&Mat>, ac: &Mat, ec: &Mat, spec: Option<&Spectrum>) -> Result<Norms, MetricsError> {
    let kappa_xgf = x_gf.map(kappa_fro).transpose()?;
    let kappa_eigvec = spec.and_then(|s| eigenvector_matrix(ac, ec, s)).and_then(|v| kappa_fro_complex(&v).ok());
    Ok(Norms { norm_f: f.norm(), norm_g: g.norm(), kappa_xgf, kappa_eigvec })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub precs: f64,
    #[serde(rename = "deltaF2")]
    pub delta_f2: Option<f64>,
    #[serde(flatten)]
    pub norms: Norms,
    /// `||(A+BF)P - XS||_F / (||A||_F + ||E||_F + ||X||_F)`.
    #[serde(rename = "residualA")]
    pub residual_a: Option<f64>,
    #[serde(rename = "residualE")]
    pub residual_e: Option<f64>,
    pub infinite_count: usize,
    pub finite_count: usize,
    pub regular: bool,
    pub index_ok: bool,
    pub mismatch: bool,
    pub verdict: bool,
    pub failures: Vec<String>,
}

/// Verifies gains alone: closed-loop spectrum, regularity and index.
pub fn verify_feedback(p: &Problem, f: &Mat, g: &Mat, tol: f64) -> Report {
    let (n, m) = (p.n(), p.m());
    let mut failures = Vec::new();
    if f.shape() != (m, n) || g.shape() != (m, n) {
        failures.push(format!("gain shapes F {:?}, G {:?}, expected ({m}, {n})", f.shape(), g.shape()));
        return empty_report(failures);
    }
    if !crate::linalg::is_finite(f) || !crate::linalg::is_finite(g) {
        failures.push("non-finite gain entries".into());
        return empty_report(failures);
    }
    let ac = &p.a + &p.b * f;
    let ec = &p.e + &p.b * g;
    let spec = generalized_eig_oracle(&ac, &ec, ORACLE_TOL);
    if let Err(err) = &spec {
        failures.push(err.to_string());
    }
    let spec = spec.ok();
    let idx = index_check_with(&ac, &ec, spec.as_ref(), p.r(), tol.max(DEFAULT_RANK_TOL));
    let pr = match &spec {
        Some(s) => precs_metric(&p.finite_values(), &s.finite),
        None => Precs { value: f64::INFINITY, mismatch: true },
    };
    if !idx.index_le_1 && idx.regular {
        failures.push("closed-loop index exceeds 1".into());
    }
    if idx.regular && !idx.matches_expected {
        failures.push(format!("closed loop has {} finite poles, requested {}", idx.finite_count, p.r()));
    }
    if !(pr.value <= PRECS_PASS) {
        failures.push(format!("pole accuracy precs = {:.3} above {PRECS_PASS}", pr.value));
    }
    let norms = match condition_and_norms(f, g, None, &ac, &ec, spec.as_ref()) {
        Ok(x) => x,
        Err(e) => {
            failures.push(e.to_string());
            Norms { norm_f: f.norm(), norm_g: g.norm(), kappa_xgf: None, kappa_eigvec: None }
        }
    };
    let infinite_count = spec.as_ref().map_or(0, |s| s.infinite);
    Report {
        precs: pr.value,
        delta_f2: None,
        norms,
        residual_a: None,
        residual_e: None,
        infinite_count,
        finite_count: idx.finite_count,
        regular: idx.regular,
        index_ok: idx.index_le_1,
        mismatch: pr.mismatch,
        verdict: failures.is_empty(),
        failures,
    }
}

fn empty_report(failures: Vec<String>) -> Report {
    Report {
        precs: f64::INFINITY,
        delta_f2: None,
        norms: Norms { norm_f: f64::NAN, norm_g: f64::NAN, kappa_xgf: None, kappa_eigvec: None },
        residual_a: None,
        residual_e: None,
        infinite_count: 0,
        finite_count: 0,
        regular: false,
        index_ok: false,
        mismatch: true,
        verdict: false,
        failures,
    }
}

/// Full report for a pipeline solution; `tol` bounds the sum of the two
/// relative Schur residuals.
pub fn verify_solution(p: &Problem, sol: &Solution, tol: f64) -> Report {
    let mut rep = verify_feedback(p, &sol.f, &sol.g, tol);
    if rep.norms.norm_f.is_nan() {
        return rep;
    }
    let scale = p.a.norm() + p.e.norm() + sol.x.norm();
    let ra = ((&p.a + &p.b * &sol.f) * &sol.p - &sol.x * &sol.s).norm() / scale;
    let re = ((&p.e + &p.b * &sol.g) * &sol.p - &sol.x * &sol.t).norm() / scale;
    rep.residual_a = Some(ra);
    rep.residual_e = Some(re);
    if !(ra + re <= tol) {
        rep.failures.push(format!("Schur residual {:.3e} above {tol:.1e}", ra + re));
    }
    match departure_measure(&sol.s, &sol.t, &sol.blocks) {
        Ok(d) => rep.delta_f2 = Some(d),
        Err(e) => rep.failures.push(e.to_string()),
    }
    match kappa_fro(&sol.x) {
        Ok(k) => rep.norms.kappa_xgf = Some(k),
        Err(_) => rep.failures.push("X_GF is singular".into()),
    }
    rep.verdict = rep.failures.is_empty();
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blk(start: usize, kind: BlockKind) -> BlockDescriptor {
        BlockDescriptor::scalar(start, kind)
    }

    #[test]
    fn departure_examples() {
        let two = [blk(0, BlockKind::Real), blk(1, BlockKind::Real)];
        assert_eq!(departure_measure(&Mat::identity(2, 2), &Mat::from_diagonal_element(2, 2, 0.5), &two).unwrap(), 0.0);
        let s = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let t = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.5]);
        assert_eq!(departure_measure(&s, &t, &two).unwrap(), 2.0);
        let b = BlockDescriptor { start: 0, size: 2, kind: BlockKind::ComplexAlphaDominant, delta: 2.0, sigma: 0.1, tau: 0.5 };
        let t2 = crate::assign::d_delta(0.1, 0.5, 2.0);
        assert!((departure_measure(&Mat::identity(2, 2), &t2, &[b]).unwrap() - 0.5625).abs() < 1e-15);
        assert!(departure_measure(&s, &t, &[blk(0, BlockKind::Real)]).is_err());
    }

    #[test]
    fn schur_pole_examples() {
        let one = extract_poles_from_schur(&Mat::from_element(1, 1, 0.6), &Mat::from_element(1, 1, 0.8), &[blk(0, BlockKind::Real)]).unwrap();
        assert!((one[0].value().unwrap().re - 0.75).abs() < 1e-15);
        let inf = extract_poles_from_schur(&Mat::from_element(1, 1, 1.0), &Mat::zeros(1, 1), &[blk(0, BlockKind::Infinite)]).unwrap();
        assert!(inf[0].value().is_none());
        let b = BlockDescriptor { start: 0, size: 2, kind: BlockKind::ComplexAlphaDominant, delta: 1.5, sigma: 0.5, tau: 0.5 };
        let pair = extract_poles_from_schur(&Mat::identity(2, 2), &crate::assign::d_delta(0.5, 0.5, 1.5), &[b]).unwrap();
        let (vals, _) = expand_values(&pair);
        let want = [Complex64::new(1.0, 1.0), Complex64::new(1.0, -1.0)];
        assert!(precs_metric(&want, &vals).value < -14.0);
    }

    #[test]
    fn index_examples() {
        let ok = index_and_regularity_check(&Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]), &Mat::identity(2, 2), 2, 1e-10);
        assert!(ok.regular && ok.index_le_1 && ok.finite_count == 2 && ok.matches_expected);
        let nil = index_and_regularity_check(&Mat::identity(2, 2), &Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), 0, 1e-10);
        assert!(nil.regular && !nil.index_le_1);
    }

    #[test]
    fn kappa_examples() {
        assert!((kappa_fro(&Mat::identity(3, 3)).unwrap() - 3.0).abs() < 1e-14);
        let c = (0.3f64).cos();
        let s = (0.3f64).sin();
        let q = Mat::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let x = Mat::from_diagonal(&crate::linalg::Vector::from_vec(vec![2.0, 1.0, 1.0])) * q;
        assert!((kappa_fro(&x).unwrap() - 13.5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn repeated_poles_have_no_eigenvector_kappa() {
        let spec = Spectrum { finite: vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)], infinite: 0 };
        assert!(eigenvector_matrix(&Mat::identity(2, 2), &Mat::identity(2, 2), &spec).is_none());
    }
}
