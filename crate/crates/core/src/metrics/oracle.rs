//! Generalized eigenvalues of a real pencil `(Ac, Ec)` without QZ.
//!
//! `p(mu) = det(Ac - mu Ec)` is sampled by LU at the `n + 1` roots of unity
//! on a circle of radius `rho`; a DFT gives its coefficients, the companion
//! matrix gives starting roots, and Aberth iterations on the determinant
//! itself (`p'/p = -tr((Ac - mu Ec)^-1 Ec)`) polish them. Polishing uses the
//! pencil, not the coefficients, so the final accuracy is that of the
//! eigenvalues rather than of the polynomial. The numerical nullity of `Ec`
//! caps the number of finite roots.

use std::f64::consts::TAU;

use nalgebra::LU;

use super::MetricsError;
use crate::linalg::{singular_values, singular_values_complex, to_complex, CMat, Mat};
use crate::Complex64;

/// Relative cutoff for the leading coefficients of `p`.
pub const ORACLE_TOL: f64 = 1e-10;
const ABERTH_MAX_ITER: usize = 60;
const ABERTH_TOL: f64 = 4.0 * f64::EPSILON;
const ABERTH_STALL: f64 = 1e-10;
const RADIUS_ROUNDS: usize = 6;
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Finite eigenvalues, both members of each conjugate pair.
    pub finite: Vec<Complex64>,
    pub infinite: usize,
}

fn scale_of(m: &Mat) -> f64 {
    let s = m.norm() / (m.nrows() as f64).sqrt();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn det(m: CMat) -> Complex64 {
    LU::new(m).determinant()
}

fn is_singular_pencil(a: &CMat, e: &CMat) -> Result<bool, MetricsError> {
    for theta in [0.37, 2.11, 4.43] {
        let mu = Complex64::from_polar(1.3, theta);
        let sv = singular_values_complex(&(a - e * mu))?;
        let (smax, smin) = (sv[0], sv[sv.len() - 1]);
        if smin > SINGULAR_TOL * smax {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Coefficients `c_j rho^j` of `p(rho x)`, `j = 0..=n`.
fn sampled_coefficients(a: &CMat, e: &CMat, rho: f64) -> Vec<Complex64> {
    let n = a.nrows();
    let big_n = n + 1;
    let d: Vec<Complex64> = (0..big_n).map(|k| det(a - e * Complex64::from_polar(rho, TAU * k as f64 / big_n as f64))).collect();
    (0..big_n)
        .map(|j| {
            let s: Complex64 = d.iter().enumerate().map(|(k, dk)| dk * Complex64::from_polar(1.0, -TAU * ((j * k) % big_n) as f64 / big_n as f64)).sum();
            s / big_n as f64
        })
        .collect()
}

fn companion_roots(c: &[f64]) -> Vec<Complex64> {
    let d = c.len() - 1;
    if d == 0 {
        return Vec::new();
    }
    let mut m = Mat::zeros(d, d);
    for i in 1..d {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        m[(i, d - 1)] = -c[i] / c[d];
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// `p(z) / p'(z)`, or zero when `z` is numerically an exact eigenvalue.
fn newton_ratio(a: &CMat, e: &CMat, z: Complex64) -> Complex64 {
    let lu = LU::new(a - e * z);
    match lu.solve(e) {
        Some(sol) if sol.iter().all(|x| x.re.is_finite() && x.im.is_finite()) => {
            let tr = -sol.trace();
            if tr.norm() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                1.0 / tr
            }
        }
        _ => Complex64::new(0.0, 0.0),
    }
}

fn aberth(a: &CMat, e: &CMat, roots: &mut [Complex64], rho: f64) {
    let d = roots.len();
    // Separate coincident starting values; Aberth needs distinct iterates.
    for k in 0..d {
        for j in 0..k {
            if (roots[k] - roots[j]).norm() <= 1e-10 * rho {
                roots[k] += Complex64::from_polar(1e-7 * rho, 0.7 + k as f64);
            }
        }
    }
    // A root is frozen once its correction drops to rounding level; the
    // others keep iterating against its final position.
    // A correction that fails to halve while already tiny means the root sits
    // at the noise floor of the determinant evaluation.
    let mut done = vec![false; d];
    let mut last = vec![f64::INFINITY; d];
    for _ in 0..ABERTH_MAX_ITER {
        for k in 0..d {
            if done[k] {
                continue;
            }
            let zk = roots[k];
            let nk = newton_ratio(a, e, zk);
            if nk.norm() == 0.0 {
                done[k] = true;
                continue;
            }
            let sum: Complex64 = (0..d).filter(|&j| j != k).map(|j| 1.0 / (zk - roots[j])).sum();
            let w = nk / (1.0 - nk * sum);
            if !(w.re.is_finite() && w.im.is_finite()) {
                done[k] = true;
                continue;
            }
            roots[k] = zk - w;
            let scale = roots[k].norm().max(rho * f64::EPSILON);
            let step = w.norm();
            if step <= ABERTH_TOL * scale || (step <= ABERTH_STALL * scale && step > 0.5 * last[k]) {
                done[k] = true;
            }
            last[k] = step;
        }
        if done.iter().all(|&x| x) {
            break;
        }
    }
}

/// Finite eigenvalues and infinite-eigenvalue count of `(Ac, Ec)`.
pub fn generalized_eig_oracle(ac: &Mat, ec: &Mat, tol: f64) -> Result<Spectrum, MetricsError> {
    let n = ac.nrows();
    if !ac.is_square() || ac.shape() != ec.shape() {
        return Err(MetricsError::Shape(format!("pencil shapes {:?} and {:?}", ac.shape(), ec.shape())));
    }
    if !crate::linalg::is_finite(ac) || !crate::linalg::is_finite(ec) {
        return Err(MetricsError::Linalg(crate::linalg::LinalgError::NonFinite));
    }
    if n == 0 {
        return Ok(Spectrum { finite: Vec::new(), infinite: 0 });
    }
    let (sa, se) = (scale_of(ac), scale_of(ec));
    let a = to_complex(&(ac / sa));
    let e = to_complex(&(ec / se));
    if is_singular_pencil(&a, &e)? {
        return Err(MetricsError::SingularPencil);
    }
    let mut rho = 1.0;
    let mut roots: Vec<Complex64> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for _ in 0..RADIUS_ROUNDS {
        let coeffs = sampled_coefficients(&a, &e, rho);
        let cmax = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let deg = (0..=n).rev().find(|&j| coeffs[j].norm() > tol * cmax).unwrap_or(0);
        // A wider circle only re-checks the degree; roots already polished
        // against the pencil are kept when it agrees or flips back.
        if seen.contains(&deg) {
            break;
        }
        if seen.is_empty() {
            let real: Vec<f64> = coeffs[..=deg].iter().map(|c| c.re).collect();
            roots = companion_roots(&real).into_iter().map(|x| x * rho).collect();
        } else {
            // Companion roots from a wide circle lose the small eigenvalues,
            // so later rounds only seed missing roots on the circle. A lower
            // degree on a wide circle is rounding noise swamping the leading
            // terms, not evidence against polished roots; surplus roots are
            // removed by the nullity cap below.
            if deg <= roots.len() {
                break;
            }
            let missing = deg - roots.len();
            for i in 0..missing {
                roots.push(Complex64::from_polar(rho, 0.4 + TAU * i as f64 / missing as f64));
            }
        }
        seen.push(deg);
        aberth(&a, &e, &mut roots, rho);
        let reach = roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let next = (2.0 * reach).max(1.0);
        if next <= 4.0 * rho && next >= 0.25 * rho {
            break;
        }
        rho = next;
    }
    // dim N(Ec) is a lower bound on the infinite multiplicity. Near-infinite
    // roots that slip past the coefficient cutoff when the finite spectrum
    // spans many decades are dropped, largest first.
    let sv = singular_values(ec)?;
    let nullity = sv.iter().filter(|&&x| x <= tol * sv[0]).count();
    if roots.len() + nullity > n {
        roots.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
        roots.truncate(n - nullity);
    }
    let ratio = sa / se;
    let finite: Vec<Complex64> = roots.iter().map(|z| z * ratio).collect();
    Ok(Spectrum { infinite: n - finite.len(), finite })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn diagonal_pencil() {
        let s = generalized_eig_oracle(&Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]), &Mat::identity(2, 2), ORACLE_TOL).unwrap();
        let f = sorted_re(s.finite);
        assert_eq!(s.infinite, 0);
        assert!((f[0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((f[1] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn one_infinite() {
        let s = generalized_eig_oracle(&Mat::identity(2, 2), &Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), ORACLE_TOL).unwrap();
        assert_eq!(s.infinite, 1);
        assert_eq!(s.finite.len(), 1);
        assert!((s.finite[0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_pencil_detected() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let e = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(generalized_eig_oracle(&a, &e, ORACLE_TOL), Err(MetricsError::SingularPencil));
    }

    #[test]
    fn complex_pair_and_large_root() {
        // Rotation-scaling block with eigenvalues 1 +- 2i, plus 1e4.
        let a = Mat::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -2.0, 1.0, 0.0, 0.0, 0.0, 1e4]);
        let s = generalized_eig_oracle(&a, &Mat::identity(3, 3), ORACLE_TOL).unwrap();
        assert_eq!(s.finite.len(), 3);
        for want in [Complex64::new(1.0, 2.0), Complex64::new(1.0, -2.0), Complex64::new(1e4, 0.0)] {
            let best = s.finite.iter().map(|z| (z - want).norm() / want.norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-12, "{want}: {best}");
        }
    }
}
