use super::{
    block_kind, check_full_row_rank, d_delta, minimize_quadratic, AssignErrorKind, AssignState, BlockDescriptor, ComplexBranch, ComplexTrace, Rank1Trace, Rank2Trace, StepTrace,
    Strategy, Workspace, RANK_ONE_RATIO, Z1_DEGENERATE_TOL,
};
use crate::linalg::{
    complement_null_basis_complex, hstack, imag_part, jacobi_orthogonalize, real_part, singular_values_complex, svd_complex, sym_eig, to_complex, vstack, CMat, CVector, Mat,
    Vector,
};
use crate::problem::{NormalizedPole, PoleCase};
use crate::Complex64;

const ISOTROPY_TOL: f64 = 1e-14;

/// Unscaled direction `z = p~1 + i p~2` and the matching `[v_S; v_T]` part
/// `a`, before the final normalization.
#[derive(Debug, Clone)]
pub struct ComplexChoice {
    pub z: CVector,
    pub a: CVector,
    pub nu: Vec<f64>,
    pub branch: ComplexBranch,
    pub rank1: Option<Rank1Trace>,
    pub rank2: Option<Rank2Trace>,
}

/// Normalized column pair: `p1 ⟂ p2` unit, `v_l = v~_l / varsigma_l`,
/// `delta = varsigma_1 / varsigma_2`.
#[derive(Debug, Clone)]
pub struct ColumnPair {
    pub p: [Vector; 2],
    pub v: [Vector; 2],
    pub delta: f64,
}

fn rotate(x: &CVector, c: f64, s: f64) -> CVector {
    x * Complex64::new(c, s)
}

fn re(x: &CVector) -> Vector {
    x.map(|v| v.re)
}

fn im(x: &CVector) -> Vector {
    x.map(|v| v.im)
}

/// `||Re a||^2 / ||Re z||^2 + ||Im a||^2 / ||Im z||^2 + tau^2 (delta - 1/delta)^2`
/// for an already rotated pair (`Re z ⟂ Im z`).
fn pair_objective(z: &CVector, a: &CVector, tau: f64) -> f64 {
    let (s1, s2) = (re(z).norm(), im(z).norm());
    let d = s1 / s2;
    re(a).norm_squared() / (s1 * s1) + im(a).norm_squared() / (s2 * s2) + tau * tau * (d - 1.0 / d).powi(2)
}

/// Solves the column-pair subproblem given the null-space basis split as
/// `Z1` (state rows) and `Z34` (`v_S`, `v_T` rows). `Z = [Z1; Z34]` must have
/// orthonormal columns.
pub fn complex_subproblem(z1: &CMat, z34: &CMat, tau: f64) -> Result<ComplexChoice, AssignErrorKind> {
    let dec = svd_complex(z1)?;
    let nu = dec.singular_values.clone();
    let nu1 = nu.first().copied().unwrap_or(0.0);
    if nu1 <= Z1_DEGENERATE_TOL {
        return Err(AssignErrorKind::Z1Degenerate { top: nu1 });
    }
    let cols = z1.ncols();
    let wall = z34 * &dec.v;
    let nu2 = nu.get(1).copied().unwrap_or(0.0);
    if cols == 1 || nu2 <= RANK_ONE_RATIO * nu1 {
        let (z, a, tr) = rank_one(z1, &dec.u, &dec.v, &wall, nu1)?;
        Ok(ComplexChoice { z, a, nu, branch: ComplexBranch::RankOne, rank1: Some(tr), rank2: None })
    } else {
        let (z, a, tr) = rank_two(z1, &dec.u, &dec.v, &wall, nu1, nu2, tau)?;
        Ok(ComplexChoice { z, a, nu, branch: ComplexBranch::RankTwo, rank1: None, rank2: Some(tr) })
    }
}

fn rank_one(z1: &CMat, u: &CMat, v: &CMat, wall: &CMat, nu1: f64) -> Result<(CVector, CVector, Rank1Trace), AssignErrorKind> {
    let psi = u.column(0).into_owned();
    let (c, s) = jacobi_orthogonalize(&re(&psi), &im(&psi)).map_err(|_| AssignErrorKind::DependentPsi)?;
    let pt = rotate(&psi, c, s);
    let (vs1, vs2) = (re(&pt).norm(), im(&pt).norm());
    let q = wall.ncols() - 1;
    let w = wall.column(0).into_owned();
    let wr = wall.columns(1, q).into_owned();
    let (wre, wim) = (real_part(&wr), imag_part(&wr));
    let k1 = hstack(&[&wre, &(-&wim)]);
    let k2 = hstack(&[&wim, &wre]);
    let l1 = &k1 * c - &k2 * s;
    let l2 = &k1 * s + &k2 * c;
    let a1 = (re(&w) * c - im(&w) * s) / nu1;
    let a2 = (re(&w) * s + im(&w) * c) / nu1;
    let (i1, i2) = (1.0 / (vs1 * vs1), 1.0 / (vs2 * vs2));
    let hess = l1.transpose() * &l1 * i1 + l2.transpose() * &l2 * i2;
    let h = (l1.transpose() * &a1 * i1 + l2.transpose() * &a2 * i2) * 2.0;
    let zeta = a1.norm_squared() * i1 + a2.norm_squared() * i2;
    let hv: Vec<f64> = h.iter().copied().collect();
    let f = minimize_quadratic(&hess, &hv)?;

    let mut b = CVector::zeros(wall.ncols());
    b[0] = Complex64::new(1.0 / nu1, 0.0);
    for i in 0..q {
        b[i + 1] = Complex64::new(f[i], f[q + i]);
    }
    let z = rotate(&(z1 * (v * &b)), c, s);
    let a = rotate(&(wall * &b), c, s);
    let tr = Rank1Trace { hessian: hess, h: hv, f, zeta, wall: wall.clone(), nu1, c, s, varsigma: (vs1, vs2) };
    Ok((z, a, tr))
}

/// Coefficients `(c1, c2)`, `|c1|^2 + |c2|^2 = 1`, with
/// `(c1 psi1 + c2 psi2)' (c1 psi1 + c2 psi2) = 0` (bilinear, no conjugate)
/// and `|c1|` as large as possible.
fn isotropic_coeffs(psi1: &CVector, psi2: &CVector) -> (Complex64, Complex64) {
    let g11 = psi1.transpose() * psi1;
    let g12 = psi1.transpose() * psi2;
    let g22 = psi2.transpose() * psi2;
    let (g11, g12, g22) = (g11[0], g12[0], g22[0]);
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let t = if g11.norm() <= ISOTROPY_TOL {
        zero
    } else if g22.norm() <= ISOTROPY_TOL {
        if g12.norm() <= ISOTROPY_TOL {
            return (zero, one);
        }
        -g11 / (g12 * 2.0)
    } else {
        let disc = (g12 * g12 - g11 * g22).sqrt();
        let qp = -(g12 + disc);
        let qm = -(g12 - disc);
        let q = if qp.norm() >= qm.norm() { qp } else { qm };
        let (r1, r2) = (q / g22, g11 / q);
        if r1.norm() <= r2.norm() {
            r1
        } else {
            r2
        }
    };
    let c1 = 1.0 / (1.0 + t.norm_sqr()).sqrt();
    (Complex64::new(c1, 0.0), t * c1)
}

#[allow(clippy::too_many_arguments)]
fn rank_two(z1: &CMat, u: &CMat, v: &CMat, wall: &CMat, nu1: f64, nu2: f64, tau: f64) -> Result<(CVector, CVector, Rank2Trace), AssignErrorKind> {
    let psi1 = u.column(0).into_owned();
    let psi2 = u.column(1).into_owned();
    let w1 = wall.column(0) / Complex64::new(nu1, 0.0);

    // Strategy 1: p~ from psi1 alone.
    let s1 = jacobi_orthogonalize(&re(&psi1), &im(&psi1)).ok().map(|(c, s)| {
        let z = rotate(&psi1, c, s);
        let a = rotate(&w1, c, s);
        let rho = pair_objective(&z, &a, tau);
        (z, a, rho)
    });
    let rho1 = s1.as_ref().map_or(f64::INFINITY, |x| x.2);

    // Strategy 2: isotropic combination of psi1, psi2, so delta = 1.
    let (c1, c2) = isotropic_coeffs(&psi1, &psi2);
    let g = |x: f64| (1.0 - x * x) / (x * x);
    let bound2 = 2.0 * g(nu2);
    let rho2 = bound2 - 2.0 * c1.norm_sqr() * (g(nu2) - g(nu1));
    let mut b = CVector::zeros(wall.ncols());
    b[0] = c1 / nu1;
    b[1] = c2 / nu2;
    let z2 = z1 * (v * &b);
    let a2 = wall * &b;

    let kr = Mat::from_columns(&[re(&psi1), re(&psi2)]);
    let ki = Mat::from_columns(&[im(&psi1), im(&psi2)]);
    let d = kr.transpose() * &kr - ki.transpose() * &ki;
    let o = -(kr.transpose() * &ki + ki.transpose() * &kr);
    let ham = vstack(&[&hstack(&[&d, &o]), &hstack(&[&o, &(-&d)])]);
    let (phi, _) = sym_eig(&ham)?;
    let y = Vector::from_vec(vec![c1.re, c2.re, c1.im, c2.im]);
    let form = (y.transpose() * &ham * &y)[0];

    let chosen = if rho2 <= rho1 { Strategy::Two } else { Strategy::One };
    let tr = Rank2Trace { rho1, rho2, bound2, chosen, nu: (nu1, nu2), phi: (phi[0], phi[1]), hamiltonian_form: form, coeffs: (c1, c2) };
    match (chosen, s1) {
        (Strategy::One, Some((z, a, _))) => Ok((z, a, tr)),
        _ => Ok((z2, a2, tr)),
    }
}

/// Final Jacobi rotation making `Re z ⟂ Im z`, then column scaling.
pub fn finalize_pair(z: &CVector, a: &CVector) -> Result<ColumnPair, AssignErrorKind> {
    let (c, s) = jacobi_orthogonalize(&re(z), &im(z)).map_err(|_| AssignErrorKind::DependentPsi)?;
    let z = rotate(z, c, s);
    let a = rotate(a, c, s);
    let (s1, s2) = (re(&z).norm(), im(&z).norm());
    Ok(ColumnPair { p: [re(&z) / s1, im(&z) / s2], v: [re(&a) / s1, im(&a) / s2], delta: s1 / s2 })
}

/// Complex analogue of the real-pole constraint with `gamma = sigma + i tau`.
fn complex_constraint(ws: &Workspace, st: &AssignState, gamma: Complex64, alpha_dominant: bool) -> CMat {
    let (n, k, j) = (ws.n(), ws.k(), st.j());
    let xi = to_complex(&st.xi());
    let (q2a, q2e) = (to_complex(&ws.q2a), to_complex(&ws.q2e));
    let mut m = CMat::zeros(k + j, n + 2 * j);
    if alpha_dominant {
        m.view_mut((0, 0), (k, n)).copy_from(&(&q2e - &q2a * gamma));
        m.view_mut((0, n), (k, j)).copy_from(&(&xi * gamma));
        m.view_mut((0, n + j), (k, j)).copy_from(&(-&xi));
    } else {
        m.view_mut((0, 0), (k, n)).copy_from(&(&q2a - &q2e * gamma));
        m.view_mut((0, n), (k, j)).copy_from(&(-&xi));
        m.view_mut((0, n + j), (k, j)).copy_from(&(&xi * gamma));
    }
    m.view_mut((k, 0), (j, n)).copy_from(&to_complex(&st.p().transpose()));
    m
}

/// Appends a 2x2 block for a complex conjugate pair.
pub fn assign_complex_pair(ws: &Workspace, st: &mut AssignState, pole: &NormalizedPole) -> Result<StepTrace, AssignErrorKind> {
    let (n, j) = (ws.n(), st.j());
    let alpha_dominant = pole.case == PoleCase::ComplexAlphaDominant;
    let gamma = Complex64::new(pole.sigma, pole.tau);
    let m = complex_constraint(ws, st, gamma, alpha_dominant);
    let ratio = check_full_row_rank(&singular_values_complex(&m)?, m.nrows(), m.ncols())?;
    let z = complement_null_basis_complex(&m)?;
    let z1 = z.rows(0, n).into_owned();
    let z34 = z.rows(n, 2 * j).into_owned();
    let choice = complex_subproblem(&z1, &z34, pole.tau)?;
    let pair = finalize_pair(&choice.z, &choice.a)?;
    let delta = pair.delta;

    let p = Mat::from_columns(&pair.p);
    let v = Mat::from_columns(&pair.v);
    let vs = v.rows(0, j).into_owned();
    let vt = v.rows(j, j).into_owned();
    let xi = st.xi();
    let new_xi = if alpha_dominant { &ws.q2a * &p - &xi * &vs } else { &ws.q2e * &p - &xi * &vt };
    let dd = d_delta(pole.sigma, pole.tau, delta);
    let eye = Mat::identity(2, 2);
    let (ds, dt) = if alpha_dominant { (&eye, &dd) } else { (&dd, &eye) };
    let block = BlockDescriptor { start: j, size: 2, kind: block_kind(pole.case), delta, sigma: pole.sigma, tau: pole.tau };
    st.push(&p, &vs, &vt, ds, dt, &new_xi, block);
    let objective = v.norm_squared() + pole.tau * pole.tau * (delta - 1.0 / delta).powi(2);
    Ok(StepTrace::Complex(ComplexTrace { nu: choice.nu, branch: choice.branch, rank1: choice.rank1, rank2: choice.rank2, row_rank_ratio: ratio, delta, objective }))
}
