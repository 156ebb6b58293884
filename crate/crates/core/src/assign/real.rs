use super::{block_kind, check_full_row_rank, AssignErrorKind, AssignState, BlockDescriptor, BlockKind, StepTrace, Workspace, Z1_DEGENERATE_TOL};
use crate::linalg::{complement_null_basis, singular_values, sym_eig, Mat};
use crate::problem::{NormalizedPole, PoleCase};

/// Constraint matrix for a real (or infinite) pole `(eps1, eps2)`.
///
/// Unknowns are `[p; v_S; v_T]`. With `rho = eps2/eps1` when
/// `|eps1| >= |eps2|`:
/// `[Q2'E - rho Q2'A, rho Xi, -Xi; P', 0, 0]`, otherwise with
/// `rho = eps1/eps2`: `[Q2'A - rho Q2'E, -Xi, rho Xi; P', 0, 0]`.
pub(crate) fn real_constraint(ws: &Workspace, st: &AssignState, eps1: f64, eps2: f64) -> Mat {
    let (n, k, j) = (ws.n(), ws.k(), st.j());
    let xi = st.xi();
    let mut m = Mat::zeros(k + j, n + 2 * j);
    if eps1.abs() >= eps2.abs() {
        let rho = eps2 / eps1;
        m.view_mut((0, 0), (k, n)).copy_from(&(&ws.q2e - &ws.q2a * rho));
        m.view_mut((0, n), (k, j)).copy_from(&(&xi * rho));
        m.view_mut((0, n + j), (k, j)).copy_from(&(-&xi));
    } else {
        let rho = eps1 / eps2;
        m.view_mut((0, 0), (k, n)).copy_from(&(&ws.q2a - &ws.q2e * rho));
        m.view_mut((0, n), (k, j)).copy_from(&(-&xi));
        m.view_mut((0, n + j), (k, j)).copy_from(&(&xi * rho));
    }
    m.view_mut((k, 0), (j, n)).copy_from(&st.p().transpose());
    m
}

/// Appends one column for a real pole, choosing `p` to maximize
/// `||Z1 u|| / ||u||` over the null space of the constraint matrix, which
/// minimizes the new column's off-diagonal mass `||v_S||^2 + ||v_T||^2`.
pub fn assign_real_pole(ws: &Workspace, st: &mut AssignState, pole: &NormalizedPole) -> Result<StepTrace, AssignErrorKind> {
    let (n, j) = (ws.n(), st.j());
    let (eps1, eps2) = (pole.eps1.re, pole.eps2.re);
    let mut m = real_constraint(ws, st, eps1, eps2);
    // Index <= 1 needs the T block over all infinite columns to be zero, so
    // an infinite pole placed late pins v_T at earlier infinite positions.
    let prior: Vec<usize> = if pole.case == PoleCase::Infinite { st.blocks.iter().filter(|b| b.kind == BlockKind::Infinite).map(|b| b.start).collect() } else { Vec::new() };
    if !prior.is_empty() {
        let rows = m.nrows();
        m = m.resize_vertically(rows + prior.len(), 0.0);
        for (i, &c) in prior.iter().enumerate() {
            m[(rows + i, n + j + c)] = 1.0;
        }
    }
    let ratio = check_full_row_rank(&singular_values(&m)?, m.nrows(), m.ncols())?;
    let z = complement_null_basis(&m)?;
    let null_dim = z.ncols();
    let z1 = z.rows(0, n).into_owned();
    let (vals, vecs) = sym_eig(&(z1.transpose() * &z1))?;
    let top = vals[0];
    if top <= Z1_DEGENERATE_TOL {
        return Err(AssignErrorKind::Z1Degenerate { top });
    }
    let u = vecs.columns(0, 1) / top.sqrt();
    let y = &z * &u;
    let p = y.rows(0, n).into_owned();
    let vs = y.rows(n, j).into_owned();
    let mut vt = y.rows(n + j, j).into_owned();
    for &c in &prior {
        vt[c] = 0.0;
    }

    let xi = st.xi();
    let new_xi = if eps1.abs() >= eps2.abs() { (&ws.q2a * &p - &xi * &vs) / eps1 } else { (&ws.q2e * &p - &xi * &vt) / eps2 };
    let block = BlockDescriptor::scalar(j, block_kind(pole.case));
    st.push(&p, &vs, &vt, &Mat::from_element(1, 1, eps1), &Mat::from_element(1, 1, eps2), &new_xi, block);
    Ok(StepTrace::Real { z1, u: u.iter().copied().collect(), top_eigenvalue: top, null_dim, row_rank_ratio: ratio })
}
