use super::{AssignErrorKind, AssignState, BlockDescriptor, BlockKind, StepTrace, Workspace};
use crate::linalg::{orthonormal_null_basis, Mat, RankTol};

/// Places `count` infinite poles at once: `P = Z W` with `Z` an orthonormal
/// basis of `N(Q2'E)` and `W` its leading identity columns, `S = I`, `T = 0`.
///
/// The strictly upper parts of `S` and `T` in these columns are exactly zero,
/// which is the unconstrained optimum of the departure measure.
pub fn assign_infinite_block(ws: &Workspace, st: &mut AssignState, count: usize, rank_tol: f64) -> Result<StepTrace, AssignErrorKind> {
    let n = ws.n();
    let z = if ws.k() == 0 { Mat::identity(n, n) } else { orthonormal_null_basis(&ws.q2e, RankTol::Relative(rank_tol))? };
    let l = z.ncols();
    if l < count {
        return Err(AssignErrorKind::InfiniteInfeasible { available: l, needed: count });
    }
    if count == 0 {
        return Ok(StepTrace::Infinite { count, null_dim: l });
    }
    let j = st.j();
    let p = z.columns(0, count).into_owned();
    let xi = &ws.q2a * &p;
    let one = Mat::from_element(1, 1, 1.0);
    let zero = Mat::zeros(1, 1);
    for c in 0..count {
        let v = Mat::zeros(j + c, 1);
        let block = BlockDescriptor::scalar(j + c, BlockKind::Infinite);
        st.push(&p.columns(c, 1).into_owned(), &v, &v, &one, &zero, &xi.columns(c, 1).into_owned(), block);
    }
    Ok(StepTrace::Infinite { count, null_dim: l })
}
