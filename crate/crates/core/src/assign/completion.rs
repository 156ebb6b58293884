use super::{check_full_row_rank, AssignErrorKind, Parametrization};
use crate::linalg::{qr_decompose, singular_values, Mat};

/// Completes `X` from `Xi = Q2'X` so that `X` is as well conditioned as the
/// constraint allows: the `Q1'X` rows are an orthonormal basis of the
/// orthogonal complement of the rows of `Xi`.
pub fn complete_x(par: &Parametrization, xi: &Mat) -> Result<Mat, AssignErrorKind> {
    let (k, n) = xi.shape();
    let m = n - k;
    if k > 0 {
        let sv = singular_values(xi)?;
        check_full_row_rank(&sv, k, n).map_err(|_| AssignErrorKind::StateInconsistent)?;
    }
    let (qx, _) = qr_decompose(&xi.transpose())?;
    let y = qx.columns(k, m).transpose();
    Ok(&par.q1 * y + &par.q2 * xi)
}
