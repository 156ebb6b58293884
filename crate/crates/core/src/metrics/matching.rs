use crate::Complex64;

/// `log10` floor reported for exact matches.
pub const PRECS_FLOOR: f64 = -17.0;

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials, O(n^3)). Returns `col[row]`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta || j1 == 0 {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=n {
        col[row_of[j] - 1] = j - 1;
    }
    col
}

fn rel_err(want: Complex64, got: Complex64) -> f64 {
    let d = (want - got).norm();
    if want.norm() == 0.0 {
        d
    } else {
        d / want.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precs {
    /// `max log10` relative error over matched poles, floored at -17;
    /// `+inf` on a count mismatch.
    pub value: f64,
    pub mismatch: bool,
}

pub fn precs_metric(requested: &[Complex64], computed: &[Complex64]) -> Precs {
    if requested.len() != computed.len() {
        return Precs { value: f64::INFINITY, mismatch: true };
    }
    let cost: Vec<Vec<f64>> = requested.iter().map(|&w| computed.iter().map(|&g| rel_err(w, g)).collect()).collect();
    let col = hungarian(&cost);
    let worst = col.iter().enumerate().map(|(i, &j)| cost[i][j]).fold(0.0, f64::max);
    let value = if worst > 0.0 { worst.log10().max(PRECS_FLOOR) } else { PRECS_FLOOR };
    Precs { value, mismatch: false }
}
