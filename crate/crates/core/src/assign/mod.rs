//! The column-by-column Schur construction and feedback extraction.
//!
//! With `B = Q1 R` and `Q2` spanning the complement of `B`, any `(P, X, S, T)`
//! with `Q2'(A P - X S) = 0` and `Q2'(E P - X T) = 0` yields feedback
//! `F = R^-1 Q1'(X S P' - A)`, `G = R^-1 Q1'(X T P' - E)`. Only `Xi = Q2' X`
//! is built during the sweep; `Q1' X` is filled in at the end.

mod completion;
mod complex;
mod infinite;
mod real;

use std::fmt;

use nalgebra::Cholesky;
use serde::Serialize;
use thiserror::Error;

pub use completion::complete_x;
pub use complex::{assign_complex_pair, complex_subproblem, finalize_pair, ColumnPair, ComplexChoice};
pub use infinite::assign_infinite_block;
pub use real::assign_real_pole;

use crate::linalg::{qr_decompose, LinalgError, Mat};
use crate::problem::{normalize_pole, NormalizedPole, PoleCase, PoleKind, Problem, DEFAULT_RANK_TOL};

/// `nu2 <= RANK_ONE_RATIO * nu1` sends a complex step to the rank-1 branch.
pub const RANK_ONE_RATIO: f64 = 1e-8;
/// Largest eigenvalue of `Z1' Z1` (or `nu1`) below which `Z1` counts as zero.
pub const Z1_DEGENERATE_TOL: f64 = 1e-12;
/// Condition number above which the rank-1 Hessian is treated as singular.
pub const HESSIAN_COND_LIMIT: f64 = 1e14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignErrorKind {
    #[error("B is not of full column rank")]
    RankDeficientB,
    #[error("infinite poles infeasible: null space of Q2'E has dimension {available}, need {needed}")]
    InfiniteInfeasible { available: usize, needed: usize },
    #[error("constraint matrix lost full row rank (sigma_min/sigma_max = {ratio:.3e})")]
    NotFullRowRank { ratio: f64 },
    #[error("Z1 degenerate (top value {top:.3e})")]
    Z1Degenerate { top: f64 },
    #[error("real and imaginary parts of the complex direction are dependent")]
    DependentPsi,
    #[error("rank-1 Hessian numerically singular (condition {cond:.3e})")]
    HessianSingular { cond: f64 },
    #[error("state inconsistent: Xi is not of full row rank")]
    StateInconsistent,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignError {
    /// Index into the step sequence (the infinite block is step 0 under
    /// `InfFirst`).
    pub step: usize,
    /// Number of columns placed before the failing step.
    pub column: usize,
    pub kind: AssignErrorKind,
}

impl fmt::Display for AssignError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} (column {}): {}", self.step, self.column, self.kind)
    }
}

impl std::error::Error for AssignError {}

/// `B = Q1 R`, `[Q1 Q2]` orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Parametrization {
    pub q1: Mat,
    pub q2: Mat,
    pub r: Mat,
}

pub fn compute_parametrization(b: &Mat, rank_tol: f64) -> Result<Parametrization, AssignErrorKind> {
    let (n, m) = b.shape();
    if m == 0 || m > n {
        return Err(AssignErrorKind::RankDeficientB);
    }
    let (q, r_full) = qr_decompose(b)?;
    let r = r_full.rows(0, m).into_owned();
    let dmax = (0..m).map(|i| r[(i, i)]).fold(0.0, f64::max);
    if (0..m).any(|i| r[(i, i)] <= rank_tol * dmax) || dmax == 0.0 {
        return Err(AssignErrorKind::RankDeficientB);
    }
    Ok(Parametrization { q1: q.columns(0, m).into_owned(), q2: q.columns(m, n - m).into_owned(), r })
}

/// Problem data shared by every step.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub a: Mat,
    pub e: Mat,
    pub par: Parametrization,
    pub q2a: Mat,
    pub q2e: Mat,
}

impl Workspace {
    pub fn new(a: &Mat, e: &Mat, par: Parametrization) -> Self {
        let q2t = par.q2.transpose();
        Workspace { q2a: &q2t * a, q2e: &q2t * e, a: a.clone(), e: e.clone(), par }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `n - m`, the row count of `Xi`.
    pub fn k(&self) -> usize {
        self.par.q2.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    Infinite,
    Real,
    ComplexAlphaDominant,
    ComplexBetaDominant,
}

/// One diagonal block of `(S, T)`. For 1x1 blocks `delta = 1` and
/// `sigma = tau = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockDescriptor {
    pub start: usize,
    pub size: usize,
    pub kind: BlockKind,
    pub delta: f64,
    pub sigma: f64,
    pub tau: f64,
}

impl BlockDescriptor {
    pub fn scalar(start: usize, kind: BlockKind) -> Self {
        BlockDescriptor { start, size: 1, kind, delta: 1.0, sigma: 0.0, tau: 0.0 }
    }
}

/// `D_delta(sigma + i tau) = [[sigma, delta tau], [-tau/delta, sigma]]`.
pub fn d_delta(sigma: f64, tau: f64, delta: f64) -> Mat {
    Mat::from_row_slice(2, 2, &[sigma, delta * tau, -tau / delta, sigma])
}

/// Growing factors after `j` columns. Storage is preallocated for `n`
/// columns; accessors return the leading `j` part.
#[derive(Debug, Clone)]
pub struct AssignState {
    j: usize,
    p: Mat,
    xi: Mat,
    s: Mat,
    t: Mat,
    pub blocks: Vec<BlockDescriptor>,
}

impl AssignState {
    pub fn new(n: usize, k: usize) -> Self {
        AssignState { j: 0, p: Mat::zeros(n, n), xi: Mat::zeros(k, n), s: Mat::zeros(n, n), t: Mat::zeros(n, n), blocks: Vec::new() }
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn p(&self) -> Mat {
        self.p.columns(0, self.j).into_owned()
    }

    pub fn xi(&self) -> Mat {
        self.xi.columns(0, self.j).into_owned()
    }

    pub fn s(&self) -> Mat {
        self.s.view((0, 0), (self.j, self.j)).into_owned()
    }

    pub fn t(&self) -> Mat {
        self.t.view((0, 0), (self.j, self.j)).into_owned()
    }

    /// Appends `c` columns: `p` (n x c), the strictly-upper parts `vs`, `vt`
    /// (j x c), the diagonal blocks `ds`, `dt` (c x c) and `xi` (k x c).
    pub(crate) fn push(&mut self, p: &Mat, vs: &Mat, vt: &Mat, ds: &Mat, dt: &Mat, xi: &Mat, block: BlockDescriptor) {
        let (j, c) = (self.j, p.ncols());
        self.p.view_mut((0, j), (p.nrows(), c)).copy_from(p);
        self.xi.view_mut((0, j), (xi.nrows(), c)).copy_from(xi);
        self.s.view_mut((0, j), (j, c)).copy_from(vs);
        self.t.view_mut((0, j), (j, c)).copy_from(vt);
        self.s.view_mut((j, j), (c, c)).copy_from(ds);
        self.t.view_mut((j, j), (c, c)).copy_from(dt);
        self.blocks.push(block);
        self.j += c;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Order {
    /// All infinite poles first, then real poles ascending, then complex pairs.
    #[default]
    InfFirst,
    /// Finite poles first; infinite poles go through the real-pole step.
    FinFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignOptions {
    pub order: Order,
    pub record_trace: bool,
    pub rank_tol: f64,
}

impl Default for AssignOptions {
    fn default() -> Self {
        AssignOptions { order: Order::InfFirst, record_trace: false, rank_tol: DEFAULT_RANK_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComplexBranch {
    RankOne,
    RankTwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Strategy {
    One,
    Two,
}

/// Data of the rank-1 quadratic `f' H f + h' f + zeta`. `wall`, `nu1`, `c`,
/// `s`, `varsigma` are enough to re-evaluate the objective from scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Trace {
    pub hessian: Mat,
    pub h: Vec<f64>,
    pub f: Vec<f64>,
    pub zeta: f64,
    pub wall: crate::linalg::CMat,
    pub nu1: f64,
    pub c: f64,
    pub s: f64,
    pub varsigma: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rank2Trace {
    pub rho1: f64,
    pub rho2: f64,
    /// `2 (1 - nu2^2) / nu2^2`.
    pub bound2: f64,
    pub chosen: Strategy,
    pub nu: (f64, f64),
    /// Two largest eigenvalues of the Hamiltonian-form matrix.
    pub phi: (f64, f64),
    /// `||Re z||^2 - ||Im z||^2` at the strategy-2 coefficients.
    pub hamiltonian_form: f64,
    pub coeffs: (crate::Complex64, crate::Complex64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTrace {
    pub nu: Vec<f64>,
    pub branch: ComplexBranch,
    pub rank1: Option<Rank1Trace>,
    pub rank2: Option<Rank2Trace>,
    pub row_rank_ratio: f64,
    pub delta: f64,
    /// Objective of the chosen column pair.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepTrace {
    Infinite { count: usize, null_dim: usize },
    Real { z1: Mat, u: Vec<f64>, top_eigenvalue: f64, null_dim: usize, row_rank_ratio: f64 },
    Complex(ComplexTrace),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub f: Mat,
    pub g: Mat,
    pub p: Mat,
    pub s: Mat,
    pub t: Mat,
    pub x: Mat,
    pub blocks: Vec<BlockDescriptor>,
    /// Empty unless `AssignOptions::record_trace` is set.
    pub trace: Vec<StepTrace>,
}

/// Ratio `sigma_min / sigma_max` of a wide matrix; errors when it falls to
/// the default rank cutoff.
pub(crate) fn check_full_row_rank(sv: &[f64], rows: usize, cols: usize) -> Result<f64, AssignErrorKind> {
    if rows == 0 {
        return Ok(1.0);
    }
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = if sv.len() >= rows { sv[rows - 1] } else { 0.0 };
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if smin <= rows.max(cols) as f64 * f64::EPSILON * smax || smax == 0.0 {
        return Err(AssignErrorKind::NotFullRowRank { ratio });
    }
    Ok(ratio)
}

/// `x` minimizing `x' H x + h' x`: `-H^-1 h / 2` by Cholesky, after checking
/// the condition number.
pub(crate) fn minimize_quadratic(hess: &Mat, h: &[f64]) -> Result<Vec<f64>, AssignErrorKind> {
    if h.is_empty() {
        return Ok(Vec::new());
    }
    let (vals, _) = crate::linalg::sym_eig(hess)?;
    let (lmax, lmin) = (vals[0], vals[vals.len() - 1]);
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if cond > HESSIAN_COND_LIMIT {
        return Err(AssignErrorKind::HessianSingular { cond });
    }
    let chol = Cholesky::new(hess.clone()).ok_or(AssignErrorKind::HessianSingular { cond })?;
    let rhs = crate::linalg::Vector::from_iterator(h.len(), h.iter().map(|x| -0.5 * x));
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// `F = R^-1 Q1'(X S P' - A)`, `G = R^-1 Q1'(X T P' - E)`.
pub fn extract_feedback(ws: &Workspace, x: &Mat, s: &Mat, t: &Mat, p: &Mat) -> Result<(Mat, Mat), AssignErrorKind> {
    let q1t = ws.par.q1.transpose();
    let xp = |m: &Mat| x * m * p.transpose();
    let rhs_f = &q1t * (xp(s) - &ws.a);
    let rhs_g = &q1t * (xp(t) - &ws.e);
    let r = &ws.par.r;
    let f = r.solve_upper_triangular(&rhs_f).ok_or(AssignErrorKind::RankDeficientB)?;
    let g = r.solve_upper_triangular(&rhs_g).ok_or(AssignErrorKind::RankDeficientB)?;
    Ok((f, g))
}

/// Step sequence: `None` is the infinite block, `Some` a finite pole or an
/// infinite pole routed through the real-pole step.
fn step_plan(p: &Problem, order: Order) -> Result<Vec<Option<NormalizedPole>>, AssignErrorKind> {
    let mut reals = Vec::new();
    let mut complexes = Vec::new();
    for pole in p.finite_poles() {
        let np = normalize_pole(pole).map_err(|e| AssignErrorKind::Malformed(e.to_string()))?;
        match pole.kind() {
            PoleKind::FiniteReal => reals.push((pole.value().expect("finite").re, np)),
            _ => complexes.push(np),
        }
    }
    reals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let finite = reals.into_iter().map(|(_, np)| Some(np)).chain(complexes.into_iter().map(Some));
    let inf = p.infinite_count();
    Ok(match order {
        Order::InfFirst => std::iter::once(None).chain(finite).collect(),
        Order::FinFirst => {
            let np = normalize_pole(&crate::problem::PolePair::infinite()).expect("infinite pole normalizes");
            finite.chain(std::iter::repeat_n(Some(np), inf)).collect()
        }
    })
}

/// Runs the full construction. The problem is assumed to have passed
/// [`crate::problem::validate_problem`]; theorem-backed rank conditions are
/// still asserted at every step.
pub fn run_pipeline(p: &Problem, opts: &AssignOptions) -> Result<Solution, AssignError> {
    let at = |step: usize, column: usize| move |kind: AssignErrorKind| AssignError { step, column, kind };
    let par = compute_parametrization(&p.b, opts.rank_tol).map_err(at(0, 0))?;
    let ws = Workspace::new(&p.a, &p.e, par);
    let plan = step_plan(p, opts.order).map_err(at(0, 0))?;
    let mut st = AssignState::new(ws.n(), ws.k());
    let mut trace = Vec::new();
    for (step, item) in plan.iter().enumerate() {
        let column = st.j();
        let tr = match item {
            None => assign_infinite_block(&ws, &mut st, p.infinite_count(), opts.rank_tol),
            Some(np) if np.is_complex() => assign_complex_pair(&ws, &mut st, np),
            Some(np) => assign_real_pole(&ws, &mut st, np),
        }
        .map_err(at(step, column))?;
        if opts.record_trace {
            trace.push(tr);
        }
    }
    let (n, steps) = (ws.n(), plan.len());
    if st.j() != n {
        return Err(AssignError { step: steps, column: st.j(), kind: AssignErrorKind::Malformed(format!("placed {} of {n} columns", st.j())) });
    }
    let x = complete_x(&ws.par, &st.xi()).map_err(at(steps, n))?;
    let (s, t, pm) = (st.s(), st.t(), st.p());
    let (f, g) = extract_feedback(&ws, &x, &s, &t, &pm).map_err(at(steps, n))?;
    Ok(Solution { f, g, p: pm, s, t, x, blocks: st.blocks, trace })
}

pub(crate) fn block_kind(case: PoleCase) -> BlockKind {
    match case {
        PoleCase::Infinite => BlockKind::Infinite,
        PoleCase::RealCase => BlockKind::Real,
        PoleCase::ComplexAlphaDominant => BlockKind::ComplexAlphaDominant,
        PoleCase::ComplexBetaDominant => BlockKind::ComplexBetaDominant,
    }
}
