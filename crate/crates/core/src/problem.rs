//! Problem data: the pole-pair algebra, the DPP text format and the
//! solvability checks run before assignment.

use std::fmt;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{hstack, numerical_rank, numerical_rank_complex, orthonormal_null_basis, to_complex, Mat, RankTol};
use crate::metrics::generalized_eig_oracle;
use crate::Complex64;

/// Relative singular-value cutoff used for the rank decisions of validation,
/// the infinite-pole block and the closed-loop checks.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Number of random complex points at which finite controllability is
/// probed in addition to the open-loop eigenvalues.
pub const CONTROLLABILITY_PROBES: usize = 8;

const PROBE_SEED: u64 = 0x5eed0fc0de;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("(0, 0) is not an eigenvalue pair")]
    ZeroPair,
    #[error("non-finite pole entry")]
    NonFinitePole,
    #[error("finite pole with beta = 0 (infinite poles are implicit)")]
    InfiniteAmongFinite,
    #[error("matrix {name} has shape {got:?}, expected {want:?}")]
    Shape { name: &'static str, got: (usize, usize), want: (usize, usize) },
    #[error("matrix {0} has non-finite entries")]
    NonFiniteMatrix(&'static str),
    #[error("{got} finite eigenvalues exceed the state dimension {n}")]
    TooManyPoles { got: usize, n: usize },
    #[error("empty system (n = 0 or m = 0)")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoleKind {
    Infinite,
    FiniteReal,
    FiniteComplex,
}

/// An eigenvalue `lambda = alpha / beta` in homogeneous form.
///
/// Values built through [`PolePair::new`] are canonical: infinite poles are
/// `(1, 0)`, real poles have real `alpha` and positive real `beta`, and a
/// complex pole stands for its conjugate pair with `Im(alpha / beta) > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolePair {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl PolePair {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self, ProblemError> {
        if !(alpha.re.is_finite() && alpha.im.is_finite() && beta.re.is_finite() && beta.im.is_finite()) {
            return Err(ProblemError::NonFinitePole);
        }
        if alpha.norm() == 0.0 && beta.norm() == 0.0 {
            return Err(ProblemError::ZeroPair);
        }
        if beta.norm() == 0.0 {
            return Ok(Self::infinite());
        }
        let lambda = alpha / beta;
        if lambda.im == 0.0 {
            let nb = beta.norm();
            return Ok(PolePair { alpha: Complex64::new((alpha * beta.conj()).re / nb, 0.0), beta: Complex64::new(nb, 0.0) });
        }
        if lambda.im < 0.0 {
            return Ok(PolePair { alpha: alpha.conj(), beta: beta.conj() });
        }
        Ok(PolePair { alpha, beta })
    }

    pub fn infinite() -> Self {
        PolePair { alpha: Complex64::new(1.0, 0.0), beta: Complex64::new(0.0, 0.0) }
    }

    /// `(lambda, 1)`, canonicalized.
    pub fn finite(lambda: Complex64) -> Self {
        Self::new(lambda, Complex64::new(1.0, 0.0)).expect("finite value with beta = 1")
    }

    pub fn kind(&self) -> PoleKind {
        if self.beta.norm() == 0.0 {
            PoleKind::Infinite
        } else if (self.alpha / self.beta).im == 0.0 {
            PoleKind::FiniteReal
        } else {
            PoleKind::FiniteComplex
        }
    }

    pub fn value(&self) -> Option<Complex64> {
        (self.beta.norm() != 0.0).then(|| self.alpha / self.beta)
    }

    /// Number of eigenvalues this entry stands for (2 for a complex pair).
    pub fn multiplicity(&self) -> usize {
        if self.kind() == PoleKind::FiniteComplex {
            2
        } else {
            1
        }
    }

    /// `alpha1 beta2 = alpha2 beta1`, up to a relative tolerance.
    pub fn equivalent(&self, other: &PolePair, rel_tol: f64) -> bool {
        let lhs = self.alpha * other.beta;
        let rhs = other.alpha * self.beta;
        let scale = (self.alpha.norm() + self.beta.norm()) * (other.alpha.norm() + other.beta.norm());
        (lhs - rhs).norm() <= rel_tol * scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoleCase {
    /// `(eps1, eps2) = (1, 0)`.
    Infinite,
    RealCase,
    ComplexAlphaDominant,
    ComplexBetaDominant,
}

/// Scaled form of a pole used to build the diagonal blocks of `S` and `T`.
///
/// For the complex cases `sigma + i tau` is `beta / alpha` (alpha-dominant)
/// or `alpha / beta` (beta-dominant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPole {
    pub eps1: Complex64,
    pub eps2: Complex64,
    pub sigma: f64,
    pub tau: f64,
    pub case: PoleCase,
}

impl NormalizedPole {
    pub fn is_complex(&self) -> bool {
        matches!(self.case, PoleCase::ComplexAlphaDominant | PoleCase::ComplexBetaDominant)
    }
}

pub fn normalize_pole(p: &PolePair) -> Result<NormalizedPole, ProblemError> {
    let (a, b) = (p.alpha, p.beta);
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 && nb == 0.0 {
        return Err(ProblemError::ZeroPair);
    }
    let one = Complex64::new(1.0, 0.0);
    match p.kind() {
        PoleKind::Infinite => Ok(NormalizedPole { eps1: one, eps2: Complex64::new(0.0, 0.0), sigma: 0.0, tau: 0.0, case: PoleCase::Infinite }),
        PoleKind::FiniteReal => {
            let h = a.re.hypot(b.re);
            Ok(NormalizedPole { eps1: Complex64::new(a.re / h, 0.0), eps2: Complex64::new(b.re / h, 0.0), sigma: 0.0, tau: 0.0, case: PoleCase::RealCase })
        }
        PoleKind::FiniteComplex => {
            if na >= nb {
                let g = a.conj() * b / a.norm_sqr();
                Ok(NormalizedPole { eps1: one, eps2: g, sigma: g.re, tau: g.im, case: PoleCase::ComplexAlphaDominant })
            } else {
                let g = b.conj() * a / b.norm_sqr();
                Ok(NormalizedPole { eps1: g, eps2: one, sigma: g.re, tau: g.im, case: PoleCase::ComplexBetaDominant })
            }
        }
    }
}

/// A pole assignment problem for `E x' = A x + B u`.
///
/// `poles` lists the `n - r` infinite poles first, then the finite poles in
/// input order with each complex pair stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub e: Mat,
    pub a: Mat,
    pub b: Mat,
    pub poles: Vec<PolePair>,
}

impl Problem {
    /// Builds a problem from its matrices and the finite poles; the
    /// remaining `n - r` poles are infinite.
    pub fn new(e: Mat, a: Mat, b: Mat, finite: Vec<PolePair>) -> Result<Self, ProblemError> {
        let n = e.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(ProblemError::Empty);
        }
        for (name, mat, want) in [("E", &e, (n, n)), ("A", &a, (n, n)), ("B", &b, (n, m))] {
            if mat.shape() != want {
                return Err(ProblemError::Shape { name, got: mat.shape(), want });
            }
            if !mat.iter().all(|x| x.is_finite()) {
                return Err(ProblemError::NonFiniteMatrix(name));
            }
        }
        let mut canonical = Vec::with_capacity(finite.len());
        for p in finite {
            let c = PolePair::new(p.alpha, p.beta)?;
            if c.kind() == PoleKind::Infinite {
                return Err(ProblemError::InfiniteAmongFinite);
            }
            canonical.push(c);
        }
        let r: usize = canonical.iter().map(PolePair::multiplicity).sum();
        if r > n {
            return Err(ProblemError::TooManyPoles { got: r, n });
        }
        let mut poles = vec![PolePair::infinite(); n - r];
        poles.extend(canonical);
        Ok(Problem { e, a, b, poles })
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Number of finite poles, counting both members of complex pairs.
    pub fn r(&self) -> usize {
        self.finite_poles().map(PolePair::multiplicity).sum()
    }

    pub fn infinite_count(&self) -> usize {
        self.n() - self.r()
    }

    pub fn finite_poles(&self) -> impl Iterator<Item = &PolePair> {
        self.poles.iter().filter(|p| p.kind() != PoleKind::Infinite)
    }

    /// Finite eigenvalues with conjugates expanded, in storage order.
    pub fn finite_values(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.r());
        for p in self.finite_poles() {
            let v = p.value().expect("finite pole");
            out.push(v);
            if p.kind() == PoleKind::FiniteComplex {
                out.push(v.conj());
            }
        }
        out
    }
}

/// Parses the DPP text format.
///
/// ```text
/// n m r
/// <n rows of E> <n rows of A> <n rows of B>
/// <r lines: alpha_re alpha_im beta_re beta_im>
/// ```
/// `#` starts a comment; blank lines are skipped. Complex poles must come in
/// adjacent conjugate lines.
pub fn parse_problem(text: &str) -> Result<Problem, ParseError> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(ParseError { line: 1, message: "missing header `n m r`".into() })?;
    if header.len() != 3 {
        return Err(ParseError { line: hline, message: format!("malformed header: expected `n m r`, got {} fields", header.len()) });
    }
    let mut dims = [0usize; 3];
    for (d, tok) in dims.iter_mut().zip(&header) {
        *d = tok.parse().map_err(|_| ParseError { line: hline, message: format!("malformed header: `{tok}` is not a count") })?;
    }
    let [n, m, r] = dims;
    if n == 0 || m == 0 {
        return Err(ParseError { line: hline, message: "malformed header: n and m must be positive".into() });
    }
    if r > n {
        return Err(ParseError { line: hline, message: format!("malformed header: r = {r} exceeds n = {n}") });
    }
    let mut last_line = hline;
    let mut read_matrix = |name: &str, rows: usize, cols: usize, lines: &mut dyn Iterator<Item = (usize, Vec<&str>)>| {
        let mut mat = Mat::zeros(rows, cols);
        for i in 0..rows {
            let (ln, toks) = lines.next().ok_or(ParseError { line: last_line + 1, message: format!("matrix {name}: expected {rows} rows, found {i}") })?;
            last_line = ln;
            if toks.len() != cols {
                return Err(ParseError { line: ln, message: format!("matrix {name}: row has {} entries, expected {cols}", toks.len()) });
            }
            for (j, tok) in toks.iter().enumerate() {
                mat[(i, j)] = parse_real(tok, ln)?;
            }
        }
        Ok((mat, last_line))
    };
    let (e, _) = read_matrix("E", n, n, &mut lines)?;
    let (a, _) = read_matrix("A", n, n, &mut lines)?;
    let (b, mut last) = read_matrix("B", n, m, &mut lines)?;

    let mut raw: Vec<(usize, PolePair)> = Vec::with_capacity(r);
    for i in 0..r {
        let (ln, toks) = lines.next().ok_or(ParseError { line: last + 1, message: format!("pole count mismatch: header declares {r} finite poles, found {i}") })?;
        last = ln;
        if toks.len() != 4 {
            return Err(ParseError { line: ln, message: format!("pole line has {} entries, expected 4", toks.len()) });
        }
        let v: Vec<f64> = toks.iter().map(|t| parse_real(t, ln)).collect::<Result<_, _>>()?;
        let alpha = Complex64::new(v[0], v[1]);
        let beta = Complex64::new(v[2], v[3]);
        if beta.norm() == 0.0 {
            let message = if alpha.norm() == 0.0 { "(0, 0) is not an eigenvalue pair" } else { "finite pole with beta = 0 (infinite poles are implicit)" };
            return Err(ParseError { line: ln, message: message.into() });
        }
        raw.push((ln, PolePair { alpha, beta }));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(ParseError { line: ln, message: format!("pole count mismatch: more than the {r} finite poles declared") });
    }

    let mut finite = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let (ln, p) = raw[i];
        let lambda = p.alpha / p.beta;
        if lambda.im == 0.0 {
            finite.push(p);
            i += 1;
            continue;
        }
        let partner = raw.get(i + 1).filter(|(_, q)| q.equivalent(&PolePair { alpha: p.alpha.conj(), beta: p.beta.conj() }, 1e-12));
        if partner.is_none() {
            return Err(ParseError { line: ln, message: "unpaired complex pole (its conjugate must be on the next pole line)".into() });
        }
        finite.push(p);
        i += 2;
    }
    Problem::new(e, a, b, finite).map_err(|err| ParseError { line: hline, message: err.to_string() })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn parse_real(tok: &str, line: usize) -> Result<f64, ParseError> {
    let v: f64 = tok.parse().map_err(|_| ParseError { line, message: format!("non-numeric token `{tok}`") })?;
    if !v.is_finite() {
        return Err(ParseError { line, message: format!("non-finite value `{tok}`") });
    }
    Ok(v)
}

/// Writes a problem in the DPP format; `parse_problem` reads it back exactly.
pub fn write_problem(p: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", p.n(), p.m(), p.r());
    for (name, mat) in [("E", &p.e), ("A", &p.a), ("B", &p.b)] {
        let _ = writeln!(out, "# {name}");
        write_rows(&mut out, mat);
    }
    let _ = writeln!(out, "# finite poles: alpha_re alpha_im beta_re beta_im");
    for pole in p.finite_poles() {
        let (a, b) = (pole.alpha, pole.beta);
        let _ = writeln!(out, "{:?} {:?} {:?} {:?}", a.re, a.im, b.re, b.im);
        if pole.kind() == PoleKind::FiniteComplex {
            let _ = writeln!(out, "{:?} {:?} {:?} {:?}", a.re, -a.im, b.re, -b.im);
        }
    }
    out
}

pub(crate) fn write_rows(out: &mut String, mat: &Mat) {
    for i in 0..mat.nrows() {
        let row: Vec<String> = (0..mat.ncols()).map(|j| format!("{:?}", mat[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationFailure {
    /// (a)
    RankDeficientB { rank: usize, m: usize },
    /// (c)
    RankBound { q: usize, m: usize, r: usize },
    /// (d): `rank [E, A N_inf, B] < n`.
    ImpulseUncontrollable { rank: usize, n: usize },
    /// (e): `rank [lambda E - A, B] < n`.
    FiniteUncontrollable { lambda: Complex64, rank: usize, n: usize },
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFailure::RankDeficientB { rank, m } => write!(f, "B is not of full column rank (rank {rank} < m = {m})"),
            ValidationFailure::RankBound { q, m, r } => {
                write!(f, "number of finite poles violates q - m <= r <= q with q = rank[E B] = {q}, m = {m}, r = {r}")
            }
            ValidationFailure::ImpulseUncontrollable { rank, n } => write!(f, "not impulse controllable: rank[E, A*N_inf, B] = {rank} < n = {n}"),
            ValidationFailure::FiniteUncontrollable { lambda, rank, n } => {
                write!(f, "uncontrollable finite mode: rank[lambda E - A, B] = {rank} < n = {n} at lambda = {lambda}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub q: usize,
    pub rank_b: usize,
    pub failures: Vec<ValidationFailure>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks the solvability conditions. `tol` is the relative singular-value
/// cutoff for every rank decision; the outcome depends on `tol` only through
/// those decisions.
pub fn validate_problem(p: &Problem, tol: f64) -> ValidationReport {
    let rt = RankTol::Relative(tol);
    let (n, m, r) = (p.n(), p.m(), p.r());
    let rank = |mat: &Mat| numerical_rank(mat, rt).map(|d| d.rank).unwrap_or(0);
    let mut failures = Vec::new();
    let mut warnings = Vec::new();

    let rank_b = rank(&p.b);
    if rank_b < m {
        failures.push(ValidationFailure::RankDeficientB { rank: rank_b, m });
    }
    let q = rank(&hstack(&[&p.e, &p.b]));
    if r + m < q || r > q {
        failures.push(ValidationFailure::RankBound { q, m, r });
    }
    let n_inf = orthonormal_null_basis(&p.e, rt).unwrap_or_else(|_| Mat::zeros(n, 0));
    let an = &p.a * &n_inf;
    let rd = rank(&hstack(&[&p.e, &an, &p.b]));
    if rd < n {
        failures.push(ValidationFailure::ImpulseUncontrollable { rank: rd, n });
    }

    let mut points: Vec<Complex64> = match generalized_eig_oracle(&p.a, &p.e, crate::metrics::ORACLE_TOL) {
        Ok(spec) => spec.finite,
        Err(_) => Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for _ in 0..CONTROLLABILITY_PROBES {
        points.push(Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    }
    let ce = to_complex(&p.e);
    let ca = to_complex(&p.a);
    let cb = to_complex(&p.b);
    for lambda in points {
        let pencil = &ce * lambda - &ca;
        let rk = numerical_rank_complex(&hstack(&[&pencil, &cb]), rt).map(|d| d.rank).unwrap_or(0);
        if rk < n {
            failures.push(ValidationFailure::FiniteUncontrollable { lambda, rank: rk, n });
        }
    }

    let finite: Vec<&PolePair> = p.finite_poles().collect();
    for (i, pi) in finite.iter().enumerate() {
        if finite[..i].iter().any(|pj| pj.equivalent(pi, 1e-12)) {
            continue;
        }
        let mult = finite.iter().filter(|pj| pj.equivalent(pi, 1e-12)).count();
        if mult > m {
            warnings.push(format!("pole {} repeated {mult} times, more than m = {m}; expect reduced accuracy", pi.value().expect("finite")));
        }
    }
    ValidationReport { q, rank_b, failures, warnings }
}
