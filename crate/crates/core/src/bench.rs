//! Seeded random instances with prescribed rank E, rank [E B] and spectrum, and
//! the sweep that aggregates metrics per `(n, rank E, m, r)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::assign::{run_pipeline, AssignOptions, Order};
use crate::linalg::{hstack, numerical_rank, qr_decompose, Mat, RankTol};
use crate::metrics::{generalized_eig_oracle, verify_solution, Report, DEFAULT_RESIDUAL_TOL, ORACLE_TOL};
use crate::problem::{PolePair, Problem, DEFAULT_RANK_TOL};
use crate::Complex64;

pub const MAX_REDRAWS: u64 = 10;
/// `|Im lambda| <= REAL_SNAP |lambda|` counts as a real eigenvalue of `(W, Y)`.
pub const REAL_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no nondegenerate draw after {MAX_REDRAWS} attempts")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n: usize,
    pub rank_e: usize,
    pub m: usize,
    pub r_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub order: Order,
}

impl BenchConfig {
    /// Config sweeping `r` over `[q - m, q]`, `q = min(n, rank E + m)`.
    pub fn new(n: usize, rank_e: usize, m: usize, trials: usize, seed: u64, order: Order) -> Result<Self, BenchError> {
        if rank_e == 0 || rank_e >= n {
            return Err(BenchError::InvalidConfig(format!("need 0 < rankE < n, got rankE = {rank_e}, n = {n}")));
        }
        if m == 0 || m > n {
            return Err(BenchError::InvalidConfig(format!("need 0 < m <= n, got m = {m}, n = {n}")));
        }
        let q = n.min(rank_e + m);
        Ok(BenchConfig { n, rank_e, m, r_values: (q.saturating_sub(m)..=q).collect(), trials, seed, order })
    }

    pub fn r_values(&self) -> &[usize] {
        &self.r_values
    }
}

/// The nine `(rank E, m)` pairs used for a given `n`.
pub fn config_grid(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for m in [2, n / 2, n - 2] {
        for rank_e in [2, n / 2, n - 1] {
            out.push((rank_e, m));
        }
    }
    out
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn instance_seed(cfg: &BenchConfig, r: usize, trial: usize, attempt: u64) -> u64 {
    let h = [cfg.n as u64, cfg.rank_e as u64, cfg.m as u64, r as u64, trial as u64, attempt].iter().fold(0u64, |acc, &v| splitmix64(acc ^ v));
    cfg.seed ^ h
}

fn draw(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Mat::from_row_slice(rows, cols, &data)
}

/// Finite poles of `(W, Y)` as canonical representatives, or `None` when
/// the count or the conjugate pairing is off.
fn poles_of(w: &Mat, y: &Mat) -> Option<Vec<PolePair>> {
    let spec = generalized_eig_oracle(w, y, ORACLE_TOL).ok()?;
    if spec.infinite != 0 {
        return None;
    }
    let mut reals = Vec::new();
    let mut upper = Vec::new();
    let mut lower = 0usize;
    for z in spec.finite {
        if z.im.abs() <= REAL_SNAP * z.norm() {
            reals.push(PolePair::finite(Complex64::new(z.re, 0.0)));
        } else if z.im > 0.0 {
            upper.push(PolePair::finite(z));
        } else {
            lower += 1;
        }
    }
    (upper.len() == lower).then(|| reals.into_iter().chain(upper).collect())
}

/// Draws `A, E0, B, W, Y` (in that order, row-major, standard normal),
/// zeroes the leading `(n - rank E)` block of `R` in `E0 = Q R` and sets
/// `E = Q R Q'`. Degenerate draws are redrawn with a new sub-seed.
pub fn generate_random_instance(cfg: &BenchConfig, r: usize, trial: usize) -> Result<Problem, BenchError> {
    let (n, m, re) = (cfg.n, cfg.m, cfg.rank_e);
    if !cfg.r_values.contains(&r) {
        return Err(BenchError::InvalidConfig(format!("r = {r} outside {:?}", cfg.r_values)));
    }
    let rt = RankTol::Relative(DEFAULT_RANK_TOL);
    for attempt in 0..MAX_REDRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(cfg, r, trial, attempt));
        let a = draw(&mut rng, n, n);
        let e0 = draw(&mut rng, n, n);
        let b = draw(&mut rng, n, m);
        let w = draw(&mut rng, r, r);
        let y = draw(&mut rng, r, r);
        let (q, mut rr) = qr_decompose(&e0).expect("finite draw");
        rr.view_mut((0, 0), (n - re, n - re)).fill(0.0);
        let e = &q * rr * q.transpose();
        let rank_ok = numerical_rank(&e, rt).map(|d| d.rank == re).unwrap_or(false);
        let q_ok = numerical_rank(&hstack(&[&e, &b]), rt).map(|d| d.rank == n.min(re + m)).unwrap_or(false);
        if !(rank_ok && q_ok) {
            continue;
        }
        let poles = if r == 0 { Some(Vec::new()) } else { poles_of(&w, &y) };
        let Some(poles) = poles else { continue };
        if let Ok(p) = Problem::new(e, a, b, poles) {
            if p.r() == r {
                return Ok(p);
            }
        }
    }
    Err(BenchError::Degenerate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub rank_e: usize,
    pub m: usize,
    pub r: usize,
    pub trials: usize,
    pub mean_precs: f64,
    pub mean_delta_f2: f64,
    pub mean_norm_f: f64,
    pub mean_norm_g: f64,
    pub mean_kappa_xgf: f64,
    pub mean_kappa_x: f64,
    pub failures: usize,
}

/// Outcome of one trial: the report, or why no solution was produced.
pub fn run_trial(cfg: &BenchConfig, r: usize, trial: usize) -> Result<Report, String> {
    let p = generate_random_instance(cfg, r, trial).map_err(|e| e.to_string())?;
    let opts = AssignOptions { order: cfg.order, ..AssignOptions::default() };
    let sol = run_pipeline(&p, &opts).map_err(|e| e.to_string())?;
    Ok(verify_solution(&p, &sol, DEFAULT_RESIDUAL_TOL))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// One row per `r`. Means run over trials that produced a solution, in
/// trial order; `failures` counts trials with no solution or a failed
/// verification verdict. `kappaX` averages only trials where it exists.
pub fn sweep(cfg: &BenchConfig) -> Vec<BenchRow> {
    cfg.r_values
        .iter()
        .map(|&r| {
            let mut cols: [Vec<f64>; 6] = Default::default();
            let mut failures = 0;
            for trial in 0..cfg.trials {
                match run_trial(cfg, r, trial) {
                    Ok(rep) => {
                        if !rep.verdict {
                            failures += 1;
                        }
                        cols[0].push(rep.precs);
                        cols[1].push(rep.delta_f2.unwrap_or(f64::NAN));
                        cols[2].push(rep.norms.norm_f);
                        cols[3].push(rep.norms.norm_g);
                        cols[4].push(rep.norms.kappa_xgf.unwrap_or(f64::NAN));
                        if let Some(k) = rep.norms.kappa_eigvec {
                            cols[5].push(k);
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            BenchRow {
                n: cfg.n,
                rank_e: cfg.rank_e,
                m: cfg.m,
                r,
                trials: cfg.trials,
                mean_precs: mean(&cols[0]),
                mean_delta_f2: mean(&cols[1]),
                mean_norm_f: mean(&cols[2]),
                mean_norm_g: mean(&cols[3]),
                mean_kappa_xgf: mean(&cols[4]),
                mean_kappa_x: mean(&cols[5]),
                failures,
            }
        })
        .collect()
}

pub const CSV_HEADER: &str = "n,rankE,m,r,trials,mean_precs,mean_deltaF2,mean_normF,mean_normG,mean_kappaXGF,mean_kappaX,failures";

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.n, r.rank_e, r.m, r.r, r.trials, r.mean_precs, r.mean_delta_f2, r.mean_norm_f, r.mean_norm_g, r.mean_kappa_xgf, r.mean_kappa_x, r.failures
        );
    }
    out
}
