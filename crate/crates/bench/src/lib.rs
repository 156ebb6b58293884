//! Fixtures shared by the criterion benchmarks.

use pdsf_core::assign::Order;
use pdsf_core::bench::{generate_random_instance, BenchConfig};
use pdsf_core::problem::Problem;

/// One seeded random instance with `r` at the midpoint of its admissible
/// range.
pub fn fixture(n: usize, rank_e: usize, m: usize, seed: u64) -> Problem {
    let cfg = BenchConfig::new(n, rank_e, m, 1, seed, Order::InfFirst).expect("valid bench config");
    let rs = cfg.r_values();
    let r = rs[rs.len() / 2];
    generate_random_instance(&cfg, r, 0).expect("instance generation")
}
