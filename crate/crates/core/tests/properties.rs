use pdsf_core::assign::{compute_parametrization, AssignState, Workspace};
use pdsf_core::linalg::{kappa_fro, numerical_rank, orthonormal_null_basis, qr_decompose, svd, sym_eig, Mat, RankTol};
use pdsf_core::metrics::{generalized_eig_oracle, precs_metric, ORACLE_TOL};
use pdsf_core::problem::{normalize_pole, parse_problem, write_problem, PoleCase, PolePair, Problem};
use pdsf_core::{validate_problem, Complex64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn low_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> Mat {
    gaussian(rows, rank, seed) * gaussian(rank, cols, seed ^ 0x9e37_79b9)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn qr_thousand_seeded_matrices() {
    for seed in 0..1000u64 {
        let rows = 1 + (seed % 7) as usize;
        let cols = 1 + (seed / 7 % 7) as usize;
        let m = gaussian(rows, cols, seed);
        let (q, r) = qr_decompose(&m).unwrap();
        assert!((q.transpose() * &q - Mat::identity(rows, rows)).norm() <= 1e-13 * rows as f64, "seed {seed}");
        assert!((&m - &q * &r).norm() <= 1e-12 * m.norm(), "seed {seed}");
        for i in 0..rows.min(cols) {
            assert!(r[(i, i)] >= 0.0);
        }
    }
}

#[test]
fn svd_reconstructs_rank_deficient_products() {
    for seed in 0..2000u64 {
        let rows = 2 + (seed % 9) as usize;
        let cols = 2 + (seed / 9 % 9) as usize;
        let rank = 1 + (seed as usize) % rows.min(cols);
        let m = low_rank(rows, cols, rank, seed);
        let d = svd(&m).unwrap();
        let mut sigma = Mat::zeros(rows, cols);
        for (i, s) in d.singular_values.iter().enumerate() {
            sigma[(i, i)] = *s;
        }
        assert!((&m - &d.u * sigma * d.v.transpose()).norm() <= 1e-12 * m.norm(), "seed {seed}");
        assert!((d.u.transpose() * &d.u - Mat::identity(rows, rows)).norm() <= 1e-12);
        assert!((d.v.transpose() * &d.v - Mat::identity(cols, cols)).norm() <= 1e-12);
    }
}

fn char_poly_roots_2x2(h: &Mat) -> Vec<f64> {
    let tr = h[(0, 0)] + h[(1, 1)];
    let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    vec![tr / 2.0 + disc, tr / 2.0 - disc]
}

/// Inverse reduction: eigenvalues of `E^-1 A`.
fn inverse_reduction(a: &Mat, e: &Mat) -> Vec<Complex64> {
    let inv = e.clone().try_inverse().unwrap();
    (inv * a).complex_eigenvalues().iter().copied().collect()
}

fn random_problem(seed: u64, n: usize, m: usize) -> Problem {
    let a = gaussian(n, n, seed);
    let e = gaussian(n, n, seed + 1);
    let b = gaussian(n, m, seed + 2);
    let mut poles = Vec::new();
    let (mut k, mut r) = (0.0, 0);
    while r + 2 <= n {
        k += 1.0;
        poles.push(PolePair::new(c(1.0, 0.0), c(-k, k / 3.0)).unwrap());
        r += 2;
    }
    if r < n {
        poles.push(PolePair::new(c(2.0, 0.0), c(-0.5, 0.0)).unwrap());
    }
    Problem::new(e, a, b, poles).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn null_basis_and_rank_partition_columns(rows in 1usize..7, cols in 1usize..7, rank_seed in 0usize..7, seed in any::<u64>()) {
        let rank = rank_seed.min(rows.min(cols));
        let m = if rank == 0 { Mat::zeros(rows, cols) } else { low_rank(rows, cols, rank, seed) };
        let tol = RankTol::Relative(1e-10);
        let z = orthonormal_null_basis(&m, tol).unwrap();
        let rk = numerical_rank(&m, tol).unwrap().rank;
        prop_assert_eq!(z.ncols() + rk, cols);
        prop_assert_eq!(rk, rank);
        prop_assert!((&m * &z).norm() <= 1e-12 * m.norm().max(1.0));
        prop_assert!((z.transpose() * &z - Mat::identity(z.ncols(), z.ncols())).norm() <= 1e-12);
    }

    #[test]
    fn sym_eig_matches_quadratic_roots(a in -5.0f64..5.0, b in -5.0f64..5.0, d in -5.0f64..5.0) {
        let h = Mat::from_row_slice(2, 2, &[a, b, b, d]);
        let (vals, vecs) = sym_eig(&h).unwrap();
        let want = char_poly_roots_2x2(&h);
        for (x, y) in vals.iter().zip(&want) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
        prop_assert!((&h * &vecs - &vecs * Mat::from_diagonal(&vals.clone().into())).norm() <= 1e-12 * h.norm().max(1.0));
    }

    #[test]
    fn normalized_real_pole_keeps_ratio(al in -10.0f64..10.0, be in -10.0f64..10.0) {
        prop_assume!(al.abs() > 1e-3 || be.abs() > 1e-3);
        let np = normalize_pole(&PolePair::new(c(al, 0.0), c(be, 0.0)).unwrap()).unwrap();
        prop_assert!((np.eps1.norm_sqr() + np.eps2.norm_sqr() - 1.0).abs() <= 1e-15);
        // eps1 / eps2 = alpha / beta, compared cross-multiplied.
        let lhs = np.eps1.re * be;
        let rhs = np.eps2.re * al;
        prop_assert!((lhs - rhs).abs() <= 1e-15 * (lhs.abs() + rhs.abs()).max(1e-300) * 4.0);
    }

    #[test]
    fn complex_case_recovers_ratio(br in -10.0f64..10.0, bi in 0.1f64..10.0, ar in -10.0f64..10.0, ai in -10.0f64..10.0) {
        prop_assume!(ar.hypot(ai) > 1e-2);
        let pole = PolePair::new(c(ar, ai), c(br, bi)).unwrap();
        let (alpha, beta) = (pole.alpha, pole.beta);
        let np = normalize_pole(&pole).unwrap();
        let lambda = pole.value().unwrap();
        match np.case {
            PoleCase::ComplexAlphaDominant => {
                prop_assert!((c(np.sigma, np.tau) - beta / alpha).norm() <= 1e-14 * (beta / alpha).norm().max(1.0));
            }
            PoleCase::ComplexBetaDominant => {
                prop_assert!((c(np.sigma, np.tau) - alpha / beta).norm() <= 1e-14 * (alpha / beta).norm().max(1.0));
            }
            _ => prop_assert!(lambda.im.abs() <= 1e-12 * lambda.norm()),
        }
    }

    #[test]
    fn problem_text_round_trips(seed in any::<u64>(), n in 2usize..6, m in 1usize..3) {
        let p = random_problem(seed, n, m.min(n));
        let text = write_problem(&p);
        let q = parse_problem(&text).unwrap();
        prop_assert_eq!(&p, &q);
        prop_assert_eq!(write_problem(&q), text);
    }

    #[test]
    fn validation_depends_on_tol_only_through_ranks(seed in any::<u64>(), n in 3usize..6) {
        let p = random_problem(seed, n, 2);
        let loose = validate_problem(&p, 1e-10);
        let tight = validate_problem(&p, 1e-12);
        // Generic instances have well separated singular values, so both
        // tolerances make the same rank decisions and the same verdict.
        prop_assert_eq!(loose.q, tight.q);
        prop_assert_eq!(loose.rank_b, tight.rank_b);
        prop_assert_eq!(loose.failures, tight.failures);
    }

    #[test]
    fn precs_is_permutation_invariant(vals in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..7), shift in 0usize..7, noise in 1e-12f64..1e-6) {
        let req: Vec<Complex64> = vals.iter().map(|&(a, b)| c(a, b)).collect();
        let got: Vec<Complex64> = req.iter().enumerate().map(|(i, z)| z + c(noise * (i as f64 + 1.0), 0.0)).collect();
        let base = precs_metric(&req, &got);
        let mut rot = got.clone();
        rot.rotate_left(shift % got.len());
        let mut rev = req.clone();
        rev.reverse();
        prop_assert_eq!(precs_metric(&req, &rot).value, base.value);
        prop_assert_eq!(precs_metric(&rev, &got).value, base.value);
    }

    #[test]
    fn kappa_at_least_dimension(n in 1usize..8, seed in any::<u64>()) {
        let x = gaussian(n, n, seed);
        prop_assume!(numerical_rank(&x, RankTol::Relative(1e-8)).unwrap().rank == n);
        prop_assert!(kappa_fro(&x).unwrap() >= n as f64 * (1.0 - 1e-12));
    }
}

#[test]
fn oracle_matches_inverse_reduction() {
    let mut checked = 0;
    for seed in 0..200u64 {
        let n = 1 + (seed % 5) as usize;
        let a = gaussian(n, n, 3 * seed);
        let e = gaussian(n, n, 3 * seed + 1);
        let want = inverse_reduction(&a, &e);
        if want.iter().any(|z| z.norm() > 1e6) {
            continue;
        }
        let spec = generalized_eig_oracle(&a, &e, ORACLE_TOL).unwrap();
        assert_eq!(spec.infinite, 0, "seed {seed}");
        let pr = precs_metric(&want, &spec.finite);
        assert!(!pr.mismatch);
        for w in &want {
            let best = spec.finite.iter().map(|z| (z - w).norm()).fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-8 * w.norm().max(1.0), "seed {seed}: {w} off by {best}");
        }
        checked += 1;
    }
    assert!(checked >= 190, "only {checked} well-conditioned pencils");
}

#[test]
fn oracle_counts_infinite_on_diagonal_pencils() {
    for seed in 0..50u64 {
        let n = 2 + (seed % 4) as usize;
        let rank = 1 + (seed as usize) % n;
        let mut e = Mat::zeros(n, n);
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 1.0 + i as f64;
            if i < rank {
                e[(i, i)] = 0.5 + i as f64;
            }
        }
        // Orthogonal equivalence keeps the spectrum but hides the structure.
        let (q, _) = qr_decompose(&gaussian(n, n, seed)).unwrap();
        let (z, _) = qr_decompose(&gaussian(n, n, seed + 100)).unwrap();
        let spec = generalized_eig_oracle(&(&q * &a * &z), &(&q * &e * &z), ORACLE_TOL).unwrap();
        assert_eq!(spec.infinite, n - rank, "seed {seed}");
    }
}

#[test]
fn state_invariants_hold_after_every_append() {
    use pdsf_core::assign::{assign_complex_pair, assign_infinite_block, assign_real_pole};
    use pdsf_core::bench::{generate_random_instance, BenchConfig};
    use pdsf_core::Order;
    for trial in 0..10 {
        let cfg = BenchConfig::new(6, 3, 2, 10, 11, Order::InfFirst).unwrap();
        let p = generate_random_instance(&cfg, 4, trial).unwrap();
        let par = compute_parametrization(&p.b, 1e-10).unwrap();
        let ws = Workspace::new(&p.a, &p.e, par);
        let mut st = AssignState::new(ws.n(), ws.k());
        let scale = p.a.norm() + p.e.norm();
        let check = |st: &AssignState| {
            let j = st.j();
            let pm = st.p();
            assert!((pm.transpose() * &pm - Mat::identity(j, j)).norm() <= 1e-11 * scale);
            assert!((&ws.q2a * &pm - st.xi() * st.s()).norm() <= 1e-11 * scale);
            assert!((&ws.q2e * &pm - st.xi() * st.t()).norm() <= 1e-11 * scale);
        };
        assign_infinite_block(&ws, &mut st, p.infinite_count(), 1e-10).unwrap();
        check(&st);
        // S above the infinite diagonal is exactly zero.
        let s = st.s();
        for col in 0..st.j() {
            for row in 0..col {
                assert_eq!(s[(row, col)], 0.0);
            }
        }
        for pole in p.finite_poles() {
            let np = normalize_pole(pole).unwrap();
            if np.is_complex() {
                assign_complex_pair(&ws, &mut st, &np).unwrap();
            } else {
                assign_real_pole(&ws, &mut st, &np).unwrap();
            }
            check(&st);
        }
        assert_eq!(st.j(), 6);
    }
}
