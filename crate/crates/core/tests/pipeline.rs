use pdsf_core::assign::{complete_x, compute_parametrization, AssignState, BlockKind, StepTrace, Workspace};
use pdsf_core::bench::{config_grid, generate_random_instance, BenchConfig};
use pdsf_core::linalg::{hstack, numerical_rank, orthonormal_null_basis, Mat, RankTol};
use pdsf_core::metrics::{expand_values, extract_poles_from_schur, generalized_eig_oracle, precs_metric, ORACLE_TOL};
use pdsf_core::problem::{PolePair, Problem};
use pdsf_core::{run_pipeline, validate_problem, verify_solution, AssignOptions, Complex64, Order, Solution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn residuals(p: &Problem, sol: &Solution) -> (f64, f64) {
    let ra = ((&p.a + &p.b * &sol.f) * &sol.p - &sol.x * &sol.s).norm();
    let re = ((&p.e + &p.b * &sol.g) * &sol.p - &sol.x * &sol.t).norm();
    (ra, re)
}

fn assert_invariants(p: &Problem, sol: &Solution) {
    let n = p.n();
    let scale = p.a.norm() + p.e.norm() + sol.x.norm();
    let (ra, re) = residuals(p, sol);
    assert!(ra + re <= 1e-10 * scale, "residual {ra:.2e} + {re:.2e}");
    assert!((sol.p.transpose() * &sol.p - Mat::identity(n, n)).norm() <= 1e-12 * n as f64);
    for i in 0..p.infinite_count() {
        assert_eq!(sol.t[(i, i)], 0.0);
    }
}

#[test]
fn standard_system_with_complex_pair() {
    let c = |re, im| Complex64::new(re, im);
    let poles = vec![PolePair::finite(c(-1.0, 0.0)), PolePair::finite(c(-2.0, 0.0)), PolePair::finite(c(-3.0, 1.0))];
    let p = Problem::new(Mat::identity(4, 4), gaussian(4, 4, 1), gaussian(4, 2, 2), poles).unwrap();
    assert!(validate_problem(&p, 1e-10).passed());
    let sol = run_pipeline(&p, &AssignOptions::default()).unwrap();
    assert_invariants(&p, &sol);
    let spec = generalized_eig_oracle(&(&p.a + &p.b * &sol.f), &(&p.e + &p.b * &sol.g), ORACLE_TOL).unwrap();
    assert_eq!(spec.infinite, 0);
    assert!(precs_metric(&p.finite_values(), &spec.finite).value <= -10.0);
}

#[test]
fn one_infinite_one_real_hand_instance() {
    let b = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
    let e = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let pole = vec![PolePair::finite(Complex64::new(-1.0, 0.0))];
    // With A = I the second state is an uncontrollable mode at 1.
    let stuck = Problem::new(e.clone(), Mat::identity(2, 2), b.clone(), pole.clone()).unwrap();
    assert!(!validate_problem(&stuck, 1e-10).passed());
    let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
    let p = Problem::new(e, a, b, pole).unwrap();
    assert!(validate_problem(&p, 1e-10).passed());
    let sol = run_pipeline(&p, &AssignOptions::default()).unwrap();
    let (ra, re) = residuals(&p, &sol);
    assert!(ra + re <= 1e-12);
    let ec = &p.e + &p.b * &sol.g;
    assert_eq!(numerical_rank(&ec, RankTol::Relative(1e-10)).unwrap().rank, 1);
}

#[test]
fn identical_runs_are_bit_identical() {
    let cfg = BenchConfig::new(6, 3, 2, 1, 99, Order::InfFirst).unwrap();
    let p = generate_random_instance(&cfg, 4, 0).unwrap();
    for order in [Order::InfFirst, Order::FinFirst] {
        let opts = AssignOptions { order, ..AssignOptions::default() };
        let (a, b) = (run_pipeline(&p, &opts), run_pipeline(&p, &opts));
        match (a, b) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a.f, b.f);
                assert_eq!(a.g, b.g);
            }
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            _ => panic!("outcome differs between runs"),
        }
    }
}

#[test]
fn generated_instances_pass_validation() {
    let cfg = BenchConfig::new(6, 3, 2, 100, 2024, Order::InfFirst).unwrap();
    for trial in 0..100 {
        let p = generate_random_instance(&cfg, 4, trial).unwrap();
        let v = validate_problem(&p, 1e-10);
        assert!(v.passed(), "trial {trial}: {:?}", v.failures);
        let tol = RankTol::Relative(1e-10);
        assert_eq!(numerical_rank(&p.e, tol).unwrap().rank, 3);
        assert_eq!(numerical_rank(&hstack(&[&p.e, &p.b]), tol).unwrap().rank, 5);
        assert_eq!(p.r(), 4);
    }
}

#[test]
fn random_suite_schur_poles_and_state() {
    for (re, m) in config_grid(6) {
        let cfg = BenchConfig::new(6, re, m, 3, 5, Order::InfFirst).unwrap();
        for &r in cfg.r_values() {
            for trial in 0..3 {
                let p = generate_random_instance(&cfg, r, trial).unwrap();
                let sol = run_pipeline(&p, &AssignOptions { record_trace: true, ..AssignOptions::default() }).unwrap();
                assert_invariants(&p, &sol);
                let (vals, inf) = expand_values(&extract_poles_from_schur(&sol.s, &sol.t, &sol.blocks).unwrap());
                assert_eq!(inf, p.infinite_count());
                assert!(precs_metric(&p.finite_values(), &vals).value <= -8.0);

                // Q2' X reproduces the final Xi.
                let par = compute_parametrization(&p.b, 1e-10).unwrap();
                let ws = Workspace::new(&p.a, &p.e, par.clone());
                let xi = par.q2.transpose() * &sol.x;
                assert!((complete_x(&par, &xi).unwrap() - &sol.x).norm() <= 1e-13 * sol.x.norm());
                assert!((&ws.q2a * &sol.p - &xi * &sol.s).norm() <= 1e-11 * (p.a.norm() + p.e.norm()));
                assert!(matches!(sol.trace.first(), Some(StepTrace::Infinite { .. })));
                assert!(sol.blocks.iter().take_while(|b| b.kind == BlockKind::Infinite).count() == p.infinite_count());
            }
        }
    }
}

#[test]
fn real_step_null_space_dimension() {
    // n = 3, m = 1 with one column already placed: m + j = 2 directions.
    let p = Problem::new(Mat::identity(3, 3), gaussian(3, 3, 7), gaussian(3, 1, 8), vec![PolePair::finite(Complex64::new(-1.0, 0.0)); 3]).unwrap();
    let par = compute_parametrization(&p.b, 1e-10).unwrap();
    let ws = Workspace::new(&p.a, &p.e, par);
    let mut st = AssignState::new(3, ws.k());
    let np = pdsf_core::problem::normalize_pole(&p.poles[0]).unwrap();
    pdsf_core::assign::assign_real_pole(&ws, &mut st, &np).unwrap();
    let tr = pdsf_core::assign::assign_real_pole(&ws, &mut st, &np).unwrap();
    let StepTrace::Real { null_dim, .. } = tr else { panic!("real step") };
    assert_eq!(null_dim, 2);
}

#[test]
fn fin_first_places_infinite_poles_last() {
    let cfg = BenchConfig::new(6, 3, 3, 5, 17, Order::FinFirst).unwrap();
    let mut solved = 0;
    for trial in 0..5 {
        let p = generate_random_instance(&cfg, 4, trial).unwrap();
        let Ok(sol) = run_pipeline(&p, &AssignOptions { order: Order::FinFirst, ..AssignOptions::default() }) else { continue };
        solved += 1;
        assert_invariants_fin_first(&p, &sol);
        let rep = verify_solution(&p, &sol, 1e-10);
        assert!(rep.index_ok, "{:?}", rep.failures);
    }
    assert!(solved > 0);
}

fn assert_invariants_fin_first(p: &Problem, sol: &Solution) {
    let n = p.n();
    let scale = p.a.norm() + p.e.norm() + sol.x.norm();
    let (ra, re) = residuals(p, sol);
    assert!(ra + re <= 1e-10 * scale);
    let inf: Vec<usize> = sol.blocks.iter().filter(|b| b.kind == BlockKind::Infinite).map(|b| b.start).collect();
    assert!(inf.iter().all(|&c| c >= p.r()));
    // T restricted to the infinite columns vanishes.
    for &i in &inf {
        for &j in &inf {
            assert_eq!(sol.t[(i, j)], 0.0);
        }
    }
    assert!((sol.p.transpose() * &sol.p - Mat::identity(n, n)).norm() <= 1e-12 * n as f64);
}

#[test]
fn closed_loop_null_space_matches_infinite_count() {
    let cfg = BenchConfig::new(6, 2, 2, 1, 3, Order::InfFirst).unwrap();
    let p = generate_random_instance(&cfg, 3, 0).unwrap();
    let sol = run_pipeline(&p, &AssignOptions::default()).unwrap();
    let ec = &p.e + &p.b * &sol.g;
    assert_eq!(orthonormal_null_basis(&ec, RankTol::Relative(1e-10)).unwrap().ncols(), p.infinite_count());
}

#[test]
fn oracle_keeps_roots_when_wide_circle_is_noisy() {
    // A noisy degree on the second circle once seeded a root near 1e11 and
    // the third circle then discarded every polished root.
    let cfg = BenchConfig::new(30, 29, 2, 1, 20_240_601, Order::InfFirst).unwrap();
    let p = generate_random_instance(&cfg, 28, 0).unwrap();
    let sol = run_pipeline(&p, &AssignOptions::default()).unwrap();
    let spec = generalized_eig_oracle(&(&p.a + &p.b * &sol.f), &(&p.e + &p.b * &sol.g), ORACLE_TOL).unwrap();
    assert_eq!(spec.infinite, 2);
    assert!(precs_metric(&p.finite_values(), &spec.finite).value <= -6.0);
}
