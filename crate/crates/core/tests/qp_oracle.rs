//! QP solver against an exhaustive active-set enumeration.

mod common;

use common::qp_oracle::{brute_force, random_problem};
use hydrohybrid::qp::{solve, QpProblem, QpSettings, QpSolver, QpStatus};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_active_set_enumeration_on_500_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    while checked < 500 {
        let n = rng.random_range(1..=12);
        let m = rng.random_range(0..=24);
        let p = random_problem(&mut rng, n, m);
        // The oracle cost grows combinatorially with the optimal active-set
        // size; instances it cannot settle within the budget are redrawn.
        let Ok(oracle) = brute_force(&p, 2_000_000) else {
            skipped += 1;
            continue;
        };
        let oracle = oracle.expect("feasible by construction");
        let sol = solve(&p, None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "instance {checked} (n={n}, m={m})");
        let expected = p.objective(&DVector::from_vec(oracle));
        let err = (sol.objective - expected).abs() / expected.abs().max(1.0);
        worst = worst.max(err);
        assert!(err <= 1e-6, "instance {checked}: {} vs {expected}", sol.objective);
        assert!(sol.kkt_residual(&p) <= 1e-6);
        checked += 1;
    }
    println!("worst relative objective error {worst:e}, {skipped} instances redrawn");
    assert!(skipped <= 25, "oracle budget exhausted on {skipped} instances");
}

#[test]
fn detects_infeasibility() {
    // z₀ ≤ 0.5 from the box, z₀ + z₁ ≥ 2 with z₁ ≤ 1.
    let p = QpProblem {
        hessian: DMatrix::identity(2, 2),
        linear: DVector::zeros(2),
        lower: DVector::from_element(2, -1.0),
        upper: DVector::from_column_slice(&[0.5, 1.0]),
        constraint_matrix: DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]),
        constraint_bound: DVector::from_column_slice(&[-2.0]),
    };
    assert_eq!(solve(&p, None).unwrap().status, QpStatus::Infeasible);

    // Two contradictory inequalities with free variables.
    let p = QpProblem {
        hessian: DMatrix::from_diagonal_element(3, 3, 2.0),
        linear: DVector::from_column_slice(&[1.0, -1.0, 0.0]),
        lower: DVector::from_element(3, f64::NEG_INFINITY),
        upper: DVector::from_element(3, f64::INFINITY),
        constraint_matrix: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, -1.0, -1.0, -2.0, 1.0]),
        constraint_bound: DVector::from_column_slice(&[1.0, -3.0]),
    };
    assert_eq!(solve(&p, None).unwrap().status, QpStatus::Infeasible);
}

#[test]
fn deterministic_for_identical_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = random_problem(&mut rng, 10, 20);
    let a = solve(&p, None).unwrap();
    let b = solve(&p, None).unwrap();
    assert_eq!(a, b);
}

fn instance() -> impl Strategy<Value = QpProblem> {
    (any::<u64>(), 1usize..=10, 0usize..=20).prop_map(|(seed, n, m)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_problem(&mut rng, n, m)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn optimal_output_is_feasible(p in instance()) {
        let s = solve(&p, None).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        let gz = &p.constraint_matrix * &s.z;
        for j in 0..p.n_inequalities() {
            prop_assert!(gz[j] <= p.constraint_bound[j] + 1e-8);
        }
        for i in 0..p.n_variables() {
            prop_assert!(s.z[i] >= p.lower[i] - 1e-10 && s.z[i] <= p.upper[i] + 1e-10);
        }
    }

    #[test]
    fn warm_and_cold_starts_agree(p in instance(), seed in any::<u64>()) {
        let cold = solve(&p, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let warm_point = DVector::from_fn(p.n_variables(), |_, _| rng.random_range(-2.0..2.0));
        let warm = solve(&p, Some(&warm_point)).unwrap();
        let from_solution = solve(&p, Some(&cold.z)).unwrap();
        prop_assert!((&cold.z - &warm.z).amax() <= 1e-6);
        prop_assert!((&cold.z - &from_solution.z).amax() <= 1e-6);
    }

    #[test]
    fn merit_is_non_increasing(p in instance()) {
        let settings = QpSettings { adaptive_rho: false, polish: false, record_merit: true, ..QpSettings::default() };
        let s = QpSolver::new(settings).solve(&p, None).unwrap();
        prop_assert_eq!(s.iterations > 0, !s.merit_history.is_empty());
        for epoch in &s.merit_history {
            for w in epoch.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-8) + 1e-20, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn text_dump_round_trips(p in instance()) {
        prop_assert_eq!(QpProblem::from_text(&p.to_text()).unwrap(), p);
    }
}
