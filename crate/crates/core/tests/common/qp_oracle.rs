//! Exhaustive active-set enumeration for small QPs, and a random instance generator.

use hydrohybrid::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense Gaussian elimination with partial pivoting. `None` if singular.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-11 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Every constraint as `a·z ≤ b`: upper bounds, lower bounds, then rows of G.
fn all_constraints(p: &QpProblem) -> Vec<(Vec<f64>, f64)> {
    let n = p.n_variables();
    let mut out = Vec::new();
    for i in 0..n {
        if p.upper[i].is_finite() {
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            out.push((a, p.upper[i]));
        }
        if p.lower[i].is_finite() {
            let mut a = vec![0.0; n];
            a[i] = -1.0;
            out.push((a, -p.lower[i]));
        }
    }
    for j in 0..p.n_inequalities() {
        out.push((p.constraint_matrix.row(j).iter().copied().collect(), p.constraint_bound[j]));
    }
    out
}

/// Enumerate active sets by increasing size; the first KKT point is the
/// unique optimum of a strictly convex problem. Gives up with `Err(())` after
/// `budget` candidate sets; `Ok(None)` means no KKT point exists.
///
/// With `W = A H⁻¹ Aᵀ` and `u = −H⁻¹f` precomputed, a candidate set `S` gives
/// `λ_S = W_SS⁻¹ (A_S u − b_S)` and `A z = A u − W_{·S} λ_S`.
pub fn brute_force(p: &QpProblem, budget: usize) -> Result<Option<Vec<f64>>, ()> {
    let cons = all_constraints(p);
    let n = p.n_variables();
    let mc = cons.len();
    let h: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| p.hessian[(i, j)]).collect()).collect();
    let solve_h = |rhs: Vec<f64>| gauss(h.clone(), rhs).expect("H positive definite");
    let u = solve_h(p.linear.iter().map(|f| -f).collect());
    // H⁻¹ a_j for every constraint
    let hinv_a: Vec<Vec<f64>> = cons.iter().map(|(a, _)| solve_h(a.clone())).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let w: Vec<Vec<f64>> = (0..mc).map(|i| (0..mc).map(|j| dot(&cons[i].0, &hinv_a[j])).collect()).collect();
    let au: Vec<f64> = cons.iter().map(|(a, _)| dot(a, &u)).collect();

    let kkt = |set: &[usize]| -> Option<Vec<f64>> {
        let k = set.len();
        let lambda = if k == 0 {
            Vec::new()
        } else {
            let sub = set.iter().map(|&i| set.iter().map(|&j| w[i][j]).collect()).collect();
            gauss(sub, set.iter().map(|&i| au[i] - cons[i].1).collect())?
        };
        if lambda.iter().any(|l| *l < -1e-9) {
            return None;
        }
        for j in 0..mc {
            let az = au[j] - set.iter().zip(&lambda).map(|(&i, l)| w[j][i] * l).sum::<f64>();
            if az > cons[j].1 + 1e-9 * (1.0 + cons[j].1.abs()) {
                return None;
            }
        }
        let mut z = u.clone();
        for (&i, l) in set.iter().zip(&lambda) {
            for r in 0..n {
                z[r] -= hinv_a[i][r] * l;
            }
        }
        Some(z)
    };

    let mut tried = 0;
    for k in 0..=n.min(mc) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            if let Some(z) = kkt(&idx) {
                return Ok(Some(z));
            }
            tried += 1;
            if tried > budget {
                return Err(());
            }
            // next combination in lexicographic order
            let Some(i) = (0..k).rev().find(|&i| idx[i] < mc - k + i) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(None)
}

/// Random feasible instance: diagonal or dense positive definite H, a mix of
/// finite and infinite bounds, and inequalities with random slack at a known
/// feasible point.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
    let hessian = if rng.random_bool(0.5) {
        DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.1..5.0)))
    } else {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        b.tr_mul(&b) + DMatrix::identity(n, n) * 0.1
    };
    let feasible = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let target = &feasible + DVector::from_fn(n, |_, _| rng.random_range(-0.7..0.7));
    let linear = -(&hessian * &target);
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);
    for i in 0..n {
        lower[i] = if rng.random_bool(0.2) { f64::NEG_INFINITY } else { feasible[i] - rng.random_range(0.2..2.0) };
        upper[i] = if rng.random_bool(0.2) { f64::INFINITY } else { feasible[i] + rng.random_range(0.2..2.0) };
    }
    let constraint_matrix = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let constraint_bound = &constraint_matrix * &feasible + DVector::from_fn(m, |_, _| rng.random_range(0.0..1.5));
    QpProblem {
        hessian,
        linear,
        lower,
        upper,
        constraint_matrix,
        constraint_bound,
    }
}
