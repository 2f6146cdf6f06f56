//! Dual active-set refinement on the exact KKT system.
//!
//! Starting from a working set guessed from ADMM multipliers, the set is
//! first pruned until all multipliers are non-negative. Violated constraints
//! are then added one at a time: the multiplier of the entering constraint
//! grows from zero while the iterate stays optimal on the current working
//! set, and any constraint whose multiplier reaches zero on the way leaves
//! the set. For a strictly convex problem every step raises the objective, so
//! no working set repeats.

use nalgebra::{DMatrix, DVector};

use super::QpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Active {
    Lower(usize),
    Upper(usize),
    Row(usize),
}

pub(crate) struct Refined {
    pub z: DVector<f64>,
    pub bound_multipliers: DVector<f64>,
    pub inequality_multipliers: DVector<f64>,
}

pub(crate) enum Outcome {
    Solved(Refined),
    /// A violated constraint can be neither reached nor traded against the
    /// working set: the feasible set is empty.
    Infeasible,
    /// Numerical trouble or pass budget exhausted.
    Failed,
}

/// Constraint written as `a·z ≤ b`.
fn constraint(p: &QpProblem, c: Active) -> (DVector<f64>, f64) {
    let n = p.n_variables();
    match c {
        Active::Lower(i) => {
            let mut a = DVector::zeros(n);
            a[i] = -1.0;
            (a, -p.lower[i])
        }
        Active::Upper(i) => {
            let mut a = DVector::zeros(n);
            a[i] = 1.0;
            (a, p.upper[i])
        }
        Active::Row(j) => (p.constraint_matrix.row(j).transpose(), p.constraint_bound[j]),
    }
}

/// Factorized KKT system of one working set.
enum System {
    /// Range space for diagonal H: `S = A H⁻¹ Aᵀ`.
    Diagonal {
        hinv: DVector<f64>,
        a: DMatrix<f64>,
        s: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    },
    Full {
        n: usize,
        lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    },
}

impl System {
    fn new(p: &QpProblem, w: &[Active], diag: Option<&DVector<f64>>) -> Option<(Self, DVector<f64>)> {
        let n = p.n_variables();
        let k = w.len();
        let mut a = DMatrix::zeros(k, n);
        let mut b = DVector::zeros(k);
        for (r, c) in w.iter().enumerate() {
            let (row, rhs) = constraint(p, *c);
            a.row_mut(r).copy_from(&row.transpose());
            b[r] = rhs;
        }
        let sys = match diag {
            Some(h) => {
                let hinv = h.map(|v| 1.0 / v);
                let s = if k == 0 {
                    None
                } else {
                    let mut ah = a.clone();
                    for j in 0..n {
                        ah.column_mut(j).scale_mut(hinv[j]);
                    }
                    let s = &ah * a.transpose();
                    let scale = s.diagonal().amax().max(1e-300);
                    let chol = s.cholesky()?;
                    // Reject near-dependent working sets.
                    let l = chol.l_dirty();
                    let min_pivot = (0..k).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
                    if min_pivot < 1e-12 * scale {
                        return None;
                    }
                    Some(chol)
                };
                System::Diagonal { hinv, a, s }
            }
            None => {
                let mut kkt = DMatrix::zeros(n + k, n + k);
                kkt.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
                kkt.view_mut((0, n), (n, k)).copy_from(&a.transpose());
                kkt.view_mut((n, 0), (k, n)).copy_from(&a);
                let lu = kkt.lu();
                if !lu.is_invertible() {
                    return None;
                }
                System::Full { n, lu }
            }
        };
        Some((sys, b))
    }

    /// Minimizer of `½zᵀHz + gᵀz` subject to `A z = b`, with multipliers.
    fn solve(&self, g: &DVector<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let out = match self {
            System::Diagonal { hinv, a, s } => {
                let zf = -g.component_mul(hinv);
                match s {
                    None => (zf, DVector::zeros(0)),
                    Some(chol) => {
                        // z = −H⁻¹(g + Aᵀλ),  S λ = A z_f − b
                        let lambda = chol.solve(&(a * &zf - b));
                        let z = zf - a.tr_mul(&lambda).component_mul(hinv);
                        (z, lambda)
                    }
                }
            }
            System::Full { n, lu } => {
                let k = lu.l().nrows() - n;
                let mut rhs = DVector::zeros(n + k);
                rhs.rows_mut(0, *n).copy_from(&(-g));
                rhs.rows_mut(*n, k).copy_from(b);
                let sol = lu.solve(&rhs)?;
                (sol.rows(0, *n).into_owned(), sol.rows(*n, k).into_owned())
            }
        };
        (out.0.iter().all(|v| v.is_finite()) && out.1.iter().all(|v| v.is_finite())).then_some(out)
    }
}

/// Most violated constraint at `z` by normalized violation, if any exceeds
/// the absolute tolerance.
fn most_violated(p: &QpProblem, z: &DVector<f64>, w: &[Active], tol: f64) -> Option<Active> {
    let n = p.n_variables();
    let mut best = None;
    let mut worst = 0.0;
    for i in 0..n {
        let lo = p.lower[i] - z[i];
        if lo > tol && lo > worst && !w.contains(&Active::Lower(i)) {
            worst = lo;
            best = Some(Active::Lower(i));
        }
        let hi = z[i] - p.upper[i];
        if hi > tol && hi > worst && !w.contains(&Active::Upper(i)) {
            worst = hi;
            best = Some(Active::Upper(i));
        }
    }
    let gz = &p.constraint_matrix * z;
    for j in 0..p.n_inequalities() {
        let v = gz[j] - p.constraint_bound[j];
        if v > tol {
            let norm = p.constraint_matrix.row(j).norm();
            let normalized = v / norm.max(1e-300);
            if normalized > worst && !w.contains(&Active::Row(j)) {
                worst = normalized;
                best = Some(Active::Row(j));
            }
        }
    }
    best
}

pub(crate) fn refine(p: &QpProblem, initial: &[Active], feasibility_tolerance: f64, max_passes: usize) -> Outcome {
    let n = p.n_variables();
    let m = p.n_inequalities();
    let diag = if p.is_diagonal() && (0..n).all(|i| p.hessian[(i, i)] > 0.0) {
        Some(p.hessian.diagonal())
    } else {
        None
    };
    let mut w: Vec<Active> = Vec::new();
    for c in initial {
        if !w.contains(c) && w.len() < n {
            w.push(*c);
        }
    }
    let mut passes = 0;

    // Prune the guess to a dual-feasible working set.
    let (mut z, mut lambda) = loop {
        passes += 1;
        if passes > max_passes {
            return Outcome::Failed;
        }
        let Some((sys, b)) = System::new(p, &w, diag.as_ref()) else {
            if w.pop().is_none() {
                return Outcome::Failed;
            }
            continue;
        };
        let Some((z, lambda)) = sys.solve(&p.linear, &b) else {
            return Outcome::Failed;
        };
        match lambda.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
            Some((r, l)) if *l < 0.0 => {
                w.remove(r);
            }
            _ => break (z, lambda),
        }
    };

    loop {
        let Some(entering) = most_violated(p, &z, &w, feasibility_tolerance) else {
            break;
        };
        let (ap, bp) = constraint(p, entering);
        let mut t = 0.0;
        loop {
            passes += 1;
            if passes > max_passes {
                return Outcome::Failed;
            }
            let Some((sys, b)) = System::new(p, &w, diag.as_ref()) else {
                return Outcome::Failed;
            };
            let g = &p.linear + &ap * t;
            let Some((z0, lambda0)) = sys.solve(&g, &b) else {
                return Outcome::Failed;
            };
            // Raising the entering multiplier by s moves (z, λ) by s·(u, μ).
            let Some((u, mu)) = sys.solve(&ap, &DVector::zeros(w.len())) else {
                return Outcome::Failed;
            };
            let curvature = -ap.dot(&u);
            let violation = ap.dot(&z0) - bp;
            let reach = ap.norm_squared() * diag.as_ref().map_or(1e-12, |h| 1e-12 / h.amax());
            let full = if curvature > reach { violation / curvature } else { f64::INFINITY };
            let mut partial = f64::INFINITY;
            let mut leaving = None;
            for (r, (&l, &d)) in lambda0.iter().zip(mu.iter()).enumerate() {
                let d = -d;
                if d > 0.0 {
                    let s = l.max(0.0) / d;
                    if s < partial {
                        partial = s;
                        leaving = Some(r);
                    }
                }
            }
            if full.is_infinite() && leaving.is_none() {
                return Outcome::Infeasible;
            }
            if full <= partial {
                let s = full.max(0.0);
                t += s;
                z = z0 + &u * s;
                let mut next = lambda0 + &mu * s;
                next.iter_mut().for_each(|l| *l = l.max(0.0));
                w.push(entering);
                lambda = next.push(t);
                break;
            }
            t += partial;
            w.remove(leaving.expect("finite partial step"));
        }
    }

    // Final multipliers from a fresh solve on the converged working set.
    if let Some((sys, b)) = System::new(p, &w, diag.as_ref()) {
        if let Some((zf, lf)) = sys.solve(&p.linear, &b) {
            if lf.iter().all(|l| *l >= -1e-10 * lf.amax().max(1.0)) && p.max_violation(&zf) <= feasibility_tolerance {
                z = zf;
                lambda = lf;
            }
        }
    }
    if p.max_violation(&z) > feasibility_tolerance {
        return Outcome::Failed;
    }
    let mut bound_multipliers = DVector::zeros(n);
    let mut inequality_multipliers = DVector::zeros(m);
    for (c, l) in w.iter().zip(lambda.iter()) {
        let l = l.max(0.0);
        match *c {
            Active::Lower(i) => bound_multipliers[i] -= l,
            Active::Upper(i) => bound_multipliers[i] += l,
            Active::Row(j) => inequality_multipliers[j] = l,
        }
    }
    Outcome::Solved(Refined {
        z,
        bound_multipliers,
        inequality_multipliers,
    })
}
