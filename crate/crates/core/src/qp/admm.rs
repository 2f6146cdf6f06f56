use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::polish::{refine, Active, Outcome};
use super::{QpProblem, QpSettings, QpSolution, QpStatus};
use crate::error::QpError;

/// Normalized slack below which an inequality joins the screened set [z units].
const SCREEN_MARGIN: f64 = 0.05;

/// Reusable solver. Between calls it remembers the last active inequalities,
/// which seed the screened constraint set of the next solve.
#[derive(Debug, Clone)]
pub struct QpSolver {
    pub settings: QpSettings,
    last_active: Vec<usize>,
}

/// Inequalities currently handed to ADMM, row-equilibrated.
struct Screened {
    rows: Vec<usize>,
    scale: Vec<f64>,
    g: DMatrix<f64>,
    bound: DVector<f64>,
}

impl Screened {
    fn new(p: &QpProblem, rows: Vec<usize>) -> Self {
        let n = p.n_variables();
        let mut g = DMatrix::zeros(rows.len(), n);
        let mut bound = DVector::zeros(rows.len());
        let mut scale = Vec::with_capacity(rows.len());
        for (r, &j) in rows.iter().enumerate() {
            let row = p.constraint_matrix.row(j);
            let norm = row.amax();
            let d = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            g.row_mut(r).copy_from(&(row * d));
            bound[r] = p.constraint_bound[j] * d;
            scale.push(d);
        }
        Self { rows, scale, g, bound }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self {
            settings,
            last_active: Vec::new(),
        }
    }

    pub fn solve(&mut self, p: &QpProblem, warm_start: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
        p.validate()?;
        let s = self.settings.clone();
        let s = &s;
        if !(s.alpha > 0.0 && s.alpha < 2.0 && s.rho > 0.0 && s.sigma > 0.0 && s.check_interval > 0) {
            return Err(QpError::Malformed("invalid solver settings".into()));
        }
        let n = p.n_variables();
        let m = p.n_inequalities();
        let tol = s.feasibility_tolerance;

        // Zero rows are either vacuous or make the problem infeasible outright.
        for j in 0..m {
            if p.constraint_matrix.row(j).amax() == 0.0 && p.constraint_bound[j] < -tol {
                return Ok(self.finish(p, p.lower.map(|v| if v.is_finite() { v } else { 0.0 }), QpStatus::Infeasible, 0, Vec::new()));
            }
        }

        let candidate = unconstrained_candidate(p);
        if let Some((z, bound_mult)) = &candidate {
            if p.max_violation(z) <= tol {
                self.last_active.clear();
                let objective = p.objective(z);
                return Ok(QpSolution {
                    z: z.clone(),
                    status: QpStatus::Optimal,
                    primal_residual: 0.0,
                    dual_residual: p.stationarity(z, bound_mult, &DVector::zeros(m)),
                    iterations: 0,
                    objective,
                    bound_multipliers: bound_mult.clone(),
                    inequality_multipliers: DVector::zeros(m),
                    merit_history: Vec::new(),
                });
            }
        }

        let start = warm_start
            .filter(|w| w.len() == n)
            .cloned()
            .or_else(|| candidate.as_ref().map(|c| c.0.clone()))
            .unwrap_or_else(|| DVector::zeros(n));
        let start = clamp(&start, p);

        let mut rows: Vec<usize> = self.last_active.iter().copied().filter(|&j| j < m).collect();
        rows.extend(near_active(p, &start, SCREEN_MARGIN));
        rows.sort_unstable();
        rows.dedup();

        let cost_scale = 1.0 / p.hessian.amax().max(p.linear.amax()).max(1.0);
        let hs = &p.hessian * cost_scale;
        let fs = &p.linear * cost_scale;

        let mut x = start;
        let mut iterations = 0;
        let mut merit_history = Vec::new();
        let mut eps_scale = 1.0;
        loop {
            let screened = Screened::new(p, rows.clone());
            let ms = screened.len();
            let total = n + ms;
            let mut z = DVector::zeros(total);
            z.rows_mut(0, n).copy_from(&x);
            z.rows_mut(n, ms).copy_from(&(&screened.g * &x));
            let mut y = DVector::<f64>::zeros(total);
            let lower = {
                let mut l = DVector::from_element(total, f64::NEG_INFINITY);
                l.rows_mut(0, n).copy_from(&p.lower);
                l
            };
            let upper = {
                let mut u = DVector::zeros(total);
                u.rows_mut(0, n).copy_from(&p.upper);
                u.rows_mut(n, ms).copy_from(&screened.bound);
                u
            };
            // Start on the constraint set so (z, y) is consistent with v = z + y/ρ.
            for i in 0..total {
                z[i] = z[i].clamp(lower[i], upper[i]);
            }
            let gtg = screened.g.tr_mul(&screened.g);
            let mut rho = s.rho;
            let mut factor = factorize(&hs, &gtg, s.sigma, rho)
                .ok_or_else(|| QpError::Malformed("ADMM system is not positive definite".into()))?;
            let mut prev_merit = f64::INFINITY;
            if s.record_merit {
                merit_history.push(Vec::new());
            }
            let mut last_polish = 0;
            let mut y_prev = y.clone();
            let mut converged = false;

            while iterations < s.max_iterations {
                iterations += 1;
                y_prev.copy_from(&y);
                let x_old = x.clone();
                let v_old = &z + &y / rho;

                // x̃ = K⁻¹ (σx − f + Aᵀ(ρz − y))
                let w = &z * rho - &y;
                let mut rhs = &x * s.sigma - &fs + w.rows(0, n);
                rhs += screened.g.tr_mul(&w.rows(n, ms));
                factor.solve_mut(&mut rhs);
                let x_tilde = rhs;
                let mut z_tilde = DVector::zeros(total);
                z_tilde.rows_mut(0, n).copy_from(&x_tilde);
                z_tilde.rows_mut(n, ms).copy_from(&(&screened.g * &x_tilde));

                x = &x_tilde * s.alpha + &x * (1.0 - s.alpha);
                let z_relaxed = &z_tilde * s.alpha + &z * (1.0 - s.alpha);
                let mut z_new = &z_relaxed + &y / rho;
                for i in 0..total {
                    z_new[i] = z_new[i].clamp(lower[i], upper[i]);
                }
                y += (&z_relaxed - &z_new) * rho;
                z = z_new;

                // Douglas–Rachford fixed-point residual in the (σ, ρ) metric.
                let v = &z + &y / rho;
                let merit = s.sigma * (&x - &x_old).norm_squared() + rho * (&v - &v_old).norm_squared();
                debug_assert!(
                    merit <= prev_merit * (1.0 + 1e-8) + 1e-20,
                    "ADMM merit increased: {prev_merit} -> {merit}"
                );
                prev_merit = merit;
                if s.record_merit {
                    merit_history.last_mut().expect("epoch started").push(merit);
                }

                if iterations % s.check_interval != 0 {
                    continue;
                }
                let ax = {
                    let mut a = DVector::zeros(total);
                    a.rows_mut(0, n).copy_from(&x);
                    a.rows_mut(n, ms).copy_from(&(&screened.g * &x));
                    a
                };
                let hx = &hs * &x;
                let aty = y.rows(0, n) + screened.g.tr_mul(&y.rows(n, ms));
                let prim = (&ax - &z).amax();
                let dual = (&hx + &fs + &aty).amax();
                let eps_prim = eps_scale * (s.eps_abs + s.eps_rel * ax.amax().max(z.amax()));
                let eps_dual = eps_scale * (s.eps_abs + s.eps_rel * hx.amax().max(aty.amax()).max(fs.amax()));

                if infeasible(&(&y - &y_prev), &screened.g, n, &lower, &upper, s.eps_infeasible) {
                    self.last_active.clear();
                    return Ok(self.finish(p, clamp(&x, p), QpStatus::Infeasible, iterations, merit_history));
                }

                // The first check seeds the active-set refinement; later
                // attempts only follow a failed one.
                if s.polish && (last_polish == 0 || iterations - last_polish >= 100) {
                    last_polish = iterations;
                    let guess = working_set(&x, &y, &screened, p);
                    if let Some(sol) = self.polished(p, &guess, iterations, &merit_history) {
                        return Ok(sol);
                    }
                }
                if prim <= eps_prim && dual <= eps_dual {
                    converged = true;
                    break;
                }
                if s.adaptive_rho && iterations % (5 * s.check_interval) == 0 {
                    let rp = prim / ax.amax().max(z.amax()).max(1e-30);
                    let rd = dual / hx.amax().max(aty.amax()).max(fs.amax()).max(1e-30);
                    let new_rho = (rho * (rp / rd.max(1e-30)).sqrt()).clamp(1e-6, 1e6);
                    if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                        if let Some(f) = factorize(&hs, &gtg, s.sigma, new_rho) {
                            rho = new_rho;
                            factor = f;
                            prev_merit = f64::INFINITY;
                            if s.record_merit {
                                merit_history.push(Vec::new());
                            }
                        }
                    }
                }
            }

            // Inequalities outside the screened set that the iterate violates.
            let missing: Vec<usize> = near_active(p, &x, 0.0)
                .into_iter()
                .filter(|j| !rows.contains(j))
                .collect();
            if !missing.is_empty() && iterations < s.max_iterations {
                rows.extend(missing);
                rows.sort_unstable();
                continue;
            }
            if converged && missing.is_empty() {
                let guess = working_set(&x, &y, &screened, p);
                if s.polish {
                    if let Some(sol) = self.polished(p, &guess, iterations, &merit_history) {
                        return Ok(sol);
                    }
                }
                let sol = self.from_admm(p, &x, &y, &screened, cost_scale, iterations, merit_history.clone());
                if sol.kkt_residual(p) <= 1e-6 && sol.primal_residual <= 1e-8 {
                    self.last_active = active_rows(&sol);
                    return Ok(sol);
                }
                if iterations < s.max_iterations {
                    eps_scale *= 0.1;
                    continue;
                }
            }
            if iterations >= s.max_iterations {
                let mut sol = self.from_admm(p, &x, &y, &screened, cost_scale, iterations, merit_history);
                sol.status = QpStatus::MaxIterations;
                return Ok(sol);
            }
        }
    }

    fn polished(
        &mut self,
        p: &QpProblem,
        guess: &[Active],
        iterations: usize,
        merit_history: &[Vec<f64>],
    ) -> Option<QpSolution> {
        let tol = self.settings.feasibility_tolerance;
        let passes = 4 * (p.n_variables() + p.n_inequalities()) + 50;
        let r = match refine(p, guess, tol, passes) {
            Outcome::Solved(r) => r,
            Outcome::Infeasible => {
                self.last_active.clear();
                let start = p.lower.map(|v| if v.is_finite() { v } else { 0.0 });
                return Some(self.finish(p, start, QpStatus::Infeasible, iterations, merit_history.to_vec()));
            }
            Outcome::Failed => return None,
        };
        let sol = QpSolution {
            objective: p.objective(&r.z),
            primal_residual: p.max_violation(&r.z).max(0.0),
            dual_residual: p.stationarity(&r.z, &r.bound_multipliers, &r.inequality_multipliers),
            z: r.z,
            status: QpStatus::Optimal,
            iterations,
            bound_multipliers: r.bound_multipliers,
            inequality_multipliers: r.inequality_multipliers,
            merit_history: merit_history.to_vec(),
        };
        if sol.kkt_residual(p) > 1e-6 || sol.primal_residual > 1e-8 {
            return None;
        }
        self.last_active = active_rows(&sol);
        Some(sol)
    }

    #[allow(clippy::too_many_arguments)]
    fn from_admm(
        &self,
        p: &QpProblem,
        x: &DVector<f64>,
        y: &DVector<f64>,
        screened: &Screened,
        cost_scale: f64,
        iterations: usize,
        merit_history: Vec<Vec<f64>>,
    ) -> QpSolution {
        let n = p.n_variables();
        let z = clamp(x, p);
        let bound_multipliers = y.rows(0, n).into_owned() / cost_scale;
        let mut inequality_multipliers = DVector::zeros(p.n_inequalities());
        for (r, &j) in screened.rows.iter().enumerate() {
            inequality_multipliers[j] = (y[n + r] * screened.scale[r] / cost_scale).max(0.0);
        }
        QpSolution {
            objective: p.objective(&z),
            primal_residual: p.max_violation(&z).max(0.0),
            dual_residual: p.stationarity(&z, &bound_multipliers, &inequality_multipliers),
            z,
            status: QpStatus::Optimal,
            iterations,
            bound_multipliers,
            inequality_multipliers,
            merit_history,
        }
    }

    fn finish(&self, p: &QpProblem, z: DVector<f64>, status: QpStatus, iterations: usize, merit_history: Vec<Vec<f64>>) -> QpSolution {
        QpSolution {
            objective: p.objective(&z),
            primal_residual: p.max_violation(&z).max(0.0),
            dual_residual: f64::NAN,
            z,
            status,
            iterations,
            bound_multipliers: DVector::zeros(p.n_variables()),
            inequality_multipliers: DVector::zeros(p.n_inequalities()),
            merit_history,
        }
    }
}

fn factorize(h: &DMatrix<f64>, gtg: &DMatrix<f64>, sigma: f64, rho: f64) -> Option<Cholesky<f64, Dyn>> {
    let n = h.nrows();
    let mut k = h + gtg * rho;
    for i in 0..n {
        k[(i, i)] += sigma + rho;
    }
    Cholesky::new(k)
}

fn clamp(z: &DVector<f64>, p: &QpProblem) -> DVector<f64> {
    DVector::from_iterator(z.len(), (0..z.len()).map(|i| z[i].clamp(p.lower[i], p.upper[i])))
}

/// Exact minimizer when the inequalities are ignored and the bounds are
/// either separable (diagonal H) or inactive. Returns the point and its
/// signed bound multipliers.
fn unconstrained_candidate(p: &QpProblem) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.n_variables();
    if p.is_diagonal() {
        if (0..n).any(|i| p.hessian[(i, i)] <= 0.0) {
            return None;
        }
        let mut z = DVector::zeros(n);
        let mut mult = DVector::zeros(n);
        for i in 0..n {
            let h = p.hessian[(i, i)];
            let free = -p.linear[i] / h;
            z[i] = free.clamp(p.lower[i], p.upper[i]);
            if z[i] != free {
                mult[i] = -(h * z[i] + p.linear[i]);
            }
        }
        return Some((z, mult));
    }
    let z = p.hessian.clone().cholesky()?.solve(&(-&p.linear));
    if (0..n).all(|i| z[i] >= p.lower[i] && z[i] <= p.upper[i]) {
        Some((z, DVector::zeros(n)))
    } else {
        None
    }
}

/// Inequalities whose row-normalized slack at `z` is below `margin`.
fn near_active(p: &QpProblem, z: &DVector<f64>, margin: f64) -> Vec<usize> {
    let gz = &p.constraint_matrix * z;
    (0..p.n_inequalities())
        .filter(|&j| {
            let norm = p.constraint_matrix.row(j).amax();
            if norm == 0.0 {
                return false;
            }
            let slack = (p.constraint_bound[j] - gz[j]) / norm;
            if margin == 0.0 {
                slack < -0.0 && gz[j] - p.constraint_bound[j] > 0.0
            } else {
                slack < margin
            }
        })
        .collect()
}

/// Active-set guess from the ADMM multipliers and iterate.
fn working_set(x: &DVector<f64>, y: &DVector<f64>, screened: &Screened, p: &QpProblem) -> Vec<Active> {
    let n = p.n_variables();
    let scale = y.amax().max(1e-300);
    let thresh = 1e-6 * scale;
    let mut set: Vec<(f64, Active)> = Vec::new();
    for i in 0..n {
        if y[i] < -thresh || (x[i] <= p.lower[i] && y[i] <= 0.0 && p.lower[i].is_finite() && y[i] != 0.0) {
            set.push((y[i].abs(), Active::Lower(i)));
        } else if y[i] > thresh {
            set.push((y[i].abs(), Active::Upper(i)));
        }
    }
    for (r, &j) in screened.rows.iter().enumerate() {
        if y[n + r] > thresh {
            set.push((y[n + r], Active::Row(j)));
        }
    }
    set.sort_by(|a, b| b.0.total_cmp(&a.0));
    set.into_iter().map(|(_, c)| c).collect()
}

fn active_rows(sol: &QpSolution) -> Vec<usize> {
    sol.inequality_multipliers
        .iter()
        .enumerate()
        .filter(|(_, l)| **l > 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Primal infeasibility certificate on the multiplier increment `δy`:
/// `‖Aᵀδy‖ ≈ 0` and `uᵀδy⁺ + lᵀδy⁻ < 0`.
fn infeasible(dy: &DVector<f64>, g: &DMatrix<f64>, n: usize, lower: &DVector<f64>, upper: &DVector<f64>, eps: f64) -> bool {
    let norm = dy.amax();
    if norm < 1e-12 {
        return false;
    }
    let ms = g.nrows();
    let aty = dy.rows(0, n) + g.tr_mul(&dy.rows(n, ms));
    if aty.amax() > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let d = dy[i];
        if d > 0.0 {
            if upper[i].is_infinite() {
                if d > eps * norm {
                    return false;
                }
            } else {
                support += upper[i] * d;
            }
        } else if d < 0.0 {
            if lower[i].is_infinite() {
                if -d > eps * norm {
                    return false;
                }
            } else {
                support += lower[i] * d;
            }
        }
    }
    support < -eps * norm
}
