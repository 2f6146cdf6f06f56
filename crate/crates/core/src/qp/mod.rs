//! Dense convex QP: `min ½zᵀHz + fᵀz  s.t.  lb ≤ z ≤ ub,  G·z ≤ g`.
//!
//! The solver is an ADMM operator-splitting method on the stacked constraint
//! matrix `[I; G]` with over-relaxation and occasional penalty rescaling.
//! Candidate active sets read off the ADMM multipliers are then refined by a
//! primal-dual active-set pass on the exact KKT system, so a solution
//! reported optimal satisfies the KKT conditions to round-off.

mod admm;
mod polish;
mod text;

pub use admm::QpSolver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::QpError;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// H, symmetric positive semidefinite.
    pub hessian: DMatrix<f64>,
    /// f
    pub linear: DVector<f64>,
    /// lb
    pub lower: DVector<f64>,
    /// ub
    pub upper: DVector<f64>,
    /// G, one row per inequality.
    pub constraint_matrix: DMatrix<f64>,
    /// g
    pub constraint_bound: DVector<f64>,
}

impl QpProblem {
    pub fn n_variables(&self) -> usize {
        self.linear.len()
    }

    pub fn n_inequalities(&self) -> usize {
        self.constraint_bound.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }

    /// Check dimensions, symmetry, bounds and positive semidefiniteness.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n_variables();
        let m = self.n_inequalities();
        let bad = |m: String| Err(QpError::Malformed(m));
        if n == 0 {
            return bad("no decision variables".into());
        }
        if self.hessian.shape() != (n, n) {
            return bad(format!("H is {:?}, expected ({n}, {n})", self.hessian.shape()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return bad("bound vectors do not match the number of variables".into());
        }
        if self.constraint_matrix.shape() != (m, n) {
            return bad(format!(
                "G is {:?}, expected ({m}, {n})",
                self.constraint_matrix.shape()
            ));
        }
        let finite = |v: &DMatrix<f64>| v.iter().all(|x| x.is_finite());
        if !finite(&self.hessian) || !self.linear.iter().all(|x| x.is_finite()) || !finite(&self.constraint_matrix) {
            return bad("non-finite entries in H, f or G".into());
        }
        if self.constraint_bound.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
            return bad("inequality bounds must be finite or +∞".into());
        }
        for i in 0..n {
            if self.lower[i].is_nan() || self.upper[i].is_nan() || self.lower[i] > self.upper[i] {
                return bad(format!("lb[{i}] = {} exceeds ub[{i}] = {}", self.lower[i], self.upper[i]));
            }
        }
        let scale = self.hessian.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (self.hessian[(i, j)] - self.hessian[(j, i)]).abs() > 1e-12 * scale {
                    return bad(format!("H is not symmetric at ({i}, {j})"));
                }
            }
        }
        if !self.is_diagonal() {
            let min_eig = self.hessian.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 * scale {
                return bad(format!("H has negative eigenvalue {min_eig}"));
            }
        } else if (0..n).any(|i| self.hessian[(i, i)] < 0.0) {
            return bad("H has a negative diagonal entry".into());
        }
        Ok(())
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.n_variables();
        (0..n).all(|j| (0..n).all(|i| i == j || self.hessian[(i, j)] == 0.0))
    }

    /// Largest violation of the bounds and inequalities at `z` (zero if feasible).
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_variables() {
            worst = worst.max(self.lower[i] - z[i]).max(z[i] - self.upper[i]);
        }
        let gz = &self.constraint_matrix * z;
        for j in 0..self.n_inequalities() {
            worst = worst.max(gz[j] - self.constraint_bound[j]);
        }
        worst
    }

    /// Scaled stationarity residual `‖Hz + f + λ_b + Gᵀλ_g‖∞ / max(1, ‖Hz‖, ‖f‖)`.
    pub fn stationarity(&self, z: &DVector<f64>, bound_mult: &DVector<f64>, ineq_mult: &DVector<f64>) -> f64 {
        let hz = &self.hessian * z;
        let gt = self.constraint_matrix.tr_mul(ineq_mult);
        let r = &hz + &self.linear + bound_mult + &gt;
        let scale = 1.0_f64
            .max(hz.amax())
            .max(self.linear.amax())
            .max(gt.amax())
            .max(bound_mult.amax());
        r.amax() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub status: QpStatus,
    /// Largest constraint violation of `z`.
    pub primal_residual: f64,
    /// Scaled stationarity residual.
    pub dual_residual: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Signed bound multipliers: positive on an active upper bound, negative
    /// on an active lower bound.
    pub bound_multipliers: DVector<f64>,
    /// Inequality multipliers, non-negative.
    pub inequality_multipliers: DVector<f64>,
    /// ADMM fixed-point residual per iteration when recording is enabled,
    /// split into epochs of constant penalty and constraint set. Within an
    /// epoch the sequence is non-increasing.
    pub merit_history: Vec<Vec<f64>>,
}

impl QpSolution {
    /// Largest KKT residual: stationarity, primal violation, dual sign and
    /// complementary slackness.
    pub fn kkt_residual(&self, problem: &QpProblem) -> f64 {
        let st = problem.stationarity(&self.z, &self.bound_multipliers, &self.inequality_multipliers);
        let mut worst = st.max(problem.max_violation(&self.z));
        let gz = &problem.constraint_matrix * &self.z;
        for (j, l) in self.inequality_multipliers.iter().enumerate() {
            worst = worst.max(-l);
            let slack = problem.constraint_bound[j] - gz[j];
            if slack.is_finite() {
                worst = worst.max((l * slack).abs() / (1.0 + problem.constraint_bound[j].abs()));
            }
        }
        for (i, l) in self.bound_multipliers.iter().enumerate() {
            let slack = if *l >= 0.0 {
                problem.upper[i] - self.z[i]
            } else {
                self.z[i] - problem.lower[i]
            };
            if slack.is_finite() {
                worst = worst.max((l * slack).abs() / (1.0 + self.z[i].abs()));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpSettings {
    pub max_iterations: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Proximal regularization on the primal update.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    /// Iterations between residual checks.
    pub check_interval: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    /// Largest constraint violation accepted as feasible.
    pub feasibility_tolerance: f64,
    pub record_merit: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            eps_infeasible: 1e-6,
            check_interval: 10,
            adaptive_rho: true,
            polish: true,
            feasibility_tolerance: 1e-9,
            record_merit: false,
        }
    }
}

/// One-shot solve with default settings.
pub fn solve(problem: &QpProblem, warm_start: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
    QpSolver::new(QpSettings::default()).solve(problem, warm_start)
}
