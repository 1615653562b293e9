//! Dense convex quadratic programs.
//!
//! ```text
//! minimize    1/2 x' H x + g' x
//! subject to  Aeq x  = beq
//!             Ain x <= bin
//!             lower <= x <= upper
//! ```

mod admm;
mod polish;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admm::solve_qp;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("{what} has dimension {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("hessian is not symmetric")]
    NotSymmetric,
    #[error("hessian is not positive semi-definite")]
    NotConvex,
    #[error("problem data contains NaN")]
    NotANumber,
    #[error("variable {0} has lower bound above upper bound")]
    EmptyBox(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    /// Per-variable bounds; infinite entries are unconstrained.
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QuadraticProgram {
    /// Unconstrained problem with `n` variables.
    pub fn unconstrained(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        Self {
            hessian,
            gradient,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.gradient.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }

    /// Dimension, symmetry and convexity checks.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        let dims = [
            ("hessian rows", n, self.hessian.nrows()),
            ("hessian columns", n, self.hessian.ncols()),
            ("equality matrix columns", n, self.eq_matrix.ncols()),
            ("equality right-hand side", self.eq_matrix.nrows(), self.eq_rhs.len()),
            ("inequality matrix columns", n, self.ineq_matrix.ncols()),
            ("inequality right-hand side", self.ineq_matrix.nrows(), self.ineq_rhs.len()),
            ("lower bounds", n, self.lower.len()),
            ("upper bounds", n, self.upper.len()),
        ];
        for (what, expected, found) in dims {
            if expected != found {
                return Err(QpError::Dimension {
                    what,
                    expected,
                    found,
                });
            }
        }
        let has_nan = |s: &[f64]| s.iter().any(|v| v.is_nan());
        if has_nan(self.hessian.as_slice())
            || has_nan(self.gradient.as_slice())
            || has_nan(self.eq_matrix.as_slice())
            || has_nan(self.eq_rhs.as_slice())
            || has_nan(self.ineq_matrix.as_slice())
            || has_nan(self.ineq_rhs.as_slice())
            || has_nan(self.lower.as_slice())
            || has_nan(self.upper.as_slice())
        {
            return Err(QpError::NotANumber);
        }
        for i in 0..n {
            if self.lower[i] > self.upper[i] {
                return Err(QpError::EmptyBox(i));
            }
        }
        let scale = self.hessian.amax().max(1.0);
        if (&self.hessian - self.hessian.transpose()).amax() > 1e-12 * scale {
            return Err(QpError::NotSymmetric);
        }
        let shifted = &self.hessian + DMatrix::identity(n, n) * (1e-10 * scale);
        if n > 0 && Cholesky::new(shifted).is_none() {
            return Err(QpError::NotConvex);
        }
        Ok(())
    }

    /// Stack all constraints as `l <= A x <= u`: equalities, then general
    /// inequalities, then the variables with at least one finite bound.
    fn stacked(&self) -> Stacked {
        let n = self.num_vars();
        let bounded: Vec<usize> = (0..n)
            .filter(|&i| self.lower[i].is_finite() || self.upper[i].is_finite())
            .collect();
        let me = self.eq_matrix.nrows();
        let mi = self.ineq_matrix.nrows();
        let m = me + mi + bounded.len();
        let mut a = DMatrix::zeros(m, n);
        let mut l = DVector::zeros(m);
        let mut u = DVector::zeros(m);
        a.rows_mut(0, me).copy_from(&self.eq_matrix);
        l.rows_mut(0, me).copy_from(&self.eq_rhs);
        u.rows_mut(0, me).copy_from(&self.eq_rhs);
        a.rows_mut(me, mi).copy_from(&self.ineq_matrix);
        l.rows_mut(me, mi).fill(f64::NEG_INFINITY);
        u.rows_mut(me, mi).copy_from(&self.ineq_rhs);
        for (k, &i) in bounded.iter().enumerate() {
            a[(me + mi + k, i)] = 1.0;
            l[me + mi + k] = self.lower[i];
            u[me + mi + k] = self.upper[i];
        }
        Stacked {
            p: self.hessian.clone(),
            q: self.gradient.clone(),
            a,
            l,
            u,
            eq_rows: me,
            ineq_rows: mi,
            bounded,
        }
    }
}

/// The problem as `min 1/2 x'Px + q'x  s.t.  l <= Ax <= u`.
#[derive(Debug, Clone)]
struct Stacked {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    eq_rows: usize,
    ineq_rows: usize,
    bounded: Vec<usize>,
}

impl Stacked {
    fn split_duals(&self, y: &DVector<f64>, n: usize) -> Duals {
        let (me, mi) = (self.eq_rows, self.ineq_rows);
        let mut bounds = DVector::zeros(n);
        for (k, &i) in self.bounded.iter().enumerate() {
            bounds[i] = y[me + mi + k];
        }
        Duals {
            eq: y.rows(0, me).into_owned(),
            ineq: y.rows(me, mi).into_owned(),
            bounds,
        }
    }

    fn join_duals(&self, d: &Duals) -> DVector<f64> {
        let (me, mi) = (self.eq_rows, self.ineq_rows);
        let mut y = DVector::zeros(self.a.nrows());
        y.rows_mut(0, me).copy_from(&d.eq);
        y.rows_mut(me, mi).copy_from(&d.ineq);
        for (k, &i) in self.bounded.iter().enumerate() {
            y[me + mi + k] = d.bounds[i];
        }
        y
    }
}

/// Lagrange multipliers with the convention `H x + g + A' y = 0`:
/// inequality multipliers are non-negative, bound multipliers are negative
/// at an active lower bound and positive at an active upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
    pub bounds: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QpStatus {
    Solved,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    /// Iterations between residual checks.
    pub check_every: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 0.0,
            eps_infeasible: 1e-5,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            check_every: 10,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub duals: Duals,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
    pub objective: f64,
}

/// Optional starting point for the iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub x: Option<DVector<f64>>,
    pub duals: Option<Duals>,
}

/// KKT residuals of a candidate primal-dual pair, all in infinity norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    /// Largest `|multiplier * slack|` plus any multiplier sign violation.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

pub fn kkt_residuals(qp: &QuadraticProgram, x: &DVector<f64>, duals: &Duals) -> KktResiduals {
    let mut grad = &qp.hessian * x + &qp.gradient;
    grad += qp.eq_matrix.tr_mul(&duals.eq);
    grad += qp.ineq_matrix.tr_mul(&duals.ineq);
    grad += &duals.bounds;
    let stationarity = grad.amax();

    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let eq = &qp.eq_matrix * x - &qp.eq_rhs;
    primal = primal.max(eq.amax());
    let ineq = &qp.ineq_matrix * x - &qp.ineq_rhs;
    for (i, &s) in ineq.iter().enumerate() {
        primal = primal.max(s);
        let y = duals.ineq[i];
        comp = comp.max((-y).max(0.0)).max((y * s).abs());
    }
    for i in 0..qp.num_vars() {
        let (lo, hi, y) = (qp.lower[i], qp.upper[i], duals.bounds[i]);
        primal = primal.max(lo - x[i]).max(x[i] - hi);
        let mut c = 0.0f64;
        if y > 0.0 {
            c = if hi.is_finite() { (y * (hi - x[i])).abs() } else { y };
        } else if y < 0.0 {
            c = if lo.is_finite() { (y * (x[i] - lo)).abs() } else { -y };
        }
        comp = comp.max(c);
    }
    KktResiduals {
        stationarity,
        primal,
        complementarity: comp,
    }
}
