//! Refinement of an approximate solution by solving the equality-constrained
//! problem on a guessed active set.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::Stacked;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Activity {
    Inactive,
    Lower,
    Upper,
    /// Row with `l == u`.
    Fixed,
}

const REGULARIZATION: f64 = 1e-9;
const REFINE_STEPS: usize = 8;

/// Solves `[P A'; A 0] [x; y] = [r1; r2]` through a regularized Schur
/// complement on the multipliers.
struct ReducedKkt {
    p_chol: Cholesky<f64, nalgebra::Dyn>,
    s_chol: Cholesky<f64, nalgebra::Dyn>,
    a: DMatrix<f64>,
}

impl ReducedKkt {
    fn new(p: &DMatrix<f64>, a: DMatrix<f64>) -> Option<Self> {
        let n = p.nrows();
        let delta = REGULARIZATION * p.amax().max(1.0);
        let p_chol = Cholesky::new(p + DMatrix::identity(n, n) * delta)?;
        let pinv_at = p_chol.solve(&a.transpose());
        let mut s = &a * pinv_at;
        for i in 0..s.nrows() {
            s[(i, i)] += delta;
        }
        let s_chol = Cholesky::new(s)?;
        Some(Self { p_chol, s_chol, a })
    }

    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let pinv_r1 = self.p_chol.solve(r1);
        let y = self.s_chol.solve(&(&self.a * &pinv_r1 - r2));
        let x = self.p_chol.solve(&(r1 - self.a.tr_mul(&y)));
        (x, y)
    }
}

/// Returns the polished `(x, y)` and its (primal, dual) residuals when the
/// result is optimal within `tol`.
pub(super) fn polish(
    s: &Stacked,
    activity: &[Activity],
    tol: f64,
) -> Option<(DVector<f64>, DVector<f64>, (f64, f64))> {
    let n = s.p.nrows();
    let m = s.a.nrows();
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for (i, act) in activity.iter().enumerate() {
        let b = match act {
            Activity::Inactive => continue,
            Activity::Lower | Activity::Fixed => s.l[i],
            Activity::Upper => s.u[i],
        };
        if !b.is_finite() {
            continue;
        }
        rows.push(i);
        target.push(b);
    }
    let k = rows.len();
    let mut a_act = DMatrix::zeros(k, n);
    for (r, &i) in rows.iter().enumerate() {
        a_act.row_mut(r).copy_from(&s.a.row(i));
    }
    let b = DVector::from_vec(target);
    let kkt = ReducedKkt::new(&s.p, a_act.clone())?;

    let neg_q = -&s.q;
    let (mut x, mut y) = kkt.solve(&neg_q, &b);
    for _ in 0..REFINE_STEPS {
        let r1 = &neg_q - &s.p * &x - a_act.tr_mul(&y);
        let r2 = &b - &a_act * &x;
        if r1.amax().max(r2.amax()) < 1e-14 {
            break;
        }
        let (dx, dy) = kkt.solve(&r1, &r2);
        x += dx;
        y += dy;
    }

    let mut y_full = DVector::zeros(m);
    for (r, &i) in rows.iter().enumerate() {
        y_full[i] = y[r];
    }
    for (r, &i) in rows.iter().enumerate() {
        let wrong_sign = match activity[i] {
            Activity::Lower => y[r] > tol,
            Activity::Upper => y[r] < -tol,
            _ => false,
        };
        if wrong_sign {
            return None;
        }
    }
    let ax = &s.a * &x;
    let mut prim: f64 = 0.0;
    for i in 0..m {
        prim = prim.max(s.l[i] - ax[i]).max(ax[i] - s.u[i]);
    }
    let dual = (&s.p * &x + &s.q + s.a.tr_mul(&y_full)).amax();
    if prim <= tol && dual <= tol && x.iter().all(|v| v.is_finite()) {
        Some((x, y_full, (prim.max(0.0), dual)))
    } else {
        None
    }
}
