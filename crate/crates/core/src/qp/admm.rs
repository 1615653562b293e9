//! Operator-splitting iteration on `l <= Ax <= u` with a dense factorized
//! linear system, Ruiz equilibration and adaptive step size.

use nalgebra::{Cholesky, DVector, Dyn};

use super::polish::{polish, Activity};
use super::{
    QpError, QpSettings, QpSolution, QpStatus, QuadraticProgram, Stacked, WarmStart,
};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const EQ_RHO_SCALE: f64 = 1e3;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;

struct Scaling {
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

fn clamp_scale(norm: f64) -> f64 {
    if norm < SCALE_MIN {
        1.0
    } else {
        norm.min(SCALE_MAX)
    }
}

/// Equilibrate the KKT matrix in place and return the applied scaling.
fn ruiz(s: &mut Stacked, iters: usize) -> Scaling {
    let (m, n) = s.a.shape();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    for _ in 0..iters {
        let mut dd = DVector::zeros(n);
        for j in 0..n {
            let norm = s.p.column(j).amax().max(s.a.column(j).amax());
            dd[j] = 1.0 / clamp_scale(norm).sqrt();
        }
        let mut de = DVector::zeros(m);
        for i in 0..m {
            de[i] = 1.0 / clamp_scale(s.a.row(i).amax()).sqrt();
        }
        for j in 0..n {
            for i in 0..n {
                s.p[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                s.a[(i, j)] *= de[i] * dd[j];
            }
        }
        s.q.component_mul_assign(&dd);
        s.l.component_mul_assign(&de);
        s.u.component_mul_assign(&de);
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
    }
    let mut c = 1.0;
    if iters > 0 && n > 0 {
        let mean_col = (0..n).map(|j| s.p.column(j).amax()).sum::<f64>() / n as f64;
        let gamma = 1.0 / clamp_scale(mean_col.max(s.q.amax()));
        s.p *= gamma;
        s.q *= gamma;
        c = gamma;
    }
    Scaling { d, e, c }
}

struct Workspace<'a> {
    s: &'a Stacked,
    settings: &'a QpSettings,
    rho: f64,
    rho_vec: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Workspace<'a> {
    fn new(s: &'a Stacked, settings: &'a QpSettings) -> Self {
        let rho = settings.rho.clamp(RHO_MIN, RHO_MAX);
        let rho_vec = row_rhos(s, rho);
        let chol = factor(s, &rho_vec, settings.sigma);
        Self {
            s,
            settings,
            rho,
            rho_vec,
            chol,
        }
    }

    fn set_rho(&mut self, rho: f64) {
        self.rho = rho.clamp(RHO_MIN, RHO_MAX);
        self.rho_vec = row_rhos(self.s, self.rho);
        self.chol = factor(self.s, &self.rho_vec, self.settings.sigma);
    }
}

fn row_rhos(s: &Stacked, rho: f64) -> DVector<f64> {
    DVector::from_iterator(
        s.l.len(),
        s.l.iter().zip(s.u.iter()).map(|(&l, &u)| {
            if l == f64::NEG_INFINITY && u == f64::INFINITY {
                RHO_MIN
            } else if u - l < 1e-12 {
                (EQ_RHO_SCALE * rho).min(RHO_MAX)
            } else {
                rho
            }
        }),
    )
}

fn factor(s: &Stacked, rho_vec: &DVector<f64>, sigma: f64) -> Cholesky<f64, Dyn> {
    let n = s.p.nrows();
    let mut weighted = s.a.clone();
    for (i, &r) in rho_vec.iter().enumerate() {
        weighted.row_mut(i).scale_mut(r.sqrt());
    }
    let mut k = weighted.tr_mul(&weighted);
    k += &s.p;
    for i in 0..n {
        k[(i, i)] += sigma;
    }
    Cholesky::new(k).expect("P + sigma I + A' R A is positive definite")
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    /// Relative residuals of the scaled problem, for step-size adaptation.
    prim_rel: f64,
    dual_rel: f64,
}

fn residuals(
    s: &Stacked,
    sc: &Scaling,
    settings: &QpSettings,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> Residuals {
    let ax = &s.a * x;
    let px = &s.p * x;
    let aty = s.a.tr_mul(y);
    let mut prim: f64 = 0.0;
    let mut ax_norm: f64 = 0.0;
    let mut z_norm: f64 = 0.0;
    for i in 0..ax.len() {
        let inv = 1.0 / sc.e[i];
        prim = prim.max(((ax[i] - z[i]) * inv).abs());
        ax_norm = ax_norm.max((ax[i] * inv).abs());
        z_norm = z_norm.max((z[i] * inv).abs());
    }
    let mut dual: f64 = 0.0;
    let mut px_norm: f64 = 0.0;
    let mut aty_norm: f64 = 0.0;
    let mut q_norm: f64 = 0.0;
    for j in 0..x.len() {
        let inv = 1.0 / (sc.d[j] * sc.c);
        dual = dual.max(((px[j] + s.q[j] + aty[j]) * inv).abs());
        px_norm = px_norm.max((px[j] * inv).abs());
        aty_norm = aty_norm.max((aty[j] * inv).abs());
        q_norm = q_norm.max((s.q[j] * inv).abs());
    }
    let scaled_prim = (&ax - z).amax();
    let scaled_dual = (&px + &s.q + &aty).amax();
    let prim_den = ax.amax().max(z.amax()).max(1e-30);
    let dual_den = px.amax().max(aty.amax()).max(s.q.amax()).max(1e-30);
    Residuals {
        prim,
        dual,
        eps_prim: settings.eps_abs + settings.eps_rel * ax_norm.max(z_norm),
        eps_dual: settings.eps_abs + settings.eps_rel * px_norm.max(aty_norm).max(q_norm),
        prim_rel: scaled_prim / prim_den,
        dual_rel: scaled_dual / dual_den,
    }
}

/// Farkas certificate test on a dual step `dy` of the scaled problem.
fn primal_infeasible(s: &Stacked, sc: &Scaling, dy: &DVector<f64>, eps: f64) -> bool {
    // unscaled dy_i = e_i * dy_i / c; the positive factor 1/c cancels and
    // u_i * dy_i on the scaled data equals the unscaled product
    let dy_u = dy.component_mul(&sc.e);
    let norm = dy_u.amax();
    if norm < 1e-30 {
        return false;
    }
    let at_dy = s.a.tr_mul(dy);
    let at_dy_u = at_dy.component_div(&sc.d).amax();
    if at_dy_u > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let (l, u, v) = (s.l[i], s.u[i], dy[i]);
        if v > 0.0 {
            if u == f64::INFINITY {
                return false;
            }
            support += u * v;
        } else if v < 0.0 {
            if l == f64::NEG_INFINITY {
                return false;
            }
            support += l * v;
        }
    }
    support < -eps * norm
}

fn activity(s: &Stacked, z: &DVector<f64>, y: &DVector<f64>) -> Vec<Activity> {
    (0..z.len())
        .map(|i| {
            if s.u[i] - s.l[i] < 1e-12 {
                Activity::Fixed
            } else if z[i] - s.l[i] < -y[i] {
                Activity::Lower
            } else if s.u[i] - z[i] < y[i] {
                Activity::Upper
            } else {
                Activity::Inactive
            }
        })
        .collect()
}

/// Solve `qp`, optionally starting from `warm`.
pub fn solve_qp(
    qp: &QuadraticProgram,
    settings: &QpSettings,
    warm: Option<&WarmStart>,
) -> Result<QpSolution, QpError> {
    qp.validate()?;
    let original = qp.stacked();
    let n = qp.num_vars();
    let m = original.a.nrows();
    let mut s = original.clone();
    let sc = ruiz(&mut s, settings.scaling_iters);
    let mut ws = Workspace::new(&s, settings);

    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(m);
    if let Some(w) = warm {
        if let Some(x0) = &w.x {
            if x0.len() == n {
                x = x0.component_div(&sc.d);
            }
        }
        if let Some(d0) = &w.duals {
            if d0.eq.len() == original.eq_rows && d0.ineq.len() == original.ineq_rows && d0.bounds.len() == n {
                y = original.join_duals(d0).component_div(&sc.e) * sc.c;
            }
        }
    }
    let mut z = (&s.a * &x).zip_zip_map(&s.l, &s.u, |v, l, u| v.clamp(l, u));

    let alpha = settings.alpha;
    let sigma = settings.sigma;
    let check_every = settings.check_every.max(1);
    let mut rhs = DVector::zeros(n);
    let mut tmp = DVector::zeros(m);
    let mut last_polish: Option<Vec<Activity>> = None;

    let finish = |x: DVector<f64>, y: DVector<f64>, status, iterations, r: &Residuals, polished| {
        let duals = original.split_duals(&y, n);
        let objective = qp.objective(&x);
        QpSolution {
            x,
            duals,
            status,
            iterations,
            primal_residual: r.prim,
            dual_residual: r.dual,
            polished,
            objective,
        }
    };
    let unscale = |x: &DVector<f64>, y: &DVector<f64>| {
        (
            x.component_mul(&sc.d),
            y.component_mul(&sc.e) / sc.c,
        )
    };

    for iter in 1..=settings.max_iter {
        let check = iter % check_every == 0 || iter == settings.max_iter;
        let y_prev = if check { Some(y.clone()) } else { None };
        // rhs = sigma x - q + A'(rho z - y)
        for i in 0..m {
            tmp[i] = ws.rho_vec[i] * z[i] - y[i];
        }
        rhs.gemv_tr(1.0, &s.a, &tmp, 0.0);
        rhs.axpy(sigma, &x, 1.0);
        rhs -= &s.q;
        ws.chol.solve_mut(&mut rhs);
        let x_tilde = &rhs;
        tmp.gemv(1.0, &s.a, x_tilde, 0.0);
        x.axpy(alpha, x_tilde, 1.0 - alpha);
        for i in 0..m {
            let z_hat = alpha * tmp[i] + (1.0 - alpha) * z[i];
            let z_new = (z_hat + y[i] / ws.rho_vec[i]).clamp(s.l[i], s.u[i]);
            y[i] += ws.rho_vec[i] * (z_hat - z_new);
            z[i] = z_new;
        }

        let Some(y_prev) = y_prev else {
            continue;
        };
        let r = residuals(&s, &sc, settings, &x, &z, &y);
        let converged = r.prim <= r.eps_prim && r.dual <= r.eps_dual;
        let near = r.prim <= 1e3 * r.eps_prim && r.dual <= 1e3 * r.eps_dual;
        if settings.polish && (converged || near) {
            let act = activity(&s, &z, &y);
            if last_polish.as_ref() != Some(&act) {
                if let Some((xp, yp, pr)) = polish(&original, &act, settings.eps_abs) {
                    let r = Residuals {
                        prim: pr.0,
                        dual: pr.1,
                        ..r
                    };
                    return Ok(finish(xp, yp, QpStatus::Solved, iter, &r, true));
                }
                last_polish = Some(act);
            }
        }
        if converged {
            let (xu, yu) = unscale(&x, &y);
            return Ok(finish(xu, yu, QpStatus::Solved, iter, &r, false));
        }
        let dy = &y - &y_prev;
        if primal_infeasible(&s, &sc, &dy, settings.eps_infeasible) {
            let (xu, yu) = unscale(&x, &y);
            return Ok(finish(xu, yu, QpStatus::Infeasible, iter, &r, false));
        }
        if iter == settings.max_iter {
            let (xu, yu) = unscale(&x, &y);
            return Ok(finish(xu, yu, QpStatus::IterationLimit, iter, &r, false));
        }
        let ratio = (r.prim_rel / r.dual_rel.max(1e-30)).sqrt();
        let new_rho = (ws.rho * ratio).clamp(RHO_MIN, RHO_MAX);
        if new_rho > 5.0 * ws.rho || new_rho < 0.2 * ws.rho {
            ws.set_rho(new_rho);
        }
    }

    // only reached when max_iter is 0
    let r = residuals(&s, &sc, settings, &x, &z, &y);
    let (xu, yu) = unscale(&x, &y);
    Ok(finish(xu, yu, QpStatus::IterationLimit, 0, &r, false))
}
