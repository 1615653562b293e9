//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use occusafe::grid::GridMap;
use occusafe::qp::QuadraticProgram;
use rand::Rng;

/// Random strictly convex QP with finite boxes and up to `max_ineq`
/// general inequalities, feasible by construction.
pub fn random_qp<R: Rng>(rng: &mut R, max_vars: usize, max_ineq: usize) -> QuadraticProgram {
    let n = rng.gen_range(2..=max_vars);
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let hessian = m.transpose() * &m / n as f64 + DMatrix::identity(n, n) * rng.gen_range(0.05..0.5);
    let gradient = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let mut qp = QuadraticProgram::unconstrained(hessian, gradient);
    for i in 0..n {
        qp.lower[i] = -rng.gen_range(0.3..2.0);
        qp.upper[i] = rng.gen_range(0.3..2.0);
    }
    let k = rng.gen_range(0..=max_ineq);
    let inside = DVector::from_fn(n, |i, _| {
        let (lo, hi) = (qp.lower[i], qp.upper[i]);
        lo + (hi - lo) * rng.gen_range(0.2..0.8)
    });
    qp.ineq_matrix = DMatrix::from_fn(k, n, |_, _| rng.gen_range(-1.0..1.0));
    qp.ineq_rhs = &qp.ineq_matrix * &inside + DVector::from_fn(k, |_, _| rng.gen_range(0.0..0.3));
    qp
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w / norm;
    }
    lambda * 1.01
}

/// Augmented Lagrangian on the general inequalities with an inner
/// accelerated projected gradient over the box. Slow but simple.
pub fn first_order_oracle(qp: &QuadraticProgram) -> DVector<f64> {
    assert_eq!(qp.eq_matrix.nrows(), 0, "oracle handles inequalities and boxes only");
    let n = qp.num_vars();
    let g = &qp.ineq_matrix;
    let h = &qp.ineq_rhs;
    let mu = 20.0;
    let lip = largest_eigenvalue(&qp.hessian) + mu * largest_eigenvalue(&(g.transpose() * g));
    let project = |x: &mut DVector<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(qp.lower[i], qp.upper[i]);
        }
    };
    let grad = |x: &DVector<f64>, lam: &DVector<f64>| {
        let shifted = (lam + (g * x - h) * mu).map(|v| v.max(0.0));
        &qp.hessian * x + &qp.gradient + g.transpose() * shifted
    };
    let mut x = DVector::zeros(n);
    project(&mut x);
    let mut lam = DVector::zeros(g.nrows());
    for _outer in 0..400 {
        let mut yk = x.clone();
        let mut t = 1.0f64;
        for _inner in 0..200_000 {
            let mut next = &yk - grad(&yk, &lam) / lip;
            project(&mut next);
            // gradient-mapping norm at the extrapolated point
            let step = (&next - &yk).amax() * lip;
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let momentum = (t - 1.0) / t_next;
            let restart = (&yk - &next).dot(&(&next - &x)) > 0.0;
            if restart {
                yk = next.clone();
                t = 1.0;
            } else {
                yk = &next + (&next - &x) * momentum;
                t = t_next;
            }
            x = next;
            if step < 1e-13 {
                break;
            }
        }
        let new_lam = (&lam + (g * &x - h) * mu).map(|v| v.max(0.0));
        let change = (&new_lam - &lam).amax();
        lam = new_lam;
        if change < 1e-12 {
            break;
        }
    }
    x
}

/// Cells reached by a depth-limited 8-connected BFS through passable cells.
pub fn bfs_dilation(map: &GridMap, seeds: &[usize], depth_limit: usize) -> Vec<usize> {
    let (w, h) = (map.width() as i64, map.height() as i64);
    let mut depth = vec![usize::MAX; map.len()];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if !map.cells()[s].is_blocking() && depth[s] == usize::MAX {
            depth[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(cur) = queue.pop_front() {
        if depth[cur] == depth_limit {
            continue;
        }
        let (c, r) = ((cur as i64) % w, (cur as i64) / w);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nc, nr) = (c + dc, r + dr);
                if nc < 0 || nr < 0 || nc >= w || nr >= h {
                    continue;
                }
                let nb = (nr * w + nc) as usize;
                if depth[nb] == usize::MAX && !map.cells()[nb].is_blocking() {
                    depth[nb] = depth[cur] + 1;
                    queue.push_back(nb);
                }
            }
        }
    }
    (0..map.len()).filter(|&i| depth[i] != usize::MAX).collect()
}
