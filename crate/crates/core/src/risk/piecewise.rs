//! Exact minimization for the piecewise-linear losses (hinge, absolute).
//!
//! With `psi(t) = max(t, 0)` (hinge) or `|t|` (absolute) and `t = 1 - z^T w`,
//! each loss term is `max_{alpha in [lo, 1]} alpha * t` (`lo` is 0 or -1), so
//!
//! ```text
//! min_w sum_k c_k psi(1 - z_k^T w) + lambda ||w||^2
//!   = max_alpha sum_k c_k alpha_k - ||sum_k c_k alpha_k z_k||^2 / (4 lambda)
//! ```
//!
//! with `w(alpha) = sum_k c_k alpha_k z_k / (2 lambda)`. A sequence of
//! smoothed problems (Newton, decreasing smoothing) supplies dual estimates.
//! Once the rows sitting on the kink are identified, the primal solution is
//! recovered exactly from a small linear system and certified through the
//! KKT conditions.

use nalgebra::{DMatrix, DVector};

use super::{MarginProblem, RiskError};
use crate::loss::LossKind;
use crate::optim::{OptimError, SolverConfig, Weights};

const KKT_TOL: f64 = 1e-9;
const MU_MIN: f64 = 1e-10;

/// Dual iterate kept between solves of closely related problems.
#[derive(Debug, Clone, Default)]
pub(crate) struct DualState {
    alpha: Vec<f64>,
}

fn bounds(kind: LossKind) -> (f64, f64) {
    match kind {
        LossKind::Hinge => (0.0, 1.0),
        LossKind::Absolute => (-1.0, 1.0),
        _ => unreachable!("not a piecewise-linear loss"),
    }
}

fn primal_from_dual(p: &MarginProblem, alpha: &[f64]) -> DVector<f64> {
    let mut w = DVector::zeros(p.dim());
    for (k, &a) in alpha.iter().enumerate() {
        if p.c[k] != 0.0 && a != 0.0 {
            w += p.z.row(k).transpose() * (p.c[k] * a);
        }
    }
    w / (2.0 * p.lambda)
}

pub(super) fn fit(p: &MarginProblem, state: &mut DualState, solver: &SolverConfig) -> Result<Weights, RiskError> {
    let (lo, hi) = bounds(p.loss.kind());
    let n = p.z.nrows();
    if state.alpha.len() == n {
        for a in state.alpha.iter_mut() {
            *a = a.clamp(lo, hi);
        }
        if let Some(exact) = polish(p, &mut state.alpha, lo, hi) {
            return Ok(Weights::new(exact));
        }
    } else {
        state.alpha = vec![0.0; n];
    }

    let mut w = primal_from_dual(p, &state.alpha);
    let mut budget = solver.max_iters;
    let mut grad_norm = f64::INFINITY;
    let mut mu = 1.0;
    while mu >= MU_MIN {
        let (steps, g) = smoothed_newton(p, &mut w, mu, lo, hi, budget);
        budget = budget.saturating_sub(steps);
        grad_norm = g;
        let m = &p.z * &w;
        for k in 0..n {
            state.alpha[k] = ((1.0 - m[k]) / mu).clamp(lo, hi);
        }
        if let Some(exact) = polish(p, &mut state.alpha, lo, hi) {
            return Ok(Weights::new(exact));
        }
        if budget == 0 {
            break;
        }
        mu *= 0.1;
    }
    Err(OptimError::IterationLimit {
        iterations: solver.max_iters - budget,
        grad_norm,
        best: Weights::new(w),
    }
    .into())
}

/// Minimizes the objective with each `psi` replaced by
/// `max_{alpha in [lo, hi]} alpha t - mu alpha^2 / 2`, a piecewise quadratic,
/// by Newton steps with backtracking. Returns the steps taken and the final
/// gradient norm.
fn smoothed_newton(p: &MarginProblem, w: &mut DVector<f64>, mu: f64, lo: f64, hi: f64, budget: usize) -> (usize, f64) {
    let d = p.dim();
    let value = |w: &DVector<f64>| {
        let m = &p.z * w;
        let mut total = p.lambda * w.norm_squared();
        for k in 0..m.len() {
            if p.c[k] != 0.0 {
                let t = 1.0 - m[k];
                let a = (t / mu).clamp(lo, hi);
                total += p.c[k] * (a * t - 0.5 * mu * a * a);
            }
        }
        total
    };
    let mut fx = value(w);
    let mut gnorm = f64::INFINITY;
    for step in 0..budget {
        let m = &p.z * &*w;
        let mut g = &*w * (2.0 * p.lambda);
        let mut h = DMatrix::identity(d, d) * (2.0 * p.lambda);
        for k in 0..m.len() {
            let ck = p.c[k];
            if ck == 0.0 {
                continue;
            }
            let s = (1.0 - m[k]) / mu;
            let zk = p.z.row(k).transpose();
            g -= &zk * (ck * s.clamp(lo, hi));
            if s > lo && s < hi {
                h.ger(ck / mu, &zk, &zk, 1.0);
            }
        }
        gnorm = g.amax();
        let scale = 1.0 + w.amax() * p.lambda;
        if gnorm <= 1e-14 * scale {
            return (step, gnorm);
        }
        let Some(chol) = h.cholesky() else {
            return (step, gnorm);
        };
        let dir = -chol.solve(&g);
        let slope = g.dot(&dir);
        if -slope <= 1e-15 * (1.0 + fx.abs()) {
            return (step + 1, gnorm);
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &*w + &dir * t;
            let fc = value(&cand);
            if fc <= fx + 1e-4 * t * slope {
                moved = cand != *w;
                *w = cand;
                fx = fc;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return (step + 1, gnorm);
        }
    }
    (budget, gnorm)
}

/// Tries to turn an approximate dual point into the exact primal minimizer.
/// On success the dual state is replaced by the certified multipliers.
fn polish(p: &MarginProblem, alpha: &mut [f64], lo: f64, hi: f64) -> Option<DVector<f64>> {
    let w_cd = primal_from_dual(p, alpha);
    let m = &p.z * &w_cd;
    for tau in [0.0, 1e-8, 1e-6, 1e-4, 1e-3] {
        let kinks: Vec<usize> = (0..alpha.len())
            .filter(|&k| {
                p.c[k] != 0.0 && ((alpha[k] > lo + 1e-12 && alpha[k] < hi - 1e-12) || (m[k] - 1.0).abs() <= tau)
            })
            .collect();
        if let Some((w, a)) = solve_active_set(p, &m, &kinks, lo, hi) {
            alpha.copy_from_slice(&a);
            return Some(w);
        }
    }
    None
}

fn solve_active_set(
    p: &MarginProblem,
    m: &DVector<f64>,
    kinks: &[usize],
    lo: f64,
    hi: f64,
) -> Option<(DVector<f64>, Vec<f64>)> {
    let n = m.len();
    let lam2 = 2.0 * p.lambda;
    let mut in_kink = vec![false; n];
    for &k in kinks {
        in_kink[k] = true;
    }
    let mut alpha: Vec<f64> = (0..n)
        .map(|k| if in_kink[k] || p.c[k] == 0.0 { 0.0 } else if m[k] < 1.0 { hi } else { lo })
        .collect();
    let mut w = primal_from_dual(p, &alpha);

    if !kinks.is_empty() {
        let zk = DMatrix::from_fn(kinks.len(), p.dim(), |i, j| p.z[(kinks[i], j)]);
        let gram = &zk * zk.transpose();
        let rhs = DVector::from_element(kinks.len(), 1.0) - &zk * &w;
        let svd = gram.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max().max(1e-300);
        let beta = svd.solve(&rhs, eps).ok()?;
        w += zk.tr_mul(&beta);
        for (i, &k) in kinks.iter().enumerate() {
            let a = lam2 * beta[i] / p.c[k];
            if a < lo - 1e-8 || a > hi + 1e-8 || !a.is_finite() {
                return None;
            }
            alpha[k] = a.clamp(lo, hi);
        }
    }

    let margins = &p.z * &w;
    for k in 0..n {
        if p.c[k] == 0.0 {
            continue;
        }
        let scale = 1.0 + margins[k].abs();
        let violated = if in_kink[k] {
            (margins[k] - 1.0).abs() > KKT_TOL * scale
        } else {
            (alpha[k] == hi && margins[k] > 1.0 + KKT_TOL * scale)
                || (alpha[k] == lo && margins[k] < 1.0 - KKT_TOL * scale)
        };
        if violated {
            return None;
        }
    }
    Some((w, alpha))
}
