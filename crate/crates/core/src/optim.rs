//! Deterministic first-order solvers.
//!
//! Everything here is gradient descent with a Barzilai-Borwein trial step and
//! backtracking on the sufficient-decrease condition, optionally projected
//! onto a box. Problem sizes are desk-scale so no attempt is made at
//! second-order acceleration.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    IterationLimit {
        iterations: usize,
        grad_norm: f64,
        best: Weights,
    },
    #[error("line search stalled after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Stalled {
        iterations: usize,
        grad_norm: f64,
        best: Weights,
    },
    #[error("objective or gradient is not finite at the initial point")]
    NonFinite,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stationarity tolerance on the gradient infinity-norm.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Initial trial step of the first line search.
    pub step_init: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iters: 10_000,
            step_init: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if self.grad_tol <= 0.0 || !self.grad_tol.is_finite() {
            return Err(OptimError::InvalidConfig(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(OptimError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.step_init <= 0.0 || !self.step_init.is_finite() {
            return Err(OptimError::InvalidConfig(format!(
                "step_init must be positive, got {}",
                self.step_init
            )));
        }
        Ok(())
    }
}

/// Coefficients of a linear classifier; the decision value of `x` is `x^T w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(DVector<f64>);

impl Weights {
    pub fn new(w: DVector<f64>) -> Self {
        Self(w)
    }

    pub fn from_vec(w: Vec<f64>) -> Self {
        Self(DVector::from_vec(w))
    }

    pub fn zeros(d: usize) -> Self {
        Self(DVector::zeros(d))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }

    /// Infinity-norm distance to another weight vector.
    pub fn max_abs_diff(&self, other: &Weights) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

impl Deref for Weights {
    type Target = DVector<f64>;

    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl From<DVector<f64>> for Weights {
    fn from(w: DVector<f64>) -> Self {
        Self(w)
    }
}

impl Serialize for Weights {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for Weights {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Vec::<f64>::deserialize(d).map(Weights::from_vec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStatus {
    Converged,
    IterationLimit,
    Stalled,
}

/// Outcome of a (projected) descent run.
#[derive(Debug, Clone)]
pub struct Descent {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    /// Infinity-norm of the projected gradient at `x`.
    pub pg_norm: f64,
    pub iterations: usize,
    pub status: DescentStatus,
}

fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        }),
    )
}

fn clamp_into(x: &mut DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Projected gradient descent on `lo <= x <= hi` (bounds may be infinite).
///
/// `f` returns the objective value and gradient. Components sitting on a bound
/// with an outward-pointing gradient are frozen for that iteration. The run
/// is monotone up to floating-point noise in the objective: once predicted
/// decreases fall below the rounding level, a step is accepted only if it
/// reduces the projected gradient norm.
pub fn projected_descent<E, F>(
    mut f: F,
    init: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<Descent, E>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>), E>,
    E: From<OptimError>,
{
    cfg.validate()?;
    let n = init.len();
    if lo.len() != n || hi.len() != n {
        return Err(OptimError::Dimension(format!(
            "bounds have length {}/{} for a {n}-vector",
            lo.len(),
            hi.len()
        ))
        .into());
    }
    let mut x = init.clone();
    clamp_into(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFinite.into());
    }
    let mut pg = projected_gradient(&x, &g, lo, hi);
    let mut pg_norm = pg.amax();
    let mut t = cfg.step_init;
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;

    for it in 0..cfg.max_iters {
        if pg_norm <= cfg.grad_tol {
            return Ok(Descent {
                x,
                value: fx,
                grad: g,
                pg_norm,
                iterations: it,
                status: DescentStatus::Converged,
            });
        }
        if let Some((xp, gp)) = &prev {
            let s = &x - xp;
            let y = &g - gp;
            let sy = s.dot(&y);
            if sy > 0.0 {
                t = (s.norm_squared() / sy).clamp(1e-16, 1e16);
            }
        }

        let noise = 16.0 * f64::EPSILON * (fx.abs() + 1.0);
        let mut accepted = None;
        for _ in 0..80 {
            let mut xn = &x - &pg * t;
            clamp_into(&mut xn, lo, hi);
            let step = &xn - &x;
            if step.amax() == 0.0 {
                break;
            }
            let (fn_, gn) = f(&xn)?;
            if fn_.is_finite() && gn.iter().all(|v| v.is_finite()) {
                let predicted = g.dot(&step);
                if fn_ <= fx + 1e-4 * predicted {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
                if fn_ <= fx + noise {
                    let pgn = projected_gradient(&xn, &gn, lo, hi);
                    if pgn.norm() < pg.norm() {
                        accepted = Some((xn, fn_, gn));
                        break;
                    }
                }
            }
            t *= 0.5;
        }

        match accepted {
            Some((xn, fn_, gn)) => {
                prev = Some((std::mem::replace(&mut x, xn), std::mem::replace(&mut g, gn)));
                fx = fn_;
                pg = projected_gradient(&x, &g, lo, hi);
                pg_norm = pg.amax();
            }
            None => {
                return Ok(Descent {
                    x,
                    value: fx,
                    grad: g,
                    pg_norm,
                    iterations: it,
                    status: DescentStatus::Stalled,
                });
            }
        }
    }
    let status = if pg_norm <= cfg.grad_tol {
        DescentStatus::Converged
    } else {
        DescentStatus::IterationLimit
    };
    Ok(Descent {
        x,
        value: fx,
        grad: g,
        pg_norm,
        iterations: cfg.max_iters,
        status,
    })
}

/// Unconstrained minimization of a smooth convex objective.
///
/// Returns a point whose gradient infinity-norm is at most `cfg.grad_tol`;
/// otherwise fails with the best iterate attached.
pub fn minimize_convex<F, G>(
    objective: F,
    gradient: G,
    init: &Weights,
    cfg: &SolverConfig,
) -> Result<Weights, OptimError>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = init.len();
    let lo = DVector::from_element(n, f64::NEG_INFINITY);
    let hi = DVector::from_element(n, f64::INFINITY);
    let run = projected_descent::<OptimError, _>(
        |x| Ok((objective(x), gradient(x))),
        init.as_vector(),
        &lo,
        &hi,
        cfg,
    )?;
    into_weights(run)
}

pub(crate) fn into_weights(run: Descent) -> Result<Weights, OptimError> {
    match run.status {
        DescentStatus::Converged => Ok(Weights(run.x)),
        DescentStatus::IterationLimit => Err(OptimError::IterationLimit {
            iterations: run.iterations,
            grad_norm: run.pg_norm,
            best: Weights(run.x),
        }),
        DescentStatus::Stalled => Err(OptimError::Stalled {
            iterations: run.iterations,
            grad_norm: run.pg_norm,
            best: Weights(run.x),
        }),
    }
}

/// Largest coordinate-wise relative error between `gradient` and a centered
/// finite difference of `objective` with step `h`.
///
/// Errors are scaled by `max(|fd_i|, 1e-6 * (1 + max_j |fd_j|))`.
pub fn check_gradient<F, G>(objective: F, gradient: G, point: &Weights, h: f64) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let x = point.as_vector();
    let analytic = gradient(x);
    let mut fd = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let up = objective(&probe);
        probe[i] = xi - h;
        let down = objective(&probe);
        probe[i] = xi;
        fd[i] = (up - down) / (2.0 * h);
    }
    let floor = 1e-6 * (1.0 + fd.amax());
    (0..x.len())
        .map(|i| (analytic[i] - fd[i]).abs() / fd[i].abs().max(floor))
        .fold(0.0, f64::max)
}

/// Clamps every entry to `[0, 1]`.
pub fn project_box(q: &DVector<f64>) -> DVector<f64> {
    q.map(|v| v.clamp(0.0, 1.0))
}

/// `argmin 1/2 x^T M x - b^T x` subject to `lo <= x <= hi` for a symmetric
/// positive semidefinite `M` and finite bounds.
///
/// After a diagonal rescaling to unit curvature, projected gradient steps
/// with exact line search up to the first bound are each followed by an
/// attempt to solve the problem restricted to the free coordinates exactly.
pub fn box_qp(m: &DMatrix<f64>, b: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, init: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let top = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let scale = DVector::from_fn(n, |i, _| {
        let mii = m[(i, i)];
        if mii > 1e-300 * top {
            1.0 / mii.sqrt()
        } else {
            1.0 / top.sqrt()
        }
    });
    let ms = DMatrix::from_fn(n, n, |i, j| scale[i] * m[(i, j)] * scale[j]);
    let bs = b.component_mul(&scale);
    let los = lo.component_div(&scale);
    let his = hi.component_div(&scale);
    let init = init.component_div(&scale);
    let y = box_qp_scaled(&ms, &bs, &los, &his, &init);
    let mut x = y.component_mul(&scale);
    clamp_into(&mut x, lo, hi);
    x
}

fn box_qp_scaled(m: &DMatrix<f64>, b: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, init: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let width = (hi - lo).amax();
    let tol = 1e-13 * (1.0 + m.amax() * width.max(1.0) + b.amax());
    let mut x = init.clone();
    clamp_into(&mut x, lo, hi);
    for _ in 0..10_000 {
        let g = m * &x - b;
        let p = DVector::from_fn(n, |i, _| {
            if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
                0.0
            } else {
                -g[i]
            }
        });
        if p.amax() <= tol {
            break;
        }
        if let Some(exact) = box_qp_polish(m, b, &x, lo, hi, tol) {
            return exact;
        }
        let curvature = p.dot(&(m * &p));
        let mut t = if curvature > 0.0 { p.norm_squared() / curvature } else { f64::INFINITY };
        for i in 0..n {
            if p[i] > 0.0 {
                t = t.min((hi[i] - x[i]) / p[i]);
            } else if p[i] < 0.0 {
                t = t.min((lo[i] - x[i]) / p[i]);
            }
        }
        x += &p * t;
        clamp_into(&mut x, lo, hi);
    }
    box_qp_polish(m, b, &x, lo, hi, tol).unwrap_or(x)
}

fn box_qp_polish(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    tol: f64,
) -> Option<DVector<f64>> {
    let n = x.len();
    let g = m * x - b;
    let free: Vec<usize> = (0..n)
        .filter(|&i| (x[i] > lo[i] && x[i] < hi[i]) || (x[i] <= lo[i] && g[i] < 0.0) || (x[i] >= hi[i] && g[i] > 0.0))
        .collect();
    let mut out = x.clone();
    if !free.is_empty() {
        let mff = DMatrix::from_fn(free.len(), free.len(), |r, c| m[(free[r], free[c])]);
        let mut rhs = DVector::from_fn(free.len(), |r, _| b[free[r]]);
        for j in (0..n).filter(|j| !free.contains(j)) {
            for (r, &i) in free.iter().enumerate() {
                rhs[r] -= m[(i, j)] * x[j];
            }
        }
        let svd = mff.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(1e-300);
        let sol = svd.solve(&rhs, eps).ok()?;
        for (k, &i) in free.iter().enumerate() {
            let slack = 1e-12 * (1.0 + hi[i] - lo[i]);
            if sol[k] < lo[i] - slack || sol[k] > hi[i] + slack || !sol[k].is_finite() {
                return None;
            }
            out[i] = sol[k].clamp(lo[i], hi[i]);
        }
    }
    let g = m * &out - b;
    for i in 0..n {
        let ok = if out[i] <= lo[i] {
            g[i] >= -tol
        } else if out[i] >= hi[i] {
            g[i] <= tol
        } else {
            g[i].abs() <= tol
        };
        if !ok {
            return None;
        }
    }
    Some(out)
}

/// Solution of `min 1/2 ||A x + c||^2` subject to `lo <= x <= hi`.
#[derive(Debug, Clone)]
pub struct BoxLsq {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    pub residual_inf: f64,
    /// A dual lower bound on `1/2 ||A x + c||^2` over the box, evaluated at
    /// the final residual. Positive values certify that no box point solves
    /// `A x + c = 0`.
    pub lower_bound: f64,
}

/// Box-constrained linear least squares by projected gradient followed by
/// an active-set refinement of the free coordinates.
pub fn box_least_squares(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    init: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<BoxLsq, OptimError> {
    let n = a.ncols();
    if a.nrows() != c.len() || lo.len() != n || hi.len() != n || init.len() != n {
        return Err(OptimError::Dimension(format!(
            "box least squares with A {}x{}, c {}, bounds {}/{}, init {}",
            a.nrows(),
            n,
            c.len(),
            lo.len(),
            hi.len(),
            init.len()
        )));
    }
    if n == 0 {
        return Ok(finish_box_lsq(a, c, lo, hi, DVector::zeros(0)));
    }
    let inner = SolverConfig {
        grad_tol: (cfg.grad_tol * 1e-3).max(1e-15),
        ..*cfg
    };
    let run = projected_descent::<OptimError, _>(
        |x| {
            let r = a * x + c;
            Ok((0.5 * r.norm_squared(), a.tr_mul(&r)))
        },
        init,
        lo,
        hi,
        &inner,
    )?;
    let mut x = run.x;
    let mut best = (a * &x + c).norm_squared();

    for _ in 0..8 {
        let free: Vec<usize> = (0..n).filter(|&j| x[j] > lo[j] && x[j] < hi[j]).collect();
        if free.is_empty() {
            break;
        }
        let r = a * &x + c;
        let af = a.select_columns(free.iter());
        let svd = af.clone().svd(true, true);
        let Ok(delta) = svd.solve(&(-&r), 1e-12 * svd.singular_values.max().max(1e-300)) else {
            break;
        };
        let mut cand = x.clone();
        for (k, &j) in free.iter().enumerate() {
            cand[j] += delta[k];
        }
        clamp_into(&mut cand, lo, hi);
        let val = (a * &cand + c).norm_squared();
        if val < best {
            let moved = (&cand - &x).amax();
            best = val;
            x = cand;
            if moved == 0.0 {
                break;
            }
        } else {
            break;
        }
    }
    Ok(finish_box_lsq(a, c, lo, hi, x))
}

fn finish_box_lsq(a: &DMatrix<f64>, c: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, x: DVector<f64>) -> BoxLsq {
    let residual = a * &x + c;
    let g = a.tr_mul(&residual);
    let vertex_min: f64 = (0..x.len()).map(|j| (lo[j] * g[j]).min(hi[j] * g[j])).sum();
    let lower_bound = residual.dot(c) - 0.5 * residual.norm_squared() + vertex_min;
    BoxLsq {
        residual_inf: residual.amax(),
        residual,
        x,
        lower_bound,
    }
}
