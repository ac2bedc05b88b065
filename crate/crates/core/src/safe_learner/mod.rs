//! Worst-case labelings and the pessimistic semi-supervised learner.
//!
//! For fixed weights the risk difference to the supervised solution is
//!
//! ```text
//! D(w, q) = M(w) + sum_i q_i A_i + (1 - q_i) B_i
//! A_i = phi(x_i^T w) - phi(x_i^T w_sup),   B_i = phi(-x_i^T w) - phi(-x_i^T w_sup)
//! ```
//!
//! where `M` is the gap in regularized supervised risk. `D` is affine in `q`,
//! so its maximum over the box is attained at a vertex.
//!
//! The minimax learner `min_w max_q D` is computed from the equivalent
//! maximin problem `max_q V(q)`, `V(q) = min_w D(w, q)`, by projected ascent.

mod quadratic;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::loss::LossSpec;
use crate::responsibility::{recover_q, ObjectRecovery};
use crate::optim::{self, DescentStatus, OptimError, SolverConfig, Weights};
use crate::risk::{
    risk_difference, supervised_risk, DualState, LabeledDataset, MarginProblem, Responsibilities, RiskConfig,
    RiskError, UnlabeledDataset,
};

pub use quadratic::minimax_fit_quadratic;

/// Largest unlabeled set accepted by [`AdversaryMode::Hard`].
pub const MAX_EXHAUSTIVE: usize = 24;
/// Values below `-IMPROVEMENT_TOL` count as an improvement over supervised.
pub const IMPROVEMENT_TOL: f64 = 1e-8;
/// Duality gaps above this are reported as [`SafeLearnerError::SaddleQuality`].
pub const MAX_DUALITY_GAP: f64 = 1e-4;

#[derive(Debug, Error, Clone)]
pub enum SafeLearnerError {
    #[error("unsupported loss `{0}`: {1}")]
    UnsupportedLoss(String, &'static str),
    #[error("exhaustive adversary needs at most {max} unlabeled objects, got {got}")]
    TooLarge { got: usize, max: usize },
    #[error("saddle point not certified: duality gap {gap:.3e}")]
    SaddleQuality { gap: f64, result: Box<MinimaxResult> },
    #[error("normal matrix is singular: {0}")]
    Rank(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryMode {
    /// Enumerate all `2^U` hard labelings.
    Hard,
    /// Maximize each responsibility independently from the sign of its coefficient.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryResult {
    pub q_star: Responsibilities,
    /// `D(w, q_star)`, evaluated directly.
    pub value: f64,
    pub attained_at_vertex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaxResult {
    pub value: f64,
    pub improved: bool,
    pub duality_gap: f64,
    pub w_semi: Weights,
    pub q_star: Responsibilities,
}

struct Coefficients {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn coefficients(loss: &LossSpec, w: &Weights, w_sup: &Weights, unl: &UnlabeledDataset) -> Coefficients {
    let m = unl.decision_values(w);
    let ms = unl.decision_values(w_sup);
    let a = (0..m.len()).map(|i| loss.value(m[i]) - loss.value(ms[i])).collect();
    let b = (0..m.len()).map(|i| loss.value(-m[i]) - loss.value(-ms[i])).collect();
    Coefficients { a, b }
}

fn check_dims(w: &Weights, w_sup: &Weights, data: &LabeledDataset, unl: &UnlabeledDataset) -> Result<(), RiskError> {
    let d = data.dim();
    if w.len() != d || w_sup.len() != d || unl.dim() != d {
        return Err(RiskError::Dimension(format!(
            "weights {}/{} and datasets {}/{} disagree",
            w.len(),
            w_sup.len(),
            d,
            unl.dim()
        )));
    }
    Ok(())
}

/// `M = R(w) - R(w_sup)` on the labeled data, regularizer included.
pub fn supervised_gap(
    loss: &LossSpec,
    w: &Weights,
    w_sup: &Weights,
    data: &LabeledDataset,
    cfg: &RiskConfig,
) -> Result<f64, RiskError> {
    Ok(supervised_risk(loss, w, data, cfg)? - supervised_risk(loss, w_sup, data, cfg)?)
}

/// Labeling of the unlabeled objects maximizing `D(w, q)`.
pub fn adversary_max(
    loss: &LossSpec,
    w: &Weights,
    w_sup: &Weights,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    cfg: &RiskConfig,
    mode: AdversaryMode,
) -> Result<AdversaryResult, SafeLearnerError> {
    check_dims(w, w_sup, data, unl)?;
    let co = coefficients(loss, w, w_sup, unl);
    let u = co.a.len();
    let q = match mode {
        AdversaryMode::Soft => co
            .a
            .iter()
            .zip(&co.b)
            .map(|(a, b)| if a >= b { 1.0 } else { 0.0 })
            .collect(),
        AdversaryMode::Hard => {
            if u > MAX_EXHAUSTIVE {
                return Err(SafeLearnerError::TooLarge {
                    got: u,
                    max: MAX_EXHAUSTIVE,
                });
            }
            let diff: Vec<f64> = co.a.iter().zip(&co.b).map(|(a, b)| a - b).collect();
            let (mut code, mut sum) = (0u32, 0.0);
            let (mut best_code, mut best) = (0u32, 0.0);
            for k in 1..(1u64 << u) {
                let j = k.trailing_zeros();
                code ^= 1 << j;
                if code & (1 << j) != 0 {
                    sum += diff[j as usize];
                } else {
                    sum -= diff[j as usize];
                }
                if sum > best {
                    best = sum;
                    best_code = code;
                }
            }
            (0..u).map(|i| f64::from((best_code >> i) & 1)).collect()
        }
    };
    let q_star = Responsibilities::from_vec(q)?;
    let value = risk_difference(loss, w, w_sup, data, unl, &q_star, cfg)?;
    Ok(AdversaryResult {
        q_star,
        value,
        attained_at_vertex: true,
    })
}

/// The labeling under which a candidate `w` loses to `w_sup` for a
/// decreasing loss: `q_i = 1` if `A_i >= 0` and `B_i <= 0`, else `0`.
///
/// For decreasing losses every unlabeled term of `D` is then non-negative,
/// so `D(w, q) >= M`; see [`supervised_gap`].
pub fn construct_qnew(
    loss: &LossSpec,
    w: &Weights,
    w_sup: &Weights,
    unl: &UnlabeledDataset,
) -> Result<Responsibilities, SafeLearnerError> {
    if !loss.is_decreasing() {
        return Err(SafeLearnerError::UnsupportedLoss(
            loss.name().to_string(),
            "the labeling is only defined for decreasing losses",
        ));
    }
    if w.len() != unl.dim() || w_sup.len() != unl.dim() {
        return Err(RiskError::Dimension("weights and unlabeled data disagree".into()).into());
    }
    let co = coefficients(loss, w, w_sup, unl);
    let q = co
        .a
        .iter()
        .zip(&co.b)
        .map(|(&a, &b)| if a >= 0.0 && b <= 0.0 { 1.0 } else { 0.0 })
        .collect();
    Ok(Responsibilities::from_vec(q)?)
}

/// Inner solves of the maximin problem, warm-started along the ascent.
struct ValueFunction<'a> {
    loss: &'a LossSpec,
    data: &'a LabeledDataset,
    unl: &'a UnlabeledDataset,
    cfg: &'a RiskConfig,
    solver: &'a SolverConfig,
    w_sup: &'a Weights,
    base_sup: DVector<f64>,
    w: Weights,
    dual: DualState,
}

impl ValueFunction<'_> {
    /// `V(q)`, its gradient, and the inner minimizer.
    fn eval(&mut self, q: &DVector<f64>) -> Result<(f64, DVector<f64>), SafeLearnerError> {
        let q = Responsibilities::new(optim::project_box(q))?;
        let p = MarginProblem::semi(self.loss, self.data, self.unl, &q, self.cfg)?;
        let w = p.fit(&self.w, Some(&mut self.dual), self.solver)?;
        let value = p.value(w.as_vector()) - p.value(self.w_sup.as_vector());
        let m = self.unl.decision_values(&w);
        let grad = DVector::from_fn(m.len(), |i, _| {
            self.loss.value(m[i]) - self.loss.value(-m[i]) - self.base_sup[i]
        });
        self.w = w;
        Ok((value, grad))
    }

    /// `-Hessian of V` at `q` for a smooth loss, given that the last
    /// evaluation was at `q`: `B^T H^{-1} B` with `H` the Hessian of the
    /// semi-supervised risk at `w*(q)` and `b_i = (phi'(a_i) + phi'(-a_i)) x_i`.
    fn curvature(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, SafeLearnerError> {
        let q = Responsibilities::new(optim::project_box(q))?;
        let p = MarginProblem::semi(self.loss, self.data, self.unl, &q, self.cfg)?;
        let d = p.dim();
        let m = &p.z * self.w.as_vector();
        let mut h = DMatrix::identity(d, d) * (2.0 * self.cfg.lambda);
        for k in 0..m.len() {
            if p.c[k] != 0.0 {
                let zk = p.z.row(k).transpose();
                h.ger(p.c[k] * self.loss.second_deriv(m[k]), &zk, &zk, 1.0);
            }
        }
        let a = self.unl.decision_values(&self.w);
        let u = a.len();
        let mut b = DMatrix::zeros(d, u);
        for i in 0..u {
            let scale = self.loss.deriv(a[i]) + self.loss.deriv(-a[i]);
            b.set_column(i, &(self.unl.x().row(i).transpose() * scale));
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| SafeLearnerError::Precondition("semi-supervised Hessian is not positive definite".into()))?;
        let c = chol.l().solve_lower_triangular(&b).expect("Cholesky factor is invertible");
        Ok(c.tr_mul(&c))
    }
}

/// The better of `q = 1/2` and the recovered responsibilities of `w_sup`,
/// clamped to the box.
fn starting_point(vf: &mut ValueFunction, w_sup: &Weights) -> Result<DVector<f64>, SafeLearnerError> {
    let half = DVector::from_element(vf.unl.len(), 0.5);
    let recovered = match recover_q(vf.loss, w_sup, vf.unl) {
        Ok(rec) => DVector::from_iterator(
            rec.objects.len(),
            rec.objects.iter().map(|o| match o.outcome {
                ObjectRecovery::Unique { q } | ObjectRecovery::AnyFeasible { q } => q,
                ObjectRecovery::Infeasible { candidate } => candidate.map_or(0.5, |c| c.clamp(0.0, 1.0)),
            }),
        ),
        Err(_) => return Ok(half),
    };
    let (v_half, _) = vf.eval(&half)?;
    let (v_rec, _) = vf.eval(&recovered)?;
    Ok(if v_rec >= v_half { recovered } else { half })
}

/// Projected Newton ascent on `V` with backtracking.
fn newton_ascent(vf: &mut ValueFunction, q0: DVector<f64>, max_iters: usize) -> Result<DVector<f64>, SafeLearnerError> {
    let u = vf.unl.len();
    let mut q = q0;
    let (mut v, mut g) = vf.eval(&q)?;
    for it in 0..max_iters {
        let m = vf.curvature(&q)?;
        let free: Vec<usize> = (0..u)
            .filter(|&i| !((q[i] <= 0.0 && g[i] <= 0.0) || (q[i] >= 1.0 && g[i] >= 0.0)))
            .collect();
        let mut s = DVector::zeros(u);
        if !free.is_empty() {
            let mf = m.select_rows(&free).select_columns(&free);
            let gf = g.select_rows(&free);
            let qf = q.select_rows(&free);
            let sf = optim::box_qp(&mf, &gf, &-&qf, &qf.map(|x| 1.0 - x), &DVector::zeros(free.len()));
            for (k, &i) in free.iter().enumerate() {
                s[i] = sf[k];
            }
        }
        let slope = g.dot(&s);
        let predicted = slope - 0.5 * s.dot(&(&m * &s));
        if predicted <= 1e-15 * (1.0 + v.abs()) {
            debug!("maximin Newton ascent converged after {it} iterations");
            return Ok(q);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = optim::project_box(&(&q + &s * t));
            let (vc, gc) = vf.eval(&cand)?;
            if vc >= v + 1e-4 * t * slope {
                q = cand;
                v = vc;
                g = gc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            debug!("maximin Newton ascent stalled after {it} iterations (predicted increase {predicted:.3e})");
            return Ok(q);
        }
    }
    debug!("maximin Newton ascent hit its iteration limit");
    Ok(q)
}

/// Pessimistic semi-supervised fit `argmin_w max_q D(w, q)`.
///
/// The value function is maximized from the better of `q = 1/2` and the
/// recovered responsibilities of `w_sup`, by projected Newton steps for
/// smooth losses and projected gradient steps for hinge and absolute. The
/// returned weights are the better, in worst-case difference, of
/// the inner minimizer at the final `q` and `w_sup` itself, so the value is
/// never positive. `duality_gap` is the distance between that worst-case
/// difference and `V` at the final `q`.
pub fn minimax_fit(
    loss: &LossSpec,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    cfg: &RiskConfig,
    solver: &SolverConfig,
) -> Result<MinimaxResult, SafeLearnerError> {
    if cfg.lambda <= 0.0 {
        return Err(SafeLearnerError::Precondition(
            "minimax fit needs lambda > 0 for a unique inner minimizer".into(),
        ));
    }
    solver.validate()?;
    let w_sup = MarginProblem::supervised(loss, data, cfg).fit(&Weights::zeros(data.dim()), None, solver)?;
    let ms = unl.decision_values(&w_sup);
    let base_sup = ms.map(|a| loss.value(a) - loss.value(-a));

    let u = unl.len();
    let mut vf = ValueFunction {
        loss,
        data,
        unl,
        cfg,
        solver,
        w_sup: &w_sup,
        base_sup,
        w: w_sup.clone(),
        dual: DualState::default(),
    };
    let q0 = starting_point(&mut vf, &w_sup)?;
    let q_final = if loss.is_piecewise_linear() {
        let outer = SolverConfig {
            grad_tol: solver.grad_tol,
            max_iters: solver.max_iters.min(2000),
            step_init: 1.0,
        };
        let run = optim::projected_descent::<SafeLearnerError, _>(
            |q| {
                let (v, g) = vf.eval(q)?;
                Ok((-v, -g))
            },
            &q0,
            &DVector::zeros(u),
            &DVector::from_element(u, 1.0),
            &outer,
        )?;
        if run.status != DescentStatus::Converged {
            debug!(
                "maximin ascent ended with {:?} after {} iterations (projected gradient {:.3e})",
                run.status, run.iterations, run.pg_norm
            );
        }
        run.x
    } else {
        newton_ascent(&mut vf, q0, solver.max_iters.min(500))?
    };
    let (maximin, _) = vf.eval(&q_final)?;
    let w_q = vf.w.clone();
    let q_star = Responsibilities::new(optim::project_box(&q_final))?;
    finish(loss, data, unl, cfg, w_sup, w_q, q_star, maximin)
}

/// Picks the better candidate, measures the gap and applies the quality check.
#[allow(clippy::too_many_arguments)]
fn finish(
    loss: &LossSpec,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    cfg: &RiskConfig,
    w_sup: Weights,
    w_q: Weights,
    q_star: Responsibilities,
    maximin: f64,
) -> Result<MinimaxResult, SafeLearnerError> {
    let primal = adversary_max(loss, &w_q, &w_sup, data, unl, cfg, AdversaryMode::Soft)?.value;
    let (w_semi, value) = if primal <= 0.0 { (w_q, primal) } else { (w_sup, 0.0) };
    let duality_gap = (value - maximin).abs();
    let result = MinimaxResult {
        value,
        improved: value < -IMPROVEMENT_TOL,
        duality_gap,
        w_semi,
        q_star,
    };
    if duality_gap > MAX_DUALITY_GAP {
        warn!("minimax duality gap {duality_gap:.3e} exceeds {MAX_DUALITY_GAP:e}");
        return Err(SafeLearnerError::SaddleQuality {
            gap: duality_gap,
            result: Box::new(result),
        });
    }
    Ok(result)
}
