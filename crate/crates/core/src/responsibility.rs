//! Responsibilities that leave the supervised solution unchanged.
//!
//! For one unlabeled object with decision value `a = x^T w_sup`, the
//! semi-supervised gradient at `w_sup` stays zero iff
//! `q phi'(a) - (1 - q) phi'(-a) = 0`, i.e.
//! `q = phi'(-a) / (phi'(a) + phi'(-a))`. For decreasing losses that value is
//! always in `[0, 1]`; for the quadratic and absolute losses it may not be,
//! and then unlabeled data forces the semi-supervised solution to move.
//!
//! With several unlabeled objects the per-object answer is only sufficient;
//! [`in_constraint_set`] decides the joint linear system over the box.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::loss::{LossKind, LossSpec, MARGIN};
use crate::optim::{box_least_squares, OptimError, SolverConfig, Weights};
use crate::risk::{LabeledDataset, MarginProblem, Responsibilities, RiskConfig, RiskError, UnlabeledDataset};

/// Optimal residuals at or below this are feasible.
pub const FEASIBLE_TOL: f64 = 1e-8;
/// Optimal residuals above this are infeasible; in between is inconclusive.
pub const INFEASIBLE_TOL: f64 = 1e-6;
/// Decision values this close to a hinge/absolute kink are flagged.
pub const KINK_FLAG_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponsibilityError {
    #[error("loss derivative is undefined at decision value {decision_value} (object {index})")]
    Kink { index: usize, decision_value: f64 },
    #[error("feasibility is inconclusive: optimal residual {residual:.3e} lies in the dead band")]
    Inconclusive { residual: f64 },
    #[error("unsupported loss `{0}` for this condition")]
    UnsupportedLoss(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ObjectRecovery {
    /// The unique responsibility solving the per-object stationarity equation.
    Unique { q: f64 },
    /// Both derivatives vanish; every `q` works and `1/2` is reported.
    AnyFeasible { q: f64 },
    /// The solution falls outside `[0, 1]` (`candidate`) or does not exist.
    Infeasible { candidate: Option<f64> },
}

impl ObjectRecovery {
    pub fn q(&self) -> Option<f64> {
        match *self {
            ObjectRecovery::Unique { q } | ObjectRecovery::AnyFeasible { q } => Some(q),
            ObjectRecovery::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectReport {
    pub index: usize,
    pub decision_value: f64,
    #[serde(flatten)]
    pub outcome: ObjectRecovery,
    /// Decision value within [`KINK_FLAG_TOL`] of a kink; the derivative
    /// convention of the loss was used.
    pub kink_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub objects: Vec<ObjectReport>,
    /// Present iff every object is feasible.
    pub q: Option<Responsibilities>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    GeneralLp,
    QuadDGeqU,
    QuadDLeqUNorm,
    OutsideMarginTheorem,
}

/// Whether the supervised solution can be reproduced by a semi-supervised fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub witness_q: Option<Responsibilities>,
    /// Infinity-norm of the stationarity residual at the best responsibilities.
    pub residual: f64,
    pub rule_applied: Rule,
}

fn one_sided_agree(loss: &LossSpec, a: f64) -> bool {
    let h = 1e-6;
    let left = (loss.value(a) - loss.value(a - h)) / h;
    let right = (loss.value(a + h) - loss.value(a)) / h;
    (left - right).abs() <= 1e-3 * (1.0 + left.abs().max(right.abs()))
}

/// Per-object responsibilities `q = phi'(-a) / (phi'(a) + phi'(-a))`.
pub fn recover_q(
    loss: &LossSpec,
    w_sup: &Weights,
    unl: &UnlabeledDataset,
) -> Result<RecoveryResult, ResponsibilityError> {
    if w_sup.len() != unl.dim() {
        return Err(ResponsibilityError::Dimension(format!(
            "weights of length {} for {} features",
            w_sup.len(),
            unl.dim()
        )));
    }
    let values = unl.decision_values(w_sup);
    let mut objects = Vec::with_capacity(values.len());
    for (index, &a) in values.iter().enumerate() {
        let near_kink = (a.abs() - MARGIN).abs() < KINK_FLAG_TOL;
        let kink_flagged = loss.is_piecewise_linear() && near_kink;
        if kink_flagged {
            warn!("object {index}: decision value {a} is on the margin kink; using the derivative convention");
        }
        if loss.kind() == LossKind::Custom && !(one_sided_agree(loss, a) && one_sided_agree(loss, -a)) {
            return Err(ResponsibilityError::Kink {
                index,
                decision_value: a,
            });
        }
        objects.push(ObjectReport {
            index,
            decision_value: a,
            outcome: responsibility_for(loss, a),
            kink_flagged,
        });
    }
    let q = objects
        .iter()
        .map(|o| o.outcome.q())
        .collect::<Option<Vec<f64>>>()
        .map(|q| Responsibilities::from_vec(q).expect("feasible outcomes lie in [0, 1]"));
    Ok(RecoveryResult { objects, q })
}

fn responsibility_for(loss: &LossSpec, a: f64) -> ObjectRecovery {
    let dp = loss.deriv(a);
    let dm = loss.deriv(-a);
    let den = dp + dm;
    if den == 0.0 || den.abs() <= 1e-12 * (dp.abs() + dm.abs()) {
        return if dm == 0.0 || dm.abs() <= 1e-12 * dp.abs() {
            ObjectRecovery::AnyFeasible { q: 0.5 }
        } else {
            ObjectRecovery::Infeasible { candidate: None }
        };
    }
    let q = dm / den;
    if (0.0..=1.0).contains(&q) {
        ObjectRecovery::Unique { q }
    } else {
        ObjectRecovery::Infeasible { candidate: Some(q) }
    }
}

/// Linear-in-box-variables residual `c + A v` of the semi-supervised
/// stationarity condition at `w_sup`. The first `n_q` variables are the
/// responsibilities; any further ones are subgradient multipliers of
/// labeled rows sitting on a kink.
struct StationaritySystem {
    a: DMatrix<f64>,
    c: DVector<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    n_q: usize,
}

impl StationaritySystem {
    fn new(loss: &LossSpec, w_sup: &Weights, labeled_fixed: DVector<f64>, kink_cols: Vec<DVector<f64>>, unl: &UnlabeledDataset) -> Self {
        let d = unl.dim();
        let u = unl.len();
        let values = unl.decision_values(w_sup);
        let mut c = labeled_fixed;
        let n = u + kink_cols.len();
        let mut a = DMatrix::zeros(d, n);
        for i in 0..u {
            let x = unl.x().row(i).transpose();
            let dp = loss.deriv(values[i]);
            let dm = loss.deriv(-values[i]);
            a.set_column(i, &(&x * (dp + dm)));
            c -= &x * dm;
        }
        let (klo, khi) = loss.kink_subdifferential().unwrap_or((0.0, 0.0));
        for (k, col) in kink_cols.iter().enumerate() {
            a.set_column(u + k, col);
        }
        let lo = DVector::from_fn(n, |i, _| if i < u { 0.0 } else { klo });
        let hi = DVector::from_fn(n, |i, _| if i < u { 1.0 } else { khi });
        Self { a, c, lo, hi, n_q: u }
    }

    /// Unlabeled part only, with the labeled gradient assumed to vanish.
    fn unlabeled_only(loss: &LossSpec, w_sup: &Weights, unl: &UnlabeledDataset) -> Self {
        Self::new(loss, w_sup, DVector::zeros(unl.dim()), Vec::new(), unl)
    }

    fn with_labeled(
        loss: &LossSpec,
        w_sup: &Weights,
        data: &LabeledDataset,
        unl: &UnlabeledDataset,
        cfg: &RiskConfig,
    ) -> Self {
        let p = MarginProblem::supervised(loss, data, cfg);
        let m = &p.z * w_sup.as_vector();
        let mut fixed = w_sup.as_vector() * (2.0 * cfg.lambda);
        let mut kinks = Vec::new();
        for k in 0..m.len() {
            let zk = p.z.row(k).transpose();
            if loss.is_piecewise_linear() && (m[k] - 1.0).abs() <= crate::risk::KINK_TOL {
                kinks.push(zk);
            } else {
                fixed += zk * loss.deriv(m[k]);
            }
        }
        Self::new(loss, w_sup, fixed, kinks, unl)
    }

    fn n_vars(&self) -> usize {
        self.a.ncols()
    }

    /// Best residual with the responsibilities held at `q`, optimizing only
    /// the kink multipliers.
    fn residual_at(&self, q: &DVector<f64>) -> Result<f64, OptimError> {
        let u = self.n_q;
        let aq = self.a.columns(0, u);
        let base = &self.c + aq * q;
        let nk = self.n_vars() - u;
        if nk == 0 {
            return Ok(base.amax());
        }
        let ak = self.a.columns(u, nk).into_owned();
        let lo = self.lo.rows(u, nk).into_owned();
        let hi = self.hi.rows(u, nk).into_owned();
        let init = (&lo + &hi) * 0.5;
        Ok(box_least_squares(&ak, &base, &lo, &hi, &init, &SolverConfig::default())?.residual_inf)
    }

    fn decide(&self, hint: Option<&Responsibilities>, rule: Rule) -> Result<FeasibilityVerdict, ResponsibilityError> {
        if let Some(q) = hint {
            let r = self.residual_at(q.as_vector())?;
            if r <= FEASIBLE_TOL {
                return Ok(FeasibilityVerdict {
                    feasible: true,
                    witness_q: Some(q.clone()),
                    residual: r,
                    rule_applied: rule,
                });
            }
        }
        let (feasible, witness, residual) = self.solve()?;
        if feasible {
            return Ok(FeasibilityVerdict {
                feasible,
                witness_q: witness,
                residual,
                rule_applied: rule,
            });
        }
        Ok(FeasibilityVerdict {
            feasible: false,
            witness_q: None,
            residual,
            rule_applied: rule,
        })
    }

    /// Minimizes the residual over the box and thresholds it.
    fn solve(&self) -> Result<(bool, Option<Responsibilities>, f64), ResponsibilityError> {
        let init = (&self.lo + &self.hi) * 0.5;
        let sol = box_least_squares(&self.a, &self.c, &self.lo, &self.hi, &init, &SolverConfig::default())?;
        let r = sol.residual_inf;
        if r <= FEASIBLE_TOL {
            let q = sol.x.rows(0, self.n_q).map(|v| v.clamp(0.0, 1.0));
            return Ok((true, Some(Responsibilities::new(q)?), r));
        }
        // Infeasibility needs the dual certificate as well as a large residual.
        if r > INFEASIBLE_TOL && sol.lower_bound > 0.0 {
            return Ok((false, None, r));
        }
        Err(ResponsibilityError::Inconclusive { residual: r })
    }
}

/// Decides whether some `q in [0, 1]^U` makes the semi-supervised gradient
/// vanish at `w_sup`, i.e. whether `w_sup` is an attainable semi-supervised
/// solution.
pub fn in_constraint_set(
    loss: &LossSpec,
    w_sup: &Weights,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    cfg: &RiskConfig,
) -> Result<FeasibilityVerdict, ResponsibilityError> {
    if w_sup.len() != data.dim() || unl.dim() != data.dim() {
        return Err(ResponsibilityError::Dimension("weights and datasets disagree".into()));
    }
    let system = StationaritySystem::with_labeled(loss, w_sup, data, unl, cfg);
    let hint = match recover_q(loss, w_sup, unl) {
        Ok(rec) => rec.q,
        Err(ResponsibilityError::Kink { .. }) => None,
        Err(e) => return Err(e),
    };
    system.decide(hint.as_ref(), Rule::GeneralLp)
}

fn column_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1e-300)).count()
}

/// Closed-form improvement conditions for the quadratic loss.
///
/// With `a = X_u w_sup`: when `U <= d` (and `X_u` has full row rank) the
/// only candidate is `q = (1 + a) / 2`; when `U >= d`, `||a||_2 > sqrt(U)`
/// already rules out every `q` in the box. Otherwise the general test runs.
pub fn quadratic_improvement_condition(
    loss: &LossSpec,
    unl: &UnlabeledDataset,
    w_sup: &Weights,
) -> Result<FeasibilityVerdict, ResponsibilityError> {
    if loss.kind() != LossKind::Quadratic {
        return Err(ResponsibilityError::UnsupportedLoss(loss.name().to_string()));
    }
    if w_sup.len() != unl.dim() {
        return Err(ResponsibilityError::Dimension("weights and unlabeled data disagree".into()));
    }
    let (u, d) = (unl.len(), unl.dim());
    let a = unl.decision_values(w_sup);
    let system = StationaritySystem::unlabeled_only(loss, w_sup, unl);

    if d >= u && column_rank(&unl.x().transpose()) == u {
        let candidate = a.map(|v| 0.5 * (1.0 + v));
        if candidate.iter().all(|v| (0.0..=1.0).contains(v)) {
            let residual = system.residual_at(&candidate)?;
            return Ok(FeasibilityVerdict {
                feasible: true,
                witness_q: Some(Responsibilities::new(candidate)?),
                residual,
                rule_applied: Rule::QuadDGeqU,
            });
        }
        return infeasible_by_rule(&system, Rule::QuadDGeqU);
    }
    if a.norm() > (u as f64).sqrt() {
        return infeasible_by_rule(&system, Rule::QuadDLeqUNorm);
    }
    system.decide(None, Rule::GeneralLp)
}

fn infeasible_by_rule(system: &StationaritySystem, rule: Rule) -> Result<FeasibilityVerdict, ResponsibilityError> {
    let init = (&system.lo + &system.hi) * 0.5;
    let sol = box_least_squares(&system.a, &system.c, &system.lo, &system.hi, &init, &SolverConfig::default())?;
    if sol.residual_inf <= INFEASIBLE_TOL {
        return Err(ResponsibilityError::Inconclusive {
            residual: sol.residual_inf,
        });
    }
    Ok(FeasibilityVerdict {
        feasible: false,
        witness_q: None,
        residual: sol.residual_inf,
        rule_applied: rule,
    })
}

/// True iff every unlabeled decision value lies strictly outside the margin,
/// `|x^T w_sup| > 1`. For losses whose derivative is non-positive up to the
/// margin and positive beyond it, this forces the semi-supervised solution
/// away from `w_sup`.
pub fn outside_margin_condition(
    loss: &LossSpec,
    unl: &UnlabeledDataset,
    w_sup: &Weights,
) -> Result<bool, ResponsibilityError> {
    if !loss.has_outside_margin_signature() {
        return Err(ResponsibilityError::UnsupportedLoss(loss.name().to_string()));
    }
    if w_sup.len() != unl.dim() {
        return Err(ResponsibilityError::Dimension("weights and unlabeled data disagree".into()));
    }
    Ok(unl.decision_values(w_sup).iter().all(|a| a.abs() > MARGIN))
}

/// Verdict form of [`outside_margin_condition`]: infeasible when it holds.
pub fn outside_margin_verdict(
    loss: &LossSpec,
    w_sup: &Weights,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    cfg: &RiskConfig,
) -> Result<FeasibilityVerdict, ResponsibilityError> {
    if outside_margin_condition(loss, unl, w_sup)? {
        let mut verdict = in_constraint_set(loss, w_sup, data, unl, cfg)?;
        verdict.rule_applied = Rule::OutsideMarginTheorem;
        return Ok(verdict);
    }
    in_constraint_set(loss, w_sup, data, unl, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{fit_supervised, RiskConfig};

    fn unl_with_values(values: &[f64]) -> (UnlabeledDataset, Weights) {
        // one feature, w = 1: decision values are the features themselves
        let x = DMatrix::from_column_slice(values.len(), 1, values);
        (UnlabeledDataset::new(x).unwrap(), Weights::from_vec(vec![1.0]))
    }

    fn single(loss: &LossSpec, a: f64) -> ObjectRecovery {
        let (unl, w) = unl_with_values(&[a]);
        recover_q(loss, &w, &unl).unwrap().objects[0].outcome
    }

    #[test]
    fn per_object_examples() {
        assert_eq!(single(&LossSpec::logistic(), 0.0), ObjectRecovery::Unique { q: 0.5 });
        assert_eq!(single(&LossSpec::hinge(), 2.0), ObjectRecovery::Unique { q: 1.0 });
        assert_eq!(
            single(&LossSpec::quadratic(), 3.0),
            ObjectRecovery::Infeasible { candidate: Some(2.0) }
        );
        assert_eq!(single(&LossSpec::absolute(), 0.3), ObjectRecovery::Unique { q: 0.5 });
        assert_eq!(single(&LossSpec::exponential(), 0.0), ObjectRecovery::Unique { q: 0.5 });
        assert_eq!(
            single(&LossSpec::absolute(), 1.7),
            ObjectRecovery::Infeasible { candidate: None }
        );
    }

    #[test]
    fn hinge_kinks_are_flagged_not_fatal() {
        let (unl, w) = unl_with_values(&[1.0, -1.0, 1.0 + 1e-12, 0.2]);
        let rec = recover_q(&LossSpec::hinge(), &w, &unl).unwrap();
        let flags: Vec<bool> = rec.objects.iter().map(|o| o.kink_flagged).collect();
        assert_eq!(flags, vec![true, true, true, false]);
        assert_eq!(rec.objects[0].outcome, ObjectRecovery::Unique { q: 1.0 });
        assert_eq!(rec.objects[1].outcome, ObjectRecovery::Unique { q: 0.0 });
        assert!(rec.q.is_some());
    }

    #[test]
    fn custom_kink_is_an_error() {
        // smooth everywhere except at 0.5
        let loss = LossSpec::custom(
            "kinked",
            |a: f64| (-a).exp() + (0.5 - a).max(0.0),
            |a: f64| -(-a).exp() - if a < 0.5 { 1.0 } else { 0.0 },
            true,
        )
        .unwrap();
        let (unl, w) = unl_with_values(&[0.5]);
        assert!(matches!(
            recover_q(&loss, &w, &unl),
            Err(ResponsibilityError::Kink { index: 0, .. })
        ));
    }

    #[test]
    fn quadratic_closed_form_examples() {
        let loss = LossSpec::quadratic();
        // d >= U: two features, one object with decision value 0.5
        let unl = UnlabeledDataset::new(DMatrix::from_row_slice(1, 2, &[0.5, 1.0])).unwrap();
        let w = Weights::from_vec(vec![1.0, 0.0]);
        let v = quadratic_improvement_condition(&loss, &unl, &w).unwrap();
        assert!(v.feasible);
        assert_eq!(v.rule_applied, Rule::QuadDGeqU);
        assert!((v.witness_q.unwrap().as_vector()[0] - 0.75).abs() < 1e-15);

        // all decision values zero
        let unl = UnlabeledDataset::new(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        let w = Weights::from_vec(vec![0.0, 0.0, 1.0]);
        let v = quadratic_improvement_condition(&loss, &unl, &w).unwrap();
        assert!(v.feasible);
        assert_eq!(v.witness_q.unwrap().to_vec(), vec![0.5, 0.5]);

        // d <= U with ||X_u w|| = 2 sqrt(U)
        let unl = UnlabeledDataset::new(DMatrix::from_column_slice(4, 1, &[2.0, -2.0, 2.0, -2.0])).unwrap();
        let v = quadratic_improvement_condition(&loss, &unl, &Weights::from_vec(vec![1.0])).unwrap();
        assert!(!v.feasible);
        assert_eq!(v.rule_applied, Rule::QuadDLeqUNorm);
        assert!(v.residual > INFEASIBLE_TOL);

        assert!(matches!(
            quadratic_improvement_condition(&LossSpec::hinge(), &unl, &Weights::from_vec(vec![1.0])),
            Err(ResponsibilityError::UnsupportedLoss(_))
        ));
    }

    #[test]
    fn outside_margin_examples() {
        let loss = LossSpec::quadratic();
        let (unl, w) = unl_with_values(&[1.5, -2.3]);
        assert!(outside_margin_condition(&loss, &unl, &w).unwrap());
        let (unl, w) = unl_with_values(&[1.5, 0.2]);
        assert!(!outside_margin_condition(&loss, &unl, &w).unwrap());
        assert!(matches!(
            outside_margin_condition(&LossSpec::logistic(), &unl, &w),
            Err(ResponsibilityError::UnsupportedLoss(_))
        ));
    }

    #[test]
    fn quadratic_single_far_point_is_infeasible() {
        // labeled data on a line; unlabeled point far along the decision direction
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 0.8, 1.0, -1.0, 1.0, -0.9, 1.0]);
        let y = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        let data = LabeledDataset::new(x, y).unwrap();
        let cfg = RiskConfig { lambda: 0.01 };
        let loss = LossSpec::quadratic();
        let w = fit_supervised(&loss, &data, &cfg, &SolverConfig::default()).unwrap();
        // choose the unlabeled feature so that its decision value is exactly 3
        let x1 = (3.0 - w[1]) / w[0];
        let unl = UnlabeledDataset::new(DMatrix::from_row_slice(1, 2, &[x1, 1.0])).unwrap();
        assert!((unl.decision_values(&w)[0] - 3.0).abs() < 1e-12);
        let v = in_constraint_set(&loss, &w, &data, &unl, &cfg).unwrap();
        assert!(!v.feasible);
        assert!(v.residual > INFEASIBLE_TOL);
    }
}
