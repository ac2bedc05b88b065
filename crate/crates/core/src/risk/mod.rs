//! Supervised and semi-supervised empirical risks for linear classifiers.
//!
//! The supervised risk is `sum_i phi(y_i x_i^T w) + lambda ||w||^2`. The
//! semi-supervised risk adds, for every unlabeled row, both possible labels
//! weighted by a responsibility `q_j`:
//! `q_j phi(x_j^T w) + (1 - q_j) phi(-x_j^T w)`.
//!
//! Internally both are the same object: a weighted sum of margin losses over
//! signed rows, see [`MarginProblem`].

mod piecewise;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{LossError, LossKind, LossSpec};
use crate::optim::{self, box_least_squares, OptimError, SolverConfig, Weights};

pub(crate) use piecewise::DualState;

/// Margins within this distance of the kink are treated as sitting on it.
pub const KINK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("responsibility {index} = {value} lies outside [0, 1]")]
    InfeasibleResponsibility { index: usize, value: f64 },
    #[error("minimizer is not unique: {0}")]
    Precondition(String),
    #[error(transparent)]
    Solver(#[from] OptimError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Labeled design matrix `X` (`L x d`) with labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl LabeledDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self, RiskError> {
        if x.nrows() == 0 {
            return Err(RiskError::InvalidData("labeled set is empty".into()));
        }
        if x.nrows() != y.len() {
            return Err(RiskError::Dimension(format!(
                "{} labeled rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RiskError::InvalidData("labeled features must be finite".into()));
        }
        if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(RiskError::InvalidData(format!(
                "label {} at row {i} is not -1 or +1",
                y[i]
            )));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Appends unlabeled rows with the given hard labels.
    pub fn concat(&self, unl: &UnlabeledDataset, labels: &DVector<f64>) -> Result<Self, RiskError> {
        if unl.dim() != self.dim() || labels.len() != unl.len() {
            return Err(RiskError::Dimension("cannot concatenate datasets".into()));
        }
        let (l, u, d) = (self.len(), unl.len(), self.dim());
        let x = DMatrix::from_fn(l + u, d, |i, j| {
            if i < l {
                self.x[(i, j)]
            } else {
                unl.x[(i - l, j)]
            }
        });
        let y = DVector::from_fn(l + u, |i, _| if i < l { self.y[i] } else { labels[i - l] });
        Self::new(x, y)
    }
}

/// Unlabeled design matrix `X_u` (`U x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    x: DMatrix<f64>,
}

impl UnlabeledDataset {
    pub fn new(x: DMatrix<f64>) -> Result<Self, RiskError> {
        if x.nrows() == 0 {
            return Err(RiskError::InvalidData("unlabeled set is empty".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RiskError::InvalidData("unlabeled features must be finite".into()));
        }
        Ok(Self { x })
    }

    /// A zero-row unlabeled set; semi-supervised fits then reduce to supervised ones.
    pub fn empty(d: usize) -> Self {
        Self {
            x: DMatrix::zeros(0, d),
        }
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// `X_u w`.
    pub fn decision_values(&self, w: &Weights) -> DVector<f64> {
        &self.x * w.as_vector()
    }
}

/// Soft labels `q in [0, 1]^U`; hard labelings are the vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(DVector<f64>);

impl Responsibilities {
    pub fn new(q: DVector<f64>) -> Result<Self, RiskError> {
        if let Some(i) = q.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(RiskError::InfeasibleResponsibility { index: i, value: q[i] });
        }
        Ok(Self(q))
    }

    pub fn from_vec(q: Vec<f64>) -> Result<Self, RiskError> {
        Self::new(DVector::from_vec(q))
    }

    pub fn uniform(u: usize, value: f64) -> Result<Self, RiskError> {
        Self::new(DVector::from_element(u, value))
    }

    /// Responsibilities of a hard labeling `y_u in {-1, +1}^U`.
    pub fn from_labels(labels: &DVector<f64>) -> Self {
        Self(labels.map(|y| if y > 0.0 { 1.0 } else { 0.0 }))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }
}

impl Serialize for Responsibilities {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for Responsibilities {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Responsibilities::from_vec(v).map_err(serde::de::Error::custom)
    }
}

/// Regularization weight; the regularizer is always `||w||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub lambda: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self { lambda: 0.01 }
    }
}

impl RiskConfig {
    pub fn new(lambda: f64) -> Result<Self, RiskError> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(RiskError::InvalidData(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }
}

/// `sum_k c_k phi(z_k^T w) + lambda ||w||^2` over signed rows `z_k = s_k x_k`.
#[derive(Debug, Clone)]
pub(crate) struct MarginProblem<'a> {
    pub loss: &'a LossSpec,
    pub z: DMatrix<f64>,
    pub c: DVector<f64>,
    pub lambda: f64,
}

impl<'a> MarginProblem<'a> {
    pub fn supervised(loss: &'a LossSpec, data: &LabeledDataset, cfg: &RiskConfig) -> Self {
        let z = DMatrix::from_fn(data.len(), data.dim(), |i, j| data.y[i] * data.x[(i, j)]);
        Self {
            loss,
            z,
            c: DVector::from_element(data.len(), 1.0),
            lambda: cfg.lambda,
        }
    }

    /// Labeled rows first, then for each unlabeled row `+x_j` (weight `q_j`)
    /// and `-x_j` (weight `1 - q_j`).
    pub fn semi(
        loss: &'a LossSpec,
        data: &LabeledDataset,
        unl: &UnlabeledDataset,
        q: &Responsibilities,
        cfg: &RiskConfig,
    ) -> Result<Self, RiskError> {
        check_semi_dims(data, unl, q)?;
        let (l, u, d) = (data.len(), unl.len(), data.dim());
        let z = DMatrix::from_fn(l + 2 * u, d, |i, j| {
            if i < l {
                data.y[i] * data.x[(i, j)]
            } else {
                let k = i - l;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * unl.x[(k / 2, j)]
            }
        });
        let c = DVector::from_fn(l + 2 * u, |i, _| {
            if i < l {
                1.0
            } else {
                let k = i - l;
                if k % 2 == 0 {
                    q.0[k / 2]
                } else {
                    1.0 - q.0[k / 2]
                }
            }
        });
        Ok(Self {
            loss,
            z,
            c,
            lambda: cfg.lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        let m = &self.z * w;
        let mut total = 0.0;
        for k in 0..m.len() {
            if self.c[k] != 0.0 {
                total += self.c[k] * self.loss.value(m[k]);
            }
        }
        total + self.lambda * w.norm_squared()
    }

    pub fn grad(&self, w: &DVector<f64>) -> DVector<f64> {
        let m = &self.z * w;
        let coef = DVector::from_fn(m.len(), |k, _| {
            if self.c[k] != 0.0 {
                self.c[k] * self.loss.deriv(m[k])
            } else {
                0.0
            }
        });
        self.z.tr_mul(&coef) + w * (2.0 * self.lambda)
    }

    fn check_unique(&self) -> Result<(), RiskError> {
        if self.lambda > 0.0 {
            return Ok(());
        }
        match self.loss.kind() {
            LossKind::Hinge | LossKind::Absolute => Err(RiskError::Precondition(format!(
                "{} loss needs lambda > 0",
                self.loss.name()
            ))),
            LossKind::Quadratic => {
                let weighted = DMatrix::from_fn(self.z.nrows(), self.z.ncols(), |i, j| {
                    self.c[i].sqrt() * self.z[(i, j)]
                });
                let sv = weighted.singular_values();
                let top = sv.max();
                let rank = sv.iter().filter(|&&s| s > 1e-10 * top.max(1e-300)).count();
                if rank < self.dim() {
                    Err(RiskError::Precondition(format!(
                        "quadratic loss with lambda = 0 and rank-deficient design (rank {rank} < {})",
                        self.dim()
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Minimizer of the problem, warm-started from `init`.
    pub fn fit(
        &self,
        init: &Weights,
        dual: Option<&mut DualState>,
        solver: &SolverConfig,
    ) -> Result<Weights, RiskError> {
        self.check_unique()?;
        if self.loss.is_piecewise_linear() {
            let mut fresh = DualState::default();
            let state = dual.unwrap_or(&mut fresh);
            return piecewise::fit(self, state, solver);
        }
        let lo = DVector::from_element(self.dim(), f64::NEG_INFINITY);
        let hi = DVector::from_element(self.dim(), f64::INFINITY);
        let run = optim::projected_descent::<OptimError, _>(
            |w| Ok((self.value(w), self.grad(w))),
            init.as_vector(),
            &lo,
            &hi,
            solver,
        )?;
        Ok(optim::into_weights(run)?)
    }

    /// Infinity-norm of the minimum-norm element of the subdifferential at `w`.
    ///
    /// For differentiable losses this is the gradient norm. For hinge and
    /// absolute losses, rows with margin within [`KINK_TOL`] of 1 contribute
    /// any element of their subdifferential.
    pub fn stationarity_residual(&self, w: &DVector<f64>) -> Result<f64, RiskError> {
        let Some((lo, hi)) = self.loss.kink_subdifferential() else {
            return Ok(self.grad(w).amax());
        };
        let m = &self.z * w;
        let mut fixed = w * (2.0 * self.lambda);
        let mut kinks = Vec::new();
        for k in 0..m.len() {
            if self.c[k] == 0.0 {
                continue;
            }
            if (m[k] - 1.0).abs() <= KINK_TOL {
                kinks.push(k);
            } else {
                fixed += self.z.row(k).transpose() * (self.c[k] * self.loss.deriv(m[k]));
            }
        }
        if kinks.is_empty() {
            return Ok(fixed.amax());
        }
        let b = DMatrix::from_fn(self.dim(), kinks.len(), |j, i| self.c[kinks[i]] * self.z[(kinks[i], j)]);
        let n = kinks.len();
        let sol = box_least_squares(
            &b,
            &fixed,
            &DVector::from_element(n, lo),
            &DVector::from_element(n, hi),
            &DVector::from_element(n, 0.5 * (lo + hi)),
            &SolverConfig::default(),
        )?;
        Ok(sol.residual_inf)
    }
}

fn check_weights(w: &Weights, d: usize) -> Result<(), RiskError> {
    if w.len() != d {
        return Err(RiskError::Dimension(format!(
            "weights have length {} but data has {d} features",
            w.len()
        )));
    }
    Ok(())
}

fn check_semi_dims(
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    q: &Responsibilities,
) -> Result<(), RiskError> {
    if unl.dim() != data.dim() {
        return Err(RiskError::Dimension(format!(
            "unlabeled data has {} features, labeled data {}",
            unl.dim(),
            data.dim()
        )));
    }
    if q.len() != unl.len() {
        return Err(RiskError::Dimension(format!(
            "{} responsibilities for {} unlabeled rows",
            q.len(),
            unl.len()
        )));
    }
    Ok(())
}

pub fn supervised_risk(
    loss: &LossSpec,
    w: &Weights,
    data: &LabeledDataset,
    cfg: &RiskConfig,
) -> Result<f64, RiskError> {
    check_weights(w, data.dim())?;
    Ok(MarginProblem::supervised(loss, data, cfg).value(w))
}

pub fn supervised_risk_grad(
    loss: &LossSpec,
    w: &Weights,
    data: &LabeledDataset,
    cfg: &RiskConfig,
) -> Result<DVector<f64>, RiskError> {
    check_weights(w, data.dim())?;
    Ok(MarginProblem::supervised(loss, data, cfg).grad(w))
}

pub fn semi_risk(
    loss: &LossSpec,
    w: &Weights,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    q: &Responsibilities,
    cfg: &RiskConfig,
) -> Result<f64, RiskError> {
    check_weights(w, data.dim())?;
    Ok(MarginProblem::semi(loss, data, unl, q, cfg)?.value(w))
}

/// Chosen (sub)gradient of the semi-supervised risk in `w`.
pub fn semi_risk_grad(
    loss: &LossSpec,
    w: &Weights,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    q: &Responsibilities,
    cfg: &RiskConfig,
) -> Result<DVector<f64>, RiskError> {
    check_weights(w, data.dim())?;
    Ok(MarginProblem::semi(loss, data, unl, q, cfg)?.grad(w))
}

/// Minimum-norm subgradient infinity-norm of the semi-supervised risk; equal
/// to the gradient norm for differentiable losses.
pub fn semi_stationarity_residual(
    loss: &LossSpec,
    w: &Weights,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    q: &Responsibilities,
    cfg: &RiskConfig,
) -> Result<f64, RiskError> {
    check_weights(w, data.dim())?;
    MarginProblem::semi(loss, data, unl, q, cfg)?.stationarity_residual(w)
}

/// `w_sup = argmin_w R(w, X, y)`.
pub fn fit_supervised(
    loss: &LossSpec,
    data: &LabeledDataset,
    cfg: &RiskConfig,
    solver: &SolverConfig,
) -> Result<Weights, RiskError> {
    MarginProblem::supervised(loss, data, cfg).fit(&Weights::zeros(data.dim()), None, solver)
}

/// `argmin_w R_semi(w, X, y, X_u, q)`.
pub fn fit_semi(
    loss: &LossSpec,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    q: &Responsibilities,
    cfg: &RiskConfig,
    solver: &SolverConfig,
) -> Result<Weights, RiskError> {
    MarginProblem::semi(loss, data, unl, q, cfg)?.fit(&Weights::zeros(data.dim()), None, solver)
}

/// `D(w) = R_semi(w, q) - R_semi(w_sup, q)`; affine in `q` for fixed weights.
pub fn risk_difference(
    loss: &LossSpec,
    w: &Weights,
    w_sup: &Weights,
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    q: &Responsibilities,
    cfg: &RiskConfig,
) -> Result<f64, RiskError> {
    check_weights(w, data.dim())?;
    check_weights(w_sup, data.dim())?;
    let p = MarginProblem::semi(loss, data, unl, q, cfg)?;
    Ok(p.value(w) - p.value(w_sup))
}
