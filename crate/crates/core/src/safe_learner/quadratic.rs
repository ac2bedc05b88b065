//! Closed-form maximin for the quadratic loss.
//!
//! With `r = 2q - 1` the semi-supervised quadratic risk is
//! `||y - X w||^2 + ||X_u w||^2 - 2 r^T X_u w + L + U + lambda ||w||^2`, so
//!
//! ```text
//! G     = X^T X + X_u^T X_u + lambda I
//! w*(q) = G^{-1} (X^T y + X_u^T r)
//! V(q)  = -|| C^{-1} X_u^T (r - X_u w_sup) ||^2,   G = C C^T
//! ```
//!
//! and maximizing `V` over the box is a bounded least-squares problem in `q`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{finish, MinimaxResult, SafeLearnerError};
use crate::loss::LossSpec;
use crate::optim::{self, Weights};
use crate::risk::{LabeledDataset, Responsibilities, RiskConfig, UnlabeledDataset};

fn factor(g: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>, SafeLearnerError> {
    Cholesky::new(g).ok_or_else(|| SafeLearnerError::Rank(format!("{what} is not positive definite")))
}

/// [`super::minimax_fit`] for the quadratic loss through the closed form.
pub fn minimax_fit_quadratic(
    data: &LabeledDataset,
    unl: &UnlabeledDataset,
    cfg: &RiskConfig,
) -> Result<MinimaxResult, SafeLearnerError> {
    if unl.dim() != data.dim() {
        return Err(crate::risk::RiskError::Dimension("labeled and unlabeled features differ".into()).into());
    }
    let d = data.dim();
    let (x, y, xu) = (data.x(), data.y(), unl.x());
    let ridge = DMatrix::identity(d, d) * cfg.lambda;
    let g_sup = x.tr_mul(x) + &ridge;
    let xty = x.tr_mul(y);
    let w_sup = factor(g_sup, "X^T X + lambda I")?.solve(&xty);
    let a_sup = xu * &w_sup;

    let chol = factor(x.tr_mul(x) + xu.tr_mul(xu) + ridge, "the semi-supervised normal matrix")?;
    let c_inv_xut = chol.l().solve_lower_triangular(&xu.transpose()).expect("Cholesky factor is invertible");
    // f(q) = ||A q + c||^2 = -V(q)
    let a = &c_inv_xut * 2.0;
    let c = -(&c_inv_xut * a_sup.map(|v| 1.0 + v));
    let q = box_quadratic(&a, &c);

    let maximin = -(&a * &q + &c).norm_squared();
    let r = q.map(|v| 2.0 * v - 1.0);
    let w_q = chol.solve(&(xty + xu.tr_mul(&r)));
    finish(
        &LossSpec::quadratic(),
        data,
        unl,
        cfg,
        Weights::new(w_sup),
        Weights::new(w_q),
        Responsibilities::new(q)?,
        maximin,
    )
}

/// `argmin_{q in [0,1]^n} ||A q + c||^2`.
pub(super) fn box_quadratic(a: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let m = a.tr_mul(a);
    let b = -a.tr_mul(c);
    optim::box_qp(&m, &b, &DVector::zeros(n), &DVector::from_element(n, 1.0), &DVector::from_element(n, 0.5))
}
