//! Convex margin-based surrogate losses.
//!
//! A margin loss is evaluated on the signed decision value `a = y * x^T w`.
//! The five built-in losses cover two families: decreasing losses (logistic,
//! hinge, exponential) for which unlabeled data can never be used safely, and
//! losses that start increasing to the right of the margin (quadratic,
//! absolute) for which pessimistic improvements can exist.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Location of the kink shared by the hinge and absolute losses.
pub const MARGIN: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("margin must be finite, got {0}")]
    NonFinite(f64),
    #[error("unknown loss `{0}` (expected logistic, hinge, exponential, quadratic or absolute)")]
    UnknownName(String),
    #[error("custom loss `{name}` rejected: {reason}")]
    InvalidCustom { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Logistic,
    Hinge,
    Exponential,
    Quadratic,
    Absolute,
    Custom,
}

impl LossKind {
    pub const BUILTIN: [LossKind; 5] = [
        LossKind::Logistic,
        LossKind::Hinge,
        LossKind::Exponential,
        LossKind::Quadratic,
        LossKind::Absolute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
            LossKind::Exponential => "exponential",
            LossKind::Quadratic => "quadratic",
            LossKind::Absolute => "absolute",
            LossKind::Custom => "custom",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
struct CustomLoss {
    name: String,
    value: ScalarFn,
    deriv: ScalarFn,
    outside_margin_signature: bool,
}

/// A convex margin-based loss together with its chosen subderivative.
///
/// Immutable once built; cloning is cheap and instances can be shared across
/// threads.
#[derive(Clone)]
pub struct LossSpec {
    kind: LossKind,
    decreasing: bool,
    custom: Option<CustomLoss>,
}

impl fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossSpec")
            .field("name", &self.name())
            .field("kind", &self.kind)
            .field("decreasing", &self.decreasing)
            .finish()
    }
}

impl LossSpec {
    pub fn builtin(kind: LossKind) -> Self {
        assert!(kind != LossKind::Custom, "use LossSpec::custom for user losses");
        let decreasing = matches!(
            kind,
            LossKind::Logistic | LossKind::Hinge | LossKind::Exponential
        );
        Self {
            kind,
            decreasing,
            custom: None,
        }
    }

    pub fn logistic() -> Self {
        Self::builtin(LossKind::Logistic)
    }

    pub fn hinge() -> Self {
        Self::builtin(LossKind::Hinge)
    }

    pub fn exponential() -> Self {
        Self::builtin(LossKind::Exponential)
    }

    pub fn quadratic() -> Self {
        Self::builtin(LossKind::Quadratic)
    }

    pub fn absolute() -> Self {
        Self::builtin(LossKind::Absolute)
    }

    /// All five built-in losses in a fixed order.
    pub fn all_builtin() -> Vec<Self> {
        LossKind::BUILTIN.iter().map(|&k| Self::builtin(k)).collect()
    }

    /// Wraps a user-supplied differentiable convex margin loss.
    ///
    /// The declared `decreasing` flag is checked on a fixed sample grid, as are
    /// convexity and agreement of `deriv` with finite differences of `value`.
    pub fn custom<V, D>(
        name: impl Into<String>,
        value: V,
        deriv: D,
        decreasing: bool,
    ) -> Result<Self, LossError>
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        let value: ScalarFn = Arc::new(value);
        let deriv: ScalarFn = Arc::new(deriv);
        let reject = |reason: String| LossError::InvalidCustom {
            name: name.clone(),
            reason,
        };

        let grid: Vec<f64> = (0..=800).map(|i| -8.0 + 0.02 * i as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&a| value(a)).collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(reject(format!("non-finite value at a = {}", grid[i])));
        }

        for i in 1..grid.len() - 1 {
            let chord = 0.5 * (vals[i - 1] + vals[i + 1]);
            if vals[i] > chord + 1e-10 * (1.0 + chord.abs()) {
                return Err(reject(format!("not convex near a = {}", grid[i])));
            }
        }

        let observed_decreasing = vals
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        if observed_decreasing != decreasing {
            return Err(reject(format!(
                "declared decreasing = {decreasing}, sampled behaviour says {observed_decreasing}"
            )));
        }

        let h = 1e-6;
        for &a in grid.iter().step_by(7) {
            let d = deriv(a);
            let left = (value(a) - value(a - h)) / h;
            let right = (value(a + h) - value(a)) / h;
            if (left - right).abs() > 1e-3 * (1.0 + left.abs()) {
                // kink; any element of [left, right] is an admissible subgradient
                if d < left.min(right) - 1e-3 || d > left.max(right) + 1e-3 {
                    return Err(reject(format!("derivative outside subdifferential at a = {a}")));
                }
                continue;
            }
            let fd = (value(a + h) - value(a - h)) / (2.0 * h);
            if (d - fd).abs() > 1e-4 * (1.0 + d.abs()) {
                return Err(reject(format!(
                    "derivative {d} disagrees with finite difference {fd} at a = {a}"
                )));
            }
        }

        let outside_margin_signature = grid
            .iter()
            .chain([MARGIN + 1e-3, MARGIN + 1e-2].iter())
            .all(|&a| if a <= MARGIN { deriv(a) <= 0.0 } else { deriv(a) > 0.0 });

        Ok(Self {
            kind: LossKind::Custom,
            decreasing,
            custom: Some(CustomLoss {
                name,
                value,
                deriv,
                outside_margin_signature,
            }),
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        match &self.custom {
            Some(c) => &c.name,
            None => self.kind.as_str(),
        }
    }

    /// True iff `phi(a) >= phi(b)` whenever `a <= b`.
    pub fn is_decreasing(&self) -> bool {
        self.decreasing
    }

    /// Hinge and absolute have kinks at the margin; everything else is treated
    /// as differentiable.
    pub fn is_piecewise_linear(&self) -> bool {
        matches!(self.kind, LossKind::Hinge | LossKind::Absolute)
    }

    /// Derivative is non-positive up to the margin and strictly positive past it.
    pub fn has_outside_margin_signature(&self) -> bool {
        match self.kind {
            LossKind::Quadratic | LossKind::Absolute => true,
            LossKind::Custom => self
                .custom
                .as_ref()
                .is_some_and(|c| c.outside_margin_signature),
            _ => false,
        }
    }

    /// Loss value, no input validation.
    #[inline]
    pub fn value(&self, a: f64) -> f64 {
        match self.kind {
            LossKind::Logistic => {
                if a >= 0.0 {
                    (-a).exp().ln_1p()
                } else {
                    -a + a.exp().ln_1p()
                }
            }
            LossKind::Hinge => (MARGIN - a).max(0.0),
            LossKind::Exponential => (-a).exp(),
            LossKind::Quadratic => {
                let r = MARGIN - a;
                r * r
            }
            LossKind::Absolute => (MARGIN - a).abs(),
            LossKind::Custom => (self.custom.as_ref().expect("custom loss").value)(a),
        }
    }

    /// Chosen subderivative, no input validation. At the kink `a = 1` both
    /// hinge and absolute return 0.
    #[inline]
    pub fn deriv(&self, a: f64) -> f64 {
        match self.kind {
            LossKind::Logistic => {
                if a >= 0.0 {
                    let e = (-a).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + a.exp())
                }
            }
            LossKind::Hinge => {
                if a < MARGIN {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::Exponential => -(-a).exp(),
            LossKind::Quadratic => -2.0 * (MARGIN - a),
            LossKind::Absolute => {
                if a < MARGIN {
                    -1.0
                } else if a > MARGIN {
                    1.0
                } else {
                    0.0
                }
            }
            LossKind::Custom => (self.custom.as_ref().expect("custom loss").deriv)(a),
        }
    }

    /// Second derivative; zero away from the kink for piecewise-linear
    /// losses, a central difference of the derivative for custom ones.
    pub fn second_deriv(&self, a: f64) -> f64 {
        match self.kind {
            LossKind::Logistic => {
                let e = (-a.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            LossKind::Hinge | LossKind::Absolute => 0.0,
            LossKind::Exponential => (-a).exp(),
            LossKind::Quadratic => 2.0,
            LossKind::Custom => {
                let h = 1e-5 * (1.0 + a.abs());
                (self.deriv(a + h) - self.deriv(a - h)) / (2.0 * h)
            }
        }
    }

    /// Subdifferential `[lo, hi]` at the kink of a piecewise-linear loss.
    pub(crate) fn kink_subdifferential(&self) -> Option<(f64, f64)> {
        match self.kind {
            LossKind::Hinge => Some((-1.0, 0.0)),
            LossKind::Absolute => Some((-1.0, 1.0)),
            _ => None,
        }
    }
}

impl FromStr for LossSpec {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.trim().to_ascii_lowercase().as_str() {
            "logistic" => LossKind::Logistic,
            "hinge" => LossKind::Hinge,
            "exponential" => LossKind::Exponential,
            "quadratic" => LossKind::Quadratic,
            "absolute" => LossKind::Absolute,
            _ => return Err(LossError::UnknownName(s.to_string())),
        };
        Ok(Self::builtin(kind))
    }
}

fn check_finite(a: f64) -> Result<f64, LossError> {
    if a.is_finite() {
        Ok(a)
    } else {
        Err(LossError::NonFinite(a))
    }
}

/// `phi(a)` for a finite margin.
pub fn eval_loss(loss: &LossSpec, a: f64) -> Result<f64, LossError> {
    check_finite(a).map(|a| loss.value(a))
}

/// The chosen element of the subdifferential of `phi` at a finite margin.
pub fn eval_deriv(loss: &LossSpec, a: f64) -> Result<f64, LossError> {
    check_finite(a).map(|a| loss.deriv(a))
}
