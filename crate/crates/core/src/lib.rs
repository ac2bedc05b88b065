//! Margin-based empirical risk minimization and pessimistic semi-supervised
//! learning for linear classifiers.
//!
//! The crate is organised bottom-up:
//!
//! * [`loss`]: the built-in margin losses and user-supplied convex losses.
//! * [`optim`]: deterministic gradient and projected-gradient solvers.
//! * [`risk`]: supervised / semi-supervised risks and their minimizers.
//! * [`responsibility`]: responsibilities that reproduce the supervised
//!   solution, and membership tests for the set of attainable classifiers.
//! * [`safe_learner`]: the worst-case labeling adversary and the minimax
//!   (pessimistic) semi-supervised learner.
//! * [`workbench`]: synthetic data, CSV ingestion, verification suites and
//!   JSON reports used by the `ssl-lab` binary.

pub mod loss;
pub mod optim;
pub mod responsibility;
pub mod risk;
pub mod safe_learner;
pub mod workbench;

pub use loss::{LossKind, LossSpec};
pub use optim::{SolverConfig, Weights};
pub use risk::{LabeledDataset, Responsibilities, RiskConfig, UnlabeledDataset};
