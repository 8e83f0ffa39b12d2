//! Desk-scale toolkit for adversarial (minimax) training, exact optimal
//! transport between finite discrete distributions, and certified worst-case
//! risk over Wasserstein balls.
//!
//! Module map:
//! - [`numkit`]: dense vector arithmetic, norms, ball projections, and a
//!   counter-based deterministic random state.
//! - [`losses`]: smooth loss surfaces with gradient oracles and certified or
//!   estimated constants profiles.
//! - [`minimax`]: multi-step SGD (inner projected ascent, outer SGD) with
//!   full telemetry, plus robust-objective evaluators.
//! - [`transport`]: exact `W₂`/`W∞`/`TV` distances, a brute-force coupling
//!   oracle, and Wasserstein-ball worst-case risk.
//! - [`certify`]: input-robustness measurement, covering numbers, and the
//!   OOD generalization / excess-risk / pretraining-transfer bounds.

pub mod certify;
pub mod losses;
pub mod minimax;
pub mod numkit;
pub mod transport;

pub use losses::{ConstantsProfile, Dataset, Label, LabeledSample, SmoothLoss};
pub use numkit::{BallNorm, NormOrder, PerturbationBudget, RngState, Vector};
pub use transport::DiscreteDistribution;
