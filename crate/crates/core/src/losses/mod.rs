//! Smooth loss surfaces `f(w, x)` with analytic gradient oracles and a
//! constants profile certifying the smoothness / boundedness / curvature
//! assumptions the convergence and generalization results rely on:
//!
//! ```text
//! ‖∇_w f(w1,x) − ∇_w f(w2,x)‖ ≤ L11‖w1−w2‖     ‖∇_w f(w,x1) − ∇_w f(w,x2)‖ ≤ L12‖x1−x2‖
//! ‖∇_x f(w1,x) − ∇_x f(w2,x)‖ ≤ L21‖w1−w2‖     ‖∇_x f(w,x1) − ∇_x f(w,x2)‖ ≤ L22‖x1−x2‖
//! ‖∇_w f(w,x)‖ ≤ G,   0 ≤ f ≤ M,
//! the robust objective satisfies a PL inequality with constant mu_w, and
//! f(w, x + δ) is mu_x-strongly concave in δ.
//! ```
//!
//! Only the quadratic saddle family carries analytically certified constants;
//! the logistic and tiny-network families ship empirically estimated profiles
//! (`certified = false`) and are excluded from rate guarantees.

mod estimate;
mod logistic;
mod quadratic;
mod tiny_net;

pub use estimate::estimate_profile;
pub use logistic::LogisticLoss;
pub use quadratic::QuadraticSaddle;
pub use tiny_net::TinyNet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{self, NumError, PerturbationBudget, RngState, Vector};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("curvature parameter {name} must be positive, got {value}")]
    NonPositiveCurvature { name: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("operation requires the {required} family")]
    UnsupportedFamily { required: &'static str },
    #[error("profile estimation needs at least 2 probes, got {0}")]
    TooFewProbes(usize),
    #[error("sample {index} lies outside the declared support box")]
    SampleOutsideBox { index: usize },
    #[error("invalid constants profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

/// Per-coordinate `[lo, hi]` bounds of an axis-aligned box.
pub type CoordBox = Vec<[f64; 2]>;

pub(crate) fn validate_box(b: &[[f64; 2]], what: &str) -> Result<(), LossError> {
    if b.is_empty() {
        return Err(LossError::InvalidBox(format!("{what} has no coordinates")));
    }
    for (i, [lo, hi]) in b.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(LossError::InvalidBox(format!(
                "{what} coordinate {i} has bad bounds [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

pub fn box_center(b: &[[f64; 2]]) -> Vector {
    b.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
}

pub fn box_contains(b: &[[f64; 2]], v: &[f64], slack: f64) -> bool {
    v.len() == b.len()
        && v.iter()
            .zip(b)
            .all(|(x, [lo, hi])| *x >= lo - slack && *x <= hi + slack)
}

pub fn box_sample(b: &[[f64; 2]], rng: &mut RngState) -> Vector {
    b.iter().map(|[lo, hi]| rng.next_in_range(*lo, *hi)).collect()
}

/// `ℓ₁`-diameter of a box: the distance between opposite corners.
pub fn box_l1_diameter(b: &[[f64; 2]]) -> f64 {
    b.iter().map(|[lo, hi]| hi - lo).sum()
}

/// Grow every coordinate interval by `slack` on both sides.
pub fn inflate_box(b: &[[f64; 2]], slack: f64) -> CoordBox {
    b.iter().map(|[lo, hi]| [lo - slack, hi + slack]).collect()
}

/// Certified or estimated constants of a loss surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    pub l11: f64,
    pub l12: f64,
    pub l21: f64,
    pub l22: f64,
    /// Upper bound on `‖∇_w f‖` over the declared boxes.
    pub g: f64,
    /// Upper bound on the loss value over the declared boxes.
    pub m: f64,
    /// PL constant of the robust objective.
    pub mu_w: f64,
    /// Strong-concavity constant of `δ ↦ f(w, x + δ)`, the minimum over samples.
    pub mu_x: f64,
    /// Whether the constants hold analytically over the declared domains.
    pub certified: bool,
}

impl ConstantsProfile {
    pub fn validate(&self) -> Result<(), LossError> {
        let named = [
            ("l11", self.l11),
            ("l12", self.l12),
            ("l21", self.l21),
            ("l22", self.l22),
            ("g", self.g),
            ("m", self.m),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(LossError::InvalidProfile(format!("{name} = {v}")));
            }
        }
        for (name, v) in [("mu_w", self.mu_w), ("mu_x", self.mu_x)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(LossError::InvalidProfile(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Smoothness constant `L = L11 + L12·L21/mu_x` of the robust objective.
    pub fn smoothness_l(&self) -> f64 {
        self.l11 + self.l12 * self.l21 / self.mu_x
    }
}

/// Class index or real regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(u32),
    Real(f64),
}

impl Label {
    pub fn as_f64(&self) -> f64 {
        match self {
            Label::Class(c) => *c as f64,
            Label::Real(v) => *v,
        }
    }

    /// Signed class in `{-1, +1}`; class 0 and negative reals map to -1.
    pub fn signed(&self) -> f64 {
        match self {
            Label::Class(0) => -1.0,
            Label::Class(_) => 1.0,
            Label::Real(v) => {
                if *v >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vector,
    pub y: Label,
}

/// Finite training set on a compact axis-aligned support box.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    support_box: CoordBox,
    d0: usize,
    diameter_l1: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    d0: usize,
    support_box: CoordBox,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>, support_box: CoordBox) -> Result<Self, LossError> {
        validate_box(&support_box, "support box")?;
        let d0 = support_box.len();
        for (index, s) in samples.iter().enumerate() {
            if s.x.len() != d0 {
                return Err(LossError::DimensionMismatch { expected: d0, got: s.x.len() });
            }
            numkit::norm(&s.x, numkit::NormOrder::LInf)?;
            if !box_contains(&support_box, &s.x, 1e-12) {
                return Err(LossError::SampleOutsideBox { index });
            }
        }
        let diameter_l1 = box_l1_diameter(&support_box);
        Ok(Self { samples, support_box, d0, diameter_l1 })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn support_box(&self) -> &[[f64; 2]] {
        &self.support_box
    }

    /// `ℓ₁`-diameter `D` of the support box.
    pub fn diameter_l1(&self) -> f64 {
        self.diameter_l1
    }

    pub fn to_json(&self) -> String {
        let raw = RawDataset {
            d0: self.d0,
            support_box: self.support_box.clone(),
            samples: self.samples.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("dataset serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, LossError> {
        let raw: RawDataset =
            serde_json::from_str(text).map_err(|e| LossError::Malformed(e.to_string()))?;
        if raw.d0 != raw.support_box.len() {
            return Err(LossError::Malformed(format!(
                "d0 = {} does not match support box dimension {}",
                raw.d0,
                raw.support_box.len()
            )));
        }
        Self::new(raw.samples, raw.support_box)
    }
}

/// A smooth loss surface with analytic value and gradient oracles.
///
/// Implementations are immutable after construction and evaluation is pure,
/// so instances may be shared freely across threads.
pub trait SmoothLoss: Send + Sync {
    fn dim_w(&self) -> usize;
    fn dim_x(&self) -> usize;
    /// Declared compact box for the iterates `w`.
    fn iterate_box(&self) -> &[[f64; 2]];
    /// Declared compact box for inputs `x`, including perturbation slack.
    fn sample_box(&self) -> &[[f64; 2]];
    fn value(&self, w: &[f64], x: &[f64], y: &Label) -> f64;
    fn grad_w(&self, w: &[f64], x: &[f64], y: &Label) -> Vector;
    fn grad_x(&self, w: &[f64], x: &[f64], y: &Label) -> Vector;
    fn profile(&self) -> &ConstantsProfile;

    /// Whether `value` depends on the label. Label-free surfaces can be
    /// evaluated directly on distribution atoms.
    fn requires_label(&self) -> bool {
        false
    }

    /// Label distribution used when probing the surface empirically.
    fn probe_label(&self, rng: &mut RngState) -> Label {
        let _ = rng;
        Label::Real(0.0)
    }

    /// Exact maximizer of `δ ↦ f(w, x + δ)` over the budget ball, when the
    /// family admits one.
    fn analytic_inner_argmax(
        &self,
        w: &[f64],
        x: &[f64],
        budget: PerturbationBudget,
    ) -> Option<Vector> {
        let _ = (w, x, budget);
        None
    }

    /// Exact minimizer of `δ ↦ f(w, x + δ)` over the budget ball.
    fn analytic_inner_argmin(
        &self,
        w: &[f64],
        x: &[f64],
        budget: PerturbationBudget,
    ) -> Option<Vector> {
        let _ = (w, x, budget);
        None
    }

    /// Exact maximizer of the penalized objective `δ ↦ f(w, x + δ) − λ‖δ‖²`
    /// for `λ ≥ 0`, when the family admits one. Drives the W₂ worst-case dual.
    fn analytic_penalized_argmax(&self, w: &[f64], x: &[f64], lambda: f64) -> Option<Vector> {
        let _ = (w, x, lambda);
        None
    }

    fn value_on(&self, w: &[f64], s: &LabeledSample) -> f64 {
        self.value(w, &s.x, &s.y)
    }

    /// `sup` of `f(w, x + δ)` over the ball, via the analytic maximizer.
    fn analytic_ball_sup(
        &self,
        w: &[f64],
        x: &[f64],
        y: &Label,
        budget: PerturbationBudget,
    ) -> Option<f64> {
        let delta = self.analytic_inner_argmax(w, x, budget)?;
        Some(self.value(w, &numkit::add(x, &delta), y))
    }

    /// `inf` of `f(w, x + δ)` over the ball, via the analytic minimizer.
    fn analytic_ball_inf(
        &self,
        w: &[f64],
        x: &[f64],
        y: &Label,
        budget: PerturbationBudget,
    ) -> Option<f64> {
        let delta = self.analytic_inner_argmin(w, x, budget)?;
        Some(self.value(w, &numkit::add(x, &delta), y))
    }
}

/// Closed-form `argmax_{‖δ‖_p ≤ r} f(w, x + δ)` for families that expose one.
pub fn closed_form_inner_argmax(
    loss: &dyn SmoothLoss,
    w: &[f64],
    x: &[f64],
    budget: PerturbationBudget,
) -> Result<Vector, LossError> {
    loss.analytic_inner_argmax(w, x, budget)
        .ok_or(LossError::UnsupportedFamily { required: "quadratic saddle" })
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_roundtrip_and_validation() {
        let samples = vec![
            LabeledSample { x: vec![0.25, 0.5], y: Label::Class(1) },
            LabeledSample { x: vec![0.75, 0.1], y: Label::Real(0.5) },
        ];
        let ds = Dataset::new(samples, vec![[0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(ds.d0(), 2);
        assert_eq!(ds.diameter_l1(), 2.0);
        let back = Dataset::from_json(&ds.to_json()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn dataset_roundtrip_preserves_awkward_floats() {
        let gnarly = 0.1 + 0.2;
        let samples = vec![LabeledSample {
            x: vec![gnarly, f64::MIN_POSITIVE],
            y: Label::Real(1.0 / 3.0),
        }];
        let ds = Dataset::new(samples, vec![[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let back = Dataset::from_json(&ds.to_json()).unwrap();
        assert_eq!(back.samples()[0].x[0].to_bits(), gnarly.to_bits());
        assert_eq!(back.samples()[0].x[1].to_bits(), f64::MIN_POSITIVE.to_bits());
        assert_eq!(back.samples()[0].y, Label::Real(1.0 / 3.0));
    }

    #[test]
    fn dataset_rejects_stragglers() {
        let outside = vec![LabeledSample { x: vec![2.0, 0.0], y: Label::Class(0) }];
        assert!(matches!(
            Dataset::new(outside, vec![[0.0, 1.0], [0.0, 1.0]]),
            Err(LossError::SampleOutsideBox { index: 0 })
        ));
        let bad_dim = vec![LabeledSample { x: vec![0.5], y: Label::Class(0) }];
        assert!(Dataset::new(bad_dim, vec![[0.0, 1.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn dataset_json_strictness() {
        let text = r#"{"d0": 1, "support_box": [[0,1]], "samples": [], "extra": 3}"#;
        assert!(Dataset::from_json(text).is_err());
        let mismatched = r#"{"d0": 2, "support_box": [[0,1]], "samples": []}"#;
        assert!(Dataset::from_json(mismatched).is_err());
    }

    #[test]
    fn label_parsing() {
        let c: Label = serde_json::from_str("1").unwrap();
        assert_eq!(c, Label::Class(1));
        let r: Label = serde_json::from_str("0.5").unwrap();
        assert_eq!(r, Label::Real(0.5));
        assert_eq!(Label::Class(0).signed(), -1.0);
        assert_eq!(Label::Class(1).signed(), 1.0);
    }
}
