//! Robustness measurement and certified upper bounds.
//!
//! A model is `(r, ε, P, p)`-input-robust when
//!
//! ```text
//! E_P[ sup_{‖δ‖_p ≤ r} |f(w, x + δ) − f(w, x)| ] ≤ ε,
//! ```
//!
//! and since `sup |f(x+δ) − f(x)| = max(sup f − f(x), f(x) − inf f)`, the
//! measurement is exact whenever per-atom ball suprema and infima are.
//!
//! The bound evaluators implement, with every exponential kept in log space:
//!
//! ```text
//! covering:   N(r) ≤ (2·d0)^{2D/r² + 1}
//! W∞ ball:    ε + M·√((N·ln2 + 2·ln(1/θ)) / n)                    with exponent 2D/r² + 1
//! W₂ ball:    (M+1)·ε + M·√((N·ln2 + 2·ln(1/θ)) / n)             with exponent 2ε²D/r² + 1
//! excess:     mult·ε₀ + mult·(G²·lnln(2T/θ)·(64L + 16·mu_w) + G²L)/(T·mu_w²) + conc(2/θ)
//!             where mult = 3 for p = ∞ and (2M + 3) for p = 2
//! transfer:   ε_pre + 2M·TV(P₀,Q₀)   (+ M·√(ln(1/θ)/(2n)) finite-sample, p = ∞)
//!             required pretraining radius r₀ = √(2D²·TV + r(2)²) for p = 2
//! ```
//!
//! An overflowing bound is a first-class "vacuous" value (`+∞` with a finite
//! log), never an error.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::losses::SmoothLoss;
use crate::minimax::TrainError;
use crate::numkit::{BallNorm, PerturbationBudget};
use crate::transport::{atom_ball_inf, atom_ball_sup, BallOptQuality, DiscreteDistribution, TransportError};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Measured input-robustness at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub r: f64,
    pub p: BallNorm,
    /// Weighted mean of the per-sample suprema of `|f(x+δ) − f(x)|`.
    pub epsilon_hat: f64,
    pub per_sample_gaps: Vec<f64>,
    pub method: BallOptQuality,
}

/// Measure `(r, ·, P, p)`-input-robustness of `w` on `P`.
pub fn measure_robustness(
    loss: &dyn SmoothLoss,
    w: &[f64],
    p0: &DiscreteDistribution,
    budget: PerturbationBudget,
    quality: BallOptQuality,
) -> Result<RobustnessReport, CertifyError> {
    let y = crate::losses::Label::Real(0.0);
    if loss.requires_label() {
        return Err(CertifyError::InvalidInput(
            "robustness over bare distributions needs a label-free loss".into(),
        ));
    }
    let mut per_sample_gaps = Vec::with_capacity(p0.len());
    let mut epsilon_hat = 0.0;
    for (atom, &weight) in p0.atoms().iter().zip(p0.weights()) {
        let base = loss.value(w, atom, &y);
        let sup = atom_ball_sup(loss, w, atom, budget, quality)?;
        let inf = atom_ball_inf(loss, w, atom, budget, quality)?;
        let gap = (sup - base).max(base - inf).max(0.0);
        per_sample_gaps.push(gap);
        epsilon_hat += weight * gap;
    }
    Ok(RobustnessReport { r: budget.r, p: budget.p, epsilon_hat, per_sample_gaps, method: quality })
}

/// The `(r, 2ε)` robustness pair certified by an adversarial objective value:
/// `R~_{P_n}(w) ≤ ε` implies `(r(p), 2ε, P_n, p)`-input-robustness.
pub fn robustness_from_objective(
    objective_value: f64,
    budget: PerturbationBudget,
) -> Result<(f64, f64), CertifyError> {
    if !objective_value.is_finite() || objective_value < 0.0 {
        return Err(CertifyError::InvalidInput(format!(
            "objective value must be a nonnegative real, got {objective_value}"
        )));
    }
    Ok((budget.r, 2.0 * objective_value))
}

/// Symbols feeding the bound evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d0: usize,
    /// `ℓ₁`-diameter `D` of the data support.
    pub diameter: f64,
    /// Loss upper bound `M`.
    pub loss_bound: f64,
    pub n: usize,
    /// Robustness radius `r`.
    pub r: f64,
    /// Robustness level `ε` (or achieved objective bound `ε₀` for the excess
    /// risk bound).
    pub epsilon: f64,
    /// Failure probability `θ ∈ (0, 1)`.
    pub theta: f64,
    pub epsilon_pre: Option<f64>,
    pub tv: Option<f64>,
}

impl BoundInputs {
    fn validate(&self) -> Result<(), CertifyError> {
        if self.d0 == 0 {
            return Err(CertifyError::InvalidInput("d0 must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(CertifyError::InvalidInput("n must be at least 1".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(CertifyError::InvalidInput(format!(
                "theta must lie in (0, 1), got {}",
                self.theta
            )));
        }
        for (name, v) in [
            ("diameter", self.diameter),
            ("loss_bound", self.loss_bound),
            ("r", self.r),
            ("epsilon", self.epsilon),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CertifyError::InvalidInput(format!(
                    "{name} must be a nonnegative real, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A bound value that may be vacuous: the linear value overflows to `+∞`
/// while the log-domain value stays finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    pub ln_value: f64,
}

impl BoundValue {
    pub fn is_vacuous(&self) -> bool {
        !self.value.is_finite()
    }
}

/// Evaluated bound with its itemized sub-terms. The sub-terms sum to the
/// bound exactly; the JSON export renders a vacuous bound as `"inf"`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub formula: &'static str,
    pub bound: BoundValue,
    pub components: BTreeMap<&'static str, f64>,
}

impl BoundReport {
    fn from_components(
        formula: &'static str,
        components: BTreeMap<&'static str, f64>,
        ln_value: f64,
    ) -> Self {
        let value = components.values().sum();
        BoundReport { formula, bound: BoundValue { value, ln_value }, components }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bound report serialization cannot fail")
    }
}

impl Serialize for BoundReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        fn render(v: f64) -> serde_json::Value {
            if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::json!("inf")
            }
        }
        let mut map = serializer.serialize_map(Some(4))?;
        map.serialize_entry("formula", self.formula)?;
        map.serialize_entry("bound", &render(self.bound.value))?;
        map.serialize_entry("log_bound", &render(self.bound.ln_value))?;
        let components: BTreeMap<&str, serde_json::Value> =
            self.components.iter().map(|(k, v)| (*k, render(*v))).collect();
        map.serialize_entry("components", &components)?;
        map.end()
    }
}

/// `ln(e^a + e^b)` without overflow; infinite inputs (the `r = 0` covering
/// signal) propagate as infinite sums rather than NaN.
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY || b == f64::INFINITY {
        return f64::INFINITY;
    }
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Covering number bound `(2·d0)^{2D/r² + 1}` in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveringBound {
    /// Natural log of the bound; `+∞` at `r = 0`.
    pub ln_value: f64,
    /// Linear value when representable.
    pub value: f64,
}

pub fn covering_bound(d0: usize, diameter: f64, r: f64) -> Result<CoveringBound, CertifyError> {
    if d0 == 0 {
        return Err(CertifyError::InvalidInput("d0 must be at least 1".into()));
    }
    if !(diameter.is_finite() && diameter > 0.0) {
        return Err(CertifyError::InvalidInput(format!("D must be positive, got {diameter}")));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(CertifyError::InvalidInput(format!("r must be nonnegative, got {r}")));
    }
    if r == 0.0 {
        // Dedicated infinite-bound signal, not an error.
        return Ok(CoveringBound { ln_value: f64::INFINITY, value: f64::INFINITY });
    }
    let exponent = 2.0 * diameter / (r * r) + 1.0;
    let ln_value = exponent * (2.0 * d0 as f64).ln();
    Ok(CoveringBound { ln_value, value: ln_value.exp() })
}

/// Concentration term `M·√((N·ln2 + 2·ln(scale/θ)) / n)` with `ln N` given,
/// evaluated in log space. Returns `(linear, ln)`.
fn concentration_term(ln_covering: f64, m: f64, n: usize, theta: f64, scale: f64) -> (f64, f64) {
    if m == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let tail = 2.0 * (scale / theta).ln();
    let ln_tail = if tail > 0.0 { tail.ln() } else { f64::NEG_INFINITY };
    let ln_inner = log_add_exp(ln_covering + std::f64::consts::LN_2.ln(), ln_tail);
    let ln_term = m.ln() + 0.5 * (ln_inner - (n as f64).ln());
    (ln_term.exp(), ln_term)
}

/// OOD generalization bound for the `W∞` ball, given `(2r, ε, P_n, ∞)`
/// robustness certified by the caller.
pub fn ood_bound_winf(inputs: &BoundInputs) -> Result<BoundReport, CertifyError> {
    inputs.validate()?;
    let covering = covering_bound(inputs.d0, inputs.diameter, inputs.r)?;
    let (conc, ln_conc) =
        concentration_term(covering.ln_value, inputs.loss_bound, inputs.n, inputs.theta, 1.0);
    let mut components = BTreeMap::new();
    components.insert("robustness", inputs.epsilon);
    components.insert("concentration", conc);
    let ln_value = log_add_exp(safe_ln(inputs.epsilon), ln_conc);
    Ok(BoundReport::from_components("ood_winf", components, ln_value))
}

/// OOD generalization bound for the `W₂` ball, given `(2r/ε, ε, P_n, 2)`
/// robustness. `ε` cannot be zero: the robust region `B(x, 2r/ε)` would
/// swallow the support.
pub fn ood_bound_w2(inputs: &BoundInputs) -> Result<BoundReport, CertifyError> {
    inputs.validate()?;
    if inputs.epsilon == 0.0 {
        return Err(CertifyError::InvalidInput(
            "epsilon must be positive for the W₂ bound".into(),
        ));
    }
    let eff_r = inputs.r / inputs.epsilon;
    let covering = covering_bound(inputs.d0, inputs.diameter, eff_r)?;
    let (conc, ln_conc) =
        concentration_term(covering.ln_value, inputs.loss_bound, inputs.n, inputs.theta, 1.0);
    let robustness = (inputs.loss_bound + 1.0) * inputs.epsilon;
    let mut components = BTreeMap::new();
    components.insert("robustness", robustness);
    components.insert("concentration", conc);
    let ln_value = log_add_exp(safe_ln(robustness), ln_conc);
    Ok(BoundReport::from_components("ood_w2", components, ln_value))
}

fn safe_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Optimization term of the high-probability convergence rate:
/// `(G²·ln(ln(2T/θ))·(64L + 16·mu_w) + G²·L) / (T·mu_w²)`.
pub fn high_probability_rate_term(g: f64, l: f64, mu_w: f64, t: usize, theta: f64) -> f64 {
    let lnln = (2.0 * t as f64 / theta).ln().ln();
    (g * g * lnln * (64.0 * l + 16.0 * mu_w) + g * g * l) / (t as f64 * mu_w * mu_w)
}

/// Excess-risk bound for the adversarially trained iterate after `T` steps,
/// assuming the optimum satisfies `R~(w*) ≤ ε₀` (`inputs.epsilon`).
/// Requires `T ≥ 4` and `0 < θ ≤ 1/e`.
pub fn excess_risk_bound(
    inputs: &BoundInputs,
    profile: &crate::losses::ConstantsProfile,
    t: usize,
    p: BallNorm,
) -> Result<BoundReport, CertifyError> {
    inputs.validate()?;
    if t < 4 {
        return Err(CertifyError::Precondition(format!("T must be at least 4, got {t}")));
    }
    if inputs.theta > 1.0 / std::f64::consts::E {
        return Err(CertifyError::Precondition(format!(
            "theta must be at most 1/e, got {}",
            inputs.theta
        )));
    }
    profile.validate().map_err(|e| CertifyError::InvalidInput(e.to_string()))?;
    let l = profile.smoothness_l();
    let multiplier = match p {
        BallNorm::LInf => 3.0,
        BallNorm::L2 => 2.0 * inputs.loss_bound + 3.0,
    };
    let hp = high_probability_rate_term(profile.g, l, profile.mu_w, t, inputs.theta);
    // Covering radius: r for the cube ball, r/ε₀ for the sphere.
    let eff_r = match p {
        BallNorm::LInf => inputs.r,
        BallNorm::L2 => {
            if inputs.epsilon == 0.0 {
                return Err(CertifyError::InvalidInput(
                    "epsilon₀ must be positive for the W₂ excess bound".into(),
                ));
            }
            inputs.r / inputs.epsilon
        }
    };
    let covering = covering_bound(inputs.d0, inputs.diameter, eff_r)?;
    let (conc, ln_conc) =
        concentration_term(covering.ln_value, inputs.loss_bound, inputs.n, inputs.theta, 2.0);
    let mut components = BTreeMap::new();
    components.insert("suboptimality", multiplier * inputs.epsilon);
    components.insert("optimization", multiplier * hp);
    components.insert("concentration", conc);
    let ln_value = log_add_exp(
        log_add_exp(safe_ln(multiplier * inputs.epsilon), safe_ln(multiplier * hp)),
        ln_conc,
    );
    Ok(BoundReport::from_components("excess_risk", components, ln_value))
}

/// Transfer bound of a robustly pretrained model, plus its finite-sample
/// variant for the cube norm and the required pretraining radius for the
/// sphere norm.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainTransferReport {
    /// `ε_pre + 2M·TV(P₀, Q₀)`.
    pub population: BoundReport,
    /// `ε_pre + 2M·TV + M·√(ln(1/θ)/(2n))`, cube norm only.
    pub finite_sample: Option<BoundReport>,
    /// `r₀ = √(2D²·TV + r(2)²)`, sphere norm only.
    pub required_pretrain_radius: Option<f64>,
}

pub fn pretrain_transfer_bound(
    inputs: &BoundInputs,
    p: BallNorm,
) -> Result<PretrainTransferReport, CertifyError> {
    inputs.validate()?;
    let epsilon_pre = inputs.epsilon_pre.ok_or_else(|| {
        CertifyError::InvalidInput("epsilon_pre is required for the transfer bound".into())
    })?;
    let tv = inputs
        .tv
        .ok_or_else(|| CertifyError::InvalidInput("tv is required for the transfer bound".into()))?;
    if !(0.0..=1.0).contains(&tv) {
        return Err(CertifyError::InvalidInput(format!("tv must lie in [0, 1], got {tv}")));
    }
    if !(epsilon_pre.is_finite() && epsilon_pre >= 0.0) {
        return Err(CertifyError::InvalidInput(format!(
            "epsilon_pre must be a nonnegative real, got {epsilon_pre}"
        )));
    }
    let tv_term = 2.0 * inputs.loss_bound * tv;
    let mut components = BTreeMap::new();
    components.insert("epsilon_pre", epsilon_pre);
    components.insert("tv_term", tv_term);
    let ln_value = log_add_exp(safe_ln(epsilon_pre), safe_ln(tv_term));
    let population = BoundReport::from_components("pretrain_transfer", components, ln_value);

    let finite_sample = match p {
        BallNorm::LInf => {
            let sampling =
                inputs.loss_bound * ((1.0 / inputs.theta).ln() / (2.0 * inputs.n as f64)).sqrt();
            let mut parts = BTreeMap::new();
            parts.insert("epsilon_pre", epsilon_pre);
            parts.insert("tv_term", tv_term);
            parts.insert("sampling", sampling);
            let ln = log_add_exp(ln_value, safe_ln(sampling));
            Some(BoundReport::from_components("pretrain_transfer_finite_sample", parts, ln))
        }
        BallNorm::L2 => None,
    };
    let required_pretrain_radius = match p {
        BallNorm::L2 => {
            Some((2.0 * inputs.diameter * inputs.diameter * tv + inputs.r * inputs.r).sqrt())
        }
        BallNorm::LInf => None,
    };
    Ok(PretrainTransferReport { population, finite_sample, required_pretrain_radius })
}
