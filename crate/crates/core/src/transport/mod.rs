//! Exact distances between finitely supported distributions and worst-case
//! risk over Wasserstein balls.
//!
//! Distances implemented at desk scale (supports ≤ 64):
//!
//! ```text
//! W₂(P, Q)  = (min over couplings of Σ π_ij ‖u_i − v_j‖₂²)^{1/2}    (transportation LP)
//! W∞(P, Q)  = min over couplings of max supported ‖u_i − v_j‖∞     (bottleneck matching)
//! TV(P, Q)  = ½ Σ over the atom union of |P(a) − Q(a)|             (exact coordinate match)
//! ```
//!
//! plus a brute-force coupling enumerator over equal-mass expansions that
//! serves as the oracle for both solvers.
//!
//! Worst-case risks: the W∞ ball supremum equals the expected per-atom ball
//! supremum (distributional perturbation at radius r is equivalent to
//! pointwise input perturbation), and the W₂ ball supremum is solved through
//! the Lagrangian of its per-atom displacement form: maximize
//! `Σ_i w_i f(w, x_i + δ_i)` subject to `Σ_i w_i ‖δ_i‖² ≤ r²` by bisection on
//! the multiplier of the penalized objective `f − λ‖δ‖²`.

mod bottleneck;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{Label, LossError, SmoothLoss};
use crate::minimax::{inner_loop, TrainError};
use crate::numkit::{self, NormOrder, NumError, PerturbationBudget, Vector};

/// Desk-scale cap on the number of atoms handled by the exact solvers.
pub const MAX_SUPPORT: usize = 64;
/// Largest common denominator accepted for the equal-mass expansion.
pub const MAX_DENOMINATOR: usize = 256;
/// Largest equal-mass expansion the brute-force enumerator accepts.
pub const MAX_BRUTE_FORCE: usize = 8;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("distributions live in different dimensions: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("support of size {got} exceeds the desk-scale cap {cap}")]
    SupportTooLarge { got: usize, cap: usize },
    #[error("weights are not rational with common denominator ≤ {max_den}")]
    UnsupportedWeights { max_den: usize },
    #[error("equal-mass expansion of size {got} exceeds brute-force cap {cap}")]
    TooLargeForBruteForce { got: usize, cap: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Num(#[from] NumError),
}

impl From<TrainError> for TransportError {
    fn from(e: TrainError) -> Self {
        TransportError::Numerical(e.to_string())
    }
}

/// Finitely supported probability measure on `R^{d0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawDistribution", into = "RawDistribution")]
pub struct DiscreteDistribution {
    atoms: Vec<Vector>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    atoms: Vec<Vector>,
    weights: Vec<f64>,
}

impl From<DiscreteDistribution> for RawDistribution {
    fn from(d: DiscreteDistribution) -> Self {
        Self { atoms: d.atoms, weights: d.weights }
    }
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = String;

    fn try_from(raw: RawDistribution) -> Result<Self, String> {
        DiscreteDistribution::new(raw.atoms, raw.weights).map_err(|e| e.to_string())
    }
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Vector>, weights: Vec<f64>) -> Result<Self, TransportError> {
        if atoms.is_empty() {
            return Err(TransportError::InvalidDistribution("no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(TransportError::InvalidDistribution(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        for atom in &atoms {
            if atom.len() != dim {
                return Err(TransportError::InvalidDistribution("ragged atom dimensions".into()));
            }
            numkit::norm(atom, NormOrder::LInf)?;
        }
        let mut total = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(TransportError::InvalidDistribution(format!("bad weight {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(TransportError::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms, weights })
    }

    /// Point mass at `atom`.
    pub fn dirac(atom: Vector) -> Result<Self, TransportError> {
        Self::new(vec![atom], vec![1.0])
    }

    pub fn uniform(atoms: Vec<Vector>) -> Result<Self, TransportError> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn atoms(&self) -> &[Vector] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("distribution serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, TransportError> {
        serde_json::from_str(text).map_err(|e| TransportError::InvalidDistribution(e.to_string()))
    }

    /// Expected value of `g` over the atoms, summed in atom order.
    pub fn expect(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, &w)| w * g(a))
            .sum()
    }
}

/// Joint mass matrix with the two distributions as marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub matrix: Vec<Vec<f64>>,
}

impl Coupling {
    /// Check the marginal constraints to `1e-10`.
    pub fn validate(
        &self,
        source: &DiscreteDistribution,
        target: &DiscreteDistribution,
    ) -> Result<(), TransportError> {
        if self.matrix.len() != source.len() {
            return Err(TransportError::InvalidDistribution("coupling row count".into()));
        }
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != target.len() {
                return Err(TransportError::InvalidDistribution("coupling column count".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - source.weights()[i]).abs() > 1e-10 {
                return Err(TransportError::Numerical(format!(
                    "row {i} sums to {sum}, expected {}",
                    source.weights()[i]
                )));
            }
        }
        for j in 0..target.len() {
            let sum: f64 = self.matrix.iter().map(|row| row[j]).sum();
            if (sum - target.weights()[j]).abs() > 1e-10 {
                return Err(TransportError::Numerical(format!(
                    "column {j} sums to {sum}, expected {}",
                    target.weights()[j]
                )));
            }
        }
        Ok(())
    }
}

fn check_pair(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<(), TransportError> {
    if p.dim() != q.dim() {
        return Err(TransportError::DimensionMismatch { left: p.dim(), right: q.dim() });
    }
    for d in [p, q] {
        if d.len() > MAX_SUPPORT {
            return Err(TransportError::SupportTooLarge { got: d.len(), cap: MAX_SUPPORT });
        }
    }
    Ok(())
}

/// Deterministic total order on distributions; evaluating symmetric distances
/// on the canonical orientation makes them exactly symmetric.
fn canonical_order(p: &DiscreteDistribution, q: &DiscreteDistribution) -> bool {
    let key = |d: &DiscreteDistribution| {
        let mut bits: Vec<u64> = Vec::with_capacity(d.len() * (d.dim() + 1));
        for (atom, w) in d.atoms().iter().zip(d.weights()) {
            bits.extend(atom.iter().map(|x| x.to_bits()));
            bits.push(w.to_bits());
        }
        bits
    };
    key(p) <= key(q)
}

fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn linf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// 2-Wasserstein distance with `ℓ₂` ground cost.
pub fn wasserstein2(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<f64, TransportError> {
    Ok(wasserstein2_with_plan(p, q)?.0)
}

/// As [`wasserstein2`], also returning an optimal coupling.
pub fn wasserstein2_with_plan(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<(f64, Coupling), TransportError> {
    check_pair(p, q)?;
    let (src, dst, transposed) =
        if canonical_order(p, q) { (p, q, false) } else { (q, p, true) };
    let cost: Vec<Vec<f64>> = src
        .atoms()
        .iter()
        .map(|u| dst.atoms().iter().map(|v| squared_l2(u, v)).collect())
        .collect();
    let sol = simplex::solve(src.weights(), dst.weights(), &cost)?;
    let distance = sol.objective.max(0.0).sqrt();
    let matrix = if transposed {
        let mut t = vec![vec![0.0; sol.plan.len()]; sol.plan[0].len()];
        for (i, row) in sol.plan.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                t[j][i] = v;
            }
        }
        t
    } else {
        sol.plan
    };
    Ok((distance, Coupling { matrix }))
}

/// ∞-Wasserstein (bottleneck) distance with `ℓ∞` ground cost, for rational
/// weights with common denominator ≤ [`MAX_DENOMINATOR`].
pub fn wasserstein_inf(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<f64, TransportError> {
    check_pair(p, q)?;
    let (den_p, counts_p) = bottleneck::integerize_weights(p.weights(), MAX_DENOMINATOR)?;
    let (den_q, counts_q) = bottleneck::integerize_weights(q.weights(), MAX_DENOMINATOR)?;
    let den = lcm(den_p, den_q);
    if den > MAX_DENOMINATOR {
        return Err(TransportError::UnsupportedWeights { max_den: MAX_DENOMINATOR });
    }
    let (_, supply) = scale_counts(den_p, counts_p, den);
    let (_, demand) = scale_counts(den_q, counts_q, den);
    let cost: Vec<Vec<f64>> = p
        .atoms()
        .iter()
        .map(|u| q.atoms().iter().map(|v| linf_dist(u, v)).collect())
        .collect();
    bottleneck::bottleneck_value(&supply, &demand, &cost, den)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn scale_counts(den: usize, counts: Vec<usize>, target: usize) -> (usize, Vec<usize>) {
    let factor = target / den;
    (target, counts.into_iter().map(|k| k * factor).collect())
}

/// Total variation distance; atoms are matched by exact coordinate equality,
/// so callers needing tolerance must pre-quantize.
pub fn tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    use std::collections::BTreeMap;
    let mut mass: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
    for (atom, &w) in p.atoms().iter().zip(p.weights()) {
        let key: Vec<u64> = atom.iter().map(|x| x.to_bits()).collect();
        mass.entry(key).or_insert((0.0, 0.0)).0 += w;
    }
    for (atom, &w) in q.atoms().iter().zip(q.weights()) {
        let key: Vec<u64> = atom.iter().map(|x| x.to_bits()).collect();
        mass.entry(key).or_insert((0.0, 0.0)).1 += w;
    }
    0.5 * mass.values().map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Exact `W_p` by enumerating all permutation couplings of the equal-mass
/// expansion (the Birkhoff vertices). Oracle for the two solvers above.
pub fn brute_force_wp(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    order: NormOrder,
) -> Result<f64, TransportError> {
    if p.dim() != q.dim() {
        return Err(TransportError::DimensionMismatch { left: p.dim(), right: q.dim() });
    }
    fn expand(
        d: &DiscreteDistribution,
    ) -> Result<(usize, Vec<Vector>), TransportError> {
        let (den, counts) = bottleneck::integerize_weights(d.weights(), MAX_DENOMINATOR)?;
        if den > MAX_BRUTE_FORCE {
            return Err(TransportError::TooLargeForBruteForce {
                got: den,
                cap: MAX_BRUTE_FORCE,
            });
        }
        let mut units = Vec::with_capacity(den);
        for (atom, &k) in d.atoms().iter().zip(&counts) {
            for _ in 0..k {
                units.push(atom.clone());
            }
        }
        Ok((den, units))
    }
    let (den_p, units_p) = expand(p)?;
    let (den_q, units_q) = expand(q)?;
    let den = lcm(den_p, den_q);
    if den > MAX_BRUTE_FORCE {
        return Err(TransportError::TooLargeForBruteForce { got: den, cap: MAX_BRUTE_FORCE });
    }
    let blow = |units: Vec<Vector>, d: usize| -> Vec<Vector> {
        let factor = den / d;
        units
            .into_iter()
            .flat_map(|u| std::iter::repeat_n(u, factor))
            .collect()
    };
    let units_p = blow(units_p, den_p);
    let units_q = blow(units_q, den_q);

    let mut perm: Vec<usize> = (0..den).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm over all den! ≤ 8! assignments.
    let mut c = vec![0usize; den];
    let mut eval = |perm: &[usize]| {
        let cost = match order {
            NormOrder::L2 => {
                let mean: f64 = perm
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| squared_l2(&units_p[i], &units_q[j]))
                    .sum::<f64>()
                    / den as f64;
                mean.sqrt()
            }
            NormOrder::LInf => perm
                .iter()
                .enumerate()
                .fold(0.0f64, |acc, (i, &j)| acc.max(linf_dist(&units_p[i], &units_q[j]))),
            NormOrder::L1 => {
                return Err(TransportError::Unsupported("brute force covers p ∈ {2, ∞}".into()))
            }
        };
        best = best.min(cost);
        Ok(())
    };
    eval(&perm)?;
    let mut i = 1;
    while i < den {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            eval(&perm)?;
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// How per-atom inner optima are computed by the worst-case evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BallOptQuality {
    /// Closed form, exact; quadratic family only.
    Analytic,
    /// Projected gradient ascent/descent from zero.
    Pgd { steps: usize, eta_x: Option<f64> },
}

pub(crate) fn atom_ball_sup(
    loss: &dyn SmoothLoss,
    w: &[f64],
    atom: &[f64],
    budget: PerturbationBudget,
    quality: BallOptQuality,
) -> Result<f64, TransportError> {
    let y = Label::Real(0.0);
    match quality {
        BallOptQuality::Analytic => loss
            .analytic_ball_sup(w, atom, &y, budget)
            .ok_or(TransportError::Unsupported("analytic mode needs the quadratic family".into())),
        BallOptQuality::Pgd { steps, eta_x } => {
            let eta = eta_x.unwrap_or(1.0 / loss.profile().l22);
            let sample = crate::losses::LabeledSample { x: atom.to_vec(), y };
            let zero = vec![0.0; atom.len()];
            Ok(inner_loop(loss, w, &sample, budget, steps.max(1), eta, &zero, false, true)?.1)
        }
    }
}

pub(crate) fn atom_ball_inf(
    loss: &dyn SmoothLoss,
    w: &[f64],
    atom: &[f64],
    budget: PerturbationBudget,
    quality: BallOptQuality,
) -> Result<f64, TransportError> {
    let y = Label::Real(0.0);
    match quality {
        BallOptQuality::Analytic => loss
            .analytic_ball_inf(w, atom, &y, budget)
            .ok_or(TransportError::Unsupported("analytic mode needs the quadratic family".into())),
        BallOptQuality::Pgd { steps, eta_x } => {
            let eta = eta_x.unwrap_or(1.0 / loss.profile().l22);
            let sample = crate::losses::LabeledSample { x: atom.to_vec(), y };
            let zero = vec![0.0; atom.len()];
            Ok(inner_loop(loss, w, &sample, budget, steps.max(1), eta, &zero, false, false)?.1)
        }
    }
}

fn require_label_free(loss: &dyn SmoothLoss) -> Result<(), TransportError> {
    if loss.requires_label() {
        return Err(TransportError::Unsupported(
            "worst-case risk over bare distributions needs a label-free loss; \
             evaluate labeled datasets through dataset-level risks"
                .into(),
        ));
    }
    Ok(())
}

/// Supremum of the risk over the ∞-Wasserstein ball `B_{W∞}(P0, r)`:
/// exactly the expected per-atom supremum over the `ℓ∞` ball of radius `r`.
pub fn worst_case_risk_winf(
    loss: &dyn SmoothLoss,
    w: &[f64],
    p0: &DiscreteDistribution,
    r: f64,
    quality: BallOptQuality,
) -> Result<f64, TransportError> {
    require_label_free(loss)?;
    let budget = PerturbationBudget::linf(r)?;
    let mut acc = 0.0;
    for (atom, &weight) in p0.atoms().iter().zip(p0.weights()) {
        acc += weight * atom_ball_sup(loss, w, atom, budget, quality)?;
    }
    Ok(acc)
}

/// Expected risk `R_{P0}(w)` for a label-free loss.
pub fn distribution_risk(
    loss: &dyn SmoothLoss,
    w: &[f64],
    p0: &DiscreteDistribution,
) -> Result<f64, TransportError> {
    require_label_free(loss)?;
    let y = Label::Real(0.0);
    Ok(p0.expect(|atom| loss.value(w, atom, &y)))
}

/// Result of the W₂-ball worst-case search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W2WorstCase {
    pub value: f64,
    /// Multiplier at termination; zero means the budget never bound.
    pub lambda: f64,
    /// `Σ_i w_i ‖δ_i‖²` of the returned displacement assignment.
    pub budget_used: f64,
    /// True when the per-atom maximizations were closed-form on a certified
    /// concave family; otherwise the value is a stationary-point heuristic.
    pub certified: bool,
}

const LAMBDA_BISECTIONS: usize = 60;

/// Supremum of the risk over the 2-Wasserstein ball `B_{W₂}(P0, r)` in its
/// per-atom displacement form: maximize `Σ_i w_i f(w, x_i + δ_i)` subject to
/// `Σ_i w_i ‖δ_i‖² ≤ r²`, by bisection on the multiplier λ of the penalized
/// per-atom objective `f(w, x_i + δ) − λ‖δ‖²`.
pub fn worst_case_risk_w2(
    loss: &dyn SmoothLoss,
    w: &[f64],
    p0: &DiscreteDistribution,
    r: f64,
    tolerance: f64,
) -> Result<W2WorstCase, TransportError> {
    require_label_free(loss)?;
    if !(r.is_finite() && r > 0.0) {
        return Err(TransportError::InvalidDistribution(format!(
            "W₂ worst case needs a positive radius, got {r}"
        )));
    }
    let certified = p0
        .atoms()
        .iter()
        .all(|atom| loss.analytic_penalized_argmax(w, atom, 1.0).is_some());
    let assignment = |lambda: f64| -> Result<(Vec<Vector>, f64), TransportError> {
        let mut deltas = Vec::with_capacity(p0.len());
        let mut spent = 0.0;
        for (atom, &weight) in p0.atoms().iter().zip(p0.weights()) {
            let delta = penalized_argmax(loss, w, atom, lambda)?;
            spent += weight * numkit::dot(&delta, &delta);
            deltas.push(delta);
        }
        Ok((deltas, spent))
    };
    let evaluate = |deltas: &[Vector]| -> f64 {
        let y = Label::Real(0.0);
        p0.atoms()
            .iter()
            .zip(p0.weights())
            .zip(deltas)
            .map(|((atom, &weight), delta)| weight * loss.value(w, &numkit::add(atom, delta), &y))
            .sum()
    };

    let budget = r * r;
    let (deltas0, spent0) = assignment(0.0)?;
    if spent0 <= budget {
        return Ok(W2WorstCase {
            value: evaluate(&deltas0),
            lambda: 0.0,
            budget_used: spent0,
            certified,
        });
    }
    // Initial bracket [0, L22 + 2·G_x/r]; grow if the cap still overspends.
    let y = Label::Real(0.0);
    let g_x = p0.atoms().iter().fold(0.0f64, |acc, atom| {
        acc.max(numkit::norm(&loss.grad_x(w, atom, &y), NormOrder::L2).unwrap_or(f64::INFINITY))
    });
    let mut lo = 0.0;
    let mut hi = loss.profile().l22 + 2.0 * g_x / r;
    let mut grow = 0;
    while assignment(hi)?.1 > budget {
        hi *= 2.0;
        grow += 1;
        if grow > 40 {
            return Err(TransportError::Numerical(format!(
                "λ-bisection failed to bracket the budget: λ = {hi} still spends more than r² = {budget}"
            )));
        }
    }
    let mut feasible = assignment(hi)?;
    for _ in 0..LAMBDA_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let cand = assignment(mid)?;
        if cand.1 <= budget {
            hi = mid;
            feasible = cand;
        } else {
            lo = mid;
        }
        if (budget - feasible.1).abs() <= tolerance * budget.max(1e-300) {
            break;
        }
    }
    Ok(W2WorstCase {
        value: evaluate(&feasible.0),
        lambda: hi,
        budget_used: feasible.1,
        certified,
    })
}

/// Maximizer of `δ ↦ f(w, x + δ) − λ‖δ‖²`, analytic when available,
/// otherwise by unconstrained gradient ascent from zero.
fn penalized_argmax(
    loss: &dyn SmoothLoss,
    w: &[f64],
    atom: &[f64],
    lambda: f64,
) -> Result<Vector, TransportError> {
    if let Some(delta) = loss.analytic_penalized_argmax(w, atom, lambda) {
        return Ok(delta);
    }
    let y = Label::Real(0.0);
    let step = 1.0 / (loss.profile().l22 + 2.0 * lambda).max(1e-12);
    let mut delta = vec![0.0; atom.len()];
    for _ in 0..300 {
        let x = numkit::add(atom, &delta);
        let mut g = loss.grad_x(w, &x, &y);
        numkit::axpy(&mut g, -2.0 * lambda, &delta);
        numkit::axpy(&mut delta, step, &g);
    }
    Ok(delta)
}
