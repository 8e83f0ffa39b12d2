//! Synthetic dataset generation on compact boxes with declared label rules.

use serde::{Deserialize, Serialize};

use oodrisk_core::losses::{box_l1_diameter, Dataset, Label, LabeledSample};
use oodrisk_core::numkit::{RngState, Vector};
use oodrisk_core::transport::DiscreteDistribution;

use crate::HarnessError;

/// How labels are assigned to sampled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "rule", rename_all = "snake_case")]
pub enum LabelRule {
    /// Label-free tasks carry a zero real target.
    Zero,
    /// `y = 1{wᵀx > 0}`, resampling points inside the margin band so the two
    /// classes are separated by at least `margin` in score.
    LogisticMargin { weights: Vector, margin: f64 },
    /// Real target `y = wᵀx`.
    LinearReal { weights: Vector },
}

const MARGIN_RESAMPLE_CAP: usize = 10_000;

/// Draw `n` i.i.d. samples uniform over `support_box` and label them by the
/// declared rule. The dataset's `ℓ₁`-diameter is the exact diameter of the box.
pub fn make_dataset(
    n: usize,
    d0: usize,
    support_box: &[[f64; 2]],
    label_rule: &LabelRule,
    seed: u64,
) -> Result<Dataset, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Invalid("dataset size must be at least 1".into()));
    }
    if support_box.len() != d0 {
        return Err(HarnessError::Invalid(format!(
            "support box has {} coordinates, expected d0 = {d0}",
            support_box.len()
        )));
    }
    for [lo, hi] in support_box {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(HarnessError::Invalid(format!("degenerate box interval [{lo}, {hi}]")));
        }
    }
    match label_rule {
        LabelRule::LogisticMargin { weights, .. } | LabelRule::LinearReal { weights } => {
            if weights.len() != d0 {
                return Err(HarnessError::Invalid(format!(
                    "label rule weights have dimension {}, expected {d0}",
                    weights.len()
                )));
            }
        }
        LabelRule::Zero => {}
    }
    let mut rng = RngState::new(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = draw_sample(support_box, label_rule, &mut rng)?;
        samples.push(LabeledSample { x, y });
    }
    Dataset::new(samples, support_box.to_vec()).map_err(HarnessError::from)
}

fn draw_sample(
    support_box: &[[f64; 2]],
    rule: &LabelRule,
    rng: &mut RngState,
) -> Result<(Vector, Label), HarnessError> {
    match rule {
        LabelRule::Zero => {
            let x = sample_box_point(support_box, rng);
            Ok((x, Label::Real(0.0)))
        }
        LabelRule::LinearReal { weights } => {
            let x = sample_box_point(support_box, rng);
            let score = oodrisk_core::numkit::dot(weights, &x);
            Ok((x, Label::Real(score)))
        }
        LabelRule::LogisticMargin { weights, margin } => {
            for _ in 0..MARGIN_RESAMPLE_CAP {
                let x = sample_box_point(support_box, rng);
                let score = oodrisk_core::numkit::dot(weights, &x);
                if score.abs() >= *margin {
                    let y = Label::Class(u32::from(score > 0.0));
                    return Ok((x, y));
                }
            }
            Err(HarnessError::Invalid(format!(
                "margin band {margin} rejected {MARGIN_RESAMPLE_CAP} consecutive draws"
            )))
        }
    }
}

fn sample_box_point(support_box: &[[f64; 2]], rng: &mut RngState) -> Vector {
    support_box.iter().map(|[lo, hi]| rng.next_in_range(*lo, *hi)).collect()
}

/// Uniform discrete population on `size` box points; the reference measure
/// experiments sample finite training sets from.
pub fn make_population(
    size: usize,
    support_box: &[[f64; 2]],
    seed: u64,
) -> Result<DiscreteDistribution, HarnessError> {
    let atoms: Vec<Vector> = {
        let mut rng = RngState::new(seed);
        (0..size).map(|_| sample_box_point(support_box, &mut rng)).collect()
    };
    DiscreteDistribution::uniform(atoms).map_err(HarnessError::from)
}

/// Draw `n` atoms i.i.d. from a finite distribution (by weight).
pub fn sample_from(dist: &DiscreteDistribution, n: usize, rng: &mut RngState) -> Vec<Vector> {
    (0..n)
        .map(|_| {
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut chosen = dist.len() - 1;
            for (i, &w) in dist.weights().iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            dist.atoms()[chosen].clone()
        })
        .collect()
}

/// Dataset view of a finite distribution's atoms with zero labels; weighted
/// atoms must be uniform for this to preserve the measure.
pub fn dataset_from_atoms(
    atoms: &[Vector],
    support_box: &[[f64; 2]],
) -> Result<Dataset, HarnessError> {
    let samples = atoms
        .iter()
        .map(|x| LabeledSample { x: x.clone(), y: Label::Real(0.0) })
        .collect();
    Dataset::new(samples, support_box.to_vec()).map_err(HarnessError::from)
}

/// Exact `ℓ₁`-diameter of a box, re-exported for bound inputs.
pub fn box_diameter_l1(support_box: &[[f64; 2]]) -> f64 {
    box_l1_diameter(support_box)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_lands_in_box() {
        let ds = make_dataset(1, 2, &[[0.0, 1.0], [0.0, 1.0]], &LabelRule::Zero, 3).unwrap();
        assert_eq!(ds.len(), 1);
        for s in ds.samples() {
            assert!(s.x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn unit_square_diameter() {
        let ds = make_dataset(5, 2, &[[0.0, 1.0], [0.0, 1.0]], &LabelRule::Zero, 3).unwrap();
        assert_eq!(ds.diameter_l1(), 2.0);
    }

    #[test]
    fn empirical_mean_near_center() {
        // CLT check: the sample mean of 10⁴ uniform draws stays within 3σ of
        // the box center, σ = width/(√12·√n).
        let n = 10_000;
        let ds = make_dataset(n, 2, &[[0.0, 1.0], [0.0, 1.0]], &LabelRule::Zero, 2024).unwrap();
        for c in 0..2 {
            let mean: f64 = ds.samples().iter().map(|s| s.x[c]).sum::<f64>() / n as f64;
            let sigma = 1.0 / (12.0_f64.sqrt() * (n as f64).sqrt());
            assert!((mean - 0.5).abs() <= 3.0 * sigma, "coordinate {c}: mean {mean}");
        }
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(make_dataset(3, 1, &[[1.0, 1.0]], &LabelRule::Zero, 0).is_err());
        assert!(make_dataset(0, 1, &[[0.0, 1.0]], &LabelRule::Zero, 0).is_err());
    }

    #[test]
    fn margin_rule_separates_classes() {
        let rule = LabelRule::LogisticMargin { weights: vec![2.0, -1.0], margin: 0.2 };
        let ds = make_dataset(200, 2, &[[-1.0, 1.0], [-1.0, 1.0]], &rule, 5).unwrap();
        for s in ds.samples() {
            let score = 2.0 * s.x[0] - s.x[1];
            assert!(score.abs() >= 0.2);
            match s.y {
                Label::Class(1) => assert!(score > 0.0),
                Label::Class(0) => assert!(score < 0.0),
                other => panic!("unexpected label {other:?}"),
            }
        }
    }

    #[test]
    fn weighted_sampling_respects_masses() {
        let dist = DiscreteDistribution::new(
            vec![vec![0.0], vec![1.0]],
            vec![0.9, 0.1],
        )
        .unwrap();
        let mut rng = RngState::new(11);
        let draws = sample_from(&dist, 20_000, &mut rng);
        let heavy = draws.iter().filter(|a| a[0] == 0.0).count() as f64 / 20_000.0;
        assert!((heavy - 0.9).abs() < 0.02);
    }
}
