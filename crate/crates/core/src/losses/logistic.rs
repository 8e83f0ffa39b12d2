//! Binary logistic regression on a linear score, `f = softplus(−ỹ·wᵀx)`
//! with `ỹ ∈ {−1, +1}`. Smooth and Lipschitz on compact boxes, but not
//! strongly concave in the perturbation, so its profile is estimated
//! (`certified = false`) and it is excluded from rate guarantees.

use super::{
    estimate_profile, validate_box, ConstantsProfile, CoordBox, Label, LossError, SmoothLoss,
};
use crate::numkit::{self, RngState, Vector};

#[derive(Debug, Clone)]
pub struct LogisticLoss {
    dim: usize,
    iterate_box: CoordBox,
    sample_box: CoordBox,
    profile: ConstantsProfile,
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticLoss {
    pub fn new(
        iterate_box: CoordBox,
        sample_box: CoordBox,
        probes: usize,
        probe_seed: u64,
    ) -> Result<Self, LossError> {
        validate_box(&iterate_box, "iterate box")?;
        validate_box(&sample_box, "sample box")?;
        if iterate_box.len() != sample_box.len() {
            return Err(LossError::DimensionMismatch {
                expected: iterate_box.len(),
                got: sample_box.len(),
            });
        }
        let dim = iterate_box.len();
        let mut loss = Self {
            dim,
            iterate_box,
            sample_box,
            profile: ConstantsProfile {
                l11: 0.0,
                l12: 0.0,
                l21: 0.0,
                l22: 0.0,
                g: 0.0,
                m: 0.0,
                mu_w: 1.0,
                mu_x: 1.0,
                certified: false,
            },
        };
        let mut profile = estimate_profile(&loss, probes, RngState::new(probe_seed))?;
        // The value and gradient-norm bounds admit exact suprema over the
        // boxes; probes alone would under-report them.
        let max_score: f64 = loss
            .iterate_box
            .iter()
            .zip(&loss.sample_box)
            .map(|([lw, uw], [lx, ux])| {
                [lw * lx, lw * ux, uw * lx, uw * ux]
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        let min_score: f64 = loss
            .iterate_box
            .iter()
            .zip(&loss.sample_box)
            .map(|([lw, uw], [lx, ux])| {
                [lw * lx, lw * ux, uw * lx, uw * ux].into_iter().fold(f64::INFINITY, f64::min)
            })
            .sum();
        profile.m = softplus(max_score.abs().max(min_score.abs()));
        profile.g = loss
            .sample_box
            .iter()
            .map(|[lo, hi]| {
                let m = lo.abs().max(hi.abs());
                m * m
            })
            .sum::<f64>()
            .sqrt();
        loss.profile = profile;
        Ok(loss)
    }

    /// Exact worst-case value over a cube of radius `r`: the adversarial score
    /// shift of a linear model is `r·‖w‖₁`.
    pub fn linf_ball_sup(&self, w: &[f64], x: &[f64], y: &Label, r: f64) -> f64 {
        let z = numkit::dot(w, x);
        let l1: f64 = w.iter().map(|c| c.abs()).sum();
        softplus(-y.signed() * z + r * l1)
    }
}

impl SmoothLoss for LogisticLoss {
    fn dim_w(&self) -> usize {
        self.dim
    }

    fn dim_x(&self) -> usize {
        self.dim
    }

    fn iterate_box(&self) -> &[[f64; 2]] {
        &self.iterate_box
    }

    fn sample_box(&self) -> &[[f64; 2]] {
        &self.sample_box
    }

    fn value(&self, w: &[f64], x: &[f64], y: &Label) -> f64 {
        softplus(-y.signed() * numkit::dot(w, x))
    }

    fn grad_w(&self, w: &[f64], x: &[f64], y: &Label) -> Vector {
        let s = y.signed();
        let coeff = -s * sigmoid(-s * numkit::dot(w, x));
        numkit::scale(x, coeff)
    }

    fn grad_x(&self, w: &[f64], x: &[f64], y: &Label) -> Vector {
        let s = y.signed();
        let coeff = -s * sigmoid(-s * numkit::dot(w, x));
        numkit::scale(w, coeff)
    }

    fn profile(&self) -> &ConstantsProfile {
        &self.profile
    }

    fn requires_label(&self) -> bool {
        true
    }

    fn probe_label(&self, rng: &mut RngState) -> Label {
        Label::Class(rng.next_uniform_index(2).expect("nonempty range") as u32)
    }
}
