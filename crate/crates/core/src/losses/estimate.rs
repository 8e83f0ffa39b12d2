//! Empirical fallback for losses without analytic constants: probe random
//! point pairs inside the declared boxes and record the extreme observed
//! ratios. The result is marked `certified = false`; it never under-reports
//! an observed ratio but carries no guarantee beyond the probes.

use super::{box_sample, ConstantsProfile, LossError, SmoothLoss};
use crate::numkit::{self, NormOrder, RngState};

/// Curvature estimates of non-concave surfaces bottom out here so the profile
/// stays type-valid; `certified = false` marks them non-binding.
const MU_FLOOR: f64 = 1e-9;

pub fn estimate_profile(
    loss: &dyn SmoothLoss,
    probes: usize,
    mut rng: RngState,
) -> Result<ConstantsProfile, LossError> {
    if probes < 2 {
        return Err(LossError::TooFewProbes(probes));
    }
    let mut l11: f64 = 0.0;
    let mut l12: f64 = 0.0;
    let mut l21: f64 = 0.0;
    let mut l22: f64 = 0.0;
    let mut g: f64 = 0.0;
    let mut m: f64 = 0.0;
    let mut mu_w = f64::INFINITY;
    let mut mu_x = f64::INFINITY;

    for _ in 0..probes {
        let w1 = box_sample(loss.iterate_box(), &mut rng);
        let w2 = box_sample(loss.iterate_box(), &mut rng);
        let x1 = box_sample(loss.sample_box(), &mut rng);
        let x2 = box_sample(loss.sample_box(), &mut rng);
        let y = loss.probe_label(&mut rng);

        let dw = numkit::norm(&numkit::sub(&w1, &w2), NormOrder::L2)?;
        let dx = numkit::norm(&numkit::sub(&x1, &x2), NormOrder::L2)?;

        let gw11 = loss.grad_w(&w1, &x1, &y);
        let gx11 = loss.grad_x(&w1, &x1, &y);
        let f11 = loss.value(&w1, &x1, &y);

        g = g.max(numkit::norm(&gw11, NormOrder::L2)?);
        m = m.max(f11).max(loss.value(&w2, &x2, &y));

        if dw > 1e-12 {
            let gw21 = loss.grad_w(&w2, &x1, &y);
            let gx21 = loss.grad_x(&w2, &x1, &y);
            l11 = l11.max(numkit::norm(&numkit::sub(&gw11, &gw21), NormOrder::L2)? / dw);
            l21 = l21.max(numkit::norm(&numkit::sub(&gx11, &gx21), NormOrder::L2)? / dw);
            // Curvature of f in w along the pair, a lower-bound proxy for the
            // PL constant of the robust objective.
            let f21 = loss.value(&w2, &x1, &y);
            let lin = numkit::dot(&gw11, &numkit::sub(&w2, &w1));
            mu_w = mu_w.min(2.0 * (f21 - f11 - lin) / (dw * dw));
        }
        if dx > 1e-12 {
            let gw12 = loss.grad_w(&w1, &x2, &y);
            let gx12 = loss.grad_x(&w1, &x2, &y);
            l12 = l12.max(numkit::norm(&numkit::sub(&gw11, &gw12), NormOrder::L2)? / dx);
            l22 = l22.max(numkit::norm(&numkit::sub(&gx11, &gx12), NormOrder::L2)? / dx);
            // Strong concavity in the input direction x2 − x1.
            let f12 = loss.value(&w1, &x2, &y);
            let lin = numkit::dot(&gx11, &numkit::sub(&x2, &x1));
            mu_x = mu_x.min(2.0 * (lin - (f12 - f11)) / (dx * dx));
        }
    }

    Ok(ConstantsProfile {
        l11,
        l12,
        l21,
        l22,
        g,
        m,
        mu_w: if mu_w.is_finite() { mu_w.max(MU_FLOOR) } else { MU_FLOOR },
        mu_x: if mu_x.is_finite() { mu_x.max(MU_FLOOR) } else { MU_FLOOR },
        certified: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{CoordBox, Label, QuadraticSaddle};
    use crate::numkit::Vector;

    struct ConstLoss {
        c: f64,
        iterate_box: CoordBox,
        sample_box: CoordBox,
        profile: ConstantsProfile,
    }

    impl SmoothLoss for ConstLoss {
        fn dim_w(&self) -> usize {
            self.iterate_box.len()
        }
        fn dim_x(&self) -> usize {
            self.sample_box.len()
        }
        fn iterate_box(&self) -> &[[f64; 2]] {
            &self.iterate_box
        }
        fn sample_box(&self) -> &[[f64; 2]] {
            &self.sample_box
        }
        fn value(&self, _w: &[f64], _x: &[f64], _y: &Label) -> f64 {
            self.c
        }
        fn grad_w(&self, w: &[f64], _x: &[f64], _y: &Label) -> Vector {
            vec![0.0; w.len()]
        }
        fn grad_x(&self, _w: &[f64], x: &[f64], _y: &Label) -> Vector {
            vec![0.0; x.len()]
        }
        fn profile(&self) -> &ConstantsProfile {
            &self.profile
        }
    }

    #[test]
    fn quadratic_l22_recovered() {
        let mu_x = 1.3;
        let loss = QuadraticSaddle::new(
            0.7,
            mu_x,
            vec![0.0, 0.0],
            0.0,
            vec![[-2.0, 2.0]; 2],
            vec![[-1.0, 1.0]; 2],
        )
        .unwrap();
        let est = estimate_profile(&loss, 10_000, RngState::new(3)).unwrap();
        assert!(est.l22 >= 0.99 * mu_x && est.l22 <= 1.01 * mu_x);
        assert!((est.mu_x - mu_x).abs() < 1e-6);
        // The parameter curvature is exactly mu_w along every probe pair.
        assert!((est.mu_w - 0.7).abs() < 1e-6);
        assert!(!est.certified);
        // Estimates never exceed the certified bounds.
        assert!(est.g <= loss.profile().g + 1e-9);
        assert!(est.m <= loss.profile().m + 1e-9);
    }

    #[test]
    fn constant_loss_flatlines() {
        let profile = ConstantsProfile {
            l11: 0.0,
            l12: 0.0,
            l21: 0.0,
            l22: 0.0,
            g: 0.0,
            m: 1.0,
            mu_w: 1.0,
            mu_x: 1.0,
            certified: false,
        };
        let loss = ConstLoss {
            c: 0.4,
            iterate_box: vec![[-1.0, 1.0]; 2],
            sample_box: vec![[-1.0, 1.0]; 2],
            profile,
        };
        let est = estimate_profile(&loss, 500, RngState::new(9)).unwrap();
        assert_eq!(est.l11, 0.0);
        assert_eq!(est.l12, 0.0);
        assert_eq!(est.l21, 0.0);
        assert_eq!(est.l22, 0.0);
        assert_eq!(est.g, 0.0);
        assert!((est.m - 0.4).abs() < 1e-15);
    }

    #[test]
    fn too_few_probes_rejected() {
        let loss = QuadraticSaddle::new(
            1.0,
            1.0,
            vec![0.0],
            0.0,
            vec![[-1.0, 1.0]],
            vec![[-1.0, 1.0]],
        )
        .unwrap();
        assert!(matches!(
            estimate_profile(&loss, 1, RngState::new(0)),
            Err(LossError::TooFewProbes(1))
        ));
    }
}
