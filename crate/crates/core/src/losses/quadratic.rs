//! Analytically tractable saddle family
//!
//! ```text
//! f(w, x) = wᵀx − (mu_x/2)‖x‖² + (mu_w/2)‖w − w_anchor‖² + offset
//! ```
//!
//! strongly convex in `w`, strongly concave in `x`, with every profile
//! constant available in closed form: `L11 = mu_w`, `L12 = L21 = 1`,
//! `L22 = mu_x`, and `G`, `M` maximized exactly over the declared boxes
//! (the surface is separable per coordinate). The robust objective inherits
//! `mu_w`-strong convexity, hence satisfies the PL inequality with `mu_w`.

use super::{validate_box, ConstantsProfile, CoordBox, Label, LossError, SmoothLoss};
use crate::numkit::{self, NormOrder, PerturbationBudget, Vector};

#[derive(Debug, Clone)]
pub struct QuadraticSaddle {
    mu_w: f64,
    mu_x: f64,
    w_anchor: Vector,
    offset: f64,
    iterate_box: CoordBox,
    sample_box: CoordBox,
    profile: ConstantsProfile,
}

impl QuadraticSaddle {
    /// Build the family with an explicit additive offset.
    pub fn new(
        mu_w: f64,
        mu_x: f64,
        w_anchor: Vector,
        offset: f64,
        iterate_box: CoordBox,
        sample_box: CoordBox,
    ) -> Result<Self, LossError> {
        if !(mu_w.is_finite() && mu_w > 0.0) {
            return Err(LossError::NonPositiveCurvature { name: "mu_w", value: mu_w });
        }
        if !(mu_x.is_finite() && mu_x > 0.0) {
            return Err(LossError::NonPositiveCurvature { name: "mu_x", value: mu_x });
        }
        validate_box(&iterate_box, "iterate box")?;
        validate_box(&sample_box, "sample box")?;
        if w_anchor.len() != iterate_box.len() || iterate_box.len() != sample_box.len() {
            return Err(LossError::DimensionMismatch {
                expected: iterate_box.len(),
                got: w_anchor.len(),
            });
        }
        numkit::norm(&w_anchor, NormOrder::LInf)?;
        let mut loss = Self {
            mu_w,
            mu_x,
            w_anchor,
            offset,
            iterate_box,
            sample_box,
            profile: ConstantsProfile {
                l11: 0.0,
                l12: 0.0,
                l21: 0.0,
                l22: 0.0,
                g: 0.0,
                m: 0.0,
                mu_w,
                mu_x,
                certified: true,
            },
        };
        loss.profile = loss.certified_profile();
        Ok(loss)
    }

    /// Build with the offset chosen so the minimum of `f` over the declared
    /// boxes is exactly zero, keeping `0 ≤ f ≤ M` literal.
    pub fn with_nonnegative_offset(
        mu_w: f64,
        mu_x: f64,
        w_anchor: Vector,
        iterate_box: CoordBox,
        sample_box: CoordBox,
    ) -> Result<Self, LossError> {
        let mut loss = Self::new(mu_w, mu_x, w_anchor, 0.0, iterate_box, sample_box)?;
        let min = loss.min_over_boxes();
        loss.offset = -min;
        loss.profile = loss.certified_profile();
        Ok(loss)
    }

    pub fn mu_w(&self) -> f64 {
        self.mu_w
    }

    pub fn mu_x(&self) -> f64 {
        self.mu_x
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn w_anchor(&self) -> &[f64] {
        &self.w_anchor
    }

    fn raw_value(&self, w: &[f64], x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for c in 0..w.len() {
            let dw = w[c] - self.w_anchor[c];
            acc += w[c] * x[c] - 0.5 * self.mu_x * x[c] * x[c] + 0.5 * self.mu_w * dw * dw;
        }
        acc
    }

    /// Per-coordinate contribution `w·x − (mu_x/2)x² + (mu_w/2)(w − a)²`.
    fn coord_term(&self, c: usize, w: f64, x: f64) -> f64 {
        let dw = w - self.w_anchor[c];
        w * x - 0.5 * self.mu_x * x * x + 0.5 * self.mu_w * dw * dw
    }

    /// Exact maximum of the offset-free surface over the declared boxes.
    /// For fixed `w` the maximum over `x` sits at `clamp(w/mu_x)`, and the
    /// resulting function of `w` is convex, so box endpoints suffice.
    fn max_over_boxes(&self) -> f64 {
        (0..self.iterate_box.len())
            .map(|c| {
                let [lw, uw] = self.iterate_box[c];
                let [lx, ux] = self.sample_box[c];
                let mut best = f64::NEG_INFINITY;
                for w in [lw, uw] {
                    let star = (w / self.mu_x).clamp(lx, ux);
                    for x in [lx, ux, star] {
                        best = best.max(self.coord_term(c, w, x));
                    }
                }
                best
            })
            .sum()
    }

    /// Exact minimum of the offset-free surface over the declared boxes.
    /// For fixed `x` the coordinate term is convex in `w` with vertex
    /// `a − x/mu_w`, and concavity in `x` puts the minimizing `x` at a box
    /// endpoint.
    fn min_over_boxes(&self) -> f64 {
        (0..self.iterate_box.len())
            .map(|c| {
                let [lw, uw] = self.iterate_box[c];
                let [lx, ux] = self.sample_box[c];
                let mut best = f64::INFINITY;
                for x in [lx, ux] {
                    let vertex = (self.w_anchor[c] - x / self.mu_w).clamp(lw, uw);
                    for w in [lw, uw, vertex] {
                        best = best.min(self.coord_term(c, w, x));
                    }
                }
                best
            })
            .sum()
    }

    fn certified_profile(&self) -> ConstantsProfile {
        // ∇_w f = x + mu_w (w − a): per-coordinate extreme of |x + mu_w(w − a)|.
        let g = (0..self.iterate_box.len())
            .map(|c| {
                let [lw, uw] = self.iterate_box[c];
                let [lx, ux] = self.sample_box[c];
                let lo = lx + self.mu_w * (lw - self.w_anchor[c]);
                let hi = ux + self.mu_w * (uw - self.w_anchor[c]);
                let m = lo.abs().max(hi.abs());
                m * m
            })
            .sum::<f64>()
            .sqrt();
        let m = (self.max_over_boxes() + self.offset).max(0.0);
        ConstantsProfile {
            l11: self.mu_w,
            l12: 1.0,
            l21: 1.0,
            l22: self.mu_x,
            g,
            m,
            mu_w: self.mu_w,
            mu_x: self.mu_x,
            certified: true,
        }
    }

    /// Gradient of the perturbation gain `δ ↦ f(w, x+δ) − f(w, x)` at zero,
    /// i.e. `∇_x f(w, x) = w − mu_x·x`.
    fn gain_gradient(&self, w: &[f64], x: &[f64]) -> Vector {
        w.iter().zip(x).map(|(wc, xc)| wc - self.mu_x * xc).collect()
    }
}

impl SmoothLoss for QuadraticSaddle {
    fn dim_w(&self) -> usize {
        self.w_anchor.len()
    }

    fn dim_x(&self) -> usize {
        self.w_anchor.len()
    }

    fn iterate_box(&self) -> &[[f64; 2]] {
        &self.iterate_box
    }

    fn sample_box(&self) -> &[[f64; 2]] {
        &self.sample_box
    }

    fn value(&self, w: &[f64], x: &[f64], _y: &Label) -> f64 {
        self.raw_value(w, x) + self.offset
    }

    fn grad_w(&self, w: &[f64], x: &[f64], _y: &Label) -> Vector {
        (0..w.len())
            .map(|c| x[c] + self.mu_w * (w[c] - self.w_anchor[c]))
            .collect()
    }

    fn grad_x(&self, w: &[f64], x: &[f64], _y: &Label) -> Vector {
        self.gain_gradient(w, x)
    }

    fn profile(&self) -> &ConstantsProfile {
        &self.profile
    }

    fn analytic_inner_argmax(
        &self,
        w: &[f64],
        x: &[f64],
        budget: PerturbationBudget,
    ) -> Option<Vector> {
        // The unconstrained maximizer is δ_u = (w − mu_x·x)/mu_x; projecting it
        // is exact: radially for the sphere, coordinatewise for the cube
        // (the gain is a separable isotropic concave quadratic).
        let unconstrained = numkit::scale(&self.gain_gradient(w, x), 1.0 / self.mu_x);
        numkit::project_ball(&unconstrained, budget).ok()
    }

    fn analytic_penalized_argmax(&self, w: &[f64], x: &[f64], lambda: f64) -> Option<Vector> {
        if lambda < 0.0 {
            return None;
        }
        // Stationarity of gᵀδ − (mu_x/2)‖δ‖² − λ‖δ‖²: δ = g/(mu_x + 2λ).
        let g = self.gain_gradient(w, x);
        Some(numkit::scale(&g, 1.0 / (self.mu_x + 2.0 * lambda)))
    }

    fn analytic_inner_argmin(
        &self,
        w: &[f64],
        x: &[f64],
        budget: PerturbationBudget,
    ) -> Option<Vector> {
        let g = self.gain_gradient(w, x);
        let r = budget.r;
        match budget.p {
            crate::numkit::BallNorm::L2 => {
                let n = numkit::norm(&g, NormOrder::L2).ok()?;
                if n > 0.0 {
                    Some(numkit::scale(&g, -r / n))
                } else {
                    // Any boundary point minimizes; pick the first axis.
                    let mut d = vec![0.0; g.len()];
                    if !d.is_empty() {
                        d[0] = r;
                    }
                    Some(d)
                }
            }
            crate::numkit::BallNorm::LInf => {
                Some(g.iter().map(|&gc| if gc >= 0.0 { -r } else { r }).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::test_util::assert_grads_match_fd;
    use crate::numkit::RngState;

    fn unit_boxes(d: usize) -> (CoordBox, CoordBox) {
        (vec![[-2.0, 2.0]; d], vec![[-1.0, 1.0]; d])
    }

    fn reference() -> QuadraticSaddle {
        let (iw, sx) = unit_boxes(2);
        QuadraticSaddle::new(1.0, 1.0, vec![0.0, 0.0], 0.0, iw, sx).unwrap()
    }

    #[test]
    fn hand_values_at_origin() {
        let loss = reference();
        let w = [1.0, 0.0];
        let x = [0.0, 0.0];
        let y = Label::Real(0.0);
        assert_eq!(loss.value(&w, &x, &y), 0.5);
        assert_eq!(loss.grad_x(&w, &x, &y), vec![1.0, 0.0]);
        assert_eq!(loss.grad_w(&w, &x, &y), vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_nonpositive_curvature() {
        let (iw, sx) = unit_boxes(2);
        assert!(QuadraticSaddle::new(0.0, 1.0, vec![0.0; 2], 0.0, iw.clone(), sx.clone()).is_err());
        assert!(QuadraticSaddle::new(1.0, -0.5, vec![0.0; 2], 0.0, iw, sx).is_err());
    }

    #[test]
    fn certified_profile_constants() {
        let loss = reference();
        let p = loss.profile();
        assert_eq!(p.l11, 1.0);
        assert_eq!(p.l12, 1.0);
        assert_eq!(p.l21, 1.0);
        assert_eq!(p.l22, 1.0);
        assert!(p.certified);
        // Per coordinate max |x + w| = 3, so G = 3√2.
        assert!((p.g - 3.0 * 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inner_argmax_hand_values() {
        let loss = reference();
        let w = [1.0, 0.0];
        // Budget smaller than the unconstrained maximizer: radial scaling.
        let b = PerturbationBudget::l2(0.5).unwrap();
        let d = loss.analytic_inner_argmax(&w, &[0.0, 0.0], b).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && d[1].abs() < 1e-15);
        // Sample already at the unconstrained max.
        let b1 = PerturbationBudget::l2(1.0).unwrap();
        let d = loss.analytic_inner_argmax(&w, &[1.0, 0.0], b1).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
        // Cube budget clamps per coordinate.
        let binf = PerturbationBudget::linf(0.5).unwrap();
        let d = loss.analytic_inner_argmax(&[1.0, 1.0], &[0.0, 0.0], binf).unwrap();
        assert_eq!(d, vec![0.5, 0.5]);
    }

    #[test]
    fn inner_argmax_beats_dense_grid() {
        // Grid search over the ball confirms the closed form, including the
        // objective gain wᵀδ* − ‖δ*‖²/2 = 0.375 at r = 0.5.
        let loss = reference();
        let w = [1.0, 0.0];
        let x = [0.0, 0.0];
        let y = Label::Real(0.0);
        let b = PerturbationBudget::l2(0.5).unwrap();
        let d = loss.analytic_inner_argmax(&w, &x, b).unwrap();
        let gain = loss.value(&w, &numkit::add(&x, &d), &y) - loss.value(&w, &x, &y);
        assert!((gain - 0.375).abs() < 1e-12);
        let mut best = f64::NEG_INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let cand = [
                    -0.5 + i as f64 * (1.0 / steps as f64),
                    -0.5 + j as f64 * (1.0 / steps as f64),
                ];
                if numkit::norm(&cand, NormOrder::L2).unwrap() <= 0.5 {
                    best = best.max(loss.value(&w, &numkit::add(&x, &cand), &y));
                }
            }
        }
        assert!(loss.value(&w, &numkit::add(&x, &d), &y) >= best - 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (iw, sx) = unit_boxes(3);
        let loss =
            QuadraticSaddle::new(0.8, 1.7, vec![0.3, -0.2, 0.1], 0.4, iw, sx).unwrap();
        assert_grads_match_fd(&loss, 200, 91);
    }

    #[test]
    fn nonnegative_offset_covers_boxes() {
        let (iw, sx) = unit_boxes(2);
        let loss =
            QuadraticSaddle::with_nonnegative_offset(1.0, 1.0, vec![0.5, -0.5], iw, sx).unwrap();
        let mut rng = RngState::new(17);
        let y = Label::Real(0.0);
        let m = loss.profile().m;
        for _ in 0..10_000 {
            let w = super::super::box_sample(loss.iterate_box(), &mut rng);
            let x = super::super::box_sample(loss.sample_box(), &mut rng);
            let v = loss.value(&w, &x, &y);
            assert!(v >= -1e-12, "value {v} below zero");
            assert!(v <= m + 1e-12, "value {v} above M = {m}");
        }
    }

    #[test]
    fn strong_concavity_in_perturbation() {
        // Midpoint inequality with modulus mu_x/8, the testable form of the
        // strong-concavity assumption.
        let (iw, sx) = unit_boxes(2);
        let mu_x = 1.4;
        let loss = QuadraticSaddle::new(0.9, mu_x, vec![0.1, 0.2], 0.0, iw, sx).unwrap();
        let y = Label::Real(0.0);
        let mut rng = RngState::new(23);
        for _ in 0..300 {
            let w = super::super::box_sample(loss.iterate_box(), &mut rng);
            let x: Vector = (0..2).map(|_| rng.next_in_range(-0.5, 0.5)).collect();
            let d1: Vector = (0..2).map(|_| rng.next_in_range(-0.4, 0.4)).collect();
            let d2: Vector = (0..2).map(|_| rng.next_in_range(-0.4, 0.4)).collect();
            let mid: Vector = d1.iter().zip(&d2).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = loss.value(&w, &numkit::add(&x, &mid), &y);
            let rhs = 0.5 * loss.value(&w, &numkit::add(&x, &d1), &y)
                + 0.5 * loss.value(&w, &numkit::add(&x, &d2), &y)
                + mu_x / 8.0
                    * numkit::norm(&numkit::sub(&d1, &d2), NormOrder::L2).unwrap().powi(2);
            assert!(lhs >= rhs - 1e-9);
        }
    }
}
