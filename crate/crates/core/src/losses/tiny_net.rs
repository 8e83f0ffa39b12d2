//! Squared error of a one-hidden-layer tanh network,
//! `f = ½(vᵀtanh(A·x) − y)²`, with hand-derived gradients. The parameter
//! vector flattens `A` row-major followed by `v`. Profile constants are
//! estimated; the PL and concavity constants in particular are empirical
//! proxies only.

use super::{
    estimate_profile, validate_box, ConstantsProfile, CoordBox, Label, LossError, SmoothLoss,
};
use crate::numkit::{RngState, Vector};

#[derive(Debug, Clone)]
pub struct TinyNet {
    d0: usize,
    hidden: usize,
    iterate_box: CoordBox,
    sample_box: CoordBox,
    profile: ConstantsProfile,
}

impl TinyNet {
    pub fn new(
        d0: usize,
        hidden: usize,
        iterate_box: CoordBox,
        sample_box: CoordBox,
        probes: usize,
        probe_seed: u64,
    ) -> Result<Self, LossError> {
        validate_box(&iterate_box, "iterate box")?;
        validate_box(&sample_box, "sample box")?;
        let dim_w = hidden * d0 + hidden;
        if iterate_box.len() != dim_w {
            return Err(LossError::DimensionMismatch { expected: dim_w, got: iterate_box.len() });
        }
        if sample_box.len() != d0 {
            return Err(LossError::DimensionMismatch { expected: d0, got: sample_box.len() });
        }
        let mut loss = Self {
            d0,
            hidden,
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
        // Interval bounds: |tanh| ≤ 1 caps the network output at Σ|v_j|, and
        // targets are declared in [-1, 1], so the value and gradient-norm
        // bounds have coarse but certified suprema.
        let abs_hi = |[lo, hi]: [f64; 2]| lo.abs().max(hi.abs());
        let v_box = &loss.iterate_box[hidden * d0..];
        let net_max: f64 = v_box.iter().map(|iv| abs_hi(*iv)).sum();
        let err_max = net_max + 1.0;
        profile.m = 0.5 * err_max * err_max;
        let x_max: Vec<f64> = loss.sample_box.iter().map(|iv| abs_hi(*iv)).collect();
        let mut g2 = 0.0;
        for iv in v_box {
            let vj = abs_hi(*iv);
            for xk in &x_max {
                let b = err_max * vj * xk;
                g2 += b * b;
            }
            g2 += err_max * err_max;
        }
        profile.g = g2.sqrt();
        loss.profile = profile;
        Ok(loss)
    }

    fn split<'a>(&self, w: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        w.split_at(self.hidden * self.d0)
    }

    /// Network output and per-unit activations.
    fn forward(&self, w: &[f64], x: &[f64]) -> (f64, Vector) {
        let (a, v) = self.split(w);
        let mut acts = Vec::with_capacity(self.hidden);
        let mut out = 0.0;
        for j in 0..self.hidden {
            let row = &a[j * self.d0..(j + 1) * self.d0];
            let z: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum();
            let t = z.tanh();
            acts.push(t);
            out += v[j] * t;
        }
        (out, acts)
    }
}

impl SmoothLoss for TinyNet {
    fn dim_w(&self) -> usize {
        self.hidden * self.d0 + self.hidden
    }

    fn dim_x(&self) -> usize {
        self.d0
    }

    fn iterate_box(&self) -> &[[f64; 2]] {
        &self.iterate_box
    }

    fn sample_box(&self) -> &[[f64; 2]] {
        &self.sample_box
    }

    fn value(&self, w: &[f64], x: &[f64], y: &Label) -> f64 {
        let (out, _) = self.forward(w, x);
        let e = out - y.as_f64();
        0.5 * e * e
    }

    fn grad_w(&self, w: &[f64], x: &[f64], y: &Label) -> Vector {
        let (out, acts) = self.forward(w, x);
        let (_, v) = self.split(w);
        let e = out - y.as_f64();
        let mut g = vec![0.0; self.dim_w()];
        for j in 0..self.hidden {
            let sech2 = 1.0 - acts[j] * acts[j];
            for k in 0..self.d0 {
                g[j * self.d0 + k] = e * v[j] * sech2 * x[k];
            }
            g[self.hidden * self.d0 + j] = e * acts[j];
        }
        g
    }

    fn grad_x(&self, w: &[f64], x: &[f64], y: &Label) -> Vector {
        let (out, acts) = self.forward(w, x);
        let (a, v) = self.split(w);
        let e = out - y.as_f64();
        let mut g = vec![0.0; self.d0];
        for j in 0..self.hidden {
            let sech2 = 1.0 - acts[j] * acts[j];
            let coeff = e * v[j] * sech2;
            for k in 0..self.d0 {
                g[k] += coeff * a[j * self.d0 + k];
            }
        }
        g
    }

    fn profile(&self) -> &ConstantsProfile {
        &self.profile
    }

    fn requires_label(&self) -> bool {
        true
    }

    fn probe_label(&self, rng: &mut RngState) -> Label {
        Label::Real(rng.next_in_range(-1.0, 1.0))
    }
}
