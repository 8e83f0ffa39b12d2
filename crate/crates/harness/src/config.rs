//! Strict experiment configuration: one JSON document, unknown keys rejected.

use serde::{Deserialize, Serialize};

use oodrisk_core::losses::{inflate_box, CoordBox, LogisticLoss, QuadraticSaddle, SmoothLoss, TinyNet};
use oodrisk_core::minimax::{DeltaInit, InnerSteps, OuterSchedule, TrainConfig};
use oodrisk_core::numkit::{BallNorm, PerturbationBudget, Vector};

use crate::datasets::LabelRule;
use crate::shifts::ShiftSpec;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "family", rename_all = "snake_case")]
pub enum LossSpec {
    Quadratic {
        mu_w: f64,
        mu_x: f64,
        w_anchor: Vector,
        /// Explicit additive offset; omitted means "choose the offset so the
        /// loss is nonnegative over the declared boxes".
        #[serde(default)]
        offset: Option<f64>,
        iterate_box: CoordBox,
        /// Omitted: the dataset support box inflated by the training radius.
        #[serde(default)]
        sample_box: Option<CoordBox>,
    },
    Logistic {
        iterate_box: CoordBox,
        #[serde(default)]
        sample_box: Option<CoordBox>,
        probes: usize,
        probe_seed: u64,
    },
    TinyNet {
        d0: usize,
        hidden: usize,
        iterate_box: CoordBox,
        #[serde(default)]
        sample_box: Option<CoordBox>,
        probes: usize,
        probe_seed: u64,
    },
}

impl LossSpec {
    /// Materialize the loss; `fallback_box` (usually the dataset support box)
    /// is inflated by `inflate` and used when no sample box was declared.
    pub fn build(
        &self,
        fallback_box: &[[f64; 2]],
        inflate: f64,
    ) -> Result<Box<dyn SmoothLoss>, HarnessError> {
        let fallback = || inflate_box(fallback_box, inflate);
        match self {
            LossSpec::Quadratic { mu_w, mu_x, w_anchor, offset, iterate_box, sample_box } => {
                let sample_box = sample_box.clone().unwrap_or_else(fallback);
                let loss = match offset {
                    Some(offset) => QuadraticSaddle::new(
                        *mu_w,
                        *mu_x,
                        w_anchor.clone(),
                        *offset,
                        iterate_box.clone(),
                        sample_box,
                    )?,
                    None => QuadraticSaddle::with_nonnegative_offset(
                        *mu_w,
                        *mu_x,
                        w_anchor.clone(),
                        iterate_box.clone(),
                        sample_box,
                    )?,
                };
                Ok(Box::new(loss))
            }
            LossSpec::Logistic { iterate_box, sample_box, probes, probe_seed } => {
                let sample_box = sample_box.clone().unwrap_or_else(fallback);
                Ok(Box::new(LogisticLoss::new(
                    iterate_box.clone(),
                    sample_box,
                    *probes,
                    *probe_seed,
                )?))
            }
            LossSpec::TinyNet { d0, hidden, iterate_box, sample_box, probes, probe_seed } => {
                let sample_box = sample_box.clone().unwrap_or_else(fallback);
                Ok(Box::new(TinyNet::new(
                    *d0,
                    *hidden,
                    iterate_box.clone(),
                    sample_box,
                    *probes,
                    *probe_seed,
                )?))
            }
        }
    }

    /// Concrete logistic instance, needed where its closed-form cube supremum
    /// drives the evaluation.
    pub fn build_logistic(
        &self,
        fallback_box: &[[f64; 2]],
        inflate: f64,
    ) -> Result<LogisticLoss, HarnessError> {
        match self {
            LossSpec::Logistic { iterate_box, sample_box, probes, probe_seed } => {
                let sample_box = sample_box
                    .clone()
                    .unwrap_or_else(|| inflate_box(fallback_box, inflate));
                Ok(LogisticLoss::new(iterate_box.clone(), sample_box, *probes, *probe_seed)?)
            }
            _ => Err(HarnessError::Invalid("this experiment needs the logistic family".into())),
        }
    }

    /// Concrete quadratic instance for analytic-path experiments.
    pub fn build_quadratic(
        &self,
        fallback_box: &[[f64; 2]],
        inflate: f64,
    ) -> Result<QuadraticSaddle, HarnessError> {
        match self {
            LossSpec::Quadratic { mu_w, mu_x, w_anchor, offset, iterate_box, sample_box } => {
                let sample_box = sample_box
                    .clone()
                    .unwrap_or_else(|| inflate_box(fallback_box, inflate));
                let loss = match offset {
                    Some(offset) => QuadraticSaddle::new(
                        *mu_w,
                        *mu_x,
                        w_anchor.clone(),
                        *offset,
                        iterate_box.clone(),
                        sample_box,
                    )?,
                    None => QuadraticSaddle::with_nonnegative_offset(
                        *mu_w,
                        *mu_x,
                        w_anchor.clone(),
                        iterate_box.clone(),
                        sample_box,
                    )?,
                };
                Ok(loss)
            }
            _ => Err(HarnessError::Invalid(
                "this experiment needs the quadratic saddle family".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n: usize,
    pub d0: usize,
    pub support_box: CoordBox,
    pub label_rule: LabelRule,
    pub seed: u64,
}

fn default_full_eval() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub steps: usize,
    #[serde(default = "default_inner")]
    pub inner: InnerSteps,
    pub p: BallNorm,
    pub r: f64,
    #[serde(default)]
    pub eta_x: Option<f64>,
    pub schedule: OuterSchedule,
    #[serde(default)]
    pub sign_variant: bool,
    #[serde(default = "default_delta_init")]
    pub delta_init: DeltaInit,
    #[serde(default)]
    pub w_init: Option<Vector>,
    #[serde(default = "default_full_eval")]
    pub full_eval_every: usize,
}

fn default_inner() -> InnerSteps {
    InnerSteps::Auto
}

fn default_delta_init() -> DeltaInit {
    DeltaInit::Zero
}

impl TrainParams {
    pub fn budget(&self) -> Result<PerturbationBudget, HarnessError> {
        PerturbationBudget::new(self.p, self.r).map_err(HarnessError::from)
    }

    pub fn to_config(&self, seed: u64) -> Result<TrainConfig, HarnessError> {
        Ok(TrainConfig {
            steps: self.steps,
            inner: self.inner,
            budget: self.budget()?,
            eta_x: self.eta_x,
            schedule: self.schedule,
            sign_variant: self.sign_variant,
            seed,
            delta_init: self.delta_init,
            w_init: self.w_init.clone(),
            full_eval_every: self.full_eval_every,
            record_iterates: false,
        })
    }

    /// Same parameters at a different radius (perturbation-size grids).
    pub fn with_radius(&self, r: f64) -> TrainParams {
        TrainParams { r, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub count: usize,
    pub base: u64,
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.count as u64).map(|k| self.base.wrapping_add(k)).collect()
    }
}

/// Evaluation knobs shared by the experiment runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalParams {
    /// Radius of the evaluation ball (the shift size the trained model is
    /// measured against).
    pub ood_radius: f64,
    /// Fresh test samples drawn per seed where the experiment uses them.
    #[serde(default)]
    pub test_n: Option<usize>,
    /// Failure probability fed to bound columns.
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment id: `train`, `converge`, `ablate_r`, `ablate_n`, `transfer`.
    pub experiment: String,
    pub loss: LossSpec,
    pub dataset: DatasetSpec,
    pub train: TrainParams,
    pub seeds: SeedSpec,
    #[serde(default)]
    pub shift: Option<ShiftSpec>,
    #[serde(default)]
    pub t_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub r_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub tv_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub eval: Option<EvalParams>,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| HarnessError::Invalid(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.count == 0 {
            return Err(HarnessError::Invalid("seed count must be at least 1".into()));
        }
        for (name, empty) in [
            ("t_grid", self.t_grid.as_ref().map(|g| g.is_empty())),
            ("n_grid", self.n_grid.as_ref().map(|g| g.is_empty())),
        ] {
            if empty == Some(true) {
                return Err(HarnessError::Invalid(format!("{name} must be non-empty")));
            }
        }
        if self.r_grid.as_ref().map(|g| g.is_empty()) == Some(true) {
            return Err(HarnessError::Invalid("r_grid must be non-empty".into()));
        }
        if self.tv_grid.as_ref().map(|g| g.is_empty()) == Some(true) {
            return Err(HarnessError::Invalid("tv_grid must be non-empty".into()));
        }
        Ok(())
    }
}
