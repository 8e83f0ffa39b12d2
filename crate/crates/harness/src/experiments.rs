//! Experiment suites: convergence rate, perturbation-size ablation,
//! sample-count ablation, and pretraining transfer.
//!
//! Every grid cell (grid point × seed) is independent and deterministic given
//! its seed, so cells run in parallel and rows are emitted in a fixed
//! (grid value, seed) order regardless of scheduling. Wall-clock runtimes and
//! timestamps never enter the results CSV; they go to a sidecar metadata
//! file so reruns are byte-identical.

use rayon::prelude::*;
use serde::Serialize;

use oodrisk_core::certify::{self, BoundInputs};
use oodrisk_core::losses::{Label, LogisticLoss, SmoothLoss};
use oodrisk_core::minimax::{self, InnerQuality};
use oodrisk_core::numkit::{PerturbationBudget, RngState};
use oodrisk_core::transport::{worst_case_risk_winf, BallOptQuality, DiscreteDistribution};

use crate::config::ExperimentConfig;
use crate::datasets::{dataset_from_atoms, make_dataset, make_population, sample_from};
use crate::shifts::{apply_shift, ShiftKind, ShiftSpec};
use crate::HarnessError;

/// One grid cell's metrics. `bound` may be infinite and prints as "vacuous";
/// every other metric must be finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub grid_key: &'static str,
    pub grid_value: f64,
    pub clean_risk: f64,
    pub ood_risk: f64,
    pub robust_objective: f64,
    pub bound: f64,
    /// Reported in the metadata sidecar only.
    #[serde(skip)]
    pub runtime_s: f64,
}

pub const RESULTS_HEADER: &str =
    "experiment,seed,grid_key,grid_value,clean_risk,ood_risk,robust_objective,bound,runtime_s";

/// Render rows with shortest round-trip float formatting. The `runtime_s`
/// column is intentionally left empty: wall time is not reproducible and
/// lives in the metadata sidecar instead.
pub fn results_csv(rows: &[ResultRow]) -> Result<String, HarnessError> {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for row in rows {
        for (name, v) in [
            ("grid_value", row.grid_value),
            ("clean_risk", row.clean_risk),
            ("ood_risk", row.ood_risk),
            ("robust_objective", row.robust_objective),
        ] {
            if !v.is_finite() {
                return Err(HarnessError::Numerical(format!(
                    "{name} is not finite in experiment {}",
                    row.experiment
                )));
            }
        }
        if row.bound < 0.0 {
            return Err(HarnessError::Numerical("negative bound".into()));
        }
        let bound = if row.bound.is_finite() { format!("{}", row.bound) } else { "vacuous".into() };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},\n",
            row.experiment,
            row.seed,
            row.grid_key,
            row.grid_value,
            row.clean_risk,
            row.ood_risk,
            row.robust_objective,
            bound
        ));
    }
    Ok(out)
}

/// Sidecar written next to the CSV: timestamps, per-row runtimes, summary.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub experiment: String,
    pub created_unix_s: u64,
    pub runtimes_s: Vec<f64>,
    pub summary: serde_json::Value,
}

pub fn write_outputs(
    path: &std::path::Path,
    rows: &[ResultRow],
    experiment: &str,
    summary: serde_json::Value,
) -> Result<(), HarnessError> {
    let csv = results_csv(rows)?;
    std::fs::write(path, csv)?;
    let meta = RunMetadata {
        experiment: experiment.to_string(),
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        runtimes_s: rows.iter().map(|r| r.runtime_s).collect(),
        summary,
    };
    let meta_path = path.with_extension("meta.json");
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta).expect("metadata"))?;
    Ok(())
}

fn mix_seed(base: u64, k: u64) -> u64 {
    base ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
}

// ---------------------------------------------------------------------------
// Statistics helpers
// ---------------------------------------------------------------------------

pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

/// Window-3 moving average (shrunk at the edges).
pub fn smooth3(values: &[f64]) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// A sequence is valley-unimodal when its smoothed consecutive differences
/// change sign at most once, from negative to positive.
pub fn single_valley(values: &[f64]) -> bool {
    let smooth = smooth3(values);
    let signs: Vec<i8> = smooth
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            }
        })
        .filter(|&s| s != 0)
        .collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let rises_then_falls = signs.windows(2).any(|w| w[0] == 1 && w[1] == -1);
    changes <= 1 && !rises_then_falls
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Convergence experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceOutcome {
    #[serde(skip)]
    pub rows: Vec<ResultRow>,
    pub per_t_mean_excess: Vec<(usize, f64)>,
    pub envelope: Vec<(usize, f64)>,
    /// Mean excess under `G²L/(T·mu_w²)` at every grid point.
    pub envelope_ok: bool,
    /// Least-squares slope of `ln(mean excess)` against `ln T`.
    pub slope: f64,
    pub reference_value: f64,
}

/// Train the certified quadratic instance over a `T` grid and compare the
/// excess of the robust objective against the expectation-rate envelope.
pub fn run_convergence_experiment(
    config: &ExperimentConfig,
) -> Result<ConvergenceOutcome, HarnessError> {
    let t_grid = config
        .t_grid
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid("converge needs t_grid".into()))?;
    let loss = config.loss.build_quadratic(&config.dataset.support_box, config.train.r)?;
    if !loss.profile().certified {
        return Err(HarnessError::Invalid("convergence experiment needs certified constants".into()));
    }
    let data = make_dataset(
        config.dataset.n,
        config.dataset.d0,
        &config.dataset.support_box,
        &config.dataset.label_rule,
        config.dataset.seed,
    )?;
    let budget = config.train.budget()?;
    let (_, reference_value) = minimax::robust_minimizer(&loss, &data, budget, 1e-12, 2_000_000)?;
    let profile = *loss.profile();
    let envelope_at = |t: usize| {
        profile.g * profile.g * profile.smoothness_l() / (t as f64 * profile.mu_w * profile.mu_w)
    };

    let seeds = config.seeds.seeds();
    let cells: Vec<(usize, u64)> = t_grid
        .iter()
        .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|&(t, seed)| -> Result<ResultRow, HarnessError> {
            let start = std::time::Instant::now();
            let mut train_config = config.train.to_config(seed)?;
            train_config.steps = t;
            // Full-batch telemetry is recomputed below; avoid paying for it
            // every ten steps inside long runs.
            train_config.full_eval_every = t.max(1);
            let trace = minimax::train(&loss, &data, &train_config)?;
            let objective = minimax::robust_objective(
                &loss,
                &data,
                &trace.final_w,
                budget,
                InnerQuality::Analytic,
            )?;
            let excess = (objective - reference_value).max(f64::MIN_POSITIVE);
            Ok(ResultRow {
                experiment: config.experiment.clone(),
                seed,
                grid_key: "T",
                grid_value: t as f64,
                clean_risk: minimax::empirical_risk(&loss, &data, &trace.final_w),
                ood_risk: excess,
                robust_objective: objective,
                bound: envelope_at(t),
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut per_t_mean_excess = Vec::with_capacity(t_grid.len());
    let mut envelope = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let excesses: Vec<f64> = rows
            .iter()
            .filter(|r| r.grid_value == t as f64)
            .map(|r| r.ood_risk)
            .collect();
        let (mean, _) = mean_and_se(&excesses);
        per_t_mean_excess.push((t, mean));
        envelope.push((t, envelope_at(t)));
    }
    let envelope_ok = per_t_mean_excess
        .iter()
        .zip(&envelope)
        .all(|(&(_, mean), &(_, cap))| mean <= cap);
    let log_t: Vec<f64> = per_t_mean_excess.iter().map(|&(t, _)| (t as f64).ln()).collect();
    let log_e: Vec<f64> = per_t_mean_excess.iter().map(|&(_, m)| m.ln()).collect();
    let slope = ols_slope(&log_t, &log_e);
    Ok(ConvergenceOutcome { rows, per_t_mean_excess, envelope, envelope_ok, slope, reference_value })
}

// ---------------------------------------------------------------------------
// Perturbation-size ablation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AblationOutcome {
    #[serde(skip)]
    pub rows: Vec<ResultRow>,
    pub grid: Vec<f64>,
    pub mean_ood: Vec<f64>,
    pub se_ood: Vec<f64>,
    pub best_index: usize,
    pub unimodal: bool,
    /// Margin (in pooled standard errors) by which the best interior point
    /// beats the worse of the two endpoints; the minimum of the two margins.
    pub interior_margin_se: f64,
}

/// Exact worst-case logistic risk of `w` on a labeled dataset at cube radius
/// `s`: the adversarial score shift of a linear model is `s·‖w‖₁`.
fn logistic_worst_case_risk(
    loss: &LogisticLoss,
    w: &[f64],
    data: &oodrisk_core::losses::Dataset,
    s: f64,
) -> f64 {
    let mut acc = 0.0;
    for sample in data.samples() {
        acc += loss.linf_ball_sup(w, &sample.x, &sample.y, s);
    }
    acc / data.len() as f64
}

/// Adversarially train the logistic task at every radius in the grid and
/// measure worst-case risk on fresh test data at the fixed evaluation shift.
pub fn run_perturbation_ablation(
    config: &ExperimentConfig,
) -> Result<AblationOutcome, HarnessError> {
    let r_grid = config
        .r_grid
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid("ablate r needs r_grid".into()))?;
    let eval = config
        .eval
        .ok_or_else(|| HarnessError::Invalid("ablate r needs eval parameters".into()))?;
    let test_n = eval
        .test_n
        .ok_or_else(|| HarnessError::Invalid("ablate r needs eval.test_n".into()))?;
    let max_r = r_grid.iter().cloned().fold(0.0f64, f64::max).max(eval.ood_radius);
    let loss = config.loss.build_logistic(&config.dataset.support_box, max_r)?;
    let seeds = config.seeds.seeds();
    let cells: Vec<(f64, u64)> = r_grid
        .iter()
        .flat_map(|&r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|&(r, seed)| -> Result<ResultRow, HarnessError> {
            let start = std::time::Instant::now();
            let train_ds = make_dataset(
                config.dataset.n,
                config.dataset.d0,
                &config.dataset.support_box,
                &config.dataset.label_rule,
                mix_seed(config.dataset.seed, seed),
            )?;
            let test_ds = make_dataset(
                test_n,
                config.dataset.d0,
                &config.dataset.support_box,
                &config.dataset.label_rule,
                mix_seed(config.dataset.seed, seed).wrapping_add(0x51),
            )?;
            let params = config.train.with_radius(r);
            let mut train_config = params.to_config(seed)?;
            // The inner step follows the radius; a degenerate ball keeps the
            // (irrelevant) step positive.
            train_config.eta_x = Some(params.eta_x.unwrap_or(r / 4.0).max(1e-9));
            train_config.full_eval_every = train_config.steps.max(1);
            let trace = minimax::train(&loss, &train_ds, &train_config)?;
            let w = &trace.final_w;
            let clean = minimax::empirical_risk(&loss, &test_ds, w);
            let ood = logistic_worst_case_risk(&loss, w, &test_ds, eval.ood_radius);
            let robust_objective = logistic_worst_case_risk(&loss, w, &train_ds, r);
            // The adversarial objective certifies (r, 2·R~)-input-robustness,
            // which feeds the cube-ball generalization bound at radius r/2.
            let bound = certify::ood_bound_winf(&BoundInputs {
                d0: config.dataset.d0,
                diameter: train_ds.diameter_l1(),
                loss_bound: loss.profile().m,
                n: train_ds.len(),
                r: r / 2.0,
                epsilon: 2.0 * robust_objective,
                theta: eval.theta,
                epsilon_pre: None,
                tv: None,
            })?;
            Ok(ResultRow {
                experiment: config.experiment.clone(),
                seed,
                grid_key: "r",
                grid_value: r,
                clean_risk: clean,
                ood_risk: ood,
                robust_objective,
                bound: bound.bound.value,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut mean_ood = Vec::with_capacity(r_grid.len());
    let mut se_ood = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let vals: Vec<f64> =
            rows.iter().filter(|row| row.grid_value == r).map(|row| row.ood_risk).collect();
        let (mean, se) = mean_and_se(&vals);
        mean_ood.push(mean);
        se_ood.push(se);
    }
    let best_index = mean_ood
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite risks"))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let unimodal = single_valley(&mean_ood);
    let margin = |end: usize| {
        let pooled = (se_ood[end] * se_ood[end] + se_ood[best_index] * se_ood[best_index]).sqrt();
        (mean_ood[end] - mean_ood[best_index]) / pooled.max(1e-300)
    };
    let interior_margin_se = if best_index == 0 || best_index == mean_ood.len() - 1 {
        0.0
    } else {
        margin(0).min(margin(mean_ood.len() - 1))
    };
    Ok(AblationOutcome {
        rows,
        grid: r_grid.clone(),
        mean_ood,
        se_ood,
        best_index,
        unimodal,
        interior_margin_se,
    })
}

// ---------------------------------------------------------------------------
// Sample-count ablation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SampleAblationOutcome {
    #[serde(skip)]
    pub rows: Vec<ResultRow>,
    /// Spearman correlation between the OOD generalization gap and `n`,
    /// pooled over all rows.
    pub spearman_gap_n: f64,
    /// Spearman of the per-n mean gap against `n`; the seed-averaged trend.
    pub spearman_mean_gap_n: f64,
}

/// Train on `n` i.i.d. draws from a fixed finite population and measure the
/// gap between population worst-case risk and the empirical risk.
pub fn run_sample_ablation(
    config: &ExperimentConfig,
) -> Result<SampleAblationOutcome, HarnessError> {
    let n_grid = config
        .n_grid
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid("ablate n needs n_grid".into()))?;
    let eval = config
        .eval
        .ok_or_else(|| HarnessError::Invalid("ablate n needs eval parameters".into()))?;
    let population =
        make_population(config.dataset.n, &config.dataset.support_box, config.dataset.seed)?;
    let inflate = config.train.r.max(2.0 * eval.ood_radius);
    let loss = config.loss.build_quadratic(&config.dataset.support_box, inflate)?;
    let budget = config.train.budget()?;
    let seeds = config.seeds.seeds();
    let cells: Vec<(usize, u64)> = n_grid
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|&(n, seed)| -> Result<ResultRow, HarnessError> {
            let start = std::time::Instant::now();
            let mut rng =
                RngState::new(mix_seed(config.dataset.seed, seed).wrapping_add(n as u64));
            let atoms = sample_from(&population, n, &mut rng);
            let train_ds = dataset_from_atoms(&atoms, &config.dataset.support_box)?;
            let mut train_config = config.train.to_config(seed)?;
            train_config.full_eval_every = train_config.steps.max(1);
            let trace = minimax::train(&loss, &train_ds, &train_config)?;
            let w = &trace.final_w;
            let clean = minimax::empirical_risk(&loss, &train_ds, w);
            let sup_population =
                worst_case_risk_winf(&loss, w, &population, eval.ood_radius, BallOptQuality::Analytic)?;
            let gap = (sup_population - clean).abs();
            let robust_objective =
                minimax::robust_objective(&loss, &train_ds, w, budget, InnerQuality::Analytic)?;
            // Eq.-style bound with robustness measured on the sample at twice
            // the evaluation radius.
            let sample_dist = DiscreteDistribution::uniform(atoms.clone())
                .map_err(|e| HarnessError::Invalid(e.to_string()))?;
            let report = certify::measure_robustness(
                &loss,
                w,
                &sample_dist,
                PerturbationBudget::linf(2.0 * eval.ood_radius)?,
                BallOptQuality::Analytic,
            )?;
            let bound = certify::ood_bound_winf(&BoundInputs {
                d0: config.dataset.d0,
                diameter: train_ds.diameter_l1(),
                loss_bound: loss.profile().m,
                n,
                r: eval.ood_radius,
                epsilon: report.epsilon_hat,
                theta: eval.theta,
                epsilon_pre: None,
                tv: None,
            })?;
            Ok(ResultRow {
                experiment: config.experiment.clone(),
                seed,
                grid_key: "n",
                grid_value: n as f64,
                clean_risk: clean,
                ood_risk: gap,
                robust_objective,
                bound: bound.bound.value,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_, _>>()?;

    let ns: Vec<f64> = rows.iter().map(|r| r.grid_value).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.ood_risk).collect();
    let spearman_gap_n = spearman(&gaps, &ns);
    let mean_gaps: Vec<f64> = n_grid
        .iter()
        .map(|&n| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.grid_value == n as f64)
                .map(|r| r.ood_risk)
                .collect();
            mean_and_se(&vals).0
        })
        .collect();
    let grid_f: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let spearman_mean_gap_n = spearman(&mean_gaps, &grid_f);
    Ok(SampleAblationOutcome { rows, spearman_gap_n, spearman_mean_gap_n })
}

// ---------------------------------------------------------------------------
// Pretraining transfer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TransferOutcome {
    #[serde(skip)]
    pub rows: Vec<ResultRow>,
    /// Largest `measured − bound` over all rows; nonpositive means the
    /// transfer bound held everywhere.
    pub max_violation: f64,
}

/// Pretrain on `Q₀`, shift its weights to `P₀` with a certified TV distance,
/// and compare the measured downstream worst-case risk to
/// `ε_pre + 2M·TV(P₀, Q₀)`.
pub fn run_pretrain_transfer(config: &ExperimentConfig) -> Result<TransferOutcome, HarnessError> {
    let tv_grid = config
        .tv_grid
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid("transfer needs tv_grid".into()))?;
    let r = config.train.r;
    let loss = config.loss.build_quadratic(&config.dataset.support_box, r)?;
    let q0 = make_population(config.dataset.n, &config.dataset.support_box, config.dataset.seed)?;
    let pretrain_ds = dataset_from_atoms(q0.atoms(), &config.dataset.support_box)?;
    let profile = *loss.profile();
    let diameter = pretrain_ds.diameter_l1();
    let seeds = config.seeds.seeds();
    let cells: Vec<(f64, u64)> = tv_grid
        .iter()
        .flat_map(|&tv| seeds.iter().map(move |&s| (tv, s)))
        .collect();
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|&(tv, seed)| -> Result<ResultRow, HarnessError> {
            let start = std::time::Instant::now();
            let mut train_config = config.train.to_config(seed)?;
            train_config.full_eval_every = train_config.steps.max(1);
            let trace = minimax::train(&loss, &pretrain_ds, &train_config)?;
            let w_pre = &trace.final_w;
            let epsilon_pre =
                worst_case_risk_winf(&loss, w_pre, &q0, r, BallOptQuality::Analytic)?;
            let (p0, cert) =
                apply_shift(&q0, &ShiftSpec { kind: ShiftKind::WeightReshuffle { tv }, seed })?;
            let measured = worst_case_risk_winf(&loss, w_pre, &p0, r, BallOptQuality::Analytic)?;
            let report = certify::pretrain_transfer_bound(
                &BoundInputs {
                    d0: config.dataset.d0,
                    diameter,
                    loss_bound: profile.m,
                    n: config.dataset.n,
                    r,
                    epsilon: 0.0,
                    theta: config.eval.map(|e| e.theta).unwrap_or(0.1),
                    epsilon_pre: Some(epsilon_pre),
                    tv: Some(cert.value),
                },
                oodrisk_core::numkit::BallNorm::LInf,
            )?;
            let y = Label::Real(0.0);
            Ok(ResultRow {
                experiment: config.experiment.clone(),
                seed,
                grid_key: "tv",
                grid_value: tv,
                clean_risk: q0.expect(|atom| loss.value(w_pre, atom, &y)),
                ood_risk: measured,
                robust_objective: epsilon_pre,
                bound: report.population.bound.value,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_, _>>()?;
    let max_violation = rows
        .iter()
        .map(|row| row.ood_risk - row.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TransferOutcome { rows, max_violation })
}

// ---------------------------------------------------------------------------
// Single training job (CLI `train`)
// ---------------------------------------------------------------------------

pub fn run_train_job(
    config: &ExperimentConfig,
    seed_override: Option<u64>,
) -> Result<oodrisk_core::minimax::TrainTrace, HarnessError> {
    let loss = config.loss.build(&config.dataset.support_box, config.train.r)?;
    let data = make_dataset(
        config.dataset.n,
        config.dataset.d0,
        &config.dataset.support_box,
        &config.dataset.label_rule,
        config.dataset.seed,
    )?;
    let seed = seed_override.unwrap_or(config.seeds.base);
    let train_config = config.train.to_config(seed)?;
    Ok(minimax::train(loss.as_ref(), &data, &train_config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.0];
        assert!((ols_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_signs() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let inc = [0.1, 0.2, 0.3, 0.4, 0.5];
        let dec = [0.5, 0.4, 0.3, 0.2, 0.1];
        assert!((spearman(&xs, &inc) - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &dec) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn valley_detection() {
        assert!(single_valley(&[3.0, 2.0, 1.0, 2.0, 3.0]));
        assert!(single_valley(&[3.0, 2.0, 1.5, 1.2, 1.1]));
        assert!(!single_valley(&[1.0, 2.5, 0.5, 3.0, 0.2]));
    }

    #[test]
    fn vacuous_bound_renders() {
        let row = ResultRow {
            experiment: "x".into(),
            seed: 1,
            grid_key: "r",
            grid_value: 0.0,
            clean_risk: 0.1,
            ood_risk: 0.2,
            robust_objective: 0.3,
            bound: f64::INFINITY,
            runtime_s: 0.5,
        };
        let csv = results_csv(&[row]).unwrap();
        assert!(csv.contains("vacuous"));
        assert!(csv.lines().nth(1).unwrap().ends_with(','), "runtime cell stays empty");
    }

    #[test]
    fn nonfinite_metric_is_an_error() {
        let row = ResultRow {
            experiment: "x".into(),
            seed: 1,
            grid_key: "r",
            grid_value: 0.0,
            clean_risk: f64::NAN,
            ood_risk: 0.2,
            robust_objective: 0.3,
            bound: 0.4,
            runtime_s: 0.5,
        };
        assert!(results_csv(&[row]).is_err());
    }
}
