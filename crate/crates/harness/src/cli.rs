//! Command-line interface: training jobs, exact distances, worst-case risk,
//! robustness certification, bound calculators, and the experiment suites.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use oodrisk_core::certify::{self, BoundInputs};
use oodrisk_core::losses::ConstantsProfile;
use oodrisk_core::numkit::{BallNorm, PerturbationBudget};
use oodrisk_core::transport::{self, BallOptQuality, DiscreteDistribution};

use oodrisk_harness::config::ExperimentConfig;
use oodrisk_harness::experiments::{
    self, run_convergence_experiment, run_perturbation_ablation, run_pretrain_transfer,
    run_sample_ablation, run_train_job,
};
use oodrisk_harness::HarnessError;

#[derive(Parser)]
#[command(
    name = "oodrisk",
    about = "Adversarial minimax training, exact transport distances, and certified OOD risk bounds",
    version
)]
struct Cli {
    /// Experiment or job configuration (JSON, strict keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path for CSV/JSON artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override for the job's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid experiments (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training job and export its trace CSV.
    Train,
    /// Exact distance between two distribution files.
    Distance(DistanceArgs),
    /// Worst-case risk over a Wasserstein ball.
    #[command(name = "worst-case")]
    WorstCase(WorstCaseArgs),
    /// Measure input-robustness of a parameter vector on a distribution.
    Certify(CertifyArgs),
    /// Bound calculators.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// Ablation experiments over perturbation size or sample count.
    #[command(subcommand)]
    Ablate(AblateCommand),
    /// Convergence-rate experiment on the certified quadratic instance.
    Converge,
    /// Pretraining transfer experiment.
    Transfer,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceKind {
    #[value(name = "2")]
    W2,
    #[value(name = "inf")]
    WInf,
    #[value(name = "tv")]
    Tv,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    #[value(name = "2")]
    L2,
    #[value(name = "inf")]
    LInf,
}

impl From<NormArg> for BallNorm {
    fn from(p: NormArg) -> Self {
        match p {
            NormArg::L2 => BallNorm::L2,
            NormArg::LInf => BallNorm::LInf,
        }
    }
}

#[derive(Args)]
struct DistanceArgs {
    #[arg(long, value_enum)]
    p: DistanceKind,
    /// First distribution (JSON file).
    #[arg(long)]
    a: PathBuf,
    /// Second distribution (JSON file).
    #[arg(long)]
    b: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum QualityArg {
    Analytic,
    Pgd,
}

#[derive(Args)]
struct WorstCaseArgs {
    #[arg(long, value_enum)]
    p: NormArg,
    #[arg(long)]
    r: f64,
    /// Center distribution P0 (JSON file).
    #[arg(long)]
    dist: PathBuf,
    /// Parameter vector, comma-separated.
    #[arg(long)]
    w: String,
    #[arg(long, value_enum, default_value = "analytic")]
    quality: QualityArg,
    /// Inner PGD steps when quality is pgd.
    #[arg(long, default_value_t = 60)]
    steps: usize,
    /// Budget tolerance of the W2 multiplier search.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, value_enum)]
    p: NormArg,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    w: String,
    #[arg(long, value_enum, default_value = "analytic")]
    quality: QualityArg,
    #[arg(long, default_value_t = 60)]
    steps: usize,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// OOD generalization bound over the W∞ ball.
    Winf(OodBoundArgs),
    /// OOD generalization bound over the W₂ ball.
    W2(OodBoundArgs),
    /// Excess-risk bound of the adversarially trained iterate.
    Excess(ExcessArgs),
    /// Pretraining transfer bound.
    Pretrain(PretrainArgs),
}

#[derive(Args)]
struct OodBoundArgs {
    /// Robustness level ε.
    #[arg(long)]
    eps: f64,
    /// Loss upper bound M.
    #[arg(long)]
    m: f64,
    #[arg(long)]
    d0: usize,
    /// ℓ₁-diameter D of the data support.
    #[arg(long)]
    diam: f64,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    theta: f64,
}

#[derive(Args)]
struct ExcessArgs {
    /// Achieved optimum bound ε₀.
    #[arg(long)]
    eps0: f64,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d0: usize,
    #[arg(long)]
    diam: f64,
    #[arg(long)]
    r: f64,
    #[arg(long, value_enum)]
    p: NormArg,
    #[arg(long)]
    m: f64,
    #[arg(long)]
    g: f64,
    #[arg(long)]
    l11: f64,
    #[arg(long)]
    l12: f64,
    #[arg(long)]
    l21: f64,
    #[arg(long)]
    l22: f64,
    #[arg(long)]
    mu_w: f64,
    #[arg(long)]
    mu_x: f64,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    eps_pre: f64,
    #[arg(long)]
    m: f64,
    #[arg(long)]
    tv: f64,
    #[arg(long, value_enum, default_value = "inf")]
    p: NormArg,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    diam: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
}

#[derive(Subcommand)]
enum AblateCommand {
    /// Perturbation-size ablation.
    R,
    /// Sample-count ablation.
    N,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    if let Some(threads) = cli.threads {
        // Ignore the error when a pool already exists (tests share a process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Train => {
            let config = load_config(cli, "train")?;
            let trace = run_train_job(&config, cli.seed)?;
            let out = output_path(cli, &config)?;
            std::fs::write(&out, trace.to_csv())?;
            if let Some(full) = trace.terminal_full_objective() {
                println!("terminal_objective {full:?}");
            }
            Ok(())
        }
        Command::Distance(args) => {
            let a = load_distribution(&args.a)?;
            let b = load_distribution(&args.b)?;
            let value = match args.p {
                DistanceKind::W2 => transport::wasserstein2(&a, &b)?,
                DistanceKind::WInf => transport::wasserstein_inf(&a, &b)?,
                DistanceKind::Tv => transport::tv_distance(&a, &b),
            };
            println!("{value:?}");
            Ok(())
        }
        Command::WorstCase(args) => {
            let config = require_config(cli)?;
            let p0 = load_distribution(&args.dist)?;
            let loss = config.loss.build(&config.dataset.support_box, args.r)?;
            let w = parse_vector(&args.w)?;
            let quality = match args.quality {
                QualityArg::Analytic => BallOptQuality::Analytic,
                QualityArg::Pgd => BallOptQuality::Pgd { steps: args.steps, eta_x: None },
            };
            let value = match BallNorm::from(args.p) {
                BallNorm::LInf => {
                    transport::worst_case_risk_winf(loss.as_ref(), &w, &p0, args.r, quality)?
                }
                BallNorm::L2 => {
                    let report =
                        transport::worst_case_risk_w2(loss.as_ref(), &w, &p0, args.r, args.tol)?;
                    if let Some(out) = &cli.out {
                        std::fs::write(out, serde_json::to_string_pretty(&report).expect("report"))?;
                    }
                    report.value
                }
            };
            println!("{value:?}");
            Ok(())
        }
        Command::Certify(args) => {
            let config = require_config(cli)?;
            let p0 = load_distribution(&args.dist)?;
            let loss = config.loss.build(&config.dataset.support_box, args.r)?;
            let w = parse_vector(&args.w)?;
            let quality = match args.quality {
                QualityArg::Analytic => BallOptQuality::Analytic,
                QualityArg::Pgd => BallOptQuality::Pgd { steps: args.steps, eta_x: None },
            };
            let budget = PerturbationBudget::new(args.p.into(), args.r)?;
            let report = certify::measure_robustness(loss.as_ref(), &w, &p0, budget, quality)?;
            if let Some(out) = &cli.out {
                std::fs::write(out, serde_json::to_string_pretty(&report).expect("report"))?;
            }
            println!("{:?}", report.epsilon_hat);
            Ok(())
        }
        Command::Bounds(bounds) => run_bounds(cli, bounds),
        Command::Ablate(which) => {
            let (config, outcome_rows, summary) = match which {
                AblateCommand::R => {
                    let config = load_config(cli, "ablate_r")?;
                    let outcome = run_perturbation_ablation(&config)?;
                    let summary = serde_json::to_value(&outcome).expect("summary");
                    (config, outcome.rows, summary)
                }
                AblateCommand::N => {
                    let config = load_config(cli, "ablate_n")?;
                    let outcome = run_sample_ablation(&config)?;
                    let summary = serde_json::to_value(&outcome).expect("summary");
                    (config, outcome.rows, summary)
                }
            };
            finish_experiment(cli, &config, &outcome_rows, summary)
        }
        Command::Converge => {
            let config = load_config(cli, "converge")?;
            let outcome = run_convergence_experiment(&config)?;
            let summary = serde_json::to_value(&outcome).expect("summary");
            finish_experiment(cli, &config, &outcome.rows, summary)
        }
        Command::Transfer => {
            let config = load_config(cli, "transfer")?;
            let outcome = run_pretrain_transfer(&config)?;
            let summary = serde_json::to_value(&outcome).expect("summary");
            finish_experiment(cli, &config, &outcome.rows, summary)
        }
    }
}

fn run_bounds(cli: &Cli, bounds: &BoundsCommand) -> Result<(), HarnessError> {
    let (report, extra) = match bounds {
        BoundsCommand::Winf(args) => {
            let report = certify::ood_bound_winf(&ood_inputs(args))?;
            (report, None)
        }
        BoundsCommand::W2(args) => {
            let report = certify::ood_bound_w2(&ood_inputs(args))?;
            (report, None)
        }
        BoundsCommand::Excess(args) => {
            let profile = ConstantsProfile {
                l11: args.l11,
                l12: args.l12,
                l21: args.l21,
                l22: args.l22,
                g: args.g,
                m: args.m,
                mu_w: args.mu_w,
                mu_x: args.mu_x,
                certified: false,
            };
            let inputs = BoundInputs {
                d0: args.d0,
                diameter: args.diam,
                loss_bound: args.m,
                n: args.n,
                r: args.r,
                epsilon: args.eps0,
                theta: args.theta,
                epsilon_pre: None,
                tv: None,
            };
            let report = certify::excess_risk_bound(&inputs, &profile, args.t, args.p.into())?;
            (report, None)
        }
        BoundsCommand::Pretrain(args) => {
            let inputs = BoundInputs {
                d0: 1,
                diameter: args.diam,
                loss_bound: args.m,
                n: args.n,
                r: args.r,
                epsilon: 0.0,
                theta: args.theta,
                epsilon_pre: Some(args.eps_pre),
                tv: Some(args.tv),
            };
            let report = certify::pretrain_transfer_bound(&inputs, args.p.into())?;
            let extra = report.required_pretrain_radius;
            (report.population, extra)
        }
    };
    if let Some(out) = &cli.out {
        std::fs::write(out, report.to_json())?;
    }
    if report.bound.is_vacuous() {
        println!("vacuous");
    } else {
        println!("{:.4}", report.bound.value);
    }
    if let Some(radius) = extra {
        println!("required_pretrain_radius {:.5}", radius);
    }
    Ok(())
}

fn ood_inputs(args: &OodBoundArgs) -> BoundInputs {
    BoundInputs {
        d0: args.d0,
        diameter: args.diam,
        loss_bound: args.m,
        n: args.n,
        r: args.r,
        epsilon: args.eps,
        theta: args.theta,
        epsilon_pre: None,
        tv: None,
    }
}

fn require_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid("--config is required for this command".into()))?;
    ExperimentConfig::from_file(path)
}

fn load_config(cli: &Cli, expected: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut config = require_config(cli)?;
    if config.experiment != expected {
        return Err(HarnessError::Invalid(format!(
            "config declares experiment '{}' but the subcommand expects '{expected}'",
            config.experiment
        )));
    }
    if let Some(seed) = cli.seed {
        config.seeds.base = seed;
    }
    Ok(config)
}

fn output_path(cli: &Cli, config: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    cli.out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .ok_or_else(|| HarnessError::Invalid("no output path: pass --out or set config.output".into()))
}

fn finish_experiment(
    cli: &Cli,
    config: &ExperimentConfig,
    rows: &[experiments::ResultRow],
    summary: serde_json::Value,
) -> Result<(), HarnessError> {
    let out = output_path(cli, config)?;
    experiments::write_outputs(&out, rows, &config.experiment, summary.clone())?;
    println!("{summary}");
    Ok(())
}

fn load_distribution(path: &Path) -> Result<DiscreteDistribution, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    DiscreteDistribution::from_json(&text).map_err(HarnessError::from)
}

fn parse_vector(text: &str) -> Result<Vec<f64>, HarnessError> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| HarnessError::Invalid(format!("bad vector entry '{tok}': {e}")))
        })
        .collect()
}
