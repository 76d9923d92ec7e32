#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use jacprop::benchmarks::{
    amplitude_for_std, lowpass_random_input, random_linear_system, RobotParams, System, Trajectory,
    TrajectoryMeta,
};
use jacprop::evaluation::spectrum_report;
use jacprop::experiment::{
    activation_medians, activation_study, run_arm, run_single_detailed, write_activation_csv,
    write_arm_outputs, Arm, ExperimentConfig, ACTIVATION_CHECKPOINTS,
};
use jacprop::ltv::{fit_ltv, LtvFitConfig};
use jacprop::neural::Activation;
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "jacprop",
    version,
    about = "Neural dynamics models with tangent-space regularization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random stable linear system and check its spectrum.
    GenLinear(GenLinearArgs),
    /// Run the Monte-Carlo experiment for one or more arms.
    Run(RunArgs),
    /// Compare activation functions at checkpoint epochs.
    ActivationStudy(StudyArgs),
    /// Train one model and write learned and true Jacobian eigenvalues.
    Spectrum(SpectrumArgs),
    /// Fit a linear time-varying model to a recorded trajectory.
    FitLtv(FitLtvArgs),
    /// Simulate a benchmark system under random low-pass input.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct GenLinearArgs {
    /// State dimension.
    #[arg(short = 'n', long, default_value_t = 10)]
    states: usize,
    /// Input dimension.
    #[arg(short = 'm', long, default_value_t = 1)]
    inputs: usize,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON file.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. `--set epochs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Disable input/output standardization.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct OutputArgs {
    /// Default output root when the config has no `output_dir`.
    #[arg(long, env = "JACPROP_OUT", default_value = "results")]
    out: PathBuf,
    /// Worker threads for Monte-Carlo runs.
    #[arg(short, long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Comma-separated arms to run.
    #[arg(long, value_delimiter = ',', default_value = "baseline,tangent")]
    arms: Vec<Arm>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of sampled state-input points.
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Output CSV file.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitLtvArgs {
    /// Trajectory CSV with its `.json` metadata sidecar.
    #[arg(short, long)]
    trajectory: PathBuf,
    #[arg(long, default_value_t = LtvFitConfig::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = LtvFitConfig::default().prior_scale)]
    prior_scale: f64,
    /// Output JSON file for the fitted model.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// System JSON as written by `gen-linear`; the default robot when omitted.
    #[arg(short, long)]
    system: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    horizon: usize,
    #[arg(long, default_value_t = 0.9)]
    input_pole: f64,
    #[arg(long, default_value_t = 1.0)]
    input_std: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file; metadata goes to `<out>.json`.
    #[arg(short, long)]
    out: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<jacprop::Error>() {
            Some(jacprop::Error::Config(_)) => Failure::Usage(e),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<jacprop::Error> for Failure {
    fn from(e: jacprop::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenLinear(a) => gen_linear(a),
        Command::Run(a) => run(a),
        Command::ActivationStudy(a) => study(a),
        Command::Spectrum(a) => spectrum(a),
        Command::FitLtv(a) => fit(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?,
        None => ExperimentConfig::default().to_json()?,
    };
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid config JSON: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| usage("config must be a JSON object"))?;
    for item in &args.set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("expected KEY=VALUE, got `{item}`")))?;
        obj.insert(key.to_string(), parse_value(raw));
    }
    if let Some(n) = args.n_runs {
        obj.insert("n_runs".into(), n.into());
    }
    if let Some(s) = args.base_seed {
        obj.insert("base_seed".into(), s.into());
    }
    if let Some(e) = args.epochs {
        obj.insert("epochs".into(), e.into());
    }
    if args.no_standardize {
        obj.insert("standardize".into(), false.into());
    }
    Ok(ExperimentConfig::from_json(&value.to_string())?)
}

fn check_jobs(jobs: usize) -> Result<(), Failure> {
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn gen_linear(a: GenLinearArgs) -> Result<(), Failure> {
    if a.states == 0 || a.inputs == 0 {
        return Err(usage("state and input dimensions must be at least 1"));
    }
    if !(a.dt > 0.0) {
        return Err(usage("dt must be positive"));
    }
    let sys = random_linear_system(a.states, a.inputs, a.dt, a.seed)?;
    let deviation = sys.spectral_deviation()?;
    write_json(&a.out, &System::Linear(sys))?;
    println!("max | |lambda| - exp(-dt^2) | = {deviation:.3e}");
    if deviation > 1e-9 {
        return Err(Failure::Runtime(anyhow!(
            "spectral deviation {deviation:.3e} exceeds 1e-9"
        )));
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<(), Failure> {
    check_jobs(a.output.jobs)?;
    if a.arms.is_empty() {
        return Err(usage("no arms given"));
    }
    let cfg = load_config(&a.config)?;
    let root = cfg.output_root(&a.output.out);
    let mut failed = 0;
    for &arm in &a.arms {
        let result = run_arm(&cfg, arm, a.output.jobs)?;
        let dir = write_arm_outputs(&root, &cfg, arm, &result)?;
        for r in &result.records {
            if let Some(err) = &r.error {
                eprintln!("{} run {} (seed {}): {err}", arm.name(), r.run_id, r.seed);
                failed += 1;
            }
        }
        let s = &result.summary;
        let fmt = |st: Option<jacprop::evaluation::Stats>| {
            st.map_or("n/a".to_string(), |s| {
                format!("{:.4e} (iqr {:.2e})", s.median, s.iqr)
            })
        };
        println!(
            "{}: prediction {}, simulation {}, jacobian {}, diverged {}, failures {} -> {}",
            arm.name(),
            fmt(s.prediction_rmse),
            fmt(s.simulation_rmse),
            fmt(s.jacobian_error),
            s.diverged,
            s.failures,
            dir.display()
        );
    }
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!("{failed} run(s) failed")));
    }
    Ok(())
}

fn study(a: StudyArgs) -> Result<(), Failure> {
    check_jobs(a.output.jobs)?;
    let cfg = load_config(&a.config)?;
    let rows = activation_study(
        &cfg,
        &Activation::ALL,
        &ACTIVATION_CHECKPOINTS,
        a.output.jobs,
    )?;
    let dir = cfg.output_root(&a.output.out).join(&cfg.name);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join("activation_study.csv");
    let file =
        fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    write_activation_csv(&rows, file)?;
    for epoch in ACTIVATION_CHECKPOINTS {
        let medians: Vec<String> = activation_medians(&rows, &Activation::ALL, epoch)
            .into_iter()
            .map(|(act, m)| format!("{act}={}", m.map_or("n/a".into(), |v| format!("{v:.3}"))))
            .collect();
        println!("epoch {epoch}: median log10 error {}", medians.join(" "));
    }
    println!("{}", path.display());
    Ok(())
}

fn spectrum(a: SpectrumArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config)?;
    let out = run_single_detailed(&cfg, a.seed)?;
    let reference = out
        .training
        .first()
        .ok_or_else(|| Failure::Runtime(anyhow!("no training trajectory")))?;
    let report = spectrum_report(&out.ensemble, &out.system, reference, a.points, a.seed)?;
    let file =
        fs::File::create(&a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    report.write_csv(file)?;
    println!(
        "mean |lambda| learned {:.4}, true {:.4}; mean distance to truth {:.4}; skipped points {}",
        report.mean_modulus(jacprop::evaluation::EigenSource::Learned),
        report.mean_modulus(jacprop::evaluation::EigenSource::True),
        report.mean_distance_to_truth(),
        report.skipped.len()
    );
    Ok(())
}

fn fit(a: FitLtvArgs) -> Result<(), Failure> {
    let (traj, _) = Trajectory::load(&a.trajectory)
        .with_context(|| format!("cannot load trajectory {}", a.trajectory.display()))?;
    let cfg = LtvFitConfig {
        lambda: a.lambda,
        prior_scale: a.prior_scale,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let model = fit_ltv(&traj, &cfg)?;
    let objective = model.objective(&traj, &cfg)?;
    write_json(&a.out, &model)?;
    println!("fitted {} steps, objective {objective:.6e}", model.len());
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let system = match &a.system {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<System>(&text)
                .map_err(|e| usage(format!("invalid system file: {e}")))?
        }
        None => System::Robot(RobotParams::default()),
    };
    if a.horizon < 2 {
        return Err(usage("horizon must be at least 2"));
    }
    if !(0.0..1.0).contains(&a.input_pole) {
        return Err(usage("input pole must lie in [0, 1)"));
    }
    let inputs = lowpass_random_input(
        a.horizon,
        system.input_dim(),
        a.input_pole,
        amplitude_for_std(a.input_pole, a.input_std),
        a.seed,
    )?;
    let traj = system.rollout(
        &system.default_initial_state(),
        &inputs,
        a.noise_std,
        a.seed,
    )?;
    let meta = TrajectoryMeta {
        dt: traj.dt,
        state_dim: traj.state_dim(),
        input_dim: traj.input_dim(),
        system: Some(system),
        seed: Some(a.seed),
        noise_scale: a.noise_std,
    };
    traj.save(&a.out, &meta)?;
    println!("wrote {} samples to {}", traj.len(), a.out.display());
    Ok(())
}
