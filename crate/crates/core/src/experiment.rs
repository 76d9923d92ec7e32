//! Experiment configuration, single-run pipeline, arm execution and result
//! files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{
    amplitude_for_std, lowpass_random_input, random_linear_system, RobotParams, System, Trajectory,
    Transition,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    jacobian_error, monte_carlo, prediction_error, simulation_error, true_jacobians, ArmInfo,
    MonteCarloResult, RunMetrics, DIVERGENCE_FACTOR,
};
use crate::ltv::{fit_ltv, LtvFitConfig};
use crate::neural::{train_with_callback, Activation, Ensemble, Mlp, ObjectiveForm, TrainConfig};
use crate::rng;
use crate::tangent::{
    episode_loop, episode_rollout, perturb_trajectory, EpisodeConfig, PerturbationConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Sample time of the linear benchmark before the multiplier.
pub const LINEAR_BASE_DT: f64 = 0.1;

/// Checkpoint epochs of the activation study.
pub const ACTIVATION_CHECKPOINTS: [usize; 3] = [20, 500, 1500];

const SYSTEM_TAG: u64 = 0;
const INIT_TAG: u64 = 1;
const EPISODE_TAG: u64 = 2;
const VALIDATION_TAG: u64 = 3;
const PERTURB_TAG: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Linear,
    Robot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    F,
    G,
    Generalized,
    Tau,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::F => "f",
            ObjectiveKind::G => "g",
            ObjectiveKind::Generalized => "generalized",
            ObjectiveKind::Tau => "tau",
        }
    }
}

/// Which half of a paired comparison to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Baseline,
    Tangent,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Tangent => "tangent",
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "baseline" => Ok(Arm::Baseline),
            "tangent" => Ok(Arm::Tangent),
            other => Err(Error::Config(format!(
                "unknown arm `{other}` (expected baseline or tangent)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Experiment directory name under the output root.
    pub name: String,
    pub benchmark: Benchmark,
    pub linear_state_dim: usize,
    pub linear_input_dim: usize,
    pub objective: ObjectiveKind,
    /// Diagonal shift used by the `tau` objective.
    pub tau: f64,
    pub tangent_reg: bool,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Baseline epoch count; `None` selects 2000 for `f` and 1000 otherwise.
    /// Augmented training always uses half.
    pub epochs: Option<usize>,
    pub dt_multiplier: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub ensemble_size: usize,
    pub num_perturbed: usize,
    pub perturbation_scale: f64,
    pub resample_each_epoch: bool,
    pub keep_augmented: bool,
    pub noise_std: f64,
    /// Samples per training rollout.
    pub horizon: usize,
    pub validation_horizon: usize,
    pub episodes: usize,
    pub input_pole: f64,
    pub input_std: f64,
    pub ltv_lambda: f64,
    pub ltv_prior_scale: f64,
    pub step_size: f64,
    pub batch_size: usize,
    pub standardize: bool,
    pub n_runs: usize,
    pub base_seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "experiment".into(),
            benchmark: Benchmark::Robot,
            linear_state_dim: 10,
            linear_input_dim: 1,
            objective: ObjectiveKind::G,
            tau: 0.9,
            tangent_reg: false,
            weight_decay: 0.0,
            dropout: 0.0,
            epochs: None,
            dt_multiplier: 1.0,
            hidden_width: 20,
            hidden_layers: 1,
            ensemble_size: 4,
            num_perturbed: 1,
            perturbation_scale: 0.1,
            resample_each_epoch: false,
            keep_augmented: true,
            noise_std: 0.0,
            horizon: 200,
            validation_horizon: 200,
            episodes: 1,
            input_pole: 0.9,
            input_std: 1.0,
            ltv_lambda: LtvFitConfig::default().lambda,
            ltv_prior_scale: LtvFitConfig::default().prior_scale,
            step_size: TrainConfig::default().step_size,
            batch_size: TrainConfig::default().batch_size,
            standardize: true,
            n_runs: 35,
            base_seed: 0,
            output_dir: None,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.schema_version == SCHEMA_VERSION, || {
            format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )
        })?;
        check(
            !self.name.is_empty()
                && !self.name.contains(['/', '\\'])
                && self.name != ".."
                && self.name != ".",
            || format!("name `{}` is not a valid directory name", self.name),
        )?;
        check(
            self.linear_state_dim >= 1 && self.linear_input_dim >= 1,
            || "linear_state_dim and linear_input_dim must be >= 1".into(),
        )?;
        check(self.tau.is_finite(), || "tau must be finite".into())?;
        check(
            self.weight_decay >= 0.0 && self.weight_decay.is_finite(),
            || format!("weight_decay must be >= 0, got {}", self.weight_decay),
        )?;
        check((0.0..1.0).contains(&self.dropout), || {
            format!("dropout must lie in [0, 1), got {}", self.dropout)
        })?;
        check(self.epochs != Some(0) && self.epochs != Some(1), || {
            "epochs must be at least 2 so the augmented arm trains".into()
        })?;
        check(
            self.dt_multiplier > 0.0 && self.dt_multiplier.is_finite(),
            || format!("dt_multiplier must be positive, got {}", self.dt_multiplier),
        )?;
        check(self.hidden_width >= 1, || {
            "hidden_width must be >= 1".into()
        })?;
        check(self.ensemble_size >= 1, || {
            "ensemble_size must be >= 1".into()
        })?;
        check(
            self.perturbation_scale > 0.0 && self.perturbation_scale.is_finite(),
            || {
                format!(
                    "perturbation_scale must be positive, got {}",
                    self.perturbation_scale
                )
            },
        )?;
        check(self.noise_std >= 0.0 && self.noise_std.is_finite(), || {
            "noise_std must be >= 0".into()
        })?;
        check(self.horizon >= 3 && self.validation_horizon >= 2, || {
            "horizon must be >= 3 and validation_horizon >= 2".into()
        })?;
        check(self.episodes >= 1, || "episodes must be >= 1".into())?;
        check((0.0..1.0).contains(&self.input_pole), || {
            format!("input_pole must lie in [0, 1), got {}", self.input_pole)
        })?;
        check(self.input_std > 0.0 && self.input_std.is_finite(), || {
            "input_std must be positive".into()
        })?;
        check(
            self.ltv_lambda >= 0.0 && self.ltv_prior_scale >= 0.0,
            || "ltv_lambda and ltv_prior_scale must be >= 0".into(),
        )?;
        check(self.step_size > 0.0 && self.step_size.is_finite(), || {
            "step_size must be positive".into()
        })?;
        check(self.batch_size >= 1, || "batch_size must be >= 1".into())?;
        check(self.n_runs >= 1, || "n_runs must be >= 1".into())?;
        Ok(())
    }

    /// Copy with `tangent_reg` set for `arm`.
    pub fn for_arm(&self, arm: Arm) -> Self {
        Self {
            tangent_reg: arm == Arm::Tangent,
            ..self.clone()
        }
    }

    /// The arm this configuration runs as.
    pub fn arm(&self) -> Arm {
        if self.tangent_reg {
            Arm::Tangent
        } else {
            Arm::Baseline
        }
    }

    pub fn baseline_epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.objective {
            ObjectiveKind::F => 2000,
            _ => 1000,
        })
    }

    /// Epochs per episode: the baseline count, halved with augmentation.
    pub fn resolved_epochs(&self) -> usize {
        let base = self.baseline_epochs();
        if self.tangent_reg {
            base / 2
        } else {
            base
        }
    }

    pub fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }

    /// The benchmark system for a run; linear systems are drawn per seed.
    pub fn build_system(&self, seed: u64) -> Result<System> {
        match self.benchmark {
            Benchmark::Linear => Ok(System::Linear(random_linear_system(
                self.linear_state_dim,
                self.linear_input_dim,
                LINEAR_BASE_DT * self.dt_multiplier,
                rng::derive_seed(seed, SYSTEM_TAG),
            )?)),
            Benchmark::Robot => {
                let base = RobotParams::default();
                let dt = base.dt * self.dt_multiplier;
                Ok(System::Robot(base.with_dt(dt)))
            }
        }
    }

    /// Objective form for `system`. The generalized form uses the true
    /// linearization at the system's rest state as its nominal model.
    pub fn objective_form(&self, system: &System) -> Result<ObjectiveForm> {
        let n = system.state_dim();
        Ok(match self.objective {
            ObjectiveKind::F => ObjectiveForm::F,
            ObjectiveKind::G => ObjectiveForm::G,
            ObjectiveKind::Tau => ObjectiveForm::TauShift {
                tau: vec![self.tau; n],
            },
            ObjectiveKind::Generalized => {
                let x0 = system.default_initial_state();
                let u0 = vec![0.0; system.input_dim()];
                let j = system.true_jacobian(&x0, &u0)?;
                ObjectiveForm::Generalized {
                    a0: j.state_block(),
                    b0: j.input_block(),
                }
            }
        })
    }

    pub fn build_ensemble(&self, system: &System, seed: u64) -> Result<Ensemble> {
        Ensemble::nominal(
            system.state_dim(),
            system.input_dim(),
            &self.hidden(),
            self.objective_form(system)?,
            self.ensemble_size,
            self.dropout,
            rng::derive_seed(seed, INIT_TAG),
        )
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.resolved_epochs(),
            step_size: self.step_size,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            standardize: self.standardize,
            ..TrainConfig::default()
        }
    }

    pub fn ltv_config(&self) -> LtvFitConfig {
        LtvFitConfig {
            lambda: self.ltv_lambda,
            prior_scale: self.ltv_prior_scale,
        }
    }

    pub fn episode_config(&self, seed: u64) -> EpisodeConfig {
        EpisodeConfig {
            episodes: self.episodes,
            horizon: self.horizon,
            input_pole: self.input_pole,
            input_std: self.input_std,
            noise_std: self.noise_std,
            tangent: self.tangent_reg,
            keep_augmented: self.keep_augmented,
            ltv: self.ltv_config(),
            perturbation: PerturbationConfig {
                scale: self.perturbation_scale,
                num_perturbed: self.num_perturbed,
                resample_each_epoch: self.resample_each_epoch,
                seed: rng::derive_seed(seed, PERTURB_TAG),
            },
            train: self.train_config(),
            seed: rng::derive_seed(seed, EPISODE_TAG),
        }
    }

    /// Noise-free held-out rollout for a run.
    pub fn validation_trajectory(&self, system: &System, seed: u64) -> Result<Trajectory> {
        let s = rng::derive_seed(seed, VALIDATION_TAG);
        let inputs = lowpass_random_input(
            self.validation_horizon,
            system.input_dim(),
            self.input_pole,
            amplitude_for_std(self.input_pole, self.input_std),
            s,
        )?;
        system.rollout(&system.default_initial_state(), &inputs, 0.0, 0)
    }

    /// Output root: `output_dir`, else `fallback`.
    pub fn output_root(&self, fallback: &Path) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| fallback.to_path_buf())
    }
}

/// Trains one ensemble for `seed` and evaluates it on a held-out rollout.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<RunMetrics> {
    Ok(run_single_detailed(cfg, seed)?.metrics)
}

pub struct RunOutput {
    pub system: System,
    pub ensemble: Ensemble,
    pub training: Vec<Trajectory>,
    pub validation: Trajectory,
    pub metrics: RunMetrics,
}

pub fn run_single_detailed(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let system = cfg.build_system(seed)?;
    let ensemble = cfg.build_ensemble(&system, seed)?;
    let outcome = episode_loop(&system, ensemble, &cfg.episode_config(seed))?;
    if outcome.trajectories.is_empty() {
        return Err(Error::Divergence {
            step: 0,
            norm: f64::INFINITY,
        });
    }
    let validation = cfg.validation_trajectory(&system, seed)?;
    let ens = &outcome.ensemble;
    let sim = simulation_error(ens, &validation, DIVERGENCE_FACTOR)?;
    let metrics = RunMetrics {
        prediction_rmse: prediction_error(ens, &validation)?,
        simulation_rmse: sim.rmse,
        diverged: sim.diverged,
        jacobian_error: jacobian_error(ens, &validation, &true_jacobians(&system, &validation)?)?,
    };
    Ok(RunOutput {
        system,
        ensemble: outcome.ensemble,
        training: outcome.trajectories,
        validation,
        metrics,
    })
}

pub fn arm_info(cfg: &ExperimentConfig) -> ArmInfo {
    ArmInfo {
        arm: cfg.arm().name().into(),
        objective: cfg.objective.name().into(),
        tangent: cfg.tangent_reg,
        weight_decay: cfg.weight_decay,
        dropout: cfg.dropout,
    }
}

/// Runs `cfg.n_runs` seeds of one arm.
pub fn run_arm(cfg: &ExperimentConfig, arm: Arm, jobs: usize) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let arm_cfg = cfg.for_arm(arm);
    monte_carlo(
        &arm_info(&arm_cfg),
        cfg.n_runs,
        cfg.base_seed,
        jobs,
        |_, seed| run_single(&arm_cfg, seed),
    )
}

/// Writes `results.csv`, `timing.csv`, `summary.json` and
/// `config.resolved.json` under `<root>/<name>/<arm>/` and returns that
/// directory.
pub fn write_arm_outputs(
    root: &Path,
    cfg: &ExperimentConfig,
    arm: Arm,
    result: &MonteCarloResult,
) -> Result<PathBuf> {
    let dir = root.join(&cfg.name).join(arm.name());
    fs::create_dir_all(&dir)?;
    result.write_csv(fs::File::create(dir.join("results.csv"))?)?;
    result.write_timing_csv(fs::File::create(dir.join("timing.csv"))?)?;
    let mut summary = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut summary, &result.summary)?;
    writeln!(summary)?;
    let resolved = ResolvedConfig {
        config: cfg.for_arm(arm),
        resolved_epochs: cfg.for_arm(arm).resolved_epochs(),
    };
    let mut file = fs::File::create(dir.join("config.resolved.json"))?;
    serde_json::to_writer_pretty(&mut file, &resolved)?;
    writeln!(file)?;
    Ok(dir)
}

#[derive(Serialize)]
struct ResolvedConfig {
    #[serde(flatten)]
    config: ExperimentConfig,
    resolved_epochs: usize,
}

/// Training set for a run: every rollout of the configured episodes plus,
/// with `tangent_reg`, their perturbed copies.
pub fn collect_training_data(
    cfg: &ExperimentConfig,
    system: &System,
    seed: u64,
) -> Result<Vec<Transition>> {
    let ep = cfg.episode_config(seed);
    let mut data = Vec::new();
    for episode in 0..ep.episodes {
        let traj = episode_rollout(system, &ep, episode)?;
        data.extend(traj.transitions());
        if ep.tangent {
            let teacher = fit_ltv(&traj, &ep.ltv)?;
            let pcfg = PerturbationConfig {
                seed: ep.episode_seeds(episode)[2],
                ..ep.perturbation.clone()
            };
            data.extend(perturb_trajectory(&traj, &teacher, &pcfg)?);
        }
    }
    Ok(data)
}

/// One row of the activation-study CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    pub activation: String,
    pub epoch: usize,
    pub run: usize,
    pub log_error: f64,
}

/// Trains one network per activation and run on identical data and records
/// `log10` of the held-out one-step prediction RMSE at each checkpoint epoch.
/// Rows are ordered by activation, run and epoch.
pub fn activation_study(
    cfg: &ExperimentConfig,
    activations: &[Activation],
    checkpoints: &[usize],
    jobs: usize,
) -> Result<Vec<ActivationRecord>> {
    cfg.validate()?;
    let last =
        checkpoints.iter().copied().max().ok_or_else(|| {
            Error::Config("activation study needs at least one checkpoint".into())
        })?;
    let one = |activation: Activation, run: usize| -> Result<Vec<ActivationRecord>> {
        let seed = cfg.base_seed.wrapping_add(run as u64);
        let system = cfg.build_system(seed)?;
        let data = collect_training_data(cfg, &system, seed)?;
        let validation = cfg.validation_trajectory(&system, seed)?;
        let mut model = Mlp::new(
            system.state_dim(),
            system.input_dim(),
            &cfg.hidden(),
            activation,
            cfg.objective_form(&system)?,
            rng::derive_seed(seed, INIT_TAG),
        )?
        .with_dropout(cfg.dropout)?;
        let train_cfg = TrainConfig {
            epochs: last,
            seed: rng::derive_seed(seed, EPISODE_TAG),
            ..cfg.train_config()
        };
        let mut rows = Vec::new();
        let mut failure = None;
        train_with_callback(&mut model, &data, &train_cfg, |epoch, m| {
            if checkpoints.contains(&epoch) && failure.is_none() {
                match prediction_error(m, &validation) {
                    Ok(e) => rows.push(ActivationRecord {
                        activation: activation.name().into(),
                        epoch,
                        run,
                        log_error: e.log10(),
                    }),
                    Err(e) => failure = Some(e),
                }
            }
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(rows),
        }
    };
    let tasks: Vec<(Activation, usize)> = activations
        .iter()
        .flat_map(|&a| (0..cfg.n_runs).map(move |r| (a, r)))
        .collect();
    let results: Vec<Result<Vec<ActivationRecord>>> = if jobs <= 1 {
        tasks.iter().map(|&(a, r)| one(a, r)).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?
            .install(|| tasks.par_iter().map(|&(a, r)| one(a, r)).collect())
    };
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn write_activation_csv(rows: &[ActivationRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-activation median of `log_error` at `epoch`, in `activations` order.
pub fn activation_medians(
    rows: &[ActivationRecord],
    activations: &[Activation],
    epoch: usize,
) -> Vec<(Activation, Option<f64>)> {
    activations
        .iter()
        .map(|a| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.activation == a.name() && r.epoch == epoch)
                .map(|r| r.log_error)
                .collect();
            (*a, crate::evaluation::median(&vals))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            benchmark: Benchmark::Linear,
            linear_state_dim: 3,
            linear_input_dim: 1,
            hidden_width: 6,
            ensemble_size: 2,
            epochs: Some(6),
            horizon: 30,
            validation_horizon: 30,
            n_runs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn defaults_are_the_nominal_model() {
        let c = ExperimentConfig::default();
        assert_eq!(c.schema_version, 1);
        assert_eq!(c.objective, ObjectiveKind::G);
        assert_eq!(c.hidden(), vec![20]);
        assert_eq!(c.ensemble_size, 4);
        assert_eq!(c.num_perturbed, 1);
        assert_eq!(c.perturbation_scale, 0.1);
        assert_eq!(c.dropout, 0.0);
        assert_eq!(c.weight_decay, 0.0);
        assert_eq!(c.dt_multiplier, 1.0);
        assert_eq!(c.noise_std, 0.0);
        assert_eq!(c.baseline_epochs(), 1000);
        assert_eq!(c.for_arm(Arm::Tangent).resolved_epochs(), 500);
        let f = ExperimentConfig {
            objective: ObjectiveKind::F,
            ..c
        };
        assert_eq!(f.resolved_epochs(), 2000);
        assert_eq!(f.for_arm(Arm::Tangent).resolved_epochs(), 1000);
        c_is_valid(&f);
    }

    fn c_is_valid(c: &ExperimentConfig) {
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_is_identity() {
        let c = ExperimentConfig {
            epochs: Some(40),
            output_dir: Some("out/x".into()),
            ..tiny()
        };
        let text = c.to_json().unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn unknown_fields_and_bad_values_rejected() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"bogus": 1}"#),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"dropout": 1.5}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"n_runs": 0}"#).is_err());
        let partial =
            ExperimentConfig::from_json(r#"{"benchmark": "linear", "n_runs": 2}"#).unwrap();
        assert_eq!(partial.n_runs, 2);
        assert_eq!(partial.hidden_width, 20);
    }

    #[test]
    fn arms_share_systems_and_initialization() {
        let c = tiny();
        let b = c.for_arm(Arm::Baseline);
        let t = c.for_arm(Arm::Tangent);
        let sys = b.build_system(7).unwrap();
        assert_eq!(sys, t.build_system(7).unwrap());
        assert_eq!(
            b.build_ensemble(&sys, 7).unwrap(),
            t.build_ensemble(&sys, 7).unwrap()
        );
        assert_eq!(b.episode_config(7).seed, t.episode_config(7).seed);
    }

    #[test]
    fn arm_run_has_one_row_per_seed_and_writes_layout() {
        let c = tiny();
        let res = run_arm(&c, Arm::Tangent, 1).unwrap();
        assert_eq!(res.records.len(), 3);
        assert!(res.records.iter().all(|r| r.error.is_none() && r.tangent));
        let dir = tempfile::tempdir().unwrap();
        let out = write_arm_outputs(dir.path(), &c, Arm::Tangent, &res).unwrap();
        assert_eq!(out, dir.path().join("experiment").join("tangent"));
        for f in [
            "results.csv",
            "summary.json",
            "config.resolved.json",
            "timing.csv",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        let text = fs::read_to_string(out.join("results.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn generalized_form_uses_true_linearization() {
        let c = ExperimentConfig {
            objective: ObjectiveKind::Generalized,
            ..tiny()
        };
        let sys = c.build_system(1).unwrap();
        let System::Linear(l) = &sys else {
            unreachable!()
        };
        match c.objective_form(&sys).unwrap() {
            ObjectiveForm::Generalized { a0, b0 } => {
                assert_eq!(a0, l.a);
                assert_eq!(b0, l.b);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn activation_study_row_count_and_shared_data() {
        let c = ExperimentConfig {
            n_runs: 2,
            ..tiny()
        };
        let rows = activation_study(&c, &Activation::ALL, &[2, 4], 1).unwrap();
        assert_eq!(rows.len(), 6 * 2 * 2);
        let sys = c.build_system(1).unwrap();
        assert_eq!(
            collect_training_data(&c, &sys, 1).unwrap(),
            collect_training_data(&c, &sys, 1).unwrap()
        );
        let mut buf = Vec::new();
        write_activation_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("activation,epoch,run,log_error\n"));
    }
}
