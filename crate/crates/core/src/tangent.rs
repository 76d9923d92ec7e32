//! Sampled Jacobian propagation: training data augmented with Gaussian
//! perturbations of recorded states and inputs whose targets come from a
//! locally fitted LTV teacher, and the episode loop that accumulates it.

use serde::{Deserialize, Serialize};

use crate::benchmarks::{amplitude_for_std, lowpass_random_input, System, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::ltv::{fit_ltv, LtvFitConfig, LtvModel};
use crate::neural::{Ensemble, TrainConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Perturbation standard deviation relative to each dimension's sample
    /// standard deviation.
    pub scale: f64,
    /// Perturbed copies generated per recorded transition.
    pub num_perturbed: usize,
    /// Draw fresh perturbations every training epoch.
    pub resample_each_epoch: bool,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            scale: 0.1,
            num_perturbed: 1,
            resample_each_epoch: false,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Parameter(format!(
                "perturbation scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Offsets applied to the state and input of transition `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub t: usize,
    pub eps_x: Vec<f64>,
    pub eps_u: Vec<f64>,
}

/// Per-dimension sample variances of the states and inputs of `traj`.
pub fn dimension_variances(traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    (variances(&traj.states), variances(&traj.inputs))
}

fn variances(rows: &[Vec<f64>]) -> Vec<f64> {
    let len = rows.len() as f64;
    let dim = rows.first().map_or(0, Vec::len);
    (0..dim)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / len;
            rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (len - 1.0)
        })
        .collect()
}

/// Draws `cfg.num_perturbed` perturbations for every transition of `traj`,
/// copy-major, with `ε_x ~ N(0, scale² diag Σ_x)` and `ε_u ~ N(0, scale² diag Σ_u)`.
pub fn sample_perturbations(
    traj: &Trajectory,
    cfg: &PerturbationConfig,
    seed: u64,
) -> Result<Vec<Perturbation>> {
    cfg.validate()?;
    traj.validate()?;
    let (var_x, var_u) = dimension_variances(traj);
    let sd_x: Vec<f64> = var_x.iter().map(|v| cfg.scale * v.sqrt()).collect();
    let sd_u: Vec<f64> = var_u.iter().map(|v| cfg.scale * v.sqrt()).collect();
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(cfg.num_perturbed * traj.num_transitions());
    for _ in 0..cfg.num_perturbed {
        for t in 0..traj.num_transitions() {
            let eps_x = sd_x.iter().map(|s| s * rng::normal(&mut r)).collect();
            let eps_u = sd_u.iter().map(|s| s * rng::normal(&mut r)).collect();
            out.push(Perturbation { t, eps_x, eps_u });
        }
    }
    Ok(out)
}

/// Perturbed transitions `(x_t + ε_x, u_t + ε_u, A_t x̃ + B_t ũ)`.
pub fn apply_perturbations(
    traj: &Trajectory,
    teacher: &LtvModel,
    perturbations: &[Perturbation],
) -> Result<Vec<Transition>> {
    check_teacher(traj, teacher)?;
    perturbations
        .iter()
        .map(|p| {
            if p.t >= teacher.len() {
                return Err(Error::Index {
                    index: p.t,
                    len: teacher.len(),
                });
            }
            if p.eps_x.len() != traj.state_dim() || p.eps_u.len() != traj.input_dim() {
                return Err(Error::Dimension(format!(
                    "perturbation at step {} has sizes {}/{}, trajectory {}/{}",
                    p.t,
                    p.eps_x.len(),
                    p.eps_u.len(),
                    traj.state_dim(),
                    traj.input_dim()
                )));
            }
            let x: Vec<f64> = traj.states[p.t]
                .iter()
                .zip(&p.eps_x)
                .map(|(a, e)| a + e)
                .collect();
            let u: Vec<f64> = traj.inputs[p.t]
                .iter()
                .zip(&p.eps_u)
                .map(|(a, e)| a + e)
                .collect();
            let next = teacher.predict(&x, &u, p.t)?;
            Ok(Transition { x, u, next })
        })
        .collect()
}

fn check_teacher(traj: &Trajectory, teacher: &LtvModel) -> Result<()> {
    if teacher.len() != traj.num_transitions()
        || teacher.state_dim() != traj.state_dim()
        || teacher.input_dim() != traj.input_dim()
    {
        return Err(Error::Dimension(format!(
            "teacher has {} steps of size {}x{}, trajectory has {} transitions of size {}x{}",
            teacher.len(),
            teacher.state_dim(),
            teacher.input_dim(),
            traj.num_transitions(),
            traj.state_dim(),
            traj.input_dim()
        )));
    }
    Ok(())
}

/// Augmented transitions for `traj` drawn with `cfg.seed`.
pub fn perturb_trajectory(
    traj: &Trajectory,
    teacher: &LtvModel,
    cfg: &PerturbationConfig,
) -> Result<Vec<Transition>> {
    check_teacher(traj, teacher)?;
    let perturbations = sample_perturbations(traj, cfg, cfg.seed)?;
    apply_perturbations(traj, teacher, &perturbations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub episodes: usize,
    /// Samples per rollout.
    pub horizon: usize,
    /// Pole of the low-pass exploration input.
    pub input_pole: f64,
    /// Stationary standard deviation of each exploration input.
    pub input_std: f64,
    /// Measurement noise added to recorded states.
    pub noise_std: f64,
    /// Augment the training set with perturbed transitions.
    pub tangent: bool,
    /// Keep augmented data from earlier episodes; otherwise only the latest
    /// episode's augmented data is used.
    pub keep_augmented: bool,
    pub ltv: LtvFitConfig,
    pub perturbation: PerturbationConfig,
    /// Training settings applied every episode. The caller chooses the epoch
    /// count; augmented runs conventionally use half the baseline's.
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            episodes: 1,
            horizon: 200,
            input_pole: 0.9,
            input_std: 1.0,
            noise_std: 0.0,
            tangent: true,
            keep_augmented: true,
            ltv: LtvFitConfig::default(),
            perturbation: PerturbationConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 3 {
            return Err(Error::Parameter(format!(
                "rollout horizon must be at least 3, got {}",
                self.horizon
            )));
        }
        if !(self.input_std >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Parameter(
                "standard deviations must be non-negative".into(),
            ));
        }
        self.ltv.validate()?;
        self.perturbation.validate()?;
        self.train.validate()
    }

    /// Seeds for one episode's rollout input, measurement noise,
    /// perturbations and training.
    pub fn episode_seeds(&self, episode: usize) -> [u64; 4] {
        let base = rng::derive_seed(self.seed, episode as u64);
        [
            rng::derive_seed(base, 0),
            rng::derive_seed(base, 1),
            rng::derive_seed(rng::derive_seed(self.perturbation.seed, base), 2),
            rng::derive_seed(base, 3),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EpisodeStatus {
    Trained,
    RolloutDiverged { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub status: EpisodeStatus,
    /// Recorded transitions in the training set after this episode.
    pub recorded: usize,
    /// Augmented transitions in the training set after this episode.
    pub augmented: usize,
    /// Final-epoch training loss averaged over ensemble members.
    pub final_loss: Option<f64>,
}

impl EpisodeMetrics {
    pub fn dataset_size(&self) -> usize {
        self.recorded + self.augmented
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub ensemble: Ensemble,
    pub metrics: Vec<EpisodeMetrics>,
    /// Rollouts of the successful episodes.
    pub trajectories: Vec<Trajectory>,
}

/// The exploration rollout of `episode`, started from the system's rest state.
pub fn episode_rollout(system: &System, cfg: &EpisodeConfig, episode: usize) -> Result<Trajectory> {
    let [input_seed, noise_seed, ..] = cfg.episode_seeds(episode);
    let inputs = lowpass_random_input(
        cfg.horizon,
        system.input_dim(),
        cfg.input_pole,
        amplitude_for_std(cfg.input_pole, cfg.input_std),
        input_seed,
    )?;
    system.rollout(
        &system.default_initial_state(),
        &inputs,
        cfg.noise_std,
        noise_seed,
    )
}

/// Runs the episode loop with no controller update between episodes.
pub fn episode_loop(
    system: &System,
    ensemble: Ensemble,
    cfg: &EpisodeConfig,
) -> Result<EpisodeOutcome> {
    episode_loop_with_hook(system, ensemble, cfg, |_, _, _| {})
}

struct Source {
    traj: Trajectory,
    teacher: LtvModel,
    seed: u64,
}

/// Per episode: roll out a fresh low-pass input, fit the LTV teacher, add the
/// rollout and its perturbed copies to the cumulative training set, and
/// continue training every member. `after_episode(episode, ensemble, rollout)`
/// runs after each successful episode and is where a controller update would
/// go.
pub fn episode_loop_with_hook(
    system: &System,
    mut ensemble: Ensemble,
    cfg: &EpisodeConfig,
    mut after_episode: impl FnMut(usize, &Ensemble, &Trajectory),
) -> Result<EpisodeOutcome> {
    cfg.validate()?;
    if ensemble.state_dim() != system.state_dim() || ensemble.input_dim() != system.input_dim() {
        return Err(Error::Dimension(format!(
            "ensemble is {}x{}, system is {}x{}",
            ensemble.state_dim(),
            ensemble.input_dim(),
            system.state_dim(),
            system.input_dim()
        )));
    }
    let mut recorded: Vec<Transition> = Vec::new();
    let mut augmented: Vec<Transition> = Vec::new();
    let mut sources: Vec<Source> = Vec::new();
    let mut metrics = Vec::with_capacity(cfg.episodes);
    let mut trajectories = Vec::new();
    for episode in 0..cfg.episodes {
        let [_, _, perturb_seed, train_seed] = cfg.episode_seeds(episode);
        let traj = match episode_rollout(system, cfg, episode) {
            Ok(t) => t,
            Err(Error::Divergence { step, .. }) => {
                metrics.push(EpisodeMetrics {
                    episode,
                    status: EpisodeStatus::RolloutDiverged { step },
                    recorded: recorded.len(),
                    augmented: augmented.len(),
                    final_loss: None,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        recorded.extend(traj.transitions());
        if cfg.tangent {
            let teacher = fit_ltv(&traj, &cfg.ltv)?;
            if !cfg.keep_augmented {
                augmented.clear();
                sources.clear();
            }
            if !cfg.perturbation.resample_each_epoch {
                let pcfg = PerturbationConfig {
                    seed: perturb_seed,
                    ..cfg.perturbation.clone()
                };
                augmented.extend(perturb_trajectory(&traj, &teacher, &pcfg)?);
            }
            sources.push(Source {
                traj: traj.clone(),
                teacher,
                seed: perturb_seed,
            });
        }
        let train_cfg = TrainConfig {
            seed: train_seed,
            ..cfg.train.clone()
        };
        let curves = if cfg.tangent && cfg.perturbation.resample_each_epoch {
            ensemble.train_resampled(&recorded, &train_cfg, |_, epoch| {
                let mut extra = Vec::new();
                for s in &sources {
                    let p = sample_perturbations(
                        &s.traj,
                        &cfg.perturbation,
                        rng::derive_seed(s.seed, epoch as u64),
                    )?;
                    extra.extend(apply_perturbations(&s.traj, &s.teacher, &p)?);
                }
                Ok(extra)
            })?
        } else {
            let mut data = recorded.clone();
            data.extend_from_slice(&augmented);
            ensemble.train(&data, &train_cfg)?
        };
        let augmented_count = if cfg.perturbation.resample_each_epoch {
            sources.len() * cfg.perturbation.num_perturbed * traj.num_transitions()
        } else {
            augmented.len()
        };
        let last: Vec<f64> = curves.iter().filter_map(|c| c.last().copied()).collect();
        let final_loss = (!last.is_empty()).then(|| last.iter().sum::<f64>() / last.len() as f64);
        metrics.push(EpisodeMetrics {
            episode,
            status: EpisodeStatus::Trained,
            recorded: recorded.len(),
            augmented: augmented_count,
            final_loss,
        });
        after_episode(episode, &ensemble, &traj);
        trajectories.push(traj);
    }
    Ok(EpisodeOutcome {
        ensemble,
        metrics,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::random_linear_system;
    use crate::neural::ObjectiveForm;

    fn linear_system() -> System {
        System::Linear(random_linear_system(3, 2, 0.1, 4).unwrap())
    }

    fn linear_rollout(sys: &System, len: usize) -> Trajectory {
        let u = lowpass_random_input(len, 2, 0.0, 1.0, 8).unwrap();
        sys.rollout(&[0.5, -0.2, 0.1], &u, 0.0, 0).unwrap()
    }

    fn exact_teacher(sys: &System, traj: &Trajectory) -> LtvModel {
        let System::Linear(l) = sys else {
            unreachable!()
        };
        let steps = traj.num_transitions();
        LtvModel::new(vec![l.a.clone(); steps], vec![l.b.clone(); steps], l.dt).unwrap()
    }

    #[test]
    fn count_is_copies_times_transitions() {
        let sys = linear_system();
        let traj = linear_rollout(&sys, 30);
        let teacher = exact_teacher(&sys, &traj);
        for k in [0, 1, 3] {
            let cfg = PerturbationConfig {
                num_perturbed: k,
                ..Default::default()
            };
            assert_eq!(
                perturb_trajectory(&traj, &teacher, &cfg).unwrap().len(),
                k * 29
            );
        }
    }

    #[test]
    fn zero_perturbation_reproduces_teacher_predictions() {
        let sys = linear_system();
        let traj = linear_rollout(&sys, 20);
        let teacher = fit_ltv(&traj, &LtvFitConfig::default()).unwrap();
        let zeros: Vec<Perturbation> = (0..19)
            .map(|t| Perturbation {
                t,
                eps_x: vec![0.0; 3],
                eps_u: vec![0.0; 2],
            })
            .collect();
        let aug = apply_perturbations(&traj, &teacher, &zeros).unwrap();
        for (t, tr) in aug.iter().enumerate() {
            assert_eq!(tr.x, traj.states[t]);
            assert_eq!(
                tr.next,
                teacher
                    .predict(&traj.states[t], &traj.inputs[t], t)
                    .unwrap()
            );
        }
    }

    #[test]
    fn targets_are_affine_in_the_perturbation() {
        let sys = linear_system();
        let traj = linear_rollout(&sys, 25);
        let teacher = fit_ltv(&traj, &LtvFitConfig::default()).unwrap();
        let cfg = PerturbationConfig::default();
        let perts = sample_perturbations(&traj, &cfg, 3).unwrap();
        let aug = apply_perturbations(&traj, &teacher, &perts).unwrap();
        for (p, tr) in perts.iter().zip(&aug) {
            let base = teacher
                .predict(&traj.states[p.t], &traj.inputs[p.t], p.t)
                .unwrap();
            let shift = teacher.predict(&p.eps_x, &p.eps_u, p.t).unwrap();
            for i in 0..3 {
                let lhs = tr.next[i] - base[i];
                assert!((lhs - shift[i]).abs() < 1e-12 * (1.0 + base[i].abs()));
            }
        }
    }

    #[test]
    fn exact_teacher_targets_follow_true_system() {
        let sys = linear_system();
        let traj = linear_rollout(&sys, 40);
        let teacher = exact_teacher(&sys, &traj);
        let cfg = PerturbationConfig {
            num_perturbed: 2,
            ..Default::default()
        };
        for tr in perturb_trajectory(&traj, &teacher, &cfg).unwrap() {
            let truth = sys.step(&tr.x, &tr.u).unwrap();
            for (a, b) in tr.next.iter().zip(&truth) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perturbation_spread_tracks_data_spread() {
        let sys = linear_system();
        let traj = linear_rollout(&sys, 400);
        let cfg = PerturbationConfig {
            num_perturbed: 5,
            ..Default::default()
        };
        let perts = sample_perturbations(&traj, &cfg, 1).unwrap();
        let (var_x, _) = dimension_variances(&traj);
        let eps: Vec<Vec<f64>> = perts.iter().map(|p| p.eps_x.clone()).collect();
        let mean_sq: Vec<f64> = (0..3)
            .map(|j| eps.iter().map(|e| e[j] * e[j]).sum::<f64>() / eps.len() as f64)
            .collect();
        for (ms, v) in mean_sq.iter().zip(&var_x) {
            let ratio = ms / (0.01 * v);
            assert!((0.85..1.15).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn mismatched_teacher_rejected() {
        let sys = linear_system();
        let traj = linear_rollout(&sys, 20);
        let short = linear_rollout(&sys, 10);
        let teacher = exact_teacher(&sys, &short);
        assert!(perturb_trajectory(&traj, &teacher, &PerturbationConfig::default()).is_err());
    }

    #[test]
    fn invalid_scale_rejected() {
        let cfg = PerturbationConfig {
            scale: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn small_loop_cfg(episodes: usize) -> EpisodeConfig {
        EpisodeConfig {
            episodes,
            horizon: 30,
            train: TrainConfig {
                epochs: 3,
                ..Default::default()
            },
            seed: 5,
            ..Default::default()
        }
    }

    fn small_ensemble() -> Ensemble {
        Ensemble::nominal(3, 2, &[5], ObjectiveForm::G, 2, 0.0, 1).unwrap()
    }

    #[test]
    fn zero_episodes_leave_ensemble_unchanged() {
        let ens = small_ensemble();
        let out = episode_loop(&linear_system(), ens.clone(), &small_loop_cfg(0)).unwrap();
        assert_eq!(out.ensemble, ens);
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn dataset_grows_by_augmented_rollout_each_episode() {
        let out = episode_loop(&linear_system(), small_ensemble(), &small_loop_cfg(3)).unwrap();
        let sizes: Vec<usize> = out
            .metrics
            .iter()
            .map(EpisodeMetrics::dataset_size)
            .collect();
        assert_eq!(sizes, vec![58, 116, 174]);
        let mut hooks = 0;
        let cfg = EpisodeConfig {
            tangent: false,
            ..small_loop_cfg(2)
        };
        let out = episode_loop_with_hook(&linear_system(), small_ensemble(), &cfg, |_, _, _| {
            hooks += 1
        })
        .unwrap();
        assert_eq!(hooks, 2);
        assert_eq!(out.metrics[1].dataset_size(), 58);
    }

    #[test]
    fn loop_is_deterministic() {
        let cfg = small_loop_cfg(2);
        let a = episode_loop(&linear_system(), small_ensemble(), &cfg).unwrap();
        let b = episode_loop(&linear_system(), small_ensemble(), &cfg).unwrap();
        assert_eq!(a.ensemble, b.ensemble);
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn resampling_changes_training_but_not_counts() {
        let fixed = small_loop_cfg(2);
        let resampled = EpisodeConfig {
            perturbation: PerturbationConfig {
                resample_each_epoch: true,
                ..Default::default()
            },
            ..fixed.clone()
        };
        let a = episode_loop(&linear_system(), small_ensemble(), &fixed).unwrap();
        let b = episode_loop(&linear_system(), small_ensemble(), &resampled).unwrap();
        assert_eq!(a.metrics[1].dataset_size(), b.metrics[1].dataset_size());
        assert_ne!(a.ensemble, b.ensemble);
    }

    #[test]
    fn pruning_keeps_only_latest_augmentation() {
        let cfg = EpisodeConfig {
            keep_augmented: false,
            ..small_loop_cfg(3)
        };
        let out = episode_loop(&linear_system(), small_ensemble(), &cfg).unwrap();
        let aug: Vec<usize> = out.metrics.iter().map(|m| m.augmented).collect();
        assert_eq!(aug, vec![29, 29, 29]);
    }
}
