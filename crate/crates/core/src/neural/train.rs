use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, Standardization, Workspace};
use crate::benchmarks::Transition;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty `η` on weight matrices; biases are not decayed.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Fit input standardization on the first call if the model has none.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            batch_size: 16,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::Parameter(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Parameter("ADAM betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter("ADAM epsilon must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Parameter("weight decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for ADAM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }
}

/// One bias-corrected ADAM update of `params` in place.
pub fn adam_step(
    params: &mut [f64],
    state: &mut AdamState,
    grad: &[f64],
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != grad.len() {
        return Err(Error::Dimension(format!(
            "ADAM state has {} entries, gradient {}, parameters {}",
            state.m.len(),
            grad.len(),
            params.len()
        )));
    }
    state.step += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.step);
    let c2 = 1.0 - cfg.beta2.powi(state.step);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.step_size * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Trains `model` in place; see [`train_with_callback`].
pub fn train(model: &mut Mlp, data: &[Transition], cfg: &TrainConfig) -> Result<Vec<f64>> {
    train_with_callback(model, data, cfg, |_, _| {})
}

/// Runs `cfg.epochs` passes of shuffled minibatch ADAM over `data` and returns
/// the mean per-sample training loss of each epoch. `on_epoch` is called
/// after every epoch with the number of completed epochs.
pub fn train_with_callback(
    model: &mut Mlp,
    data: &[Transition],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(usize, &Mlp),
) -> Result<Vec<f64>> {
    train_core(model, data, cfg, None, on_epoch)
}

/// Like [`train`], but each epoch trains on `base` followed by
/// `extra(epoch)`, so part of the data can be regenerated every epoch.
pub fn train_resampled(
    model: &mut Mlp,
    base: &[Transition],
    cfg: &TrainConfig,
    mut extra: impl FnMut(usize) -> Result<Vec<Transition>>,
) -> Result<Vec<f64>> {
    train_core(model, base, cfg, Some(&mut extra), |_, _| {})
}

type Resampler<'a> = &'a mut dyn FnMut(usize) -> Result<Vec<Transition>>;

fn epoch_data(
    base: &[Transition],
    extra: &mut Option<Resampler>,
    epoch: usize,
) -> Result<Vec<Transition>> {
    let mut data = base.to_vec();
    if let Some(f) = extra {
        data.extend(f(epoch)?);
    }
    Ok(data)
}

fn train_core(
    model: &mut Mlp,
    base: &[Transition],
    cfg: &TrainConfig,
    mut extra: Option<Resampler>,
    mut on_epoch: impl FnMut(usize, &Mlp),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        if base.is_empty() && extra.is_none() {
            return Err(Error::Dimension("training set is empty".into()));
        }
        return Ok(Vec::new());
    }
    let mut data = epoch_data(base, &mut extra, 0)?;
    if data.is_empty() {
        return Err(Error::Dimension("training set is empty".into()));
    }
    if cfg.standardize && model.standardization().is_none() {
        model.set_standardization(Some(Standardization::fit(&data)))?;
    }
    let (mut inputs, mut targets) = model.prepare(&data);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(cfg.seed, 0));
    let mut dropout_rng = rng::seeded(rng::derive_seed(cfg.seed, 1));
    let mut adam = AdamState::new(model.num_params());
    let mut grad = vec![0.0; model.num_params()];
    let mut ws = Workspace::default();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if epoch > 0 && extra.is_some() {
            data = epoch_data(base, &mut extra, epoch)?;
            (inputs, targets) = model.prepare(&data);
            if order.len() != data.len() {
                order = (0..data.len()).collect();
            }
        }
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let masks =
                (model.dropout() > 0.0).then(|| model.sample_masks(batch.len(), &mut dropout_rng));
            total += model.loss_and_grad_prepared(
                &inputs,
                &targets,
                batch,
                masks.as_deref(),
                &mut ws,
                &mut grad,
            );
            model.add_weight_decay(cfg.weight_decay, &mut grad);
            adam_step(model.params_mut(), &mut adam, &grad, cfg)?;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        curve.push(mean);
        on_epoch(epoch + 1, model);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{lowpass_random_input, random_linear_system, System};
    use crate::neural::{Activation, ObjectiveForm};

    #[test]
    fn first_step_moves_each_parameter_by_step_size() {
        let cfg = TrainConfig::default();
        let mut params = vec![1.0, -2.0, 0.5];
        let grad = vec![3.0, -0.2, 50.0];
        let mut state = AdamState::new(3);
        adam_step(&mut params, &mut state, &grad, &cfg).unwrap();
        // m̂ = g and v̂ = g² after bias correction, so the step is α·g/(|g| + ε).
        let expect = [1.0 - 1e-3, -2.0 + 1e-3, 0.5 - 1e-3];
        for (p, e) in params.iter().zip(expect) {
            assert!((p - e).abs() < 1e-6 * 1e-3 + 1e-12, "{p} vs {e}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = TrainConfig::default();
        let mut params = vec![1.0, 2.0];
        let mut state = AdamState::new(2);
        adam_step(&mut params, &mut state, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(params, vec![1.0, 2.0]);
    }

    #[test]
    fn adam_is_deterministic() {
        let cfg = TrainConfig::default();
        let run = || {
            let mut p = vec![0.3, -0.1];
            let mut s = AdamState::new(2);
            for k in 0..5 {
                adam_step(&mut p, &mut s, &[0.1 * k as f64, -1.0], &cfg).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut [0.0; 3], &mut s, &[0.0; 3], &cfg).is_err());
    }

    fn linear_data(n: usize, len: usize) -> Vec<Transition> {
        let sys = System::Linear(random_linear_system(n, 1, 0.1, 3).unwrap());
        let u = lowpass_random_input(len, 1, 0.5, 1.0, 4).unwrap();
        sys.rollout(&vec![0.0; n], &u, 0.0, 0)
            .unwrap()
            .transitions()
            .collect()
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let data = linear_data(2, 20);
        let mut m = Mlp::new(2, 1, &[4], Activation::Tanh, ObjectiveForm::G, 0).unwrap();
        let before = m.clone();
        let curve = train(
            &mut m,
            &data,
            &TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(curve.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = linear_data(2, 100);
        let cfg = TrainConfig {
            epochs: 30,
            seed: 5,
            ..Default::default()
        };
        let mut a = Mlp::new(2, 1, &[8], Activation::Elu, ObjectiveForm::G, 1)
            .unwrap()
            .with_dropout(0.1)
            .unwrap();
        let mut b = a.clone();
        let ca = train(&mut a, &data, &cfg).unwrap();
        let cb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
        assert!(ca.last().unwrap() < &ca[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let data = linear_data(2, 20);
        let mut m = Mlp::new(2, 1, &[4], Activation::Elu, ObjectiveForm::F, 0).unwrap();
        m.params_mut()[0] = f64::NAN;
        let err = train(
            &mut m,
            &data,
            &TrainConfig {
                epochs: 3,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { epoch: 0 }));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut m = Mlp::new(2, 1, &[4], Activation::Elu, ObjectiveForm::F, 0).unwrap();
        assert!(train(&mut m, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn resampler_with_fixed_extra_matches_plain_training() {
        let data = linear_data(2, 40);
        let (head, tail) = data.split_at(25);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 2,
            ..Default::default()
        };
        let init = Mlp::new(2, 1, &[4], Activation::Tanh, ObjectiveForm::G, 9).unwrap();
        let mut a = init.clone();
        let mut b = init;
        let ca = train(&mut a, &data, &cfg).unwrap();
        let mut calls = Vec::new();
        let cb = train_resampled(&mut b, head, &cfg, |e| {
            calls.push(e);
            Ok(tail.to_vec())
        })
        .unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
        assert_eq!(calls, vec![0, 1, 2, 3, 4]);
    }
}
