use serde::{Deserialize, Serialize};

use super::{train, train_resampled, Activation, Mlp, ObjectiveForm, TrainConfig};
use crate::benchmarks::{JacobianMatrix, Transition};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Networks trained on the same data whose predictions and Jacobians are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    members: Vec<Mlp>,
}

impl Ensemble {
    pub fn new(members: Vec<Mlp>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        for m in &members[1..] {
            if m.state_dim() != first.state_dim()
                || m.input_dim() != first.input_dim()
                || m.objective() != first.objective()
            {
                return Err(Error::Dimension(
                    "ensemble members must share dimensions and objective form".into(),
                ));
            }
        }
        Ok(Self { members })
    }

    /// `size` networks cycling through elu, sigmoid, tanh and swish, each with
    /// its own initialization seed.
    pub fn nominal(
        state_dim: usize,
        input_dim: usize,
        hidden: &[usize],
        objective: ObjectiveForm,
        size: usize,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::with_activations(
            state_dim,
            input_dim,
            hidden,
            objective,
            &Activation::ENSEMBLE,
            size,
            dropout,
            seed,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_activations(
        state_dim: usize,
        input_dim: usize,
        hidden: &[usize],
        objective: ObjectiveForm,
        activations: &[Activation],
        size: usize,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if activations.is_empty() {
            return Err(Error::Parameter("no activations given".into()));
        }
        let members = (0..size)
            .map(|i| {
                Mlp::new(
                    state_dim,
                    input_dim,
                    hidden,
                    activations[i % activations.len()],
                    objective.clone(),
                    rng::derive_seed(seed, i as u64),
                )?
                .with_dropout(dropout)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Mlp] {
        &mut self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.members[0].state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    /// Mean member prediction, summed in member order.
    pub fn predict(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut sum = vec![0.0; self.state_dim()];
        for m in &self.members {
            for (s, p) in sum.iter_mut().zip(m.predict(x, u)?) {
                *s += p;
            }
        }
        let k = self.members.len() as f64;
        Ok(sum.into_iter().map(|s| s / k).collect())
    }

    /// Mean member Jacobian, summed in member order.
    pub fn jacobian(&self, x: &[f64], u: &[f64]) -> Result<JacobianMatrix> {
        let n = self.state_dim();
        let mut sum = Matrix::zeros(n, n + self.input_dim());
        for m in &self.members {
            sum = &sum + m.model_jacobian(x, u)?.matrix();
        }
        JacobianMatrix::new(sum.scale(1.0 / self.members.len() as f64))
    }

    /// Trains every member on `data`; member `i` uses seed `derive_seed(cfg.seed, i)`.
    pub fn train(&mut self, data: &[Transition], cfg: &TrainConfig) -> Result<Vec<Vec<f64>>> {
        self.members
            .iter_mut()
            .enumerate()
            .map(|(i, m)| {
                let member_cfg = TrainConfig {
                    seed: rng::derive_seed(cfg.seed, i as u64),
                    ..cfg.clone()
                };
                train(m, data, &member_cfg)
            })
            .collect()
    }

    /// Like [`Ensemble::train`], with `extra(member, epoch)` appended to
    /// `base` every epoch.
    pub fn train_resampled(
        &mut self,
        base: &[Transition],
        cfg: &TrainConfig,
        mut extra: impl FnMut(usize, usize) -> Result<Vec<Transition>>,
    ) -> Result<Vec<Vec<f64>>> {
        self.members
            .iter_mut()
            .enumerate()
            .map(|(i, m)| {
                let member_cfg = TrainConfig {
                    seed: rng::derive_seed(cfg.seed, i as u64),
                    ..cfg.clone()
                };
                train_resampled(m, base, &member_cfg, |epoch| extra(i, epoch))
            })
            .collect()
    }
}

pub fn ensemble_predict(ens: &Ensemble, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    ens.predict(x, u)
}

pub fn ensemble_jacobian(ens: &Ensemble, x: &[f64], u: &[f64]) -> Result<JacobianMatrix> {
    ens.jacobian(x, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ensemble_is_an_error() {
        assert!(matches!(Ensemble::new(vec![]), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn identical_members_average_to_member() {
        let m = Mlp::new(2, 1, &[5], Activation::Tanh, ObjectiveForm::G, 3).unwrap();
        let ens = Ensemble::new(vec![m.clone(); 3]).unwrap();
        let (x, u) = ([0.2, -0.4], [1.0]);
        let p = ens.predict(&x, &u).unwrap();
        let q = m.predict(&x, &u).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
        let ja = ens.jacobian(&x, &u).unwrap();
        let jb = m.model_jacobian(&x, &u).unwrap();
        assert!((ja.matrix() - jb.matrix()).max_abs() < 1e-15);
    }

    #[test]
    fn opposite_jacobians_cancel() {
        let mut a = Mlp::zeros(2, 1, &[], Activation::Tanh, ObjectiveForm::F).unwrap();
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        a.params_mut()[..6].copy_from_slice(&w);
        let mut b = a.clone();
        for p in b.params_mut() {
            *p = -*p;
        }
        let ens = Ensemble::new(vec![a, b]).unwrap();
        let j = ens.jacobian(&[1.0, 1.0], &[1.0]).unwrap();
        assert_eq!(j.matrix(), &Matrix::zeros(2, 3));
    }

    #[test]
    fn four_member_mean_is_sequential_sum_over_four() {
        let ens = Ensemble::nominal(3, 2, &[6], ObjectiveForm::G, 4, 0.0, 11).unwrap();
        let acts: Vec<_> = ens.members().iter().map(Mlp::activation).collect();
        assert_eq!(acts, Activation::ENSEMBLE.to_vec());
        let (x, u) = ([0.1, 0.2, 0.3], [-1.0, 0.5]);
        let js: Vec<Matrix> = ens
            .members()
            .iter()
            .map(|m| m.model_jacobian(&x, &u).unwrap().into_matrix())
            .collect();
        let brute = (&(&(&js[0] + &js[1]) + &js[2]) + &js[3]).scale(0.25);
        assert_eq!(ens.jacobian(&x, &u).unwrap().matrix(), &brute);
    }

    #[test]
    fn mixed_objectives_rejected() {
        let a = Mlp::zeros(2, 1, &[2], Activation::Tanh, ObjectiveForm::F).unwrap();
        let b = Mlp::zeros(2, 1, &[2], Activation::Tanh, ObjectiveForm::G).unwrap();
        assert!(Ensemble::new(vec![a, b]).is_err());
    }
}
