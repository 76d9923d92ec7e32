//! Prediction, simulation and Jacobian error metrics, eigenvalue spectrum
//! reports and the Monte-Carlo harness.

mod monte_carlo;
mod spectrum;

pub use monte_carlo::{
    median, monte_carlo, quantile, ArmInfo, ArmSummary, MetricRecord, MonteCarloResult, RunMetrics,
    Stats,
};
pub use spectrum::{spectrum_report, EigenSource, SpectrumEntry, SpectrumReport};

use crate::benchmarks::{JacobianMatrix, System, Trajectory};
use crate::error::{Error, Result};
use crate::neural::{Ensemble, Mlp};

/// Default divergence threshold relative to the largest recorded state norm.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// A one-step dynamics map with an input-output Jacobian.
pub trait DynamicsModel {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn predict(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64], u: &[f64]) -> Result<JacobianMatrix>;
}

impl DynamicsModel for Mlp {
    fn state_dim(&self) -> usize {
        Mlp::state_dim(self)
    }
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }
    fn predict(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Mlp::predict(self, x, u)
    }
    fn jacobian(&self, x: &[f64], u: &[f64]) -> Result<JacobianMatrix> {
        self.model_jacobian(x, u)
    }
}

impl DynamicsModel for Ensemble {
    fn state_dim(&self) -> usize {
        Ensemble::state_dim(self)
    }
    fn input_dim(&self) -> usize {
        Ensemble::input_dim(self)
    }
    fn predict(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ensemble::predict(self, x, u)
    }
    fn jacobian(&self, x: &[f64], u: &[f64]) -> Result<JacobianMatrix> {
        Ensemble::jacobian(self, x, u)
    }
}

impl DynamicsModel for System {
    fn state_dim(&self) -> usize {
        System::state_dim(self)
    }
    fn input_dim(&self) -> usize {
        System::input_dim(self)
    }
    fn predict(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.step(x, u)
    }
    fn jacobian(&self, x: &[f64], u: &[f64]) -> Result<JacobianMatrix> {
        self.true_jacobian(x, u)
    }
}

fn check_dims(model: &impl DynamicsModel, traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    if model.state_dim() != traj.state_dim() || model.input_dim() != traj.input_dim() {
        return Err(Error::Dimension(format!(
            "model is {}x{}, trajectory is {}x{}",
            model.state_dim(),
            model.input_dim(),
            traj.state_dim(),
            traj.input_dim()
        )));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// One-step prediction RMSE over all transitions and state dimensions.
pub fn prediction_error(model: &impl DynamicsModel, traj: &Trajectory) -> Result<f64> {
    check_dims(model, traj)?;
    let mut sum = 0.0;
    for t in 0..traj.num_transitions() {
        let pred = model.predict(&traj.states[t], &traj.inputs[t])?;
        sum += pred
            .iter()
            .zip(&traj.states[t + 1])
            .map(|(p, x)| (x - p).powi(2))
            .sum::<f64>();
    }
    Ok((sum / (traj.num_transitions() * traj.state_dim()) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOutcome {
    pub rmse: f64,
    pub diverged: bool,
    /// Simulated steps included in `rmse`.
    pub steps: usize,
}

/// Free-run simulation from the first recorded state under the recorded
/// inputs. The run stops and is flagged as diverged once the simulated state
/// norm exceeds `cap_factor` times the largest recorded state norm; the RMSE
/// then covers the completed prefix, including the offending step, and is
/// capped at the threshold.
pub fn simulation_error(
    model: &impl DynamicsModel,
    traj: &Trajectory,
    cap_factor: f64,
) -> Result<SimulationOutcome> {
    check_dims(model, traj)?;
    if !(cap_factor > 0.0) {
        return Err(Error::Parameter(format!(
            "divergence factor must be positive, got {cap_factor}"
        )));
    }
    let threshold = cap_factor * traj.states.iter().map(|x| norm(x)).fold(0.0, f64::max);
    let n = traj.state_dim() as f64;
    let mut x = traj.states[0].clone();
    let mut sum = 0.0;
    for t in 0..traj.num_transitions() {
        x = model.predict(&x, &traj.inputs[t])?;
        sum += x
            .iter()
            .zip(&traj.states[t + 1])
            .map(|(p, r)| (r - p).powi(2))
            .sum::<f64>();
        let size = norm(&x);
        if !(size <= threshold) {
            let rmse = (sum / ((t + 1) as f64 * n)).sqrt();
            return Ok(SimulationOutcome {
                rmse: if rmse.is_finite() {
                    rmse.min(threshold)
                } else {
                    threshold
                },
                diverged: true,
                steps: t + 1,
            });
        }
    }
    let steps = traj.num_transitions();
    Ok(SimulationOutcome {
        rmse: (sum / (steps as f64 * n)).sqrt(),
        diverged: false,
        steps,
    })
}

/// `sqrt((1/T) Σ_t ‖J_t − Ĵ_t‖²_F)`.
pub fn jacobian_error_between(
    estimates: &[JacobianMatrix],
    truths: &[JacobianMatrix],
) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(Error::Dimension(format!(
            "{} estimated and {} true Jacobians",
            estimates.len(),
            truths.len()
        )));
    }
    let mut sum = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        let (a, b) = (e.matrix(), t.matrix());
        if a.rows() != b.rows() || a.cols() != b.cols() {
            return Err(Error::Dimension(format!(
                "Jacobian sizes differ: {}x{} vs {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        sum += (a - b).frobenius_norm().powi(2);
    }
    Ok((sum / truths.len() as f64).sqrt())
}

/// Jacobian error of `model` at the transitions of `traj` against `truths`
/// (one per transition).
pub fn jacobian_error(
    model: &impl DynamicsModel,
    traj: &Trajectory,
    truths: &[JacobianMatrix],
) -> Result<f64> {
    check_dims(model, traj)?;
    if truths.len() != traj.num_transitions() {
        return Err(Error::Dimension(format!(
            "{} true Jacobians for {} transitions",
            truths.len(),
            traj.num_transitions()
        )));
    }
    let estimates = (0..truths.len())
        .map(|t| model.jacobian(&traj.states[t], &traj.inputs[t]))
        .collect::<Result<Vec<_>>>()?;
    jacobian_error_between(&estimates, truths)
}

/// True Jacobians of `system` at every transition of `traj`.
pub fn true_jacobians(system: &System, traj: &Trajectory) -> Result<Vec<JacobianMatrix>> {
    (0..traj.num_transitions())
        .map(|t| system.true_jacobian(&traj.states[t], &traj.inputs[t]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{lowpass_random_input, random_linear_system};
    use crate::linalg::Matrix;
    use crate::neural::{Activation, ObjectiveForm};

    fn linear() -> (System, Trajectory) {
        let lin = random_linear_system(3, 1, 0.1, 2).unwrap();
        let sys = System::Linear(lin);
        let u = lowpass_random_input(50, 1, 0.5, 1.0, 1).unwrap();
        let traj = sys.rollout(&[1.0, 0.0, -1.0], &u, 0.0, 0).unwrap();
        (sys, traj)
    }

    fn exact_model(sys: &System) -> Mlp {
        let System::Linear(l) = sys else {
            unreachable!()
        };
        let form = ObjectiveForm::Generalized {
            a0: l.a.clone(),
            b0: l.b.clone(),
        };
        Mlp::zeros(3, 1, &[4], Activation::Tanh, form).unwrap()
    }

    #[test]
    fn exact_model_has_zero_errors() {
        let (sys, traj) = linear();
        let model = exact_model(&sys);
        assert!(prediction_error(&model, &traj).unwrap() < 1e-14);
        let sim = simulation_error(&model, &traj, DIVERGENCE_FACTOR).unwrap();
        assert!(!sim.diverged);
        assert!(sim.rmse < 1e-12);
        let truths = true_jacobians(&sys, &traj).unwrap();
        assert!(jacobian_error(&model, &traj, &truths).unwrap() < 1e-14);
        assert_eq!(prediction_error(&sys, &traj).unwrap(), 0.0);
    }

    #[test]
    fn zero_model_on_zero_trajectory() {
        let traj = Trajectory::new(vec![vec![0.0; 2]; 5], vec![vec![0.0]; 5], 0.1).unwrap();
        let model = Mlp::zeros(2, 1, &[3], Activation::Tanh, ObjectiveForm::F).unwrap();
        assert_eq!(prediction_error(&model, &traj).unwrap(), 0.0);
        let sim = simulation_error(&model, &traj, DIVERGENCE_FACTOR).unwrap();
        assert_eq!(sim.rmse, 0.0);
        assert!(!sim.diverged);
    }

    #[test]
    fn doubling_model_diverges_geometrically() {
        let form = ObjectiveForm::Generalized {
            a0: Matrix::identity(2).scale(2.0),
            b0: Matrix::zeros(2, 1),
        };
        let model = Mlp::zeros(2, 1, &[3], Activation::Tanh, form).unwrap();
        let traj = Trajectory::new(vec![vec![1.0, 1.0]; 40], vec![vec![0.0]; 40], 0.1).unwrap();
        let sim = simulation_error(&model, &traj, DIVERGENCE_FACTOR).unwrap();
        assert!(sim.diverged);
        assert!(sim.steps as f64 <= DIVERGENCE_FACTOR.log2().ceil() + 1.0);
        let threshold = DIVERGENCE_FACTOR * 2f64.sqrt();
        assert!(sim.rmse <= threshold);
    }

    #[test]
    fn single_difference_is_its_frobenius_norm() {
        let t = JacobianMatrix::new(Matrix::zeros(2, 3)).unwrap();
        let e = JacobianMatrix::new(Matrix::from_rows(&[
            vec![1.0, 2.0, 2.0],
            vec![0.0, 0.0, 4.0],
        ]))
        .unwrap();
        assert_eq!(jacobian_error_between(&[e], &[t]).unwrap(), 5.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let t = JacobianMatrix::new(Matrix::zeros(2, 3)).unwrap();
        assert!(jacobian_error_between(std::slice::from_ref(&t), &[t.clone(), t.clone()]).is_err());
    }
}
