//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use jacprop::benchmarks::Transition;
use jacprop::linalg::Matrix;
use jacprop::neural::{Activation, DropoutMask, Mlp, ObjectiveForm, Standardization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixed relative error with a small floor so near-zero entries do not dominate.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn objective_forms(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<ObjectiveForm> {
    vec![
        ObjectiveForm::F,
        ObjectiveForm::G,
        ObjectiveForm::Generalized {
            a0: Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)),
            b0: Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)),
        },
        ObjectiveForm::TauShift {
            tau: (0..n).map(|_| rng.random_range(0.5..1.0)).collect(),
        },
    ]
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

/// A small random network with random biases (so every parameter matters).
pub fn random_model(
    n: usize,
    m: usize,
    hidden: &[usize],
    act: Activation,
    form: ObjectiveForm,
    rng: &mut ChaCha8Rng,
) -> Mlp {
    let mut model = Mlp::new(n, m, hidden, act, form, rng.random()).unwrap();
    for p in model.params_mut() {
        *p += rng.random_range(-0.5..0.5);
    }
    model
}

pub fn random_batch(n: usize, m: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    (0..count)
        .map(|_| Transition {
            x: random_vec(rng, n, 2.0),
            u: random_vec(rng, m, 2.0),
            next: random_vec(rng, n, 2.0),
        })
        .collect()
}

/// Central differences of the loss with respect to every parameter.
pub fn fd_gradient(
    model: &Mlp,
    batch: &[Transition],
    weight_decay: f64,
    masks: Option<&[DropoutMask]>,
    h: f64,
) -> Vec<f64> {
    let mut probe = model.clone();
    (0..model.num_params())
        .map(|i| {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + h;
            let plus = probe.loss_and_grad(batch, weight_decay, masks).unwrap().0;
            probe.params_mut()[i] = orig - h;
            let minus = probe.loss_and_grad(batch, weight_decay, masks).unwrap().0;
            probe.params_mut()[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Central differences of `predict` with respect to `(x, u)`.
pub fn fd_jacobian(model: &Mlp, x: &[f64], u: &[f64], h: f64) -> Matrix {
    let n = x.len();
    let mut xu: Vec<f64> = x.iter().chain(u).copied().collect();
    let mut jac = Matrix::zeros(n, xu.len());
    for j in 0..xu.len() {
        let orig = xu[j];
        xu[j] = orig + h;
        let plus = model.predict(&xu[..n], &xu[n..]).unwrap();
        xu[j] = orig - h;
        let minus = model.predict(&xu[..n], &xu[n..]).unwrap();
        xu[j] = orig;
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// Worst-case gradient and Jacobian error over `instances` random networks for
/// one activation and objective form.
pub fn check_derivatives(
    act: Activation,
    form_index: usize,
    instances: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (3, 2);
    let mut worst_grad: f64 = 0.0;
    let mut worst_jac: f64 = 0.0;
    for k in 0..instances {
        let form = objective_forms(n, m, &mut rng).swap_remove(form_index);
        let mut model = random_model(n, m, &[3], act, form, &mut rng);
        let batch = random_batch(n, m, 4, &mut rng);
        if k % 4 == 1 {
            model
                .set_standardization(Some(Standardization::fit(&batch)))
                .unwrap();
        }
        let eta = if k % 2 == 0 {
            0.0
        } else {
            rng.random_range(0.01..0.5)
        };
        let masks = if k % 3 == 2 {
            let dropped = model.clone().with_dropout(0.3).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(k as u64);
            Some(dropped.sample_masks(batch.len(), &mut r))
        } else {
            None
        };
        let (_, grad) = model.loss_and_grad(&batch, eta, masks.as_deref()).unwrap();
        let fd = fd_gradient(&model, &batch, eta, masks.as_deref(), 1e-6);
        for (a, b) in grad.iter().zip(&fd) {
            worst_grad = worst_grad.max(rel_err(*a, *b));
        }
        let x = random_vec(&mut rng, n, 2.0);
        let u = random_vec(&mut rng, m, 2.0);
        let jac = model.model_jacobian(&x, &u).unwrap();
        let fdj = fd_jacobian(&model, &x, &u, 1e-6);
        for (a, b) in jac.matrix().as_slice().iter().zip(fdj.as_slice()) {
            worst_jac = worst_jac.max(rel_err(*a, *b));
        }
    }
    (worst_grad, worst_jac)
}
