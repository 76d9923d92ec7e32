//! Feed-forward dynamics approximator with analytic parameter gradients and
//! analytic input-output Jacobians.

use std::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Activation, ObjectiveForm};
use crate::benchmarks::{JacobianMatrix, Transition};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Per-sample dropout masks, one vector per hidden layer with entries `0` or `1/(1-p)`.
pub type DropoutMask = Vec<Vec<f64>>;

/// Affine input map `z = (v − mean) / std` applied to `[x; u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Per-column mean and standard deviation of `[x; u]` over `data`;
    /// constant columns get unit scale.
    pub fn fit(data: &[Transition]) -> Self {
        let d = data[0].x.len() + data[0].u.len();
        let count = data.len() as f64;
        let mut mean = vec![0.0; d];
        for tr in data {
            for (m, v) in mean.iter_mut().zip(tr.x.iter().chain(&tr.u)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; d];
        for tr in data {
            for ((s, v), m) in var.iter_mut().zip(tr.x.iter().chain(&tr.u)).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64], u: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .chain(u)
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    state_dim: usize,
    input_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    objective: ObjectiveForm,
    dropout: f64,
    standardization: Option<Standardization>,
    /// Layer by layer: row-major weights (`out × in`) followed by biases.
    params: Vec<f64>,
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    z: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    out: Vec<f64>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Mlp {
    /// Network with Glorot-uniform weights and zero biases.
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        hidden: &[usize],
        activation: Activation,
        objective: ObjectiveForm,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(state_dim, input_dim, hidden, activation, objective)?;
        let mut r = rng::seeded(seed);
        let mut offset = 0;
        for (fan_in, fan_out) in model.layer_dims() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut model.params[offset..offset + fan_in * fan_out] {
                *w = r.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(model)
    }

    /// Network with every parameter zero.
    pub fn zeros(
        state_dim: usize,
        input_dim: usize,
        hidden: &[usize],
        activation: Activation,
        objective: ObjectiveForm,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Dimension("state dimension must be >= 1".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::Dimension("hidden layers must have >= 1 unit".into()));
        }
        objective.validate(state_dim, input_dim)?;
        let mut model = Self {
            state_dim,
            input_dim,
            hidden: hidden.to_vec(),
            activation,
            objective,
            dropout: 0.0,
            standardization: None,
            params: Vec::new(),
        };
        let count = model.layer_dims().iter().map(|(i, o)| i * o + o).sum();
        model.params = vec![0.0; count];
        Ok(model)
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        self.dropout = rate;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn objective(&self) -> &ObjectiveForm {
        &self.objective
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn set_standardization(&mut self, s: Option<Standardization>) -> Result<()> {
        if let Some(s) = &s {
            let d = self.state_dim + self.input_dim;
            if s.mean.len() != d || s.std.len() != d {
                return Err(Error::Dimension(format!(
                    "standardization needs {d} entries"
                )));
            }
            if s.std.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Parameter(
                    "standardization scales must be positive".into(),
                ));
            }
        }
        self.standardization = s;
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![self.state_dim + self.input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.state_dim);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Index ranges of weight matrices (biases excluded).
    pub fn weight_ranges(&self) -> Vec<Range<usize>> {
        let mut offset = 0;
        self.layer_dims()
            .into_iter()
            .map(|(i, o)| {
                let r = offset..offset + i * o;
                offset += i * o + o;
                r
            })
            .collect()
    }

    /// Checks parameter count and dimensions after deserialization.
    pub fn validate(&self) -> Result<()> {
        let expected: usize = self.layer_dims().iter().map(|(i, o)| i * o + o).sum();
        if self.params.len() != expected {
            return Err(Error::Dimension(format!(
                "model needs {expected} parameters, found {}",
                self.params.len()
            )));
        }
        self.objective.validate(self.state_dim, self.input_dim)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter("dropout rate out of range".into()));
        }
        self.clone()
            .set_standardization(self.standardization.clone())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    fn standardize(&self, x: &[f64], u: &[f64], out: &mut Vec<f64>) {
        match &self.standardization {
            Some(s) => s.apply(x, u, out),
            None => {
                out.clear();
                out.extend(x.iter().chain(u));
            }
        }
    }

    fn input_scale(&self) -> Vec<f64> {
        match &self.standardization {
            Some(s) => s.std.iter().map(|v| 1.0 / v).collect(),
            None => vec![1.0; self.state_dim + self.input_dim],
        }
    }

    /// Forward pass on standardized input `ws.z`; fills `ws.pre`, `ws.post`, `ws.out`.
    pub(crate) fn forward_ws(&self, ws: &mut Workspace, mask: Option<&DropoutMask>) {
        let dims = self.layer_dims();
        let hidden_layers = self.hidden.len();
        ws.pre.resize_with(hidden_layers, Vec::new);
        ws.post.resize_with(hidden_layers, Vec::new);
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let input: &[f64] = if l == 0 { &ws.z } else { &ws.post[l - 1] };
            let mut out = Vec::with_capacity(fan_out);
            for (row, bias) in w.chunks_exact(fan_in).zip(b) {
                out.push(bias + row.iter().zip(input).map(|(a, v)| a * v).sum::<f64>());
            }
            if l < hidden_layers {
                let mut act: Vec<f64> = out.iter().map(|&p| self.activation.value(p)).collect();
                if let Some(mask) = mask {
                    act.iter_mut().zip(&mask[l]).for_each(|(a, m)| *a *= m);
                }
                ws.pre[l] = out;
                ws.post[l] = act;
            } else {
                ws.out = out;
            }
        }
    }

    /// Accumulates the parameter gradient of `½‖out − target‖²` into `grad`
    /// after a [`Mlp::forward_ws`] call; returns the sample loss.
    pub(crate) fn backward_ws(
        &self,
        ws: &mut Workspace,
        target: &[f64],
        mask: Option<&DropoutMask>,
        grad: &mut [f64],
    ) -> f64 {
        let dims = self.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &(i, o) in &dims {
            offsets.push(offset);
            offset += i * o + o;
        }
        ws.delta.clear();
        ws.delta
            .extend(ws.out.iter().zip(target).map(|(o, t)| o - t));
        let loss = 0.5 * ws.delta.iter().map(|r| r * r).sum::<f64>();

        for l in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[l];
            let off = offsets[l];
            let input: &[f64] = if l == 0 { &ws.z } else { &ws.post[l - 1] };
            {
                let (gw, gb) =
                    grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for (o, &d) in ws.delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, v) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            ws.delta_prev.clear();
            ws.delta_prev.resize(fan_in, 0.0);
            for (o, &d) in ws.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (dp, a) in ws
                    .delta_prev
                    .iter_mut()
                    .zip(&w[o * fan_in..(o + 1) * fan_in])
                {
                    *dp += a * d;
                }
            }
            let pre = &ws.pre[l - 1];
            for (i, dp) in ws.delta_prev.iter_mut().enumerate() {
                *dp *= self.activation.derivative(pre[i]);
                if let Some(mask) = mask {
                    *dp *= mask[l - 1][i];
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
        loss
    }

    /// Raw network output `h(x, u)` before the objective's skip term.
    pub fn net_output(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        let mut ws = Workspace::default();
        self.standardize(x, u, &mut ws.z);
        self.forward_ws(&mut ws, None);
        Ok(ws.out)
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim || u.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "model expects {} states and {} inputs, got {} and {}",
                self.state_dim,
                self.input_dim,
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// One-step prediction `x⁺ = skip(x, u) + h(x, u)`, dropout disabled.
    pub fn predict(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let h = self.net_output(x, u)?;
        let skip = self.objective.skip(x, u);
        Ok(h.iter().zip(&skip).map(|(a, b)| a + b).collect())
    }

    /// Jacobian of the raw network output with respect to `(x, u)`.
    pub fn net_jacobian(&self, x: &[f64], u: &[f64]) -> Result<Matrix> {
        self.check_dims(x, u)?;
        let mut ws = Workspace::default();
        self.standardize(x, u, &mut ws.z);
        self.forward_ws(&mut ws, None);
        let dims = self.layer_dims();
        let scale = self.input_scale();
        let d = scale.len();
        let mut offset = 0;
        // Running product, rows = current layer width, cols = d.
        let mut jac = Matrix::from_diag(&scale);
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w = Matrix::from_row_major(
                fan_out,
                fan_in,
                self.params[offset..offset + fan_in * fan_out].to_vec(),
            )?;
            offset += fan_in * fan_out + fan_out;
            jac = w.matmul(&jac)?;
            if l < self.hidden.len() {
                for (i, &p) in ws.pre[l].iter().enumerate() {
                    let g = self.activation.derivative(p);
                    jac.row_mut(i).iter_mut().for_each(|v| *v *= g);
                }
            }
        }
        debug_assert_eq!(jac.cols(), d);
        Ok(jac)
    }

    /// Analytic Jacobian `[A B]` of the full one-step map, skip term included.
    pub fn model_jacobian(&self, x: &[f64], u: &[f64]) -> Result<JacobianMatrix> {
        let net = self.net_jacobian(x, u)?;
        let skip = self.objective.skip_jacobian(self.state_dim, self.input_dim);
        JacobianMatrix::new(&net + &skip)
    }

    /// Samples dropout masks for `count` samples.
    pub fn sample_masks(&self, count: usize, r: &mut rng::Rng) -> Vec<DropoutMask> {
        let keep = 1.0 - self.dropout;
        (0..count)
            .map(|_| {
                self.hidden
                    .iter()
                    .map(|&h| {
                        (0..h)
                            .map(|_| {
                                if r.random::<f64>() < self.dropout {
                                    0.0
                                } else {
                                    1.0 / keep
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Squared-error loss `½ Σ ‖target − h‖² + (η/2) ‖W‖²` over `batch` and
    /// its exact gradient. Targets follow the objective form; `masks`, when
    /// given, holds one dropout mask per sample.
    pub fn loss_and_grad(
        &self,
        batch: &[Transition],
        weight_decay: f64,
        masks: Option<&[DropoutMask]>,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Dimension("empty batch".into()));
        }
        if let Some(m) = masks {
            if m.len() != batch.len() {
                return Err(Error::Dimension(
                    "one dropout mask per sample required".into(),
                ));
            }
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = Workspace::default();
        let mut loss = 0.0;
        for (k, tr) in batch.iter().enumerate() {
            self.check_dims(&tr.x, &tr.u)?;
            let target = self.objective.target(&tr.x, &tr.u, &tr.next);
            let mask = masks.map(|m| &m[k]);
            self.standardize(&tr.x, &tr.u, &mut ws.z);
            self.forward_ws(&mut ws, mask);
            loss += self.backward_ws(&mut ws, &target, mask, &mut grad);
        }
        loss += self.add_weight_decay(weight_decay, &mut grad);
        Ok((loss, grad))
    }

    /// Adds `η w` to the weight entries of `grad` and returns `(η/2)‖W‖²`.
    pub(crate) fn add_weight_decay(&self, weight_decay: f64, grad: &mut [f64]) -> f64 {
        if weight_decay == 0.0 {
            return 0.0;
        }
        let mut penalty = 0.0;
        for r in self.weight_ranges() {
            for i in r {
                penalty += self.params[i] * self.params[i];
                grad[i] += weight_decay * self.params[i];
            }
        }
        0.5 * weight_decay * penalty
    }

    /// Standardized input and objective target for each transition.
    pub(crate) fn prepare(&self, data: &[Transition]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        data.iter()
            .map(|tr| {
                let mut z = Vec::new();
                self.standardize(&tr.x, &tr.u, &mut z);
                (z, self.objective.target(&tr.x, &tr.u, &tr.next))
            })
            .unzip()
    }

    /// Loss and gradient over `indices` of prepared data, accumulated into `grad`.
    pub(crate) fn loss_and_grad_prepared(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        indices: &[usize],
        masks: Option<&[DropoutMask]>,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) -> f64 {
        let mut loss = 0.0;
        for (k, &i) in indices.iter().enumerate() {
            ws.z.clone_from(&inputs[i]);
            let mask = masks.map(|m| &m[k]);
            self.forward_ws(ws, mask);
            loss += self.backward_ws(ws, &targets[i], mask, grad);
        }
        loss
    }
}

/// Free function form of [`Mlp::predict`].
pub fn predict(model: &Mlp, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    model.predict(x, u)
}

/// Free function form of [`Mlp::model_jacobian`].
pub fn model_jacobian(model: &Mlp, x: &[f64], u: &[f64]) -> Result<JacobianMatrix> {
    model.model_jacobian(x, u)
}
