//! Backpropagation, Adam, mini-batch training and finite-difference checking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{
    activate, activation_backward, conv_backward, conv_forward, upsample2x, upsample2x_backward, Tensor,
};
use super::{AeConfig, AeError, AeModel, Architecture, LayerSpec};
use crate::rng::SeededRng;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Per-epoch mean reconstruction MSE.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epoch_mse: Vec<f64>,
}

enum Saved {
    Conv { input: Tensor, pre: Tensor, out: Tensor },
    Upsample,
}

/// Reconstruction MSE of one sample and its gradient w.r.t. the flat parameters.
pub(crate) fn sample_gradient(model: &AeModel, input: &[f64]) -> Result<(f64, Vec<f64>), AeError> {
    let mut x = model.check_input(input)?;
    let mut saved = Vec::new();
    let mut param_idx = 0;
    for layer in model.architecture.layers() {
        match *layer {
            LayerSpec::Conv { out_channels, stride, activation, .. } => {
                let p = &model.params[param_idx];
                param_idx += 1;
                let pre = conv_forward(&x, &p.weights, &p.bias, out_channels, stride);
                let out = activate(&pre, activation);
                let next = out.clone();
                saved.push(Saved::Conv { input: x, pre, out });
                x = next;
            }
            LayerSpec::Upsample2x => {
                x = upsample2x(&x);
                saved.push(Saved::Upsample);
            }
        }
    }

    let n = input.len() as f64;
    let mse = x.data.iter().zip(input).map(|(r, t)| (r - t) * (r - t)).sum::<f64>() / n;
    let mut grad = Tensor { data: x.data.iter().zip(input).map(|(r, t)| 2.0 * (r - t) / n).collect(), ..x };

    let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
        model.params.iter().map(|p| (vec![0.0; p.weights.len()], vec![0.0; p.bias.len()])).collect();
    let layers: Vec<&LayerSpec> = model.architecture.layers().collect();
    for (layer, s) in layers.iter().zip(saved.iter()).rev() {
        match (layer, s) {
            (LayerSpec::Conv { stride, activation, .. }, Saved::Conv { input, pre, out }) => {
                param_idx -= 1;
                let grad_pre = activation_backward(pre, out, &grad, *activation);
                let (gw, gb) = &mut grads[param_idx];
                grad = conv_backward(input, &model.params[param_idx].weights, &grad_pre, *stride, gw, gb);
            }
            (LayerSpec::Upsample2x, Saved::Upsample) => grad = upsample2x_backward(&grad),
            _ => unreachable!("saved activations follow the layer list"),
        }
    }
    let flat = grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect();
    Ok((mse, flat))
}

/// Mean MSE and mean gradient over a batch. Per-sample work runs in parallel;
/// the reduction is sequential in input order so results are reproducible.
fn batch_gradient(model: &AeModel, batch: &[&[f64]]) -> Result<(f64, Vec<f64>), AeError> {
    let parts: Vec<(f64, Vec<f64>)> = batch.par_iter().map(|x| sample_gradient(model, x)).collect::<Result<_, _>>()?;
    let mut total = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.iter_mut().zip(g).for_each(|(t, v)| *t += v);
    }
    let b = batch.len() as f64;
    total.iter_mut().for_each(|t| *t /= b);
    Ok((loss / b, total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update (β1 = 0.9, β2 = 0.999, ε = 1e-8).
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) {
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grad[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Mini-batch Adam on mean-squared reconstruction error.
///
/// Each epoch shuffles the sample order with a stream derived from
/// `config.seed`; the trace records the mean per-sample MSE seen during the
/// epoch. Identical `(model, dataset, config)` give bit-identical results.
pub fn ae_train(model: &AeModel, dataset: &[Vec<f64>], config: &AeConfig) -> Result<(AeModel, TrainingTrace), AeError> {
    if dataset.is_empty() {
        return Err(AeError::EmptyDataset);
    }
    assert!(config.learning_rate > 0.0 && config.batch_size > 0);
    let mut model = model.clone();
    let mut params = model.flat_params();
    let mut adam = AdamState::new(params.len());
    let mut rng = SeededRng::fork(config.seed, 0x005e_edae);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = TrainingTrace::default();

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| dataset[i].as_slice()).collect();
            let (loss, grad) = batch_gradient(&model, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(AeError::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam_step(&mut params, &grad, &mut adam, config.learning_rate);
            model.set_flat_params(&params);
        }
        trace.epoch_mse.push(epoch_loss / dataset.len() as f64);
    }
    Ok((model, trace))
}

/// Max over parameters of `|g_a − g_n| / max(1, |g_a|, |g_n|)` where `g_n` is
/// the central difference of the batch MSE with step `h`.
pub fn gradient_check(model: &AeModel, inputs: &[Vec<f64>], h: f64) -> f64 {
    let batch: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
    let (_, analytic) = batch_gradient(model, &batch).expect("inputs match model");
    let base = model.flat_params();
    let loss_at = |params: &[f64]| {
        let mut m = model.clone();
        m.set_flat_params(params);
        batch_gradient(&m, &batch).unwrap().0
    };
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            let up = loss_at(&p);
            p[i] = base[i] - h;
            let down = loss_at(&p);
            let numeric = (up - down) / (2.0 * h);
            (analytic[i] - numeric).abs() / 1f64.max(analytic[i].abs()).max(numeric.abs())
        })
        .fold(0.0, f64::max)
}

/// Gradient check on the tiny 2×4×4 network with random inputs, `h = 1e-5`.
pub fn ae_gradient_check(seed: u64) -> f64 {
    let model = AeModel::init(Architecture::tiny(), seed);
    let mut rng = SeededRng::fork(seed, 1);
    let inputs: Vec<Vec<f64>> =
        (0..3).map(|_| (0..model.architecture.input_len()).map(|_| rng.uniform()).collect()).collect();
    gradient_check(&model, &inputs, 1e-5)
}
