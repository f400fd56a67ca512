//! Gradient training of the binarized surrogate.
//!
//! Standard recipe: latent real weights clipped to [-1, 1], sign
//! binarization in the forward pass, straight-through estimator for the
//! sign gradients (pass-through gated by |pre-activation| <= 1 for
//! activations and |latent| <= 1 for weights), per-block batch norm with
//! batch statistics during training and tracked running statistics for
//! inference, mean absolute error loss, Adam updates.

use super::{sign_i8, BnnModel, LabeledSample, TrainBlock, BN_EPS};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct BnnConfig {
    pub blocks: usize,
    pub width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for BnnConfig {
    fn default() -> Self {
        BnnConfig {
            blocks: 2,
            width: 32,
            epochs: 120,
            learning_rate: 0.01,
            batch_size: 32,
        }
    }
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const BN_MOMENTUM: f64 = 0.1;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, t: usize) {
        let bc1 = 1.0 - ADAM_B1.powi(t as i32);
        let bc2 = 1.0 - ADAM_B2.powi(t as i32);
        for k in 0..params.len() {
            self.m[k] = ADAM_B1 * self.m[k] + (1.0 - ADAM_B1) * grads[k];
            self.v[k] = ADAM_B2 * self.v[k] + (1.0 - ADAM_B2) * grads[k] * grads[k];
            let mhat = self.m[k] / bc1;
            let vhat = self.v[k] / bc2;
            params[k] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// Train a model on labeled samples. See [`train_logged`] for a variant
/// reporting per-epoch loss.
pub fn train<R: Rng>(data: &[LabeledSample], cfg: &BnnConfig, rng: &mut R) -> Result<BnnModel> {
    train_logged(data, cfg, rng, |_, _| {})
}

/// Train, invoking `on_epoch(epoch, mean_train_mae)` after each epoch.
pub fn train_logged<R: Rng>(
    data: &[LabeledSample],
    cfg: &BnnConfig,
    rng: &mut R,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<BnnModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.blocks == 0 || cfg.width == 0 || cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::BadConfig(
            "blocks, width, epochs and batch size must be positive".into(),
        ));
    }
    if cfg.learning_rate <= 0.0 {
        return Err(Error::BadConfig("learning rate must be positive".into()));
    }
    let t = data[0].image.t();
    for s in data {
        if s.image.t() != t {
            return Err(Error::DimensionMismatch {
                expected: t * t,
                got: s.image.t() * s.image.t(),
            });
        }
    }

    let mut model = init_model(t, cfg, data, rng);
    let inputs: Vec<Vec<f64>> = data
        .iter()
        .map(|s| {
            s.image
                .pixels()
                .iter()
                .map(|&p| if p == 1 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    let labels: Vec<f64> = data.iter().map(|s| s.label as f64).collect();

    let mut opt = Optimizer::new(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let loss = train_batch(&mut model, chunk, &inputs, &labels, cfg.learning_rate, &mut opt);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(epoch));
            }
            loss_sum += loss * chunk.len() as f64;
            loss_n += chunk.len();
        }
        on_epoch(epoch, loss_sum / loss_n as f64);
    }
    Ok(model)
}

fn init_model<R: Rng>(t: usize, cfg: &BnnConfig, data: &[LabeledSample], rng: &mut R) -> BnnModel {
    let mut dims = vec![t * t];
    dims.extend(std::iter::repeat(cfg.width).take(cfg.blocks));
    let blocks = (0..cfg.blocks)
        .map(|k| {
            let n_in = dims[k];
            TrainBlock {
                n_in,
                n_out: cfg.width,
                latent: (0..cfg.width * n_in)
                    .map(|_| rng.gen_range(-0.9..0.9))
                    .collect(),
                gamma: vec![1.0; cfg.width],
                beta: vec![0.0; cfg.width],
                run_mean: vec![0.0; cfg.width],
                run_var: vec![1.0; cfg.width],
            }
        })
        .collect();
    let mean_label = data.iter().map(|s| s.label as f64).sum::<f64>() / data.len() as f64;
    BnnModel {
        t,
        blocks,
        out_latent: (0..cfg.width).map(|_| rng.gen_range(-0.9..0.9)).collect(),
        out_bias: mean_label,
    }
}

struct Optimizer {
    w: Vec<Adam>,
    gamma: Vec<Adam>,
    beta: Vec<Adam>,
    out: Adam,
    bias: Adam,
    step: usize,
}

impl Optimizer {
    fn new(model: &BnnModel) -> Self {
        Optimizer {
            w: model.blocks.iter().map(|b| Adam::new(b.latent.len())).collect(),
            gamma: model.blocks.iter().map(|b| Adam::new(b.n_out)).collect(),
            beta: model.blocks.iter().map(|b| Adam::new(b.n_out)).collect(),
            out: Adam::new(model.out_latent.len()),
            bias: Adam::new(1),
            step: 0,
        }
    }
}

struct BlockTape {
    x_in: Vec<f64>,  // b x n_in
    yhat: Vec<f64>,  // b x n_out, normalized pre-activation
    sigma: Vec<f64>, // n_out
    gate: Vec<f64>,  // b x n_out, STE mask on |gamma*yhat + beta|
    wb: Vec<f64>,    // binarized weights, row-major
    mu: Vec<f64>,    // batch means, for the running statistics
    var: Vec<f64>,   // batch variances
}

fn train_batch(
    model: &mut BnnModel,
    chunk: &[usize],
    inputs: &[Vec<f64>],
    labels: &[f64],
    lr: f64,
    opt: &mut Optimizer,
) -> f64 {
    opt.step += 1;
    let step = opt.step;
    let b = chunk.len();
    let n0 = model.t * model.t;
    let mut x: Vec<f64> = Vec::with_capacity(b * n0);
    for &s in chunk {
        x.extend_from_slice(&inputs[s]);
    }

    // Forward with batch statistics, taping what backward needs.
    let mut tapes: Vec<BlockTape> = Vec::with_capacity(model.blocks.len());
    for blk in &model.blocks {
        let (n_in, n_out) = (blk.n_in, blk.n_out);
        let wb: Vec<f64> = blk.latent.iter().map(|&w| sign_i8(w) as f64).collect();
        let mut y = vec![0.0; b * n_out];
        for s in 0..b {
            let xs = &x[s * n_in..(s + 1) * n_in];
            for j in 0..n_out {
                y[s * n_out + j] = dot(&wb[j * n_in..(j + 1) * n_in], xs);
            }
        }
        let mut mu = vec![0.0; n_out];
        for s in 0..b {
            for j in 0..n_out {
                mu[j] += y[s * n_out + j];
            }
        }
        for m in mu.iter_mut() {
            *m /= b as f64;
        }
        let mut var = vec![0.0; n_out];
        for s in 0..b {
            for j in 0..n_out {
                let d = y[s * n_out + j] - mu[j];
                var[j] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= b as f64;
        }
        let sigma: Vec<f64> = var.iter().map(|&v| (v + BN_EPS).sqrt()).collect();
        let mut yhat = vec![0.0; b * n_out];
        let mut act = vec![0.0; b * n_out];
        let mut gate = vec![0.0; b * n_out];
        for s in 0..b {
            for j in 0..n_out {
                let yh = (y[s * n_out + j] - mu[j]) / sigma[j];
                let z = blk.gamma[j] * yh + blk.beta[j];
                yhat[s * n_out + j] = yh;
                act[s * n_out + j] = if z >= 0.0 { 1.0 } else { -1.0 };
                gate[s * n_out + j] = if z.abs() <= 1.0 { 1.0 } else { 0.0 };
            }
        }
        tapes.push(BlockTape {
            x_in: std::mem::replace(&mut x, act),
            yhat,
            sigma,
            gate,
            wb,
            mu,
            var,
        });
    }

    let n_k = model.blocks.last().map(|bl| bl.n_out).unwrap_or(n0);
    let wout: Vec<f64> = model.out_latent.iter().map(|&w| sign_i8(w) as f64).collect();
    let mut loss = 0.0;
    let mut g_pred = vec![0.0; b];
    for s in 0..b {
        let pred = dot(&wout, &x[s * n_k..(s + 1) * n_k]) + model.out_bias;
        let d = pred - labels[chunk[s]];
        loss += d.abs();
        g_pred[s] = sgn(d) / b as f64;
    }
    loss /= b as f64;

    // Output layer gradients; x still holds the last block's activations.
    let mut g_wout = vec![0.0; n_k];
    let mut g_bias = 0.0;
    let mut g_act = vec![0.0; b * n_k];
    for s in 0..b {
        g_bias += g_pred[s];
        for j in 0..n_k {
            g_wout[j] += g_pred[s] * x[s * n_k + j];
            g_act[s * n_k + j] = g_pred[s] * wout[j];
        }
    }
    for (g, &w) in g_wout.iter_mut().zip(model.out_latent.iter()) {
        if w.abs() > 1.0 {
            *g = 0.0;
        }
    }

    // Backward through the blocks.
    let mut block_grads: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::with_capacity(tapes.len());
    for (bi, blk) in model.blocks.iter().enumerate().rev() {
        let tape = &tapes[bi];
        let (n_in, n_out) = (blk.n_in, blk.n_out);
        let mut g_gamma = vec![0.0; n_out];
        let mut g_beta = vec![0.0; n_out];
        let mut mean_gyh = vec![0.0; n_out];
        let mut mean_gyh_yh = vec![0.0; n_out];
        let mut g_z = g_act;
        for s in 0..b {
            for j in 0..n_out {
                let k = s * n_out + j;
                g_z[k] *= tape.gate[k];
                let yh = tape.yhat[k];
                g_gamma[j] += g_z[k] * yh;
                g_beta[j] += g_z[k];
                let gyh = g_z[k] * blk.gamma[j];
                mean_gyh[j] += gyh;
                mean_gyh_yh[j] += gyh * yh;
            }
        }
        for j in 0..n_out {
            mean_gyh[j] /= b as f64;
            mean_gyh_yh[j] /= b as f64;
        }
        let mut g_w = vec![0.0; n_out * n_in];
        let mut g_prev = vec![0.0; b * n_in];
        for s in 0..b {
            let xs = &tape.x_in[s * n_in..(s + 1) * n_in];
            for j in 0..n_out {
                let k = s * n_out + j;
                let gyh = g_z[k] * blk.gamma[j];
                let gy = (gyh - mean_gyh[j] - tape.yhat[k] * mean_gyh_yh[j]) / tape.sigma[j];
                if gy == 0.0 {
                    continue;
                }
                let row = &tape.wb[j * n_in..(j + 1) * n_in];
                let grow = &mut g_w[j * n_in..(j + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += gy * xs[i];
                    g_prev[s * n_in + i] += gy * row[i];
                }
            }
        }
        for (g, &w) in g_w.iter_mut().zip(blk.latent.iter()) {
            if w.abs() > 1.0 {
                *g = 0.0;
            }
        }
        block_grads.push((g_w, g_gamma, g_beta));
        g_act = g_prev;
    }
    block_grads.reverse();

    for (bi, (g_w, g_gamma, g_beta)) in block_grads.into_iter().enumerate() {
        let blk = &mut model.blocks[bi];
        opt.w[bi].step(&mut blk.latent, &g_w, lr, step);
        opt.gamma[bi].step(&mut blk.gamma, &g_gamma, lr, step);
        opt.beta[bi].step(&mut blk.beta, &g_beta, lr, step);
        for w in blk.latent.iter_mut() {
            *w = w.clamp(-1.0, 1.0);
        }
    }
    opt.out.step(&mut model.out_latent, &g_wout, lr, step);
    for w in model.out_latent.iter_mut() {
        *w = w.clamp(-1.0, 1.0);
    }
    // The scalar bias has to track the label scale; give it a faster rate.
    let mut bias = [model.out_bias];
    opt.bias.step(&mut bias, &[g_bias], lr * 10.0, step);
    model.out_bias = bias[0];

    for (blk, tape) in model.blocks.iter_mut().zip(tapes.iter()) {
        for j in 0..blk.n_out {
            blk.run_mean[j] = (1.0 - BN_MOMENTUM) * blk.run_mean[j] + BN_MOMENTUM * tape.mu[j];
            blk.run_var[j] = (1.0 - BN_MOMENTUM) * blk.run_var[j] + BN_MOMENTUM * tape.var[j];
        }
    }

    loss
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
