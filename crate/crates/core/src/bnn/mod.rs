//! Binarized network surrogate of the dispersion solve.
//!
//! The training form ([`BnnModel`]) carries latent real weights, sign
//! weights and batch-norm statistics. Folding ([`fold_thresholds`])
//! converts every neuron into an exact integer threshold test, yielding
//! the deployment form ([`IntBnnModel`]) whose forward pass is pure
//! integer arithmetic; that form is what the constraint encoder consumes
//! and what gets serialized.
//!
//! Sign convention everywhere: `sign(0) = +1`. Inputs map void -> -1,
//! grain -> +1.
//!
//! # Model file grammar (version `BNNv1`)
//!
//! Line-oriented text; tokens separated by single spaces:
//!
//! ```text
//! BNNv1 <t> <K> <width_1> ... <width_K>
//! <block 1, row 1: n_in entries, each +1 or -1>
//! ...                                  (width_1 weight rows)
//! T <unit_1> ... <unit_width1>
//! ...                                  (blocks 2..K in the same shape)
//! O <n_K entries, each +1 or -1>
//! B <integer>
//! ```
//!
//! A `T`-line unit is `+1:<bound>` or `-1:<bound>` for a threshold neuron
//! (the sign records the batch-norm polarity the threshold was folded
//! from; semantics are always `weights . x >= bound`), or `C:+1` / `C:-1`
//! for a neuron whose batch-norm scale vanished and whose output is
//! constant.

mod train;

pub use train::{train, train_logged, BnnConfig};

use crate::error::{Error, Result};
use crate::grid::Image;
use rand::Rng;

/// Batch-norm variance floor; also applied to running statistics at
/// inference and fold time so both agree exactly.
pub(crate) const BN_EPS: f64 = 1e-5;

/// An image paired with its integer dispersion label.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub image: Image,
    pub label: u8,
}

/// Training form: binarized blocks with latent weights and batch-norm.
#[derive(Debug, Clone)]
pub struct BnnModel {
    pub(crate) t: usize,
    pub(crate) blocks: Vec<TrainBlock>,
    pub(crate) out_latent: Vec<f64>,
    pub(crate) out_bias: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct TrainBlock {
    pub n_in: usize,
    pub n_out: usize,
    /// Latent real weights, row-major `[n_out][n_in]`, clipped to [-1, 1].
    pub latent: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub run_mean: Vec<f64>,
    pub run_var: Vec<f64>,
}

impl TrainBlock {
    pub(crate) fn sign_weights(&self) -> Vec<i8> {
        self.latent.iter().map(|&w| sign_i8(w)).collect()
    }

    pub(crate) fn sigma(&self, j: usize) -> f64 {
        (self.run_var[j] + BN_EPS).sqrt()
    }
}

pub(crate) fn sign_i8(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

impl BnnModel {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.n_out).collect()
    }

    /// Real-valued inference-mode forward (running statistics, binarized
    /// weights). The deployment form is the canonical prediction; this is
    /// kept for fold-equivalence checks.
    pub fn forward_infer(&self, img: &Image) -> Result<f64> {
        if img.t() != self.t {
            return Err(Error::DimensionMismatch {
                expected: self.t * self.t,
                got: img.t() * img.t(),
            });
        }
        let mut x: Vec<f64> = img
            .pixels()
            .iter()
            .map(|&p| if p == 1 { 1.0 } else { -1.0 })
            .collect();
        for b in &self.blocks {
            let w = b.sign_weights();
            let mut next = Vec::with_capacity(b.n_out);
            for j in 0..b.n_out {
                let y: f64 = (0..b.n_in)
                    .map(|i| w[j * b.n_in + i] as f64 * x[i])
                    .sum();
                let z = b.gamma[j] * (y - b.run_mean[j]) / b.sigma(j) + b.beta[j];
                next.push(if z >= 0.0 { 1.0 } else { -1.0 });
            }
            x = next;
        }
        let out: f64 = self
            .out_latent
            .iter()
            .zip(x.iter())
            .map(|(&w, &a)| sign_i8(w) as f64 * a)
            .sum();
        Ok(out + self.out_bias)
    }
}

/// One deployment-form neuron.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntNeuron {
    /// Fires +1 iff `weights . x >= bound`; `polarity` records the sign of
    /// the batch-norm scale the threshold came from.
    Threshold {
        weights: Vec<i8>,
        bound: i64,
        polarity: i8,
    },
    /// Output fixed regardless of input.
    Constant { value: i8 },
}

impl IntNeuron {
    pub fn eval(&self, x: &[i8]) -> i8 {
        match self {
            IntNeuron::Threshold { weights, bound, .. } => {
                let s: i64 = weights
                    .iter()
                    .zip(x.iter())
                    .map(|(&w, &v)| w as i64 * v as i64)
                    .sum();
                if s >= *bound {
                    1
                } else {
                    -1
                }
            }
            IntNeuron::Constant { value } => *value,
        }
    }
}

/// Deployment form: integer thresholds only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntBnnModel {
    pub(crate) t: usize,
    pub blocks: Vec<Vec<IntNeuron>>,
    pub out_weights: Vec<i8>,
    pub out_bias: i64,
}

impl IntBnnModel {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    /// Width of the last block (the output layer's fan-in).
    pub fn last_width(&self) -> usize {
        self.blocks.last().map(|b| b.len()).unwrap_or(0)
    }

    /// Smallest and largest output the network can produce.
    pub fn output_range(&self) -> (i64, i64) {
        let n = self.out_weights.len() as i64;
        (self.out_bias - n, self.out_bias + n)
    }

    /// Integer forward pass on the +-1 encoding of `x0`.
    pub fn forward_inputs(&self, x0: &[i8]) -> Result<i64> {
        if x0.len() != self.t * self.t {
            return Err(Error::DimensionMismatch {
                expected: self.t * self.t,
                got: x0.len(),
            });
        }
        let mut x = x0.to_vec();
        for block in &self.blocks {
            x = block.iter().map(|n| n.eval(&x)).collect();
        }
        let s: i64 = self
            .out_weights
            .iter()
            .zip(x.iter())
            .map(|(&w, &v)| w as i64 * v as i64)
            .sum();
        Ok(s + self.out_bias)
    }

    /// Predicted integer dispersion of an image.
    pub fn forward(&self, img: &Image) -> Result<i64> {
        if img.t() != self.t {
            return Err(Error::DimensionMismatch {
                expected: self.t * self.t,
                got: img.t() * img.t(),
            });
        }
        let x0: Vec<i8> = img
            .pixels()
            .iter()
            .map(|&p| if p == 1 { 1 } else { -1 })
            .collect();
        self.forward_inputs(&x0)
    }

    /// A random deployment-form model; handy for tests and demos.
    pub fn random<R: Rng>(t: usize, blocks: usize, width: usize, rng: &mut R) -> IntBnnModel {
        let mut dims = vec![t * t];
        dims.extend(std::iter::repeat(width).take(blocks));
        let mut bs = Vec::new();
        for k in 0..blocks {
            let n_in = dims[k] as i64;
            let mut layer = Vec::new();
            for _ in 0..width {
                if rng.gen_bool(0.05) {
                    layer.push(IntNeuron::Constant {
                        value: if rng.gen_bool(0.5) { 1 } else { -1 },
                    });
                } else {
                    let weights: Vec<i8> =
                        (0..n_in).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
                    // Keep thresholds in a range where both outcomes occur.
                    let half = (n_in / 2).max(1);
                    layer.push(IntNeuron::Threshold {
                        weights,
                        bound: rng.gen_range(-half..=half),
                        polarity: if rng.gen_bool(0.5) { 1 } else { -1 },
                    });
                }
            }
            bs.push(layer);
        }
        IntBnnModel {
            t,
            blocks: bs,
            out_weights: (0..width).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect(),
            out_bias: rng.gen_range(-10..=10),
        }
    }

    /// Serialize to the `BNNv1` text grammar.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("BNNv1 {} {}", self.t, self.blocks.len()));
        for b in &self.blocks {
            out.push_str(&format!(" {}", b.len()));
        }
        out.push('\n');
        let mut n_in = self.t * self.t;
        for block in &self.blocks {
            for neuron in block {
                match neuron {
                    IntNeuron::Threshold { weights, .. } => {
                        push_sign_row(&mut out, weights);
                    }
                    IntNeuron::Constant { .. } => {
                        // Constants keep a placeholder row so rows stay
                        // positional.
                        push_sign_row(&mut out, &vec![1i8; n_in]);
                    }
                }
            }
            out.push('T');
            for neuron in block {
                match neuron {
                    IntNeuron::Threshold {
                        bound, polarity, ..
                    } => out.push_str(&format!(
                        " {}:{}",
                        if *polarity >= 0 { "+1" } else { "-1" },
                        bound
                    )),
                    IntNeuron::Constant { value } => {
                        out.push_str(if *value >= 0 { " C:+1" } else { " C:-1" })
                    }
                }
            }
            out.push('\n');
            n_in = block.len();
        }
        out.push('O');
        for &w in &self.out_weights {
            out.push_str(if w >= 0 { " +1" } else { " -1" });
        }
        out.push('\n');
        out.push_str(&format!("B {}\n", self.out_bias));
        out
    }

    /// Parse the `BNNv1` text grammar.
    pub fn from_text(text: &str) -> Result<IntBnnModel> {
        let err = |line: usize, msg: &str| Error::ModelParse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty model file"))?;
        let mut toks = header.split_whitespace();
        if toks.next() != Some("BNNv1") {
            return Err(err(ln + 1, "expected BNNv1 header"));
        }
        let t: usize = toks
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(ln + 1, "bad side length"))?;
        let k: usize = toks
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(ln + 1, "bad block count"))?;
        let widths: Vec<usize> = toks
            .map(|s| s.parse().map_err(|_| err(ln + 1, "bad width")))
            .collect::<Result<_>>()?;
        if widths.len() != k {
            return Err(err(ln + 1, "width count does not match block count"));
        }
        let mut blocks = Vec::with_capacity(k);
        let mut n_in = t * t;
        for &width in &widths {
            let mut rows: Vec<Vec<i8>> = Vec::with_capacity(width);
            for _ in 0..width {
                let (ln, row) = lines.next().ok_or_else(|| err(0, "missing weight row"))?;
                let row = parse_sign_row(row).map_err(|m| err(ln + 1, &m))?;
                if row.len() != n_in {
                    return Err(err(ln + 1, "weight row has wrong arity"));
                }
                rows.push(row);
            }
            let (ln, tline) = lines.next().ok_or_else(|| err(0, "missing threshold line"))?;
            let mut toks = tline.split_whitespace();
            if toks.next() != Some("T") {
                return Err(err(ln + 1, "expected T line"));
            }
            let units: Vec<&str> = toks.collect();
            if units.len() != width {
                return Err(err(ln + 1, "threshold line has wrong arity"));
            }
            let mut layer = Vec::with_capacity(width);
            for (unit, row) in units.iter().zip(rows.into_iter()) {
                let (tag, val) = unit
                    .split_once(':')
                    .ok_or_else(|| err(ln + 1, "bad threshold unit"))?;
                match tag {
                    "C" => layer.push(IntNeuron::Constant {
                        value: match val {
                            "+1" => 1,
                            "-1" => -1,
                            _ => return Err(err(ln + 1, "bad constant value")),
                        },
                    }),
                    "+1" | "-1" => layer.push(IntNeuron::Threshold {
                        weights: row,
                        bound: val
                            .parse()
                            .map_err(|_| err(ln + 1, "bad threshold bound"))?,
                        polarity: if tag == "+1" { 1 } else { -1 },
                    }),
                    _ => return Err(err(ln + 1, "bad threshold tag")),
                }
            }
            blocks.push(layer);
            n_in = width;
        }
        let (ln, oline) = lines.next().ok_or_else(|| err(0, "missing output row"))?;
        let oline = oline
            .strip_prefix("O ")
            .ok_or_else(|| err(ln + 1, "expected O line"))?;
        let out_weights = parse_sign_row(oline).map_err(|m| err(ln + 1, &m))?;
        if out_weights.len() != n_in {
            return Err(err(ln + 1, "output row has wrong arity"));
        }
        let (ln, bline) = lines.next().ok_or_else(|| err(0, "missing bias line"))?;
        let out_bias = bline
            .strip_prefix("B ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| err(ln + 1, "expected B line"))?;
        Ok(IntBnnModel {
            t,
            blocks,
            out_weights,
            out_bias,
        })
    }
}

fn push_sign_row(out: &mut String, row: &[i8]) {
    let mut first = true;
    for &w in row {
        if !first {
            out.push(' ');
        }
        out.push_str(if w >= 0 { "+1" } else { "-1" });
        first = false;
    }
    out.push('\n');
}

fn parse_sign_row(line: &str) -> std::result::Result<Vec<i8>, String> {
    line.split_whitespace()
        .map(|tok| match tok {
            "+1" | "1" => Ok(1),
            "-1" => Ok(-1),
            other => Err(format!("bad weight token {other}")),
        })
        .collect()
}

/// Fold one neuron's batch-norm into an integer threshold test.
///
/// With scale `gamma`, shift `beta`, mean `mu` and deviation `sigma > 0`
/// over the integer pre-activation `a . x`, the sign test becomes:
/// `gamma > 0`: fire iff `a . x >= ceil(mu - beta*sigma/gamma)`;
/// `gamma < 0`: fire iff `a . x <= floor(mu - beta*sigma/gamma)`, stored
/// with the weight row negated so every stored test reads `>=`;
/// `gamma = 0`: constant `sign(beta)`.
pub(crate) fn fold_neuron(row: &[i8], gamma: f64, beta: f64, mu: f64, sigma: f64) -> IntNeuron {
    if gamma == 0.0 {
        return IntNeuron::Constant {
            value: if beta >= 0.0 { 1 } else { -1 },
        };
    }
    let threshold = mu - beta * sigma / gamma;
    if gamma > 0.0 {
        IntNeuron::Threshold {
            weights: row.to_vec(),
            bound: threshold.ceil() as i64,
            polarity: 1,
        }
    } else {
        IntNeuron::Threshold {
            weights: row.iter().map(|&w| -w).collect(),
            bound: -(threshold.floor() as i64),
            polarity: -1,
        }
    }
}

/// Fold a trained model into its exact integer deployment form.
pub fn fold_thresholds(m: &BnnModel) -> Result<IntBnnModel> {
    let mut blocks = Vec::with_capacity(m.blocks.len());
    for (bi, b) in m.blocks.iter().enumerate() {
        let w = b.sign_weights();
        let mut layer = Vec::with_capacity(b.n_out);
        for j in 0..b.n_out {
            let sigma = b.sigma(j);
            if !(sigma > 0.0) {
                return Err(Error::NonPositiveSigma {
                    block: bi,
                    neuron: j,
                });
            }
            layer.push(fold_neuron(
                &w[j * b.n_in..(j + 1) * b.n_in],
                b.gamma[j],
                b.beta[j],
                b.run_mean[j],
                sigma,
            ));
        }
        blocks.push(layer);
    }
    Ok(IntBnnModel {
        t: m.t,
        blocks,
        out_weights: m.out_latent.iter().map(|&w| sign_i8(w)).collect(),
        out_bias: m.out_bias.round() as i64,
    })
}

/// Mean absolute error of the deployment model over labeled samples.
pub fn eval_mae(m: &IntBnnModel, data: &[LabeledSample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for s in data {
        total += (m.forward(&s.image)? - s.label as i64).abs() as f64;
    }
    Ok(total / data.len() as f64)
}
