use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::SyntheticDataset;
use crate::error::{Error, Result};
use crate::mds::fmt_sig17;
use crate::weights::{flatten_weights, Layer, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input, hidden..., output widths.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    /// Initialization seed.
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "need at least two positive layer sizes, got {layer_sizes:?}"
            )));
        }
        Ok(Self {
            layer_sizes,
            activation,
            seed,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Fully connected network with parameters stored flat, layer by layer:
/// `W_l` (out x in, row-major) then `b_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
    /// Offset of each layer's weight block in `params`.
    offsets: Vec<usize>,
}

impl Mlp {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and
    /// biases, drawn from `spec.seed`.
    pub fn init(spec: &MlpSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = Vec::with_capacity(spec.param_count());
        for w in spec.layer_sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Self::from_params(spec, params).expect("param count matches spec")
    }

    pub fn from_params(spec: &MlpSpec, params: Vec<f64>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::DimMismatch {
                expected: spec.param_count(),
                actual: params.len(),
            });
        }
        let mut offsets = Vec::new();
        let mut at = 0;
        for w in spec.layer_sizes.windows(2) {
            offsets.push(at);
            at += w[0] * w[1] + w[1];
        }
        Ok(Self {
            spec: spec.clone(),
            params,
            offsets,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameter tensors in declaration order (matrix, then its bias).
    pub fn layers(&self) -> Vec<Layer> {
        let mut out = Vec::new();
        for (l, w) in self.spec.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let start = self.offsets[l];
            let bias = start + fan_in * fan_out;
            out.push(Layer::Matrix {
                rows: fan_out,
                cols: fan_in,
                data: self.params[start..bias].to_vec(),
            });
            out.push(Layer::Vector(self.params[bias..bias + fan_out].to_vec()));
        }
        out
    }

    pub fn weight_vector(&self) -> Result<WeightVector> {
        flatten_weights(&self.layers())
    }

    /// Per-layer activations for one input; the last entry holds logits.
    fn forward(&self, x: &[f64], acts: &mut [Vec<f64>]) {
        let sizes = &self.spec.layer_sizes;
        let last = sizes.len() - 2;
        acts[0].copy_from_slice(x);
        for l in 0..=last {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let w = &self.params[self.offsets[l]..self.offsets[l] + fan_in * fan_out];
            let b = &self.params[self.offsets[l] + fan_in * fan_out..][..fan_out];
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            for j in 0..fan_out {
                let row = &w[j * fan_in..(j + 1) * fan_in];
                let z = b[j] + row.iter().zip(input.iter()).map(|(a, c)| a * c).sum::<f64>();
                out[j] = if l == last { z } else { self.spec.activation.apply(z) };
            }
        }
    }

    fn buffers(&self) -> Vec<Vec<f64>> {
        self.spec.layer_sizes.iter().map(|&s| vec![0.0; s]).collect()
    }

    /// Class scores for one input.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = self.buffers();
        self.forward(x, &mut acts);
        acts.pop().expect("output layer")
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (k, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = k;
            }
        }
        best
    }

    pub fn accuracy(&self, ds: &SyntheticDataset) -> f64 {
        let hits = (0..ds.len())
            .filter(|&i| self.predict(ds.input(i)) == ds.labels[i])
            .count();
        hits as f64 / ds.len() as f64
    }

    /// Mean softmax cross-entropy over `batch`, adding the mean gradient
    /// into `grad` (which must be zeroed by the caller).
    fn accumulate(&self, ds: &SyntheticDataset, batch: &[usize], grad: &mut [f64], scratch: &mut Scratch) -> f64 {
        let sizes = &self.spec.layer_sizes;
        let depth = sizes.len() - 1;
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            self.forward(ds.input(i), &mut scratch.acts);
            let logits = &scratch.acts[depth];
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            let label = ds.labels[i];
            loss += denom.ln() + max - logits[label];

            let delta = &mut scratch.deltas[depth];
            for (k, d) in delta.iter_mut().enumerate() {
                *d = (logits[k] - max).exp() / denom;
            }
            delta[label] -= 1.0;

            for l in (0..depth).rev() {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let w_at = self.offsets[l];
                let b_at = w_at + fan_in * fan_out;
                let (lower, upper) = scratch.deltas.split_at_mut(l + 1);
                let delta = &upper[0];
                let input = &scratch.acts[l];
                for j in 0..fan_out {
                    let dj = delta[j] * scale;
                    if dj == 0.0 {
                        continue;
                    }
                    let g = &mut grad[w_at + j * fan_in..w_at + (j + 1) * fan_in];
                    for (gk, xk) in g.iter_mut().zip(input.iter()) {
                        *gk += dj * xk;
                    }
                    grad[b_at + j] += dj;
                }
                if l > 0 {
                    let back = &mut lower[l];
                    back.iter_mut().for_each(|v| *v = 0.0);
                    let w = &self.params[w_at..b_at];
                    for j in 0..fan_out {
                        let dj = delta[j];
                        if dj == 0.0 {
                            continue;
                        }
                        for (bk, wk) in back.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                            *bk += dj * wk;
                        }
                    }
                    for (bk, &ak) in back.iter_mut().zip(input.iter()) {
                        *bk *= self.spec.activation.derivative(ak);
                    }
                }
            }
        }
        loss * scale
    }

    /// Mean loss and its gradient over the given samples.
    pub fn loss_and_grad(&self, ds: &SyntheticDataset, batch: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut scratch = Scratch::new(&self.spec.layer_sizes);
        let loss = self.accumulate(ds, batch, &mut grad, &mut scratch);
        (loss, grad)
    }

    /// Mean loss over the given samples.
    pub fn loss(&self, ds: &SyntheticDataset, batch: &[usize]) -> f64 {
        let mut acts = self.buffers();
        let depth = acts.len() - 1;
        let total: f64 = batch
            .iter()
            .map(|&i| {
                self.forward(ds.input(i), &mut acts);
                let logits = &acts[depth];
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = logits.iter().map(|z| (z - max).exp()).sum();
                denom.ln() + max - logits[ds.labels[i]]
            })
            .sum();
        total / batch.len() as f64
    }
}

struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(sizes: &[usize]) -> Self {
        Self {
            acts: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            deltas: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

/// How long to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    /// `epochs * ceil(N / batch_size)` updates.
    Epochs(usize),
    /// Exactly this many updates, reshuffling at every pass over the data.
    Steps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub budget: Budget,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn total_steps(&self, samples: usize) -> usize {
        match self.budget {
            Budget::Epochs(e) => e * samples.div_ceil(self.batch_size),
            Budget::Steps(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub initial: WeightVector,
    pub final_: WeightVector,
    /// Mean batch loss before each update.
    pub loss_curve: Vec<f64>,
    pub final_model: Mlp,
}

impl TrainResult {
    /// Writes `step,loss`.
    pub fn write_loss_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "loss"])?;
        for (step, loss) in self.loss_curve.iter().enumerate() {
            w.write_record([step.to_string(), fmt_sig17(*loss)])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn check_compatible(spec: &MlpSpec, ds: &SyntheticDataset, cfg: &TrainConfig) -> Result<()> {
    if spec.input_size() != ds.dim {
        return Err(Error::DimMismatch {
            expected: spec.input_size(),
            actual: ds.dim,
        });
    }
    if spec.output_size() < ds.class_count || ds.labels.iter().any(|&l| l >= spec.output_size()) {
        return Err(Error::InvalidConfig(format!(
            "{} outputs cannot represent {} classes",
            spec.output_size(),
            ds.class_count
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate >= 0.0) {
        return Err(Error::InvalidConfig(
            "batch_size must be positive and learning_rate nonnegative".into(),
        ));
    }
    Ok(())
}

/// Trains from `Mlp::init(spec)`.
pub fn train(spec: &MlpSpec, ds: &SyntheticDataset, cfg: &TrainConfig, seed: u64) -> Result<TrainResult> {
    train_from(Mlp::init(spec), ds, cfg, seed)
}

/// Mini-batch SGD on softmax cross-entropy from the given starting model.
///
/// `seed` drives only the data order. The number of updates is
/// [`TrainConfig::total_steps`]; a zero learning rate leaves the weights
/// bit-identical.
pub fn train_from(model: Mlp, ds: &SyntheticDataset, cfg: &TrainConfig, seed: u64) -> Result<TrainResult> {
    check_compatible(model.spec(), ds, cfg)?;
    let mut model = model;
    let initial = model.weight_vector()?;
    let total = cfg.total_steps(ds.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut scratch = Scratch::new(&model.spec.layer_sizes);
    let mut loss_curve = Vec::with_capacity(total);

    let mut step = 0;
    'outer: while step < total {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if step == total {
                break 'outer;
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.accumulate(ds, batch, &mut grad, &mut scratch);
            if !loss.is_finite() {
                return Err(Error::DivergenceError { step });
            }
            loss_curve.push(loss);
            if cfg.learning_rate != 0.0 {
                for (p, g) in model.params.iter_mut().zip(&grad) {
                    *p -= cfg.learning_rate * g;
                }
            }
            step += 1;
        }
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::DivergenceError { step });
    }
    let final_ = model.weight_vector()?;
    Ok(TrainResult {
        initial,
        final_,
        loss_curve,
        final_model: model,
    })
}
