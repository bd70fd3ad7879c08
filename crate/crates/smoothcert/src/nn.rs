//! Minimal feedforward classifier with exact backpropagation, plain /
//! Gaussian-augmentation / stability training, and a versioned binary
//! checkpoint format.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::smoothing::BaseClassifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Identity),
            other => Err(Error::format(format!("unknown activation tag {other}"))),
        }
    }
}

/// One dense layer: weights are row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::invalid(format!(
                "weight matrix has {} entries, expected {}",
                weights.len(),
                in_dim * out_dim
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::invalid(format!(
                "bias vector has {} entries, expected {out_dim}",
                bias.len()
            )));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
            in_dim,
            out_dim,
        })
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.out_dim {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = self.bias[r];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

/// Feedforward network; the final layer width is the class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Logits and softmax probabilities of a forward pass.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Gradients of a scalar loss with respect to the input and all parameters.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub input: Vec<f64>,
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits
        .iter()
        .map(|&z| (z - max).exp())
        .sum::<f64>()
        .ln();
    logits.iter().map(|&z| z - max - log_total).collect()
}

struct Trace {
    /// `inputs[l]` feeds layer `l`; the last entry is the final activation.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl Network {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::invalid(format!(
                    "layer dimensions do not compose: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Network { layers })
    }

    /// MLP with ReLU hidden layers and an identity output layer. Weights are
    /// drawn from a symmetric uniform scaled by `1/sqrt(fan_in)`; biases
    /// start at zero.
    pub fn mlp(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("an MLP needs input and output widths"));
        }
        let mut rng = substream(seed, u64::from_le_bytes(*b"initnet\0"), 0);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            let activation = if l + 1 == dims.len() - 1 {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out], activation)?);
        }
        Network::from_layers(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = Vec::new();
            layer.affine(&current, &mut z);
            current = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            inputs.push(current.clone());
        }
        Trace { inputs, pre }
    }

    /// Logits and numerically stabilized softmax probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Prediction> {
        self.check_input(x)?;
        let trace = self.trace(x);
        let logits = trace.inputs.last().unwrap().clone();
        let probs = softmax(&logits);
        Ok(Prediction { logits, probs })
    }

    /// Backpropagate from `delta = probs - target` at the final activation.
    fn backward(&self, trace: &Trace, probs: &[f64], target: &[f64]) -> LossGradient {
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = probs
            .iter()
            .zip(target)
            .zip(&trace.pre[last])
            .map(|((&p, &t), &z)| (p - t) * self.layers[last].activation.derivative(z))
            .collect();

        let mut layer_grads: Vec<LayerGradient> = self
            .layers
            .iter()
            .map(|l| LayerGradient {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.out_dim],
            })
            .collect();

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let grad = &mut layer_grads[l];
            for (r, &d) in delta.iter().enumerate() {
                grad.bias[r] = d;
                let row = &mut grad.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (g, &v) in row.iter_mut().zip(input) {
                    *g = d * v;
                }
            }
            let mut prev = vec![0.0; layer.in_dim];
            for (r, &d) in delta.iter().enumerate() {
                let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if l > 0 {
                for (p, &z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                    *p *= self.layers[l - 1].activation.derivative(z);
                }
            }
            delta = prev;
        }

        LossGradient {
            loss: 0.0,
            probs: probs.to_vec(),
            input: delta,
            layers: layer_grads,
        }
    }

    /// Cross-entropy loss and exact gradients for a hard label.
    pub fn gradient(&self, x: &[f64], label: usize) -> Result<LossGradient> {
        self.check_input(x)?;
        if label >= self.class_count() {
            return Err(Error::invalid(format!(
                "label {label} out of range for {} classes",
                self.class_count()
            )));
        }
        let trace = self.trace(x);
        let logits = trace.inputs.last().unwrap();
        let probs = softmax(logits);
        let mut target = vec![0.0; probs.len()];
        target[label] = 1.0;
        let mut grad = self.backward(&trace, &probs, &target);
        grad.loss = -log_softmax(logits)[label];
        Ok(grad)
    }

    /// Cross-entropy against a fixed target distribution (no gradient flows
    /// through the target).
    pub fn gradient_soft(&self, x: &[f64], target: &[f64]) -> Result<LossGradient> {
        self.check_input(x)?;
        if target.len() != self.class_count() {
            return Err(Error::invalid("target distribution has the wrong length"));
        }
        let trace = self.trace(x);
        let logits = trace.inputs.last().unwrap();
        let probs = softmax(logits);
        let mut grad = self.backward(&trace, &probs, target);
        let log_probs = log_softmax(logits);
        grad.loss = -target
            .iter()
            .zip(&log_probs)
            .map(|(&t, &lp)| t * lp)
            .sum::<f64>();
        Ok(grad)
    }

    /// Stability regularizer: cross-entropy between the (detached) softmax
    /// on `x` and the softmax on `x_noisy`.
    pub fn stability_loss(&self, x: &[f64], x_noisy: &[f64]) -> Result<f64> {
        let target = self.forward(x)?.probs;
        self.check_input(x_noisy)?;
        let trace = self.trace(x_noisy);
        let log_probs = log_softmax(trace.inputs.last().unwrap());
        Ok(-target
            .iter()
            .zip(&log_probs)
            .map(|(&t, &lp)| t * lp)
            .sum::<f64>())
    }
}

impl BaseClassifier for Network {
    fn class_count(&self) -> usize {
        Network::class_count(self)
    }

    fn classify(&self, x: &[f64]) -> Result<usize> {
        let pred = self.forward(x)?;
        let mut best = 0;
        for (i, &l) in pred.logits.iter().enumerate() {
            if l > pred.logits[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Training mode for [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Cross-entropy on clean inputs.
    Plain,
    /// Cross-entropy on noise-perturbed inputs only (ablation baseline).
    GaussianAugment,
    /// Clean cross-entropy plus `gamma` times the stability regularizer on a
    /// fresh noisy copy of each example.
    Stability,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub stability_gamma: f64,
    pub noise_sigma: f64,
    pub mode: TrainMode,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be finite and > 0"));
        }
        if self.stability_gamma < 0.0 || !self.stability_gamma.is_finite() {
            return Err(Error::invalid("stability gamma must be finite and >= 0"));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise sigma must be finite and >= 0"));
        }
        if self.mode == TrainMode::Stability && self.noise_sigma == 0.0 {
            return Err(Error::invalid("stability mode requires noise_sigma > 0"));
        }
        Ok(())
    }
}

/// Per-epoch mean training loss and clean accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Minibatch SGD on `L = L_clean + gamma * L_stability` (plain mode fixes
/// `gamma = 0, sigma = 0`; augmentation mode trains the clean loss on the
/// noisy input alone). Noise is redrawn per example per epoch. Training is
/// single-threaded and deterministic under the config seed.
pub fn train(net: &mut Network, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    if data.dim != net.input_dim() {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match network input {}",
            data.dim,
            net.input_dim()
        )));
    }
    let (gamma, sigma) = match cfg.mode {
        TrainMode::Plain => (0.0, 0.0),
        TrainMode::GaussianAugment => (0.0, cfg.noise_sigma),
        TrainMode::Stability => (cfg.stability_gamma, cfg.noise_sigma),
    };

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = substream(cfg.seed, u64::from_le_bytes(*b"trainep\0"), epoch as u64);
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<LayerGradient>> = None;
            for &idx in batch {
                let x = &data.features[idx];
                let y = data.labels[idx];
                let noisy: Option<Vec<f64>> = if sigma > 0.0 {
                    Some(
                        x.iter()
                            .map(|&v| {
                                let e: f64 = StandardNormal.sample(&mut rng);
                                v + sigma * e
                            })
                            .collect(),
                    )
                } else {
                    None
                };

                let (loss, grads) = match cfg.mode {
                    TrainMode::Plain => {
                        let g = net.gradient(x, y)?;
                        (g.loss, vec![(1.0, g)])
                    }
                    TrainMode::GaussianAugment => {
                        let input = noisy.as_deref().unwrap_or(x);
                        let g = net.gradient(input, y)?;
                        (g.loss, vec![(1.0, g)])
                    }
                    TrainMode::Stability => {
                        let clean = net.gradient(x, y)?;
                        let noisy = noisy.as_deref().expect("sigma > 0 in stability mode");
                        let stab = net.gradient_soft(noisy, &clean.probs)?;
                        let loss = clean.loss + gamma * stab.loss;
                        (loss, vec![(1.0, clean), (gamma, stab)])
                    }
                };
                epoch_loss += loss;

                for (scale, g) in grads {
                    match &mut acc {
                        None => {
                            let mut scaled = g.layers;
                            if scale != 1.0 {
                                for lg in &mut scaled {
                                    lg.weights.iter_mut().for_each(|v| *v *= scale);
                                    lg.bias.iter_mut().for_each(|v| *v *= scale);
                                }
                            }
                            acc = Some(scaled);
                        }
                        Some(total) => {
                            for (t, s) in total.iter_mut().zip(&g.layers) {
                                for (tv, sv) in t.weights.iter_mut().zip(&s.weights) {
                                    *tv += scale * sv;
                                }
                                for (tv, sv) in t.bias.iter_mut().zip(&s.bias) {
                                    *tv += scale * sv;
                                }
                            }
                        }
                    }
                }
            }

            if let Some(total) = acc {
                let step = cfg.learning_rate / batch.len() as f64;
                for (layer, grad) in net.layers.iter_mut().zip(&total) {
                    for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                        *w -= step * g;
                    }
                    for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
                        *b -= step * g;
                    }
                }
            }
        }

        let mean_loss = epoch_loss / n as f64;
        if !mean_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let mut correct = 0usize;
        for (x, &y) in data.features.iter().zip(&data.labels) {
            if net.classify(x)? == y {
                correct += 1;
            }
        }
        trace.push(EpochStats {
            epoch,
            mean_loss,
            accuracy: correct as f64 / n as f64,
        });
    }
    Ok(trace)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SMCERTNN";
const CHECKPOINT_VERSION: u32 = 1;

impl Network {
    /// Serialize as a versioned binary checkpoint: magic, format version,
    /// layer count, then per layer the dims, activation tag, and row-major
    /// little-endian 64-bit weights and biases.
    pub fn save_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.in_dim as u32).to_le_bytes())?;
            w.write_all(&(layer.out_dim as u32).to_le_bytes())?;
            w.write_all(&[layer.activation.tag()])?;
            for &v in &layer.weights {
                w.write_all(&v.to_le_bytes())?;
            }
            for &v in &layer.bias {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic, "magic")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::format("not a network checkpoint (bad magic)".to_string()));
        }
        let version = read_u32(r, "version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let layer_count = read_u32(r, "layer count")? as usize;
        if layer_count == 0 {
            return Err(Error::format("checkpoint has no layers".to_string()));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let in_dim = read_u32(r, "input dimension")? as usize;
            let out_dim = read_u32(r, "output dimension")? as usize;
            let mut tag = [0u8; 1];
            read_exact(r, &mut tag, "activation tag")?;
            let activation = Activation::from_tag(tag[0])?;
            let mut weights = vec![0.0f64; in_dim.checked_mul(out_dim).ok_or_else(|| {
                Error::format("layer dimensions overflow".to_string())
            })?];
            read_f64s(r, &mut weights)?;
            let mut bias = vec![0.0f64; out_dim];
            read_f64s(r, &mut bias)?;
            layers.push(
                Layer::new(in_dim, out_dim, weights, bias, activation)
                    .map_err(|e| Error::format(format!("inconsistent checkpoint layer: {e}")))?,
            );
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::format("trailing bytes after checkpoint payload".to_string()));
        }
        Network::from_layers(layers).map_err(|e| Error::format(format!("bad checkpoint: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save_to(&mut file)?;
        use std::io::Write as _;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| {
            Error::format(format!("cannot open checkpoint {}: {e}", path.display()))
        })?);
        Network::load_from(&mut file)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format(format!("truncated checkpoint: missing {what}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in out {
        read_exact(r, &mut buf, "parameter data")?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}
