//! Fully connected softmax classifier used for every discriminator and for
//! the meta-model.
//!
//! Hidden layers use `tanh`; the output layer is a softmax over the
//! categories. Training is mini-batch gradient descent on mean
//! cross-entropy, with the batch order drawn from a seeded ChaCha stream so
//! that identical inputs and seeds give bitwise-identical weights.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, DISCRIMINATORS};

const MAGIC: &[u8; 8] = b"ENTRICLF";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// One dense layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    layer_sizes: Vec<usize>,
    activation: Activation,
    seed: u64,
    layers: Vec<Dense>,
    trained: bool,
}

/// Gradient of the loss with the same layout as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
    /// L2 penalty on weights (not biases), applied in the update step.
    #[serde(default)]
    pub weight_decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the full training set before the first update.
    pub initial_loss: f64,
    /// Mean of the mini-batch losses seen during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean loss over the full training set after the last update.
    pub final_loss: f64,
    pub final_accuracy: f64,
}

impl Classifier {
    /// He-scaled normal initialization, zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::config(
                DISCRIMINATORS,
                format!("layer sizes {layer_sizes:?} need an input and an output width, all non-zero"),
            ));
        }
        if *layer_sizes.last().unwrap() < 2 {
            return Err(Error::config(DISCRIMINATORS, "a softmax classifier needs at least two classes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("finite std");
                Dense {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs).map(|_| normal.sample(&mut rng)).collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation: Activation::Tanh,
            seed,
            layers,
            trained: false,
        })
    }

    /// Builds a classifier from explicit parameters.
    pub fn from_layers(layers: Vec<Dense>, seed: u64, trained: bool) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::config(DISCRIMINATORS, "classifier needs at least one layer"))?;
        let mut layer_sizes = vec![first.inputs];
        for (i, l) in layers.iter().enumerate() {
            if l.inputs != *layer_sizes.last().unwrap()
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
            {
                return Err(Error::shape(DISCRIMINATORS, format!("layer {i} parameters are inconsistent")));
            }
            layer_sizes.push(l.outputs);
        }
        Ok(Self { layer_sizes, activation: Activation::Tanh, seed, layers, trained })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::shape(
                DISCRIMINATORS,
                format!("{} parameters for a model with {}", params.len(), self.parameter_count()),
            ));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::shape(
                DISCRIMINATORS,
                format!("input of width {} for a classifier expecting {}", x.len(), self.input_width()),
            ));
        }
        Ok(())
    }

    /// Activations of every layer, input first, softmax output last.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut z = l.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                *zo += row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
            }
            if li == last {
                softmax_in_place(&mut z);
            } else {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities, regardless of training state.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(self.activations(x).pop().unwrap())
    }

    /// Class probabilities from a trained model.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::untrained(
                DISCRIMINATORS,
                format!("classifier {:?} (seed {}) has not been trained", self.layer_sizes, self.seed),
            ));
        }
        self.forward(x)
    }

    /// Mean cross-entropy over the given samples and its gradient.
    pub fn loss_and_gradient(&self, inputs: &[&[f64]], labels: &[usize]) -> Result<(f64, Gradient)> {
        let mut grad = Gradient {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        };
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            self.check_width(x)?;
            let acts = self.activations(x);
            let probs = acts.last().unwrap();
            loss += nll(probs[y]);
            // dL/dz at the output layer
            let mut delta: Vec<f64> = probs.clone();
            delta[y] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                let input = &acts[li];
                let gw = &mut grad.weights[li];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (g, a) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(input) {
                        *g += d * a;
                    }
                    grad.bias[li][o] += d;
                }
                if li > 0 {
                    let mut prev = vec![0.0; l.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        *p *= self.activation.derivative_from_output(*a);
                    }
                    delta = prev;
                }
            }
        }
        let n = inputs.len().max(1) as f64;
        for g in grad.weights.iter_mut().chain(grad.bias.iter_mut()) {
            for v in g.iter_mut() {
                *v /= n;
            }
        }
        Ok((loss / n, grad))
    }

    pub fn mean_loss(&self, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            loss += nll(self.forward(x)?[y]);
        }
        Ok(loss / inputs.len().max(1) as f64)
    }

    fn apply_gradient(&mut self, grad: &Gradient, lr: f64, decay: f64) {
        for (li, l) in self.layers.iter_mut().enumerate() {
            for (w, g) in l.weights.iter_mut().zip(&grad.weights[li]) {
                *w -= lr * (g + decay * *w);
            }
            for (b, g) in l.bias.iter_mut().zip(&grad.bias[li]) {
                *b -= lr * g;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.parameter_count());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Header: magic, version, activation tag, trained flag, seed, layer
    /// count and widths. Body: every layer's weights (row-major) then biases,
    /// as little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.activation.tag(), self.trained as u8])?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &s in &self.layer_sizes {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: &str| Error::data(DISCRIMINATORS, format!("checkpoint: {msg}"));
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| bad(&e.to_string()))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = cur.u32().ok_or_else(|| bad("truncated header"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let flags = cur.take(2).ok_or_else(|| bad("truncated header"))?;
        let activation = Activation::from_tag(flags[0]).ok_or_else(|| bad("unknown activation tag"))?;
        let trained = flags[1] != 0;
        let seed = cur.u64().ok_or_else(|| bad("truncated header"))?;
        let n = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        if !(2..=64).contains(&n) {
            return Err(bad("implausible layer count"));
        }
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            sizes.push(cur.u64().ok_or_else(|| bad("truncated header"))? as usize);
        }
        let mut layers = Vec::with_capacity(n - 1);
        for w in sizes.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let mut read = |k: usize| -> Result<Vec<f64>> {
                (0..k).map(|_| cur.f64().ok_or_else(|| bad("truncated parameters"))).collect()
            };
            let weights = read(inputs * outputs)?;
            let bias = read(outputs)?;
            layers.push(Dense { inputs, outputs, weights, bias });
        }
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { layer_sizes: sizes, activation, seed, layers, trained })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&bytes[..]).map_err(|e| Error::data(DISCRIMINATORS, format!("{}: {e}", path.display())))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Negative log-likelihood, floored away from infinity; NaN propagates.
fn nll(p: f64) -> f64 {
    if p.is_nan() {
        return p;
    }
    -p.max(f64::MIN_POSITIVE).ln()
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Trains `model` in place of a copy and returns it with a loss report.
pub fn train_classifier(
    model: Classifier,
    inputs: &[Vec<f64>],
    labels: &[usize],
    params: &TrainParams,
) -> Result<(Classifier, TrainReport)> {
    if inputs.is_empty() {
        return Err(Error::data(DISCRIMINATORS, "cannot train on an empty dataset"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::shape(
            DISCRIMINATORS,
            format!("{} inputs but {} labels", inputs.len(), labels.len()),
        ));
    }
    if let Some(x) = inputs.iter().find(|x| x.len() != model.input_width()) {
        return Err(Error::shape(
            DISCRIMINATORS,
            format!("training input of width {} for a classifier expecting {}", x.len(), model.input_width()),
        ));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.output_width()) {
        return Err(Error::data(
            DISCRIMINATORS,
            format!("label {y} outside {} classes", model.output_width()),
        ));
    }
    if params.batch_size == 0 {
        return Err(Error::config(DISCRIMINATORS, "batch size must be positive"));
    }
    if !params.learning_rate.is_finite() || params.learning_rate < 0.0 {
        return Err(Error::config(DISCRIMINATORS, "learning rate must be finite and non-negative"));
    }
    if !params.weight_decay.is_finite() || params.weight_decay < 0.0 {
        return Err(Error::config(DISCRIMINATORS, "weight decay must be finite and non-negative"));
    }

    let mut model = model;
    let initial_loss = model.mean_loss(inputs, labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(params.batch_size).enumerate() {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&xs, &ys)?;
            if !loss.is_finite() {
                return Err(Error::numeric(
                    DISCRIMINATORS,
                    format!(
                        "loss became {loss} at epoch {epoch}, batch {bi} (learning rate {})",
                        params.learning_rate
                    ),
                ));
            }
            model.apply_gradient(&grad, params.learning_rate, params.weight_decay);
            total += loss;
            batches += 1;
        }
        epoch_losses.push(total / batches as f64);
    }
    let final_loss = model.mean_loss(inputs, labels)?;
    if !final_loss.is_finite() {
        return Err(Error::numeric(DISCRIMINATORS, format!("final training loss is {final_loss}")));
    }
    let mut correct = 0;
    for (x, &y) in inputs.iter().zip(labels) {
        if argmax(&model.forward(x)?) == y {
            correct += 1;
        }
    }
    model.trained = true;
    Ok((
        model,
        TrainReport {
            initial_loss,
            epoch_losses,
            final_loss,
            final_accuracy: correct as f64 / inputs.len() as f64,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(epochs: usize, lr: f64) -> TrainParams {
        TrainParams { epochs, batch_size: 8, learning_rate: lr, rng_seed: 11, weight_decay: 0.0 }
    }

    /// Two Gaussian-free blobs on a lattice, separable by x + y = 0.
    fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let (dx, dy) = (i as f64 * 0.1 - 0.45, j as f64 * 0.1 - 0.45);
                xs.push(vec![1.0 + dx, 1.0 + dy]);
                ys.push(0);
                xs.push(vec![-1.0 + dx, -1.0 + dy]);
                ys.push(1);
            }
        }
        (xs, ys)
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (xs, ys) = blobs();
        // hand-fit boundary x + y = 0 separates the data
        assert!(xs.iter().zip(&ys).all(|(x, &y)| (x[0] + x[1] > 0.0) == (y == 0)));
        let model = Classifier::new(&[2, 8, 2], 3).unwrap();
        let (trained, report) = train_classifier(model, &xs, &ys, &params(200, 0.1)).unwrap();
        assert!(report.final_accuracy >= 0.99);
        assert!(report.final_loss <= report.initial_loss);
        assert!(trained.is_trained());
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let (xs, ys) = blobs();
        let model = Classifier::new(&[2, 4, 2], 5).unwrap();
        let (trained, _) = train_classifier(model.clone(), &xs, &ys, &params(5, 0.0)).unwrap();
        assert_eq!(trained.parameters(), model.parameters());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let (xs, ys) = blobs();
        let run = || train_classifier(Classifier::new(&[2, 6, 3, 2], 9).unwrap(), &xs, &ys, &params(20, 0.05)).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        let bits = |c: &Classifier| c.parameters().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(ra, rb);
    }

    #[test]
    fn training_errors() {
        let model = Classifier::new(&[2, 2], 0).unwrap();
        assert!(matches!(train_classifier(model.clone(), &[], &[], &params(1, 0.1)), Err(Error::Data { .. })));
        assert!(matches!(
            train_classifier(model.clone(), &[vec![1.0]], &[0], &params(1, 0.1)),
            Err(Error::Shape { .. })
        ));
        assert!(train_classifier(model.clone(), &[vec![1.0, 0.0]], &[2], &params(1, 0.1)).is_err());
        let poisoned = vec![vec![f64::NAN, 0.0], vec![0.0, 1.0]];
        let err = train_classifier(model, &poisoned, &[1, 0], &params(3, 0.1)).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }), "{err}");
    }

    /// Central differences over every parameter; returns the worst relative error.
    fn max_gradient_error(sizes: &[usize], seed: u64, points: usize) -> f64 {
        let model = Classifier::new(sizes, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        let unit = rand_distr::Uniform::new(-1.0, 1.0).unwrap();
        let n_out = *sizes.last().unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..points {
            let x: Vec<f64> = (0..sizes[0]).map(|_| unit.sample(&mut rng)).collect();
            let y = p % n_out;
            let (_, grad) = model.loss_and_gradient(&[&x], &[y]).unwrap();
            let analytic: Vec<f64> = grad
                .weights
                .iter()
                .zip(&grad.bias)
                .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
                .collect();
            let base = model.parameters();
            let h = 1e-5;
            for (i, a) in analytic.iter().enumerate() {
                let mut probe = model.clone();
                let mut theta = base.clone();
                theta[i] = base[i] + h;
                probe.set_parameters(&theta).unwrap();
                let up = probe.loss_and_gradient(&[&x], &[y]).unwrap().0;
                theta[i] = base[i] - h;
                probe.set_parameters(&theta).unwrap();
                let down = probe.loss_and_gradient(&[&x], &[y]).unwrap().0;
                let numeric = (up - down) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        assert!(max_gradient_error(&[3, 4, 2], 7, 10) < 1e-4);
    }

    #[test]
    fn gradient_matches_across_architectures() {
        for sizes in [vec![2, 2], vec![5, 3], vec![4, 6, 3], vec![3, 5, 4, 2], vec![6, 8, 8, 5]] {
            let err = max_gradient_error(&sizes, 13, 4);
            assert!(err < 1e-4, "{sizes:?}: {err}");
        }
    }

    #[test]
    fn untrained_models_refuse_prediction() {
        let model = Classifier::new(&[3, 2], 0).unwrap();
        assert!(matches!(model.predict_proba(&[0.0; 3]), Err(Error::Untrained { .. })));
        assert!(model.forward(&[0.0; 3]).is_ok());
        assert!(matches!(model.forward(&[0.0; 2]), Err(Error::Shape { .. })));
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let model = Classifier::new(&[3, 4, 2], 1).unwrap();
        let bytes = model.to_bytes();
        assert!(Classifier::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Classifier::read_from(&bad[..]).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Classifier::read_from(&long[..]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }

    proptest! {
        #[test]
        fn outputs_are_distributions(seed in any::<u64>(), x in proptest::collection::vec(-50.0f64..50.0, 5)) {
            let model = Classifier::new(&[5, 7, 4], seed).unwrap();
            let p = model.forward(&x).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..6, trained in any::<bool>()) {
            let mut model = Classifier::new(&[4, hidden, 3], seed).unwrap();
            model.trained = trained;
            let back = Classifier::read_from(&model.to_bytes()[..]).unwrap();
            prop_assert_eq!(back.to_bytes(), model.to_bytes());
            prop_assert_eq!(back, model);
        }
    }
}
