//! Softmax regression and a one-hidden-layer perceptron, trained with
//! minibatch SGD on mean cross-entropy.
//!
//! Pixels stay as bytes until a batch is formed, so a 60k-image set costs
//! 47 MB rather than 376 MB of floats.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canvas::PixelGrid;
use crate::generator::LabeledSet;
use crate::idx::{IdxImageSet, IdxLabelSet};
use crate::sampler::Rng;

pub const CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("label {0} is not a digit")]
    Label(u8),
    #[error("empty training set")]
    Empty,
    #[error("non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("weight images need a softmax model")]
    Unsupported,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Softmax,
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Softmax => "softmax",
            ModelKind::Mlp => "mlp",
        })
    }
}

/// Images as bytes, row-major, one image after another.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl Samples {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self, TrainError> {
        if rows * cols == 0 || pixels.len() != rows * cols * labels.len() {
            return Err(TrainError::Dimension(format!(
                "{} pixel bytes for {} images of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(TrainError::Label(l));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn from_labeled(set: &LabeledSet) -> Self {
        let pixels = set.images.iter().flat_map(|g| g.data().iter().copied()).collect();
        Self {
            rows: set.height,
            cols: set.width,
            pixels,
            labels: set.labels.clone(),
        }
    }

    pub fn from_idx(images: &IdxImageSet, labels: &IdxLabelSet) -> Result<Self, TrainError> {
        Self::new(
            images.rows as usize,
            images.cols as usize,
            images.pixels.clone(),
            labels.labels.clone(),
        )
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, indices: &[usize], scale: bool) -> Batch {
        let dim = self.dim();
        let k = if scale { 1.0 / 255.0 } else { 1.0 };
        let x = Array2::from_shape_fn((indices.len(), dim), |(i, j)| {
            self.pixels[indices[i] * dim + j] as f64 * k
        });
        Batch {
            x,
            y: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
}

/// Model weights. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub rows: usize,
    pub cols: usize,
    /// `input_dim x 10` for softmax, `input_dim x h` for the MLP.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Option<Array2<f64>>,
    pub b2: Option<Array1<f64>>,
}

impl ModelParams {
    pub fn softmax_zeros(rows: usize, cols: usize) -> Self {
        Self {
            kind: ModelKind::Softmax,
            rows,
            cols,
            w1: Array2::zeros((rows * cols, CLASSES)),
            b1: Array1::zeros(CLASSES),
            w2: None,
            b2: None,
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn mlp_random(rows: usize, cols: usize, hidden: usize, rng: &mut Rng) -> Self {
        let dim = rows * cols;
        let mut uniform = |fan_in: usize, shape: (usize, usize)| {
            let r = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn(shape, || (2.0 * rng.unit() - 1.0) * r)
        };
        let w1 = uniform(dim, (dim, hidden));
        let w2 = uniform(hidden, (hidden, CLASSES));
        Self {
            kind: ModelKind::Mlp,
            rows,
            cols,
            w1,
            b1: Array1::zeros(hidden),
            w2: Some(w2),
            b2: Some(Array1::zeros(CLASSES)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn hidden(&self) -> usize {
        match self.kind {
            ModelKind::Softmax => 0,
            ModelKind::Mlp => self.w1.ncols(),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            rows: self.rows,
            cols: self.cols,
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: self.w2.as_ref().map(|w| Array2::zeros(w.raw_dim())),
            b2: self.b2.as_ref().map(|b| Array1::zeros(b.raw_dim())),
        }
    }

    /// Every parameter, in checkpoint order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter().flat_map(|w| w.iter()))
            .chain(self.b2.iter().flat_map(|b| b.iter()))
            .copied()
    }

    fn values_mut(&mut self) -> Vec<&mut f64> {
        let mut out: Vec<&mut f64> = self.w1.iter_mut().chain(self.b1.iter_mut()).collect();
        if let Some(w) = self.w2.as_mut() {
            out.extend(w.iter_mut());
        }
        if let Some(b) = self.b2.as_mut() {
            out.extend(b.iter_mut());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.values().count()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// `self -= lr * grad`.
    fn step(&mut self, grad: &ModelParams, lr: f64) {
        self.w1.scaled_add(-lr, &grad.w1);
        self.b1.scaled_add(-lr, &grad.b1);
        if let (Some(w), Some(g)) = (self.w2.as_mut(), grad.w2.as_ref()) {
            w.scaled_add(-lr, g);
        }
        if let (Some(b), Some(g)) = (self.b2.as_mut(), grad.b2.as_ref()) {
            b.scaled_add(-lr, g);
        }
    }

    /// Class scores for each row of `x`.
    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        match self.kind {
            ModelKind::Softmax => x.dot(&self.w1) + &self.b1,
            ModelKind::Mlp => {
                let a = (x.dot(&self.w1) + &self.b1).mapv(f64::tanh);
                a.dot(self.w2.as_ref().unwrap()) + self.b2.as_ref().unwrap()
            }
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<u8> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter().copied()) as u8)
            .collect()
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Row-wise softmax probabilities and the mean cross-entropy against `y`.
fn softmax_loss(logits: &Array2<f64>, y: &[u8]) -> (Array2<f64>, f64) {
    let mut p = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in p.rows_mut().into_iter().zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        loss += sum.ln() - row[label as usize].ln();
        row /= sum;
    }
    (p, loss / y.len() as f64)
}

/// Mean cross-entropy over `batch` and its gradient for every parameter.
pub fn loss_and_gradient(params: &ModelParams, batch: &Batch) -> (f64, ModelParams) {
    let n = batch.y.len() as f64;
    let mut grad = params.zeros_like();
    let (hidden, logits) = match params.kind {
        ModelKind::Softmax => (None, params.logits(&batch.x)),
        ModelKind::Mlp => {
            let a = (batch.x.dot(&params.w1) + &params.b1).mapv(f64::tanh);
            let logits = a.dot(params.w2.as_ref().unwrap()) + params.b2.as_ref().unwrap();
            (Some(a), logits)
        }
    };
    let (mut delta, loss) = softmax_loss(&logits, &batch.y);
    for (mut row, &label) in delta.rows_mut().into_iter().zip(&batch.y) {
        row[label as usize] -= 1.0;
    }
    delta /= n;
    match hidden {
        None => {
            grad.w1 = batch.x.t().dot(&delta);
            grad.b1 = delta.sum_axis(Axis(0));
        }
        Some(a) => {
            grad.w2 = Some(a.t().dot(&delta));
            grad.b2 = Some(delta.sum_axis(Axis(0)));
            let mut dz = delta.dot(&params.w2.as_ref().unwrap().t());
            dz.zip_mut_with(&a, |d, &a| *d *= 1.0 - a * a);
            grad.w1 = batch.x.t().dot(&dz);
            grad.b1 = dz.sum_axis(Axis(0));
        }
    }
    (loss, grad)
}

/// Largest relative difference between the analytic gradient and central
/// differences with step `eps`, over every parameter.
pub fn gradient_check(params: &ModelParams, batch: &Batch, eps: f64) -> f64 {
    let (_, analytic) = loss_and_gradient(params, batch);
    let analytic: Vec<f64> = analytic.values().collect();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (k, &g) in analytic.iter().enumerate() {
        let orig = *probe.values_mut()[k];
        *probe.values_mut()[k] = orig + eps;
        let plus = loss_and_gradient(&probe, batch).0;
        *probe.values_mut()[k] = orig - eps;
        let minus = loss_and_gradient(&probe, batch).0;
        *probe.values_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let scale = g.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((g - numeric).abs() / scale);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Steps(usize),
    Epochs(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub budget: Budget,
    /// Hidden width; ignored for softmax.
    pub hidden: usize,
    pub seed: u64,
    /// Divide pixels by 255.
    pub scale: bool,
}

impl TrainConfig {
    pub fn softmax() -> Self {
        Self {
            kind: ModelKind::Softmax,
            learning_rate: 0.5,
            batch_size: 100,
            budget: Budget::Steps(1000),
            hidden: 0,
            seed: 0,
            scale: true,
        }
    }

    pub fn mlp() -> Self {
        Self {
            kind: ModelKind::Mlp,
            learning_rate: 0.1,
            batch_size: 100,
            budget: Budget::Epochs(10),
            hidden: 128,
            seed: 0,
            scale: true,
        }
    }

    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Softmax => Self::softmax(),
            ModelKind::Mlp => Self::mlp(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let budget = match self.budget {
            Budget::Steps(n) | Budget::Epochs(n) => n,
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || budget == 0 {
            return Err(TrainError::Config("batch size and budget must be positive".into()));
        }
        if self.kind == ModelKind::Mlp && self.hidden == 0 {
            return Err(TrainError::Config("hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; CLASSES]; CLASSES],
    /// Mean minibatch loss of the last epoch; `None` for pure evaluation.
    pub final_loss: Option<f64>,
}

impl Metrics {
    pub fn from_predictions(predicted: &[u8], truth: &[u8]) -> Self {
        let mut confusion = [[0usize; CLASSES]; CLASSES];
        for (&p, &t) in predicted.iter().zip(truth) {
            confusion[t as usize][p as usize] += 1;
        }
        let correct: usize = (0..CLASSES).map(|c| confusion[c][c]).sum();
        let accuracy = if truth.is_empty() {
            0.0
        } else {
            correct as f64 / truth.len() as f64
        };
        Self {
            accuracy,
            confusion,
            final_loss: None,
        }
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy {:.4}", self.accuracy)?;
        if let Some(loss) = self.final_loss {
            writeln!(f, "final training loss {loss:.6}")?;
        }
        writeln!(f, "confusion (rows: truth, columns: predicted)")?;
        write!(f, "    ")?;
        for c in 0..CLASSES {
            write!(f, "{c:>6}")?;
        }
        writeln!(f)?;
        for (t, row) in self.confusion.iter().enumerate() {
            write!(f, "{t:>3} ")?;
            for v in row {
                write!(f, "{v:>6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean minibatch loss per (possibly partial) epoch.
    pub epoch_losses: Vec<f64>,
    pub metrics: Metrics,
}

/// Random stream for parameter initialisation; batches use the next one.
const STREAM_INIT: u64 = 1;
const STREAM_BATCHES: u64 = 2;

pub fn train_params(train: &Samples, config: &TrainConfig) -> Result<(ModelParams, Vec<f64>), TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut params = match config.kind {
        ModelKind::Softmax => ModelParams::softmax_zeros(train.rows, train.cols),
        ModelKind::Mlp => ModelParams::mlp_random(
            train.rows,
            train.cols,
            config.hidden,
            &mut Rng::new(config.seed, STREAM_INIT),
        ),
    };
    let mut rng = Rng::new(config.seed, STREAM_BATCHES);
    let n = train.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = match config.budget {
        Budget::Steps(s) => s,
        Budget::Epochs(e) => e * steps_per_epoch,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::new();
    let (mut sum, mut count) = (0.0, 0usize);
    let mut cursor = n;
    for _ in 0..total_steps {
        if cursor >= n {
            if count > 0 {
                losses.push(sum / count as f64);
                (sum, count) = (0.0, 0);
            }
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(n);
        let batch = train.batch(&order[cursor..end], config.scale);
        cursor = end;
        let (loss, grad) = loss_and_gradient(&params, &batch);
        if !loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch: losses.len(),
            });
        }
        sum += loss;
        count += 1;
        params.step(&grad, config.learning_rate);
    }
    if count > 0 {
        losses.push(sum / count as f64);
    }
    if !params.is_finite() {
        return Err(TrainError::Diverged {
            epoch: losses.len().saturating_sub(1),
        });
    }
    Ok((params, losses))
}

/// Trains on `train` and reports held-out metrics on `test`.
pub fn train(train: &Samples, test: &Samples, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    if (train.rows, train.cols) != (test.rows, test.cols) {
        return Err(TrainError::Dimension(format!(
            "train images are {}x{}, test images {}x{}",
            train.rows, train.cols, test.rows, test.cols
        )));
    }
    let (params, epoch_losses) = train_params(train, config)?;
    let mut metrics = evaluate(&params, test, config.scale)?;
    metrics.final_loss = epoch_losses.last().copied();
    Ok(TrainOutcome {
        params,
        epoch_losses,
        metrics,
    })
}

const EVAL_CHUNK: usize = 1000;

pub fn predict_all(params: &ModelParams, set: &Samples, scale: bool) -> Vec<u8> {
    let indices: Vec<usize> = (0..set.len()).collect();
    indices
        .par_chunks(EVAL_CHUNK)
        .flat_map_iter(|chunk| params.predict(&set.batch(chunk, scale).x))
        .collect()
}

pub fn evaluate(params: &ModelParams, test: &Samples, scale: bool) -> Result<Metrics, TrainError> {
    if params.input_dim() != test.dim() {
        return Err(TrainError::Dimension(format!(
            "model expects {} inputs, images have {}",
            params.input_dim(),
            test.dim()
        )));
    }
    Ok(Metrics::from_predictions(&predict_all(params, test, scale), &test.labels))
}

/// One grey image per class: weight 0 maps to 128 and the largest magnitude
/// over all classes to 1 or 255.
pub fn export_weight_images(params: &ModelParams) -> Result<Vec<PixelGrid>, TrainError> {
    if params.kind != ModelKind::Softmax {
        return Err(TrainError::Unsupported);
    }
    let max = params.w1.fold(0.0f64, |a, &w| a.max(w.abs()));
    Ok((0..CLASSES)
        .map(|c| {
            let data = params
                .w1
                .column(c)
                .iter()
                .map(|&w| {
                    if max == 0.0 {
                        128
                    } else {
                        (128.0 + 127.0 * w / max).round().clamp(0.0, 255.0) as u8
                    }
                })
                .collect();
            PixelGrid::from_raw(params.cols, params.rows, data).expect("weight column matches image size")
        })
        .collect())
}

const CHECKPOINT_MAGIC: &str = "smnist-model 1";

pub fn write_checkpoint(params: &ModelParams, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "kind {}", params.kind)?;
    writeln!(out, "rows {}", params.rows)?;
    writeln!(out, "cols {}", params.cols)?;
    writeln!(out, "hidden {}", params.hidden())?;
    writeln!(out, "end")?;
    for v in params.values() {
        out.write_all(&v.to_be_bytes())?;
    }
    out.flush()
}

pub fn read_checkpoint(mut input: impl BufRead) -> Result<ModelParams, TrainError> {
    let bad = |s: &str| TrainError::Checkpoint(s.to_string());
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Err(bad("header ends early"));
        }
        let line = line.trim_end().to_string();
        if line == "end" {
            break;
        }
        header.push(line);
        if header.len() > 16 {
            return Err(bad("header too long"));
        }
    }
    if header.first().map(String::as_str) != Some(CHECKPOINT_MAGIC) {
        return Err(bad("missing magic line"));
    }
    let field = |name: &str| -> Result<&str, TrainError> {
        header
            .iter()
            .find_map(|l| l.strip_prefix(name).and_then(|r| r.strip_prefix(' ')))
            .ok_or_else(|| bad(&format!("missing {name}")))
    };
    let number = |name: &str| -> Result<usize, TrainError> {
        field(name)?.parse().map_err(|_| bad(&format!("bad {name}")))
    };
    let (rows, cols, hidden) = (number("rows")?, number("cols")?, number("hidden")?);
    let mut params = match field("kind")? {
        "softmax" => ModelParams::softmax_zeros(rows, cols),
        "mlp" if hidden > 0 => {
            let mut p = ModelParams::mlp_random(rows, cols, hidden, &mut Rng::new(0, 0));
            for v in p.values_mut() {
                *v = 0.0;
            }
            p
        }
        other => return Err(bad(&format!("unknown kind {other:?}"))),
    };
    let mut buf = [0u8; 8];
    for v in params.values_mut() {
        input
            .read_exact(&mut buf)
            .map_err(|_| bad("truncated parameters"))?;
        *v = f64::from_be_bytes(buf);
    }
    if input.read(&mut buf)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), TrainError> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(params, io::BufWriter::new(file))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, TrainError> {
    read_checkpoint(io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_samples(n: usize, rows: usize, cols: usize, seed: u64) -> Samples {
        let mut rng = Rng::new(seed, 0);
        let pixels = (0..n * rows * cols).map(|_| rng.uniform_index(256) as u8).collect();
        let labels = (0..n).map(|_| rng.uniform_index(10) as u8).collect();
        Samples::new(rows, cols, pixels, labels).unwrap()
    }

    fn perturbed_softmax(rows: usize, cols: usize) -> ModelParams {
        let mut p = ModelParams::softmax_zeros(rows, cols);
        let mut rng = Rng::new(5, 5);
        for v in p.values_mut() {
            *v = rng.unit() - 0.5;
        }
        p
    }

    #[test]
    fn zero_softmax_loss_is_ln10() {
        let s = random_samples(7, 3, 4, 1);
        let batch = s.batch(&[0, 1, 2, 3, 4, 5, 6], true);
        let (loss, _) = loss_and_gradient(&ModelParams::softmax_zeros(3, 4), &batch);
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let s = random_samples(5, 3, 4, 2);
        let batch = s.batch(&[0, 1, 2, 3, 4], true);
        assert!(gradient_check(&perturbed_softmax(3, 4), &batch, 1e-4) < 1e-4);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let s = random_samples(5, 3, 4, 3);
        let batch = s.batch(&[0, 1, 2, 3, 4], true);
        let p = ModelParams::mlp_random(3, 4, 6, &mut Rng::new(9, 0));
        assert!(gradient_check(&p, &batch, 1e-4) < 1e-4);
    }

    #[test]
    fn duplicated_batch_has_the_same_loss() {
        let s = random_samples(4, 2, 3, 4);
        let p = perturbed_softmax(2, 3);
        let once = loss_and_gradient(&p, &s.batch(&[0, 1, 2, 3], true)).0;
        let twice = loss_and_gradient(&p, &s.batch(&[0, 1, 2, 3, 0, 1, 2, 3], true)).0;
        assert!((once - twice).abs() < 1e-12);
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let truth = [0u8, 0, 1, 2, 2, 2];
        let m = Metrics::from_predictions(&[0, 1, 1, 2, 0, 2], &truth);
        assert_eq!(m.confusion[0].iter().sum::<usize>(), 2);
        assert_eq!(m.confusion[2].iter().sum::<usize>(), 3);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(Metrics::from_predictions(&truth, &truth).accuracy, 1.0);
    }

    #[test]
    fn random_predictor_scores_a_tenth() {
        // 10^5 balanced labels: the binomial standard error is under 0.001.
        let mut rng = Rng::new(11, 0);
        let truth: Vec<u8> = (0..100_000).map(|i| (i % 10) as u8).collect();
        let guess: Vec<u8> = truth.iter().map(|_| rng.uniform_index(10) as u8).collect();
        assert!((Metrics::from_predictions(&guess, &truth).accuracy - 0.1).abs() < 0.01);
    }

    #[test]
    fn zero_weights_export_mid_grey() {
        let images = export_weight_images(&ModelParams::softmax_zeros(4, 6)).unwrap();
        assert_eq!(images.len(), 10);
        assert!(images.iter().all(|g| (g.height(), g.width()) == (4, 6)));
        assert!(images.iter().all(|g| g.data().iter().all(|&v| v == 128)));
        let mlp = ModelParams::mlp_random(2, 2, 3, &mut Rng::new(0, 0));
        assert!(matches!(export_weight_images(&mlp), Err(TrainError::Unsupported)));
    }

    #[test]
    fn checkpoint_round_trip() {
        for p in [
            perturbed_softmax(3, 5),
            ModelParams::mlp_random(2, 3, 4, &mut Rng::new(1, 1)),
        ] {
            let mut bytes = Vec::new();
            write_checkpoint(&p, &mut bytes).unwrap();
            assert_eq!(read_checkpoint(bytes.as_slice()).unwrap(), p);
            bytes.push(0);
            assert!(read_checkpoint(bytes.as_slice()).is_err());
            bytes.truncate(bytes.len() - 9);
            assert!(read_checkpoint(bytes.as_slice()).is_err());
        }
    }

    #[test]
    fn separable_data_is_learned() {
        // label = row of the single lit pixel
        let (rows, cols) = (10, 3);
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for k in 0..600 {
            let label = k % 10;
            let mut img = vec![0u8; rows * cols];
            img[label * cols + (k / 10) % cols] = 255;
            pixels.extend(img);
            labels.push(label as u8);
        }
        let s = Samples::new(rows, cols, pixels, labels).unwrap();
        for config in [TrainConfig::softmax(), TrainConfig::mlp()] {
            let out = train(&s, &s, &config).unwrap();
            assert_eq!(out.metrics.accuracy, 1.0, "{}", config.kind);
            assert!(out.epoch_losses.windows(2).all(|w| w[1] <= w[0] + 1e-3));
        }
    }

    #[test]
    fn unscaled_pixels_diverge_with_epoch() {
        let s = random_samples(200, 8, 8, 6);
        let config = TrainConfig {
            scale: false,
            learning_rate: 1e6,
            budget: Budget::Epochs(50),
            ..TrainConfig::softmax()
        };
        assert!(matches!(train_params(&s, &config), Err(TrainError::Diverged { .. })));
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let s = random_samples(300, 4, 4, 7);
        let c = TrainConfig {
            budget: Budget::Epochs(2),
            hidden: 8,
            ..TrainConfig::mlp()
        }
        .with_seed(3);
        assert_eq!(train_params(&s, &c).unwrap(), train_params(&s, &c).unwrap());
        assert!(Samples::new(2, 2, vec![0; 7], vec![1, 2]).is_err());
        assert!(matches!(Samples::new(1, 1, vec![0], vec![10]), Err(TrainError::Label(10))));
    }
}
