//! Dense feed-forward networks.
//!
//! Layer `i` maps `layer_dims[i]` inputs to `layer_dims[i+1]` outputs through a
//! weight matrix of shape `(out, in)`. Hidden layers optionally divide their
//! pre-activation by its Euclidean norm before the activation; with biases off
//! and a frozen readout this makes the network function invariant to scaling
//! the trainable weights.

mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{load_checkpoint, save_checkpoint, save_checkpoint_json, save_checkpoint_tagged};

use crate::datakit::{Dataset, Permutation};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Rng};
use crate::util::json_hash;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    fn slope(self, v: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(v > 0.0)),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layer_dims: Vec<usize>,
    /// One entry per hidden layer.
    pub activation: Vec<Activation>,
    pub normalize_hidden: bool,
    pub frozen_readout: bool,
    pub bias_enabled: bool,
}

impl NetSpec {
    /// Plain ReLU network.
    pub fn relu(layer_dims: &[usize], bias_enabled: bool) -> Self {
        NetSpec {
            layer_dims: layer_dims.to_vec(),
            activation: vec![Activation::Relu; layer_dims.len().saturating_sub(2)],
            normalize_hidden: false,
            frozen_readout: false,
            bias_enabled,
        }
    }

    /// ReLU network with normalized hidden layers, no biases and a frozen
    /// readout.
    pub fn scale_invariant(layer_dims: &[usize]) -> Self {
        NetSpec {
            normalize_hidden: true,
            frozen_readout: true,
            ..NetSpec::relu(layer_dims, false)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::InvalidSpec("need at least one layer".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::InvalidSpec("layer dims must be positive".into()));
        }
        if self.activation.len() != self.num_layers() - 1 {
            return Err(Error::InvalidSpec(format!(
                "{} activations for {} hidden layers",
                self.activation.len(),
                self.num_layers() - 1
            )));
        }
        if self.normalize_hidden && (self.bias_enabled || !self.frozen_readout) {
            return Err(Error::InvalidSpec(
                "normalized hidden layers require no biases and a frozen readout".into(),
            ));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated spec")
    }

    /// `(rows, cols)` of layer `i`.
    pub fn shape(&self, i: usize) -> (usize, usize) {
        (self.layer_dims[i + 1], self.layer_dims[i])
    }

    /// Indices of layers whose parameters are trained.
    pub fn trainable_layers(&self) -> std::ops::Range<usize> {
        0..self.num_layers() - usize::from(self.frozen_readout)
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable_layers()
            .map(|i| {
                let (r, c) = self.shape(i);
                r * c + if self.bias_enabled { r } else { 0 }
            })
            .sum()
    }

    pub fn hash(&self) -> String {
        json_hash(self, 16)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec_hash: String,
    pub run_id: String,
    pub epoch: usize,
}

/// Weights, biases and the initialization they started from.
///
/// `biases` is empty when the spec has biases disabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub init_weights: Vec<Matrix>,
    pub init_biases: Vec<Vec<f64>>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// He-normal initialization (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init(spec: &NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::derive(seed, &[rng::tag("init")]);
        let weights: Vec<Matrix> = (0..spec.num_layers())
            .map(|i| {
                let (r, c) = spec.shape(i);
                let std = (2.0 / c as f64).sqrt();
                Matrix::from_vec(r, c, (0..r * c).map(|_| std * rng.normal()).collect())
            })
            .collect();
        let biases = if spec.bias_enabled {
            (0..spec.num_layers()).map(|i| vec![0.0; spec.shape(i).0]).collect()
        } else {
            Vec::new()
        };
        Checkpoint::from_parts(spec, weights, biases)
    }

    /// Checkpoint whose initialization snapshot equals the given weights.
    pub fn from_parts(spec: &NetSpec, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let ck = Checkpoint {
            init_weights: weights.clone(),
            init_biases: biases.clone(),
            weights,
            biases,
            meta: CheckpointMeta {
                spec_hash: spec.hash(),
                ..CheckpointMeta::default()
            },
        };
        ck.check(spec)?;
        Ok(ck)
    }

    pub fn check(&self, spec: &NetSpec) -> Result<()> {
        spec.validate()?;
        let l = spec.num_layers();
        if self.weights.len() != l || self.init_weights.len() != l {
            return Err(Error::ShapeMismatch(format!(
                "{} layers in spec, {} weight / {} init matrices",
                l,
                self.weights.len(),
                self.init_weights.len()
            )));
        }
        for i in 0..l {
            let s = spec.shape(i);
            if self.weights[i].shape() != s || self.init_weights[i].shape() != s {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: expected {s:?}, got {:?} / init {:?}",
                    self.weights[i].shape(),
                    self.init_weights[i].shape()
                )));
            }
        }
        let bias_layers = if spec.bias_enabled { l } else { 0 };
        for b in [&self.biases, &self.init_biases] {
            if b.len() != bias_layers
                || b.iter().enumerate().any(|(i, v)| v.len() != spec.shape(i).0)
            {
                return Err(Error::ShapeMismatch("bias shapes do not match spec".into()));
            }
        }
        Ok(())
    }

    /// All weight matrices flattened (layers, rows, columns), then biases.
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases, 0..self.weights.len())
    }

    pub fn flat_init(&self) -> Vec<f64> {
        flatten(&self.init_weights, &self.init_biases, 0..self.weights.len())
    }

    /// Trainable parameters only, in flatten order.
    pub fn trainable(&self, spec: &NetSpec) -> Vec<f64> {
        flatten(&self.weights, &self.biases, spec.trainable_layers())
    }

    pub fn trainable_init(&self, spec: &NetSpec) -> Vec<f64> {
        flatten(&self.init_weights, &self.init_biases, spec.trainable_layers())
    }

    pub fn set_trainable(&mut self, spec: &NetSpec, theta: &[f64]) -> Result<()> {
        if theta.len() != spec.num_trainable() {
            return Err(Error::ShapeMismatch(format!(
                "{} trainable parameters, got {}",
                spec.num_trainable(),
                theta.len()
            )));
        }
        let mut off = 0;
        for i in spec.trainable_layers() {
            let w = &mut self.weights[i].data;
            let len = w.len();
            w.copy_from_slice(&theta[off..off + len]);
            off += len;
        }
        if spec.bias_enabled {
            for i in spec.trainable_layers() {
                let b = &mut self.biases[i];
                let len = b.len();
                b.copy_from_slice(&theta[off..off + len]);
                off += len;
            }
        }
        Ok(())
    }

    /// Copy with all trainable parameters multiplied by `c`.
    pub fn scaled_trainable(&self, spec: &NetSpec, c: f64) -> Result<Self> {
        let mut out = self.clone();
        let theta: Vec<f64> = self.trainable(spec).iter().map(|v| v * c).collect();
        out.set_trainable(spec, &theta)?;
        Ok(out)
    }

    /// Moves first-layer column `j` (current and initial) to `perm[j]`, so
    /// the network computes the same function on permuted inputs.
    pub fn permute_inputs(&self, perm: &Permutation) -> Result<Self> {
        let mut out = self.clone();
        out.weights[0] = perm.apply_to_columns(&self.weights[0])?;
        out.init_weights[0] = perm.apply_to_columns(&self.init_weights[0])?;
        Ok(out)
    }
}

fn flatten(weights: &[Matrix], biases: &[Vec<f64>], layers: std::ops::Range<usize>) -> Vec<f64> {
    let mut out: Vec<f64> = layers.clone().flat_map(|i| weights[i].data.iter().copied()).collect();
    if !biases.is_empty() {
        out.extend(layers.flat_map(|i| biases[i].iter().copied()));
    }
    out
}

fn affine(w: &Matrix, b: Option<&Vec<f64>>, x: &[f64]) -> Vec<f64> {
    let mut z = w.matvec(x);
    if let Some(b) = b {
        z.iter_mut().zip(b).for_each(|(zi, bi)| *zi += bi);
    }
    z
}

/// Logits of the network with explicit parameters (used for perturbed
/// weights).
pub fn forward_with(
    spec: &NetSpec,
    weights: &[Matrix],
    biases: &[Vec<f64>],
    x: &[f64],
) -> Result<Vec<f64>> {
    if x.len() != spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input of length {}, network expects {}",
            x.len(),
            spec.input_dim()
        )));
    }
    let last = spec.num_layers() - 1;
    let mut h = x.to_vec();
    for (i, w) in weights.iter().enumerate() {
        let mut z = affine(w, biases.get(i), &h);
        if i == last {
            return Ok(z);
        }
        if spec.normalize_hidden {
            let r = crate::linalg::norm(&z);
            if r == 0.0 {
                return Err(Error::NormalizationSingularity { layer: i });
            }
            z.iter_mut().for_each(|v| *v /= r);
        }
        let act = spec.activation[i];
        z.iter_mut().for_each(|v| *v = act.apply(*v));
        h = z;
    }
    unreachable!("network has at least one layer")
}

pub fn forward(spec: &NetSpec, ckpt: &Checkpoint, x: &[f64]) -> Result<Vec<f64>> {
    forward_with(spec, &ckpt.weights, &ckpt.biases, x)
}

/// Numerically stable `log(sum(exp(z)))`.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

pub fn argmax(v: &[f64]) -> usize {
    // first maximum wins
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Mean cross-entropy over a batch and its gradient with respect to the
/// trainable parameters, in [`Checkpoint::trainable`] order.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

struct Tape {
    inputs: Vec<Vec<f64>>,
    units: Vec<Vec<f64>>,
    norms: Vec<f64>,
    logits: Vec<f64>,
}

fn record(spec: &NetSpec, ckpt: &Checkpoint, x: &[f64]) -> Result<Tape> {
    let last = spec.num_layers() - 1;
    let mut tape = Tape {
        inputs: Vec::with_capacity(last + 1),
        units: Vec::with_capacity(last),
        norms: Vec::with_capacity(last),
        logits: Vec::new(),
    };
    let mut h = x.to_vec();
    for (i, w) in ckpt.weights.iter().enumerate() {
        let mut z = affine(w, ckpt.biases.get(i), &h);
        tape.inputs.push(h);
        if i == last {
            tape.logits = z;
            break;
        }
        let mut r = 1.0;
        if spec.normalize_hidden {
            r = crate::linalg::norm(&z);
            if r == 0.0 {
                return Err(Error::NormalizationSingularity { layer: i });
            }
            z.iter_mut().for_each(|v| *v /= r);
        }
        let act = spec.activation[i];
        h = z.iter().map(|&v| act.apply(v)).collect();
        tape.units.push(z);
        tape.norms.push(r);
    }
    Ok(tape)
}

/// Accumulates `scale * dL/dθ` of one example into per-layer buffers.
fn accumulate(
    spec: &NetSpec,
    ckpt: &Checkpoint,
    tape: &Tape,
    label: usize,
    scale: f64,
    gw: &mut [Matrix],
    gb: &mut [Vec<f64>],
) {
    let lse = log_sum_exp(&tape.logits);
    let mut dz: Vec<f64> = tape.logits.iter().map(|v| (v - lse).exp() * scale).collect();
    dz[label] -= scale;
    let trainable = spec.trainable_layers();
    for i in (0..spec.num_layers()).rev() {
        if trainable.contains(&i) {
            let g = &mut gw[i];
            let input = &tape.inputs[i];
            for (r, &d) in dz.iter().enumerate() {
                if d != 0.0 {
                    let row = &mut g.data[r * g.cols..(r + 1) * g.cols];
                    row.iter_mut().zip(input).for_each(|(gi, xi)| *gi += d * xi);
                }
            }
            if spec.bias_enabled {
                gb[i].iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
            }
        }
        if i == 0 {
            break;
        }
        // back through layer i-1's activation and normalization
        let da = ckpt.weights[i].matvec_t(&dz);
        let u = &tape.units[i - 1];
        let act = spec.activation[i - 1];
        let du: Vec<f64> = da.iter().zip(u).map(|(d, &v)| d * act.slope(v)).collect();
        dz = if spec.normalize_hidden {
            let r = tape.norms[i - 1];
            let proj = crate::linalg::dot(u, &du);
            du.iter().zip(u).map(|(d, v)| (d - v * proj) / r).collect()
        } else {
            du
        };
    }
}

const CHUNK: usize = 32;

pub fn backward(spec: &NetSpec, ckpt: &Checkpoint, data: &Dataset, batch: &[usize]) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::InvalidDataset("empty batch".into()));
    }
    if data.dim() != spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset dim {} vs network input {}",
            data.dim(),
            spec.input_dim()
        )));
    }
    if let Some(&i) = batch.iter().find(|&&i| data.labels[i] >= spec.output_dim()) {
        return Err(Error::InvalidDataset(format!(
            "label {} exceeds {} outputs",
            data.labels[i],
            spec.output_dim()
        )));
    }
    let scale = 1.0 / batch.len() as f64;
    let zeros_w: Vec<Matrix> = (0..spec.num_layers())
        .map(|i| {
            let (r, c) = if spec.trainable_layers().contains(&i) { spec.shape(i) } else { (0, 0) };
            Matrix::zeros(r, c)
        })
        .collect();
    let zeros_b: Vec<Vec<f64>> = if spec.bias_enabled {
        (0..spec.num_layers()).map(|i| vec![0.0; spec.shape(i).0]).collect()
    } else {
        Vec::new()
    };
    // fixed chunking + ordered reduction keeps the result independent of the
    // thread count
    let partials: Vec<Result<(f64, Vec<Matrix>, Vec<Vec<f64>>)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (mut gw, mut gb) = (zeros_w.clone(), zeros_b.clone());
            let mut loss = 0.0;
            for &i in chunk {
                let tape = record(spec, ckpt, data.input(i))?;
                loss += cross_entropy(&tape.logits, data.labels[i]);
                accumulate(spec, ckpt, &tape, data.labels[i], scale, &mut gw, &mut gb);
            }
            Ok((loss, gw, gb))
        })
        .collect();
    let (mut loss, mut gw, mut gb) = (0.0, zeros_w, zeros_b);
    for p in partials {
        let (l, w, b) = p?;
        loss += l;
        for (acc, part) in gw.iter_mut().zip(&w) {
            acc.data.iter_mut().zip(&part.data).for_each(|(a, v)| *a += v);
        }
        for (acc, part) in gb.iter_mut().zip(&b) {
            acc.iter_mut().zip(part).for_each(|(a, v)| *a += v);
        }
    }
    Ok(Gradient {
        loss: loss * scale,
        grad: flatten(&gw, &gb, spec.trainable_layers()),
    })
}

/// Accuracy and mean cross-entropy of a checkpoint on a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub cross_entropy: f64,
}

impl Evaluation {
    pub fn error(&self) -> f64 {
        1.0 - self.accuracy
    }
}

pub fn all_logits(spec: &NetSpec, weights: &[Matrix], biases: &[Vec<f64>], data: &Dataset) -> Result<Vec<Vec<f64>>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| forward_with(spec, weights, biases, data.input(i)))
        .collect()
}

pub fn evaluate(spec: &NetSpec, ckpt: &Checkpoint, data: &Dataset) -> Result<Evaluation> {
    let logits = all_logits(spec, &ckpt.weights, &ckpt.biases, data)?;
    let n = data.len() as f64;
    let correct = logits
        .iter()
        .zip(&data.labels)
        .filter(|(z, &y)| argmax(z) == y)
        .count();
    let ce: f64 = logits.iter().zip(&data.labels).map(|(z, &y)| cross_entropy(z, y)).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        cross_entropy: ce / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub margins: Vec<f64>,
    pub margin_gamma: f64,
    pub n: usize,
}

pub const DEFAULT_MARGIN_PERCENTILE: f64 = 0.10;

/// Lower-interpolation percentile: ascending sort, index `floor(q (n - 1))`.
pub fn percentile_lower(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(q * (v.len() - 1) as f64).floor() as usize]
}

pub fn margin(logits: &[f64], label: usize) -> f64 {
    let other = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    logits[label] - other
}

pub fn margins(spec: &NetSpec, ckpt: &Checkpoint, data: &Dataset, percentile: f64) -> Result<MarginStats> {
    if data.classes_present() < 2 || spec.output_dim() < 2 {
        return Err(Error::InvalidDataset("margins need at least two classes".into()));
    }
    let logits = all_logits(spec, &ckpt.weights, &ckpt.biases, data)?;
    let margins: Vec<f64> = logits.iter().zip(&data.labels).map(|(z, &y)| margin(z, y)).collect();
    Ok(MarginStats {
        margin_gamma: percentile_lower(&margins, percentile),
        n: margins.len(),
        margins,
    })
}
