//! Training: SGD with momentum and weight decay in the explicit-buffer form,
//! Adam, stopping rules, traces, and resuming from a checkpoint.
//!
//! The momentum update is kept in the form
//!
//! ```text
//! (θ_t − θ_{t−1}) / η_{t−1} = γ (θ_{t−1} − θ_{t−2}) / η_{t−2} − ∇L(θ_{t−1}) − λ_{t−1} θ_{t−1}
//! ```
//!
//! with the learning-rate buffer `η_{t−2}` carried in the state, so that
//! time-varying schedules (and their initial-buffer overrides) are applied
//! exactly rather than through a velocity variable.

mod record;
mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use record::{read_records, write_records, RunRecord, RunStatus};
pub use sweep::{sweep, SweepGrid, SweepRun};

use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::netcore::{self, Checkpoint, NetSpec};
use crate::rng::{self, Rng};
use crate::util::json_hash;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgdm,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// First epoch with 100% training accuracy.
    #[serde(rename = "train_acc_100")]
    TrainAcc100,
    /// First epoch with training cross-entropy below `ce_threshold`.
    TrainCeBelow,
    MaxEpochs,
}

impl StopRule {
    pub fn as_str(self) -> &'static str {
        match self {
            StopRule::TrainAcc100 => "train_acc_100",
            StopRule::TrainCeBelow => "train_ce_below",
            StopRule::MaxEpochs => "max_epochs",
        }
    }
}

fn default_momentum() -> f64 {
    0.9
}
fn default_ce_threshold() -> f64 {
    0.01
}
fn default_max_epochs() -> usize {
    200
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

/// The hyperparameter vector `H` of a run. Two runs with equal `H` differ only
/// in their seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub dataset: String,
    pub arch: String,
    pub optimizer: Optimizer,
    pub lr: f64,
    pub stop_rule: StopRule,
    pub n_train: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// `None` means full batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_ce_threshold")]
    pub ce_threshold: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
}

impl Hyperparams {
    pub fn new(dataset: &str, arch: &str, optimizer: Optimizer, lr: f64, stop_rule: StopRule, n_train: usize) -> Self {
        Hyperparams {
            dataset: dataset.into(),
            arch: arch.into(),
            optimizer,
            lr,
            stop_rule,
            n_train,
            momentum: default_momentum(),
            weight_decay: 0.0,
            batch_size: None,
            max_epochs: default_max_epochs(),
            ce_threshold: default_ce_threshold(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.weight_decay < 0.0 {
            return bad(format!("weight decay {} is negative", self.weight_decay));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn group(&self) -> String {
        format!("{}__{}", self.dataset, self.arch)
    }

    /// Hash of `H` alone; equal for runs that differ only in seed.
    pub fn hash(&self) -> String {
        json_hash(self, 16)
    }

    pub fn run_id(&self, seed: u64) -> String {
        json_hash(&(self, seed), 16)
    }
}

/// Optimizer buffers. During a step `theta_curr` plays `θ_{t−1}`,
/// `theta_prev` plays `θ_{t−2}` and `eta_prev` plays `η_{t−2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub theta_curr: Vec<f64>,
    pub theta_prev: Vec<f64>,
    pub eta_prev: f64,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub t: usize,
}

impl OptState {
    /// Fresh buffers: `θ_{−1} = θ_0`, moments zeroed.
    pub fn new(theta: Vec<f64>, eta0: f64) -> Self {
        OptState {
            theta_prev: theta.clone(),
            adam_m: vec![0.0; theta.len()],
            adam_v: vec![0.0; theta.len()],
            theta_curr: theta,
            eta_prev: eta0,
            t: 0,
        }
    }

    /// Buffers with explicit `θ_{−1}` and `η_{−1}`.
    pub fn with_buffers(theta: Vec<f64>, theta_prev: Vec<f64>, eta_prev: f64) -> Self {
        OptState {
            theta_prev,
            eta_prev,
            ..OptState::new(theta, eta_prev)
        }
    }
}

fn check_finite(theta: &[f64], step: usize) -> Result<()> {
    if theta.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalDivergence { step })
    }
}

/// One momentum step with learning rate `eta` (`η_{t−1}`) and weight decay
/// `lambda` (`λ_{t−1}`, may be negative). `grad` is `∇L(θ_{t−1})`.
pub fn sgdm_step(state: &mut OptState, grad: &[f64], eta: f64, gamma: f64, lambda: f64) -> Result<()> {
    let coef = gamma / state.eta_prev;
    let next: Vec<f64> = state
        .theta_curr
        .iter()
        .zip(&state.theta_prev)
        .zip(grad)
        .map(|((&c, &p), &g)| c + eta * (coef * (c - p) - g - lambda * c))
        .collect();
    check_finite(&next, state.t + 1)?;
    state.theta_prev = std::mem::replace(&mut state.theta_curr, next);
    state.eta_prev = eta;
    state.t += 1;
    Ok(())
}

/// Bias-corrected Adam with L2 weight decay folded into the gradient.
pub fn adam_step(
    state: &mut OptState,
    grad: &[f64],
    eta: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    lambda: f64,
) -> Result<()> {
    let t = state.t + 1;
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    let mut next = state.theta_curr.clone();
    for i in 0..next.len() {
        let g = grad[i] + lambda * state.theta_curr[i];
        state.adam_m[i] = beta1 * state.adam_m[i] + (1.0 - beta1) * g;
        state.adam_v[i] = beta2 * state.adam_v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.adam_m[i] / c1;
        let v_hat = state.adam_v[i] / c2;
        next[i] -= eta * m_hat / (v_hat.sqrt() + eps);
    }
    check_finite(&next, t)?;
    state.theta_prev = std::mem::replace(&mut state.theta_curr, next);
    state.eta_prev = eta;
    state.t = t;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_acc: f64,
    pub train_ce: f64,
    pub test_error: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub measures: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    pub t_int: Option<usize>,
    pub run_id: String,
    #[serde(default)]
    pub resumed_from: Option<String>,
    #[serde(default)]
    pub resume_epoch: Option<usize>,
}

impl TrainTrace {
    fn push(&mut self, rec: EpochRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.epoch < rec.epoch));
        self.records.push(rec);
        self.t_int = detect_t_int(self);
    }

    pub fn last_epoch(&self) -> usize {
        self.records.last().map_or(0, |r| r.epoch)
    }

    /// CSV with fixed columns followed by one column per snapshot measure.
    pub fn to_csv(&self) -> String {
        let names: std::collections::BTreeSet<&String> =
            self.records.iter().flat_map(|r| r.measures.keys()).collect();
        let mut out = String::from("epoch,train_acc,train_ce,test_error");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}",
                r.epoch,
                crate::util::fmt_f64(r.train_acc),
                crate::util::fmt_f64(r.train_ce),
                crate::util::fmt_f64(r.test_error)
            ));
            for n in &names {
                out.push(',');
                if let Some(v) = r.measures.get(*n) {
                    out.push_str(&crate::util::fmt_f64(*v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// First epoch at which training accuracy reaches 1.
pub fn detect_t_int(trace: &TrainTrace) -> Option<usize> {
    trace.records.iter().find(|r| r.train_acc >= 1.0).map(|r| r.epoch)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::SlopeUndefined(format!(
            "{} post-interpolation points, need 2",
            points.len()
        )));
    }
    for &(epoch, value) in points {
        if !(value > 0.0) {
            return Err(Error::LogDomain { epoch, value });
        }
    }
    // offsets from the first point: a constant series gives exactly zero
    let (x0, y0) = ((points[0].0 as f64).ln(), points[0].1.ln());
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln() - x0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln() - y0).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::SlopeUndefined("all epochs coincide".into()));
    }
    Ok(sxy / sxx)
}

/// `d log measure / d log epoch` over the epochs strictly after `T_int`.
pub fn post_interp_slope(trace: &TrainTrace, measure: &str) -> Result<f64> {
    let t_int = detect_t_int(trace)
        .ok_or_else(|| Error::SlopeUndefined("training never interpolated".into()))?;
    let points: Vec<(usize, f64)> = trace
        .records
        .iter()
        .filter(|r| r.epoch > t_int)
        .filter_map(|r| r.measures.get(measure).map(|&v| (r.epoch, v)))
        .collect();
    loglog_slope(&points)
}

/// Per-epoch observer, e.g. for measure snapshots during training.
pub type Observer<'a> = dyn Fn(usize, &Checkpoint) -> BTreeMap<String, f64> + Sync + 'a;

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub checkpoint: Checkpoint,
    pub trace: TrainTrace,
}

fn stop_met(h: &Hyperparams, acc: f64, ce: f64) -> bool {
    match h.stop_rule {
        StopRule::TrainAcc100 => acc >= 1.0,
        StopRule::TrainCeBelow => ce < h.ce_threshold,
        StopRule::MaxEpochs => false,
    }
}

fn step(state: &mut OptState, grad: &[f64], h: &Hyperparams) -> Result<()> {
    match h.optimizer {
        Optimizer::Sgdm => sgdm_step(state, grad, h.lr, h.momentum, h.weight_decay),
        Optimizer::Adam => adam_step(state, grad, h.lr, h.beta1, h.beta2, h.adam_eps, h.weight_decay),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    spec: &NetSpec,
    ckpt: &mut Checkpoint,
    state: &mut OptState,
    train: &Dataset,
    test: &Dataset,
    h: &Hyperparams,
    seed: u64,
    first_epoch: usize,
    epochs: usize,
    trace: &mut TrainTrace,
    observer: Option<&Observer>,
) -> RunStatus {
    let all = train.indices();
    for epoch in first_epoch..first_epoch + epochs {
        let batches: Vec<Vec<usize>> = match h.batch_size {
            None => vec![all.clone()],
            Some(b) if b >= all.len() => vec![all.clone()],
            Some(b) => {
                let mut order = all.clone();
                Rng::derive(seed, &[rng::tag("batches"), epoch as u64]).shuffle(&mut order);
                order.chunks(b).map(<[usize]>::to_vec).collect()
            }
        };
        for batch in &batches {
            let res = netcore::backward(spec, ckpt, train, batch)
                .and_then(|g| step(state, &g.grad, h))
                .and_then(|()| ckpt.set_trainable(spec, &state.theta_curr));
            if let Err(e) = res {
                return match e {
                    Error::NumericalDivergence { step } => RunStatus::Diverged { step },
                    other => RunStatus::Failed {
                        kind: other.kind().into(),
                        message: other.to_string(),
                    },
                };
            }
        }
        ckpt.meta.epoch = epoch;
        let evals = netcore::evaluate(spec, ckpt, train).and_then(|tr| Ok((tr, netcore::evaluate(spec, ckpt, test)?)));
        let (tr, te) = match evals {
            Ok(v) => v,
            Err(e) => {
                return RunStatus::Failed {
                    kind: e.kind().into(),
                    message: e.to_string(),
                }
            }
        };
        if !tr.cross_entropy.is_finite() {
            return RunStatus::Diverged { step: state.t };
        }
        trace.push(EpochRecord {
            epoch,
            train_acc: tr.accuracy,
            train_ce: tr.cross_entropy,
            test_error: te.error(),
            measures: observer.map(|f| f(epoch, ckpt)).unwrap_or_default(),
        });
        if stop_met(h, tr.accuracy, tr.cross_entropy) {
            return RunStatus::Completed;
        }
    }
    if h.stop_rule == StopRule::MaxEpochs {
        RunStatus::Completed
    } else {
        RunStatus::StopRuleNotMet
    }
}

/// Trains from a He-normal initialization drawn from `seed`.
pub fn train(spec: &NetSpec, train_ds: &Dataset, test: &Dataset, h: &Hyperparams, seed: u64) -> Result<TrainOutcome> {
    let init = Checkpoint::init(spec, seed)?;
    train_from_init(spec, init, train_ds, test, h, seed, None)
}

/// Trains from a given initial checkpoint.
pub fn train_from_init(
    spec: &NetSpec,
    mut ckpt: Checkpoint,
    train_ds: &Dataset,
    test: &Dataset,
    h: &Hyperparams,
    seed: u64,
    observer: Option<&Observer>,
) -> Result<TrainOutcome> {
    h.validate()?;
    ckpt.check(spec)?;
    if train_ds.dim() != spec.input_dim() || test.dim() != spec.input_dim() {
        return Err(Error::ShapeMismatch("dataset and network input dims differ".into()));
    }
    let run_id = h.run_id(seed);
    ckpt.meta.run_id = run_id.clone();
    ckpt.meta.epoch = 0;
    let mut state = OptState::new(ckpt.trainable(spec), h.lr);
    let mut trace = TrainTrace {
        run_id: run_id.clone(),
        ..TrainTrace::default()
    };
    let status = run_epochs(spec, &mut ckpt, &mut state, train_ds, test, h, seed, 1, h.max_epochs, &mut trace, observer);
    let record = RunRecord::from_run(h, seed, &trace, status, None, netcore::evaluate(spec, &ckpt, test).ok());
    Ok(TrainOutcome {
        record,
        checkpoint: ckpt,
        trace,
    })
}

/// Continues training a checkpoint under new hyperparameters with fresh
/// optimizer buffers for up to `h_new.max_epochs` further epochs.
#[allow(clippy::too_many_arguments)]
pub fn resume(
    spec: &NetSpec,
    ckpt: &Checkpoint,
    parent_trace: &TrainTrace,
    train_ds: &Dataset,
    test: &Dataset,
    h_new: &Hyperparams,
    seed: u64,
    observer: Option<&Observer>,
) -> Result<TrainOutcome> {
    h_new.validate()?;
    ckpt.check(spec)
        .map_err(|e| Error::IncompatibleCheckpoint(e.to_string()))?;
    if ckpt.meta.spec_hash != spec.hash() {
        return Err(Error::IncompatibleCheckpoint(format!(
            "checkpoint spec hash {} differs from {}",
            ckpt.meta.spec_hash,
            spec.hash()
        )));
    }
    let parent = ckpt.meta.run_id.clone();
    let run_id = json_hash(&("resume", &parent, ckpt.meta.epoch, h_new, seed), 16);
    let mut out = ckpt.clone();
    out.meta.run_id = run_id.clone();
    let start = ckpt.meta.epoch;
    let mut trace = TrainTrace {
        records: parent_trace.records.iter().filter(|r| r.epoch <= start).cloned().collect(),
        t_int: None,
        run_id,
        resumed_from: Some(parent.clone()),
        resume_epoch: Some(start),
    };
    trace.t_int = detect_t_int(&trace);
    let mut state = OptState::new(out.trainable(spec), h_new.lr);
    let status = if h_new.max_epochs == 0 {
        RunStatus::Completed
    } else {
        run_epochs(spec, &mut out, &mut state, train_ds, test, h_new, seed, start + 1, h_new.max_epochs, &mut trace, observer)
    };
    let mut record = RunRecord::from_run(h_new, seed, &trace, status, Some(parent), netcore::evaluate(spec, &out, test).ok());
    record.run_id = trace.run_id.clone();
    Ok(TrainOutcome {
        record,
        checkpoint: out,
        trace,
    })
}
