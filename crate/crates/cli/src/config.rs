//! The single JSON configuration document driving every command.

use std::path::Path;

use fragaudit::datakit::{subsample, Dataset, Provenance};
use fragaudit::evidence::{BoundInput, TaskConfig};
use fragaudit::exppp::{ExpPPParams, DEFAULT_LOGIT_TOL, DEFAULT_TOL};
use fragaudit::fragility::FragilityConfig;
use fragaudit::measures::MeasureConfig;
use fragaudit::netcore::NetSpec;
use fragaudit::optimkit::{Hyperparams, Optimizer, StopRule, SweepGrid};
use fragaudit::rng::derive_seed;
use fragaudit::util::json_hash;
use fragaudit::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub data: DataConfig,
    pub net: NetConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub measures: MeasureConfig,
    #[serde(default)]
    pub fragility: FragilityConfig,
    #[serde(default)]
    pub temporal: Option<TemporalConfig>,
    #[serde(default)]
    pub exppp: Option<ExpPPConfig>,
    #[serde(default)]
    pub evidence: Option<EvidenceConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset name used in run groups.
    pub name: String,
    pub train: Provenance,
    pub test: Provenance,
    /// Seed for drawing training subsets of the sizes in the sweep.
    #[serde(default)]
    pub subsample_seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Architecture name used in run groups.
    pub name: String,
    pub spec: NetSpec,
}

/// Fields of `H` shared by every run of the sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseHyper {
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: Option<usize>,
    pub max_epochs: usize,
    pub ce_threshold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for BaseHyper {
    fn default() -> Self {
        let h = Hyperparams::new("", "", Optimizer::Sgdm, 0.1, StopRule::TrainAcc100, 0);
        BaseHyper {
            momentum: h.momentum,
            weight_decay: h.weight_decay,
            batch_size: h.batch_size,
            max_epochs: h.max_epochs,
            ce_threshold: h.ce_threshold,
            beta1: h.beta1,
            beta2: h.beta2,
            adam_eps: h.adam_eps,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lrs: Vec<f64>,
    pub optimizers: Vec<Optimizer>,
    pub stop_rules: Vec<StopRule>,
    /// Empty means the full training set only.
    pub train_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base: BaseHyper,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let g = SweepGrid::standard(8);
        SweepConfig {
            lrs: g.lrs,
            optimizers: g.optimizers,
            stop_rules: g.stop_rules,
            train_sizes: Vec::new(),
            seeds: g.seeds,
            base: BaseHyper::default(),
        }
    }
}

/// Partial `H` applied on top of another.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperOverride {
    pub lr: Option<f64>,
    pub optimizer: Option<Optimizer>,
    pub stop_rule: Option<StopRule>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
}

impl HyperOverride {
    pub fn apply(&self, h: &Hyperparams) -> Hyperparams {
        let mut h = h.clone();
        if let Some(v) = self.lr {
            h.lr = v;
        }
        if let Some(v) = self.optimizer {
            h.optimizer = v;
        }
        if let Some(v) = self.stop_rule {
            h.stop_rule = v;
        }
        if let Some(v) = self.momentum {
            h.momentum = v;
        }
        if let Some(v) = self.weight_decay {
            h.weight_decay = v;
        }
        if let Some(v) = self.batch_size {
            h.batch_size = Some(v);
        }
        if let Some(v) = self.max_epochs {
            h.max_epochs = v;
        }
        h
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    /// The run: sweep base plus these fields.
    pub run: HyperOverride,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub n_train: Option<usize>,
    /// Measures snapshotted every epoch.
    pub measures: Vec<String>,
    #[serde(default)]
    pub hysteresis: Option<HysteresisConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HysteresisConfig {
    /// Changes applied to the parent's `H` at the resume point.
    pub h_new: HyperOverride,
    /// Epochs trained after the resume point, by both branches.
    pub epochs: usize,
}

fn default_horizon() -> usize {
    200
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_logit_tol() -> f64 {
    DEFAULT_LOGIT_TOL
}
fn default_grid() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpPPConfig {
    pub params: ExpPPParams,
    /// Scale-invariant network used for both runs.
    pub net: NetSpec,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_logit_tol")]
    pub logit_tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Factors to verify; defaults to `params.alpha`.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Number of log-spaced factors in the demo.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Measures for the demo; defaults to the top-level measure config.
    #[serde(default)]
    pub measures: Option<MeasureConfig>,
}

fn default_repetitions() -> usize {
    100
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceConfig {
    pub net: NetSpec,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate the bound formula on these inputs instead of estimating the
    /// consistency mass on the training set.
    #[serde(default)]
    pub bound: Option<BoundInput>,
}

/// A loaded configuration and the hash identifying it.
pub struct Loaded {
    pub cfg: AuditConfig,
    pub hash: String,
}

pub fn load(path: &Path, seed_offset: u64) -> Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)?;
    let cfg: AuditConfig = serde_json::from_value(value.clone())?;
    cfg.validate()?;
    // `Value` objects keep keys sorted, so the hash ignores formatting and
    // key order.
    let hash = json_hash(&(value, seed_offset), 16);
    Ok(Loaded { cfg, hash })
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.spec.validate()?;
        self.measures.validate()?;
        self.fragility.validate()?;
        let s = &self.sweep;
        if s.lrs.is_empty() || s.optimizers.is_empty() || s.stop_rules.is_empty() || s.seeds.is_empty() {
            return Err(Error::InvalidConfig("sweep lists must be nonempty".into()));
        }
        if self.data.name.contains('/') || self.net.name.contains('/') {
            return Err(Error::InvalidConfig("dataset and net names may not contain '/'".into()));
        }
        for name in self.temporal.iter().flat_map(|t| &t.measures) {
            if !fragaudit::measures::is_measure(name) {
                return Err(Error::InvalidConfig(format!("unknown measure {name}")));
            }
        }
        if let Some(e) = &self.exppp {
            e.net.validate()?;
            if let Some(m) = &e.measures {
                m.validate()?;
            }
        }
        if let Some(e) = &self.evidence {
            e.net.validate()?;
            e.task.validate()?;
        }
        Ok(())
    }

    /// `H` for a sweep point.
    pub fn hyperparams(&self, optimizer: Optimizer, lr: f64, stop_rule: StopRule, n_train: usize) -> Hyperparams {
        let b = &self.sweep.base;
        Hyperparams {
            momentum: b.momentum,
            weight_decay: b.weight_decay,
            batch_size: b.batch_size,
            max_epochs: b.max_epochs,
            ce_threshold: b.ce_threshold,
            beta1: b.beta1,
            beta2: b.beta2,
            adam_eps: b.adam_eps,
            ..Hyperparams::new(&self.data.name, &self.net.name, optimizer, lr, stop_rule, n_train)
        }
    }

    pub fn grid(&self, seed_offset: u64) -> SweepGrid {
        SweepGrid {
            lrs: self.sweep.lrs.clone(),
            optimizers: self.sweep.optimizers.clone(),
            stop_rules: self.sweep.stop_rules.clone(),
            seeds: self.sweep.seeds.iter().map(|s| s + seed_offset).collect(),
        }
    }
}

/// Training and test sets of the configuration.
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
    subsample_seed: u64,
}

impl Data {
    pub fn load(cfg: &DataConfig) -> Result<Self> {
        Ok(Data {
            train: cfg.train.replay()?,
            test: cfg.test.replay()?,
            subsample_seed: cfg.subsample_seed,
        })
    }

    /// The training subset of size `n`: the whole set when `n` covers it,
    /// otherwise a seeded subsample depending only on `n`.
    pub fn train_subset(&self, n: usize) -> Result<Dataset> {
        if n >= self.train.len() {
            if n > self.train.len() {
                return Err(Error::InvalidSize {
                    requested: n,
                    available: self.train.len(),
                });
            }
            return Ok(self.train.clone());
        }
        subsample(&self.train, n, derive_seed(self.subsample_seed, &[n as u64]))
    }

    /// Training sizes of the sweep.
    pub fn sizes(&self, sweep: &SweepConfig) -> Vec<usize> {
        if sweep.train_sizes.is_empty() {
            vec![self.train.len()]
        } else {
            sweep.train_sizes.clone()
        }
    }
}
