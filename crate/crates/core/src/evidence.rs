//! Marginal-likelihood PAC-Bayes bound for binary classifiers.
//!
//! The posterior `Q` is the prior restricted to the consistency set
//! `C(S) = {h : h has zero training error}`. Its mass `P(C(S))` is estimated
//! by drawing networks from the prior (the He-normal initialization
//! distribution) and counting the ones that fit `S`; `Q` is sampled exactly by
//! rejection. With probability `1 − δ` over `S` and `1 − γ` over `h ~ Q`,
//!
//! `−ln(1 − ε(h)) < (ln(1/P(C(S))) + ln n + ln(1/δ) + ln(1/γ)) / (n − 1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datakit::{corrupt_labels, synth_blobs, Dataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::netcore::{argmax, evaluate, Checkpoint, NetSpec};
use crate::rng::{self, derive_seed, Rng};
use crate::util::{fmt_f64, median};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Draws per parallel work unit.
const CHUNK: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Weight std is `sqrt(gain / fan_in)`; 2 matches the initializer.
    pub gain: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { gain: 2.0 }
    }
}

impl PriorConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(Error::InvalidConfig(format!("prior gain must be >= 0, got {}", self.gain)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    pub n: usize,
    pub p_hat: f64,
    pub delta_conf: f64,
    pub gamma_conf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub epsilon: f64,
    pub rhs: f64,
    /// The bound says nothing: `ε` rounds to 1.
    pub vacuous: bool,
}

/// `ε = 1 − exp(−RHS)`.
pub fn ml_pacbayes_bound(input: &BoundInput) -> Result<BoundValue> {
    let BoundInput { n, p_hat, delta_conf, gamma_conf } = *input;
    if n < 2 {
        return Err(Error::InvalidConfig(format!("bound needs n >= 2, got {n}")));
    }
    for (name, v) in [("delta", delta_conf), ("gamma", gamma_conf)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1], got {v}")));
        }
    }
    if p_hat == 0.0 {
        return Err(Error::BoundUndefined("consistency mass estimate is zero".into()));
    }
    if !(p_hat > 0.0 && p_hat <= 1.0) {
        return Err(Error::InvalidConfig(format!("p_hat must lie in (0, 1], got {p_hat}")));
    }
    let rhs = (-p_hat.ln() + (n as f64).ln() - delta_conf.ln() - gamma_conf.ln()) / (n as f64 - 1.0);
    let epsilon = -(-rhs).exp_m1();
    Ok(BoundValue {
        epsilon,
        rhs,
        vacuous: !(epsilon < 1.0),
    })
}

/// Wilson score interval at 95%.
pub fn wilson_interval(hits: u64, draws: u64) -> (f64, f64) {
    if draws == 0 {
        return (0.0, 1.0);
    }
    let n = draws as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits == draws { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEstimate {
    pub hits: u64,
    pub draws: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub prior: PriorConfig,
    pub spec_hash: String,
    pub seed: u64,
}

impl ConsistencyEstimate {
    /// `3/K`: a pessimistic (upper 95%) mass when no draw fits. Only meaningful
    /// as a flagged fallback.
    pub fn rule_of_three(&self) -> f64 {
        3.0 / self.draws as f64
    }

    /// Standard error of `p_hat` under the binomial model.
    pub fn std_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.draws as f64).sqrt()
    }
}

fn check_task(spec: &NetSpec, data: &Dataset) -> Result<()> {
    spec.validate()?;
    if spec.output_dim() != 2 || data.num_classes > 2 {
        return Err(Error::InvalidConfig("consistency estimates are binary-only".into()));
    }
    if data.dim() != spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset dim {} vs network input {}",
            data.dim(),
            spec.input_dim()
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    Ok(())
}

/// Preallocated weights and activations for one worker.
struct Scratch {
    weights: Vec<Matrix>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    fn new(spec: &NetSpec) -> Self {
        let weights = (0..spec.num_layers())
            .map(|i| {
                let (r, c) = spec.shape(i);
                Matrix::zeros(r, c)
            })
            .collect();
        Scratch {
            weights,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    fn fill(&mut self, prior: &PriorConfig, seed: u64, k: u64) {
        let mut rng = Rng::derive(seed, &[rng::tag("prior"), k]);
        for w in &mut self.weights {
            let std = (prior.gain / w.cols as f64).sqrt();
            w.data.iter_mut().for_each(|v| *v = std * rng.normal());
        }
    }

    /// Predicted class for `x` under the current (bias-free) weights.
    fn predict(&mut self, spec: &NetSpec, x: &[f64]) -> Result<usize> {
        let last = self.weights.len() - 1;
        self.a.clear();
        self.a.extend_from_slice(x);
        for (i, w) in self.weights.iter().enumerate() {
            self.b.clear();
            self.b.extend((0..w.rows).map(|r| crate::linalg::dot(w.row(r), &self.a)));
            if i < last {
                if spec.normalize_hidden {
                    let r = crate::linalg::norm(&self.b);
                    if r == 0.0 {
                        return Err(Error::NormalizationSingularity { layer: i });
                    }
                    self.b.iter_mut().for_each(|v| *v /= r);
                }
                let act = spec.activation[i];
                self.b.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            std::mem::swap(&mut self.a, &mut self.b);
        }
        Ok(argmax(&self.a))
    }

    /// Zero training error; stops at the first mistake.
    fn fits(&mut self, spec: &NetSpec, data: &Dataset) -> Result<bool> {
        for i in 0..data.len() {
            if self.predict(spec, data.input(i))? != data.labels[i] {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Prior draw `k` of the stream `seed`, as a checkpoint.
pub fn prior_draw(spec: &NetSpec, prior: &PriorConfig, seed: u64, k: u64) -> Result<Checkpoint> {
    spec.validate()?;
    prior.validate()?;
    let mut s = Scratch::new(spec);
    s.fill(prior, seed, k);
    let biases = if spec.bias_enabled {
        (0..spec.num_layers()).map(|i| vec![0.0; spec.shape(i).0]).collect()
    } else {
        Vec::new()
    };
    Checkpoint::from_parts(spec, s.weights, biases)
}

/// Counts prior draws `0..draws` that fit `data`. Draw `k` always uses the
/// same stream, so the count does not depend on how the work is split.
pub fn count_consistent(
    spec: &NetSpec,
    data: &Dataset,
    prior: &PriorConfig,
    draws: u64,
    seed: u64,
) -> Result<ConsistencyEstimate> {
    check_task(spec, data)?;
    prior.validate()?;
    if draws == 0 {
        return Err(Error::InvalidConfig("need at least one draw".into()));
    }
    let chunks: Vec<u64> = (0..draws.div_ceil(CHUNK)).collect();
    let hits = chunks
        .par_iter()
        .map_init(
            || Scratch::new(spec),
            |s, &c| -> Result<u64> {
                let mut hits = 0;
                for k in c * CHUNK..((c + 1) * CHUNK).min(draws) {
                    s.fill(prior, seed, k);
                    hits += u64::from(s.fits(spec, data)?);
                }
                Ok(hits)
            },
        )
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let (wilson_lo, wilson_hi) = wilson_interval(hits, draws);
    Ok(ConsistencyEstimate {
        hits,
        draws,
        p_hat: hits as f64 / draws as f64,
        wilson_lo,
        wilson_hi,
        prior: *prior,
        spec_hash: spec.hash(),
        seed,
    })
}

/// Monte Carlo estimate of `P(C(S))`; `ZeroHits` when no draw fits.
pub fn estimate_consistency_mass(
    spec: &NetSpec,
    data: &Dataset,
    prior: &PriorConfig,
    draws: u64,
    seed: u64,
) -> Result<ConsistencyEstimate> {
    let est = count_consistent(spec, data, prior, draws, seed)?;
    if est.hits == 0 {
        return Err(Error::ZeroHits { draws });
    }
    Ok(est)
}

/// Generic rejection sampler: attempt `k` draws from its own stream
/// `(seed, k)`. Returns the accepted value and the number of attempts.
pub fn rejection_sample<T>(
    max_attempts: u64,
    seed: u64,
    mut draw: impl FnMut(&mut Rng) -> Result<T>,
    mut accept: impl FnMut(&T) -> Result<bool>,
) -> Result<(T, u64)> {
    for k in 0..max_attempts {
        let mut rng = Rng::derive(seed, &[k]);
        let v = draw(&mut rng)?;
        if accept(&v)? {
            return Ok((v, k + 1));
        }
    }
    Err(Error::RejectionExhausted { attempts: max_attempts })
}

#[derive(Clone, Debug)]
pub struct GibbsSample {
    pub checkpoint: Checkpoint,
    pub attempts: u64,
}

/// One exact draw from `Q`: the first prior draw that fits `data`.
pub fn gibbs_sample_consistent(
    spec: &NetSpec,
    data: &Dataset,
    prior: &PriorConfig,
    max_attempts: u64,
    seed: u64,
) -> Result<GibbsSample> {
    check_task(spec, data)?;
    prior.validate()?;
    let mut s = Scratch::new(spec);
    for k in 0..max_attempts {
        s.fill(prior, seed, k);
        if s.fits(spec, data)? {
            return Ok(GibbsSample {
                checkpoint: prior_draw(spec, prior, seed, k)?,
                attempts: k + 1,
            });
        }
    }
    Err(Error::RejectionExhausted { attempts: max_attempts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub n_train: usize,
    pub dim: usize,
    pub separation: f64,
    pub heldout: usize,
    pub corruption: Vec<f64>,
    pub draws: u64,
    pub max_attempts: u64,
    pub delta_conf: f64,
    pub gamma_conf: f64,
    pub prior: PriorConfig,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n_train: 16,
            dim: 2,
            separation: 4.0,
            heldout: 2000,
            corruption: vec![0.0, 0.5],
            draws: 100_000,
            max_attempts: 200_000,
            delta_conf: 0.05,
            gamma_conf: 0.05,
            prior: PriorConfig::default(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 2 || self.heldout == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig("task needs n_train >= 2, heldout >= 1, dim >= 1".into()));
        }
        if self.draws == 0 || self.max_attempts == 0 {
            return Err(Error::InvalidConfig("draws and max_attempts must be positive".into()));
        }
        if let Some(p) = self.corruption.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidConfig(format!("corruption level {p} outside [0, 1]")));
        }
        self.prior.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub corruption: f64,
    pub repetition: usize,
    pub hits: u64,
    pub draws: u64,
    pub p_hat: f64,
    pub bound: Option<f64>,
    /// Bound evaluated at the rule-of-three mass when no draw fit; flagged,
    /// never mixed into `bound`.
    pub bound_rule_of_three: Option<f64>,
    pub vacuous: bool,
    pub attempts: Option<u64>,
    pub true_error: Option<f64>,
    pub violated: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSummary {
    pub corruption: f64,
    pub repetitions: usize,
    /// Repetitions with both a bound and a sampled hypothesis.
    pub evaluated: usize,
    pub violations: usize,
    pub violation_rate: Option<f64>,
    pub median_bound: Option<f64>,
    /// Median over all repetitions, using the rule-of-three bound where no
    /// draw fit (a lower estimate of the true median bound).
    pub median_bound_with_floor: Option<f64>,
    pub median_true_error: Option<f64>,
    pub median_gap: Option<f64>,
    pub zero_hits: usize,
    pub rejection_exhausted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: TaskConfig,
    pub spec: NetSpec,
    pub seed: u64,
    pub repetitions: usize,
    pub rows: Vec<RepetitionRow>,
    pub summaries: Vec<CorruptionSummary>,
}

impl ExperimentReport {
    pub fn rows_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = String::from(
            "corruption,repetition,hits,draws,p_hat,bound,bound_rule_of_three,vacuous,attempts,true_error,violated,error\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt_f64(r.corruption),
                r.repetition,
                r.hits,
                r.draws,
                fmt_f64(r.p_hat),
                opt(r.bound),
                opt(r.bound_rule_of_three),
                r.vacuous,
                r.attempts.map(|a| a.to_string()).unwrap_or_default(),
                opt(r.true_error),
                r.violated.map(|v| v.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ));
        }
        out
    }
}

fn repetition(spec: &NetSpec, task: &TaskConfig, level: f64, rep: usize, seed: u64) -> Result<RepetitionRow> {
    let rep_seed = derive_seed(seed, &[rng::tag("repetition"), rep as u64]);
    let all = synth_blobs(task.n_train + task.heldout, task.dim, 2, task.separation, rep_seed)?;
    let (mut train, mut heldout) = all.split(task.n_train)?;
    if level > 0.0 {
        train = corrupt_labels(&train, level, derive_seed(rep_seed, &[rng::tag("corrupt_train")]))?;
        heldout = corrupt_labels(&heldout, level, derive_seed(rep_seed, &[rng::tag("corrupt_heldout")]))?;
    }
    let est = count_consistent(spec, &train, &task.prior, task.draws, derive_seed(rep_seed, &[rng::tag("estimate")]))?;
    let mut row = RepetitionRow {
        corruption: level,
        repetition: rep,
        hits: est.hits,
        draws: est.draws,
        p_hat: est.p_hat,
        bound: None,
        bound_rule_of_three: None,
        vacuous: false,
        attempts: None,
        true_error: None,
        violated: None,
        error: None,
    };
    let input = |p_hat| BoundInput {
        n: task.n_train,
        p_hat,
        delta_conf: task.delta_conf,
        gamma_conf: task.gamma_conf,
    };
    if est.hits == 0 {
        row.error = Some(Error::ZeroHits { draws: est.draws }.kind().into());
        row.bound_rule_of_three = Some(ml_pacbayes_bound(&input(est.rule_of_three()))?.epsilon);
        return Ok(row);
    }
    let bound = ml_pacbayes_bound(&input(est.p_hat))?;
    row.bound = Some(bound.epsilon);
    row.vacuous = bound.vacuous;
    let gibbs_seed = derive_seed(rep_seed, &[rng::tag("gibbs")]);
    match gibbs_sample_consistent(spec, &train, &task.prior, task.max_attempts, gibbs_seed) {
        Ok(g) => {
            let err = evaluate(spec, &g.checkpoint, &heldout)?.error();
            row.attempts = Some(g.attempts);
            row.true_error = Some(err);
            row.violated = Some(err > bound.epsilon);
        }
        Err(e @ Error::RejectionExhausted { .. }) => row.error = Some(e.kind().into()),
        Err(e) => return Err(e),
    }
    Ok(row)
}

fn summarize(level: f64, rows: &[&RepetitionRow]) -> CorruptionSummary {
    let evaluated: Vec<_> = rows.iter().filter(|r| r.violated.is_some()).collect();
    let violations = evaluated.iter().filter(|r| r.violated == Some(true)).count();
    let bounds: Vec<f64> = rows.iter().filter_map(|r| r.bound).collect();
    let floor: Vec<f64> = rows.iter().filter_map(|r| r.bound.or(r.bound_rule_of_three)).collect();
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.true_error).collect();
    let gaps: Vec<f64> = evaluated
        .iter()
        .filter_map(|r| Some(r.bound? - r.true_error?))
        .collect();
    CorruptionSummary {
        corruption: level,
        repetitions: rows.len(),
        evaluated: evaluated.len(),
        violations,
        violation_rate: (!evaluated.is_empty()).then(|| violations as f64 / evaluated.len() as f64),
        median_bound: median(&bounds),
        median_bound_with_floor: median(&floor),
        median_true_error: median(&errors),
        median_gap: median(&gaps),
        zero_hits: rows.iter().filter(|r| r.hits == 0).count(),
        rejection_exhausted: rows
            .iter()
            .filter(|r| r.error.as_deref() == Some("RejectionExhausted"))
            .count(),
    }
}

/// Bound versus sampled-hypothesis error over fresh training sets, at each
/// corruption level. The same clean sample is reused across levels of one
/// repetition.
pub fn bound_vs_error_experiment(
    spec: &NetSpec,
    task: &TaskConfig,
    repetitions: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    task.validate()?;
    if spec.input_dim() != task.dim {
        return Err(Error::ShapeMismatch(format!(
            "task dim {} vs network input {}",
            task.dim,
            spec.input_dim()
        )));
    }
    let mut rows = Vec::new();
    for &level in &task.corruption {
        for rep in 0..repetitions {
            rows.push(repetition(spec, task, level, rep, seed)?);
        }
    }
    let summaries = task
        .corruption
        .iter()
        .map(|&level| {
            let rs: Vec<&RepetitionRow> = rows.iter().filter(|r| r.corruption == level).collect();
            summarize(level, &rs)
        })
        .collect();
    Ok(ExperimentReport {
        task: task.clone(),
        spec: spec.clone(),
        seed,
        repetitions,
        rows,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bound(n: usize, p_hat: f64, d: f64, g: f64) -> Result<BoundValue> {
        ml_pacbayes_bound(&BoundInput { n, p_hat, delta_conf: d, gamma_conf: g })
    }

    #[test]
    fn bound_fixtures() {
        let b = bound(2, 1.0, 1.0, 1.0).unwrap();
        assert!((b.rhs - 2f64.ln()).abs() < 1e-15);
        assert!((b.epsilon - 0.5).abs() < 1e-12);
        let b = bound(10, 2f64.powi(-10), 1.0, 1.0).unwrap();
        let rhs = (10.0 * 2f64.ln() + 10f64.ln()) / 9.0;
        assert!((b.rhs - rhs).abs() < 1e-12);
        assert!((b.epsilon - (1.0 - (-rhs).exp())).abs() < 1e-12);
        assert!((b.epsilon - 0.6416).abs() < 5e-5);
        assert!(bound(1_000_000, 1.0, 1.0, 1.0).unwrap().epsilon < 1e-4);
        assert!(matches!(bound(10, 0.0, 0.5, 0.5), Err(Error::BoundUndefined(_))));
        assert!(bound(1, 0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn bound_monotonicity() {
        let mut prev = 0.0;
        for k in 0..50 {
            let e = bound(20, (-(k as f64) * 0.5).exp(), 0.05, 0.05).unwrap().epsilon;
            assert!(e > prev);
            prev = e;
        }
        let mut prev = 1.0;
        for n in 2..200 {
            let e = bound(n, 0.01, 0.05, 0.05).unwrap().epsilon;
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn wilson_contains_truth() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (lo + hi - 1.0).abs() < 1e-12);
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
    }

    fn single_point() -> (NetSpec, Dataset) {
        let spec = NetSpec::relu(&[2, 8, 2], false);
        let data = Dataset::inline(&[vec![1.0, -0.5]], vec![1], 2).unwrap();
        (spec, data)
    }

    #[test]
    fn single_example_mass_is_half() {
        let (spec, data) = single_point();
        let est = estimate_consistency_mass(&spec, &data, &PriorConfig::default(), 10_000, 3).unwrap();
        let se = (0.25f64 / 10_000.0).sqrt();
        assert!((est.p_hat - 0.5).abs() <= 4.0 * se, "p_hat {}", est.p_hat);
        assert!(est.wilson_lo < 0.5 && 0.5 < est.wilson_hi);
        let again = estimate_consistency_mass(&spec, &data, &PriorConfig::default(), 10_000, 3).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn constant_net_fits_constant_labels() {
        let spec = NetSpec::relu(&[2, 4, 2], false);
        let data = Dataset::inline(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 2.0]], vec![0, 0, 0], 2).unwrap();
        let est = estimate_consistency_mass(&spec, &data, &PriorConfig { gain: 0.0 }, 500, 0).unwrap();
        assert_eq!(est.p_hat, 1.0);
    }

    #[test]
    fn impossible_dataset() {
        let spec = NetSpec::relu(&[2, 8, 2], false);
        let data = Dataset::inline(&[vec![1.0, 1.0], vec![1.0, 1.0]], vec![0, 1], 2).unwrap();
        let p = PriorConfig::default();
        assert!(matches!(estimate_consistency_mass(&spec, &data, &p, 2000, 1), Err(Error::ZeroHits { draws: 2000 })));
        assert!(matches!(
            gibbs_sample_consistent(&spec, &data, &p, 500, 1),
            Err(Error::RejectionExhausted { attempts: 500 })
        ));
    }

    #[test]
    fn gibbs_sample_fits_and_attempts_are_geometric() {
        let (spec, data) = single_point();
        let p = PriorConfig::default();
        let mut total = 0;
        for s in 0..400 {
            let g = gibbs_sample_consistent(&spec, &data, &p, 1000, s).unwrap();
            assert_eq!(evaluate(&spec, &g.checkpoint, &data).unwrap().error(), 0.0);
            total += g.attempts;
        }
        let mean = total as f64 / 400.0;
        assert!((mean - 2.0).abs() < 0.3, "mean attempts {mean}");
    }

    #[test]
    fn count_independent_of_chunking() {
        let (spec, data) = single_point();
        let p = PriorConfig::default();
        let est = count_consistent(&spec, &data, &p, 3000, 9).unwrap();
        let mut s = Scratch::new(&spec);
        let mut hits = 0;
        for k in 0..3000 {
            s.fill(&p, 9, k);
            hits += u64::from(s.fits(&spec, &data).unwrap());
        }
        assert_eq!(est.hits, hits);
        let ck = prior_draw(&spec, &p, 9, 17).unwrap();
        s.fill(&p, 9, 17);
        assert_eq!(ck.weights, s.weights);
    }

    /// Threshold classifiers `x >= t` on three points with a non-uniform
    /// discrete prior; accepted samples must follow the prior restricted to
    /// the consistent thresholds.
    #[test]
    fn rejection_matches_restricted_prior() {
        let thresholds = [0.0, 0.1, 0.3, 0.35, 0.45, 0.6, 0.7, 0.9, 1.0];
        let weights = [1.0, 2.0, 3.0, 1.0, 4.0, 2.0, 1.0, 3.0, 1.0];
        let total: f64 = weights.iter().sum();
        let xs = [0.2, 0.5, 0.8];
        let ys = [false, true, true];
        let consistent = |t: f64| xs.iter().zip(ys).all(|(&x, y)| (x >= t) == y);
        let allowed: Vec<usize> = (0..thresholds.len()).filter(|&i| consistent(thresholds[i])).collect();
        assert_eq!(allowed, vec![2, 3, 4]);
        let mass: f64 = allowed.iter().map(|&i| weights[i]).sum();

        let n = 20_000u64;
        let mut counts = [0u64; 9];
        for s in 0..n {
            let (i, _) = rejection_sample(
                10_000,
                s,
                |rng| {
                    let mut u = rng.uniform() * total;
                    let mut i = 0;
                    while u >= weights[i] {
                        u -= weights[i];
                        i += 1;
                    }
                    Ok(i)
                },
                |&i| Ok(consistent(thresholds[i])),
            )
            .unwrap();
            counts[i] += 1;
        }
        assert!(counts.iter().enumerate().all(|(i, &c)| c == 0 || allowed.contains(&i)));
        let chi2: f64 = allowed
            .iter()
            .map(|&i| {
                let e = n as f64 * weights[i] / mass;
                (counts[i] as f64 - e).powi(2) / e
            })
            .sum();
        // 99.9th percentile of chi-square with 2 degrees of freedom.
        assert!(chi2 < 13.82, "chi2 {chi2}");
    }

    #[test]
    fn experiment_is_deterministic() {
        let spec = NetSpec::relu(&[2, 16, 2], false);
        let task = TaskConfig {
            draws: 2000,
            max_attempts: 5000,
            heldout: 200,
            ..TaskConfig::default()
        };
        let a = bound_vs_error_experiment(&spec, &task, 3, 5).unwrap();
        let b = bound_vs_error_experiment(&spec, &task, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.rows_csv(), b.rows_csv());
    }
}
