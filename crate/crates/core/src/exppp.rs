//! Exp++ schedules for scale-invariant networks: a run with fixed learning
//! rate and weight decay is reproduced exactly, up to a global rescaling of the
//! weights, by a run with exponentially growing learning rate and shrinking
//! weight decay.
//!
//! With `θ̃_t = α^{-t} θ_t`, the two momentum updates coincide when
//! `η̃_t = η₀ α^{-2t-1}` and `λ̃_t η̃_t = 1 − β` for every `t ≥ 0`, where
//! `β = (ρ+γ)/α − γ/α²` and `ρ = 1 − λη₀`. This gives `λ̃_t = Ξ(α) α^{2t−1}`
//! at every step, given the buffer overrides `θ̃_{−1} = α θ₀` and
//! `η̃_{−1} = α η₀`.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{norm, norm_sq};
use crate::measures::{self, MeasureConfig, MeasureSet};
use crate::netcore::{self, backward, evaluate, Checkpoint, NetSpec};
use crate::optimkit::{sgdm_step, OptState};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_LOGIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpPPParams {
    pub eta0: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl ExpPPParams {
    fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// `1 − λη₀`.
    pub fn rho(&self) -> f64 {
        1.0 - self.lambda * self.eta0
    }

    /// `(Δ_λ, α_−, α_+)`: the discriminant and roots of `α² − α(ρ+γ) + γ`.
    /// Without weight decay the roots are exactly `γ` and `1`.
    fn roots(&self) -> (f64, f64, f64) {
        let (g, le) = (self.gamma, self.lambda * self.eta0);
        let delta = (1.0 - g).powi(2) - 2.0 * (1.0 + g) * le + le * le;
        if le == 0.0 {
            return (delta, g, 1.0);
        }
        let s = delta.max(0.0).sqrt();
        (delta, (1.0 + g - le - s) / 2.0, (1.0 + g - le + s) / 2.0)
    }

    /// `Ξ(α) = (α² − α(ρ+γ) + γ) / η₀`, evaluated in factored form
    /// `(α − α_−)(α − α_+) / η₀` when the roots are real.
    pub fn xi(&self, alpha: f64) -> f64 {
        let (delta, lo, hi) = self.roots();
        if delta >= 0.0 {
            (alpha - lo) * (alpha - hi) / self.eta0
        } else {
            (alpha * alpha - alpha * (self.rho() + self.gamma) + self.gamma) / self.eta0
        }
    }

    /// `β(α) = (ρ+γ)/α − γ/α²`.
    pub fn beta(&self, alpha: f64) -> f64 {
        (self.rho() + self.gamma) / alpha - self.gamma / (alpha * alpha)
    }
}

/// `(α_L, α_−] ∪ [α_+, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleInterval {
    pub alpha_l: f64,
    pub alpha_minus: f64,
    pub alpha_plus: f64,
}

impl AdmissibleInterval {
    pub fn contains(&self, alpha: f64) -> bool {
        (self.alpha_l < alpha && alpha <= self.alpha_minus) || (self.alpha_plus <= alpha && alpha < 1.0)
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_l >= self.alpha_minus && self.alpha_plus >= 1.0
    }
}

impl fmt::Display for AdmissibleInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "empty");
        }
        let mut parts = Vec::new();
        if self.alpha_l < self.alpha_minus {
            parts.push(format!("({}, {}]", self.alpha_l, self.alpha_minus));
        }
        if self.alpha_plus < 1.0 {
            parts.push(format!("[{}, 1)", self.alpha_plus));
        }
        write!(f, "{}", parts.join(" U "))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpPPDerived {
    pub delta_lambda: f64,
    pub xi: f64,
    pub rho: f64,
    pub beta: f64,
    pub interval: AdmissibleInterval,
    /// `λη₀ ≤ (1−√γ)²` and `α_L < α_−`.
    pub remark_ok: bool,
    pub interval_empty: bool,
}

/// Interval endpoints and the derived constants at `params.alpha`.
pub fn derive(params: &ExpPPParams) -> Result<ExpPPDerived> {
    params.validate()?;
    let (g, le) = (params.gamma, params.lambda * params.eta0);
    let (delta_lambda, alpha_minus, alpha_plus) = params.roots();
    if delta_lambda < 0.0 {
        return Err(Error::ComplexEndpoints(delta_lambda));
    }
    let interval = AdmissibleInterval {
        alpha_l: g / (1.0 - le + g),
        alpha_minus,
        alpha_plus,
    };
    let remark_ok = le <= (1.0 - g.sqrt()).powi(2) && interval.alpha_l < interval.alpha_minus;
    Ok(ExpPPDerived {
        delta_lambda,
        xi: params.xi(params.alpha),
        rho: params.rho(),
        beta: params.beta(params.alpha),
        interval,
        remark_ok,
        interval_empty: interval.is_empty(),
    })
}

fn admissible(params: &ExpPPParams) -> Result<ExpPPDerived> {
    let d = derive(params)?;
    if !d.interval.contains(params.alpha) {
        return Err(Error::InadmissibleAlpha {
            alpha: params.alpha,
            interval: d.interval.to_string(),
        });
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpPPSchedule {
    pub alpha: f64,
    /// `η̃_t`, `t = 0..T−1`.
    pub etas: Vec<f64>,
    /// `λ̃_t`, `t = 0..T−1`.
    pub lambdas: Vec<f64>,
    /// `θ̃_{−1} = theta_prev_scale · θ₀`.
    pub theta_prev_scale: f64,
    /// `η̃_{−1}`.
    pub eta_prev: f64,
    pub horizon: usize,
}

/// The Exp++ schedule over `horizon` steps.
pub fn schedule(params: &ExpPPParams, horizon: usize) -> Result<ExpPPSchedule> {
    let d = admissible(params)?;
    let a = params.alpha;
    let etas = (0..horizon).map(|t| params.eta0 * a.powi(-2 * t as i32 - 1)).collect();
    let lambdas = (0..horizon).map(|t| d.xi * a.powi(2 * t as i32 - 1)).collect();
    Ok(ExpPPSchedule {
        alpha: a,
        etas,
        lambdas,
        theta_prev_scale: a,
        eta_prev: a * params.eta0,
        horizon,
    })
}

/// The extra `γ(1−α)/(η₀α)` that is sometimes added to `λ̃_0`. It is only
/// correct when `θ̃_{−1} = θ̃_0` and `η̃_{−1} = η̃_0` (no buffer overrides);
/// with the overrides used here it breaks equivalence.
pub fn first_step_correction(params: &ExpPPParams) -> f64 {
    params.gamma * (1.0 - params.alpha) / (params.eta0 * params.alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub horizon: usize,
    pub tol: f64,
    pub logit_tol: f64,
    /// Seed of the shared initialization.
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            horizon: 200,
            tol: DEFAULT_TOL,
            logit_tol: DEFAULT_LOGIT_TOL,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: usize,
    /// `‖α^t θ̃_t − θ_t‖ / ‖θ_t‖`.
    pub deviation: f64,
    /// Max absolute logit difference over the dataset.
    pub logit_diff: f64,
    /// `|‖∇L(θ̃_t)‖ − α^t ‖∇L(θ_t)‖| / (α^t ‖∇L(θ_t)‖)`.
    pub grad_scale_err: f64,
    pub loss: f64,
    pub eta: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub params: ExpPPParams,
    pub derived: ExpPPDerived,
    pub horizon: usize,
    pub tol: f64,
    pub logit_tol: f64,
    pub steps: Vec<StepReport>,
    pub max_deviation: f64,
    pub max_logit_diff: f64,
    pub max_grad_scale_err: f64,
    /// First step whose deviation or logit difference exceeds tolerance.
    pub first_failing_step: Option<usize>,
    /// Step at which an iterate became non-finite, if any.
    pub diverged_at: Option<usize>,
    pub passed: bool,
    pub seconds: f64,
}

impl EquivalenceReport {
    pub fn steps_csv(&self) -> String {
        let mut out = String::from("t,deviation,logit_diff,grad_scale_err,loss,eta,lambda\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.t,
                crate::util::fmt_f64(s.deviation),
                crate::util::fmt_f64(s.logit_diff),
                crate::util::fmt_f64(s.grad_scale_err),
                crate::util::fmt_f64(s.loss),
                crate::util::fmt_f64(s.eta),
                crate::util::fmt_f64(s.lambda),
            ));
        }
        out
    }
}

/// Report plus the endpoint checkpoints of runs (A) and (B).
#[derive(Clone, Debug)]
pub struct EquivalenceRun {
    pub report: EquivalenceReport,
    pub final_a: Checkpoint,
    pub final_b: Checkpoint,
}

fn logits(spec: &NetSpec, ck: &Checkpoint, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    netcore::all_logits(spec, &ck.weights, &ck.biases, data)
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn require_scale_invariant(spec: &NetSpec) -> Result<()> {
    spec.validate()?;
    if !spec.normalize_hidden || !spec.frozen_readout || spec.bias_enabled || spec.num_layers() < 2 {
        return Err(Error::InvalidSpec(
            "Exp++ needs a scale-invariant network (normalized hidden layers, no biases, frozen readout)".into(),
        ));
    }
    Ok(())
}

/// Runs update (A) with fixed `(η₀, λ)` and update (B) with the Exp++
/// schedule in lockstep, full batch, from the same initialization.
pub fn verify_equivalence(spec: &NetSpec, data: &Dataset, params: &ExpPPParams, cfg: &VerifyConfig) -> Result<EquivalenceRun> {
    let sched = schedule(params, cfg.horizon)?;
    run_lockstep(spec, data, params, &sched, cfg)
}

/// Lockstep runner for an arbitrary (B) schedule; `verify_equivalence` uses
/// the Exp++ one.
pub fn run_lockstep(
    spec: &NetSpec,
    data: &Dataset,
    params: &ExpPPParams,
    sched: &ExpPPSchedule,
    cfg: &VerifyConfig,
) -> Result<EquivalenceRun> {
    require_scale_invariant(spec)?;
    let derived = derive(params)?;
    if data.is_empty() {
        return Err(Error::InvalidDataset("equivalence check needs a non-empty dataset".into()));
    }
    let start = Instant::now();
    let alpha = sched.alpha;
    let batch = data.indices();
    let init = Checkpoint::init(spec, cfg.seed)?;
    let theta0 = init.trainable(spec);
    let mut a = OptState::new(theta0.clone(), params.eta0);
    let prev_b = theta0.iter().map(|v| sched.theta_prev_scale * v).collect();
    let mut b = OptState::with_buffers(theta0, prev_b, sched.eta_prev);
    let mut ck_a = init.clone();
    let mut ck_b = init;

    let mut steps = Vec::with_capacity(sched.horizon + 1);
    let mut diverged_at = None;
    let mut scale = 1.0; // α^t
    for t in 0..=sched.horizon {
        ck_a.set_trainable(spec, &a.theta_curr)?;
        ck_b.set_trainable(spec, &b.theta_curr)?;
        let scaled: Vec<f64> = b.theta_curr.iter().map(|v| scale * v).collect();
        let deviation = norm(&crate::linalg::sub(&scaled, &a.theta_curr)) / norm(&a.theta_curr);
        let logit_diff = max_abs_diff(&logits(spec, &ck_a, data)?, &logits(spec, &ck_b, data)?);
        let ga = backward(spec, &ck_a, data, &batch)?;
        let gb = backward(spec, &ck_b, data, &batch)?;
        let expected = scale * norm_sq(&ga.grad).sqrt();
        let grad_scale_err = if expected > 0.0 {
            (norm(&gb.grad) - expected).abs() / expected
        } else {
            norm(&gb.grad)
        };
        let (eta, lambda) = if t < sched.horizon {
            (sched.etas[t], sched.lambdas[t])
        } else {
            (f64::NAN, f64::NAN)
        };
        steps.push(StepReport {
            t,
            deviation,
            logit_diff,
            grad_scale_err,
            loss: ga.loss,
            eta,
            lambda,
        });
        if t == sched.horizon {
            break;
        }
        let stepped = sgdm_step(&mut a, &ga.grad, params.eta0, params.gamma, params.lambda)
            .and_then(|_| sgdm_step(&mut b, &gb.grad, eta, params.gamma, lambda));
        if let Err(Error::NumericalDivergence { step }) = stepped {
            diverged_at = Some(step);
            break;
        }
        stepped?;
        scale *= alpha;
    }

    let max_of = |f: fn(&StepReport) -> f64| steps.iter().map(f).fold(0.0, f64::max);
    let max_deviation = max_of(|s| s.deviation);
    let max_logit_diff = max_of(|s| s.logit_diff);
    let max_grad_scale_err = max_of(|s| s.grad_scale_err);
    let first_failing_step = steps
        .iter()
        .find(|s| !(s.deviation <= cfg.tol && s.logit_diff <= cfg.logit_tol))
        .map(|s| s.t)
        .or(diverged_at);
    let report = EquivalenceReport {
        params: *params,
        derived,
        horizon: sched.horizon,
        tol: cfg.tol,
        logit_tol: cfg.logit_tol,
        passed: first_failing_step.is_none(),
        steps,
        max_deviation,
        max_logit_diff,
        max_grad_scale_err,
        first_failing_step,
        diverged_at,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(EquivalenceRun {
        report,
        final_a: ck_a,
        final_b: ck_b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflationReport {
    pub alpha: f64,
    pub horizon: usize,
    pub equivalence_passed: bool,
    pub max_deviation: f64,
    pub test_error_a: f64,
    pub test_error_b: f64,
    /// `α^{−T}`.
    pub expected_norm_ratio: f64,
    /// Measure (B) / measure (A); absent when either side failed or is zero.
    pub ratios: BTreeMap<String, Option<f64>>,
    pub measures_a: BTreeMap<String, measures::MeasureEntry>,
    pub measures_b: BTreeMap<String, measures::MeasureEntry>,
}

fn ratios(a: &MeasureSet, b: &MeasureSet) -> BTreeMap<String, Option<f64>> {
    a.values
        .keys()
        .map(|k| {
            let r = match (a.get(k), b.get(k)) {
                (Some(x), Some(y)) => Some(y / x).filter(|r| r.is_finite()),
                _ => None,
            };
            (k.clone(), r)
        })
        .collect()
}

/// Measures at the endpoints of runs (A) and (B): equal functions, weights
/// apart by `α^{−T}`.
pub fn inflation_demo(
    spec: &NetSpec,
    train: &Dataset,
    test: &Dataset,
    params: &ExpPPParams,
    cfg: &VerifyConfig,
    measure_cfg: &MeasureConfig,
) -> Result<InflationReport> {
    let run = verify_equivalence(spec, train, params, cfg)?;
    let ma = measures::compute_all(spec, &run.final_a, train, measure_cfg, cfg.seed)?;
    let mb = measures::compute_all(spec, &run.final_b, train, measure_cfg, cfg.seed)?;
    let test_error_a = evaluate(spec, &run.final_a, test)?.error();
    let test_error_b = evaluate(spec, &run.final_b, test)?.error();
    if run.report.passed && test_error_a != test_error_b {
        return Err(Error::InvalidConfig(format!(
            "equivalent runs disagree on test error: {test_error_a} vs {test_error_b}"
        )));
    }
    Ok(InflationReport {
        alpha: params.alpha,
        horizon: cfg.horizon,
        equivalence_passed: run.report.passed,
        max_deviation: run.report.max_deviation,
        test_error_a,
        test_error_b,
        expected_norm_ratio: params.alpha.powi(-(cfg.horizon as i32)),
        ratios: ratios(&ma, &mb),
        measures_a: ma.values,
        measures_b: mb.values,
    })
}

/// `count` log-spaced values in `(α_L, α_−]`, ending at `α_−`.
pub fn alpha_grid(params: &ExpPPParams, count: usize) -> Result<Vec<f64>> {
    let d = derive(params)?;
    let (lo, hi) = (d.interval.alpha_l, d.interval.alpha_minus);
    if !(lo < hi) || lo <= 0.0 || count == 0 {
        return Err(Error::InadmissibleAlpha {
            alpha: params.alpha,
            interval: d.interval.to_string(),
        });
    }
    let (l, h) = (lo.ln(), hi.ln());
    Ok((1..=count)
        .map(|i| if i == count { hi } else { (l + (h - l) * i as f64 / count as f64).exp() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::synth_blobs;

    fn p(eta0: f64, gamma: f64, lambda: f64, alpha: f64) -> ExpPPParams {
        ExpPPParams { eta0, gamma, lambda, alpha }
    }

    #[test]
    fn endpoints_without_weight_decay() {
        let d = derive(&p(0.01, 0.9, 0.0, 0.9)).unwrap();
        assert!((d.delta_lambda - 0.01).abs() < 1e-15);
        assert!((d.interval.alpha_l - 0.9 / 1.9).abs() < 1e-15);
        assert!((d.interval.alpha_minus - 0.9).abs() < 1e-15);
        assert_eq!(d.interval.alpha_plus, 1.0);
        assert!(d.interval.contains(0.9) && !d.interval.contains(0.47) && !d.interval.contains(0.95));
        assert!(d.remark_ok && !d.interval_empty);
    }

    #[test]
    fn empty_interval_without_momentum() {
        let d = derive(&p(0.1, 0.0, 0.0, 0.5)).unwrap();
        assert_eq!(d.interval.alpha_minus, 0.0);
        assert_eq!(d.interval.alpha_plus, 1.0);
        assert!(d.interval_empty);
        assert!(matches!(schedule(&p(0.1, 0.0, 0.0, 0.5), 5), Err(Error::InadmissibleAlpha { .. })));
    }

    #[test]
    fn remark_threshold() {
        let g: f64 = 0.9;
        assert!(((1.0 - g.sqrt()).powi(2) - 0.0026334).abs() < 1e-7);
        let d = derive(&p(0.01, 0.9, 5e-4, 0.9)).unwrap();
        assert!(d.remark_ok);
    }

    #[test]
    fn complex_endpoints() {
        assert!(matches!(derive(&p(1.0, 0.9, 0.5, 0.9)), Err(Error::ComplexEndpoints(_))));
    }

    #[test]
    fn schedule_identities() {
        let params = p(0.01, 0.9, 5e-4, 0.8);
        let s = schedule(&params, 30).unwrap();
        assert!((s.etas[0] - 0.01 / 0.8).abs() < 1e-16);
        let beta = params.beta(0.8);
        for t in 0..30 {
            assert!((s.lambdas[t] * s.etas[t] + beta - 1.0).abs() < 1e-12);
            if t > 0 {
                assert!(s.etas[t] > s.etas[t - 1]);
            }
        }
        let zero = schedule(&p(0.01, 0.9, 0.0, 0.9), 50).unwrap();
        assert!(zero.lambdas.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn beta_in_unit_interval_across_interval() {
        for &(eta0, gamma, lambda) in &[(0.01, 0.9, 0.0), (0.01, 0.9, 0.2), (0.1, 0.5, 0.05), (0.05, 0.99, 0.0)] {
            let d = derive(&p(eta0, gamma, lambda, 0.5)).unwrap();
            let iv = d.interval;
            for i in 1..=1000 {
                let a = iv.alpha_l + (iv.alpha_minus - iv.alpha_l) * i as f64 / 1000.0;
                let b = p(eta0, gamma, lambda, a).beta(a);
                assert!(b > 0.0 && b <= 1.0 + 1e-12, "beta {b} at alpha {a}");
            }
        }
    }

    #[test]
    fn alpha_grid_is_admissible() {
        let params = p(0.01, 0.9, 0.0, 0.9);
        let g = alpha_grid(&params, 8).unwrap();
        let d = derive(&params).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.iter().all(|&a| d.interval.contains(a)));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    fn small_setup() -> (NetSpec, Dataset) {
        (NetSpec::scale_invariant(&[4, 12, 12, 3]), synth_blobs(60, 4, 3, 3.0, 7).unwrap())
    }

    #[test]
    fn lockstep_runs_agree() {
        let (spec, data) = small_setup();
        let cfg = VerifyConfig { horizon: 60, ..VerifyConfig::default() };
        let r = verify_equivalence(&spec, &data, &p(0.05, 0.9, 0.01, 0.85), &cfg).unwrap().report;
        assert!(r.passed, "max deviation {}", r.max_deviation);
        assert_eq!(r.steps[0].deviation, 0.0);
        assert!(r.max_grad_scale_err < 1e-6);
    }

    #[test]
    fn stated_first_step_correction_breaks_equivalence() {
        let (spec, data) = small_setup();
        let params = p(0.05, 0.9, 0.0, 0.85);
        let cfg = VerifyConfig { horizon: 20, ..VerifyConfig::default() };
        let mut s = schedule(&params, 20).unwrap();
        s.lambdas[0] += first_step_correction(&params);
        let r = run_lockstep(&spec, &data, &params, &s, &cfg).unwrap().report;
        assert!(!r.passed);
        assert_eq!(r.first_failing_step, Some(1));
    }

    #[test]
    fn rejects_non_invariant_net() {
        let spec = NetSpec::relu(&[4, 8, 3], true);
        let data = synth_blobs(30, 4, 3, 3.0, 1).unwrap();
        let e = verify_equivalence(&spec, &data, &p(0.05, 0.9, 0.0, 0.85), &VerifyConfig::default());
        assert!(matches!(e, Err(Error::InvalidSpec(_))));
    }
}
