//! Posterior-radius searches for the sharpness-based measures.
//!
//! Both searches bisect `ln σ` between `lo` and `hi` for the largest radius
//! whose mean train-accuracy drop stays within the target. Noise vectors are
//! drawn once per search (common random numbers) and scaled by the candidate
//! radius, so the drop is a deterministic function of σ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::netcore::{self, Checkpoint, NetSpec};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaConfig {
    pub target_dev: f64,
    pub mc_draws: usize,
    pub iters: usize,
    pub lo: f64,
    pub hi: f64,
    /// Floor added to `|w_i|` in the magnitude-aware scale.
    pub kappa: f64,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig {
            target_dev: 0.1,
            mc_draws: 15,
            iters: 20,
            lo: 1e-5,
            hi: 10.0,
            kappa: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `N(0, σ² I)`.
    Isotropic,
    /// Coordinate `i` gets std `σ₀ (|w_i| + κ)`.
    Magnitude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSearchResult {
    pub sigma: f64,
    pub target_dev: f64,
    pub mc_draws: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Mean accuracy drop at `sigma`.
    pub drop: f64,
}

/// Accuracy-drop evaluator with fixed noise draws.
pub struct DropCurve<'a> {
    spec: &'a NetSpec,
    ckpt: &'a Checkpoint,
    data: &'a Dataset,
    base_acc: f64,
    theta: Vec<f64>,
    scales: Vec<f64>,
    noise: Vec<Vec<f64>>,
}

impl<'a> DropCurve<'a> {
    pub fn new(
        spec: &'a NetSpec,
        ckpt: &'a Checkpoint,
        data: &'a Dataset,
        mode: Perturbation,
        cfg: &SigmaConfig,
        seed: u64,
    ) -> Result<Self> {
        let theta = ckpt.trainable(spec);
        let scales = match mode {
            Perturbation::Isotropic => vec![1.0; theta.len()],
            Perturbation::Magnitude => theta.iter().map(|w| w.abs() + cfg.kappa).collect(),
        };
        let mode_tag = match mode {
            Perturbation::Isotropic => rng::tag("sigma"),
            Perturbation::Magnitude => rng::tag("sigma_mag"),
        };
        let noise = (0..cfg.mc_draws)
            .map(|k| {
                let mut r = Rng::derive(seed, &[mode_tag, k as u64]);
                (0..theta.len()).map(|_| r.normal()).collect()
            })
            .collect();
        Ok(DropCurve {
            base_acc: netcore::evaluate(spec, ckpt, data)?.accuracy,
            spec,
            ckpt,
            data,
            theta,
            scales,
            noise,
        })
    }

    /// Mean accuracy drop at radius `sigma`.
    pub fn drop(&self, sigma: f64) -> Result<f64> {
        let accs: Vec<f64> = self
            .noise
            .par_iter()
            .map(|z| {
                let mut ck = self.ckpt.clone();
                let w: Vec<f64> = self
                    .theta
                    .iter()
                    .zip(&self.scales)
                    .zip(z)
                    .map(|((t, s), n)| t + sigma * s * n)
                    .collect();
                ck.set_trainable(self.spec, &w)?;
                Ok(netcore::evaluate(self.spec, &ck, self.data)?.accuracy)
            })
            .collect::<Result<_>>()?;
        Ok(self.base_acc - accs.iter().sum::<f64>() / accs.len().max(1) as f64)
    }
}

pub fn sigma_search(
    spec: &NetSpec,
    ckpt: &Checkpoint,
    data: &Dataset,
    mode: Perturbation,
    cfg: &SigmaConfig,
    seed: u64,
) -> Result<SigmaSearchResult> {
    if cfg.mc_draws == 0 || !(cfg.lo > 0.0 && cfg.lo < cfg.hi) {
        return Err(Error::InvalidConfig("sigma search needs mc_draws >= 1 and 0 < lo < hi".into()));
    }
    let curve = DropCurve::new(spec, ckpt, data, mode, cfg, seed)?;
    let result = |sigma, drop, iterations| SigmaSearchResult {
        sigma,
        target_dev: cfg.target_dev,
        mc_draws: cfg.mc_draws,
        iterations,
        converged: true,
        drop,
    };
    let d_hi = curve.drop(cfg.hi)?;
    if d_hi <= cfg.target_dev {
        return Ok(result(cfg.hi, d_hi, 0));
    }
    let d_lo = curve.drop(cfg.lo)?;
    if d_lo > cfg.target_dev {
        return Err(Error::SigmaSearchFailed {
            drop: d_lo,
            target: cfg.target_dev,
        });
    }
    let (mut lo, mut hi, mut d_at_lo) = (cfg.lo.ln(), cfg.hi.ln(), d_lo);
    for _ in 0..cfg.iters {
        let mid = 0.5 * (lo + hi);
        let d = curve.drop(mid.exp())?;
        if d <= cfg.target_dev {
            lo = mid;
            d_at_lo = d;
        } else {
            hi = mid;
        }
    }
    let mut r = result(lo.exp(), d_at_lo, cfg.iters);
    // bracket narrower than 1% in σ
    r.converged = hi - lo <= 0.01;
    Ok(r)
}
