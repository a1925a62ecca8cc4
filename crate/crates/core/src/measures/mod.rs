//! Generalization measures computed from a checkpoint and its training set.
//!
//! Parameter-space measures (norms, distances, spectral quantities, PAC-Bayes
//! terms) range over the trainable layers; a frozen readout is part of the
//! architecture, not of the learned parameters. `PATH_NORM` and `PARAMS` use
//! the whole network. `n` is always the training-set size.
//!
//! Every measure is evaluated on a canonical relabeling of the hidden units,
//! so relabeling a network's hidden units cannot change any value, including
//! the Monte Carlo σ searches.

mod sigma;
mod spectral;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use sigma::{sigma_search, DropCurve, Perturbation, SigmaConfig, SigmaSearchResult};
pub use spectral::{spectral_norm, SpectralNorm, DEFAULT_MAX_ITERS, DEFAULT_TOL};

use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Matrix};
use crate::netcore::{self, Checkpoint, NetSpec};

/// Measure names, in the order of the fragility tables.
pub const MEASURE_NAMES: [&str; 24] = [
    "PARAMS",
    "PACBAYES_MAG_ORIG",
    "PACBAYES_MAG_INIT",
    "FRO_OVER_SPEC",
    "INVERSE_MARGIN",
    "PACBAYES_MAG_FLATNESS",
    "PACBAYES_FLATNESS",
    "PACBAYES_ORIG",
    "SUM_OF_FRO_OVER_MARGIN",
    "SUM_OF_FRO",
    "PATH_NORM_OVER_MARGIN",
    "SUM_OF_SPEC_OVER_MARGIN",
    "SUM_OF_SPEC",
    "PACBAYES_INIT",
    "PARAM_NORM",
    "PATH_NORM",
    "DIST_SPEC_INIT",
    "FRO_DIST",
    "PROD_OF_FRO",
    "PROD_OF_FRO_OVER_MARGIN",
    "SPEC_ORIG_MAIN",
    "PROD_OF_SPEC_OVER_MARGIN",
    "SPEC_INIT_MAIN",
    "PROD_OF_SPEC",
];

const MARGIN_MEASURES: [&str; 8] = [
    "INVERSE_MARGIN",
    "SUM_OF_FRO_OVER_MARGIN",
    "PROD_OF_FRO_OVER_MARGIN",
    "SUM_OF_SPEC_OVER_MARGIN",
    "PROD_OF_SPEC_OVER_MARGIN",
    "PATH_NORM_OVER_MARGIN",
    "SPEC_ORIG_MAIN",
    "SPEC_INIT_MAIN",
];
const SIGMA_MEASURES: [&str; 3] = ["PACBAYES_ORIG", "PACBAYES_INIT", "PACBAYES_FLATNESS"];
const SIGMA_MAG_MEASURES: [&str; 3] = ["PACBAYES_MAG_ORIG", "PACBAYES_MAG_INIT", "PACBAYES_MAG_FLATNESS"];

pub fn is_measure(name: &str) -> bool {
    MEASURE_NAMES.contains(&name)
}

/// A measure value or the reason it is absent. Zero values are stored with
/// the `ZeroValue` tag so log-based statistics never see them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureEntry {
    Value(f64),
    Error { error: String },
}

pub const ZERO_TAG: &str = "ZeroValue";

impl MeasureEntry {
    pub fn from_value(v: f64) -> Self {
        if v > 0.0 && v.is_finite() {
            MeasureEntry::Value(v)
        } else if v == 0.0 {
            MeasureEntry::Error { error: ZERO_TAG.into() }
        } else {
            MeasureEntry::Error {
                error: "NonFiniteValue".into(),
            }
        }
    }

    pub fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => MeasureEntry::from_value(v),
            Err(e) => MeasureEntry::Error { error: e.kind().into() },
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MeasureEntry::Value(v) => Some(*v),
            MeasureEntry::Error { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureConfig {
    pub margin_percentile: f64,
    /// Confidence parameter inside the PAC-Bayes terms.
    pub delta: f64,
    pub sigma: SigmaConfig,
    pub power_tol: f64,
    pub power_max_iters: usize,
    /// Restrict evaluation to these names; `None` means all.
    pub only: Option<Vec<String>>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            margin_percentile: netcore::DEFAULT_MARGIN_PERCENTILE,
            delta: 0.05,
            sigma: SigmaConfig::default(),
            power_tol: DEFAULT_TOL,
            power_max_iters: DEFAULT_MAX_ITERS,
            only: None,
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.only.iter().flatten().find(|n| !is_measure(n)) {
            return Err(Error::InvalidConfig(format!("unknown measure {bad}")));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta {} outside (0, 1)", self.delta)));
        }
        Ok(())
    }

    fn wants(&self, name: &str) -> bool {
        self.only.as_ref().is_none_or(|o| o.iter().any(|n| n == name))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub delta: f64,
    pub margin_gamma: Option<f64>,
    pub sigma: Option<SigmaSearchResult>,
    pub sigma_mag: Option<SigmaSearchResult>,
    pub spectral: Vec<SpectralNorm>,
    pub spectral_dist: Vec<SpectralNorm>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureSet {
    pub values: BTreeMap<String, MeasureEntry>,
    pub diagnostics: Diagnostics,
}

impl MeasureSet {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).and_then(MeasureEntry::value)
    }
}

fn positive_margin(gamma: f64) -> Result<f64> {
    if gamma > 0.0 {
        Ok(gamma)
    } else {
        Err(Error::MarginNotPositive(gamma))
    }
}

/// Trainable weight matrices and their initial values.
fn trainable_pairs<'a>(spec: &NetSpec, ck: &'a Checkpoint) -> Vec<(&'a Matrix, &'a Matrix)> {
    spec.trainable_layers()
        .map(|i| (&ck.weights[i], &ck.init_weights[i]))
        .collect()
}

/// `{FRO_DIST, PARAM_NORM, SUM_OF_FRO, PROD_OF_FRO}` and the margin variants
/// (the latter only when `gamma` is given).
pub fn frobenius_measures(
    spec: &NetSpec,
    ck: &Checkpoint,
    n: usize,
    gamma: Option<f64>,
) -> BTreeMap<&'static str, Result<f64>> {
    let n = n as f64;
    let pairs = trainable_pairs(spec, ck);
    let dist: f64 = pairs.iter().map(|(w, w0)| w.sub(w0).frobenius_sq()).sum();
    let sum: f64 = pairs.iter().map(|(w, _)| w.frobenius_sq()).sum();
    let prod: f64 = pairs.iter().map(|(w, _)| w.frobenius_sq()).product();
    let mut out = BTreeMap::new();
    out.insert("FRO_DIST", Ok((dist / n).sqrt()));
    out.insert("PARAM_NORM", Ok((sum / n).sqrt()));
    out.insert("SUM_OF_FRO", Ok((sum / n).sqrt()));
    out.insert("PROD_OF_FRO", Ok((prod / n).sqrt()));
    if let Some(g) = gamma {
        out.insert("SUM_OF_FRO_OVER_MARGIN", positive_margin(g).map(|g| (sum / (g * g * n)).sqrt()));
        out.insert("PROD_OF_FRO_OVER_MARGIN", positive_margin(g).map(|g| (prod / (g * g * n)).sqrt()));
    }
    out
}

pub fn inverse_margin(n: usize, gamma: f64) -> Result<f64> {
    Ok((n as f64).sqrt() / positive_margin(gamma)?)
}

/// Spectral-norm measures. Returns the values and the per-layer power
/// iteration diagnostics (current weights, then distances from init).
#[allow(clippy::type_complexity)]
pub fn spectral_measures(
    spec: &NetSpec,
    ck: &Checkpoint,
    n: usize,
    gamma: Option<f64>,
    tol: f64,
    max_iters: usize,
) -> (BTreeMap<&'static str, Result<f64>>, Vec<SpectralNorm>, Vec<SpectralNorm>) {
    let n = n as f64;
    let pairs = trainable_pairs(spec, ck);
    let layers: Vec<usize> = spec.trainable_layers().collect();
    let spec_w: Vec<SpectralNorm> = pairs.iter().map(|(w, _)| spectral_norm(w, tol, max_iters)).collect();
    let spec_d: Vec<SpectralNorm> = pairs
        .iter()
        .map(|(w, w0)| spectral_norm(&w.sub(w0), tol, max_iters))
        .collect();
    let s2: Vec<f64> = spec_w.iter().map(|s| s.value * s.value).collect();
    let sum: f64 = s2.iter().sum();
    let prod: f64 = s2.iter().product();
    let dist: f64 = spec_d.iter().map(|s| s.value * s.value).sum();

    let degenerate = s2.iter().position(|&v| v == 0.0).map(|k| layers[k]);
    // Σ_k reference_k / ‖W_k‖₂², or the first degenerate layer
    let ratio_sum = |reference: &dyn Fn(usize) -> f64| -> Result<f64, usize> {
        match degenerate {
            Some(l) => Err(l),
            None => Ok((0..pairs.len()).map(|k| reference(k) / s2[k]).sum()),
        }
    };
    let stable = ratio_sum(&|k| pairs[k].0.frobenius_sq());
    let orig = ratio_sum(&|k| pairs[k].0.frobenius_sq());
    let init = ratio_sum(&|k| pairs[k].0.sub(pairs[k].1).frobenius_sq());

    let mut out = BTreeMap::new();
    out.insert("SUM_OF_SPEC", Ok((sum / n).sqrt()));
    out.insert("PROD_OF_SPEC", Ok((prod / n).sqrt()));
    out.insert("DIST_SPEC_INIT", Ok((dist / n).sqrt()));
    out.insert("FRO_OVER_SPEC", stable.map_err(Error::DegenerateLayer));
    if let Some(g) = gamma {
        let margin = |f: &dyn Fn(f64) -> Result<f64>| positive_margin(g).and_then(|g| f(g * g));
        out.insert("SUM_OF_SPEC_OVER_MARGIN", margin(&|g2| Ok((sum / (g2 * n)).sqrt())));
        out.insert("PROD_OF_SPEC_OVER_MARGIN", margin(&|g2| Ok((prod / (g2 * n)).sqrt())));
        out.insert(
            "SPEC_ORIG_MAIN",
            margin(&|g2| Ok(prod * orig.map_err(Error::DegenerateLayer)? / (g2 * n))),
        );
        out.insert(
            "SPEC_INIT_MAIN",
            margin(&|g2| Ok(prod * init.map_err(Error::DegenerateLayer)? / (g2 * n))),
        );
    }
    (out, spec_w, spec_d)
}

/// Output sum of the network with every weight (and bias) squared on the
/// all-ones input, with normalization bypassed.
pub fn squared_path_sum(spec: &NetSpec, ck: &Checkpoint) -> f64 {
    let mut h = vec![1.0; spec.input_dim()];
    for (i, w) in ck.weights.iter().enumerate() {
        let sq = Matrix {
            rows: w.rows,
            cols: w.cols,
            data: w.data.iter().map(|v| v * v).collect(),
        };
        let mut z = sq.matvec(&h);
        if let Some(b) = ck.biases.get(i) {
            z.iter_mut().zip(b).for_each(|(zi, bi)| *zi += bi * bi);
        }
        // squared weights and a non-negative input keep every unit >= 0, so
        // the ReLU is the identity here
        h = z;
    }
    let s: f64 = h.iter().sum();
    debug_assert!(s >= 0.0);
    s
}

pub fn path_norm(spec: &NetSpec, ck: &Checkpoint, n: usize, gamma: Option<f64>) -> BTreeMap<&'static str, Result<f64>> {
    let s = squared_path_sum(spec, ck);
    let n = n as f64;
    let mut out = BTreeMap::new();
    out.insert("PATH_NORM", Ok((s / n).sqrt()));
    if let Some(g) = gamma {
        out.insert("PATH_NORM_OVER_MARGIN", positive_margin(g).map(|g| (s / (g * g * n)).sqrt()));
    }
    out
}

/// `sqrt(Σ_i c_{i−1} (c_i + 1) / n)` over all layers.
pub fn vc_params_proxy(spec: &NetSpec, n: usize) -> f64 {
    let s: usize = spec.layer_dims.windows(2).map(|d| d[0] * (d[1] + 1)).sum();
    (s as f64 / n as f64).sqrt()
}

pub fn pacbayes_value(quadratic: f64, n: usize, delta: f64) -> f64 {
    let n = n as f64;
    (quadratic + (n / delta).ln() + 10.0).sqrt() / n.sqrt()
}

/// PAC-Bayes measures given the trainable parameters `w`, their
/// initialization `w0`, and whichever radii were found.
pub fn pacbayes_measures(
    w: &[f64],
    w0: &[f64],
    n: usize,
    sigma: Option<f64>,
    sigma_mag: Option<f64>,
    kappa: f64,
    delta: f64,
) -> BTreeMap<&'static str, Option<f64>> {
    let mut out = BTreeMap::new();
    let sqrt_n = (n as f64).sqrt();
    let dist: Vec<f64> = crate::linalg::sub(w, w0);
    out.insert("PACBAYES_ORIG", sigma.map(|s| pacbayes_value(norm_sq(w) / (4.0 * s * s), n, delta)));
    out.insert("PACBAYES_INIT", sigma.map(|s| pacbayes_value(norm_sq(&dist) / (4.0 * s * s), n, delta)));
    out.insert("PACBAYES_FLATNESS", sigma.map(|s| 1.0 / (s * sqrt_n)));
    let mag = |s0: f64, diff: &[f64]| -> f64 {
        diff.iter()
            .zip(w)
            .map(|(d, wi)| {
                let scale = s0 * (wi.abs() + kappa);
                d * d / (4.0 * scale * scale)
            })
            .sum()
    };
    out.insert("PACBAYES_MAG_ORIG", sigma_mag.map(|s0| pacbayes_value(mag(s0, w), n, delta)));
    out.insert("PACBAYES_MAG_INIT", sigma_mag.map(|s0| pacbayes_value(mag(s0, &dist), n, delta)));
    out.insert("PACBAYES_MAG_FLATNESS", sigma_mag.map(|s0| 1.0 / (s0 * sqrt_n)));
    out
}

/// Reorders hidden units layer by layer so that incoming weight rows (then
/// biases, then outgoing columns) are lexicographically sorted. The function
/// computed is unchanged, and two networks that differ only by a relabeling
/// of hidden units map to the same checkpoint.
pub fn canonicalize(spec: &NetSpec, ck: &Checkpoint) -> Checkpoint {
    let mut out = ck.clone();
    for i in 0..spec.num_layers() - 1 {
        let rows = out.weights[i].rows;
        let key = |u: usize| -> Vec<f64> {
            let w = &out.weights[i];
            let next = &out.weights[i + 1];
            let mut k = w.row(u).to_vec();
            if let Some(b) = out.biases.get(i) {
                k.push(b[u]);
            }
            k.extend((0..next.rows).map(|r| next.get(r, u)));
            k
        };
        let keys: Vec<Vec<f64>> = (0..rows).map(key).collect();
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&a, &b| {
            keys[a]
                .iter()
                .zip(&keys[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for (ws, bs) in [(&mut out.weights, &mut out.biases), (&mut out.init_weights, &mut out.init_biases)] {
            ws[i] = permute_rows(&ws[i], &order);
            ws[i + 1] = permute_cols(&ws[i + 1], &order);
            if let Some(b) = bs.get_mut(i) {
                *b = order.iter().map(|&u| b[u]).collect();
            }
        }
    }
    out
}

pub fn permute_rows(m: &Matrix, order: &[usize]) -> Matrix {
    Matrix::from_vec(m.rows, m.cols, order.iter().flat_map(|&r| m.row(r).iter().copied()).collect())
}

pub fn permute_cols(m: &Matrix, order: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        for (c, &src) in order.iter().enumerate() {
            out.set(r, c, m.get(r, src));
        }
    }
    out
}

/// Evaluates every requested measure; failures are recorded per measure.
pub fn compute_all(spec: &NetSpec, ckpt: &Checkpoint, data: &Dataset, cfg: &MeasureConfig, seed: u64) -> Result<MeasureSet> {
    cfg.validate()?;
    ckpt.check(spec)?;
    let ck = canonicalize(spec, ckpt);
    let n = data.len();
    let mut set = MeasureSet::default();
    set.diagnostics.n = n;
    set.diagnostics.delta = cfg.delta;

    let gamma = netcore::margins(spec, &ck, data, cfg.margin_percentile);
    let (gamma_val, margin_err) = match &gamma {
        Ok(m) => (Some(m.margin_gamma), None),
        Err(e) => (None, Some(e.kind())),
    };
    set.diagnostics.margin_gamma = gamma_val;

    let mut results: BTreeMap<&'static str, Result<f64>> = BTreeMap::new();
    results.extend(frobenius_measures(spec, &ck, n, gamma_val));
    let (spec_vals, sw, sd) = spectral_measures(spec, &ck, n, gamma_val, cfg.power_tol, cfg.power_max_iters);
    results.extend(spec_vals);
    set.diagnostics.spectral = sw;
    set.diagnostics.spectral_dist = sd;
    results.extend(path_norm(spec, &ck, n, gamma_val));
    results.insert("PARAMS", Ok(vc_params_proxy(spec, n)));
    if let Some(g) = gamma_val {
        results.insert("INVERSE_MARGIN", inverse_margin(n, g));
    }

    for (name, r) in results {
        if cfg.wants(name) {
            set.values.insert(name.to_string(), MeasureEntry::from_result(r));
        }
    }
    if let Some(kind) = margin_err {
        // margins could not be computed at all (e.g. a single-class set)
        for name in MARGIN_MEASURES.iter().filter(|m| cfg.wants(m)) {
            set.values.insert(name.to_string(), MeasureEntry::Error { error: kind.into() });
        }
    }

    let need_sigma = SIGMA_MEASURES.iter().any(|m| cfg.wants(m));
    let need_mag = SIGMA_MAG_MEASURES.iter().any(|m| cfg.wants(m));
    let search = |mode| sigma_search(spec, &ck, data, mode, &cfg.sigma, seed);
    let sigma = need_sigma.then(|| search(Perturbation::Isotropic));
    let sigma_mag = need_mag.then(|| search(Perturbation::Magnitude));
    let radius = |r: &Option<Result<SigmaSearchResult>>| r.as_ref().and_then(|r| r.as_ref().ok()).map(|s| s.sigma);
    let w = ck.trainable(spec);
    let w0 = ck.trainable_init(spec);
    let pac = pacbayes_measures(&w, &w0, n, radius(&sigma), radius(&sigma_mag), cfg.sigma.kappa, cfg.delta);
    for (name, v) in pac {
        if !cfg.wants(name) {
            continue;
        }
        let source = if SIGMA_MAG_MEASURES.contains(&name) { &sigma_mag } else { &sigma };
        let entry = match (v, source) {
            (Some(v), _) => MeasureEntry::from_value(v),
            (None, Some(Err(e))) => MeasureEntry::Error { error: e.kind().into() },
            (None, _) => MeasureEntry::Error {
                error: "SigmaSearchFailed".into(),
            },
        };
        set.values.insert(name.to_string(), entry);
    }
    set.diagnostics.sigma = sigma.and_then(Result::ok);
    set.diagnostics.sigma_mag = sigma_mag.and_then(Result::ok);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_layer(rows: &[Vec<f64>]) -> (NetSpec, Checkpoint) {
        let m = Matrix::from_rows(rows);
        let spec = NetSpec::relu(&[m.cols, m.rows], false);
        let ck = Checkpoint::from_parts(&spec, vec![m], vec![]).unwrap();
        (spec, ck)
    }

    #[test]
    fn param_norm_hand_value() {
        let (spec, mut ck) = one_layer(&[vec![3.0, 4.0]]);
        let f = frobenius_measures(&spec, &ck, 1, None);
        assert_eq!(*f["PARAM_NORM"].as_ref().unwrap(), 5.0);
        assert_eq!(*f["FRO_DIST"].as_ref().unwrap(), 0.0);
        ck.weights[0] = ck.weights[0].scaled(2.0);
        let f = frobenius_measures(&spec, &ck, 1, None);
        assert_eq!(*f["PARAM_NORM"].as_ref().unwrap(), 10.0);
    }

    #[test]
    fn zero_values_are_tagged() {
        assert_eq!(MeasureEntry::from_value(0.0), MeasureEntry::Error { error: ZERO_TAG.into() });
        assert_eq!(MeasureEntry::from_value(2.0), MeasureEntry::Value(2.0));
    }

    #[test]
    fn inverse_margin_values() {
        assert_eq!(inverse_margin(4, 2.0).unwrap(), 1.0);
        assert_eq!(inverse_margin(100, 0.5).unwrap(), 20.0);
        assert!(matches!(inverse_margin(4, 0.0), Err(Error::MarginNotPositive(_))));
    }

    #[test]
    fn spectral_hand_values() {
        let (spec, ck) = one_layer(&[vec![3.0, 0.0], vec![0.0, 1.0]]);
        let (m, _, _) = spectral_measures(&spec, &ck, 1, Some(1.0), 1e-12, 10_000);
        assert!((m["SUM_OF_SPEC"].as_ref().unwrap() - 3.0).abs() < 1e-12);
        assert!((m["FRO_OVER_SPEC"].as_ref().unwrap() - 10.0 / 9.0).abs() < 1e-12);
        assert!(matches!(m["DIST_SPEC_INIT"], Ok(v) if v == 0.0));

        let (spec, ck) = one_layer(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let (m, _, _) = spectral_measures(&spec, &ck, 1, None, 1e-12, 10_000);
        assert!((m["FRO_OVER_SPEC"].as_ref().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_layers_prod_of_spec() {
        let spec = NetSpec::relu(&[2, 2, 2], false);
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rot = Matrix::from_rows(&[vec![c, -c], vec![c, c]]);
        let ck = Checkpoint::from_parts(&spec, vec![rot.clone(), Matrix::identity(2)], vec![]).unwrap();
        let (m, _, _) = spectral_measures(&spec, &ck, 9, None, 1e-12, 10_000);
        assert!((m["PROD_OF_SPEC"].as_ref().unwrap() - (1.0f64 / 9.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_layer() {
        let spec = NetSpec::relu(&[2, 2, 2], false);
        let ck = Checkpoint::from_parts(&spec, vec![Matrix::zeros(2, 2), Matrix::identity(2)], vec![]).unwrap();
        let (m, _, _) = spectral_measures(&spec, &ck, 1, Some(1.0), 1e-12, 100);
        assert!(matches!(m["FRO_OVER_SPEC"], Err(Error::DegenerateLayer(0))));
        assert!(matches!(m["SPEC_ORIG_MAIN"], Err(Error::DegenerateLayer(0))));
    }

    #[test]
    fn path_norm_hand_values() {
        let (spec, ck) = one_layer(&[vec![3.0, 4.0]]);
        assert_eq!(*path_norm(&spec, &ck, 1, None)["PATH_NORM"].as_ref().unwrap(), 5.0);
        let spec = NetSpec::relu(&[2, 2, 2], false);
        let ck = Checkpoint::from_parts(&spec, vec![Matrix::identity(2), Matrix::identity(2)], vec![]).unwrap();
        assert_eq!(*path_norm(&spec, &ck, 2, None)["PATH_NORM"].as_ref().unwrap(), 1.0);
    }

    #[test]
    fn params_proxy() {
        let spec = NetSpec::relu(&[2, 3, 1], false);
        assert_eq!(vc_params_proxy(&spec, 1), 14f64.sqrt());
        assert_eq!(vc_params_proxy(&spec, 4), 14f64.sqrt() / 2.0);
    }

    #[test]
    fn pacbayes_hand_values() {
        let w = [2.0, 0.0];
        let p = pacbayes_measures(&w, &w, 100, Some(1.0), None, 1e-3, 0.05);
        let want = (1.0 + 2000f64.ln() + 10.0).sqrt() / 10.0;
        assert!((p["PACBAYES_ORIG"].unwrap() - want).abs() < 1e-15);
        assert!((want - 0.43129).abs() < 1e-5);
        let init_want = ((2000f64).ln() + 10.0).sqrt() / 10.0;
        assert!((p["PACBAYES_INIT"].unwrap() - init_want).abs() < 1e-15);
        let p2 = pacbayes_measures(&w, &w, 100, Some(2.0), None, 1e-3, 0.05);
        assert_eq!(p2["PACBAYES_FLATNESS"].unwrap(), p["PACBAYES_FLATNESS"].unwrap() / 2.0);
        assert!(p["PACBAYES_MAG_ORIG"].is_none());
    }

    #[test]
    fn margin_variants_equal_plain_at_unit_margin() {
        let spec = NetSpec::relu(&[3, 4, 2], false);
        let mut ck = Checkpoint::init(&spec, 2).unwrap();
        ck.weights[0] = ck.weights[0].scaled(1.3);
        let f = frobenius_measures(&spec, &ck, 7, Some(1.0));
        assert_eq!(f["SUM_OF_FRO"].as_ref().unwrap(), f["SUM_OF_FRO_OVER_MARGIN"].as_ref().unwrap());
        assert_eq!(f["PROD_OF_FRO"].as_ref().unwrap(), f["PROD_OF_FRO_OVER_MARGIN"].as_ref().unwrap());
        let (s, _, _) = spectral_measures(&spec, &ck, 7, Some(1.0), 1e-12, 10_000);
        assert_eq!(s["SUM_OF_SPEC"].as_ref().unwrap(), s["SUM_OF_SPEC_OVER_MARGIN"].as_ref().unwrap());
        assert_eq!(s["PROD_OF_SPEC"].as_ref().unwrap(), s["PROD_OF_SPEC_OVER_MARGIN"].as_ref().unwrap());
        let p = path_norm(&spec, &ck, 7, Some(1.0));
        assert_eq!(p["PATH_NORM"].as_ref().unwrap(), p["PATH_NORM_OVER_MARGIN"].as_ref().unwrap());
    }

    #[test]
    fn canonicalization_preserves_function() {
        let spec = NetSpec::relu(&[3, 5, 4, 2], true);
        let mut ck = Checkpoint::init(&spec, 4).unwrap();
        ck.biases[0] = vec![0.1, 0.2, -0.1, 0.0, 0.3];
        let can = canonicalize(&spec, &ck);
        let x = [0.2, -0.4, 0.9];
        let a = netcore::forward(&spec, &ck, &x).unwrap();
        let b = netcore::forward(&spec, &can, &x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        assert_eq!(canonicalize(&spec, &can), can);
    }
}
