//! Fragility scores: how far a measure moves between runs whose test errors
//! are already close.
//!
//! For a group of runs and a tolerance `δ`, the close-error pairs are
//! `{(r, s) : r < s, |ε_r − ε_s| ≤ δ}`. CMS is the median of
//! `|ln C_r − ln C_s|` over those pairs. eCMS splits the pairs into seed pairs
//! (same hyperparameters, different seed) and inter pairs (different
//! hyperparameters) and reports `max(0, median_inter − median_seed)`.
//! "Undefined" (no pairs) is carried as `None` and never coerced to 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::MEASURE_NAMES;
use crate::optimkit::RunRecord;
use crate::rng::{self, Rng};
use crate::util::{fmt_f64, median};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FragilityConfig {
    pub deltas: Vec<f64>,
    /// Pair budget per pair set; larger sets are subsampled uniformly.
    pub k: usize,
    pub subsample_seed: u64,
}

impl Default for FragilityConfig {
    fn default() -> Self {
        FragilityConfig {
            deltas: vec![0.01, 0.02, 0.05],
            k: 10_000,
            subsample_seed: 0,
        }
    }
}

impl FragilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidConfig("deltas must be nonempty and positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("pair budget K must be at least 1".into()));
        }
        Ok(())
    }
}

/// The scoring view of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub error: f64,
    pub h: String,
    pub seed: u64,
    pub value: f64,
}

/// Close-error pairs `(i, j)`, `i < j`, by sorting and a two-index scan.
/// Returned in lexicographic order.
pub fn close_error_pairs(errors: &[f64], delta: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));
    let mut pairs = Vec::new();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if errors[j] - errors[i] > delta {
                break;
            }
            pairs.push((i.min(j), i.max(j)));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// `|ln(a / b)|`, falling back to a difference of logs if the ratio leaves
/// the normal range. While the ratio is normal, replacing `(a, b)` by
/// `(2^k a, 2^k b)` gives the same bits.
pub fn log_spread(a: f64, b: f64) -> f64 {
    let r = a / b;
    if r.is_normal() {
        r.ln().abs()
    } else {
        (a.ln() - b.ln()).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    All,
    Seed,
    Inter,
}

impl PairClass {
    fn tag(self) -> u64 {
        rng::tag(match self {
            PairClass::All => "all",
            PairClass::Seed => "seed",
            PairClass::Inter => "inter",
        })
    }
}

/// Seed pairs and inter pairs of a pair list. Pairs with equal `H` and equal
/// seed (duplicates) belong to neither.
pub fn split_pairs(runs: &[Run], pairs: &[(usize, usize)]) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut seed = Vec::new();
    let mut inter = Vec::new();
    for &(r, s) in pairs {
        if runs[r].h != runs[s].h {
            inter.push((r, s));
        } else if runs[r].seed != runs[s].seed {
            seed.push((r, s));
        }
    }
    (seed, inter)
}

/// Identifies the PRNG stream used to subsample one pair set.
#[derive(Clone, Copy, Debug)]
pub struct StreamKey<'a> {
    pub group: &'a str,
    pub measure: &'a str,
    pub delta: f64,
}

fn spread_median(runs: &[Run], pairs: &[(usize, usize)], k: usize, seed: u64, key: StreamKey, class: PairClass) -> Option<f64> {
    let spreads: Vec<f64> = if pairs.len() > k {
        let mut rng = Rng::derive(
            seed,
            &[rng::tag(key.group), rng::tag(key.measure), key.delta.to_bits(), class.tag()],
        );
        rng.sample_indices(pairs.len(), k)
            .into_iter()
            .map(|p| log_spread(runs[pairs[p].0].value, runs[pairs[p].1].value))
            .collect()
    } else {
        pairs.iter().map(|&(r, s)| log_spread(runs[r].value, runs[s].value)).collect()
    };
    median(&spreads)
}

/// Scores of one (group, measure, δ) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub group: String,
    pub measure: String,
    pub delta: f64,
    pub cms: Option<f64>,
    pub cms_seed: Option<f64>,
    pub cms_inter: Option<f64>,
    pub ecms: Option<f64>,
    pub pairs: usize,
    pub seed_pairs: usize,
    pub inter_pairs: usize,
    pub runs_used: usize,
    /// Runs without a usable (positive, finite) value or test error.
    pub runs_excluded: usize,
}

/// CMS and eCMS for runs that all carry positive measure values.
pub fn score_runs(runs: &[Run], delta: f64, k: usize, seed: u64, key: StreamKey) -> CellScore {
    let errors: Vec<f64> = runs.iter().map(|r| r.error).collect();
    let pairs = close_error_pairs(&errors, delta);
    let (seed_pairs, inter_pairs) = split_pairs(runs, &pairs);
    let cms = spread_median(runs, &pairs, k, seed, key, PairClass::All);
    let cms_seed = spread_median(runs, &seed_pairs, k, seed, key, PairClass::Seed);
    let cms_inter = spread_median(runs, &inter_pairs, k, seed, key, PairClass::Inter);
    let ecms = match (cms_inter, cms_seed) {
        (Some(i), Some(s)) => Some((i - s).max(0.0)),
        _ => None,
    };
    CellScore {
        group: key.group.into(),
        measure: key.measure.into(),
        delta,
        cms,
        cms_seed,
        cms_inter,
        ecms,
        pairs: pairs.len(),
        seed_pairs: seed_pairs.len(),
        inter_pairs: inter_pairs.len(),
        runs_used: runs.len(),
        runs_excluded: 0,
    }
}

/// Runs of `records` usable for `measure`, plus how many were dropped.
pub fn usable_runs(records: &[&RunRecord], measure: &str) -> (Vec<Run>, usize) {
    let runs: Vec<Run> = records
        .iter()
        .filter_map(|r| {
            Some(Run {
                error: r.test_error.filter(|e| e.is_finite())?,
                h: r.h.hash(),
                seed: r.seed,
                value: r.measure(measure).filter(|v| *v > 0.0 && v.is_finite())?,
            })
        })
        .collect();
    let excluded = records.len() - runs.len();
    (runs, excluded)
}

pub fn cms(records: &[&RunRecord], measure: &str, delta: f64, k: usize, seed: u64) -> Option<f64> {
    score_group(records, measure, delta, k, seed).cms
}

pub fn ecms(records: &[&RunRecord], measure: &str, delta: f64, k: usize, seed: u64) -> Option<f64> {
    score_group(records, measure, delta, k, seed).ecms
}

/// Scores one group's records (which should share `group`).
pub fn score_group(records: &[&RunRecord], measure: &str, delta: f64, k: usize, seed: u64) -> CellScore {
    let group = records.first().map_or("", |r| r.group.as_str());
    let (runs, excluded) = usable_runs(records, measure);
    let key = StreamKey { group, measure, delta };
    let mut score = score_runs(&runs, delta, k, seed, key);
    score.runs_excluded = excluded;
    score
}

/// Median over groups with defined values, and the defined fraction.
pub fn aggregate(values: &[Option<f64>]) -> (Option<f64>, f64) {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let coverage = if values.is_empty() {
        0.0
    } else {
        defined.len() as f64 / values.len() as f64
    };
    (median(&defined), coverage)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub measure: String,
    pub cms_med: Option<f64>,
    pub ecms_med: Option<f64>,
    pub cms_coverage: f64,
    pub ecms_coverage: f64,
    /// One cell per group, in `FragilityTable::groups` order.
    pub cells: Vec<CellScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragilityTable {
    pub delta: f64,
    pub groups: Vec<String>,
    /// Sorted by `cms_med` ascending; undefined aggregates last.
    pub rows: Vec<MeasureRow>,
}

impl FragilityTable {
    pub fn all_undefined(&self) -> bool {
        self.rows.iter().all(|r| r.cms_med.is_none() && r.ecms_med.is_none())
    }
}

/// Scores every measure present in `records`, per group, for one `δ`.
pub fn score_table(records: &[RunRecord], delta: f64, k: usize, seed: u64) -> FragilityTable {
    let mut by_group: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_group.entry(r.group.as_str()).or_default().push(r);
    }
    let present: BTreeSet<&str> = records.iter().flat_map(|r| r.measures.keys().map(String::as_str)).collect();
    // vocabulary order first, then any foreign names alphabetically
    let mut measures: Vec<&str> = MEASURE_NAMES.iter().copied().filter(|m| present.contains(m)).collect();
    measures.extend(present.iter().copied().filter(|m| !MEASURE_NAMES.contains(m)));

    let mut rows: Vec<MeasureRow> = measures
        .iter()
        .map(|&m| {
            let cells: Vec<CellScore> = by_group.values().map(|rs| score_group(rs, m, delta, k, seed)).collect();
            let (cms_med, cms_coverage) = aggregate(&cells.iter().map(|c| c.cms).collect::<Vec<_>>());
            let (ecms_med, ecms_coverage) = aggregate(&cells.iter().map(|c| c.ecms).collect::<Vec<_>>());
            MeasureRow {
                measure: m.to_string(),
                cms_med,
                ecms_med,
                cms_coverage,
                ecms_coverage,
                cells,
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.cms_med, b.cms_med) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    FragilityTable {
        delta,
        groups: by_group.keys().map(|g| g.to_string()).collect(),
        rows,
    }
}

pub fn score_all(records: &[RunRecord], cfg: &FragilityConfig) -> Result<Vec<FragilityTable>> {
    cfg.validate()?;
    Ok(cfg
        .deltas
        .iter()
        .map(|&d| score_table(records, d, cfg.k, cfg.subsample_seed))
        .collect())
}

pub const UNDEFINED: &str = "Undefined";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), fmt_f64)
}

fn cell3(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.3}"))
}

/// CSV rendering: two lines per measure (CMS, then eCMS), aggregate column
/// first, then one column per group, then coverage.
pub fn table_csv(t: &FragilityTable) -> String {
    let mut out = String::from("measure,stat,median");
    for g in &t.groups {
        out.push(',');
        out.push_str(g);
    }
    out.push_str(",coverage\n");
    for r in &t.rows {
        for (stat, agg, cov, pick) in [
            ("CMS", r.cms_med, r.cms_coverage, (|c: &CellScore| c.cms) as fn(&CellScore) -> Option<f64>),
            ("eCMS", r.ecms_med, r.ecms_coverage, |c: &CellScore| c.ecms),
        ] {
            let _ = write!(out, "{},{},{}", r.measure, stat, cell(agg));
            for c in &r.cells {
                let _ = write!(out, ",{}", cell(pick(c)));
            }
            let _ = writeln!(out, ",{}", fmt_f64(cov));
        }
    }
    out
}

/// Pair counts per (measure, group).
pub fn counts_csv(t: &FragilityTable) -> String {
    let mut out = String::from("measure,group,pairs,seed_pairs,inter_pairs,runs_used,runs_excluded\n");
    for r in &t.rows {
        for c in &r.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.measure, c.group, c.pairs, c.seed_pairs, c.inter_pairs, c.runs_used, c.runs_excluded
            );
        }
    }
    out
}

/// Fixed-width text rendering; each cell shows CMS above eCMS.
pub fn table_text(t: &FragilityTable) -> String {
    let mut header = vec!["measure".to_string(), "median".to_string()];
    header.extend(t.groups.iter().cloned());
    header.push("coverage".into());
    let mut lines: Vec<Vec<String>> = vec![header];
    for r in &t.rows {
        let mut top = vec![r.measure.clone(), cell3(r.cms_med)];
        let mut bottom = vec![String::new(), cell3(r.ecms_med)];
        for c in &r.cells {
            top.push(cell3(c.cms));
            bottom.push(cell3(c.ecms));
        }
        top.push(format!("{:.2}", r.cms_coverage));
        bottom.push(format!("{:.2}", r.ecms_coverage));
        lines.push(top);
        lines.push(bottom);
    }
    let cols = lines[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = format!("delta = {}  (top: CMS, bottom: eCMS)\n", fmt_f64(t.delta));
    for l in &lines {
        let row: Vec<String> = l
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(row.join("  ").trim_end());
        out.push('\n');
    }
    out
}
