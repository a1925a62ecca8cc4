//! Run records: one JSON object per training run, stored as JSONL.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Hyperparams, TrainTrace};
use crate::error::{Error, Result};
use crate::measures::MeasureEntry;
use crate::netcore::Evaluation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Hit `max_epochs` before the stop rule fired.
    StopRuleNotMet,
    Diverged { step: usize },
    Failed { kind: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub group: String,
    #[serde(flatten)]
    pub h: Hyperparams,
    pub seed: u64,
    /// 0/1 error on the held-out set at the stopping epoch; absent when the
    /// run produced no usable checkpoint.
    pub test_error: Option<f64>,
    pub measures: BTreeMap<String, MeasureEntry>,
    pub t_int: Option<usize>,
    pub run_id: String,
    pub parent_run_id: Option<String>,
    #[serde(default)]
    pub h_hash: String,
    pub status: RunStatus,
    pub epochs: usize,
    pub final_train_acc: Option<f64>,
    pub final_train_ce: Option<f64>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub tool_version: String,
}

impl RunRecord {
    pub(crate) fn from_run(
        h: &Hyperparams,
        seed: u64,
        trace: &TrainTrace,
        status: RunStatus,
        parent_run_id: Option<String>,
        test: Option<Evaluation>,
    ) -> Self {
        let last = trace.records.last();
        let usable = !matches!(status, RunStatus::Diverged { .. } | RunStatus::Failed { .. });
        RunRecord {
            group: h.group(),
            h: h.clone(),
            seed,
            test_error: test.filter(|_| usable).map(|e| e.error()),
            measures: BTreeMap::new(),
            t_int: trace.t_int,
            run_id: h.run_id(seed),
            parent_run_id,
            h_hash: h.hash(),
            status,
            epochs: trace.last_epoch(),
            final_train_acc: last.map(|r| r.train_acc),
            final_train_ce: last.map(|r| r.train_ce),
            config_hash: None,
            tool_version: crate::util::TOOL_VERSION.into(),
        }
    }

    /// Record for a run that could not start at all.
    pub fn failed(h: &Hyperparams, seed: u64, err: &Error) -> Self {
        let status = RunStatus::Failed {
            kind: err.kind().into(),
            message: err.to_string(),
        };
        let trace = TrainTrace::default();
        RunRecord::from_run(h, seed, &trace, status, None, None)
    }

    pub fn measure(&self, name: &str) -> Option<f64> {
        self.measures.get(name).and_then(MeasureEntry::value)
    }
}

/// Writes records sorted by run id, one per line.
pub fn write_records(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let mut buf = Vec::new();
    for r in sorted {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

/// Reads JSONL records, skipping blank lines. Records come back sorted by
/// run id regardless of file order.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            let rec: RunRecord = serde_json::from_str(&line)
                .map_err(|e| Error::format(offset, format!("run record: {e}")))?;
            out.push(rec);
        }
        offset += line.len() as u64 + 1;
    }
    out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimkit::{Optimizer, StopRule};

    #[test]
    fn jsonl_round_trip_and_field_names() {
        let h = Hyperparams::new("blobs", "fcn", Optimizer::Sgdm, 0.1, StopRule::TrainAcc100, 50);
        let mut r = RunRecord::failed(&h, 3, &Error::InvalidConfig("x".into()));
        r.test_error = Some(0.25);
        r.measures.insert("PARAM_NORM".into(), MeasureEntry::Value(1.5));
        r.measures.insert("FRO_DIST".into(), MeasureEntry::Error { error: "ZeroValue".into() });
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "group", "dataset", "arch", "optimizer", "lr", "stop_rule", "n_train", "seed", "test_error",
            "measures", "t_int", "run_id", "parent_run_id",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let mut other = r.clone();
        other.seed = 4;
        other.run_id = h.run_id(4);
        write_records(&p, &[r.clone(), other.clone()]).unwrap();
        let back = read_records(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back.contains(&r) && back.contains(&other));
    }
}
