//! Output files. Every file carries the config hash and tool version: JSON
//! documents in an envelope, CSV and text files in a leading `#` line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fragaudit::optimkit::RunRecord;
use fragaudit::util::TOOL_VERSION;
use fragaudit::{Error, Result};
use serde::Serialize;

pub struct Out {
    pub root: PathBuf,
    pub config_hash: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config_hash: &'a str,
    tool_version: &'a str,
    report: &'a T,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl Out {
    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn tags(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("config_hash".to_string(), self.config_hash.clone()),
            ("tool_version".to_string(), TOOL_VERSION.to_string()),
        ])
    }

    fn stamp(&self) -> String {
        format!("# config_hash={} tool_version={}\n", self.config_hash, TOOL_VERSION)
    }

    pub fn json<T: Serialize>(&self, rel: impl AsRef<Path>, report: &T) -> Result<PathBuf> {
        let path = self.path(rel);
        let env = Envelope {
            config_hash: &self.config_hash,
            tool_version: TOOL_VERSION,
            report,
        };
        let mut bytes = serde_json::to_vec_pretty(&env)?;
        bytes.push(b'\n');
        write(&path, &bytes)?;
        Ok(path)
    }

    pub fn text(&self, rel: impl AsRef<Path>, body: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        write(&path, format!("{}{}", self.stamp(), body).as_bytes())?;
        Ok(path)
    }

    /// A record stamped with this config.
    pub fn stamp_record(&self, r: &mut RunRecord) {
        r.config_hash = Some(self.config_hash.clone());
        r.tool_version = TOOL_VERSION.to_string();
    }

    pub fn run_dir(&self, r: &RunRecord) -> PathBuf {
        self.path(Path::new("runs").join(&r.group).join(&r.run_id))
    }

    pub fn record_json(&self, r: &RunRecord) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(r)?;
        bytes.push(b'\n');
        write(&self.run_dir(r).join("record.json"), &bytes)
    }

    pub fn records_path(&self) -> PathBuf {
        self.path("records.jsonl")
    }

    /// Merges `new` into `records.jsonl`, replacing entries with the same run
    /// id.
    pub fn merge_records(&self, new: Vec<RunRecord>) -> Result<Vec<RunRecord>> {
        let path = self.records_path();
        let mut by_id: BTreeMap<String, RunRecord> = if path.exists() {
            fragaudit::optimkit::read_records(&path)?
                .into_iter()
                .map(|r| (r.run_id.clone(), r))
                .collect()
        } else {
            BTreeMap::new()
        };
        for r in new {
            by_id.insert(r.run_id.clone(), r);
        }
        let all: Vec<RunRecord> = by_id.into_values().collect();
        fragaudit::optimkit::write_records(&path, &all)?;
        Ok(all)
    }
}
