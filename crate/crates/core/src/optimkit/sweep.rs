//! Grid sweeps: the Cartesian product of learning rates, optimizers, stop
//! rules and seeds over one (dataset, architecture) group.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Hyperparams, Optimizer, RunRecord, StopRule, TrainTrace};
use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::measures::{self, MeasureConfig};
use crate::netcore::{Checkpoint, NetSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lrs: Vec<f64>,
    pub optimizers: Vec<Optimizer>,
    pub stop_rules: Vec<StopRule>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// Seven learning rates, both optimizers, both stop rules, `seeds` seeds.
    pub fn standard(seeds: u64) -> Self {
        SweepGrid {
            lrs: vec![0.001, 0.0032, 0.0063, 0.01, 0.0158, 0.05, 0.1],
            optimizers: vec![Optimizer::Adam, Optimizer::Sgdm],
            stop_rules: vec![StopRule::TrainAcc100, StopRule::TrainCeBelow],
            seeds: (0..seeds).collect(),
        }
    }

    /// Every `(H, seed)` of the grid, with `base` supplying the other fields.
    pub fn runs(&self, base: &Hyperparams) -> Vec<(Hyperparams, u64)> {
        let mut out = Vec::new();
        for &lr in &self.lrs {
            for &optimizer in &self.optimizers {
                for &stop_rule in &self.stop_rules {
                    let h = Hyperparams {
                        lr,
                        optimizer,
                        stop_rule,
                        ..base.clone()
                    };
                    out.extend(self.seeds.iter().map(|&s| (h.clone(), s)));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.lrs.len() * self.optimizers.len() * self.stop_rules.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub record: RunRecord,
    pub checkpoint: Option<Checkpoint>,
    pub trace: TrainTrace,
}

/// Runs the grid, in parallel, one independent run per `(H, seed)`.
///
/// `sink` is called as each run completes (for persistence); a run that fails
/// is recorded with its error and the sweep continues. The returned runs are
/// sorted by run id.
pub fn sweep(
    spec: &NetSpec,
    train_ds: &Dataset,
    test: &Dataset,
    base: &Hyperparams,
    grid: &SweepGrid,
    measure_cfg: Option<&MeasureConfig>,
    sink: &(dyn Fn(&SweepRun) -> Result<()> + Sync),
) -> Result<Vec<SweepRun>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    if let Some(cfg) = measure_cfg {
        cfg.validate()?;
    }
    let mut runs: Vec<SweepRun> = grid
        .runs(base)
        .into_par_iter()
        .map(|(h, seed)| {
            let run = match train(spec, train_ds, test, &h, seed) {
                Ok(out) => {
                    let mut record = out.record;
                    if let Some(cfg) = measure_cfg {
                        match measures::compute_all(spec, &out.checkpoint, train_ds, cfg, seed) {
                            Ok(set) => record.measures = set.values,
                            Err(e) => {
                                record.status = super::RunStatus::Failed {
                                    kind: e.kind().into(),
                                    message: e.to_string(),
                                }
                            }
                        }
                    }
                    SweepRun {
                        record,
                        checkpoint: Some(out.checkpoint),
                        trace: out.trace,
                    }
                }
                Err(e) => SweepRun {
                    record: RunRecord::failed(&h, seed, &e),
                    checkpoint: None,
                    trace: TrainTrace::default(),
                },
            };
            sink(&run)?;
            Ok(run)
        })
        .collect::<Result<_>>()?;
    runs.sort_by(|a, b| a.record.run_id.cmp(&b.record.run_id));
    Ok(runs)
}
