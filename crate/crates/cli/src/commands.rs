//! Command implementations. Each returns the process exit code on success.

use std::collections::BTreeMap;
use std::path::Path;

use fragaudit::datakit::{
    default_positive_classes, permute_pair, write_dataset_tagged, Dataset, PermutationMode, Transform,
};
use fragaudit::evidence::{self, BoundInput, BoundValue, ConsistencyEstimate};
use fragaudit::exppp::{self, EquivalenceReport, ExpPPParams, InflationReport, VerifyConfig};
use fragaudit::fragility::{self, FragilityTable};
use fragaudit::measures::{self, MeasureConfig};
use fragaudit::netcore::{load_checkpoint, save_checkpoint_tagged, Checkpoint, NetSpec};
use fragaudit::optimkit::{
    post_interp_slope, read_records, resume, train_from_init, Hyperparams, Observer, Optimizer, RunRecord,
    RunStatus, StopRule, TrainOutcome, TrainTrace,
};
use fragaudit::util::{fmt_f64, json_hash};
use fragaudit::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AuditConfig, Data, HyperOverride};
use crate::output::Out;

pub const EXIT_ALL_UNDEFINED: i32 = 3;
pub const EXIT_NOT_EQUIVALENT: i32 = 4;

pub struct Ctx {
    pub cfg: AuditConfig,
    pub out: Out,
    pub seed_offset: u64,
}

#[derive(Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        ErrorInfo {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

fn missing(section: &str) -> Error {
    Error::InvalidConfig(format!("config has no `{section}` section"))
}

fn usable(status: &RunStatus) -> bool {
    matches!(status, RunStatus::Completed | RunStatus::StopRuleNotMet)
}

impl Ctx {
    fn spec(&self) -> &NetSpec {
        &self.cfg.net.spec
    }

    /// Writes `record.json`, `ckpt.bin` and `trace.csv` of one run.
    fn save_run(&self, spec: &NetSpec, record: &RunRecord, ckpt: Option<&Checkpoint>, trace: &TrainTrace) -> Result<()> {
        let dir = self.out.run_dir(record);
        self.out.record_json(record)?;
        if let Some(ck) = ckpt {
            save_checkpoint_tagged(dir.join("ckpt.bin"), spec, ck, &self.out.tags())?;
        }
        let rel = dir.strip_prefix(&self.out.root).unwrap_or(&dir).join("trace.csv");
        self.out.text(rel, &trace.to_csv())?;
        Ok(())
    }

    fn grid_points(&self, data: &Data) -> Vec<(Hyperparams, u64)> {
        let grid = self.cfg.grid(self.seed_offset);
        let mut out = Vec::new();
        for n in data.sizes(&self.cfg.sweep) {
            let base = self.cfg.hyperparams(Optimizer::Sgdm, 0.1, StopRule::TrainAcc100, n);
            out.extend(grid.runs(&base));
        }
        out
    }

    fn finish_run(&self, spec: &NetSpec, outcome: std::result::Result<TrainOutcome, (Hyperparams, u64, Error)>) -> Result<RunRecord> {
        match outcome {
            Ok(o) => {
                let mut rec = o.record;
                self.out.stamp_record(&mut rec);
                self.save_run(spec, &rec, Some(&o.checkpoint), &o.trace)?;
                Ok(rec)
            }
            Err((h, seed, e)) => {
                let mut rec = RunRecord::failed(&h, seed, &e);
                self.out.stamp_record(&mut rec);
                self.save_run(spec, &rec, None, &TrainTrace::default())?;
                Ok(rec)
            }
        }
    }

    pub fn train(&self, index: usize) -> Result<i32> {
        let data = Data::load(&self.cfg.data)?;
        let points = self.grid_points(&data);
        let (h, seed) = points.get(index).cloned().ok_or_else(|| {
            Error::InvalidConfig(format!("run index {index} out of range (grid has {} runs)", points.len()))
        })?;
        let train = data.train_subset(h.n_train)?;
        let spec = self.spec();
        let outcome = Checkpoint::init(spec, seed)
            .and_then(|init| train_from_init(spec, init, &train, &data.test, &h, seed, None))
            .map_err(|e| (h.clone(), seed, e));
        let rec = self.finish_run(spec, outcome)?;
        println!("{} {} {:?}", rec.group, rec.run_id, rec.status);
        self.out.merge_records(vec![rec])?;
        Ok(0)
    }

    pub fn sweep(&self) -> Result<i32> {
        let data = Data::load(&self.cfg.data)?;
        let spec = self.spec();
        let points = self.grid_points(&data);
        let subsets: BTreeMap<usize, Dataset> = data
            .sizes(&self.cfg.sweep)
            .into_iter()
            .map(|n| Ok((n, data.train_subset(n)?)))
            .collect::<Result<_>>()?;
        let records: Vec<RunRecord> = points
            .into_par_iter()
            .map(|(h, seed)| {
                let train = &subsets[&h.n_train];
                let outcome = Checkpoint::init(spec, seed)
                    .and_then(|init| train_from_init(spec, init, train, &data.test, &h, seed, None))
                    .map_err(|e| (h.clone(), seed, e));
                self.finish_run(spec, outcome)
            })
            .collect::<Result<_>>()?;
        let n = records.len();
        self.out.merge_records(records)?;
        println!("{n} runs -> {}", self.out.records_path().display());
        Ok(0)
    }

    pub fn measure(&self) -> Result<i32> {
        let data = Data::load(&self.cfg.data)?;
        let records = read_records(self.out.records_path())?;
        let mcfg = &self.cfg.measures;
        let updated: Vec<RunRecord> = records
            .into_par_iter()
            .map(|mut rec| {
                let path = self.out.run_dir(&rec).join("ckpt.bin");
                if !usable(&rec.status) || !path.exists() {
                    return Ok(rec);
                }
                let (spec, ck) = load_checkpoint(&path)?;
                let train = data.train_subset(rec.h.n_train)?;
                match measures::compute_all(&spec, &ck, &train, mcfg, rec.seed) {
                    Ok(set) => rec.measures = set.values,
                    Err(e) => {
                        rec.status = RunStatus::Failed {
                            kind: e.kind().into(),
                            message: e.to_string(),
                        }
                    }
                }
                self.out.stamp_record(&mut rec);
                self.out.record_json(&rec)?;
                Ok(rec)
            })
            .collect::<Result<_>>()?;
        let n = updated.len();
        fragaudit::optimkit::write_records(self.out.records_path(), &updated)?;
        println!("measured {n} records");
        Ok(0)
    }

    pub fn audit(&self) -> Result<i32> {
        let records = read_records(self.out.records_path())?;
        let tables = fragility::score_all(&records, &self.cfg.fragility)?;
        let audit_id = json_hash(&(&self.out.config_hash, json_hash(&records, 64)), 16);
        let dir = Path::new("reports").join(&audit_id);
        for t in &tables {
            let d = fmt_f64(t.delta);
            self.out.text(dir.join(format!("fragility_delta_{d}.csv")), &fragility::table_csv(t))?;
            self.out.text(dir.join(format!("counts_delta_{d}.csv")), &fragility::counts_csv(t))?;
            let text = fragility::table_text(t);
            self.out.text(dir.join(format!("table_delta_{d}.txt")), &text)?;
            println!("{text}");
        }
        #[derive(Serialize)]
        struct AuditReport<'a> {
            audit_id: &'a str,
            records: usize,
            tables: &'a [FragilityTable],
        }
        self.out.json(
            dir.join("audit.json"),
            &AuditReport {
                audit_id: &audit_id,
                records: records.len(),
                tables: &tables,
            },
        )?;
        println!("report -> {}", self.out.path(&dir).display());
        if tables.iter().all(FragilityTable::all_undefined) {
            eprintln!("every fragility score is undefined (no close-error pairs)");
            return Ok(EXIT_ALL_UNDEFINED);
        }
        Ok(0)
    }

    fn temporal_setup(&self, data: &Data) -> Result<(Hyperparams, u64, Dataset, MeasureConfig)> {
        let t = self.cfg.temporal.as_ref().ok_or_else(|| missing("temporal"))?;
        let n = t.n_train.unwrap_or(data.train.len());
        let s = &self.cfg.sweep;
        let base = self.cfg.hyperparams(s.optimizers[0], s.lrs[0], s.stop_rules[0], n);
        let h = t.run.apply(&base);
        let mcfg = MeasureConfig {
            only: Some(t.measures.clone()),
            ..self.cfg.measures.clone()
        };
        Ok((h, t.seed + self.seed_offset, data.train_subset(n)?, mcfg))
    }

    fn slopes(&self, trace: &TrainTrace) -> BTreeMap<String, SlopeEntry> {
        let t = self.cfg.temporal.as_ref().expect("checked by temporal_setup");
        t.measures
            .iter()
            .map(|m| {
                let e = match post_interp_slope(trace, m) {
                    Ok(s) => SlopeEntry { slope: Some(s), error: None },
                    Err(e) => SlopeEntry {
                        slope: None,
                        error: Some(ErrorInfo::from(&e)),
                    },
                };
                (m.clone(), e)
            })
            .collect()
    }

    pub fn temporal(&self) -> Result<i32> {
        let data = Data::load(&self.cfg.data)?;
        let (h, seed, train, mcfg) = self.temporal_setup(&data)?;
        let spec = self.spec();
        let obs = observer(spec, &train, &mcfg, seed);
        let out = train_from_init(spec, Checkpoint::init(spec, seed)?, &train, &data.test, &h, seed, Some(&obs))?;
        let mut rec = out.record.clone();
        self.out.stamp_record(&mut rec);
        self.save_run(spec, &rec, Some(&out.checkpoint), &out.trace)?;
        let report = TemporalReport {
            run_id: rec.run_id.clone(),
            parent_run_id: None,
            h: h.clone(),
            seed,
            status: rec.status.clone(),
            t_int: out.trace.t_int,
            epochs: out.trace.last_epoch(),
            slopes: self.slopes(&out.trace),
        };
        let dir = Path::new("reports").join("temporal").join(&rec.run_id);
        self.out.text(dir.join("trace.csv"), &out.trace.to_csv())?;
        self.out.json(dir.join("temporal.json"), &report)?;
        println!("T_int = {:?}", report.t_int);
        for (m, s) in &report.slopes {
            println!("{m}: {}", slope_text(s));
        }
        Ok(0)
    }

    pub fn hysteresis(&self) -> Result<i32> {
        let data = Data::load(&self.cfg.data)?;
        let (h, seed, train, mcfg) = self.temporal_setup(&data)?;
        let hy = self
            .cfg
            .temporal
            .as_ref()
            .and_then(|t| t.hysteresis.clone())
            .ok_or_else(|| missing("temporal.hysteresis"))?;
        let spec = self.spec();
        let obs = observer(spec, &train, &mcfg, seed);
        let parent_h = Hyperparams {
            stop_rule: StopRule::TrainAcc100,
            ..h
        };
        let parent = train_from_init(spec, Checkpoint::init(spec, seed)?, &train, &data.test, &parent_h, seed, Some(&obs))?;
        let mut prec = parent.record.clone();
        self.out.stamp_record(&mut prec);
        self.save_run(spec, &prec, Some(&parent.checkpoint), &parent.trace)?;
        if prec.status != RunStatus::Completed {
            return Err(Error::SlopeUndefined(format!(
                "parent run {} never reached 100% training accuracy",
                prec.run_id
            )));
        }
        let cont = HyperOverride {
            stop_rule: Some(StopRule::MaxEpochs),
            max_epochs: Some(hy.epochs),
            ..HyperOverride::default()
        };
        let branches = [
            ("baseline", cont.apply(&parent_h)),
            ("tweaked", cont.apply(&hy.h_new.apply(&parent_h))),
        ];
        let mut reports = Vec::new();
        for (label, bh) in branches {
            let o = resume(spec, &parent.checkpoint, &parent.trace, &train, &data.test, &bh, seed, Some(&obs))?;
            let mut rec = o.record.clone();
            self.out.stamp_record(&mut rec);
            self.save_run(spec, &rec, Some(&o.checkpoint), &o.trace)?;
            reports.push((
                label.to_string(),
                TemporalReport {
                    run_id: rec.run_id.clone(),
                    parent_run_id: rec.parent_run_id.clone(),
                    h: bh,
                    seed,
                    status: rec.status,
                    t_int: o.trace.t_int,
                    epochs: o.trace.last_epoch(),
                    slopes: self.slopes(&o.trace),
                },
            ));
        }
        let slope_change = reports[0]
            .1
            .slopes
            .iter()
            .map(|(m, b)| {
                let d = match (b.slope, reports[1].1.slopes[m].slope) {
                    (Some(b), Some(t)) => Some(t - b),
                    _ => None,
                };
                (m.clone(), d)
            })
            .collect();
        let report = HysteresisReport {
            parent_run_id: prec.run_id.clone(),
            t_int: parent.trace.t_int,
            resume_epoch: parent.checkpoint.meta.epoch,
            branches: reports.into_iter().collect(),
            slope_change,
        };
        let dir = Path::new("reports").join("hysteresis").join(&prec.run_id);
        self.out.json(dir.join("hysteresis.json"), &report)?;
        let mut csv = String::from("branch,run_id,measure,slope\n");
        for (label, r) in &report.branches {
            for (m, s) in &r.slopes {
                csv.push_str(&format!("{label},{},{m},{}\n", r.run_id, s.slope.map(fmt_f64).unwrap_or_default()));
            }
        }
        self.out.text(dir.join("slopes.csv"), &csv)?;
        for (m, d) in &report.slope_change {
            println!("{m}: slope change {}", d.map(fmt_f64).unwrap_or_else(|| "undefined".into()));
        }
        Ok(0)
    }

    fn verify_config(&self, e: &crate::config::ExpPPConfig) -> VerifyConfig {
        VerifyConfig {
            horizon: e.horizon,
            tol: e.tol,
            logit_tol: e.logit_tol,
            seed: e.seed + self.seed_offset,
        }
    }

    pub fn exppp_verify(&self) -> Result<i32> {
        let e = self.cfg.exppp.as_ref().ok_or_else(|| missing("exppp"))?;
        let data = Data::load(&self.cfg.data)?;
        let alphas = if e.alphas.is_empty() { vec![e.params.alpha] } else { e.alphas.clone() };
        let vcfg = self.verify_config(e);
        let dir = Path::new("reports").join("exppp").join("verify");
        let mut reports: Vec<EquivalenceReport> = Vec::new();
        for alpha in alphas {
            let params = ExpPPParams { alpha, ..e.params };
            let r = exppp::verify_equivalence(&e.net, &data.train, &params, &vcfg)?.report;
            self.out.text(dir.join(format!("steps_alpha_{}.csv", fmt_f64(alpha))), &r.steps_csv())?;
            println!(
                "alpha {}: max deviation {}, max logit diff {}, {}",
                fmt_f64(alpha),
                fmt_f64(r.max_deviation),
                fmt_f64(r.max_logit_diff),
                if r.passed { "pass" } else { "FAIL" }
            );
            reports.push(r);
        }
        self.out.json(dir.join("verify.json"), &reports)?;
        Ok(if reports.iter().all(|r| r.passed) { 0 } else { EXIT_NOT_EQUIVALENT })
    }

    pub fn exppp_demo(&self) -> Result<i32> {
        let e = self.cfg.exppp.as_ref().ok_or_else(|| missing("exppp"))?;
        let data = Data::load(&self.cfg.data)?;
        let mcfg = e.measures.clone().unwrap_or_else(|| self.cfg.measures.clone());
        let vcfg = self.verify_config(e);
        let grid = exppp::alpha_grid(&e.params, e.grid)?;
        let entries: Vec<DemoEntry> = grid
            .into_iter()
            .map(|alpha| {
                let params = ExpPPParams { alpha, ..e.params };
                match exppp::inflation_demo(&e.net, &data.train, &data.test, &params, &vcfg, &mcfg) {
                    Ok(r) => DemoEntry { alpha, report: Some(r), error: None },
                    Err(err) => DemoEntry {
                        alpha,
                        report: None,
                        error: Some(ErrorInfo::from(&err)),
                    },
                }
            })
            .collect();
        let mut csv = String::from("alpha,measure,ratio,expected_norm_ratio,test_error_a,test_error_b\n");
        for en in &entries {
            if let Some(r) = &en.report {
                for (m, ratio) in &r.ratios {
                    csv.push_str(&format!(
                        "{},{m},{},{},{},{}\n",
                        fmt_f64(en.alpha),
                        ratio.map(fmt_f64).unwrap_or_default(),
                        fmt_f64(r.expected_norm_ratio),
                        fmt_f64(r.test_error_a),
                        fmt_f64(r.test_error_b)
                    ));
                }
                println!(
                    "alpha {}: PARAM_NORM ratio {} (expected {}), test errors {} / {}",
                    fmt_f64(en.alpha),
                    r.ratios.get("PARAM_NORM").copied().flatten().map(fmt_f64).unwrap_or_default(),
                    fmt_f64(r.expected_norm_ratio),
                    fmt_f64(r.test_error_a),
                    fmt_f64(r.test_error_b)
                );
            } else if let Some(err) = &en.error {
                println!("alpha {}: {}", fmt_f64(en.alpha), err.message);
            }
        }
        let dir = Path::new("reports").join("exppp").join("demo");
        self.out.text(dir.join("demo.csv"), &csv)?;
        self.out.json(dir.join("demo.json"), &entries)?;
        Ok(0)
    }

    pub fn evidence_bound(&self, rule_of_three: bool) -> Result<i32> {
        let e = self.cfg.evidence.as_ref().ok_or_else(|| missing("evidence"))?;
        let report = if let Some(input) = e.bound {
            BoundReport {
                estimate: None,
                pessimistic_rule_of_three: false,
                input,
                bound: evidence::ml_pacbayes_bound(&input)?,
            }
        } else {
            let data = Data::load(&self.cfg.data)?;
            let seed = e.seed + self.seed_offset;
            let est = evidence::count_consistent(&e.net, &data.train, &e.task.prior, e.task.draws, seed)?;
            let pessimistic = est.hits == 0;
            if pessimistic && !rule_of_three {
                return Err(Error::ZeroHits { draws: est.draws });
            }
            let input = BoundInput {
                n: data.train.len(),
                p_hat: if pessimistic { est.rule_of_three() } else { est.p_hat },
                delta_conf: e.task.delta_conf,
                gamma_conf: e.task.gamma_conf,
            };
            BoundReport {
                bound: evidence::ml_pacbayes_bound(&input)?,
                estimate: Some(est),
                pessimistic_rule_of_three: pessimistic,
                input,
            }
        };
        let path = self.out.json(Path::new("reports").join("evidence").join("bound.json"), &report)?;
        println!(
            "epsilon_bound = {}{}{} -> {}",
            fmt_f64(report.bound.epsilon),
            if report.bound.vacuous { " (vacuous)" } else { "" },
            if report.pessimistic_rule_of_three { " (rule-of-three mass, pessimistic)" } else { "" },
            path.display()
        );
        Ok(0)
    }

    pub fn evidence_experiment(&self) -> Result<i32> {
        let e = self.cfg.evidence.as_ref().ok_or_else(|| missing("evidence"))?;
        let report = evidence::bound_vs_error_experiment(&e.net, &e.task, e.repetitions, e.seed + self.seed_offset)?;
        let dir = Path::new("reports").join("evidence").join("experiment");
        self.out.text(dir.join("repetitions.csv"), &report.rows_csv())?;
        self.out.json(dir.join("experiment.json"), &report)?;
        for s in &report.summaries {
            println!(
                "corruption {}: violation rate {} over {} evaluated, median bound {}, median error {}, zero-hit repetitions {}",
                fmt_f64(s.corruption),
                s.violation_rate.map(fmt_f64).unwrap_or_else(|| "undefined".into()),
                s.evaluated,
                s.median_bound.map(fmt_f64).unwrap_or_else(|| "undefined".into()),
                s.median_true_error.map(fmt_f64).unwrap_or_else(|| "undefined".into()),
                s.zero_hits
            );
        }
        Ok(0)
    }

    pub fn transform(&self, op: &TransformOp, split: Split) -> Result<i32> {
        let data = Data::load(&self.cfg.data)?;
        let source = match split {
            Split::Train => &data.train,
            Split::Test => &data.test,
        };
        let outputs: Vec<(String, Dataset)> = match op {
            TransformOp::Corrupt { fraction, seed } => vec![(
                "corrupt".into(),
                source.apply(&Transform::CorruptLabels {
                    fraction: *fraction,
                    seed: seed + self.seed_offset,
                })?,
            )],
            TransformOp::Binarize { positive } => {
                let positive = positive.clone().unwrap_or_else(|| default_positive_classes(source.num_classes));
                vec![("binarize".into(), source.apply(&Transform::Binarize { positive })?)]
            }
            TransformOp::Subsample { m, seed } => vec![(
                "subsample".into(),
                source.apply(&Transform::Subsample {
                    m: *m,
                    seed: seed + self.seed_offset,
                })?,
            )],
            TransformOp::Permute { seed, mode } => {
                let (tr, te) = permute_pair(&data.train, &data.test, (*mode).into(), seed + self.seed_offset)?;
                let name = match mode {
                    Mode::Same => "permute_same",
                    Mode::Independent => "permute_independent",
                };
                return self.write_datasets(vec![(format!("train_{name}"), tr), (format!("test_{name}"), te)]);
            }
        };
        let prefix = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        self.write_datasets(outputs.into_iter().map(|(n, d)| (format!("{prefix}_{n}"), d)).collect())
    }

    fn write_datasets(&self, sets: Vec<(String, Dataset)>) -> Result<i32> {
        for (name, ds) in sets {
            let path = self.out.path(Path::new("data").join(format!("{name}.bin")));
            write_dataset_tagged(&path, &ds, &self.out.tags())?;
            println!("{} ({} rows) -> {}", name, ds.len(), path.display());
        }
        Ok(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, clap::Subcommand)]
pub enum TransformOp {
    /// Reassign a fraction of labels to a different class.
    Corrupt {
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Permute pixel positions of the train and test sets.
    Permute {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Mode::Same)]
        mode: Mode,
    },
    /// Collapse classes to two: the listed classes become 1.
    Binarize {
        #[arg(long, value_delimiter = ',')]
        positive: Option<Vec<usize>>,
    },
    /// Draw `m` rows without replacement.
    Subsample {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Same,
    Independent,
}

impl From<Mode> for PermutationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Same => PermutationMode::Same,
            Mode::Independent => PermutationMode::Independent,
        }
    }
}

fn observer<'a>(spec: &'a NetSpec, train: &'a Dataset, mcfg: &'a MeasureConfig, seed: u64) -> Box<Observer<'a>> {
    Box::new(move |_epoch, ck: &Checkpoint| {
        measures::compute_all(spec, ck, train, mcfg, seed)
            .map(|set| {
                set.values
                    .into_iter()
                    .filter_map(|(k, v)| v.value().map(|x| (k, x)))
                    .collect()
            })
            .unwrap_or_default()
    })
}

#[derive(Serialize)]
struct SlopeEntry {
    slope: Option<f64>,
    error: Option<ErrorInfo>,
}

fn slope_text(s: &SlopeEntry) -> String {
    match (&s.slope, &s.error) {
        (Some(v), _) => format!("slope {}", fmt_f64(*v)),
        (None, Some(e)) => format!("{} ({})", e.kind, e.message),
        _ => "undefined".into(),
    }
}

#[derive(Serialize)]
struct TemporalReport {
    run_id: String,
    parent_run_id: Option<String>,
    h: Hyperparams,
    seed: u64,
    status: RunStatus,
    t_int: Option<usize>,
    epochs: usize,
    slopes: BTreeMap<String, SlopeEntry>,
}

#[derive(Serialize)]
struct HysteresisReport {
    parent_run_id: String,
    t_int: Option<usize>,
    resume_epoch: usize,
    branches: BTreeMap<String, TemporalReport>,
    /// Tweaked-branch slope minus baseline slope.
    slope_change: BTreeMap<String, Option<f64>>,
}

#[derive(Serialize)]
struct DemoEntry {
    alpha: f64,
    report: Option<InflationReport>,
    error: Option<ErrorInfo>,
}

#[derive(Serialize)]
struct BoundReport {
    estimate: Option<ConsistencyEstimate>,
    pessimistic_rule_of_three: bool,
    input: BoundInput,
    bound: BoundValue,
}
