use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fragaudit::datakit::{read_dataset, Provenance, Source, Transform};
use fragaudit::fragility::{score_all, table_csv, FragilityConfig};
use fragaudit::measures::MeasureConfig;
use fragaudit::netcore::NetSpec;
use fragaudit::optimkit::{read_records, sweep, Hyperparams, Optimizer, StopRule, SweepGrid};
use serde_json::{json, Value};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fragaudit")
}

fn blobs(n: usize, start: usize, len: usize) -> Value {
    json!({
        "source": {"kind": "blobs", "n": n, "dim": 4, "num_classes": 3, "separation": 4.0, "seed": 3},
        "transforms": [{"op": "slice", "start": start, "len": len}]
    })
}

fn base_config() -> Value {
    json!({
        "data": {"name": "blobs", "train": blobs(160, 0, 100), "test": blobs(160, 100, 60)},
        "net": {"name": "fcn8", "spec": {"layer_dims": [4, 8, 3], "activation": ["relu"],
                "normalize_hidden": false, "frozen_readout": false, "bias_enabled": true}},
        "sweep": {"lrs": [0.05], "optimizers": ["sgdm"], "stop_rules": ["train_acc_100"], "seeds": [0],
                  "base": {"max_epochs": 30, "batch_size": 25}},
        "measures": {"sigma": {"mc_draws": 4, "iters": 8}}
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn error_kind(o: &Output) -> String {
    assert!(!o.status.success());
    let v: Value = serde_json::from_slice(o.stderr.trim_ascii()).expect("error JSON on stderr");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn files_under(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn minimal_train_writes_one_record_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    ok(&run(&cfg, &out, &["train"]));
    let recs = read_records(out.join("records.jsonl")).unwrap();
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    assert!(r.config_hash.is_some() && !r.tool_version.is_empty());
    let run_dir = out.join("runs").join(&r.group).join(&r.run_id);
    for f in ["record.json", "ckpt.bin", "trace.csv"] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }
    let (_, ck) = fragaudit::netcore::load_checkpoint(run_dir.join("ckpt.bin")).unwrap();
    assert_eq!(ck.meta.run_id, r.run_id);
    // A single run has no pairs: every score is undefined.
    assert_eq!(run(&cfg, &out, &["audit"]).status.code(), Some(3));
}

fn pipeline_config() -> Value {
    let mut cfg = base_config();
    cfg["sweep"] = json!({"lrs": [0.02, 0.05], "optimizers": ["sgdm", "adam"], "stop_rules": ["train_acc_100"],
                          "seeds": [0, 1, 2], "base": {"max_epochs": 30, "batch_size": 25}});
    cfg["measures"]["only"] = json!(["PARAMS", "PARAM_NORM", "FRO_DIST", "PATH_NORM", "INVERSE_MARGIN", "SUM_OF_SPEC"]);
    cfg["fragility"] = json!({"deltas": [0.01, 0.02, 0.05, 0.5]});
    cfg
}

#[test]
fn pipeline_is_byte_identical_and_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_value = pipeline_config();
    let cfg = write_config(dir.path(), &cfg_value);
    let mut snapshots = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        for cmd in ["sweep", "measure"] {
            ok(&run(&cfg, &out, &[cmd]));
        }
        let audit = run(&cfg, &out, &["audit"]);
        assert!(matches!(audit.status.code(), Some(0) | Some(3)));
        snapshots.push(files_under(&out));
    }
    assert_eq!(snapshots[0], snapshots[1]);

    // The same pipeline in one process.
    let prov = |v: &Value| -> Provenance { serde_json::from_value(v.clone()).unwrap() };
    let train = prov(&cfg_value["data"]["train"]).replay().unwrap();
    let test = prov(&cfg_value["data"]["test"]).replay().unwrap();
    let spec: NetSpec = serde_json::from_value(cfg_value["net"]["spec"].clone()).unwrap();
    let mcfg: MeasureConfig = serde_json::from_value(cfg_value["measures"].clone()).unwrap();
    let mut base = Hyperparams::new("blobs", "fcn8", Optimizer::Sgdm, 0.1, StopRule::TrainAcc100, train.len());
    base.max_epochs = 30;
    base.batch_size = Some(25);
    let grid = SweepGrid {
        lrs: vec![0.02, 0.05],
        optimizers: vec![Optimizer::Sgdm, Optimizer::Adam],
        stop_rules: vec![StopRule::TrainAcc100],
        seeds: vec![0, 1, 2],
    };
    let runs = sweep(&spec, &train, &test, &base, &grid, Some(&mcfg), &|_| Ok(())).unwrap();
    let records: Vec<_> = runs.into_iter().map(|r| r.record).collect();
    let fcfg: FragilityConfig = serde_json::from_value(cfg_value["fragility"].clone()).unwrap();
    let tables = score_all(&records, &fcfg).unwrap();

    let cli_records = read_records(dir.path().join("a").join("records.jsonl")).unwrap();
    assert_eq!(cli_records.len(), 12);
    for (a, b) in cli_records.iter().zip(&records) {
        assert_eq!(a.run_id, b.run_id);
        assert_eq!(a.measures, b.measures);
        assert_eq!(a.test_error, b.test_error);
    }
    let report_dir = std::fs::read_dir(dir.path().join("a").join("reports"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    for t in &tables {
        let file = report_dir.join(format!("fragility_delta_{}.csv", fragaudit::util::fmt_f64(t.delta)));
        let text = std::fs::read_to_string(file).unwrap();
        let body = text.split_once('\n').unwrap().1;
        assert_eq!(body, table_csv(t));
    }
}

#[test]
fn standard_grid_gives_224_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["sweep"] = json!({
        "lrs": [0.001, 0.0032, 0.0063, 0.01, 0.0158, 0.05, 0.1],
        "optimizers": ["adam", "sgdm"],
        "stop_rules": ["train_acc_100", "train_ce_below"],
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7],
        "base": {"max_epochs": 2}
    });
    let cfg = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    ok(&run(&cfg, &out, &["sweep"]));
    assert_eq!(read_records(out.join("records.jsonl")).unwrap().len(), 224);
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = Command::new(bin()).args(["sweep"]).output().unwrap();
    assert_eq!(error_kind(&o), "InvalidConfig");

    let mut bad = base_config();
    bad["net"]["spec"]["layer_dims"] = json!([4]);
    let cfg = write_config(dir.path(), &bad);
    assert_eq!(error_kind(&run(&cfg, &out, &["sweep"])), "InvalidSpec");

    let cfg = write_config(dir.path(), &base_config());
    assert_eq!(error_kind(&run(&cfg, &out, &["audit"])), "Io");
    assert_eq!(error_kind(&run(&cfg, &out, &["exppp", "verify"])), "InvalidConfig");

    let mut c = base_config();
    c["exppp"] = json!({"params": {"eta0": 0.1, "gamma": 0.0, "lambda": 0.0, "alpha": 0.5},
                        "net": {"layer_dims": [4, 8, 3], "activation": ["relu"], "normalize_hidden": true,
                                "frozen_readout": true, "bias_enabled": false}});
    let cfg = write_config(dir.path(), &c);
    assert_eq!(error_kind(&run(&cfg, &out, &["exppp", "verify"])), "InadmissibleAlpha");
}

#[test]
fn transforms_write_cache_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    ok(&run(&cfg, &out, &["transform", "corrupt", "--fraction", "0.2", "--seed", "4"]));
    let ds = read_dataset(out.join("data/train_corrupt.bin")).unwrap();
    let clean = read_dataset(out.join("data/train_corrupt.bin")).unwrap();
    assert_eq!(ds, clean);
    assert!(matches!(
        ds.provenance.transforms.last(),
        Some(Transform::CorruptLabels { fraction, seed: 4 }) if *fraction == 0.2
    ));
    assert_eq!(ds.provenance.replay().unwrap(), ds);

    ok(&run(&cfg, &out, &["transform", "binarize", "--positive", "0"]));
    let b = read_dataset(out.join("data/train_binarize.bin")).unwrap();
    assert_eq!(b.num_classes, 2);

    ok(&run(&cfg, &out, &["transform", "--split", "test", "subsample", "--m", "10"]));
    assert_eq!(read_dataset(out.join("data/test_subsample.bin")).unwrap().len(), 10);

    ok(&run(&cfg, &out, &["transform", "permute", "--mode", "independent", "--seed", "2"]));
    let tr = read_dataset(out.join("data/train_permute_independent.bin")).unwrap();
    let te = read_dataset(out.join("data/test_permute_independent.bin")).unwrap();
    assert_eq!((tr.len(), te.len()), (100, 60));

    // Cached datasets can feed a later config.
    let mut c = base_config();
    c["data"]["train"] = json!({"source": {"kind": "cache", "path": out.join("data/train_corrupt.bin")},
                                "transforms": []});
    let cfg2 = write_config(dir.path(), &c);
    ok(&run(&cfg2, &dir.path().join("out2"), &["train"]));
    assert!(matches!(ds.provenance.source, Source::Blobs { .. }));
}

#[test]
fn exppp_and_evidence_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = base_config();
    c["exppp"] = json!({
        "params": {"eta0": 0.05, "gamma": 0.9, "lambda": 0.0, "alpha": 0.9},
        "net": {"layer_dims": [4, 8, 8, 3], "activation": ["relu", "relu"], "normalize_hidden": true,
                "frozen_readout": true, "bias_enabled": false},
        "horizon": 40, "alphas": [0.9, 0.7], "grid": 3,
        "measures": {"only": ["PARAM_NORM", "PARAMS"]}
    });
    c["evidence"] = json!({
        "net": {"layer_dims": [2, 8, 2], "activation": ["relu"], "normalize_hidden": false,
                "frozen_readout": false, "bias_enabled": false},
        "task": {"draws": 500, "heldout": 100, "max_attempts": 2000},
        "repetitions": 3,
        "bound": {"n": 2, "p_hat": 1.0, "delta_conf": 1.0, "gamma_conf": 1.0}
    });
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out");
    ok(&run(&cfg, &out, &["exppp", "verify"]));
    let v: Value = serde_json::from_slice(&std::fs::read(out.join("reports/exppp/verify/verify.json")).unwrap()).unwrap();
    assert_eq!(v["report"].as_array().unwrap().len(), 2);
    assert!(v["report"].as_array().unwrap().iter().all(|r| r["passed"] == json!(true)));
    assert!(out.join("reports/exppp/verify/steps_alpha_0.9.csv").exists());

    ok(&run(&cfg, &out, &["exppp", "demo"]));
    let d: Value = serde_json::from_slice(&std::fs::read(out.join("reports/exppp/demo/demo.json")).unwrap()).unwrap();
    for e in d["report"].as_array().unwrap() {
        let r = &e["report"];
        assert_eq!(r["ratios"]["PARAMS"], json!(1.0));
        assert_eq!(r["test_error_a"], r["test_error_b"]);
    }

    ok(&run(&cfg, &out, &["evidence", "bound"]));
    let b: Value = serde_json::from_slice(&std::fs::read(out.join("reports/evidence/bound.json")).unwrap()).unwrap();
    assert!((b["report"]["bound"]["epsilon"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    ok(&run(&cfg, &out, &["evidence", "experiment"]));
    let first = std::fs::read(out.join("reports/evidence/experiment/experiment.json")).unwrap();
    ok(&run(&cfg, &out, &["evidence", "experiment"]));
    assert_eq!(first, std::fs::read(out.join("reports/evidence/experiment/experiment.json")).unwrap());
}

#[test]
fn temporal_and_hysteresis_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = base_config();
    c["temporal"] = json!({
        "run": {"lr": 0.05, "max_epochs": 60},
        "measures": ["PARAM_NORM", "FRO_DIST"],
        "hysteresis": {"h_new": {"lr": 0.01}, "epochs": 10}
    });
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out");
    ok(&run(&cfg, &out, &["temporal"]));
    let tdir = std::fs::read_dir(out.join("reports/temporal")).unwrap().next().unwrap().unwrap().path();
    let t: Value = serde_json::from_slice(&std::fs::read(tdir.join("temporal.json")).unwrap()).unwrap();
    assert!(t["report"]["t_int"].is_u64());

    let mut reports = Vec::new();
    for _ in 0..2 {
        ok(&run(&cfg, &out, &["hysteresis"]));
        let hdir = std::fs::read_dir(out.join("reports/hysteresis")).unwrap().next().unwrap().unwrap().path();
        reports.push(std::fs::read(hdir.join("hysteresis.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let h: Value = serde_json::from_slice(&reports[0]).unwrap();
    let parent = h["report"]["parent_run_id"].clone();
    for branch in ["baseline", "tweaked"] {
        let b = &h["report"]["branches"][branch];
        assert_eq!(b["parent_run_id"], parent);
        assert!(b["slopes"]["PARAM_NORM"]["slope"].is_f64());
    }
}
