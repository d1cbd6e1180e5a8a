use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use wodo::mds::fmt_sig17;

const SMALL: &str = r#"{
  "ensemble_size": 10,
  "dataset": {"per_class": 10},
  "training": {"budget": {"steps": 60}},
  "qmcm": {"n": 10, "max_resamples": 20},
  "fractions": [0.5, 1.0],
  "rates": [0.0, 0.5, 1.0],
  "min_clean_accuracy": 0.0,
  "save_snapshots": true
}"#;

fn wodo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wodo")).args(args).output().unwrap()
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs `args` twice into separate directories and returns the files of the
/// first run after checking both runs are byte-identical.
fn run_twice(name: &str, args: &[&str], root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let a = root.join(format!("{name}_a"));
    let b = root.join(format!("{name}_b"));
    for dir in [&a, &b] {
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out-dir", dir.to_str().unwrap()]);
        let out = wodo(&full);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let fa = files(&a);
    assert!(!fa.is_empty());
    assert_eq!(fa, files(&b), "{name} outputs differ");
    fa
}

fn check_csv(path: &Path, bytes: &[u8]) {
    let text = std::str::from_utf8(bytes).unwrap();
    assert!(!text.contains('\r'), "{path:?} has CR");
    assert!(text.ends_with('\n'));
    let mut reader = csv::Reader::from_reader(bytes);
    let width = reader.headers().unwrap().len();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.unwrap();
        assert_eq!(record.len(), width);
        for field in record.iter() {
            // Scientific fields survive a parse/format cycle unchanged.
            if field.contains('e') && !field.contains('_') && field != "true" && field != "false" {
                let v: f64 = field.parse().unwrap();
                assert_eq!(fmt_sig17(v), field, "{path:?}");
            }
        }
        rows += 1;
    }
    assert!(rows > 0, "{path:?} has no rows");
}

#[test]
fn every_subcommand_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = root.join("small.json");
    fs::write(&config, SMALL).unwrap();
    let config = config.to_str().unwrap();

    let mut outputs = Vec::new();
    outputs.push(run_twice(
        "sim",
        &[
            "sim-dist",
            "--size",
            "600",
            "--dim",
            "8",
            "--fraction",
            "0.1",
            "--fraction",
            "0.5",
            "--seed",
            "4",
        ],
        root,
    ));
    for cmd in [
        "init-ensemble",
        "two-scratch",
        "label-fraction",
        "label-corruption",
        "stats",
    ] {
        outputs.push(run_twice(cmd, &[cmd, "--config", config], root));
    }
    let ens = root.join("stats_a/snapshots/initial");
    let snap = root.join("stats_a/snapshots/final/member_00003.wodo");
    outputs.push(run_twice(
        "mds",
        &["mds", "--in", ens.to_str().unwrap(), snap.to_str().unwrap(), "--m", "2"],
        root,
    ));

    for out in &outputs {
        for (path, bytes) in out {
            if path.extension().is_some_and(|e| e == "csv") {
                check_csv(path, bytes);
            }
        }
    }
    let mds = fs::read_to_string(root.join("mds_a/embedding.csv")).unwrap();
    assert_eq!(mds.lines().next().unwrap(), "index,stage,x1,x2");
    assert_eq!(mds.lines().count(), 12);
    assert!(mds.lines().last().unwrap().starts_with("10,snapshot,"));

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(root.join("label-corruption_a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pairing_checks"].as_array().unwrap().len(), 3);
    let kl = fs::read_to_string(root.join("sim_a/kl.csv")).unwrap();
    assert!(kl.starts_with("fraction,kl,"));
    assert_eq!(kl.lines().count(), 3);
}

#[test]
fn sweep_csv_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.json");
    fs::write(&config, SMALL).unwrap();
    let dir = tmp.path().join("out");
    let out = wodo(&[
        "label-fraction",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let mut reader = csv::Reader::from_path(dir.join("fraction.csv")).unwrap();
    for (record, row) in reader.records().zip(manifest["rows"].as_array().unwrap()) {
        let record = record.unwrap();
        let fraction: f64 = record[0].parse().unwrap();
        let d_hat: f64 = record[1].parse().unwrap();
        let converged: bool = record[4].parse().unwrap();
        assert_eq!(fraction, row["arm"].as_f64().unwrap());
        assert_eq!(d_hat.to_bits(), row["d_hat"].as_f64().unwrap().to_bits());
        assert_eq!(converged, row["converged"].as_bool().unwrap());
    }
    // Snapshot manifests validate against their snapshots.
    let run = dir.join("snapshots/fraction_0.5");
    let m = wodo::RunManifest::load(&run.join("runs/member_00000.json")).unwrap();
    m.validate(&run).unwrap();
    assert_eq!(m.label_fraction, 0.5);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let strict = tmp.path().join("strict.json");
    fs::write(
        &strict,
        r#"{"ensemble_size": 6, "dataset": {"per_class": 10}, "fractions": [1.0],
            "training": {"budget": {"steps": 5}}, "min_clean_accuracy": 1.01}"#,
    )
    .unwrap();
    let out = wodo(&[
        "label-fraction",
        "--config",
        strict.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = wodo(&["mds", "--in", tmp.path().join("missing.wodo").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"experiment": "stats"}"#).unwrap();
    let out = wodo(&["two-scratch", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.json");
    fs::write(&config, SMALL).unwrap();
    let mut results = Vec::new();
    for threads in ["1", "3"] {
        let dir = tmp.path().join(format!("t{threads}"));
        let out = Command::new(env!("CARGO_BIN_EXE_wodo"))
            .env("RAYON_NUM_THREADS", threads)
            .args([
                "label-corruption",
                "--config",
                config.to_str().unwrap(),
                "--out-dir",
                dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        results.push(files(&dir));
    }
    assert_eq!(results[0], results[1]);
}
