use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::ensemble::{DistanceStats, TrainedEnsemble};
use super::experiments::{InitEnsembleOutput, RadiusStats, StatsOutput, SweepArm, TwoScratchOutput};
use crate::error::{Error, Result};
use crate::mds::fmt_sig17;
use crate::qmcm::DistanceSimulation;
use crate::weights::{RunManifest, Stage};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The config as recorded in manifests; the output location is left out so
/// that identical runs into different directories match byte for byte.
fn config_record(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).unwrap_or_default();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output_dir");
    }
    v
}

/// Snapshot directories plus one [`RunManifest`] per member under `dir`.
pub fn save_ensemble_snapshots(
    cfg: &ExperimentConfig,
    ensemble: &TrainedEnsemble,
    dir: &Path,
    label_fraction: f64,
    corruption_rate: f64,
    samples: usize,
) -> Result<()> {
    ensemble.initials()?.save_dir(&dir.join("initial"))?;
    ensemble.finals()?.save_dir(&dir.join("final"))?;
    let steps = cfg.training.total_steps(samples);
    let per_epoch = samples.div_ceil(cfg.training.batch_size).max(1);
    let runs = dir.join("runs");
    fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
    for (i, m) in ensemble.members.iter().enumerate() {
        let manifest = RunManifest {
            run_id: format!("member_{:05}", m.index),
            seed: m.seed,
            label_fraction,
            corruption_rate,
            epochs: steps.div_ceil(per_epoch).max(1),
            learning_rate: cfg.training.learning_rate,
            batch_size: cfg.training.batch_size,
            dataset_recipe: cfg.recipe(),
            initial_snapshot: PathBuf::from(format!("initial/member_{i:05}.wodo")),
            final_snapshot: PathBuf::from(format!("final/member_{i:05}.wodo")),
        };
        manifest.save(&runs.join(format!("member_{:05}.json", m.index)))?;
    }
    Ok(())
}

fn radius_record(stage: Stage, r: &RadiusStats) -> Vec<String> {
    vec![
        stage.as_str().to_string(),
        fmt_sig17(r.mean),
        fmt_sig17(r.std),
        fmt_sig17(r.cv),
        fmt_sig17(r.weight_space_mean),
        fmt_sig17(r.weight_space_cv),
    ]
}

/// `embedding_initial.csv`, `embedding_final.csv`, `radius.csv`, `manifest.json`.
pub fn write_init_ensemble(cfg: &ExperimentConfig, out: &InitEnsembleOutput, dir: &Path) -> Result<()> {
    for (name, emb, stage) in [
        ("embedding_initial.csv", &out.initial, Stage::Initial),
        ("embedding_final.csv", &out.final_, Stage::Final),
    ] {
        let path = dir.join(name);
        emb.write_csv(create(&path)?, &vec![stage.as_str(); emb.n])?;
    }
    let path = dir.join("radius.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "stage",
        "mean_radius",
        "std_radius",
        "cv",
        "weight_space_mean_radius",
        "weight_space_cv",
    ])?;
    w.write_record(radius_record(Stage::Initial, &out.initial_radius))?;
    w.write_record(radius_record(Stage::Final, &out.final_radius))?;
    finish(w, &path)?;
    if cfg.save_snapshots {
        let samples = cfg.make_dataset()?.len();
        save_ensemble_snapshots(cfg, &out.ensemble, &dir.join("snapshots"), 1.0, 0.0, samples)?;
    }
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "config": config_record(cfg),
            "members": out.ensemble.members.len(),
            "skipped_seeds": out.ensemble.skipped,
            "mean_accuracy": out.ensemble.mean_accuracy(),
            "initial_eigenvalues": out.initial.eigenvalues,
            "final_eigenvalues": out.final_.eigenvalues,
            "initial_radius": out.initial_radius,
            "final_radius": out.final_radius,
        }),
    )
}

/// `embedding.csv` (finals, then `init_a`, `init_b`), `assignment.csv`,
/// `manifest.json`.
pub fn write_two_scratch(cfg: &ExperimentConfig, out: &TwoScratchOutput, dir: &Path) -> Result<()> {
    let mut stages = vec![Stage::Final.as_str(); out.ensemble.members.len()];
    stages.push("init_a");
    stages.push("init_b");
    let path = dir.join("embedding.csv");
    out.embedding.write_csv(create(&path)?, &stages)?;

    let path = dir.join("assignment.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["index", "seed", "own_init", "nearest_init"])?;
    for (k, m) in out.ensemble.members.iter().enumerate() {
        w.write_record([
            m.index.to_string(),
            m.seed.to_string(),
            out.own_init[k].to_string(),
            out.nearest_init[k].to_string(),
        ])?;
    }
    finish(w, &path)?;
    if cfg.save_snapshots {
        let samples = cfg.make_dataset()?.len();
        save_ensemble_snapshots(cfg, &out.ensemble, &dir.join("snapshots"), 1.0, 0.0, samples)?;
    }
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "config": config_record(cfg),
            "members": out.ensemble.members.len(),
            "skipped_seeds": out.ensemble.skipped,
            "assignment_fraction": out.assignment_fraction,
            "eigenvalues": out.embedding.eigenvalues,
        }),
    )
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "d_hat",
    "achieved_cv",
    "std",
    "converged",
    "resample_count",
    "extra_members",
    "pairing",
    "mean_accuracy",
    "arm_detail",
    "skipped",
];

/// Sweep table named `<arm_column>.csv` (`fraction` or `rate`) plus
/// `manifest.json` with the per-arm pairing results.
pub fn write_sweep(cfg: &ExperimentConfig, arms: &[SweepArm], arm_column: &str, dir: &Path) -> Result<()> {
    let path = dir.join(format!("{arm_column}.csv"));
    let mut w = csv_writer(&path)?;
    let mut header = vec![arm_column];
    header.extend(SWEEP_COLUMNS);
    w.write_record(&header)?;
    for a in arms {
        let r = &a.row;
        w.write_record([
            r.arm.to_string(),
            fmt_sig17(r.d_hat),
            fmt_sig17(r.achieved_cv),
            fmt_sig17(r.std),
            r.converged.to_string(),
            r.resample_count.to_string(),
            r.extra_members.to_string(),
            fmt_sig17(r.pairing),
            fmt_sig17(r.mean_accuracy),
            r.arm_detail.to_string(),
            r.skipped.to_string(),
        ])?;
    }
    finish(w, &path)?;
    if cfg.save_snapshots {
        for a in arms {
            let (fraction, rate) = if arm_column == "rate" {
                (1.0, a.row.arm)
            } else {
                (a.row.arm, 0.0)
            };
            let sub = dir.join("snapshots").join(format!("{arm_column}_{}", a.row.arm));
            save_ensemble_snapshots(cfg, &a.ensemble, &sub, fraction, rate, a.dataset.len())?;
        }
    }
    let pairing: Vec<_> = arms
        .iter()
        .map(|a| json!({ arm_column: a.row.arm, "pairing": a.row.pairing, "threshold": cfg.pairing_threshold }))
        .collect();
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "config": config_record(cfg),
            "pairing_checks": pairing,
            "rows": arms.iter().map(|a| &a.row).collect::<Vec<_>>(),
        }),
    )
}

/// `stats.csv` with `members,mean,std,cv_percent,pairing` and `manifest.json`.
pub fn write_stats(cfg: &ExperimentConfig, out: &StatsOutput, dir: &Path) -> Result<()> {
    let path = dir.join("stats.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["members", "mean", "std", "cv_percent", "pairing"])?;
    let DistanceStats { mean, std, cv_percent } = out.stats;
    w.write_record([
        out.ensemble.members.len().to_string(),
        fmt_sig17(mean),
        fmt_sig17(std),
        fmt_sig17(cv_percent),
        fmt_sig17(out.pairing),
    ])?;
    finish(w, &path)?;
    if cfg.save_snapshots {
        let samples = cfg.make_dataset()?.len();
        save_ensemble_snapshots(cfg, &out.ensemble, &dir.join("snapshots"), 1.0, 0.0, samples)?;
    }
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "config": config_record(cfg),
            "skipped_seeds": out.ensemble.skipped,
            "stats": out.stats,
            "pairing": out.pairing,
        }),
    )
}

/// One `histogram_<fraction>.csv` per simulation, `kl.csv` with
/// `fraction,kl,mean,std,cv,reference_len`, and `manifest.json`.
pub fn write_distance_sims(cfg: &ExperimentConfig, sims: &[(f64, DistanceSimulation)], dir: &Path) -> Result<()> {
    for (f, sim) in sims {
        let path = dir.join(format!("histogram_{f}.csv"));
        let file = create(&path)?;
        sim.write_histogram_csv(file)?;
    }
    let path = dir.join("kl.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["fraction", "kl", "mean", "std", "cv", "reference_len"])?;
    for (f, sim) in sims {
        w.write_record([
            f.to_string(),
            fmt_sig17(sim.kl_to_normal),
            fmt_sig17(sim.report.mean),
            fmt_sig17(sim.report.std),
            sim.report.cv().map(fmt_sig17).unwrap_or_default(),
            sim.reference_len.to_string(),
        ])?;
    }
    finish(w, &path)?;
    write_json(&dir.join("manifest.json"), &json!({ "config": config_record(cfg) }))
}
