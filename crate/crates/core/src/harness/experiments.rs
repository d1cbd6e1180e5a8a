use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::ensemble::{
    check_nearest_pairing, ensemble_distance_stats, train_ensemble, DistanceStats, InitPolicy, TrainedEnsemble,
    TrainingPairs,
};
use crate::error::{Error, Result};
use crate::mds::{mds_embed, MdsEmbedding};
use crate::qmcm::{qmcm_estimate, PairDistances, QmcmEstimate, SimConfig};
use crate::stats::{mean, sample_std};
use crate::toytrain::{changed_positions, corrupt_labels, restrict_labels, Mlp, SyntheticDataset};
use crate::weights::{euclidean_distance, pairwise_distances, pairwise_distances_of, WeightEnsemble, WeightVector};

/// Embedding dimension used for ensemble plots.
pub const PLOT_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusStats {
    /// Mean distance of embedded points from their centroid.
    pub mean: f64,
    pub std: f64,
    pub cv: f64,
    /// Same statistics measured in the original weight space.
    pub weight_space_mean: f64,
    pub weight_space_cv: f64,
}

fn cv_of(xs: &[f64]) -> (f64, f64, f64) {
    let m = mean(xs);
    let s = sample_std(xs);
    (m, s, if m > 0.0 { s / m } else { 0.0 })
}

fn weight_space_radii(ensemble: &WeightEnsemble) -> Vec<f64> {
    let dim = ensemble.dim();
    let mut c = vec![0.0f64; dim];
    for w in ensemble.members() {
        for (acc, &v) in c.iter_mut().zip(w.values()) {
            *acc += f64::from(v);
        }
    }
    let n = ensemble.len() as f64;
    c.iter_mut().for_each(|v| *v /= n);
    ensemble
        .members()
        .iter()
        .map(|w| {
            w.values()
                .iter()
                .zip(&c)
                .map(|(&v, m)| (f64::from(v) - m).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

pub fn radius_stats(ensemble: &WeightEnsemble, embedding: &MdsEmbedding) -> RadiusStats {
    let (mean, std, cv) = cv_of(&embedding.radii());
    let (weight_space_mean, _, weight_space_cv) = cv_of(&weight_space_radii(ensemble));
    RadiusStats {
        mean,
        std,
        cv,
        weight_space_mean,
        weight_space_cv,
    }
}

#[derive(Debug, Clone)]
pub struct InitEnsembleOutput {
    pub initial: MdsEmbedding,
    pub final_: MdsEmbedding,
    pub initial_radius: RadiusStats,
    pub final_radius: RadiusStats,
    pub ensemble: TrainedEnsemble,
}

/// Trains the ensemble and embeds its initial and final stages separately.
pub fn run_init_ensemble(cfg: &ExperimentConfig) -> Result<InitEnsembleOutput> {
    cfg.validate()?;
    let ds = cfg.make_dataset()?;
    let ensemble = train_ensemble(cfg, &ds, &InitPolicy::PerMember, cfg.ensemble_size)?;
    let initials = ensemble.initials()?;
    let finals = ensemble.finals()?;
    let m = PLOT_DIM.min(initials.len());
    let initial = mds_embed(&pairwise_distances(&initials)?, m)?;
    let final_ = mds_embed(&pairwise_distances(&finals)?, m)?;
    Ok(InitEnsembleOutput {
        initial_radius: radius_stats(&initials, &initial),
        final_radius: radius_stats(&finals, &final_),
        initial,
        final_,
        ensemble,
    })
}

#[derive(Debug, Clone)]
pub struct TwoScratchOutput {
    /// Finals `0..size`, then init A, then init B.
    pub embedding: MdsEmbedding,
    /// Per final: 0 for A, 1 for B.
    pub own_init: Vec<usize>,
    pub nearest_init: Vec<usize>,
    /// Share of finals nearer to their own init than to the other one.
    pub assignment_fraction: f64,
    pub ensemble: TrainedEnsemble,
    pub init_a: WeightVector,
    pub init_b: WeightVector,
}

/// Inits A and B come from seeds `base_seed` and `base_seed + 1`.
pub fn run_two_scratch(cfg: &ExperimentConfig) -> Result<TwoScratchOutput> {
    let a = Mlp::init(&cfg.mlp_spec(cfg.base_seed)?);
    let b = Mlp::init(&cfg.mlp_spec(cfg.base_seed.wrapping_add(1))?);
    run_two_scratch_from(cfg, a, b)
}

/// First half of the ensemble starts at `a`, second half at `b`; members
/// differ only in data order.
pub fn run_two_scratch_from(cfg: &ExperimentConfig, a: Mlp, b: Mlp) -> Result<TwoScratchOutput> {
    cfg.validate()?;
    let ds = cfg.make_dataset()?;
    let half = cfg.ensemble_size / 2;
    let init_a = a.weight_vector()?;
    let init_b = b.weight_vector()?;
    let policy = InitPolicy::Split {
        split: half,
        first: Box::new(a),
        second: Box::new(b),
    };
    let ensemble = train_ensemble(cfg, &ds, &policy, cfg.ensemble_size)?;

    let mut own_init = Vec::with_capacity(ensemble.members.len());
    let mut nearest_init = Vec::with_capacity(ensemble.members.len());
    for m in &ensemble.members {
        let own = usize::from(m.index >= half);
        let da = euclidean_distance(&m.final_, &init_a)?;
        let db = euclidean_distance(&m.final_, &init_b)?;
        let nearest = if da < db {
            0
        } else if db < da {
            1
        } else {
            own
        };
        own_init.push(own);
        nearest_init.push(nearest);
    }
    let hits = own_init.iter().zip(&nearest_init).filter(|(a, b)| a == b).count();
    let assignment_fraction = hits as f64 / own_init.len() as f64;

    let mut points: Vec<WeightVector> = ensemble.members.iter().map(|m| m.final_.clone()).collect();
    points.push(init_a.clone());
    points.push(init_b.clone());
    let embedding = mds_embed(&pairwise_distances_of(&points)?, PLOT_DIM)?;
    Ok(TwoScratchOutput {
        embedding,
        own_init,
        nearest_init,
        assignment_fraction,
        ensemble,
        init_a,
        init_b,
    })
}

/// One arm of a label-fraction or label-corruption sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Label fraction or corruption rate.
    pub arm: f64,
    pub d_hat: f64,
    pub achieved_cv: f64,
    pub std: f64,
    pub samples_used: usize,
    pub converged: bool,
    pub resample_count: usize,
    pub extra_members: usize,
    pub pairing: f64,
    pub mean_accuracy: f64,
    /// Classes kept (fraction sweep) or labels changed (corruption sweep).
    pub arm_detail: usize,
    pub skipped: usize,
}

impl SweepRow {
    pub fn estimate(&self) -> QmcmEstimate {
        QmcmEstimate {
            d_hat: self.d_hat,
            std: self.std,
            samples_used: self.samples_used,
            resample_count: self.resample_count,
            achieved_cv: self.achieved_cv,
            converged: self.converged,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepArm {
    pub row: SweepRow,
    pub ensemble: TrainedEnsemble,
    pub dataset: SyntheticDataset,
}

fn run_arm(cfg: &ExperimentConfig, arm: f64, ds: SyntheticDataset, detail: usize, clean: bool) -> Result<SweepArm> {
    let ensemble = train_ensemble(cfg, &ds, &InitPolicy::PerMember, cfg.ensemble_size)?;
    let accuracy = ensemble.mean_accuracy();
    if clean && accuracy < cfg.min_clean_accuracy {
        return Err(Error::PreconditionFailed(format!(
            "arm {arm}: mean training accuracy {accuracy:.4} below {}",
            cfg.min_clean_accuracy
        )));
    }
    let pairing = check_nearest_pairing(&ensemble.initials()?, &ensemble.finals()?)?;
    if pairing < cfg.pairing_threshold {
        return Err(Error::PreconditionFailed(format!(
            "arm {arm}: nearest pairing {pairing:.4} below {}",
            cfg.pairing_threshold
        )));
    }
    let mut source = PairDistances(TrainingPairs::new(cfg, &ds, &ensemble));
    let est = qmcm_estimate(&mut source, &cfg.qmcm)?;
    let row = SweepRow {
        arm,
        d_hat: est.d_hat,
        achieved_cv: est.achieved_cv,
        std: est.std,
        samples_used: est.samples_used,
        converged: est.converged,
        resample_count: est.resample_count,
        extra_members: source.0.extra_trained,
        pairing,
        mean_accuracy: accuracy,
        arm_detail: detail,
        skipped: ensemble.skipped.len(),
    };
    Ok(SweepArm {
        row,
        ensemble,
        dataset: ds,
    })
}

fn sorted_arms(values: &[f64]) -> Vec<f64> {
    let mut arms = values.to_vec();
    arms.sort_by(f64::total_cmp);
    arms.dedup();
    arms
}

/// Trains one ensemble per label fraction on the restricted dataset and
/// estimates `d_hat`; rows are sorted by fraction.
pub fn run_label_fraction(cfg: &ExperimentConfig) -> Result<Vec<SweepArm>> {
    cfg.validate()?;
    let full = cfg.make_dataset()?;
    sorted_arms(&cfg.fractions)
        .into_iter()
        .map(|f| {
            let ds = restrict_labels(&full, f)?;
            let kept = ds.class_count;
            run_arm(cfg, f, ds, kept, true)
        })
        .collect()
}

/// Trains one ensemble per corruption rate; rows are sorted by rate. Labels
/// are shuffled with `base_seed`.
pub fn run_label_corruption(cfg: &ExperimentConfig) -> Result<Vec<SweepArm>> {
    cfg.validate()?;
    let clean = cfg.make_dataset()?;
    sorted_arms(&cfg.rates)
        .into_iter()
        .map(|r| {
            let ds = corrupt_labels(&clean, r, cfg.base_seed)?;
            let changed = changed_positions(&clean, &ds).len();
            run_arm(cfg, r, ds, changed, r == 0.0)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StatsOutput {
    pub stats: DistanceStats,
    pub pairing: f64,
    pub ensemble: TrainedEnsemble,
}

/// Init-to-final distance statistics of one trained ensemble.
pub fn run_stats(cfg: &ExperimentConfig) -> Result<StatsOutput> {
    cfg.validate()?;
    let ds = cfg.make_dataset()?;
    let ensemble = train_ensemble(cfg, &ds, &InitPolicy::PerMember, cfg.ensemble_size)?;
    let initials = ensemble.initials()?;
    let finals = ensemble.finals()?;
    Ok(StatsOutput {
        stats: ensemble_distance_stats(&initials, &finals)?,
        pairing: check_nearest_pairing(&initials, &finals)?,
        ensemble,
    })
}

/// Simulation configs for every fraction in `cfg.sim`, seeded with `base_seed`.
pub fn sim_configs(cfg: &ExperimentConfig) -> Vec<SimConfig> {
    cfg.sim
        .fractions
        .iter()
        .map(|&f| SimConfig {
            population_size: cfg.sim.population_size,
            dim: cfg.sim.dim,
            subset_fraction: f,
            seed: cfg.base_seed,
            bins: cfg.sim.bins,
        })
        .collect()
}
