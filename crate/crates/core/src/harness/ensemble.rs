use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::qmcm::{nearest_member, PairSource};
use crate::stats::{mean, sample_std};
use crate::toytrain::{train_from, Mlp, SyntheticDataset, TrainResult};
use crate::weights::{euclidean_distance, Stage, WeightEnsemble, WeightVector};

/// Largest share of members allowed to diverge before a run fails.
pub const MAX_SKIP_FRACTION: f64 = 0.10;

/// Outcome of training one ensemble member.
#[derive(Debug, Clone)]
pub struct Member {
    pub index: usize,
    pub seed: u64,
    pub initial: WeightVector,
    pub final_: WeightVector,
    pub accuracy: f64,
    pub loss_curve: Vec<f64>,
}

/// Initial and final ensembles of the members that trained successfully.
#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    pub members: Vec<Member>,
    /// Seeds of members skipped after diverging.
    pub skipped: Vec<u64>,
}

impl TrainedEnsemble {
    pub fn initials(&self) -> Result<WeightEnsemble> {
        WeightEnsemble::new(
            self.members.iter().map(|m| m.initial.clone()).collect(),
            Stage::Initial,
            self.members.iter().map(|m| m.seed).collect(),
        )
    }

    pub fn finals(&self) -> Result<WeightEnsemble> {
        WeightEnsemble::new(
            self.members.iter().map(|m| m.final_.clone()).collect(),
            Stage::Final,
            self.members.iter().map(|m| m.seed).collect(),
        )
    }

    pub fn mean_accuracy(&self) -> f64 {
        mean(&self.members.iter().map(|m| m.accuracy).collect::<Vec<_>>())
    }
}

/// How each member picks its starting weights.
#[derive(Debug, Clone)]
pub enum InitPolicy {
    /// Fresh init from the member seed.
    PerMember,
    /// Members `< split` start from the first model, the rest from the second.
    Split {
        split: usize,
        first: Box<Mlp>,
        second: Box<Mlp>,
    },
}

fn train_member(
    cfg: &ExperimentConfig,
    ds: &SyntheticDataset,
    init: &InitPolicy,
    index: usize,
) -> Result<Option<Member>> {
    let seed = cfg.member_seed(index);
    let model = match init {
        InitPolicy::PerMember => Mlp::init(&cfg.mlp_spec(seed)?),
        InitPolicy::Split { split, first, second } => {
            if index < *split {
                (**first).clone()
            } else {
                (**second).clone()
            }
        }
    };
    match train_from(model, ds, &cfg.training, seed) {
        Ok(TrainResult {
            initial,
            final_,
            loss_curve,
            final_model,
        }) => Ok(Some(Member {
            index,
            seed,
            initial,
            final_,
            accuracy: final_model.accuracy(ds),
            loss_curve,
        })),
        Err(Error::DivergenceError { step }) => {
            eprintln!("member {index} (seed {seed}) diverged at step {step}; skipped");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Trains members `0..size` in parallel; output order is member order.
pub fn train_ensemble(
    cfg: &ExperimentConfig,
    ds: &SyntheticDataset,
    init: &InitPolicy,
    size: usize,
) -> Result<TrainedEnsemble> {
    let results: Vec<Result<Option<Member>>> = (0..size)
        .into_par_iter()
        .map(|i| train_member(cfg, ds, init, i))
        .collect();
    let mut members = Vec::with_capacity(size);
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(m) => members.push(m),
            None => skipped.push(cfg.member_seed(i)),
        }
    }
    if skipped.len() as f64 > MAX_SKIP_FRACTION * size as f64 {
        return Err(Error::PreconditionFailed(format!(
            "{} of {size} members diverged",
            skipped.len()
        )));
    }
    if members.len() < 2 {
        return Err(Error::EmptyEnsemble);
    }
    Ok(TrainedEnsemble { members, skipped })
}

/// Replays an ensemble's (initial, final) pairs, then trains further members
/// on demand with the following seeds.
pub struct TrainingPairs<'a> {
    cfg: &'a ExperimentConfig,
    ds: &'a SyntheticDataset,
    replay: Vec<(WeightVector, WeightVector)>,
    cursor: usize,
    next_index: usize,
    /// Members trained on demand.
    pub extra_trained: usize,
}

impl<'a> TrainingPairs<'a> {
    pub fn new(cfg: &'a ExperimentConfig, ds: &'a SyntheticDataset, ensemble: &TrainedEnsemble) -> Self {
        let next_index = ensemble
            .members
            .last()
            .map_or(0, |m| m.index + 1)
            .max(cfg.ensemble_size);
        Self {
            cfg,
            ds,
            replay: ensemble
                .members
                .iter()
                .map(|m| (m.initial.clone(), m.final_.clone()))
                .collect(),
            cursor: 0,
            next_index,
            extra_trained: 0,
        }
    }
}

impl PairSource for TrainingPairs<'_> {
    fn next_pair(&mut self) -> Result<Option<(WeightVector, WeightVector)>> {
        if let Some(pair) = self.replay.get(self.cursor) {
            self.cursor += 1;
            return Ok(Some(pair.clone()));
        }
        // Bounded retry over divergent members.
        for _ in 0..1000 {
            let index = self.next_index;
            self.next_index += 1;
            if let Some(m) = train_member(self.cfg, self.ds, &InitPolicy::PerMember, index)? {
                self.extra_trained += 1;
                return Ok(Some((m.initial, m.final_)));
            }
        }
        Ok(None)
    }
}

/// Share of indices `i` whose own final is the closest final to initial `i`
/// (ties resolved in favour of the own index).
pub fn check_nearest_pairing(initials: &WeightEnsemble, finals: &WeightEnsemble) -> Result<f64> {
    if initials.len() != finals.len() {
        return Err(Error::PairingError(format!(
            "{} initials vs {} finals",
            initials.len(),
            finals.len()
        )));
    }
    if initials.dim() != finals.dim() {
        return Err(Error::PairingError(format!(
            "dimension {} vs {}",
            initials.dim(),
            finals.dim()
        )));
    }
    let hits: usize = initials
        .members()
        .par_iter()
        .enumerate()
        .map(|(i, init)| -> Result<usize> {
            let own = euclidean_distance(init, &finals.members()[i])?;
            let (_, nearest) = nearest_member(init, finals.members())?;
            Ok(usize::from(own <= nearest))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(hits as f64 / initials.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub std: f64,
    /// Coefficient of variation in percent.
    pub cv_percent: f64,
}

/// Statistics of the per-index init-to-final distances.
pub fn ensemble_distance_stats(initials: &WeightEnsemble, finals: &WeightEnsemble) -> Result<DistanceStats> {
    if initials.len() != finals.len() {
        return Err(Error::PairingError(format!(
            "{} initials vs {} finals",
            initials.len(),
            finals.len()
        )));
    }
    let d = initials
        .members()
        .iter()
        .zip(finals.members())
        .map(|(a, b)| euclidean_distance(a, b))
        .collect::<Result<Vec<_>>>()?;
    let m = mean(&d);
    let s = sample_std(&d);
    let cv_percent = if m > 0.0 { 100.0 * s / m } else { 0.0 };
    Ok(DistanceStats {
        mean: m,
        std: s,
        cv_percent,
    })
}
