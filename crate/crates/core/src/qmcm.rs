//! Nearest-distance support estimation.
//!
//! If a training process shrinks the support of its weight distribution from
//! `X` to a subset `X'`, the mean distance from points of `X` to their
//! nearest element of `X'` grows as `X'` shrinks. The adaptive estimator
//! [`qmcm_estimate`] measures that mean from paired (initial, final) weights
//! with a coefficient-of-variation stopping rule, and [`compare_runs`] turns
//! two estimates into an ordering of accumulated information.
//!
//! Ratios are always `rho = |X'| / |X|` in `(0, 1)`.

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infometrics::{fit_normal_mass, kl_divergence, Histogram, DEFAULT_BINS};
use crate::mds::fmt_sig17;
use crate::stats::{mean, sample_std};
use crate::weights::{euclidean_distance, squared_distance, Stage, WeightEnsemble, WeightVector};

/// Fewest query distances a simulated distribution may be built from.
pub const MIN_QUERY_DISTANCES: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct NearestDistanceReport {
    pub distances: Vec<f64>,
    pub mean: f64,
    /// Bessel-corrected.
    pub std: f64,
    cv: Option<f64>,
}

impl NearestDistanceReport {
    pub fn from_distances(distances: Vec<f64>) -> Self {
        let m = mean(&distances);
        let s = sample_std(&distances);
        let cv = (m > 0.0).then(|| s / m);
        Self {
            distances,
            mean: m,
            std: s,
            cv,
        }
    }

    /// `std / mean`; undefined when every distance is zero.
    pub fn cv(&self) -> Result<f64> {
        self.cv.ok_or(Error::CvUndefined)
    }

    /// Mean over the whole population when the `reference_len` reference
    /// members (distance 0) are counted alongside the queries.
    pub fn whole_population_mean(&self, reference_len: usize) -> f64 {
        self.distances.iter().sum::<f64>() / (self.distances.len() + reference_len) as f64
    }
}

fn check_dims(x: &WeightVector, reference: &[WeightVector]) -> Result<()> {
    let first = reference.first().ok_or(Error::EmptyReference)?;
    if first.dim() != x.dim() {
        return Err(Error::DimMismatch {
            expected: first.dim(),
            actual: x.dim(),
        });
    }
    Ok(())
}

/// Index and distance of the closest reference member (lowest index on ties).
pub fn nearest_member(x: &WeightVector, reference: &[WeightVector]) -> Result<(usize, f64)> {
    check_dims(x, reference)?;
    let mut best = (0, f64::INFINITY);
    for (i, r) in reference.iter().enumerate() {
        let d2 = squared_distance(x.values(), r.values());
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    Ok((best.0, best.1.sqrt()))
}

/// Distance from `x` to its closest element of `reference_set`.
pub fn nearest_distance(x: &WeightVector, reference_set: &WeightEnsemble) -> Result<f64> {
    if x.dim() != reference_set.dim() {
        return Err(Error::DimMismatch {
            expected: reference_set.dim(),
            actual: x.dim(),
        });
    }
    nearest_member(x, reference_set.members()).map(|(_, d)| d)
}

/// Nearest distances of every query, scanned exhaustively in parallel.
pub fn nearest_distances(queries: &[WeightVector], reference: &[WeightVector]) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    queries
        .par_iter()
        .map(|q| nearest_member(q, reference).map(|(_, d)| d))
        .collect()
}

pub fn mean_nearest_distance(
    queries: &WeightEnsemble,
    reference_set: &WeightEnsemble,
) -> Result<NearestDistanceReport> {
    if queries.dim() != reference_set.dim() {
        return Err(Error::DimMismatch {
            expected: reference_set.dim(),
            actual: queries.dim(),
        });
    }
    let distances = nearest_distances(queries.members(), reference_set.members())?;
    Ok(NearestDistanceReport::from_distances(distances))
}

/// Supplies one distance per draw.
pub trait DistanceSource {
    /// `Ok(None)` once the source is exhausted.
    fn next_distance(&mut self) -> Result<Option<f64>>;
}

/// Supplies (initial, final) weight pairs.
pub trait PairSource {
    fn next_pair(&mut self) -> Result<Option<(WeightVector, WeightVector)>>;
}

/// Finite source replaying a list in order.
#[derive(Debug, Clone)]
pub struct VecSource {
    values: Vec<f64>,
    next: usize,
}

impl VecSource {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, next: 0 }
    }

    pub fn drawn(&self) -> usize {
        self.next
    }
}

impl DistanceSource for VecSource {
    fn next_distance(&mut self) -> Result<Option<f64>> {
        let v = self.values.get(self.next).copied();
        if v.is_some() {
            self.next += 1;
        }
        Ok(v)
    }
}

/// Adapts a pair source: each pair contributes its init-to-final distance.
pub struct PairDistances<S>(pub S);

impl<S: PairSource> DistanceSource for PairDistances<S> {
    fn next_distance(&mut self) -> Result<Option<f64>> {
        match self.0.next_pair()? {
            Some((initial, final_)) => euclidean_distance(&initial, &final_).map(Some),
            None => Ok(None),
        }
    }
}

/// Replays matched initial/final ensembles in member order.
pub struct EnsemblePairs<'a> {
    initials: &'a WeightEnsemble,
    finals: &'a WeightEnsemble,
    next: usize,
}

impl<'a> EnsemblePairs<'a> {
    pub fn new(initials: &'a WeightEnsemble, finals: &'a WeightEnsemble) -> Result<Self> {
        if initials.len() != finals.len() {
            return Err(Error::PairingError(format!(
                "{} initials vs {} finals",
                initials.len(),
                finals.len()
            )));
        }
        Ok(Self {
            initials,
            finals,
            next: 0,
        })
    }
}

impl PairSource for EnsemblePairs<'_> {
    fn next_pair(&mut self) -> Result<Option<(WeightVector, WeightVector)>> {
        let i = self.next;
        if i >= self.initials.len() {
            return Ok(None);
        }
        self.next += 1;
        Ok(Some((
            self.initials.members()[i].clone(),
            self.finals.members()[i].clone(),
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QmcmConfig {
    /// Coefficient-of-variation threshold.
    pub t: f64,
    /// Accepted sample count.
    pub n: usize,
    /// Replacement draws allowed before giving up.
    pub max_resamples: usize,
}

impl QmcmConfig {
    pub fn new(t: f64, n: usize) -> Self {
        Self {
            t,
            n,
            max_resamples: 50 * n,
        }
    }
}

impl Default for QmcmConfig {
    fn default() -> Self {
        Self::new(0.3, 200)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QmcmEstimate {
    /// Mean distance over the accepted sample set.
    pub d_hat: f64,
    /// Sample standard deviation over the accepted set.
    pub std: f64,
    pub samples_used: usize,
    pub resample_count: usize,
    pub achieved_cv: f64,
    pub converged: bool,
}

fn draw(source: &mut dyn DistanceSource, drawn: &mut usize) -> Result<f64> {
    match source.next_distance()? {
        Some(d) => {
            *drawn += 1;
            Ok(d)
        }
        None => Err(Error::SourceExhausted { drawn: *drawn }),
    }
}

/// Adaptive remove-worst/resample mean estimator.
///
/// Draws `n` distances; while their coefficient of variation exceeds `t`,
/// drops the sample furthest from the mean (lowest position on ties) and
/// appends a fresh draw. Giving up after `max_resamples` replacements returns
/// the lowest-cv state seen with `converged = false`.
pub fn qmcm_estimate(source: &mut dyn DistanceSource, config: &QmcmConfig) -> Result<QmcmEstimate> {
    if !(config.t > 0.0) {
        return Err(Error::InvalidEstimator(format!("threshold t = {}", config.t)));
    }
    if config.n < 2 {
        return Err(Error::InvalidEstimator(format!("sample count n = {}", config.n)));
    }
    let mut drawn = 0;
    let mut accepted = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        accepted.push(draw(source, &mut drawn)?);
    }

    let mut resamples = 0;
    let mut best: Option<QmcmEstimate> = None;
    loop {
        let m = mean(&accepted);
        if !(m > 0.0) {
            return Err(Error::CvUndefined);
        }
        let s = sample_std(&accepted);
        let cv = s / m;
        let state = QmcmEstimate {
            d_hat: m,
            std: s,
            samples_used: config.n,
            resample_count: resamples,
            achieved_cv: cv,
            converged: cv <= config.t,
        };
        if state.converged {
            return Ok(state);
        }
        if best.is_none_or(|b| cv < b.achieved_cv) {
            best = Some(state);
        }
        if resamples == config.max_resamples {
            let mut out = best.expect("at least one state recorded");
            out.resample_count = resamples;
            return Ok(out);
        }
        let mut worst = 0;
        let mut worst_dev = f64::NEG_INFINITY;
        for (i, &d) in accepted.iter().enumerate() {
            let dev = (d - m).abs();
            if dev > worst_dev {
                worst = i;
                worst_dev = dev;
            }
        }
        accepted.remove(worst);
        accepted.push(draw(source, &mut drawn)?);
        resamples += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfoOrdering {
    /// `a` accumulated less information than `b`.
    LessInfo,
    MoreInfo,
    Indistinguishable,
}

/// Orders two converged estimates by `d_hat` outside a noise band of
/// `max(std_a, std_b) / sqrt(n)`, `n` the smaller sample count.
pub fn compare_runs(a: &QmcmEstimate, b: &QmcmEstimate) -> Result<InfoOrdering> {
    if !a.converged || !b.converged {
        return Err(Error::NotConverged);
    }
    let n = a.samples_used.min(b.samples_used).max(1) as f64;
    let eps = a.std.max(b.std) / n.sqrt();
    Ok(if a.d_hat < b.d_hat - eps {
        InfoOrdering::LessInfo
    } else if a.d_hat > b.d_hat + eps {
        InfoOrdering::MoreInfo
    } else {
        InfoOrdering::Indistinguishable
    })
}

/// Information `ln(1 / rho)` in nats for a support shrink ratio `rho`.
pub fn information_from_ratio(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::DomainError(rho));
    }
    Ok(-rho.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub population_size: usize,
    pub dim: usize,
    /// Reference subset share `rho` of the population.
    pub subset_fraction: f64,
    pub seed: u64,
    pub bins: usize,
}

impl SimConfig {
    pub fn new(population_size: usize, dim: usize, subset_fraction: f64, seed: u64) -> Self {
        Self {
            population_size,
            dim,
            subset_fraction,
            seed,
            bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSimulation {
    pub report: NearestDistanceReport,
    pub histogram: Histogram,
    /// Moment-matched normal mass per histogram bin.
    pub normal_mass: Vec<f64>,
    pub kl_to_normal: f64,
    pub reference_len: usize,
}

impl DistanceSimulation {
    /// Writes `bin_left,bin_right,count,p,q`.
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_left", "bin_right", "count", "p", "q"])?;
        let edges = self.histogram.edges();
        let p = self.histogram.probabilities();
        for k in 0..self.histogram.bins() {
            w.write_record([
                fmt_sig17(edges[k]),
                fmt_sig17(edges[k + 1]),
                self.histogram.counts()[k].to_string(),
                fmt_sig17(p[k]),
                fmt_sig17(self.normal_mass[k]),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Unit vectors drawn uniformly on the sphere (normalized standard normals).
pub fn random_unit_vectors(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<WeightVector>> {
    (0..count)
        .map(|_| {
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            WeightVector::from_f64(&raw.iter().map(|v| v / norm).collect::<Vec<_>>())
        })
        .collect()
}

/// Nearest-distance distribution of a random population against a random
/// reference subset, compared with its moment-matched normal.
pub fn simulate_distance_distribution(config: &SimConfig) -> Result<DistanceSimulation> {
    if config.population_size < 100 {
        return Err(Error::InvalidConfig(format!(
            "population_size {} < 100",
            config.population_size
        )));
    }
    if !(config.subset_fraction > 0.0 && config.subset_fraction < 1.0) {
        return Err(Error::DomainError(config.subset_fraction));
    }
    if config.dim == 0 {
        return Err(Error::InvalidConfig("dim must be positive".into()));
    }
    let size = config.population_size;
    let reference_len = (config.subset_fraction * size as f64).floor() as usize;
    let query_len = size - reference_len;
    if reference_len == 0 {
        return Err(Error::EmptyReference);
    }
    if query_len < MIN_QUERY_DISTANCES {
        return Err(Error::InsufficientSamples {
            got: query_len,
            needed: MIN_QUERY_DISTANCES,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let population = random_unit_vectors(size, config.dim, &mut rng)?;
    let mut in_subset = vec![false; size];
    for i in index::sample(&mut rng, size, reference_len) {
        in_subset[i] = true;
    }
    let (reference, queries): (Vec<_>, Vec<_>) = population.into_iter().zip(&in_subset).partition(|(_, &sel)| sel);
    let reference: Vec<WeightVector> = reference.into_iter().map(|(w, _)| w).collect();
    let queries: Vec<WeightVector> = queries.into_iter().map(|(w, _)| w).collect();

    let distances = nearest_distances(&queries, &reference)?;
    let report = NearestDistanceReport::from_distances(distances);
    let histogram = Histogram::from_samples(&report.distances, config.bins)?;
    let normal_mass = fit_normal_mass(&histogram)?;
    let kl_to_normal = kl_divergence(&histogram, &normal_mass)?;
    Ok(DistanceSimulation {
        report,
        histogram,
        normal_mass,
        kl_to_normal,
        reference_len,
    })
}

/// Wraps vectors as an ensemble with index seeds.
pub fn ensemble_of(points: Vec<WeightVector>) -> Result<WeightEnsemble> {
    WeightEnsemble::from_members(points, Stage::Initial)
}
