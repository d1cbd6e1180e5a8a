//! Information-theoretic primitives, all in nats.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::qmcm::information_from_ratio;

/// Floor applied to reference masses before taking logarithms.
pub const KL_FLOOR: f64 = 1e-12;
/// Default bin count for distance histograms.
pub const DEFAULT_BINS: usize = 64;
/// Smallest sample a normal fit accepts.
pub const MIN_FIT_SAMPLES: u64 = 30;

/// Equal- or variable-width histogram over a closed range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidHistogram("need at least 2 bins".into()));
        }
        if edges.len() != counts.len() + 1 {
            return Err(Error::InvalidHistogram(format!(
                "{} edges for {} bins",
                edges.len(),
                counts.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidHistogram(
                "edges must be finite and strictly increasing".into(),
            ));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidHistogram("histogram is empty".into()));
        }
        Ok(Self { edges, counts, total })
    }

    /// `bins` equal-width bins spanning `[min, max]` of the sample; the
    /// maximum falls in the last bin.
    pub fn from_samples(samples: &[f64], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidHistogram("need at least 2 bins".into()));
        }
        if samples.is_empty() || samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidHistogram("samples must be finite and nonempty".into()));
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(Error::DegenerateFit);
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
        edges[bins] = hi;
        let mut counts = vec![0u64; bins];
        for &s in samples {
            let k = (((s - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self::new(edges, counts)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Empirical bin probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("entry {bad}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// Shannon entropy `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    Ok(plogp_sum(p))
}

fn plogp_sum(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Entropy drop between two uniform supports: `ln(before) - ln(after)`,
/// evaluated as `ln(1 / rho)` with `rho = after / before`.
pub fn information_gain(support_before: u64, support_after: u64) -> Result<f64> {
    if support_after == 0 || support_before == 0 {
        return Err(Error::InvalidDistribution("support sizes must be positive".into()));
    }
    if support_after > support_before {
        return Err(Error::ShrinkViolation {
            before: support_before,
            after: support_after,
        });
    }
    if support_after == support_before {
        return Ok(0.0);
    }
    information_from_ratio(support_after as f64 / support_before as f64)
}

/// Mutual information of a joint count table (rows: `x`, columns: `x~`).
pub fn mutual_information(joint_counts: &[Vec<u64>]) -> Result<f64> {
    let cols = joint_counts.first().map_or(0, Vec::len);
    if joint_counts.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidDistribution("ragged contingency table".into()));
    }
    let total: u64 = joint_counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyTable);
    }
    let t = total as f64;
    let row_p: Vec<f64> = joint_counts.iter().map(|r| r.iter().sum::<u64>() as f64 / t).collect();
    let col_p: Vec<f64> = (0..cols)
        .map(|j| joint_counts.iter().map(|r| r[j]).sum::<u64>() as f64 / t)
        .collect();
    let mut mi = 0.0;
    for (i, row) in joint_counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pxy = c as f64 / t;
                mi += pxy * (pxy / (row_p[i] * col_p[j])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// `KL(P || Q)` for a histogram `P` and a reference mass vector `Q`.
///
/// Where `P(i) > 0`, `Q(i)` is floored at [`KL_FLOOR`]; `Q` is then
/// renormalized. Identical inputs give exactly zero.
pub fn kl_divergence(p_hist: &Histogram, q_mass: &[f64]) -> Result<f64> {
    if q_mass.len() != p_hist.bins() {
        return Err(Error::BinMismatch {
            hist: p_hist.bins(),
            mass: q_mass.len(),
        });
    }
    if let Some(bad) = q_mass.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("reference mass {bad}")));
    }
    kl_from_probabilities(&p_hist.probabilities(), q_mass)
}

pub(crate) fn kl_from_probabilities(p: &[f64], q_mass: &[f64]) -> Result<f64> {
    let q: Vec<f64> = p
        .iter()
        .zip(q_mass)
        .map(|(&pi, &qi)| if pi > 0.0 && qi < KL_FLOOR { KL_FLOOR } else { qi })
        .collect();
    let z: f64 = q.iter().sum();
    if !(z > 0.0) {
        return Err(Error::InvalidDistribution("reference mass sums to zero".into()));
    }
    let kl: f64 = p
        .iter()
        .zip(&q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / (qi / z)).ln())
        .sum();
    Ok(kl.max(0.0))
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Moment-matched normal masses for each histogram bin.
///
/// Mean and standard deviation come from bin midpoints weighted by counts
/// (Bessel-corrected); the per-bin masses are renormalized to the
/// histogram's range.
pub fn fit_normal_mass(hist: &Histogram) -> Result<Vec<f64>> {
    if hist.total() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: hist.total() as usize,
            needed: MIN_FIT_SAMPLES as usize,
        });
    }
    let edges = hist.edges();
    let mids: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let t = hist.total() as f64;
    let mean = mids.iter().zip(hist.counts()).map(|(m, &c)| m * c as f64).sum::<f64>() / t;
    let ss: f64 = mids
        .iter()
        .zip(hist.counts())
        .map(|(m, &c)| c as f64 * (m - mean) * (m - mean))
        .sum();
    let std = (ss / (t - 1.0)).sqrt();
    if !(std > 0.0) {
        return Err(Error::DegenerateFit);
    }
    let cdf: Vec<f64> = edges.iter().map(|e| normal_cdf((e - mean) / std)).collect();
    let mass: Vec<f64> = cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let z: f64 = mass.iter().sum();
    if !(z > 0.0) {
        return Err(Error::DegenerateFit);
    }
    Ok(mass.into_iter().map(|m| m / z).collect())
}
