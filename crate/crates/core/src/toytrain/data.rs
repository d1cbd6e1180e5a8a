use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Labelled feature matrix, row-major `len x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub inputs: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Class means one unit apart.
///
/// With `k <= dim` the means are `e_c / sqrt(2)`; otherwise they sit on a
/// circle in the first two coordinates with unit chords between neighbours
/// (or on a unit-spaced line when `dim == 1`).
fn class_means(k: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let mut m = vec![0.0; dim];
            if k <= dim {
                m[c] = std::f64::consts::FRAC_1_SQRT_2;
            } else if dim >= 2 {
                let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
                let radius = 0.5 / (std::f64::consts::PI / k as f64).sin();
                m[0] = radius * angle.cos();
                m[1] = radius * angle.sin();
            } else {
                m[0] = c as f64;
            }
            m
        })
        .collect()
}

/// `k` isotropic Gaussian clusters of exactly `per_class` samples each,
/// stored class by class.
pub fn make_blobs(k: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<SyntheticDataset> {
    if k < 2 || per_class < 10 || dim == 0 || !(spread > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "make_blobs needs k >= 2, per_class >= 10, dim >= 1, spread > 0 (got {k}, {per_class}, {dim}, {spread})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = class_means(k, dim);
    let mut inputs = Vec::with_capacity(k * per_class * dim);
    let mut labels = Vec::with_capacity(k * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                inputs.push(m + spread * z);
            }
            labels.push(c);
        }
    }
    Ok(SyntheticDataset {
        inputs,
        dim,
        labels,
        class_count: k,
        seed,
    })
}

/// Number of classes kept for a label fraction: `ceil(fraction * k)`.
pub fn retained_classes(k: usize, fraction: f64) -> usize {
    // Absorb representation error such as 0.6 * 10 = 6.000000000000001.
    ((fraction * k as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Keeps the samples of the first `ceil(fraction * k)` classes.
pub fn restrict_labels(ds: &SyntheticDataset, fraction: f64) -> Result<SyntheticDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "label fraction {fraction} outside (0, 1]"
        )));
    }
    let keep = retained_classes(ds.class_count, fraction).min(ds.class_count);
    if keep == 0 {
        return Err(Error::NoClassesLeft);
    }
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (i, &l) in ds.labels.iter().enumerate() {
        if l < keep {
            inputs.extend_from_slice(ds.input(i));
            labels.push(l);
        }
    }
    Ok(SyntheticDataset {
        inputs,
        dim: ds.dim,
        labels,
        class_count: keep,
        seed: ds.seed,
    })
}

/// Shuffles the labels of `floor(rate * N)` randomly chosen samples among
/// themselves; features are untouched.
pub fn corrupt_labels(ds: &SyntheticDataset, rate: f64, seed: u64) -> Result<SyntheticDataset> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("corruption rate {rate} outside [0, 1]")));
    }
    let n = ds.len();
    let count = ((rate * n as f64) + 1e-9).floor().min(n as f64) as usize;
    let mut out = ds.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = index::sample(&mut rng, n, count).into_vec();
    positions.sort_unstable();
    let mut picked: Vec<usize> = positions.iter().map(|&i| ds.labels[i]).collect();
    picked.shuffle(&mut rng);
    for (&i, l) in positions.iter().zip(picked) {
        out.labels[i] = l;
    }
    Ok(out)
}

/// Positions whose label differs between two same-length datasets.
pub fn changed_positions(a: &SyntheticDataset, b: &SyntheticDataset) -> Vec<usize> {
    a.labels
        .iter()
        .zip(&b.labels)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infometrics::entropy;

    /// Perceptron separability oracle: returns true once an epoch makes no
    /// mistakes.
    fn perceptron_separates(ds: &SyntheticDataset) -> bool {
        let mut w = vec![0.0; ds.dim + 1];
        for _ in 0..1000 {
            let mut mistakes = 0;
            for i in 0..ds.len() {
                let y = if ds.labels[i] == 0 { -1.0 } else { 1.0 };
                let x = ds.input(i);
                let act: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[ds.dim];
                if y * act <= 0.0 {
                    mistakes += 1;
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj += y * xj;
                    }
                    w[ds.dim] += y;
                }
            }
            if mistakes == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn two_blobs_are_separable() {
        let ds = make_blobs(2, 10, 2, 0.1, 1).unwrap();
        assert_eq!(ds.len(), 20);
        assert!(perceptron_separates(&ds));
    }

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        assert_eq!(
            make_blobs(3, 12, 4, 0.5, 9).unwrap(),
            make_blobs(3, 12, 4, 0.5, 9).unwrap()
        );
        assert_ne!(
            make_blobs(3, 12, 4, 0.5, 9).unwrap(),
            make_blobs(3, 12, 4, 0.5, 10).unwrap()
        );
        let ds = make_blobs(10, 100, 20, 0.3, 2).unwrap();
        assert_eq!(ds.class_histogram(), vec![100; 10]);
        assert!(make_blobs(1, 10, 2, 0.1, 0).is_err());
        assert!(make_blobs(2, 9, 2, 0.1, 0).is_err());
    }

    #[test]
    fn means_are_unit_separated() {
        for (k, dim) in [(3, 5), (7, 3), (4, 1)] {
            let means = class_means(k, dim);
            let nearest = (1..k)
                .map(|c| {
                    means[0]
                        .iter()
                        .zip(&means[c])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((nearest - 1.0).abs() < 1e-12, "k={k} dim={dim}: {nearest}");
        }
    }

    #[test]
    fn restrict_examples() {
        let ds = make_blobs(10, 10, 10, 0.2, 4).unwrap();
        assert_eq!(restrict_labels(&ds, 1.0).unwrap(), ds);
        let r = restrict_labels(&ds, 0.2).unwrap();
        assert_eq!(r.class_count, 2);
        assert_eq!(r.class_histogram(), vec![10, 10]);
        assert_eq!(r.input(0), ds.input(0));
        assert_eq!(restrict_labels(&ds, 0.6).unwrap().class_count, 6);
        assert!(restrict_labels(&ds, 0.0).is_err());

        let mut last = 0.0;
        for f in [0.2, 0.4, 0.6, 0.8, 1.0] {
            let r = restrict_labels(&ds, f).unwrap();
            let n = r.len() as f64;
            let p: Vec<f64> = r.class_histogram().iter().map(|&c| c as f64 / n).collect();
            let h = entropy(&p).unwrap();
            assert!((h - (r.class_count as f64).ln()).abs() < 1e-12);
            assert!(h > last);
            last = h;
        }
        assert!((last - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn restrict_can_leave_no_classes() {
        let mut ds = make_blobs(2, 10, 2, 0.1, 0).unwrap();
        ds.class_count = 0;
        assert!(matches!(restrict_labels(&ds, 0.5), Err(Error::NoClassesLeft)));
    }

    #[test]
    fn corrupt_examples() {
        let ds = make_blobs(5, 20, 5, 0.2, 6).unwrap();
        assert_eq!(corrupt_labels(&ds, 0.0, 1).unwrap(), ds);

        let full = corrupt_labels(&ds, 1.0, 1).unwrap();
        assert_eq!(full.inputs, ds.inputs);
        let mut a = ds.labels.clone();
        let mut b = full.labels.clone();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);

        let half = corrupt_labels(&ds, 0.5, 3).unwrap();
        assert_eq!(half, corrupt_labels(&ds, 0.5, 3).unwrap());
        assert_eq!(half.inputs, ds.inputs);
        // Changed positions all lie in the 50 selected ones.
        let changed = changed_positions(&ds, &half);
        assert!(changed.len() <= 50);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let selected = index::sample(&mut rng, 100, 50).into_vec();
        assert_eq!(selected.len(), 50);
        assert!(changed.iter().all(|i| selected.contains(i)));
        assert!(corrupt_labels(&ds, 1.5, 0).is_err());
    }
}
