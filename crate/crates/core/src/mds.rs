//! Classical (Torgerson) multidimensional scaling.
//!
//! 1. square the distance matrix,
//! 2. double-center it: `B = -1/2 J D2 J` with `J = I - 11'/n`,
//! 3. take the `m` largest eigenpairs of `B`,
//! 4. coordinates `X = E_m diag(sqrt(lambda))`.
//!
//! Negative eigenvalues (non-Euclidean noise) are clamped to zero before the
//! square root.

use std::io::Write;

use crate::eigen::{top_eigenpairs, SquareMatrix};
use crate::error::{Error, Result};
use crate::weights::DistanceMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MdsEmbedding {
    pub n: usize,
    pub m: usize,
    /// `n x m`, row-major; row `i` embeds input element `i`.
    pub points: Vec<f64>,
    /// Retained eigenvalues, non-increasing and clamped at zero.
    pub eigenvalues: Vec<f64>,
}

impl MdsEmbedding {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.m..(i + 1) * self.m]
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.m];
        for i in 0..self.n {
            for (acc, x) in c.iter_mut().zip(self.point(i)) {
                *acc += x;
            }
        }
        c.iter_mut().for_each(|v| *v /= self.n as f64);
        c
    }

    /// Distance of every embedded point from the embedding centroid.
    pub fn radii(&self) -> Vec<f64> {
        let c = self.centroid();
        (0..self.n)
            .map(|i| {
                self.point(i)
                    .iter()
                    .zip(&c)
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn embedded_distance(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Writes `index,stage,x1..xm` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W, stages: &[&str]) -> Result<()> {
        if stages.len() != self.n {
            return Err(Error::DimMismatch {
                expected: self.n,
                actual: stages.len(),
            });
        }
        let mut w = csv::WriterBuilder::new().from_writer(out);
        let mut header = vec!["index".to_string(), "stage".to_string()];
        header.extend((1..=self.m).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (i, stage) in stages.iter().enumerate() {
            let mut record = vec![i.to_string(), stage.to_string()];
            record.extend(self.point(i).iter().map(|&x| fmt_sig17(x)));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `B = -1/2 J D2 J`, computed as `-1/2 (d2_ij - (r_i + r_j) + g)` with row
/// means `r` and grand mean `g`, which keeps `B` exactly symmetric.
pub fn double_center(d2: &SquareMatrix) -> Result<SquareMatrix> {
    if let Some((row, col)) = d2.asymmetry() {
        return Err(Error::AsymmetricInput { row, col });
    }
    let n = d2.n();
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| d2.row(i).iter().sum::<f64>() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut b = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            b.set(i, j, -0.5 * (d2.get(i, j) - (row_means[i] + row_means[j]) + grand));
        }
    }
    Ok(b)
}

/// Embeds a distance matrix into `m` dimensions.
///
/// An all-zero distance matrix (identical points) yields an all-zero
/// embedding; otherwise a spectrum with no positive retained eigenvalue is
/// [`Error::DegenerateEmbedding`].
pub fn mds_embed(dm: &DistanceMatrix, m: usize) -> Result<MdsEmbedding> {
    let n = dm.n();
    if m == 0 || m > n {
        return Err(Error::RankError { requested: m, n });
    }
    if dm.entries().iter().all(|&d| d == 0.0) {
        return Ok(MdsEmbedding {
            n,
            m,
            points: vec![0.0; n * m],
            eigenvalues: vec![0.0; m],
        });
    }
    let d2 = SquareMatrix::from_vec(n, dm.entries().iter().map(|d| d * d).collect())?;
    let b = double_center(&d2)?;
    let eig = top_eigenpairs(&b, m)?;

    let scale = b.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let floor = 1e-12 * scale;
    let eigenvalues: Vec<f64> = eig.values.iter().map(|&l| if l > floor { l } else { 0.0 }).collect();
    if eigenvalues.iter().all(|&l| l == 0.0) {
        return Err(Error::DegenerateEmbedding);
    }
    let mut points = vec![0.0; n * m];
    for i in 0..n {
        for k in 0..m {
            points[i * m + k] = eig.vectors[i * m + k] * eigenvalues[k].sqrt();
        }
    }
    Ok(MdsEmbedding {
        n,
        m,
        points,
        eigenvalues,
    })
}
