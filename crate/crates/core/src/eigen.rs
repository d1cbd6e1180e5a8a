//! Dense symmetric eigensolver (cyclic Jacobi rotations).

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimMismatch {
                expected: n,
                actual: bad.len(),
            });
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimMismatch {
                expected: n * n,
                actual: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// First `(row, col)` where the matrix differs from its transpose.
    pub fn asymmetry(&self) -> Option<(usize, usize)> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Leading eigenpairs: `values[k]` pairs with column `k` of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// `n x m`, row-major.
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl Eigenpairs {
    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        let m = self.m();
        (0..self.n).map(|i| self.vectors[i * m + k]).collect()
    }
}

const MAX_SWEEPS: usize = 100;

/// Full eigendecomposition, eigenvalues in non-increasing order.
pub fn symmetric_eigen(b: &SquareMatrix) -> Result<Eigenpairs> {
    let n = b.n;
    if let Some((row, col)) = b.asymmetry() {
        return Err(Error::AsymmetricInput { row, col });
    }
    let mut a = b.clone();
    let mut v = SquareMatrix::identity(n);
    let scale = a.frobenius();
    let tol = 1e-14 * scale;

    let mut converged = n < 2 || off_diagonal_norm(&a) <= tol;
    let mut off = 0.0;
    for sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                // Once past the first sweeps, drop entries below the
                // precision of both diagonal terms.
                let g = 100.0 * apq.abs();
                let app = a.get(p, p).abs();
                let aqq = a.get(q, q).abs();
                if sweep > 3 && app + g == app && aqq + g == aqq {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                rotate(&mut a, &mut v, p, q);
            }
        }
        off = off_diagonal_norm(&a);
        converged = off <= tol;
    }
    if !converged {
        return Err(Error::ConvergenceError { residual: off });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&k| a.get(k, k)).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        // Sign convention: largest-magnitude component positive.
        let mut pivot = 0;
        for i in 0..n {
            if v.get(i, k).abs() > v.get(pivot, k).abs() {
                pivot = i;
            }
        }
        let sign = if v.get(pivot, k) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[i * n + col] = sign * v.get(i, k);
        }
    }
    Ok(Eigenpairs { values, vectors, n })
}

fn off_diagonal_norm(a: &SquareMatrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.n {
        for j in 0..a.n {
            if i != j {
                acc += a.get(i, j) * a.get(i, j);
            }
        }
    }
    acc.sqrt()
}

/// Zeroes `a[p][q]` with one Jacobi rotation, accumulating it into `v`.
fn rotate(a: &mut SquareMatrix, v: &mut SquareMatrix, p: usize, q: usize) {
    let n = a.n;
    let apq = a.get(p, q);
    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a.set(p, p, a.get(p, p) - t * apq);
    a.set(q, q, a.get(q, q) + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a.get(r, p);
        let arq = a.get(r, q);
        let new_rp = arp - s * (arq + tau * arp);
        let new_rq = arq + s * (arp - tau * arq);
        a.set(r, p, new_rp);
        a.set(p, r, new_rp);
        a.set(r, q, new_rq);
        a.set(q, r, new_rq);
    }
    for r in 0..n {
        let vrp = v.get(r, p);
        let vrq = v.get(r, q);
        v.set(r, p, vrp - s * (vrq + tau * vrp));
        v.set(r, q, vrq + s * (vrp - tau * vrq));
    }
}

/// Residual `||B v - lambda v||` for a unit vector `v`.
pub fn residual(b: &SquareMatrix, lambda: f64, v: &[f64]) -> f64 {
    (0..b.n)
        .map(|i| {
            let bv: f64 = b.row(i).iter().zip(v).map(|(x, y)| x * y).sum();
            let r = bv - lambda * v[i];
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// The `m` algebraically largest eigenpairs of a symmetric matrix.
///
/// Every returned pair satisfies `||B v - lambda v|| <= 1e-8 max(1, |lambda|)`
/// with `v` unit-norm; a pair that misses the bound is reported as a
/// convergence failure.
pub fn top_eigenpairs(b: &SquareMatrix, m: usize) -> Result<Eigenpairs> {
    let n = b.n;
    if m == 0 || m > n {
        return Err(Error::RankError { requested: m, n });
    }
    let full = symmetric_eigen(b)?;
    let mut vectors = vec![0.0; n * m];
    for i in 0..n {
        vectors[i * m..(i + 1) * m].copy_from_slice(&full.vectors[i * n..i * n + m]);
    }
    let top = Eigenpairs {
        values: full.values[..m].to_vec(),
        vectors,
        n,
    };
    for k in 0..m {
        let lambda = top.values[k];
        let r = residual(b, lambda, &top.vector(k));
        if r > 1e-8 * lambda.abs().max(1.0) {
            return Err(Error::ConvergenceError { residual: r });
        }
    }
    Ok(top)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let b = SquareMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let top = top_eigenpairs(&b, 2).unwrap();
        assert_eq!(top.values, vec![3.0, 2.0]);
        assert_eq!(top.vector(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(top.vector(1), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_degenerate_spectrum() {
        let b = SquareMatrix::identity(4);
        let top = top_eigenpairs(&b, 1).unwrap();
        assert_eq!(top.values, vec![1.0]);
        let v = top.vector(0);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(residual(&b, 1.0, &v) <= 1e-8);
    }

    #[test]
    fn rank_errors() {
        let b = SquareMatrix::identity(3);
        assert!(matches!(top_eigenpairs(&b, 4), Err(Error::RankError { .. })));
        assert!(matches!(top_eigenpairs(&b, 0), Err(Error::RankError { .. })));
    }

    #[test]
    fn asymmetric_rejected() {
        let b = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            symmetric_eigen(&b),
            Err(Error::AsymmetricInput { row: 0, col: 1 })
        ));
    }

    #[test]
    fn two_by_two_closed_form() {
        let b = SquareMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&b).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }
}
