//! Weight-space primitives shared by every other module.
//!
//! A trained network is treated as one point in a Euclidean space: its
//! parameters are flattened into a [`WeightVector`] and compared with the L2
//! metric. Storage precision is `f32` (the snapshot format), while every
//! distance is accumulated in `f64`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Snapshot magic bytes.
pub const SNAPSHOT_MAGIC: [u8; 4] = *b"WODO";
/// Current snapshot format version.
pub const SNAPSHOT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8;

/// Flat parameter state of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f32>,
}

impl WeightVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyModel);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: 0 });
        }
        Ok(Self { values })
    }

    /// Narrows `f64` parameters to storage precision.
    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Returns a copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

/// One parameter tensor of a layered model, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Row-major `rows x cols` matrix.
    Matrix {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    Vector(Vec<f64>),
}

impl Layer {
    pub fn matrix(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        Layer::Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    fn data(&self) -> &[f64] {
        match self {
            Layer::Matrix { data, .. } => data,
            Layer::Vector(v) => v,
        }
    }

    pub fn len(&self) -> usize {
        self.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.data().is_empty()
    }
}

/// Concatenates layers in the given order, each matrix row-major.
///
/// Bias vectors are expected to follow their matrix in `layers`. Values are
/// narrowed to `f32`; an entry that is non-finite before or after narrowing
/// is reported with its layer index.
pub fn flatten_weights(layers: &[Layer]) -> Result<WeightVector> {
    if layers.is_empty() {
        return Err(Error::EmptyModel);
    }
    let total: usize = layers.iter().map(Layer::len).sum();
    let mut values = Vec::with_capacity(total);
    for (index, layer) in layers.iter().enumerate() {
        if let Layer::Matrix { rows, cols, data } = layer {
            if rows * cols != data.len() {
                return Err(Error::DimMismatch {
                    expected: rows * cols,
                    actual: data.len(),
                });
            }
        }
        for &v in layer.data() {
            let narrowed = v as f32;
            if !v.is_finite() || !narrowed.is_finite() {
                return Err(Error::NonFinite { layer: index });
            }
            values.push(narrowed);
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyModel);
    }
    Ok(WeightVector { values })
}

#[inline]
pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// L2 distance accumulated in `f64`.
pub fn euclidean_distance(a: &WeightVector, b: &WeightVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(squared_distance(&a.values, &b.values).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initial,
    Final,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Final => "final",
        }
    }
}

/// Ordered set of weight vectors of one dimension, one seed per member.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEnsemble {
    dim: usize,
    members: Vec<WeightVector>,
    stage: Stage,
    seeds: Vec<u64>,
}

impl WeightEnsemble {
    pub fn new(members: Vec<WeightVector>, stage: Stage, seeds: Vec<u64>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        let dim = first.dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        if seeds.len() != members.len() {
            return Err(Error::InvalidEnsemble(format!(
                "{} seeds for {} members",
                seeds.len(),
                members.len()
            )));
        }
        Ok(Self {
            dim,
            members,
            stage,
            seeds,
        })
    }

    /// Ensemble whose seeds are the member indices.
    pub fn from_members(members: Vec<WeightVector>, stage: Stage) -> Result<Self> {
        let seeds = (0..members.len() as u64).collect();
        Self::new(members, stage, seeds)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[WeightVector] {
        &self.members
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// Writes `member_NNNNN.wodo` files plus an `ensemble.json` index.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.len());
        for (i, member) in self.members.iter().enumerate() {
            let name = format!("member_{i:05}.wodo");
            save_snapshot(member, &dir.join(&name))?;
            files.push(name);
        }
        let index = EnsembleIndex {
            dim: self.dim,
            stage: self.stage,
            seeds: self.seeds.clone(),
            files,
        };
        let path = dir.join("ensemble.json");
        let mut text = serde_json::to_string_pretty(&index)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("ensemble.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: EnsembleIndex = serde_json::from_str(&text)?;
        let members = index
            .files
            .iter()
            .map(|f| load_snapshot(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        let ensemble = Self::new(members, index.stage, index.seeds)?;
        if ensemble.dim != index.dim {
            return Err(Error::HeaderError(format!(
                "index declares dim {}, snapshots have {}",
                index.dim, ensemble.dim
            )));
        }
        Ok(ensemble)
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleIndex {
    dim: usize,
    stage: Stage,
    seeds: Vec<u64>,
    files: Vec<String>,
}

/// Symmetric matrix of pairwise distances, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry, the zero diagonal, and nonnegativity.
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if entries.len() != n * n {
            return Err(Error::DimMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                let bad = !v.is_finite() || v < 0.0 || (i == j && v != 0.0) || v != entries[j * n + i];
                if bad {
                    return Err(Error::AsymmetricInput { row: i, col: j });
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// All pairwise distances of an ensemble.
pub fn pairwise_distances(ensemble: &WeightEnsemble) -> Result<DistanceMatrix> {
    pairwise_distances_of(ensemble.members())
}

/// All pairwise distances of a list of equal-dimension vectors.
///
/// Rows are computed in parallel; each entry is computed once for `i < j`
/// and mirrored, so the result is exactly symmetric and independent of the
/// worker count.
pub fn pairwise_distances_of(points: &[WeightVector]) -> Result<DistanceMatrix> {
    let first = points.first().ok_or(Error::EmptyEnsemble)?;
    if let Some(bad) = points.iter().find(|p| p.dim() != first.dim()) {
        return Err(Error::DimMismatch {
            expected: first.dim(),
            actual: bad.dim(),
        });
    }
    let n = points.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| squared_distance(&points[i].values, &points[j].values).sqrt())
                .collect()
        })
        .collect();
    let mut entries = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &d) in row.iter().enumerate() {
            let j = i + 1 + offset;
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, entries })
}

/// Encodes a snapshot: magic, version u16 LE, dim u64 LE, dim x f32 LE.
pub fn encode_snapshot(w: &WeightVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * w.dim());
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(w.dim() as u64).to_le_bytes());
    for v in &w.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<WeightVector> {
    if bytes.len() < 4 || bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::FormatError("bad magic bytes".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::HeaderError("header shorter than 14 bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SNAPSHOT_VERSION {
        return Err(Error::FormatError(format!("unsupported version {version}")));
    }
    let dim = u64::from_le_bytes(bytes[6..14].try_into().expect("8-byte slice"));
    if dim == 0 {
        return Err(Error::HeaderError("dim is zero".into()));
    }
    let payload = &bytes[HEADER_LEN..];
    if !payload.len().is_multiple_of(4) {
        return Err(Error::HeaderError(format!(
            "payload length {} is not a multiple of 4",
            payload.len()
        )));
    }
    let present = (payload.len() / 4) as u64;
    if present < dim {
        return Err(Error::TruncationError {
            expected: dim,
            actual: present,
        });
    }
    if present > dim {
        return Err(Error::HeaderError(format!(
            "header declares {dim} values, payload holds {present}"
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    WeightVector::new(values)
}

pub fn save_snapshot(w: &WeightVector, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_snapshot(w)).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: &Path) -> Result<WeightVector> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}

/// Synthetic blob dataset parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecipe {
    pub class_count: usize,
    pub per_class: usize,
    pub input_dim: usize,
    pub spread: f64,
    pub seed: u64,
}

/// Description of one training process and its snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub label_fraction: f64,
    pub corruption_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dataset_recipe: DatasetRecipe,
    pub initial_snapshot: PathBuf,
    pub final_snapshot: PathBuf,
}

impl RunManifest {
    /// Checks ranges and, where the snapshot files exist, that their
    /// dimensions agree. Relative snapshot paths resolve against `base`.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "label_fraction {} outside (0, 1]",
                self.label_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::InvalidConfig(format!(
                "corruption_rate {} outside [0, 1]",
                self.corruption_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and learning_rate must be positive".into(),
            ));
        }
        let initial = base.join(&self.initial_snapshot);
        let final_ = base.join(&self.final_snapshot);
        if initial.exists() && final_.exists() {
            let a = load_snapshot(&initial)?;
            let b = load_snapshot(&final_)?;
            if a.dim() != b.dim() {
                return Err(Error::DimMismatch {
                    expected: a.dim(),
                    actual: b.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
