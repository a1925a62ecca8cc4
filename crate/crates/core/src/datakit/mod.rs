//! Datasets, their ingestion, and the data-complexity transforms.
//!
//! Every transform is a pure function of its input, its parameters and its
//! seed, and appends itself to the dataset's [`Provenance`], so any dataset
//! can be rebuilt with [`Provenance::replay`].

mod cache;
mod idx;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use cache::{read_dataset, write_dataset, write_dataset_tagged};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels};

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::rng::{self, Rng};

/// Where a dataset's rows originally came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Idx {
        images: String,
        labels: String,
    },
    Blobs {
        n: usize,
        dim: usize,
        num_classes: usize,
        separation: f64,
        seed: u64,
    },
    Inline,
    /// A dataset cache file; its stored provenance is kept and extended.
    Cache {
        path: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    Binarize { positive: Vec<usize> },
    CorruptLabels { fraction: f64, seed: u64 },
    PermutePixels { perm: Vec<usize> },
    Subsample { m: usize, seed: u64 },
    Slice { start: usize, len: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    pub transforms: Vec<Transform>,
}

impl Provenance {
    pub fn new(source: Source) -> Self {
        Provenance {
            source,
            transforms: Vec::new(),
        }
    }

    /// Rebuilds the dataset from its source and transform chain.
    pub fn replay(&self) -> Result<Dataset> {
        let mut ds = match &self.source {
            Source::Idx { images, labels } => load_idx(images, labels)?,
            Source::Blobs {
                n,
                dim,
                num_classes,
                separation,
                seed,
            } => synth_blobs(*n, *dim, *num_classes, *separation, *seed)?,
            Source::Cache { path } => read_dataset(path)?,
            Source::Inline => {
                return Err(Error::InvalidDataset(
                    "inline datasets carry no replayable source".into(),
                ))
            }
        };
        for t in &self.transforms {
            ds = ds.apply(t)?;
        }
        Ok(ds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidDataset("dataset has no examples".into()));
        }
        if features.rows != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.rows,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            provenance,
        })
    }

    /// Dataset without a replayable source, for fixtures and tests.
    pub fn inline(rows: &[Vec<f64>], labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Dataset::new(
            Matrix::from_rows(rows),
            labels,
            num_classes,
            Provenance::new(Source::Inline),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Number of distinct labels actually present.
    pub fn classes_present(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    fn with_step(&self, features: Matrix, labels: Vec<usize>, num_classes: usize, step: Transform) -> Result<Self> {
        let mut provenance = self.provenance.clone();
        provenance.transforms.push(step);
        Dataset::new(features, labels, num_classes, provenance)
    }

    fn select_rows(&self, idx: &[usize]) -> (Matrix, Vec<usize>) {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            data.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        (Matrix::from_vec(idx.len(), d, data), labels)
    }

    pub fn apply(&self, t: &Transform) -> Result<Self> {
        match t {
            Transform::Binarize { positive } => binarize(self, positive),
            Transform::CorruptLabels { fraction, seed } => corrupt_labels(self, *fraction, *seed),
            Transform::PermutePixels { perm } => {
                permute_pixels(self, &Permutation::from_vec(perm.clone())?)
            }
            Transform::Subsample { m, seed } => subsample(self, *m, *seed),
            Transform::Slice { start, len } => self.slice(*start, *len),
        }
    }

    /// Contiguous block of rows `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::InvalidSize {
                requested: start + len,
                available: self.len(),
            });
        }
        let idx: Vec<usize> = (start..start + len).collect();
        let (features, labels) = self.select_rows(&idx);
        self.with_step(features, labels, self.num_classes, Transform::Slice { start, len })
    }

    /// First `n_first` rows and the remainder.
    pub fn split(&self, n_first: usize) -> Result<(Self, Self)> {
        let rest = self.len().checked_sub(n_first).unwrap_or(0);
        Ok((self.slice(0, n_first)?, self.slice(n_first, rest)?))
    }
}

/// Relabels to `{0, 1}`: classes in `positive` become 1.
pub fn binarize(ds: &Dataset, positive: &[usize]) -> Result<Dataset> {
    let set: BTreeSet<usize> = positive.iter().copied().collect();
    if set.is_empty() {
        return Err(Error::InvalidSplit("positive class set is empty".into()));
    }
    if let Some(&c) = set.iter().find(|&&c| c >= ds.num_classes) {
        return Err(Error::InvalidSplit(format!(
            "class {c} not among {} classes",
            ds.num_classes
        )));
    }
    if set.len() == ds.num_classes {
        return Err(Error::InvalidSplit("positive set contains every class".into()));
    }
    let labels = ds.labels.iter().map(|y| usize::from(set.contains(y))).collect();
    ds.with_step(
        ds.features.clone(),
        labels,
        2,
        Transform::Binarize {
            positive: set.into_iter().collect(),
        },
    )
}

/// Default split for 10-class data: `{0..4}` against `{5..9}`.
pub fn default_positive_classes(num_classes: usize) -> Vec<usize> {
    (0..num_classes / 2).collect()
}

/// Resamples exactly `round(p * n)` labels (ties to even) among the other
/// classes.
pub fn corrupt_labels(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!(
            "corruption fraction {fraction} outside [0, 1]"
        )));
    }
    if ds.num_classes < 2 {
        return Err(Error::InvalidDataset(
            "label corruption needs at least two classes".into(),
        ));
    }
    let n = ds.len();
    let k = corrupted_count(fraction, n);
    let mut rng = Rng::derive(seed, &[rng::tag("corrupt_labels")]);
    let chosen = rng.sample_indices(n, k);
    let mut labels = ds.labels.clone();
    let others = (ds.num_classes - 1) as u64;
    for i in chosen {
        let r = rng.below(others) as usize;
        labels[i] = if r >= labels[i] { r + 1 } else { r };
    }
    ds.with_step(
        ds.features.clone(),
        labels,
        ds.num_classes,
        Transform::CorruptLabels { fraction, seed },
    )
}

pub fn corrupted_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round_ties_even() as usize
}

/// A bijection on `[0, d)`: column `j` moves to position `map[j]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn from_vec(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || seen[m] {
                return Err(Error::InvalidPermutation(format!(
                    "entry {m} repeated or out of range for size {}",
                    map.len()
                )));
            }
            seen[m] = true;
        }
        Ok(Permutation { map })
    }

    pub fn identity(dim: usize) -> Self {
        Permutation {
            map: (0..dim).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (j, &m) in self.map.iter().enumerate() {
            inv[m] = j;
        }
        Permutation { map: inv }
    }

    /// Moves column `j` of `m` to column `map[j]`.
    pub fn apply_to_columns(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols != self.map.len() {
            return Err(Error::ShapeMismatch(format!(
                "permutation of size {} applied to {} columns",
                self.map.len(),
                m.cols
            )));
        }
        let mut out = Matrix::zeros(m.rows, m.cols);
        for r in 0..m.rows {
            let src = m.row(r);
            let dst = &mut out.data[r * m.cols..(r + 1) * m.cols];
            for (j, &target) in self.map.iter().enumerate() {
                dst[target] = src[j];
            }
        }
        Ok(out)
    }
}

pub fn make_permutation(dim: usize, seed: u64) -> Permutation {
    let mut map: Vec<usize> = (0..dim).collect();
    Rng::derive(seed, &[rng::tag("permutation")]).shuffle(&mut map);
    Permutation { map }
}

pub fn permute_pixels(ds: &Dataset, perm: &Permutation) -> Result<Dataset> {
    let features = perm.apply_to_columns(&ds.features)?;
    ds.with_step(
        features,
        ds.labels.clone(),
        ds.num_classes,
        Transform::PermutePixels {
            perm: perm.map.clone(),
        },
    )
}

/// How pixel permutations are applied to a train/test pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    /// One permutation for both splits.
    Same,
    /// Two permutations drawn with distinct seeds.
    Independent,
}

pub fn permute_pair(
    train: &Dataset,
    test: &Dataset,
    mode: PermutationMode,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let p_train = make_permutation(train.dim(), seed);
    let p_test = match mode {
        PermutationMode::Same => p_train.clone(),
        PermutationMode::Independent => make_permutation(test.dim(), rng::derive_seed(seed, &[1])),
    };
    Ok((permute_pixels(train, &p_train)?, permute_pixels(test, &p_test)?))
}

/// Gaussian clusters with unit within-class variance.
///
/// When `num_classes <= dim` the centers sit on random orthonormal directions
/// scaled by `separation / sqrt(2)`, so every pair of centers is exactly
/// `separation` apart. Otherwise centers are drawn from
/// `N(0, separation^2 / (2 dim) I)`. Labels cycle `0, 1, ..., C-1, 0, ...`.
pub fn synth_blobs(
    n: usize,
    dim: usize,
    num_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || dim == 0 {
        return Err(Error::InvalidConfig("blobs need dim >= 1 and num_classes >= 1".into()));
    }
    if n < num_classes {
        return Err(Error::InvalidSize {
            requested: num_classes,
            available: n,
        });
    }
    let mut rng = Rng::derive(seed, &[rng::tag("blobs")]);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    if num_classes <= dim {
        while centers.len() < num_classes {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            for c in &centers {
                let proj = crate::linalg::dot(&v, c);
                v.iter_mut().zip(c).for_each(|(x, ci)| *x -= proj * ci);
            }
            let len = norm(&v);
            if len > 1e-8 {
                v.iter_mut().for_each(|x| *x /= len);
                centers.push(v);
            }
        }
        let scale = separation / std::f64::consts::SQRT_2;
        for c in &mut centers {
            c.iter_mut().for_each(|x| *x *= scale);
        }
    } else {
        let std = separation / (2.0 * dim as f64).sqrt();
        for _ in 0..num_classes {
            centers.push((0..dim).map(|_| std * rng.normal()).collect());
        }
    }
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % num_classes;
        labels.push(y);
        data.extend(centers[y].iter().map(|c| c + rng.normal()));
    }
    Dataset::new(
        Matrix::from_vec(n, dim, data),
        labels,
        num_classes,
        Provenance::new(Source::Blobs {
            n,
            dim,
            num_classes,
            separation,
            seed,
        }),
    )
}

/// `m` rows drawn without replacement, kept in their original order.
pub fn subsample(ds: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 || m > ds.len() {
        return Err(Error::InvalidSize {
            requested: m,
            available: ds.len(),
        });
    }
    let mut idx = Rng::derive(seed, &[rng::tag("subsample")]).sample_indices(ds.len(), m);
    idx.sort_unstable();
    let (features, labels) = ds.select_rows(&idx);
    ds.with_step(features, labels, ds.num_classes, Transform::Subsample { m, seed })
}
