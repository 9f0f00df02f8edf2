//! Tabular datasets, the synthetic imbalanced generator, and client partitioning.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset feature dimension must be >= 1"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::invalid(format!(
                "feature buffer of length {} does not hold {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self { dim, features, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        let mut labels = Vec::with_capacity(rows.len());
        for &i in rows {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            dim: self.dim,
            features,
            labels,
        }
    }

    pub(crate) fn max_row_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| crate::vector::norm_sq(self.row(i)).sqrt())
            .fold(0.0, f64::max)
    }

    pub(crate) fn max_abs_label(&self) -> f64 {
        self.labels.iter().fold(0.0, |m, y| m.max(y.abs()))
    }
}

/// One client's shard together with the row indices it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub data: Dataset,
    pub source_rows: Vec<usize>,
}

impl ClientDataset {
    pub fn whole(data: Dataset) -> Self {
        let source_rows = (0..data.len()).collect();
        Self { data, source_rows }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum PartitionScheme {
    UniformShard,
    LabelSkew { alpha: f64 },
}

pub const LABEL_SKEW_RETRIES: usize = 100;

/// Splits `dataset` into `clients` disjoint, nonempty shards covering every row.
pub fn partition_dataset(
    dataset: &Dataset,
    clients: usize,
    scheme: PartitionScheme,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot partition an empty dataset"));
    }
    if clients == 0 {
        return Err(Error::invalid("client count must be >= 1"));
    }
    if dataset.len() < clients {
        return Err(Error::invalid(format!(
            "{} rows cannot fill {clients} nonempty shards",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = match scheme {
        PartitionScheme::UniformShard => {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            if clients > 1 {
                order.shuffle(&mut rng);
            }
            let n = order.len();
            (0..clients)
                .map(|k| {
                    let lo = k * n / clients;
                    let hi = (k + 1) * n / clients;
                    let mut rows = order[lo..hi].to_vec();
                    rows.sort_unstable();
                    rows
                })
                .collect::<Vec<_>>()
        }
        PartitionScheme::LabelSkew { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::invalid(format!(
                    "label-skew alpha must be positive, got {alpha}"
                )));
            }
            label_skew(dataset, clients, alpha, &mut rng)?
        }
    };
    Ok(assignment
        .into_iter()
        .map(|rows| ClientDataset {
            data: dataset.select(&rows),
            source_rows: rows,
        })
        .collect())
}

fn label_skew(dataset: &Dataset, clients: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    // Group rows by exact label value, in first-seen order.
    let mut classes: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in 0..dataset.len() {
        let y = dataset.label(i);
        match classes.iter_mut().find(|(c, _)| c.to_bits() == y.to_bits()) {
            Some((_, rows)) => rows.push(i),
            None => classes.push((y, vec![i])),
        }
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    for _ in 0..LABEL_SKEW_RETRIES {
        let mut shards = vec![Vec::new(); clients];
        for (_, rows) in &classes {
            let mut rows = rows.clone();
            rows.shuffle(rng);
            let weights: Vec<f64> = (0..clients).map(|_| rng.sample(gamma)).collect();
            let total: f64 = weights.iter().sum();
            let mut cum = 0.0;
            let mut start = 0;
            for (k, w) in weights.iter().enumerate() {
                cum += w / total;
                let end = if k + 1 == clients {
                    rows.len()
                } else {
                    ((cum * rows.len() as f64).round() as usize).clamp(start, rows.len())
                };
                shards[k].extend_from_slice(&rows[start..end]);
                start = end;
            }
        }
        if shards.iter().all(|s| !s.is_empty()) {
            for s in shards.iter_mut() {
                s.sort_unstable();
            }
            return Ok(shards);
        }
    }
    Err(Error::Numerical(format!(
        "label-skew partition left a client empty after {LABEL_SKEW_RETRIES} redraws"
    )))
}

/// Parameters of the synthetic imbalanced binary classification generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLogistic {
    pub n_total: usize,
    pub dim: usize,
    /// Minority-to-majority count ratio in (0, 1].
    pub imbalance_ratio: f64,
    #[serde(default = "default_separation")]
    pub separation: f64,
    pub seed: u64,
}

fn default_separation() -> f64 {
    1.0
}

impl SyntheticLogistic {
    /// `(minority, majority)` row counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let r = self.imbalance_ratio;
        let minority = ((self.n_total as f64) * r / (1.0 + r)).round() as usize;
        (minority, self.n_total - minority)
    }

    /// Generates the dataset. Minority rows carry label 1, majority rows label 0.
    ///
    /// Rows are `±separation·w + N(0, I)` for a random unit direction `w`, so
    /// the classes are linearly separable up to Gaussian noise.
    pub fn generate(&self) -> Result<Dataset> {
        if self.n_total == 0 || self.dim == 0 {
            return Err(Error::invalid("synthetic dataset needs n_total >= 1 and dim >= 1"));
        }
        if !(self.imbalance_ratio > 0.0 && self.imbalance_ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "imbalance_ratio must lie in (0, 1], got {}",
                self.imbalance_ratio
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut w: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = crate::vector::norm_sq(&w).sqrt().max(f64::MIN_POSITIVE);
        crate::vector::scale(1.0 / norm, &mut w);

        let (minority, _) = self.class_counts();
        let mut labels: Vec<f64> = (0..self.n_total)
            .map(|i| if i < minority { 1.0 } else { 0.0 })
            .collect();
        labels.shuffle(&mut rng);
        let mut features = Vec::with_capacity(self.n_total * self.dim);
        for &y in &labels {
            let sign = if y > 0.5 { 1.0 } else { -1.0 };
            for wj in &w {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(sign * self.separation * wj + noise);
            }
        }
        Dataset::new(self.dim, features, labels)
    }

    /// Generates and partitions in one step; rejects `n_total < clients`.
    pub fn generate_partitioned(
        &self,
        clients: usize,
        scheme: PartitionScheme,
    ) -> Result<(Dataset, Vec<ClientDataset>)> {
        if self.n_total < clients {
            return Err(Error::invalid(format!(
                "n_total = {} is smaller than the client count {clients}",
                self.n_total
            )));
        }
        let data = self.generate()?;
        let shards = partition_dataset(&data, clients, scheme, self.seed.wrapping_add(1))?;
        Ok((data, shards))
    }
}
