//! Random forests on CART trees, written against this crate's determinism
//! requirements: per-tree random streams derived from one seed, midpoint
//! split candidates between consecutive distinct feature values, first
//! candidate winning cost ties, and trees grown to purity.
//!
//! A node splits whenever it is impure and some sampled feature admits a
//! valid partition, even if the best split does not reduce impurity on its
//! own; parity-style label patterns need such zero-gain splits before purity
//! becomes reachable. Feature subsampling keeps inspecting fresh features
//! until it has seen the requested number that are non-constant within the
//! node, so a node is never forced into a leaf by an unlucky draw of
//! constant features.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// Prediction task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Regression, Task::Classification];

    pub fn label(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown task {s:?}; expected regression or classification"
                ))
            })
    }
}

/// How many features each node considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    /// All features, the usual regression default.
    All,
    /// `floor(sqrt(n_features))`, at least 1, the usual classification
    /// default.
    Sqrt,
}

#[derive(Debug, Clone)]
pub struct ForestConfig {
    pub task: Task,
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    /// When false, every tree trains on the full dataset in order; useful
    /// for tests that need a tree to reproduce its training data exactly.
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestConfig {
    pub fn regression(seed: u64) -> Self {
        Self {
            task: Task::Regression,
            n_trees: 100,
            max_features: MaxFeatures::All,
            min_samples_leaf: 1,
            bootstrap: true,
            seed,
        }
    }

    pub fn classification(seed: u64) -> Self {
        Self {
            task: Task::Classification,
            max_features: MaxFeatures::Sqrt,
            ..Self::regression(seed)
        }
    }
}

/// A feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    rows: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n_features = features[0].len();
        if n_features == 0 {
            return Err(Error::Config("rows must have at least one feature".into()));
        }
        if labels.len() != features.len() {
            return Err(Error::InvalidLabels(format!(
                "{} labels for {} rows",
                labels.len(),
                features.len()
            )));
        }
        let mut rows = Vec::with_capacity(features.len() * n_features);
        for row in &features {
            if row.len() != n_features {
                return Err(Error::FeatureDimMismatch {
                    expected: n_features,
                    got: row.len(),
                });
            }
            rows.extend_from_slice(row);
        }
        if rows.iter().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLabels(
                "features and labels must be finite".into(),
            ));
        }
        Ok(Self {
            n_features,
            rows,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    #[inline]
    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.rows[sample * self.n_features + feature]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DecisionTree {
    nodes: Vec<Node>,
    root: u32,
}

impl DecisionTree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = self.root as usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

enum TreeTargets<'a> {
    Regression(&'a [f64]),
    Classification { targets: &'a [u32], n_classes: usize },
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    targets: &'a TreeTargets<'a>,
    min_samples_leaf: usize,
    k_features: usize,
    sample_features: bool,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    pool: Vec<u32>,
    scratch: Vec<(f64, u32)>,
    counts: Vec<u64>,
}

impl<'a> TreeBuilder<'a> {
    fn push_leaf(&mut self, value: f64) -> u32 {
        self.nodes.push(Node::Leaf { value });
        (self.nodes.len() - 1) as u32
    }

    /// Leaf value and purity of a node: mean label for regression, the
    /// plurality class index (smallest index on ties) for classification.
    fn leaf_value_and_purity(&mut self, indices: &[u32]) -> (f64, bool) {
        match self.targets {
            TreeTargets::Regression(labels) => {
                let mut sum = 0.0;
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for &i in indices {
                    let y = labels[i as usize];
                    sum += y;
                    min = min.min(y);
                    max = max.max(y);
                }
                (sum / indices.len() as f64, min == max)
            }
            TreeTargets::Classification { targets, n_classes } => {
                self.counts.clear();
                self.counts.resize(*n_classes, 0);
                for &i in indices {
                    self.counts[targets[i as usize] as usize] += 1;
                }
                let mut best = 0;
                for c in 1..*n_classes {
                    if self.counts[c] > self.counts[best] {
                        best = c;
                    }
                }
                let pure = self.counts[best] as usize == indices.len();
                (best as f64, pure)
            }
        }
    }

    fn grow(&mut self, indices: Vec<u32>) -> u32 {
        let n = indices.len();
        let (leaf_value, pure) = self.leaf_value_and_purity(&indices);
        if pure || n < 2 * self.min_samples_leaf {
            return self.push_leaf(leaf_value);
        }
        match self.best_split(&indices) {
            None => self.push_leaf(leaf_value),
            Some((feature, threshold)) => {
                let (left, right): (Vec<u32>, Vec<u32>) = indices
                    .iter()
                    .partition(|&&i| self.data.value(i as usize, feature) <= threshold);
                debug_assert!(!left.is_empty() && !right.is_empty());
                let left_node = self.grow(left);
                let right_node = self.grow(right);
                self.nodes.push(Node::Split {
                    feature: feature as u32,
                    threshold,
                    left: left_node,
                    right: right_node,
                });
                (self.nodes.len() - 1) as u32
            }
        }
    }

    /// Finds the lowest-cost valid split over sampled features. Candidates
    /// sit between consecutive distinct sorted values; the first candidate
    /// reaching the minimum cost wins. Features constant within the node do
    /// not count against the sampling budget.
    fn best_split(&mut self, indices: &[u32]) -> Option<(usize, f64)> {
        let d = self.data.n_features();
        let n = indices.len();
        self.pool.clear();
        self.pool.extend(0..d as u32);

        let mut best: Option<(f64, usize, f64)> = None;
        let mut inspected = 0;
        let mut i = 0;
        while i < d && inspected < self.k_features {
            let j = if self.sample_features {
                self.rng.gen_range(i..d)
            } else {
                i
            };
            self.pool.swap(i, j);
            let f = self.pool[i] as usize;
            i += 1;

            self.scratch.clear();
            self.scratch
                .extend(indices.iter().map(|&s| (self.data.value(s as usize, f), s)));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.scratch[0].0 == self.scratch[n - 1].0 {
                continue;
            }
            inspected += 1;

            match self.targets {
                TreeTargets::Regression(labels) => {
                    let mut sum_t = 0.0;
                    let mut sumsq_t = 0.0;
                    for &(_, s) in self.scratch.iter() {
                        let y = labels[s as usize];
                        sum_t += y;
                        sumsq_t += y * y;
                    }
                    let mut sum_l = 0.0;
                    let mut sumsq_l = 0.0;
                    for pos in 0..n - 1 {
                        let (v, s) = self.scratch[pos];
                        let y = labels[s as usize];
                        sum_l += y;
                        sumsq_l += y * y;
                        let next = self.scratch[pos + 1].0;
                        if next > v {
                            let n_l = pos + 1;
                            let n_r = n - n_l;
                            if n_l < self.min_samples_leaf || n_r < self.min_samples_leaf {
                                continue;
                            }
                            let sum_r = sum_t - sum_l;
                            let sumsq_r = sumsq_t - sumsq_l;
                            let cost = (sumsq_l - sum_l * sum_l / n_l as f64)
                                + (sumsq_r - sum_r * sum_r / n_r as f64);
                            if best.is_none_or(|(c, _, _)| cost < c) {
                                best = Some((cost, f, split_threshold(v, next)));
                            }
                        }
                    }
                }
                TreeTargets::Classification { targets, n_classes } => {
                    self.counts.clear();
                    self.counts.resize(2 * *n_classes, 0);
                    // counts[..n_classes] = left, counts[n_classes..] = right
                    for &(_, s) in self.scratch.iter() {
                        self.counts[*n_classes + targets[s as usize] as usize] += 1;
                    }
                    // Sum of squared counts on each side, updated in O(1)
                    // per sample: moving one sample of class c changes the
                    // squared count by +-(2 count + 1).
                    let mut sq_l: u64 = 0;
                    let mut sq_r: u64 = self.counts[*n_classes..]
                        .iter()
                        .map(|&c| c * c)
                        .sum();
                    for pos in 0..n - 1 {
                        let (v, s) = self.scratch[pos];
                        let c = targets[s as usize] as usize;
                        sq_l += 2 * self.counts[c] + 1;
                        self.counts[c] += 1;
                        self.counts[*n_classes + c] -= 1;
                        sq_r -= 2 * self.counts[*n_classes + c] + 1;
                        let next = self.scratch[pos + 1].0;
                        if next > v {
                            let n_l = pos + 1;
                            let n_r = n - n_l;
                            if n_l < self.min_samples_leaf || n_r < self.min_samples_leaf {
                                continue;
                            }
                            // Weighted Gini impurity of a side is
                            // n_side - (sum of squared counts) / n_side.
                            let cost = (n_l as f64 - sq_l as f64 / n_l as f64)
                                + (n_r as f64 - sq_r as f64 / n_r as f64);
                            if best.is_none_or(|(c, _, _)| cost < c) {
                                best = Some((cost, f, split_threshold(v, next)));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(_, f, thr)| (f, thr))
    }
}

/// Midpoint between two consecutive distinct values, falling back to the
/// lower value when rounding would push the midpoint onto the upper one (so
/// `value <= threshold` always reproduces the intended partition).
fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// A trained forest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    task: Task,
    n_features: usize,
    /// Sorted distinct training labels (classification only).
    classes: Vec<f64>,
    trees: Vec<DecisionTree>,
    /// Which training samples each tree saw; empty on deserialized models.
    #[serde(skip)]
    inbag: Vec<Vec<bool>>,
}

const MODEL_FORMAT: &str = "firn-topo-forest";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: Forest,
}

/// Trains a forest.
pub fn fit(data: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    if cfg.n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    if cfg.min_samples_leaf == 0 {
        return Err(Error::Config("min_samples_leaf must be at least 1".into()));
    }
    let n = data.n_samples();
    let d = data.n_features();

    let (classes, class_targets) = match cfg.task {
        Task::Regression => (Vec::new(), Vec::new()),
        Task::Classification => {
            let mut classes = data.labels().to_vec();
            classes.sort_unstable_by(f64::total_cmp);
            classes.dedup();
            let targets: Vec<u32> = data
                .labels()
                .iter()
                .map(|y| {
                    classes
                        .binary_search_by(|c| c.total_cmp(y))
                        .expect("label missing from its own class list") as u32
                })
                .collect();
            (classes, targets)
        }
    };

    let k_features = match cfg.max_features {
        MaxFeatures::All => d,
        MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
    };

    let built: Vec<(DecisionTree, Vec<bool>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64));
            let (indices, inbag) = if cfg.bootstrap {
                let mut inbag = vec![false; n];
                let indices: Vec<u32> = (0..n)
                    .map(|_| {
                        let i = rng.gen_range(0..n);
                        inbag[i] = true;
                        i as u32
                    })
                    .collect();
                (indices, inbag)
            } else {
                ((0..n as u32).collect(), vec![true; n])
            };
            let targets = match cfg.task {
                Task::Regression => TreeTargets::Regression(data.labels()),
                Task::Classification => TreeTargets::Classification {
                    targets: &class_targets,
                    n_classes: classes.len(),
                },
            };
            let mut builder = TreeBuilder {
                data,
                targets: &targets,
                min_samples_leaf: cfg.min_samples_leaf,
                k_features,
                sample_features: k_features < d,
                rng,
                nodes: Vec::new(),
                pool: Vec::with_capacity(d),
                scratch: Vec::with_capacity(n),
                counts: Vec::new(),
            };
            let root = builder.grow(indices);
            (
                DecisionTree {
                    nodes: builder.nodes,
                    root,
                },
                inbag,
            )
        })
        .collect();

    let (trees, inbag) = built.into_iter().unzip();
    Ok(Forest {
        task: cfg.task,
        n_features: d,
        classes,
        trees,
        inbag,
    })
}

impl Forest {
    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::FeatureDimMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Predicts one row: the mean of tree outputs for regression, the
    /// plurality-vote class label for classification (ties go to the
    /// smallest label).
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.aggregate(self.trees.iter().map(|t| t.predict(row))))
    }

    pub fn predict_batch(&self, data: &Dataset) -> Result<Vec<f64>> {
        (0..data.n_samples()).map(|i| self.predict(data.row(i))).collect()
    }

    fn aggregate(&self, outputs: impl Iterator<Item = f64>) -> f64 {
        match self.task {
            Task::Regression => {
                let mut sum = 0.0;
                let mut count = 0usize;
                for v in outputs {
                    sum += v;
                    count += 1;
                }
                sum / count as f64
            }
            Task::Classification => {
                let mut votes = vec![0u32; self.classes.len()];
                for v in outputs {
                    votes[v as usize] += 1;
                }
                let mut best = 0;
                for c in 1..votes.len() {
                    if votes[c] > votes[best] {
                        best = c;
                    }
                }
                self.classes[best]
            }
        }
    }

    /// Out-of-bag prediction per training sample: aggregated over the trees
    /// whose bootstrap missed that sample, `None` if every tree saw it.
    /// Only available on a freshly fitted forest.
    pub fn oob_predictions(&self, data: &Dataset) -> Result<Vec<Option<f64>>> {
        if self.inbag.len() != self.trees.len() {
            return Err(Error::Config(
                "out-of-bag predictions need the bootstrap record, which is not serialized; refit the forest".into(),
            ));
        }
        (0..data.n_samples())
            .map(|i| {
                self.check_row(data.row(i))?;
                let outputs: Vec<f64> = self
                    .trees
                    .iter()
                    .zip(&self.inbag)
                    .filter(|(_, inbag)| !inbag[i])
                    .map(|(t, _)| t.predict(data.row(i)))
                    .collect();
                if outputs.is_empty() {
                    Ok(None)
                } else {
                    Ok(Some(self.aggregate(outputs.into_iter())))
                }
            })
            .collect()
    }

    /// Serializes the forest as versioned JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        let json = serde_json::to_string(&file)
            .map_err(|e| Error::ModelFormat(format!("serialization failed: {e}")))?;
        std::fs::write(path, json).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Loads a forest saved by [`Forest::save`], rejecting unknown formats
    /// and versions.
    pub fn load(path: &Path) -> Result<Forest> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ModelFile = serde_json::from_slice(&bytes)
            .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!(
                "{} holds {:?}, not a {MODEL_FORMAT} file",
                path.display(),
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "{} is version {}, this build reads version {MODEL_VERSION}",
                path.display(),
                file.version
            )));
        }
        Ok(file.model)
    }
}

/// Mean absolute error between predictions and ground truth.
pub fn mean_absolute_error(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_metric_input(predicted, actual)?;
    let total: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum();
    Ok(total / predicted.len() as f64)
}

/// Exact-match accuracy as a percentage.
pub fn accuracy_percent(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_metric_input(predicted, actual)?;
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p == a)
        .count();
    Ok(100.0 * hits as f64 / predicted.len() as f64)
}

fn check_metric_input(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if predicted.len() != actual.len() {
        return Err(Error::Config(format!(
            "{} predictions against {} ground-truth values",
            predicted.len(),
            actual.len()
        )));
    }
    Ok(())
}
