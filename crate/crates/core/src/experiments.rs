//! Train/test scenarios over a labeled corpus and the evaluation grid.
//!
//! A grid run crosses scenarios with featurizations and tasks. Features are
//! cached per (image, manipulation, kind) before any trial runs, since
//! persistence dominates the cost and the vectors are deterministic. All
//! randomness is derived from one base seed: trial `i` uses
//! `base_seed + i`, the split shuffle draws from stream 0 of that trial
//! seed, and each grid cell's forest draws from its own stream, so a run
//! restricted to a subset of cells reproduces the full run's numbers.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::curves::{curve_features, dt_diagrams, sublevel_diagrams, FeatureKind};
use crate::error::{Error, Result};
use crate::forest::{
    self, accuracy_percent, mean_absolute_error, Dataset, ForestConfig, MaxFeatures, Task,
};
use crate::image::{gaussian_blur3, load_image, split_quadrants, GrayImage};
use crate::seeding::derive_seed;
use crate::synth::{corpus_image_seed, synth_firn, SynthParams, DEPTHS_M};

/// An image with its ground-truth depth.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    /// Identifier carried into feature files; the manifest path for on-disk
    /// corpora.
    pub id: String,
    pub depth_m: u32,
    pub image: GrayImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomLeft,
        Quadrant::BottomRight,
    ];
}

/// How a sample is derived from its source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Manipulation {
    Identity,
    Blurred,
    Quadrant(Quadrant),
}

impl Manipulation {
    pub fn apply(self, img: &GrayImage) -> Result<GrayImage> {
        Ok(match self {
            Manipulation::Identity => img.clone(),
            Manipulation::Blurred => gaussian_blur3(img),
            Manipulation::Quadrant(q) => {
                let quads = split_quadrants(img)?;
                match q {
                    Quadrant::TopLeft => quads.top_left,
                    Quadrant::TopRight => quads.top_right,
                    Quadrant::BottomLeft => quads.bottom_left,
                    Quadrant::BottomRight => quads.bottom_right,
                }
            }
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Manipulation::Identity => "identity",
            Manipulation::Blurred => "blurred",
            Manipulation::Quadrant(Quadrant::TopLeft) => "quadrant-tl",
            Manipulation::Quadrant(Quadrant::TopRight) => "quadrant-tr",
            Manipulation::Quadrant(Quadrant::BottomLeft) => "quadrant-bl",
            Manipulation::Quadrant(Quadrant::BottomRight) => "quadrant-br",
        }
    }
}

/// One sample of a trial split: a corpus image plus the manipulation that
/// turns it into the actual train/test input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub image_idx: usize,
    pub manipulation: Manipulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Random 75/25 split over whole images, reshuffled per trial.
    Whole,
    /// Random 75/25 split over all image quadrants, reshuffled per trial.
    Split,
    /// Bottom-right quadrants are the test set; deterministic.
    SplitBottomRight,
    /// Same partition as `Whole`, but test images are blurred.
    Blurred,
    /// Images at the held-out depths are the test set; deterministic, and
    /// only meaningful for regression.
    MissingDepths,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Whole,
        Scenario::Split,
        Scenario::SplitBottomRight,
        Scenario::Blurred,
        Scenario::MissingDepths,
    ];

    /// Stable lowercase name used on the command line and in CSV files.
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Whole => "whole",
            Scenario::Split => "split",
            Scenario::SplitBottomRight => "split-br",
            Scenario::Blurred => "blurred",
            Scenario::MissingDepths => "missing-depths",
        }
    }

    /// Row name in rendered results tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Scenario::Whole => "Whole",
            Scenario::Split => "Split",
            Scenario::SplitBottomRight => "Split BR",
            Scenario::Blurred => "Blurred",
            Scenario::MissingDepths => "Missing depths",
        }
    }

    /// Whether the train/test partition itself is random. Deterministic
    /// scenarios vary only the forest seed across trials.
    pub fn reshuffles_per_trial(self) -> bool {
        matches!(
            self,
            Scenario::Whole | Scenario::Split | Scenario::Blurred
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.label() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scenario {s:?}; expected one of {}",
                    Scenario::ALL.map(|sc| sc.label()).join(", ")
                ))
            })
    }
}

/// Configuration of a full evaluation grid.
#[derive(Debug, Clone)]
pub struct GridConfig {
    pub base_seed: u64,
    pub trials: usize,
    pub scenarios: Vec<Scenario>,
    pub features: Vec<FeatureKind>,
    pub tasks: Vec<Task>,
    pub n_trees: usize,
    /// Fraction of samples assigned to training in random splits; the train
    /// count is `floor(fraction * n)`.
    pub train_fraction: f64,
    pub held_out_depths: Vec<u32>,
}

impl GridConfig {
    pub fn new(base_seed: u64) -> Self {
        Self {
            base_seed,
            trials: 10,
            scenarios: Scenario::ALL.to_vec(),
            features: FeatureKind::ALL.to_vec(),
            tasks: Task::ALL.to_vec(),
            n_trees: 100,
            train_fraction: 0.75,
            held_out_depths: vec![23, 53, 70],
        }
    }
}

/// A train/test partition for one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSplit {
    pub train: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
}

/// Stream index of the split shuffle within a trial seed. Shared by every
/// scenario, so `Blurred` reproduces `Whole`'s partition exactly.
const SPLIT_STREAM: u64 = 0;

/// Builds the train/test partition for one scenario and trial.
///
/// Random scenarios shuffle with a generator derived from `trial_seed`;
/// deterministic scenarios ignore it. Every depth present in the corpus
/// must end up in training (except the held-out depths of
/// `MissingDepths`), otherwise the split is rejected.
pub fn make_split(
    scenario: Scenario,
    corpus: &[LabeledImage],
    cfg: &GridConfig,
    trial_seed: u64,
) -> Result<TrialSplit> {
    if corpus.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie strictly between 0 and 1, got {}",
            cfg.train_fraction
        )));
    }

    let split = match scenario {
        Scenario::Whole | Scenario::Blurred => {
            let refs: Vec<SampleRef> = (0..corpus.len())
                .map(|image_idx| SampleRef {
                    image_idx,
                    manipulation: Manipulation::Identity,
                })
                .collect();
            let mut split = shuffle_and_cut(refs, cfg.train_fraction, trial_seed);
            if scenario == Scenario::Blurred {
                for sample in &mut split.test {
                    sample.manipulation = Manipulation::Blurred;
                }
            }
            split
        }
        Scenario::Split => {
            let refs: Vec<SampleRef> = (0..corpus.len())
                .flat_map(|image_idx| {
                    Quadrant::ALL.into_iter().map(move |q| SampleRef {
                        image_idx,
                        manipulation: Manipulation::Quadrant(q),
                    })
                })
                .collect();
            shuffle_and_cut(refs, cfg.train_fraction, trial_seed)
        }
        Scenario::SplitBottomRight => {
            let mut train = Vec::with_capacity(3 * corpus.len());
            let mut test = Vec::with_capacity(corpus.len());
            for image_idx in 0..corpus.len() {
                for q in Quadrant::ALL {
                    let sample = SampleRef {
                        image_idx,
                        manipulation: Manipulation::Quadrant(q),
                    };
                    if q == Quadrant::BottomRight {
                        test.push(sample);
                    } else {
                        train.push(sample);
                    }
                }
            }
            TrialSplit { train, test }
        }
        Scenario::MissingDepths => {
            let held: BTreeSet<u32> = cfg.held_out_depths.iter().copied().collect();
            let present: BTreeSet<u32> = corpus.iter().map(|li| li.depth_m).collect();
            if let Some(missing) = held.iter().find(|d| !present.contains(d)) {
                return Err(Error::Config(format!(
                    "held-out depth {missing} m has no images in the corpus"
                )));
            }
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..corpus.len()).partition(|&i| held.contains(&corpus[i].depth_m));
            let to_refs = |indices: Vec<usize>| {
                indices
                    .into_iter()
                    .map(|image_idx| SampleRef {
                        image_idx,
                        manipulation: Manipulation::Identity,
                    })
                    .collect()
            };
            TrialSplit {
                train: to_refs(train),
                test: to_refs(test),
            }
        }
    };

    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Config(format!(
            "scenario {} left {} training and {} test samples; the corpus is too small",
            scenario,
            split.train.len(),
            split.test.len()
        )));
    }
    if scenario != Scenario::MissingDepths {
        let all_depths: BTreeSet<u32> = corpus.iter().map(|li| li.depth_m).collect();
        let train_depths: BTreeSet<u32> = split
            .train
            .iter()
            .map(|s| corpus[s.image_idx].depth_m)
            .collect();
        if let Some(missing) = all_depths.difference(&train_depths).next() {
            return Err(Error::Config(format!(
                "scenario {scenario} left depth {missing} m without training samples; \
                 add images or adjust the train fraction"
            )));
        }
    }
    Ok(split)
}

fn shuffle_and_cut(mut refs: Vec<SampleRef>, fraction: f64, trial_seed: u64) -> TrialSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, SPLIT_STREAM));
    refs.shuffle(&mut rng);
    let n_train = (fraction * refs.len() as f64).floor() as usize;
    let test = refs.split_off(n_train);
    TrialSplit { train: refs, test }
}

/// Key identifying one cached vector: (corpus image index, manipulation, kind).
type CacheKey = (usize, Manipulation, FeatureKind);

/// Feature vectors keyed by [`CacheKey`].
#[derive(Debug, Default)]
pub struct FeatureCache {
    map: HashMap<CacheKey, Vec<f64>>,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        image_idx: usize,
        manipulation: Manipulation,
        kind: FeatureKind,
    ) -> Option<&[f64]> {
        self.map
            .get(&(image_idx, manipulation, kind))
            .map(Vec::as_slice)
    }

    pub fn insert(
        &mut self,
        image_idx: usize,
        manipulation: Manipulation,
        kind: FeatureKind,
        values: Vec<f64>,
    ) {
        self.map.insert((image_idx, manipulation, kind), values);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Moves every entry of `other` into this cache, replacing collisions.
    pub fn merge(&mut self, other: FeatureCache) {
        self.map.extend(other.map);
    }

    /// Computes every requested (manipulation, kind) vector for every
    /// corpus image, in parallel over images. Each variant image's
    /// persistence diagrams are computed once and shared between the Betti
    /// and Gaussian kinds of the same filtration.
    pub fn populate(
        corpus: &[LabeledImage],
        manipulations: &BTreeSet<Manipulation>,
        kinds: &[FeatureKind],
    ) -> Result<FeatureCache> {
        let kinds: BTreeSet<FeatureKind> = kinds.iter().copied().collect();
        let per_image: Vec<Vec<(CacheKey, Vec<f64>)>> = corpus
            .par_iter()
            .enumerate()
            .map(|(image_idx, labeled)| {
                let mut entries = Vec::new();
                for &manipulation in manipulations {
                    let variant = manipulation.apply(&labeled.image)?;
                    for sublevel in [true, false] {
                        let wanted: Vec<FeatureKind> = kinds
                            .iter()
                            .copied()
                            .filter(|k| k.is_sublevel() == sublevel)
                            .collect();
                        if wanted.is_empty() {
                            continue;
                        }
                        let (d0, d1) = if sublevel {
                            sublevel_diagrams(&variant)
                        } else {
                            dt_diagrams(&variant).map_err(|e| {
                                Error::Config(format!(
                                    "featurizing image {} ({}): {e}",
                                    labeled.id,
                                    manipulation.label()
                                ))
                            })?
                        };
                        for kind in wanted {
                            let values =
                                curve_features(&d0, &d1, &kind.config(), kind.curve_kind());
                            entries.push(((image_idx, manipulation, kind), values));
                        }
                    }
                }
                Ok(entries)
            })
            .collect::<Result<_>>()?;
        let mut cache = FeatureCache::new();
        for entries in per_image {
            for (key, values) in entries {
                cache.map.insert(key, values);
            }
        }
        Ok(cache)
    }
}

/// The manipulations a set of scenarios will ask the feature cache for.
pub fn needed_manipulations(scenarios: &[Scenario]) -> BTreeSet<Manipulation> {
    let mut set = BTreeSet::new();
    for &scenario in scenarios {
        match scenario {
            Scenario::Whole | Scenario::MissingDepths => {
                set.insert(Manipulation::Identity);
            }
            Scenario::Blurred => {
                set.insert(Manipulation::Identity);
                set.insert(Manipulation::Blurred);
            }
            Scenario::Split | Scenario::SplitBottomRight => {
                for q in Quadrant::ALL {
                    set.insert(Manipulation::Quadrant(q));
                }
            }
        }
    }
    set
}

/// Per-trial metrics and their summary for one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scenario: Scenario,
    pub feature: FeatureKind,
    pub task: Task,
    /// One metric value per trial: MAE in metres for regression, accuracy
    /// in percent for classification.
    pub trials: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the trial values.
    pub std: f64,
}

impl ExperimentResult {
    pub fn from_trials(
        scenario: Scenario,
        feature: FeatureKind,
        task: Task,
        trials: Vec<f64>,
    ) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::Config("a result needs at least one trial".into()));
        }
        let n = trials.len() as f64;
        let mean = trials.iter().sum::<f64>() / n;
        let var = trials.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Ok(Self {
            scenario,
            feature,
            task,
            trials,
            mean,
            std: var.sqrt(),
        })
    }

    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }
}

/// Stream index of a grid cell's forest seed within a trial seed. Cells are
/// numbered canonically over all scenarios, features, and tasks, so the
/// same cell trains the same forest whether or not the rest of the grid
/// runs alongside it. Stream 0 is reserved for the split shuffle.
fn cell_stream(scenario: Scenario, feature: FeatureKind, task: Task) -> u64 {
    let s = Scenario::ALL.iter().position(|&x| x == scenario).unwrap();
    let f = FeatureKind::ALL.iter().position(|&x| x == feature).unwrap();
    let t = Task::ALL.iter().position(|&x| x == task).unwrap();
    1 + ((s * FeatureKind::ALL.len() + f) * Task::ALL.len() + t) as u64
}

fn dataset_from(
    corpus: &[LabeledImage],
    cache: &FeatureCache,
    refs: &[SampleRef],
    kind: FeatureKind,
) -> Result<Dataset> {
    let mut features = Vec::with_capacity(refs.len());
    let mut labels = Vec::with_capacity(refs.len());
    for sample in refs {
        let values = cache
            .get(sample.image_idx, sample.manipulation, kind)
            .ok_or_else(|| {
                Error::Config(format!(
                    "feature cache has no {} vector for image {} under the {} manipulation",
                    kind.label(),
                    corpus[sample.image_idx].id,
                    sample.manipulation.label()
                ))
            })?;
        features.push(values.to_vec());
        labels.push(corpus[sample.image_idx].depth_m as f64);
    }
    Dataset::new(features, labels)
}

/// Runs the full evaluation grid, computing features first.
pub fn run_grid(corpus: &[LabeledImage], cfg: &GridConfig) -> Result<Vec<ExperimentResult>> {
    let cache = FeatureCache::populate(
        corpus,
        &needed_manipulations(&cfg.scenarios),
        &cfg.features,
    )?;
    run_grid_with_cache(corpus, cfg, &cache)
}

/// Runs the evaluation grid against a pre-populated feature cache.
///
/// Each (scenario, feature, task) cell runs `cfg.trials` trials; the
/// `MissingDepths` classification cell is skipped because its test classes
/// never appear in training. Output order follows the configured scenario,
/// feature, and task lists.
pub fn run_grid_with_cache(
    corpus: &[LabeledImage],
    cfg: &GridConfig,
    cache: &FeatureCache,
) -> Result<Vec<ExperimentResult>> {
    if corpus.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.trials == 0 {
        return Err(Error::Config("the grid needs at least one trial".into()));
    }
    if cfg.scenarios.is_empty() || cfg.features.is_empty() || cfg.tasks.is_empty() {
        return Err(Error::Config(
            "scenario, feature, and task selections must not be empty".into(),
        ));
    }

    let mut results = Vec::new();
    for &scenario in &cfg.scenarios {
        for &feature in &cfg.features {
            for &task in &cfg.tasks {
                if scenario == Scenario::MissingDepths && task == Task::Classification {
                    continue;
                }
                let stream = cell_stream(scenario, feature, task);
                let mut trials = Vec::with_capacity(cfg.trials);
                for trial in 0..cfg.trials {
                    let trial_seed = cfg.base_seed.wrapping_add(trial as u64);
                    let split = make_split(scenario, corpus, cfg, trial_seed)?;
                    let train = dataset_from(corpus, cache, &split.train, feature)?;
                    let test = dataset_from(corpus, cache, &split.test, feature)?;
                    let forest_cfg = ForestConfig {
                        task,
                        n_trees: cfg.n_trees,
                        max_features: match task {
                            Task::Regression => MaxFeatures::All,
                            Task::Classification => MaxFeatures::Sqrt,
                        },
                        min_samples_leaf: 1,
                        bootstrap: true,
                        seed: derive_seed(trial_seed, stream),
                    };
                    let model = forest::fit(&train, &forest_cfg)?;
                    let predictions = model.predict_batch(&test)?;
                    let metric = match task {
                        Task::Regression => mean_absolute_error(&predictions, test.labels())?,
                        Task::Classification => accuracy_percent(&predictions, test.labels())?,
                    };
                    trials.push(metric);
                }
                results.push(ExperimentResult::from_trials(scenario, feature, task, trials)?);
            }
        }
    }
    Ok(results)
}

/// Renders results as CSV: one row per grid cell with the summary and the
/// per-trial values. Floats use the shortest round-trip form.
pub fn render_results_csv(results: &[ExperimentResult]) -> Result<String> {
    if results.is_empty() {
        return Err(Error::Config("no results to render".into()));
    }
    let n_trials = results[0].n_trials();
    if results.iter().any(|r| r.n_trials() != n_trials) {
        return Err(Error::Config(
            "results in one file must share a trial count".into(),
        ));
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "scenario".to_string(),
        "feature".to_string(),
        "task".to_string(),
        "mean".to_string(),
        "std".to_string(),
    ];
    header.extend((1..=n_trials).map(|i| format!("trial_{i}")));
    writer.write_record(&header).map_err(csv_err)?;
    for r in results {
        let mut record = vec![
            r.scenario.label().to_string(),
            r.feature.label().to_string(),
            r.task.label().to_string(),
            r.mean.to_string(),
            r.std.to_string(),
        ];
        record.extend(r.trials.iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(format!("writing results CSV failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("results CSV was not UTF-8: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("writing results CSV failed: {e}"))
}

/// Reads a results CSV written by [`render_results_csv`], recomputing each
/// summary from the per-trial values and rejecting files where the stored
/// mean or standard deviation disagrees.
pub fn read_results_csv(path: &Path) -> Result<Vec<ExperimentResult>> {
    let malformed = |reason: String| Error::MalformedData {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .clone();
    let fixed = ["scenario", "feature", "task", "mean", "std"];
    if headers.len() < fixed.len() + 1
        || headers.iter().take(fixed.len()).ne(fixed.iter().copied())
    {
        return Err(malformed(format!(
            "expected columns {} then trial columns, found {:?}",
            fixed.join(", "),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut results = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(malformed(format!(
                "row has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let scenario: Scenario = record[0].parse()?;
        let feature: FeatureKind = record[1].parse()?;
        let task: Task = record[2].parse()?;
        let parse_float = |field: &str, what: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|e| malformed(format!("bad {what} value {field:?}: {e}")))
        };
        let mean = parse_float(&record[3], "mean")?;
        let std = parse_float(&record[4], "std")?;
        let trials = record
            .iter()
            .skip(fixed.len())
            .map(|f| parse_float(f, "trial"))
            .collect::<Result<Vec<f64>>>()?;
        let result = ExperimentResult::from_trials(scenario, feature, task, trials)?;
        if (result.mean - mean).abs() > 1e-9 || (result.std - std).abs() > 1e-9 {
            return Err(malformed(format!(
                "stored summary {mean} +- {std} disagrees with the trial values \
                 ({} +- {})",
                result.mean, result.std
            )));
        }
        results.push(result);
    }
    if results.is_empty() {
        return Err(malformed("no result rows".into()));
    }
    Ok(results)
}

const REGRESSION_TITLE: &str = "Scalar depth prediction (mean absolute error, metres)";
const CLASSIFICATION_TITLE: &str = "Depth classification (accuracy, %)";

/// Renders results as an aligned text table: one block per task, scenario
/// rows, one column per featurization, cells `mean ± std` to two decimals.
/// Cells without a result show `-`; a task with no results at all is
/// omitted.
pub fn render_results_table(results: &[ExperimentResult]) -> String {
    let mut cells: HashMap<(Scenario, FeatureKind, Task), String> = HashMap::new();
    for r in results {
        cells.insert(
            (r.scenario, r.feature, r.task),
            format!("{:.2} ± {:.2}", r.mean, r.std),
        );
    }

    let mut out = String::new();
    for (task, title) in [
        (Task::Regression, REGRESSION_TITLE),
        (Task::Classification, CLASSIFICATION_TITLE),
    ] {
        let scenarios: Vec<Scenario> = Scenario::ALL
            .into_iter()
            .filter(|&s| {
                FeatureKind::ALL
                    .into_iter()
                    .any(|f| cells.contains_key(&(s, f, task)))
            })
            .collect();
        if scenarios.is_empty() {
            continue;
        }

        let header: Vec<String> = std::iter::once("Scenario".to_string())
            .chain(FeatureKind::ALL.into_iter().map(|f| f.display_name().into()))
            .collect();
        let rows: Vec<Vec<String>> = scenarios
            .iter()
            .map(|&s| {
                std::iter::once(s.display_name().to_string())
                    .chain(FeatureKind::ALL.into_iter().map(|f| {
                        cells
                            .get(&(s, f, task))
                            .cloned()
                            .unwrap_or_else(|| "-".to_string())
                    }))
                    .collect()
            })
            .collect();

        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }

        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(title);
        out.push('\n');
        out.push_str(&"-".repeat(title.chars().count()));
        out.push('\n');
        let render_row = |row: &[String]| -> String {
            let mut line = String::new();
            for (i, (cell, &w)) in row.iter().zip(&widths).enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                let pad = w - cell.chars().count();
                if i == 0 {
                    line.push_str(cell);
                    line.push_str(&" ".repeat(pad));
                } else {
                    line.push_str(&" ".repeat(pad));
                    line.push_str(cell);
                }
            }
            line.trim_end().to_string()
        };
        out.push_str(&render_row(&header));
        out.push('\n');
        for row in &rows {
            out.push_str(&render_row(row));
            out.push('\n');
        }
    }
    out
}

/// Generates the in-memory synthetic corpus: `images_per_depth` images at
/// each of the ten depths, with ids mirroring the on-disk layout.
pub fn synthetic_corpus(
    base_seed: u64,
    images_per_depth: usize,
    width: usize,
    height: usize,
) -> Result<Vec<LabeledImage>> {
    if images_per_depth == 0 {
        return Err(Error::Config("images per depth must be at least 1".into()));
    }
    let jobs: Vec<(usize, u32, usize)> = DEPTHS_M
        .iter()
        .enumerate()
        .flat_map(|(di, &depth)| (0..images_per_depth).map(move |ii| (di, depth, ii)))
        .collect();
    jobs.into_par_iter()
        .map(|(depth_idx, depth_m, image_idx)| {
            let params =
                SynthParams::for_depth(depth_m, corpus_image_seed(base_seed, depth_idx, image_idx))?;
            let image = synth_firn(&params, width, height)?;
            Ok(LabeledImage {
                id: corpus_image_id(depth_m, image_idx),
                depth_m,
                image,
            })
        })
        .collect()
}

/// Relative path of a synthetic corpus image inside its corpus directory.
pub fn corpus_image_id(depth_m: u32, image_idx: usize) -> String {
    format!("depth_{depth_m:02}m/img_{image_idx:03}.pgm")
}

/// Writes a corpus manifest: CSV with columns `path`, `depth_metres`.
pub fn write_manifest(path: &Path, entries: &[(String, u32)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::MalformedData {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let io_err = |e: csv::Error| Error::MalformedData {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    writer.write_record(["path", "depth_metres"]).map_err(io_err)?;
    for (image_path, depth) in entries {
        writer
            .write_record([image_path.as_str(), &depth.to_string()])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads a corpus manifest written by [`write_manifest`]. Paths are
/// returned as written; [`load_corpus`] resolves them against the manifest
/// directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(String, u32)>> {
    let malformed = |reason: String| Error::MalformedData {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let headers = reader.headers().map_err(|e| malformed(e.to_string()))?;
    if headers.iter().ne(["path", "depth_metres"]) {
        return Err(malformed(format!(
            "expected columns path, depth_metres; found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let depth: u32 = record[1]
            .parse()
            .map_err(|e| malformed(format!("bad depth {:?}: {e}", &record[1])))?;
        entries.push((record[0].to_string(), depth));
    }
    if entries.is_empty() {
        return Err(malformed("manifest lists no images".into()));
    }
    Ok(entries)
}

/// Loads every image listed in a manifest, resolving relative paths against
/// the manifest's directory. Depth labels must be corpus depths.
pub fn load_corpus(manifest: &Path) -> Result<Vec<LabeledImage>> {
    let entries = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    entries
        .into_par_iter()
        .map(|(rel, depth_m)| {
            if !DEPTHS_M.contains(&depth_m) {
                return Err(Error::MalformedData {
                    path: manifest.to_path_buf(),
                    reason: format!(
                        "{rel}: depth {depth_m} m is not one of the corpus depths {DEPTHS_M:?}"
                    ),
                });
            }
            let image = load_image(&base.join(&rel))?;
            Ok(LabeledImage {
                id: rel,
                depth_m,
                image,
            })
        })
        .collect()
}
