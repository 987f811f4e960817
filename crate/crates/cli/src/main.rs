//! Command-line front end: generate a synthetic corpus, featurize it, train
//! single models, run the scenario grid, and re-render reports.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use firn_topo::curves::{
    featurize_dt, featurize_sublevel, read_feature_csv, write_feature_csv, write_mean_curves_csv,
    FeatureKind, FeatureRow,
};
use firn_topo::experiments::{
    load_corpus, needed_manipulations, read_results_csv, render_results_csv,
    render_results_table, run_grid_with_cache, synthetic_corpus, write_manifest, FeatureCache,
    GridConfig, Manipulation, Scenario,
};
use firn_topo::forest::{self, Dataset, ForestConfig, MaxFeatures, Task};

#[derive(Parser)]
#[command(
    name = "firn-topo",
    version,
    about = "Topological depth prediction for firn micro-CT images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic firn corpus (PGM images plus manifest.csv).
    Synth {
        /// Directory to create the corpus in.
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
        /// Base seed; the corpus is a pure function of it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Images generated at each of the ten depths.
        #[arg(long, default_value_t = 20)]
        images_per_depth: usize,
        /// Image side length in pixels.
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
    /// Compute feature CSVs (one per featurization) for a corpus.
    Featurize {
        /// Corpus manifest (CSV with columns path, depth_metres).
        #[arg(long)]
        manifest: PathBuf,
        /// Directory receiving features_<kind>.csv and mean_curves.csv.
        #[arg(long, default_value = "features")]
        out: PathBuf,
        /// Featurizations to compute.
        #[arg(long, value_delimiter = ',', default_values_t = FeatureKind::ALL)]
        features: Vec<FeatureKind>,
    },
    /// Train one forest from a feature CSV and save it as JSON.
    Train {
        /// Directory holding the feature CSVs; the model is saved there.
        #[arg(long, default_value = "features")]
        out: PathBuf,
        /// Featurization to train on.
        #[arg(long, value_delimiter = ',')]
        features: Vec<FeatureKind>,
        /// Task to train: regression or classification.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<Task>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the scenario grid from precomputed features and write
    /// results.csv and results.txt.
    Evaluate {
        /// Corpus manifest (CSV with columns path, depth_metres).
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding feature CSVs; results are written there too.
        #[arg(long, default_value = "features")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenarios to evaluate.
        #[arg(long, value_delimiter = ',', default_values_t = Scenario::ALL)]
        scenarios: Vec<Scenario>,
        /// Featurizations to evaluate.
        #[arg(long, value_delimiter = ',', default_values_t = FeatureKind::ALL)]
        features: Vec<FeatureKind>,
        /// Tasks to evaluate.
        #[arg(long, value_delimiter = ',', default_values_t = Task::ALL)]
        tasks: Vec<Task>,
        /// Trials per grid cell.
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Re-render results.txt from an existing results.csv.
    Report {
        /// Directory holding results.csv.
        #[arg(long, default_value = "features")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            images_per_depth,
            size,
        } => cmd_synth(&out, seed, images_per_depth, size),
        Command::Featurize {
            manifest,
            out,
            features,
        } => cmd_featurize(&manifest, &out, &features),
        Command::Train {
            out,
            features,
            tasks,
            seed,
        } => cmd_train(&out, &features, &tasks, seed),
        Command::Evaluate {
            manifest,
            out,
            seed,
            scenarios,
            features,
            tasks,
            trials,
        } => cmd_evaluate(&manifest, &out, seed, scenarios, features, tasks, trials),
        Command::Report { out } => cmd_report(&out),
    }
}

fn feature_csv_path(dir: &Path, kind: FeatureKind) -> PathBuf {
    dir.join(format!("features_{}.csv", kind.label().replace('-', "_")))
}

fn cmd_synth(out: &Path, seed: u64, images_per_depth: usize, size: usize) -> Result<()> {
    let corpus = synthetic_corpus(seed, images_per_depth, size, size)?;
    for labeled in &corpus {
        let path = out.join(&labeled.id);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        labeled.image.save_pgm(&path)?;
    }
    let entries: Vec<(String, u32)> = corpus
        .iter()
        .map(|l| (l.id.clone(), l.depth_m))
        .collect();
    let manifest = out.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    eprintln!(
        "wrote {} images and {}",
        corpus.len(),
        manifest.display()
    );
    Ok(())
}

fn cmd_featurize(manifest: &Path, out: &Path, features: &[FeatureKind]) -> Result<()> {
    if features.is_empty() {
        bail!("no featurizations selected");
    }
    let corpus = load_corpus(manifest)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    eprintln!(
        "featurizing {} images ({} kinds)",
        corpus.len(),
        features.len()
    );

    // One result per image, in manifest order regardless of which worker
    // finishes first; failures are collected rather than aborting the pass.
    let per_image: Vec<std::result::Result<Vec<FeatureRow>, String>> = corpus
        .par_iter()
        .map(|labeled| {
            let mut rows = Vec::with_capacity(features.len());
            for &kind in features {
                let result = if kind.is_sublevel() {
                    Ok(featurize_sublevel(&labeled.image, kind.curve_kind()))
                } else {
                    featurize_dt(&labeled.image, kind.curve_kind())
                };
                match result {
                    Ok(vector) => rows.push(FeatureRow {
                        id: labeled.id.clone(),
                        depth_m: labeled.depth_m,
                        kind,
                        values: vector.values,
                    }),
                    Err(e) => return Err(format!("{}: {e}", labeled.id)),
                }
            }
            Ok(rows)
        })
        .collect();

    let mut rows_by_kind: HashMap<FeatureKind, Vec<FeatureRow>> = HashMap::new();
    let mut failures = 0usize;
    for result in per_image {
        match result {
            Ok(rows) => {
                for row in rows {
                    rows_by_kind.entry(row.kind).or_default().push(row);
                }
            }
            Err(message) => {
                failures += 1;
                eprintln!("featurize failed: {message}");
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} images failed to featurize", corpus.len());
    }

    let mut all_rows = Vec::new();
    for &kind in features {
        let rows = rows_by_kind.remove(&kind).unwrap_or_default();
        let path = feature_csv_path(out, kind);
        write_feature_csv(&path, &rows)?;
        eprintln!("wrote {} ({} rows)", path.display(), rows.len());
        all_rows.extend(rows);
    }
    let curves_path = out.join("mean_curves.csv");
    write_mean_curves_csv(&curves_path, &all_rows)?;
    eprintln!("wrote {}", curves_path.display());
    Ok(())
}

fn load_feature_rows(dir: &Path, kind: FeatureKind) -> Result<Vec<FeatureRow>> {
    let path = feature_csv_path(dir, kind);
    if !path.exists() {
        bail!(
            "{} does not exist; run `firn-topo featurize --manifest <manifest> --out {}` first",
            path.display(),
            dir.display()
        );
    }
    let rows = read_feature_csv(&path)?;
    if let Some(row) = rows.iter().find(|r| r.kind != kind) {
        bail!(
            "{} contains a {} row, expected only {}",
            path.display(),
            row.kind.label(),
            kind.label()
        );
    }
    Ok(rows)
}

fn cmd_train(out: &Path, features: &[FeatureKind], tasks: &[Task], seed: u64) -> Result<()> {
    if features.len() != 1 || tasks.len() != 1 {
        bail!("train expects exactly one --features kind and one --tasks value");
    }
    let (kind, task) = (features[0], tasks[0]);
    let rows = load_feature_rows(out, kind)?;
    let data = Dataset::new(
        rows.iter().map(|r| r.values.clone()).collect(),
        rows.iter().map(|r| r.depth_m as f64).collect(),
    )?;
    let cfg = ForestConfig {
        task,
        max_features: match task {
            Task::Regression => MaxFeatures::All,
            Task::Classification => MaxFeatures::Sqrt,
        },
        seed,
        ..ForestConfig::regression(seed)
    };
    let model = forest::fit(&data, &cfg)?;
    let path = out.join(format!(
        "model_{}_{}.json",
        kind.label().replace('-', "_"),
        task.label()
    ));
    model.save(&path)?;
    eprintln!(
        "trained {} {} forest on {} rows; saved {}",
        kind.label(),
        task.label(),
        data.n_samples(),
        path.display()
    );
    Ok(())
}

fn cmd_evaluate(
    manifest: &Path,
    out: &Path,
    seed: u64,
    scenarios: Vec<Scenario>,
    features: Vec<FeatureKind>,
    tasks: Vec<Task>,
    trials: usize,
) -> Result<()> {
    let corpus = load_corpus(manifest)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    // Whole-image features come from the featurize step's CSVs; the
    // scenario manipulations (blur, quadrants) are featurized here.
    let mut cache = FeatureCache::new();
    let index_of: HashMap<&str, usize> = corpus
        .iter()
        .enumerate()
        .map(|(i, l)| (l.id.as_str(), i))
        .collect();
    for &kind in &features {
        let rows = load_feature_rows(out, kind)?;
        let mut seen = 0usize;
        for row in rows {
            if let Some(&image_idx) = index_of.get(row.id.as_str()) {
                cache.insert(image_idx, Manipulation::Identity, kind, row.values);
                seen += 1;
            }
        }
        if seen < corpus.len() {
            bail!(
                "{} covers {seen} of {} manifest images; rerun `firn-topo featurize`",
                feature_csv_path(out, kind).display(),
                corpus.len()
            );
        }
    }
    let extra_manipulations: std::collections::BTreeSet<Manipulation> =
        needed_manipulations(&scenarios)
            .into_iter()
            .filter(|&m| m != Manipulation::Identity)
            .collect();
    if !extra_manipulations.is_empty() {
        eprintln!(
            "featurizing {} manipulation(s) of {} images",
            extra_manipulations.len(),
            corpus.len()
        );
        let computed = FeatureCache::populate(&corpus, &extra_manipulations, &features)?;
        cache.merge(computed);
    }

    let cfg = GridConfig {
        base_seed: seed,
        trials,
        scenarios,
        features,
        tasks,
        ..GridConfig::new(seed)
    };
    eprintln!(
        "running grid: {} scenarios x {} features x {} tasks, {} trials",
        cfg.scenarios.len(),
        cfg.features.len(),
        cfg.tasks.len(),
        cfg.trials
    );
    let results = run_grid_with_cache(&corpus, &cfg, &cache)?;

    let csv_path = out.join("results.csv");
    std::fs::write(&csv_path, render_results_csv(&results)?)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    let table = render_results_table(&results);
    let table_path = out.join("results.txt");
    std::fs::write(&table_path, &table)
        .with_context(|| format!("writing {}", table_path.display()))?;
    eprintln!("wrote {} and {}", csv_path.display(), table_path.display());
    print!("{table}");
    Ok(())
}

fn cmd_report(out: &Path) -> Result<()> {
    let csv_path = out.join("results.csv");
    if !csv_path.exists() {
        bail!(
            "{} does not exist; run `firn-topo evaluate` first",
            csv_path.display()
        );
    }
    let results = read_results_csv(&csv_path)?;
    let table = render_results_table(&results);
    let table_path = out.join("results.txt");
    std::fs::write(&table_path, &table)
        .with_context(|| format!("writing {}", table_path.display()))?;
    print!("{table}");
    Ok(())
}
