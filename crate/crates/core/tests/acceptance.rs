//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Tolerances are pinned as constants next to the
//! checks that use them.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use firn_topo::binarize::{distance_transform, otsu_threshold, BinaryImage};
use firn_topo::cubical::{betti_at, build_complex, persistence, PersistenceDiagram, ScalarGrid};
use firn_topo::curves::{
    betti_curve, gaussian_curve, persistence_weights, featurize_dt, featurize_sublevel,
    CurveConfig, CurveKind, FeatureKind,
};
use firn_topo::experiments::{
    needed_manipulations, run_grid, run_grid_with_cache, ExperimentResult, FeatureCache,
    GridConfig, Scenario, synthetic_corpus,
};
use firn_topo::forest::{self, accuracy_percent, Dataset, ForestConfig, Task};
use firn_topo::image::{dihedral_orbit, GrayImage};
use firn_topo::synth::{SynthParams, DEPTHS_M};

const BASE_SEED: u64 = 20260814;

#[test]
fn criterion_01_betti_curves_equal_direct_betti_numbers() {
    const IMAGES: usize = 50;
    const BUDGET_SECS: f64 = 10.0;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
    let cfg = CurveConfig::new(0, 7, 1.0, 8.0).unwrap();
    for _ in 0..IMAGES {
        let values: Vec<f64> = (0..16 * 16).map(|_| rng.gen_range(0..=7) as f64).collect();
        let cx = build_complex(&ScalarGrid::new(16, 16, values).unwrap());
        let (d0, d1) = persistence(&cx);
        let curve0 = betti_curve(&d0, &cfg);
        let curve1 = betti_curve(&d1, &cfg);
        for t in 0..=7 {
            let (b0, b1) = betti_at(&cx, t as f64);
            assert_eq!(curve0[t], b0 as f64, "dim 0 mismatch at t = {t}");
            assert_eq!(curve1[t], b1 as f64, "dim 1 mismatch at t = {t}");
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < BUDGET_SECS, "took {elapsed:.1} s");
    println!(
        "ACCEPTANCE 1 PASS: Betti curves equal direct Betti numbers on {IMAGES} random \
         16x16 images at every threshold ({elapsed:.2} s)"
    );
}

#[test]
fn criterion_02_handcrafted_diagrams_are_exact() {
    let single = build_complex(&ScalarGrid::new(1, 1, vec![42.0]).unwrap());
    let (d0, d1) = persistence(&single);
    assert_eq!(d0.pairs(), &[(42.0, f64::INFINITY)]);
    assert!(d1.is_empty());

    let ring_values: Vec<f64> = (0..9).map(|i| if i == 4 { 5.0 } else { 0.0 }).collect();
    let ring = build_complex(&ScalarGrid::new(3, 3, ring_values).unwrap());
    let (r0, r1) = persistence(&ring);
    assert_eq!(r0.pairs(), &[(0.0, f64::INFINITY)]);
    assert_eq!(r1.pairs(), &[(0.0, 5.0)]);

    println!(
        "ACCEPTANCE 2 PASS: 1x1 image gives dim0 {{(42, inf)}}; 3x3 ring gives dim1 {{(0, 5)}}"
    );
}

fn brute_force_squared_distances(mask: &BinaryImage) -> Vec<u64> {
    let (w, h) = (mask.width(), mask.height());
    let ice: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| !mask.is_pore(x, y))
        .collect();
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            if mask.is_pore(x, y) {
                ice.iter()
                    .map(|&(ix, iy)| {
                        let dx = ix.abs_diff(x) as u64;
                        let dy = iy.abs_diff(y) as u64;
                        dx * dx + dy * dy
                    })
                    .min()
                    .unwrap()
            } else {
                0
            }
        })
        .collect()
}

#[test]
fn criterion_03_distance_transform_matches_brute_force() {
    const MASKS: usize = 100;
    const BUDGET_SECS: f64 = 10.0;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 1);
    for round in 0..MASKS {
        let mut pore: Vec<bool> = (0..40 * 40).map(|_| rng.gen_bool(0.5)).collect();
        let forced_ice = rng.gen_range(0..pore.len());
        pore[forced_ice] = false;
        let mask = BinaryImage::new(40, 40, pore).unwrap();
        let dt = distance_transform(&mask).unwrap();
        assert_eq!(
            dt.squared(),
            brute_force_squared_distances(&mask).as_slice(),
            "mask {round}"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < BUDGET_SECS, "took {elapsed:.1} s");
    println!(
        "ACCEPTANCE 3 PASS: exact distance transform equals brute force on {MASKS} random \
         40x40 masks ({elapsed:.2} s)"
    );
}

/// Between-class variance of thresholding at t, written independently of
/// the library's incremental scan: class statistics are recomputed from the
/// histogram for every t.
fn exhaustive_otsu(img: &GrayImage) -> Option<u8> {
    let mut histogram = [0u64; 256];
    for &p in img.pixels() {
        histogram[p as usize] += 1;
    }
    let mut best: Option<(f64, u8)> = None;
    for t in 0..=255usize {
        let w0: u64 = histogram[..=t].iter().sum();
        let w1: u64 = histogram[t + 1..].iter().sum();
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let sum0: u64 = histogram[..=t]
            .iter()
            .enumerate()
            .map(|(v, &c)| v as u64 * c)
            .sum();
        let sum1: u64 = histogram[t + 1..]
            .iter()
            .enumerate()
            .map(|(v, &c)| (t + 1 + v) as u64 * c)
            .sum();
        let diff = sum0 as f64 / w0 as f64 - sum1 as f64 / w1 as f64;
        let variance = w0 as f64 * w1 as f64 * diff * diff;
        if best.is_none_or(|(v, _)| variance > v) {
            best = Some((variance, t as u8));
        }
    }
    best.map(|(_, t)| t)
}

#[test]
fn criterion_04_otsu_equals_exhaustive_scan() {
    const IMAGES: usize = 100;

    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 2);
    for round in 0..IMAGES {
        let mut img = GrayImage::from_fn(32, 32, |_, _| rng.gen());
        // Guarantee at least two distinct values so neither side rejects.
        img = GrayImage::new(
            32,
            32,
            {
                let mut data = img.pixels().to_vec();
                data[0] = 0;
                data[1] = 255;
                data
            },
        )
        .unwrap();
        assert_eq!(
            otsu_threshold(&img).unwrap(),
            exhaustive_otsu(&img).unwrap(),
            "image {round}"
        );
    }
    println!(
        "ACCEPTANCE 4 PASS: Otsu threshold equals the exhaustive 256-threshold scan on \
         {IMAGES} random images"
    );
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson rule over [lo, hi] with an even interval count.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    assert!(intervals >= 2 && intervals.is_multiple_of(2));
    let h = (hi - lo) / intervals as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..intervals {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// 2D tensor-product Simpson quadrature of the kappa-weighted Gaussian
/// density over the fundamental box {(x, y) : x <= t < y}, truncated eight
/// standard deviations past each center. The integrand is a sum of
/// separable terms, so the tensor-product sum over the (x, y) node grid
/// factors exactly into a product of one-dimensional Simpson sums per
/// diagram point; that factorization is what is computed here.
fn quadrature_gaussian_curve(
    pairs: &[(f64, f64)],
    kappas: &[f64],
    t: f64,
    sigma: f64,
) -> f64 {
    const INTERVALS: usize = 4096;
    let mut total = 0.0;
    for (&(b, d), &kappa) in pairs.iter().zip(kappas) {
        let x_lo = b - 8.0 * sigma;
        let x_hi = t;
        let x_mass = if x_hi <= x_lo {
            0.0
        } else {
            simpson(|x| normal_pdf(x, b, sigma), x_lo, x_hi, INTERVALS)
        };
        let y_lo = t;
        let y_hi = d + 8.0 * sigma;
        let y_mass = if y_hi <= y_lo {
            0.0
        } else {
            simpson(|y| normal_pdf(y, d, sigma), y_lo, y_hi, INTERVALS)
        };
        total += kappa * x_mass * y_mass;
    }
    total
}

#[test]
fn criterion_05_gaussian_curve_matches_quadrature() {
    const CASES: usize = 20;
    const QUADRATURE_TOL: f64 = 1e-6;
    const WEIGHT_SUM_TOL: f64 = 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 3);
    for case in 0..CASES {
        let n_pairs = rng.gen_range(1..=6);
        let pairs: Vec<(f64, f64)> = (0..n_pairs)
            .map(|_| {
                let b = rng.gen_range(0.0..25.0);
                let d = b + rng.gen_range(0.5..10.0);
                (b, d)
            })
            .collect();
        let sigma = rng.gen_range(2.0..10.0);
        let t_index = rng.gen_range(0..=30usize);

        let cfg = CurveConfig::new(0, 30, sigma, 1e6).unwrap();
        let dgm = PersistenceDiagram::new(1, pairs.clone());
        let kappas = persistence_weights(&dgm, 1e6);
        let weight_sum: f64 = kappas.iter().sum();
        assert!(
            (weight_sum - 1.0).abs() <= WEIGHT_SUM_TOL,
            "case {case}: weights sum to {weight_sum}"
        );

        let closed_form = gaussian_curve(&dgm, &cfg)[t_index];
        let numeric =
            quadrature_gaussian_curve(dgm.pairs(), &kappas, t_index as f64, sigma);
        assert!(
            (closed_form - numeric).abs() <= QUADRATURE_TOL,
            "case {case}: closed form {closed_form} vs quadrature {numeric}"
        );
    }
    println!(
        "ACCEPTANCE 5 PASS: Gaussian curve closed form matches 2D quadrature within \
         {QUADRATURE_TOL:e} on {CASES} cases; weights sum to 1 within {WEIGHT_SUM_TOL:e}"
    );
}

#[test]
fn criterion_06_featurizations_are_invariant_under_rigid_motions() {
    const IMAGES: usize = 10;

    for i in 0..IMAGES {
        let depth = DEPTHS_M[i % DEPTHS_M.len()];
        let params = SynthParams::for_depth(depth, BASE_SEED + 40 + i as u64).unwrap();
        let img = firn_topo::synth::synth_firn(&params, 32, 32).unwrap();
        let orbit = dihedral_orbit(&img);
        assert_eq!(orbit.len(), 8);

        for kind in [CurveKind::Betti, CurveKind::Gaussian] {
            let ss_base = featurize_sublevel(&orbit[0], kind).values;
            let dt_base = featurize_dt(&orbit[0], kind).unwrap().values;
            for transformed in &orbit[1..] {
                assert_eq!(
                    featurize_sublevel(transformed, kind).values,
                    ss_base,
                    "sublevel {kind:?} differs on image {i}"
                );
                assert_eq!(
                    featurize_dt(transformed, kind).unwrap().values,
                    dt_base,
                    "distance-transform {kind:?} differs on image {i}"
                );
            }
        }
    }
    println!(
        "ACCEPTANCE 6 PASS: all four featurizations are bit-identical across the 8 \
         dihedral transforms of {IMAGES} synthetic images"
    );
}

#[test]
fn criterion_07_feature_vector_shapes() {
    let params = SynthParams::for_depth(38, BASE_SEED + 60).unwrap();
    let img = firn_topo::synth::synth_firn(&params, 48, 48).unwrap();
    for kind in FeatureKind::ALL {
        let expected = match kind {
            FeatureKind::SsBetti | FeatureKind::SsGaussian => 512,
            FeatureKind::DtBetti | FeatureKind::DtGaussian => 200,
        };
        assert_eq!(kind.vector_len(), expected);
        let values = if kind.is_sublevel() {
            featurize_sublevel(&img, kind.curve_kind()).values
        } else {
            featurize_dt(&img, kind.curve_kind()).unwrap().values
        };
        assert_eq!(values.len(), expected, "{}", kind.label());
    }
    println!("ACCEPTANCE 7 PASS: sublevel vectors have 512 entries, distance-transform 200");
}

#[test]
fn criterion_08_forest_fits_xor_out_of_bag_and_is_deterministic() {
    const MIN_OOB_ACCURACY: f64 = 95.0;

    let patterns = [
        ([0.0, 0.0], 0.0),
        ([0.0, 1.0], 1.0),
        ([1.0, 0.0], 1.0),
        ([1.0, 1.0], 0.0),
    ];
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..50 {
        for (row, label) in patterns {
            features.push(row.to_vec());
            labels.push(label);
        }
    }
    let data = Dataset::new(features, labels.clone()).unwrap();
    let cfg = ForestConfig::classification(BASE_SEED + 4);
    assert_eq!(cfg.n_trees, 100);

    let model = forest::fit(&data, &cfg).unwrap();
    let oob = model.oob_predictions(&data).unwrap();
    let (predicted, actual): (Vec<f64>, Vec<f64>) = oob
        .iter()
        .zip(&labels)
        .filter_map(|(p, &y)| p.map(|p| (p, y)))
        .unzip();
    assert!(!predicted.is_empty());
    let oob_accuracy = accuracy_percent(&predicted, &actual).unwrap();
    assert!(
        oob_accuracy > MIN_OOB_ACCURACY,
        "out-of-bag accuracy {oob_accuracy:.2}%"
    );

    let again = forest::fit(&data, &cfg).unwrap();
    assert_eq!(
        model.predict_batch(&data).unwrap(),
        again.predict_batch(&data).unwrap(),
        "same seed must give bit-identical predictions"
    );
    println!(
        "ACCEPTANCE 8 PASS: XOR out-of-bag accuracy {oob_accuracy:.2}% with 100 trees; \
         refit with the same seed predicts identically"
    );
}

fn find_cell(
    results: &[ExperimentResult],
    scenario: Scenario,
    feature: FeatureKind,
    task: Task,
) -> &ExperimentResult {
    results
        .iter()
        .find(|r| r.scenario == scenario && r.feature == feature && r.task == task)
        .unwrap_or_else(|| panic!("no result for {scenario} / {} / {}", feature.label(), task.label()))
}

#[test]
fn criterion_09_directional_trends_on_the_synthetic_corpus() {
    const BUDGET_SECS: f64 = 15.0 * 60.0;
    const MIN_WHOLE_SS_ACCURACY: f64 = 90.0;
    const MIN_BLUR_DROP_SS: f64 = 15.0;
    const MAX_BLUR_SHIFT_DT: f64 = 10.0;

    let start = Instant::now();
    let corpus = synthetic_corpus(BASE_SEED, 20, 128, 128).unwrap();
    assert_eq!(corpus.len(), 200);

    let features = vec![FeatureKind::SsBetti, FeatureKind::DtBetti];
    let scenarios = [Scenario::Whole, Scenario::Blurred, Scenario::MissingDepths];
    let cache =
        FeatureCache::populate(&corpus, &needed_manipulations(&scenarios), &features).unwrap();

    let classification_cfg = GridConfig {
        scenarios: vec![Scenario::Whole, Scenario::Blurred],
        features: features.clone(),
        tasks: vec![Task::Classification],
        ..GridConfig::new(BASE_SEED)
    };
    let regression_cfg = GridConfig {
        scenarios: vec![Scenario::MissingDepths],
        features,
        tasks: vec![Task::Regression],
        ..GridConfig::new(BASE_SEED)
    };
    let mut results = run_grid_with_cache(&corpus, &classification_cfg, &cache).unwrap();
    results.extend(run_grid_with_cache(&corpus, &regression_cfg, &cache).unwrap());
    assert!(results.iter().all(|r| r.n_trials() == 10));

    let whole_ss = find_cell(&results, Scenario::Whole, FeatureKind::SsBetti, Task::Classification);
    let whole_dt = find_cell(&results, Scenario::Whole, FeatureKind::DtBetti, Task::Classification);
    let blurred_ss =
        find_cell(&results, Scenario::Blurred, FeatureKind::SsBetti, Task::Classification);
    let blurred_dt =
        find_cell(&results, Scenario::Blurred, FeatureKind::DtBetti, Task::Classification);
    let missing_ss =
        find_cell(&results, Scenario::MissingDepths, FeatureKind::SsBetti, Task::Regression);
    let missing_dt =
        find_cell(&results, Scenario::MissingDepths, FeatureKind::DtBetti, Task::Regression);

    println!(
        "criterion 9 cells: whole SS {:.2}% / DT {:.2}%; blurred SS {:.2}% / DT {:.2}%; \
         missing-depths MAE SS {:.2} m / DT {:.2} m",
        whole_ss.mean, whole_dt.mean, blurred_ss.mean, blurred_dt.mean, missing_ss.mean,
        missing_dt.mean
    );

    assert!(
        whole_ss.mean >= MIN_WHOLE_SS_ACCURACY,
        "9a: whole-image SS-Betti accuracy {:.2}% is below {MIN_WHOLE_SS_ACCURACY}%",
        whole_ss.mean
    );
    assert!(
        whole_ss.mean - blurred_ss.mean >= MIN_BLUR_DROP_SS,
        "9b: blur only dropped SS-Betti accuracy {:.2}% -> {:.2}%",
        whole_ss.mean,
        blurred_ss.mean
    );
    assert!(
        (whole_dt.mean - blurred_dt.mean).abs() <= MAX_BLUR_SHIFT_DT,
        "9c: blur moved DT-Betti accuracy {:.2}% -> {:.2}%",
        whole_dt.mean,
        blurred_dt.mean
    );
    assert!(
        missing_dt.mean <= missing_ss.mean,
        "9d: held-out-depth MAE should favor DT-Betti, got DT {:.2} m vs SS {:.2} m",
        missing_dt.mean,
        missing_ss.mean
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < BUDGET_SECS, "took {elapsed:.0} s");
    println!(
        "ACCEPTANCE 9 PASS: whole SS {:.2}% (>= {MIN_WHOLE_SS_ACCURACY}); blur drop SS \
         {:.2} points (>= {MIN_BLUR_DROP_SS}); blur shift DT {:.2} points (<= \
         {MAX_BLUR_SHIFT_DT}); missing-depths MAE DT {:.2} <= SS {:.2} ({elapsed:.0} s)",
        whole_ss.mean,
        whole_ss.mean - blurred_ss.mean,
        (whole_dt.mean - blurred_dt.mean).abs(),
        missing_dt.mean,
        missing_ss.mean
    );
}

#[test]
fn criterion_10_full_grid_table_has_the_expected_shape() {
    let corpus = synthetic_corpus(BASE_SEED + 5, 4, 32, 32).unwrap();
    let cfg = GridConfig {
        trials: 2,
        n_trees: 10,
        ..GridConfig::new(BASE_SEED + 5)
    };
    let results = run_grid(&corpus, &cfg).unwrap();
    // 5 scenarios x 4 features x 2 tasks, minus the skipped
    // missing-depths classification cells.
    assert_eq!(results.len(), 36);

    let table = firn_topo::experiments::render_results_table(&results);
    let block_rows = |title: &str| -> Vec<String> {
        table
            .lines()
            .skip_while(|l| *l != title)
            .skip(3) // title, underline, header
            .take_while(|l| !l.is_empty())
            .map(String::from)
            .collect()
    };
    let regression = block_rows("Scalar depth prediction (mean absolute error, metres)");
    let classification = block_rows("Depth classification (accuracy, %)");
    assert_eq!(regression.len(), 5, "table:\n{table}");
    assert_eq!(classification.len(), 4, "table:\n{table}");
    assert!(regression.iter().any(|l| l.starts_with("Missing depths")));
    assert!(!classification.iter().any(|l| l.starts_with("Missing depths")));
    // Every cell of the 9 rendered rows is filled: one "±" per cell.
    assert_eq!(table.matches('±').count(), 36, "table:\n{table}");
    println!(
        "ACCEPTANCE 10 PASS: full-grid table renders 5 regression rows and 4 \
         classification rows"
    );
}
