//! Vectorization of persistence diagrams: Betti curves and Gaussian
//! persistence curves sampled on integer threshold grids, and the two
//! image featurizations built from them.
//!
//! The sublevel featurization runs persistence directly on raw intensities
//! and samples thresholds 0..=255 (512 entries over dimensions 0 and 1).
//! The distance-transform featurization binarizes the image, computes exact
//! Euclidean distances to ice, caps them at 100, and samples thresholds
//! 1..=100 (200 entries). Essential classes get a finite substitute death
//! one past the top of the grid before weighting, so they stay visible to
//! both curve kinds.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::binarize::{binarize, distance_transform, BinaryImage};
use crate::cubical::{build_complex, persistence, PersistenceDiagram, ScalarGrid};
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Threshold grid and smoothing parameters for curve evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    /// First threshold on the grid.
    pub t_min: i32,
    /// Last threshold on the grid (inclusive).
    pub t_max: i32,
    /// Standard deviation of the isotropic Gaussian placed on each diagram
    /// point (the curve uses covariance `sigma^2 I`).
    pub sigma: f64,
    /// Finite death substituted for essential classes before weighting.
    pub essential_death: f64,
}

impl CurveConfig {
    pub fn new(t_min: i32, t_max: i32, sigma: f64, essential_death: f64) -> Result<Self> {
        if t_min > t_max {
            return Err(Error::Config(format!(
                "threshold grid {t_min}..={t_max} is empty"
            )));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::Config(format!("sigma {sigma} must be positive")));
        }
        if !essential_death.is_finite() || essential_death <= f64::from(t_max) {
            return Err(Error::Config(format!(
                "essential death {essential_death} must be finite and beyond the grid end {t_max}"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            sigma,
            essential_death,
        })
    }

    /// Grid for sublevel-set curves on 8-bit intensities: thresholds
    /// 0..=255, sigma 10, essential death 256.
    pub fn sublevel() -> Self {
        Self {
            t_min: 0,
            t_max: 255,
            sigma: 10.0,
            essential_death: 256.0,
        }
    }

    /// Grid for distance-transform curves on capped distances: thresholds
    /// 1..=100, sigma 5, essential death 101.
    pub fn distance_transform() -> Self {
        Self {
            t_min: 1,
            t_max: 100,
            sigma: 5.0,
            essential_death: 101.0,
        }
    }

    /// Number of grid points.
    pub fn grid_len(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn thresholds(&self) -> impl Iterator<Item = i32> {
        self.t_min..=self.t_max
    }
}

/// The two curve styles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Betti,
    Gaussian,
}

/// The four featurizations: {sublevel-set, distance-transform} x
/// {Betti, Gaussian}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    SsBetti,
    SsGaussian,
    DtBetti,
    DtGaussian,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::SsBetti,
        FeatureKind::SsGaussian,
        FeatureKind::DtBetti,
        FeatureKind::DtGaussian,
    ];

    /// Stable lowercase name used on the command line and in CSV files.
    pub fn label(self) -> &'static str {
        match self {
            FeatureKind::SsBetti => "ss-betti",
            FeatureKind::SsGaussian => "ss-gaussian",
            FeatureKind::DtBetti => "dt-betti",
            FeatureKind::DtGaussian => "dt-gaussian",
        }
    }

    /// Header used in rendered results tables.
    pub fn display_name(self) -> &'static str {
        match self {
            FeatureKind::SsBetti => "SS-Betti",
            FeatureKind::SsGaussian => "SS-Gaussian",
            FeatureKind::DtBetti => "DT-Betti",
            FeatureKind::DtGaussian => "DT-Gaussian",
        }
    }

    pub fn curve_kind(self) -> CurveKind {
        match self {
            FeatureKind::SsBetti | FeatureKind::DtBetti => CurveKind::Betti,
            _ => CurveKind::Gaussian,
        }
    }

    /// Whether the featurization filters raw intensities (otherwise capped
    /// distances).
    pub fn is_sublevel(self) -> bool {
        matches!(self, FeatureKind::SsBetti | FeatureKind::SsGaussian)
    }

    pub fn config(self) -> CurveConfig {
        if self.is_sublevel() {
            CurveConfig::sublevel()
        } else {
            CurveConfig::distance_transform()
        }
    }

    /// Length of the concatenated feature vector.
    pub fn vector_len(self) -> usize {
        2 * self.config().grid_len()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown featurization {s:?}; expected one of ss-betti, ss-gaussian, dt-betti, dt-gaussian"
                ))
            })
    }
}

/// A feature vector and the featurization that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Diagram pairs with essential deaths replaced by the finite substitute.
fn substituted_pairs(dgm: &PersistenceDiagram, essential_death: f64) -> Vec<(f64, f64)> {
    dgm.pairs()
        .iter()
        .map(|&(b, d)| (b, if d.is_infinite() { essential_death } else { d }))
        .collect()
}

/// Normalized persistence weights: each pair's lifetime (after essential
/// substitution) divided by the total lifetime. Empty for an empty diagram;
/// otherwise the weights sum to 1.
pub fn persistence_weights(dgm: &PersistenceDiagram, essential_death: f64) -> Vec<f64> {
    let pairs = substituted_pairs(dgm, essential_death);
    let total: f64 = pairs.iter().map(|&(b, d)| d - b).sum();
    if total == 0.0 {
        return vec![0.0; pairs.len()];
    }
    pairs.iter().map(|&(b, d)| (d - b) / total).collect()
}

/// Betti curve: for each grid threshold `t`, the number of pairs with
/// `birth <= t < death`. By the correspondence between diagrams and sublevel
/// sets this equals the Betti number of the sublevel set at `t`.
pub fn betti_curve(dgm: &PersistenceDiagram, cfg: &CurveConfig) -> Vec<f64> {
    let pairs = substituted_pairs(dgm, cfg.essential_death);
    cfg.thresholds()
        .map(|t| {
            let t = f64::from(t);
            pairs.iter().filter(|&&(b, d)| b <= t && t < d).count() as f64
        })
        .collect()
}

/// Gaussian persistence curve: for each grid threshold `t`, the mass inside
/// the region `{(x, y) : x <= t < y}` of a weighted sum of isotropic
/// Gaussians centered on the diagram pairs,
///
/// ```text
/// gamma(t) = sum_i kappa_i * Phi((t - b_i) / sigma) * (1 - Phi((t - d_i) / sigma))
/// ```
///
/// where `kappa_i` is the pair's share of total persistence. The product of
/// the two marginal CDFs is the exact integral of the Gaussian over the
/// region, so no quadrature is involved.
pub fn gaussian_curve(dgm: &PersistenceDiagram, cfg: &CurveConfig) -> Vec<f64> {
    let pairs = substituted_pairs(dgm, cfg.essential_death);
    let weights = persistence_weights(dgm, cfg.essential_death);
    cfg.thresholds()
        .map(|t| {
            let t = f64::from(t);
            pairs
                .iter()
                .zip(&weights)
                .map(|(&(b, d), &k)| {
                    k * std_normal_cdf((t - b) / cfg.sigma)
                        * (1.0 - std_normal_cdf((t - d) / cfg.sigma))
                })
                .sum()
        })
        .collect()
}

/// Sublevel-set persistence diagrams of raw intensities.
pub fn sublevel_diagrams(img: &GrayImage) -> (PersistenceDiagram, PersistenceDiagram) {
    persistence(&build_complex(&ScalarGrid::from_gray(img)))
}

/// Distance-transform persistence diagrams: binarize, exact distance
/// transform, filtration of capped distances.
pub fn dt_diagrams(img: &GrayImage) -> Result<(PersistenceDiagram, PersistenceDiagram)> {
    dt_diagrams_of_mask(&binarize(img)?)
}

/// Distance-transform diagrams of an existing ice/pore mask.
pub fn dt_diagrams_of_mask(
    mask: &BinaryImage,
) -> Result<(PersistenceDiagram, PersistenceDiagram)> {
    let dt = distance_transform(mask)?;
    Ok(persistence(&build_complex(&ScalarGrid::from_capped_distances(
        &dt,
    ))))
}

/// Concatenates the dimension-0 and dimension-1 curves of a diagram pair.
pub fn curve_features(
    d0: &PersistenceDiagram,
    d1: &PersistenceDiagram,
    cfg: &CurveConfig,
    kind: CurveKind,
) -> Vec<f64> {
    let eval = match kind {
        CurveKind::Betti => betti_curve,
        CurveKind::Gaussian => gaussian_curve,
    };
    let mut values = eval(d0, cfg);
    values.extend(eval(d1, cfg));
    values
}

/// Sublevel-set featurization of an image (512 entries).
pub fn featurize_sublevel(img: &GrayImage, kind: CurveKind) -> FeatureVector {
    let (d0, d1) = sublevel_diagrams(img);
    let cfg = CurveConfig::sublevel();
    FeatureVector {
        kind: match kind {
            CurveKind::Betti => FeatureKind::SsBetti,
            CurveKind::Gaussian => FeatureKind::SsGaussian,
        },
        values: curve_features(&d0, &d1, &cfg, kind),
    }
}

/// Distance-transform featurization of an image (200 entries).
pub fn featurize_dt(img: &GrayImage, kind: CurveKind) -> Result<FeatureVector> {
    let (d0, d1) = dt_diagrams(img)?;
    Ok(dt_feature_from_diagrams(&d0, &d1, kind))
}

/// Distance-transform featurization of an existing mask, for callers that
/// already segmented the image.
pub fn featurize_dt_from_mask(mask: &BinaryImage, kind: CurveKind) -> Result<FeatureVector> {
    let (d0, d1) = dt_diagrams_of_mask(mask)?;
    Ok(dt_feature_from_diagrams(&d0, &d1, kind))
}

fn dt_feature_from_diagrams(
    d0: &PersistenceDiagram,
    d1: &PersistenceDiagram,
    kind: CurveKind,
) -> FeatureVector {
    let cfg = CurveConfig::distance_transform();
    FeatureVector {
        kind: match kind {
            CurveKind::Betti => FeatureKind::DtBetti,
            CurveKind::Gaussian => FeatureKind::DtGaussian,
        },
        values: curve_features(d0, d1, &cfg, kind),
    }
}

/// One labeled feature vector, as stored in feature CSV files.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    /// Image identifier (the manifest path for on-disk corpora).
    pub id: String,
    /// Ground-truth depth in metres.
    pub depth_m: u32,
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

/// Writes feature rows as CSV: columns `id`, `depth_m`, `kind`, then one
/// column per vector entry. Floats use the shortest round-trip form, so
/// reading the file back reproduces them bit for bit.
pub fn write_feature_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => Error::MalformedData {
                path: path.to_path_buf(),
                reason: format!("{other:?}"),
            },
        })?;
    let width = rows.first().map_or(0, |r| r.values.len());
    let mut header = vec!["id".to_string(), "depth_m".to_string(), "kind".to_string()];
    header.extend((0..width).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        let mut record = vec![
            row.id.clone(),
            row.depth_m.to_string(),
            row.kind.label().to_string(),
        ];
        record.extend(row.values.iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::MalformedData {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

/// Reads a feature CSV written by [`write_feature_csv`], checking that every
/// row has the vector length its kind demands.
pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let malformed = |reason: String| Error::MalformedData {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() < 4 {
            return Err(malformed(format!("row {line} has {} fields", record.len())));
        }
        let id = record[0].to_string();
        let depth_m: u32 = record[1]
            .parse()
            .map_err(|_| malformed(format!("row {line}: bad depth {:?}", &record[1])))?;
        let kind: FeatureKind = record[2]
            .parse()
            .map_err(|_| malformed(format!("row {line}: bad kind {:?}", &record[2])))?;
        let values: Vec<f64> = record
            .iter()
            .skip(3)
            .map(|s| {
                s.parse()
                    .map_err(|_| malformed(format!("row {line}: bad value {s:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != kind.vector_len() {
            return Err(Error::FeatureDimMismatch {
                expected: kind.vector_len(),
                got: values.len(),
            });
        }
        rows.push(FeatureRow {
            id,
            depth_m,
            kind,
            values,
        });
    }
    Ok(rows)
}

/// Per-(kind, depth) mean feature vectors, sorted by kind then depth. Useful
/// for plotting how the average curve shifts with depth.
pub fn mean_curves_by_depth(rows: &[FeatureRow]) -> Vec<(FeatureKind, u32, Vec<f64>)> {
    let mut groups: std::collections::BTreeMap<(FeatureKind, u32), (Vec<f64>, usize)> =
        std::collections::BTreeMap::new();
    for row in rows {
        let entry = groups
            .entry((row.kind, row.depth_m))
            .or_insert_with(|| (vec![0.0; row.values.len()], 0));
        for (acc, v) in entry.0.iter_mut().zip(&row.values) {
            *acc += v;
        }
        entry.1 += 1;
    }
    groups
        .into_iter()
        .map(|((kind, depth), (mut sums, count))| {
            for v in &mut sums {
                *v /= count as f64;
            }
            (kind, depth, sums)
        })
        .collect()
}

/// Writes per-depth mean curves in long form for external plotting:
/// columns `kind`, `depth_metres`, `component`, `mean_value`. Long form
/// keeps mixed vector lengths (512 sublevel, 200 distance-transform) in one
/// rectangular file.
pub fn write_mean_curves_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record(["kind", "depth_metres", "component", "mean_value"])
        .map_err(|e| csv_err(path, e))?;
    for (kind, depth, means) in mean_curves_by_depth(rows) {
        for (component, value) in means.iter().enumerate() {
            writer
                .write_record([
                    kind.label(),
                    &depth.to_string(),
                    &component.to_string(),
                    &value.to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
