//! Synthetic firn-core-like test images.
//!
//! Each image is a two-phase texture: a smoothed Gaussian random field is
//! thresholded at a pore-fraction quantile, dark pore pixels sit near
//! intensity 10, bright ice pixels near 140, and independent per-pixel
//! speckle is added on top. Shallow samples have large, frequent pores;
//! deep samples are dense with small pores. A linear parameter ramp over
//! depth reproduces that trend.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::seeding::derive_seed;

/// The fixed depth labels, in metres, that the generator and the experiment
/// harness know about.
pub const DEPTHS_M: [u32; 10] = [7, 15, 23, 31, 38, 46, 53, 61, 70, 78];

/// Mean intensity of pore pixels before speckle.
pub const PORE_LEVEL: u8 = 10;
/// Mean intensity of ice pixels before speckle.
pub const ICE_LEVEL: u8 = 140;
/// Default half-width of the uniform per-pixel speckle.
pub const SPECKLE_AMPLITUDE: u8 = 25;

const SHALLOW_PORE_FRACTION: f64 = 0.45;
const DEEP_PORE_FRACTION: f64 = 0.06;
const SHALLOW_CORRELATION: f64 = 6.0;
const DEEP_CORRELATION: f64 = 2.5;

/// Parameters for one synthetic image.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Depth label carried along as ground truth, in metres.
    pub depth_m: u32,
    /// Target fraction of pore pixels, strictly between 0 and 1.
    pub pore_fraction: f64,
    /// Standard deviation, in pixels, of the Gaussian that smooths the
    /// underlying random field. Larger values give coarser structure.
    pub correlation_length: f64,
    /// Half-width of the uniform speckle added to every pixel.
    pub speckle_amplitude: u8,
    /// Seed of the per-image random stream.
    pub seed: u64,
}

impl SynthParams {
    /// Parameters for one of the known depths: pore fraction ramps linearly
    /// from 0.45 at 7 m down to 0.06 at 78 m, and the correlation length
    /// from 6.0 down to 2.5 pixels.
    pub fn for_depth(depth_m: u32, seed: u64) -> Result<Self> {
        if !DEPTHS_M.contains(&depth_m) {
            return Err(Error::Config(format!(
                "unknown depth {depth_m} m; expected one of {DEPTHS_M:?}"
            )));
        }
        let t = f64::from(depth_m - DEPTHS_M[0])
            / f64::from(DEPTHS_M[DEPTHS_M.len() - 1] - DEPTHS_M[0]);
        Ok(Self {
            depth_m,
            pore_fraction: lerp(SHALLOW_PORE_FRACTION, DEEP_PORE_FRACTION, t),
            correlation_length: lerp(SHALLOW_CORRELATION, DEEP_CORRELATION, t),
            speckle_amplitude: SPECKLE_AMPLITUDE,
            seed,
        })
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a * (1.0 - t) + b * t
}

/// Seed of the random stream for image `image_index` at depth index
/// `depth_index` in a corpus built from `base_seed`. The command line
/// generator and the in-memory corpus builder share this derivation, so they
/// produce identical images.
pub fn corpus_image_seed(base_seed: u64, depth_index: usize, image_index: usize) -> u64 {
    derive_seed(base_seed, ((depth_index as u64) << 32) | image_index as u64)
}

/// Generates one synthetic image.
///
/// The construction: fill the grid with unit white noise, smooth it with a
/// wrap-around separable Gaussian of standard deviation
/// `correlation_length`, mark the `round(pore_fraction * n)` smallest field
/// values as pore, then emit `PORE_LEVEL` or `ICE_LEVEL` plus uniform
/// speckle in `[-amplitude, amplitude]`, clamped to `[0, 255]`.
///
/// Noise is drawn row-major, then speckle row-major, from a ChaCha8 stream
/// seeded with `params.seed`, so output depends only on the parameters.
pub fn synth_firn(params: &SynthParams, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    if !(params.pore_fraction > 0.0 && params.pore_fraction < 1.0) {
        return Err(Error::Config(format!(
            "pore fraction {} is outside (0, 1)",
            params.pore_fraction
        )));
    }
    if !params.correlation_length.is_finite() || params.correlation_length <= 0.0 {
        return Err(Error::Config(format!(
            "correlation length {} must be positive",
            params.correlation_length
        )));
    }

    let n = width * height;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let field = smooth_wraparound(&noise, width, height, params.correlation_length);

    // Quantile threshold: exactly k pixels fall strictly below the k-th
    // order statistic (field values are effectively never tied).
    let k = (params.pore_fraction * n as f64).round() as usize;
    let mut sorted = field.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let amp = i16::from(params.speckle_amplitude);
    let data: Vec<u8> = field
        .iter()
        .map(|&v| {
            let pore = if k >= n { true } else { v < sorted[k] };
            let base = i16::from(if pore { PORE_LEVEL } else { ICE_LEVEL });
            let speckle = rng.gen_range(-amp..=amp);
            (base + speckle).clamp(0, 255) as u8
        })
        .collect();
    GrayImage::new(width, height, data)
}

/// Separable Gaussian smoothing with wrap-around borders and kernel radius
/// `ceil(3 sigma)`.
fn smooth_wraparound(field: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;

    let mut rows = vec![0.0; field.len()];
    for y in 0..height {
        let row = &field[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let sx = (x as isize + j as isize - radius).rem_euclid(width as isize) as usize;
                acc += kv * row[sx];
            }
            rows[y * width + x] = acc;
        }
    }

    let mut out = vec![0.0; field.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let sy = (y as isize + j as isize - radius).rem_euclid(height as isize) as usize;
                acc += kv * rows[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }
    kernel
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pf: f64, cl: f64, seed: u64) -> SynthParams {
        SynthParams {
            depth_m: 7,
            pore_fraction: pf,
            correlation_length: cl,
            speckle_amplitude: SPECKLE_AMPLITUDE,
            seed,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = params(0.3, 3.0, 99);
        assert_eq!(
            synth_firn(&p, 48, 32).unwrap(),
            synth_firn(&p, 48, 32).unwrap()
        );
    }

    #[test]
    fn different_seeds_give_different_images() {
        let a = synth_firn(&params(0.3, 3.0, 1), 32, 32).unwrap();
        let b = synth_firn(&params(0.3, 3.0, 2), 32, 32).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn realized_pore_fraction_matches_the_target() {
        // With amplitude 25, pore pixels lie in [0, 35] and ice pixels in
        // [115, 165], so counting below 70 recovers the pore mask exactly.
        let p = params(0.3, 3.0, 7);
        let img = synth_firn(&p, 64, 64).unwrap();
        let pores = img.pixels().iter().filter(|&&v| v < 70).count();
        let frac = pores as f64 / (64.0 * 64.0);
        assert!((frac - 0.3).abs() < 1e-3, "realized fraction {frac}");
    }

    #[test]
    fn pixel_values_stay_in_the_two_speckle_bands() {
        let img = synth_firn(&params(0.4, 2.0, 11), 40, 40).unwrap();
        for &v in img.pixels() {
            let pore_band = v <= PORE_LEVEL + SPECKLE_AMPLITUDE;
            let ice_band =
                (ICE_LEVEL - SPECKLE_AMPLITUDE..=ICE_LEVEL + SPECKLE_AMPLITUDE).contains(&v);
            assert!(pore_band || ice_band, "value {v} outside both bands");
        }
    }

    #[test]
    fn longer_correlation_gives_coarser_structure() {
        // Count horizontal phase transitions; finer structure flips phase
        // more often. Same seed so only the smoothing differs.
        let transitions = |cl: f64| {
            let img = synth_firn(&params(0.4, cl, 5), 64, 64).unwrap();
            let mut count = 0usize;
            for y in 0..64 {
                for x in 1..64 {
                    if (img.get(x, y) < 70) != (img.get(x - 1, y) < 70) {
                        count += 1;
                    }
                }
            }
            count
        };
        assert!(transitions(1.5) > transitions(6.0));
    }

    #[test]
    fn depth_ramp_hits_the_published_endpoints() {
        let shallow = SynthParams::for_depth(7, 0).unwrap();
        assert_eq!(shallow.pore_fraction, 0.45);
        assert_eq!(shallow.correlation_length, 6.0);
        let deep = SynthParams::for_depth(78, 0).unwrap();
        assert_eq!(deep.pore_fraction, 0.06);
        assert_eq!(deep.correlation_length, 2.5);
    }

    #[test]
    fn depth_ramp_is_monotone() {
        let mut last_pf = f64::INFINITY;
        let mut last_cl = f64::INFINITY;
        for &d in &DEPTHS_M {
            let p = SynthParams::for_depth(d, 0).unwrap();
            assert!(p.pore_fraction < last_pf);
            assert!(p.correlation_length < last_cl);
            last_pf = p.pore_fraction;
            last_cl = p.correlation_length;
        }
    }

    #[test]
    fn unknown_depth_is_rejected() {
        assert!(SynthParams::for_depth(8, 0).is_err());
    }

    #[test]
    fn invalid_pore_fraction_is_rejected() {
        assert!(synth_firn(&params(0.0, 3.0, 1), 16, 16).is_err());
        assert!(synth_firn(&params(1.0, 3.0, 1), 16, 16).is_err());
        assert!(synth_firn(&params(f64::NAN, 3.0, 1), 16, 16).is_err());
    }

    #[test]
    fn zero_size_is_rejected() {
        assert!(synth_firn(&params(0.3, 3.0, 1), 0, 16).is_err());
    }

    #[test]
    fn corpus_seeds_are_distinct_across_slots() {
        let mut seeds = Vec::new();
        for d in 0..10 {
            for i in 0..20 {
                seeds.push(corpus_image_seed(42, d, i));
            }
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }
}
