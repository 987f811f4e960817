//! Ice/pore segmentation and the exact Euclidean distance transform.
//!
//! Segmentation smooths the image with the same 3x3 Gaussian used elsewhere,
//! then applies Otsu's threshold; pixels at or below the threshold are pore
//! (pores image dark), the rest are ice. The distance transform assigns every
//! pixel its exact Euclidean distance to the nearest ice pixel, computed with
//! the two-pass lower-envelope method on squared distances, so results carry
//! no grid-approximation error.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{gaussian_blur3, GrayImage};

/// A two-phase (ice/pore) mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pore: Vec<bool>,
}

impl BinaryImage {
    /// Wraps a row-major pore mask (`true` marks pore pixels).
    pub fn new(width: usize, height: usize, pore: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if pore.len() != width * height {
            return Err(Error::PixelCountMismatch {
                width,
                height,
                expected: width * height,
                got: pore.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pore,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_pore(&self, x: usize, y: usize) -> bool {
        self.pore[y * self.width + x]
    }

    pub fn pore_count(&self) -> usize {
        self.pore.iter().filter(|&&p| p).count()
    }

    /// Row-major pore mask.
    pub fn pore_mask(&self) -> &[bool] {
        &self.pore
    }
}

/// Otsu's threshold: the gray level `t` maximizing the between-class
/// variance of the split into `<= t` and `> t`. Ties resolve to the smallest
/// `t`. A constant image has no two-class split and is rejected.
pub fn otsu_threshold(img: &GrayImage) -> Result<u8> {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    let total: u64 = img.pixels().len() as u64;
    let total_sum: u64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as u64 * c)
        .sum();

    let mut best: Option<(u8, f64)> = None;
    let mut w0: u64 = 0;
    let mut sum0: u64 = 0;
    for t in 0..=255u8 {
        w0 += hist[t as usize];
        sum0 += u64::from(t) * hist[t as usize];
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let mean0 = sum0 as f64 / w0 as f64;
        let mean1 = (total_sum - sum0) as f64 / w1 as f64;
        let diff = mean0 - mean1;
        let variance = w0 as f64 * w1 as f64 * diff * diff;
        if best.is_none_or(|(_, v)| variance > v) {
            best = Some((t, variance));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::DegenerateHistogram)
}

/// Segments an image into ice and pore: smooth with the 3x3 Gaussian, take
/// Otsu's threshold of the smoothed image, and mark pixels at or below it as
/// pore.
pub fn binarize(img: &GrayImage) -> Result<BinaryImage> {
    let smoothed = gaussian_blur3(img);
    let t = otsu_threshold(&smoothed)?;
    let pore = smoothed.pixels().iter().map(|&v| v <= t).collect();
    BinaryImage::new(img.width(), img.height(), pore)
}

/// Exact Euclidean distances from every pixel to the nearest ice pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtImage {
    width: usize,
    height: usize,
    squared: Vec<u64>,
    capped: Vec<u8>,
}

impl DtImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major exact squared distances.
    pub fn squared(&self) -> &[u64] {
        &self.squared
    }

    /// Euclidean distance at one pixel.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        (self.squared[y * self.width + x] as f64).sqrt()
    }

    /// Row-major distances rounded to the nearest integer and capped at 100,
    /// the values the distance-transform filtration is built on.
    pub fn capped(&self) -> &[u8] {
        &self.capped
    }

    /// Writes the rounded (uncapped) distances as a 16-bit big-endian PGM,
    /// for eyeballing intermediate output.
    pub fn save_pgm16(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &sq in &self.squared {
            let d = (sq as f64).sqrt().round().min(65535.0) as u16;
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        std::fs::write(path, bytes).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Computes the exact Euclidean distance transform of a mask: each pixel's
/// distance to the nearest ice pixel (zero on ice itself). Fails if the mask
/// has no ice at all.
///
/// Two passes: per-row scans give each pixel its horizontal distance to ice
/// within its own row, then a per-column lower-envelope minimization over
/// parabolas combines rows. All squared distances are exact integers.
pub fn distance_transform(mask: &BinaryImage) -> Result<DtImage> {
    let (w, h) = (mask.width(), mask.height());
    let n = w * h;
    if mask.pore_count() == n {
        return Err(Error::NoIcePixels);
    }

    // Pass 1: horizontal distance to the nearest ice pixel in the same row;
    // u32::MAX marks rows with no ice.
    let mut row_dist = vec![u32::MAX; n];
    for y in 0..h {
        let mut d = u32::MAX;
        for x in 0..w {
            if !mask.is_pore(x, y) {
                d = 0;
            } else {
                // u32::MAX marks "no ice seen yet"; saturation keeps it.
                d = d.saturating_add(1);
            }
            row_dist[y * w + x] = d;
        }
        d = u32::MAX;
        for x in (0..w).rev() {
            if !mask.is_pore(x, y) {
                d = 0;
            } else {
                d = d.saturating_add(1);
            }
            let i = y * w + x;
            row_dist[i] = row_dist[i].min(d);
        }
    }

    // Pass 2: per column, minimize (y - r)^2 + row_dist(r)^2 over rows r.
    let mut squared = vec![0u64; n];
    let mut f = vec![0.0f64; h];
    let mut d = vec![0.0f64; h];
    let mut v = vec![0usize; h];
    let mut z = vec![0.0f64; h + 1];
    for x in 0..w {
        for y in 0..h {
            let rd = row_dist[y * w + x];
            f[y] = if rd == u32::MAX {
                f64::INFINITY
            } else {
                (u64::from(rd) * u64::from(rd)) as f64
            };
        }
        lower_envelope_dt(&f, &mut d, &mut v, &mut z);
        for y in 0..h {
            // d holds sums and squares of integers well below 2^52, so the
            // float value is an exact integer.
            squared[y * w + x] = d[y] as u64;
        }
    }

    let capped = squared
        .iter()
        .map(|&sq| (sq as f64).sqrt().round().min(100.0) as u8)
        .collect();
    Ok(DtImage {
        width: w,
        height: h,
        squared,
        capped,
    })
}

/// One-dimensional squared-distance transform of the sampled function `f`
/// (infinite entries mean "no source"). Writes the result into `d`; `v` and
/// `z` are scratch for the envelope's parabola indices and boundaries.
fn lower_envelope_dt(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let first = match (0..n).find(|&i| f[i].is_finite()) {
        Some(i) => i,
        None => {
            d[..n].fill(f64::INFINITY);
            return;
        }
    };

    let mut k = 0;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        // Intersection of parabola q with the rightmost one in the envelope;
        // pop parabolas it dominates.
        let mut s;
        loop {
            let p = v[k];
            s = (f[q] + (q * q) as f64 - f[p] - (p * p) as f64) / (2 * (q - p)) as f64;
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }

    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dy = q.abs_diff(p);
        *out = (dy * dy) as f64 + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_firn, SynthParams};
    use proptest::prelude::*;

    fn img(w: usize, h: usize, data: &[u8]) -> GrayImage {
        GrayImage::new(w, h, data.to_vec()).unwrap()
    }

    fn counts_image(counts: &[(u8, usize)]) -> GrayImage {
        let data: Vec<u8> = counts
            .iter()
            .flat_map(|&(v, c)| std::iter::repeat_n(v, c))
            .collect();
        let n = data.len();
        GrayImage::new(n, 1, data).unwrap()
    }

    #[test]
    fn otsu_splits_a_balanced_two_value_histogram_at_the_low_value() {
        // All thresholds in 0..=254 induce the same split; the tie resolves
        // to the smallest.
        let im = counts_image(&[(0, 50), (255, 50)]);
        assert_eq!(otsu_threshold(&im).unwrap(), 0);
    }

    #[test]
    fn otsu_splits_an_unbalanced_two_value_histogram_at_the_low_value() {
        let im = counts_image(&[(40, 60), (200, 40)]);
        assert_eq!(otsu_threshold(&im).unwrap(), 40);
    }

    #[test]
    fn otsu_rejects_a_constant_image() {
        let im = img(4, 4, &[9; 16]);
        assert!(matches!(
            otsu_threshold(&im),
            Err(Error::DegenerateHistogram)
        ));
    }

    #[test]
    fn binarize_marks_the_dark_half_of_a_two_tone_image_as_pore() {
        // Left 8 columns at 40, right 8 at 200. Smoothing turns columns 7
        // and 8 into 80 and 160; Otsu's threshold on the smoothed histogram
        // {40 x112, 80 x16, 160 x16, 200 x112} lands on 80, so pore is
        // exactly the left half.
        let im = GrayImage::from_fn(16, 16, |x, _| if x < 8 { 40 } else { 200 });
        let smoothed = gaussian_blur3(&im);
        assert_eq!(otsu_threshold(&smoothed).unwrap(), 80);
        let mask = binarize(&im).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(mask.is_pore(x, y), x < 8, "at ({x}, {y})");
            }
        }
    }

    #[test]
    fn binarize_keeps_a_blurred_bright_speck_as_a_five_pixel_plus() {
        // One 255 pixel in a zero field blurs to 64 with an edge cross of 32
        // and corners of 16. Otsu's threshold is 16, leaving the center and
        // its four edge neighbors as ice.
        let im = GrayImage::from_fn(64, 64, |x, y| if (x, y) == (32, 32) { 255 } else { 0 });
        let mask = binarize(&im).unwrap();
        let ice: Vec<(usize, usize)> = (0..64)
            .flat_map(|y| (0..64).map(move |x| (x, y)))
            .filter(|&(x, y)| !mask.is_pore(x, y))
            .collect();
        assert_eq!(
            ice,
            vec![(32, 31), (31, 32), (32, 32), (33, 32), (32, 33)]
        );
    }

    #[test]
    fn binarize_rejects_a_constant_image() {
        let im = img(8, 8, &[100; 64]);
        assert!(binarize(&im).is_err());
    }

    #[test]
    fn binarize_recovers_the_synthetic_pore_fraction() {
        let p = SynthParams {
            depth_m: 7,
            pore_fraction: 0.5,
            correlation_length: 3.0,
            speckle_amplitude: 25,
            seed: 31,
        };
        let im = synth_firn(&p, 64, 64).unwrap();
        let mask = binarize(&im).unwrap();
        let frac = mask.pore_count() as f64 / (64.0 * 64.0);
        assert!((frac - 0.5).abs() <= 0.02, "pore fraction {frac}");
    }

    fn mask_of(w: usize, h: usize, ice: &[(usize, usize)]) -> BinaryImage {
        let mut pore = vec![true; w * h];
        for &(x, y) in ice {
            pore[y * w + x] = false;
        }
        BinaryImage::new(w, h, pore).unwrap()
    }

    #[test]
    fn distance_transform_of_an_all_ice_mask_is_zero() {
        let mask = BinaryImage::new(5, 3, vec![false; 15]).unwrap();
        let dt = distance_transform(&mask).unwrap();
        assert!(dt.squared().iter().all(|&d| d == 0));
    }

    #[test]
    fn distance_transform_from_a_corner_source_is_the_exact_squared_norm() {
        let mask = mask_of(3, 3, &[(0, 0)]);
        let dt = distance_transform(&mask).unwrap();
        assert_eq!(dt.squared(), &[0, 1, 4, 1, 2, 5, 4, 5, 8]);
        // sqrt(2) = 1.414 rounds to 1; sqrt(8) = 2.828 rounds to 3.
        assert_eq!(dt.capped(), &[0, 1, 2, 1, 1, 2, 2, 2, 3]);
    }

    #[test]
    fn distance_transform_caps_reported_values_at_100() {
        let mask = mask_of(120, 1, &[(0, 0)]);
        let dt = distance_transform(&mask).unwrap();
        for x in 0..120 {
            assert_eq!(dt.squared()[x], (x * x) as u64);
            assert_eq!(dt.capped()[x], x.min(100) as u8);
        }
    }

    #[test]
    fn distance_transform_rejects_an_all_pore_mask() {
        let mask = BinaryImage::new(4, 4, vec![true; 16]).unwrap();
        assert!(matches!(
            distance_transform(&mask),
            Err(Error::NoIcePixels)
        ));
    }

    #[test]
    fn sixteen_bit_dump_round_trips_the_rounded_distances() {
        let mask = mask_of(4, 2, &[(0, 0)]);
        let dt = distance_transform(&mask).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dt.pgm");
        dt.save_pgm16(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n4 2\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let raster = &bytes[header.len()..];
        let values: Vec<u16> = raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        let expected: Vec<u16> = dt
            .squared()
            .iter()
            .map(|&sq| (sq as f64).sqrt().round() as u16)
            .collect();
        assert_eq!(values, expected);
    }

    /// Quadratic-time reference: minimum squared distance to any ice pixel.
    fn brute_force_squared(mask: &BinaryImage) -> Vec<u64> {
        let (w, h) = (mask.width(), mask.height());
        let ice: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| !mask.is_pore(x, y))
            .collect();
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                ice.iter()
                    .map(|&(ix, iy)| {
                        let dx = x.abs_diff(ix) as u64;
                        let dy = y.abs_diff(iy) as u64;
                        dx * dx + dy * dy
                    })
                    .min()
                    .unwrap()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn distance_transform_matches_brute_force(
            w in 1usize..13,
            h in 1usize..13,
            seed in 0u64..1000,
            density in 1u32..100,
        ) {
            use rand::Rng as _;
            use rand::SeedableRng as _;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pore: Vec<bool> = (0..w * h)
                .map(|_| rng.gen_range(0..100) >= density)
                .collect();
            // Guarantee at least one ice pixel.
            let fix = rng.gen_range(0..w * h);
            pore[fix] = false;
            let mask = BinaryImage::new(w, h, pore).unwrap();
            let dt = distance_transform(&mask).unwrap();
            let expected = brute_force_squared(&mask);
            prop_assert_eq!(dt.squared(), expected.as_slice());
        }
    }
}
