//! 8-bit grayscale images: loading (binary PGM and grayscale PNG), saving,
//! and the manipulations used by the evaluation scenarios (3x3 Gaussian
//! blur, quadrant splitting, dihedral transforms).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    /// Wraps a row-major pixel buffer. Both dimensions must be positive and
    /// `data` must hold exactly `width * height` bytes.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        let expected = width
            .checked_mul(height)
            .ok_or(Error::InvalidDimensions { width, height })?;
        if data.len() != expected {
            return Err(Error::PixelCountMismatch {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// # Panics
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixel data.
    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    /// Pixel at column `x`, row `y`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.width)
    }

    /// Copies the `w x h` window whose top-left corner is `(x0, y0)`.
    fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        debug_assert!(x0 + w <= self.width && y0 + h <= self.height && w > 0 && h > 0);
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let start = y * self.width + x0;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    /// Writes the image as a binary PGM (P5, maxval 255).
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend_from_slice(&self.data);
        fs::write(path, bytes).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Loads an 8-bit grayscale image from a binary PGM (P5, maxval 255) or a
/// grayscale PNG. Any other format, bit depth, or color layout is rejected.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.starts_with(b"P5") {
        parse_pgm(&bytes, path)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes, path)
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{} is neither a binary PGM (P5) nor a PNG",
            path.display()
        )))
    }
}

fn parse_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let malformed = |reason: &str| Error::MalformedImage {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    let mut pos = 2; // past the "P5" magic
    let next_uint = |pos: &mut usize| -> Result<u64> {
        // Skip whitespace and comment lines between header tokens.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(malformed("expected an unsigned integer in the header"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("header value out of range"))
    };

    let width = next_uint(&mut pos)?;
    let height = next_uint(&mut pos)?;
    let maxval = next_uint(&mut pos)?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed("missing whitespace before the raster"));
    }
    pos += 1;

    let (width, height) = (width as usize, height as usize);
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    let expected = width * height;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(malformed(&format!(
            "raster holds {} bytes, expected {}",
            raster.len(),
            expected
        )));
    }
    GrayImage::new(width, height, raster[..expected].to_vec())
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let decoded = ::image::load_from_memory_with_format(bytes, ::image::ImageFormat::Png)
        .map_err(|e| Error::MalformedImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    match decoded {
        ::image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            GrayImage::new(w, h, buf.into_raw())
        }
        other => Err(Error::UnsupportedFormat(format!(
            "{} is a {:?} PNG; only 8-bit grayscale is accepted",
            path.display(),
            other.color()
        ))),
    }
}

/// 3x3 binomial approximation of a Gaussian blur.
///
/// Kernel (1 2 1; 2 4 2; 1 2 1) / 16, with edges handled by replicating the
/// nearest border pixel. Each output value is rounded half-up.
pub fn gaussian_blur3(img: &GrayImage) -> GrayImage {
    const KERNEL: [[u32; 3]; 3] = [[1, 2, 1], [2, 4, 2], [1, 2, 1]];
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc: u32 = 0;
        for (dy, row) in KERNEL.iter().enumerate() {
            let sy = (y + dy).saturating_sub(1).min(h - 1);
            for (dx, &k) in row.iter().enumerate() {
                let sx = (x + dx).saturating_sub(1).min(w - 1);
                acc += k * u32::from(img.get(sx, sy));
            }
        }
        // acc <= 16 * 255, so the rounded quotient always fits in a byte.
        ((acc + 8) / 16) as u8
    })
}

/// The four quadrants of an image, in reading order.
#[derive(Debug, Clone)]
pub struct Quadrants {
    pub top_left: GrayImage,
    pub top_right: GrayImage,
    pub bottom_left: GrayImage,
    pub bottom_right: GrayImage,
}

/// Splits an image into four quadrants along the midlines.
///
/// For odd dimensions the extra row/column goes to the bottom/right half, so
/// the top-left quadrant is never the larger one. Both sides must be at
/// least 2 pixels so that every quadrant is non-empty.
pub fn split_quadrants(img: &GrayImage) -> Result<Quadrants> {
    let (w, h) = (img.width(), img.height());
    if w < 2 || h < 2 {
        return Err(Error::DegenerateSplit {
            width: w,
            height: h,
        });
    }
    let (mx, my) = (w / 2, h / 2);
    Ok(Quadrants {
        top_left: img.crop(0, 0, mx, my),
        top_right: img.crop(mx, 0, w - mx, my),
        bottom_left: img.crop(0, my, mx, h - my),
        bottom_right: img.crop(mx, my, w - mx, h - my),
    })
}

/// Rotates 90 degrees clockwise.
pub fn rotate90(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(h, w, |x, y| img.get(y, h - 1 - x))
}

pub fn rotate180(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |x, y| img.get(w - 1 - x, h - 1 - y))
}

pub fn rotate270(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(h, w, |x, y| img.get(w - 1 - y, x))
}

pub fn flip_horizontal(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |x, y| img.get(w - 1 - x, y))
}

pub fn flip_vertical(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |x, y| img.get(x, h - 1 - y))
}

pub fn transpose(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(h, w, |x, y| img.get(y, x))
}

/// Transposition along the anti-diagonal.
pub fn anti_transpose(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(h, w, |x, y| img.get(w - 1 - y, h - 1 - x))
}

/// All eight images in the dihedral orbit of `img`: the identity, the three
/// rotations, both axis flips, and both diagonal flips.
pub fn dihedral_orbit(img: &GrayImage) -> Vec<GrayImage> {
    vec![
        img.clone(),
        rotate90(img),
        rotate180(img),
        rotate270(img),
        flip_horizontal(img),
        flip_vertical(img),
        transpose(img),
        anti_transpose(img),
    ]
}
