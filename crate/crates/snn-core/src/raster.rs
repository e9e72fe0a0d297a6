//! Grayscale raster images and their on-disk formats (8-bit PGM and PNG).

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Result, SnnError};

/// Grayscale image with `f64` pixels in row-major order.
///
/// Loaders scale 8-bit files to `[0, 1]`. Intermediate processing stages
/// (receptive-field filtering in particular) may hold negative or
/// above-one values; normalization brings them back to `[0, 1]` before
/// spike encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// All-zero image.
    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    /// Build from a function of (x, y).
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    /// Adopt a row-major pixel buffer.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(SnnError::Dimension(format!(
                "{} pixels cannot form a {width}x{height} image",
                pixels.len()
            )));
        }
        if !pixels.iter().all(|p| p.is_finite()) {
            return Err(SnnError::Data("image contains non-finite pixels".into()));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = value;
    }

    /// Flat row-major pixel view.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Flat mutable row-major pixel view.
    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    /// Smallest and largest pixel value.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &p in &self.pixels {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    /// Mean of squared pixel values (average signal power).
    pub fn mean_square(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|p| p * p).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Read an 8-bit grayscale image, dispatching on file extension.
///
/// `.pgm` files are parsed as binary PGM (P5); `.png` files must be
/// 8-bit grayscale. Pixel values are scaled to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Image> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => read_pgm(path),
        "png" => read_png(path),
        other => Err(SnnError::Data(format!(
            "unsupported image extension `{other}` for {}: expected .pgm or .png",
            path.display()
        ))),
    }
}

/// Parse a binary (P5) 8-bit PGM file.
pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| SnnError::io(path, e))?;
    parse_pgm(&bytes).map_err(|msg| SnnError::Format(format!("{}: {msg}", path.display())))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> std::result::Result<String, String> {
        // Skip whitespace and `#` comments between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token(bytes)?;
    if magic != "P5" {
        return Err(format!("not a binary PGM (magic `{magic}`, expected `P5`)"));
    }
    let width: usize = token(bytes)?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token(bytes)?
        .parse()
        .map_err(|_| "bad height".to_string())?;
    let maxval: usize = token(bytes)?
        .parse()
        .map_err(|_| "bad maxval".to_string())?;
    if maxval == 0 || maxval > 255 {
        return Err(format!(
            "unsupported bit depth (maxval {maxval}, expected 1..=255)"
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = width * height;
    let raster = bytes.get(pos..pos + expected).ok_or_else(|| {
        format!(
            "truncated raster: expected {expected} bytes, found {}",
            bytes.len().saturating_sub(pos)
        )
    })?;
    let pixels = raster
        .iter()
        .map(|&b| f64::from(b) / maxval as f64)
        .collect();
    Image::from_pixels(width, height, pixels).map_err(|e| e.to_string())
}

/// Write an image as binary (P5) 8-bit PGM. Pixels are clamped to `[0, 1]`
/// and quantized to 255 levels.
pub fn write_pgm(image: &Image, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(32 + image.pixel_count());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", image.width(), image.height()).as_bytes());
    for &p in image.pixels() {
        out.push((p.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    fs::write(path, out).map_err(|e| SnnError::io(path, e))
}

fn read_png(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| SnnError::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| SnnError::Format(format!("{}: {e}", path.display())))?;
    match decoded {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            let pixels = gray
                .into_raw()
                .into_iter()
                .map(|b| f64::from(b) / 255.0)
                .collect();
            Image::from_pixels(w, h, pixels)
        }
        other => Err(SnnError::Format(format!(
            "{}: unsupported bit depth or color type {:?}, expected 8-bit grayscale",
            path.display(),
            other.color()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_preserves_quantized_pixels() {
        let img = Image::from_fn(5, 4, |x, y| (x + y) as f64 / 8.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        write_pgm(&img, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.width(), 5);
        assert_eq!(back.height(), 4);
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pgm_rejects_wrong_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("m.pgm");
        fs::write(&bad_magic, b"P2\n2 2\n255\n0 0 0 0").unwrap();
        assert!(matches!(read_pgm(&bad_magic), Err(SnnError::Format(_))));

        let truncated = dir.path().join("t.pgm");
        fs::write(&truncated, b"P5\n4 4\n255\nab").unwrap();
        let err = read_pgm(&truncated).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn pgm_rejects_16_bit_depth() {
        let dir = tempfile::tempdir().unwrap();
        let deep = dir.path().join("d.pgm");
        fs::write(&deep, b"P5\n1 1\n65535\n\0\0").unwrap();
        let err = read_pgm(&deep).unwrap_err();
        assert!(err.to_string().contains("unsupported bit depth"));
    }

    #[test]
    fn load_image_rejects_unknown_extension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tiff");
        fs::write(&path, b"whatever").unwrap();
        assert!(load_image(&path).is_err());
    }
}
