//! Dataset trees on disk, synthetic speckled datasets, and additive
//! Gaussian noise at controlled signal-to-noise ratios.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Result, SnnError};
use crate::raster::{load_image, write_pgm, Image};

/// One labeled image.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Image,
    pub label: String,
    /// Index of the label in the dataset's sorted class list.
    pub class_index: usize,
    /// Source path when loaded from disk.
    pub path: Option<PathBuf>,
}

/// A labeled image collection with train and test splits.
///
/// Class labels are the class directory names, kept in lexicographic
/// order; `class_index` on every sample refers into that order. All
/// images share one geometry.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub classes: Vec<String>,
    /// (width, height) shared by every image.
    pub geometry: (usize, usize),
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Assemble a dataset from in-memory samples, deriving the class list
    /// and validating geometry. Intended for programmatic fixtures.
    pub fn from_samples(
        train: Vec<(String, Image)>,
        test: Vec<(String, Image)>,
    ) -> Result<Dataset> {
        let mut classes: Vec<String> = train
            .iter()
            .chain(test.iter())
            .map(|(label, _)| label.clone())
            .collect();
        classes.sort();
        classes.dedup();
        if classes.is_empty() {
            return Err(SnnError::Data("dataset has no samples".into()));
        }
        let geometry = train
            .first()
            .or(test.first())
            .map(|(_, img)| (img.width(), img.height()))
            .unwrap();
        let build = |pairs: Vec<(String, Image)>| -> Result<Vec<Sample>> {
            pairs
                .into_iter()
                .map(|(label, image)| {
                    if (image.width(), image.height()) != geometry {
                        return Err(SnnError::Data(format!(
                            "image geometry {}x{} differs from dataset geometry {}x{}",
                            image.width(),
                            image.height(),
                            geometry.0,
                            geometry.1
                        )));
                    }
                    let class_index = classes.binary_search(&label).unwrap();
                    Ok(Sample {
                        image,
                        label,
                        class_index,
                        path: None,
                    })
                })
                .collect()
        };
        Ok(Dataset {
            geometry,
            train: build(train)?,
            test: build(test)?,
            classes,
        })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Pixel count per image.
    pub fn input_size(&self) -> usize {
        self.geometry.0 * self.geometry.1
    }

    /// Number of training samples in each class, indexed like `classes`.
    pub fn train_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for s in &self.train {
            counts[s.class_index] += 1;
        }
        counts
    }
}

/// Load a dataset tree.
///
/// Expected layout: `root/<class>/{train,test}/<name>.pgm|png`. When the
/// class directories hold images directly instead of split
/// subdirectories, `split` = (train ratio, seed) shuffles each class
/// reproducibly and cuts it into splits. Classes and file names are
/// taken in lexicographic order so loading is deterministic.
pub fn load_dataset(root: &Path, split: Option<(f64, u64)>) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(SnnError::Data(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| SnnError::io(root, e))? {
        let entry = entry.map_err(|e| SnnError::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            class_dirs.push((name, path));
        }
    }
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(SnnError::Data(format!(
            "dataset root {} contains no class directories",
            root.display()
        )));
    }

    let classes: Vec<String> = class_dirs.iter().map(|(n, _)| n.clone()).collect();
    let mut train: Vec<Sample> = Vec::new();
    let mut test: Vec<Sample> = Vec::new();
    let mut geometry: Option<(usize, usize)> = None;

    for (class_index, (label, dir)) in class_dirs.iter().enumerate() {
        let train_dir = dir.join("train");
        let test_dir = dir.join("test");
        let mut push = |paths: Vec<PathBuf>, out: &mut Vec<Sample>| -> Result<()> {
            for path in paths {
                let image = load_image(&path)?;
                let geo = (image.width(), image.height());
                match geometry {
                    None => geometry = Some(geo),
                    Some(expected) if expected != geo => {
                        return Err(SnnError::Data(format!(
                            "{}: image geometry {}x{} differs from dataset geometry {}x{}",
                            path.display(),
                            geo.0,
                            geo.1,
                            expected.0,
                            expected.1
                        )));
                    }
                    _ => {}
                }
                out.push(Sample {
                    image,
                    label: label.clone(),
                    class_index,
                    path: Some(path),
                });
            }
            Ok(())
        };

        if train_dir.is_dir() || test_dir.is_dir() {
            if train_dir.is_dir() {
                push(list_images(&train_dir)?, &mut train)?;
            }
            if test_dir.is_dir() {
                push(list_images(&test_dir)?, &mut test)?;
            }
        } else {
            let files = list_images(dir)?;
            if files.is_empty() {
                return Err(SnnError::Data(format!(
                    "class directory {} contains no images",
                    dir.display()
                )));
            }
            let (ratio, seed) = split.unwrap_or((0.8, 0));
            if !(0.0..=1.0).contains(&ratio) {
                return Err(SnnError::InvalidParameter(format!(
                    "split ratio {ratio} outside [0, 1]"
                )));
            }
            let mut order: Vec<usize> = (0..files.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(class_index as u64);
            order.shuffle(&mut rng);
            let cut = (ratio * files.len() as f64).floor() as usize;
            let mut train_files: Vec<PathBuf> =
                order[..cut].iter().map(|&i| files[i].clone()).collect();
            let mut test_files: Vec<PathBuf> =
                order[cut..].iter().map(|&i| files[i].clone()).collect();
            train_files.sort();
            test_files.sort();
            push(train_files, &mut train)?;
            push(test_files, &mut test)?;
        }
    }

    if train.is_empty() && test.is_empty() {
        return Err(SnnError::Data(format!(
            "dataset root {} contains no images",
            root.display()
        )));
    }
    Ok(Dataset {
        classes,
        geometry: geometry.unwrap(),
        train,
        test,
    })
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| SnnError::io(dir, e))? {
        let entry = entry.map_err(|e| SnnError::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
        {
            Some(ext) if ext == "pgm" || ext == "png" => files.push(path),
            _ => {}
        }
    }
    files.sort();
    Ok(files)
}

/// Procedural base pattern for one synthetic class: a smooth oriented
/// bar, a cluster of blobs, or a ring, cycled by class index with the
/// placement nudged for every repeat so classes stay distinct.
fn base_pattern(class_index: usize, width: usize, height: usize) -> Image {
    let archetype = class_index % 3;
    let variant = (class_index / 3) as f64;
    let cx = 0.5;
    let cy = 0.5;
    let peak = 0.45;
    Image::from_fn(width, height, |px, py| {
        // Normalized coordinates centered on the image.
        let x = (px as f64 + 0.5) / width as f64 - cx;
        let y = (py as f64 + 0.5) / height as f64 - cy;
        let v = match archetype {
            0 => {
                // Oriented bar through the center.
                let theta = 0.6 + 0.35 * variant;
                let (s, c) = theta.sin_cos();
                let along = x * c + y * s;
                let across = -x * s + y * c;
                let ridge = (-(across / 0.07).powi(2)).exp();
                let window = (-(along / 0.28).powi(4)).exp();
                ridge * window
            }
            1 => {
                // Cluster of four blobs around the center.
                let spin = 0.4 * variant;
                let mut acc: f64 = 0.0;
                for i in 0..4 {
                    let ang = spin + std::f64::consts::FRAC_PI_2 * i as f64 + 0.3;
                    let bx = 0.22 * ang.cos();
                    let by = 0.22 * ang.sin();
                    let d2 = (x - bx).powi(2) + (y - by).powi(2);
                    acc += (-(d2 / (0.05f64).powi(2))).exp();
                }
                acc.min(1.0)
            }
            _ => {
                // Ring around the center.
                let radius = 0.27 + 0.04 * variant;
                let r = (x * x + y * y).sqrt();
                (-((r - radius) / 0.045).powi(2)).exp()
            }
        };
        peak * v
    })
}

/// One-dimensional smoothing pass along rows (`stride == 1`) or
/// columns (`stride == width`), renormalized per output pixel by the
/// in-bounds tap energy so a standard-normal input stays standard
/// normal exactly, borders included.
fn smooth_pass(
    input: &[f64],
    width: usize,
    height: usize,
    taps: &[f64],
    along_rows: bool,
) -> Vec<f64> {
    let half = taps.len() as isize / 2;
    let mut out = vec![0.0; input.len()];
    let (outer, inner) = if along_rows {
        (height, width)
    } else {
        (width, height)
    };
    for o in 0..outer {
        for i in 0..inner {
            let mut acc = 0.0;
            let mut energy = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let j = i as isize + t as isize - half;
                if j < 0 || j >= inner as isize {
                    continue;
                }
                let idx = if along_rows {
                    o * width + j as usize
                } else {
                    j as usize * width + o
                };
                acc += w * input[idx];
                energy += w * w;
            }
            let idx = if along_rows {
                o * width + i
            } else {
                i * width + o
            };
            out[idx] = acc / energy.sqrt();
        }
    }
    out
}

/// Standard-normal field with a short-range spatial correlation: white
/// noise convolved with a separable Gaussian tap set. The row pass
/// mixes only within rows, so the column pass sums independent values
/// and the per-pixel renormalization keeps every output exactly
/// standard normal.
fn smoothed_gaussian_field(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const GRAIN_SIGMA: f64 = 0.9;
    let taps: Vec<f64> = (-2i32..=2)
        .map(|d| (-((d * d) as f64) / (2.0 * GRAIN_SIGMA * GRAIN_SIGMA)).exp())
        .collect();
    let white: Vec<f64> = (0..width * height)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let rows = smooth_pass(&white, width, height, &taps, true);
    smooth_pass(&rows, width, height, &taps, false)
}

/// Single-look intensity speckle with the grain of a real imaging
/// system: the scattered complex amplitude is modeled as two
/// independent smoothed Gaussian fields (real and imaginary parts), and
/// the intensity is half the sum of their squares. Every pixel is then
/// exactly unit-mean exponential while neighboring pixels share
/// smoothing support, so the noise forms grains a couple of pixels
/// wide instead of per-pixel salt.
fn speckle_field(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let re = smoothed_gaussian_field(width, height, rng);
    let im = smoothed_gaussian_field(width, height, rng);
    re.into_iter()
        .zip(im)
        .map(|(a, b)| 0.5 * (a * a + b * b))
        .collect()
}

/// Generate a synthetic dataset tree at `root`: `class_count` classes
/// with `per_class_train`/`per_class_test` images of `size` x `size`
/// pixels each. Every image is its class's base pattern multiplied by
/// unit-mean exponential speckle, so samples within a class share
/// structure but differ pixelwise. A `manifest.txt` at the root lists
/// every written file. Identical arguments reproduce identical bytes.
pub fn generate_synthetic(
    root: &Path,
    class_count: usize,
    per_class_train: usize,
    per_class_test: usize,
    size: usize,
    seed: u64,
) -> Result<Dataset> {
    if class_count < 2 || size < 16 {
        return Err(SnnError::InvalidParameter(
            "synthetic generation needs at least two classes and size >= 16".into(),
        ));
    }
    if per_class_train + per_class_test == 0 {
        return Err(SnnError::InvalidParameter(
            "synthetic generation needs at least one sample per class".into(),
        ));
    }
    fs::create_dir_all(root).map_err(|e| SnnError::io(root, e))?;
    let mut manifest: Vec<String> = Vec::new();

    for k in 0..class_count {
        let label = format!("class_{k:02}");
        let base = base_pattern(k, size, size);
        for (split, count, offset) in [
            ("train", per_class_train, 0usize),
            ("test", per_class_test, per_class_train),
        ] {
            let dir = root.join(&label).join(split);
            fs::create_dir_all(&dir).map_err(|e| SnnError::io(&dir, e))?;
            for s in 0..count {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((k as u64) << 32) | (offset + s) as u64);
                let speckle = speckle_field(size, size, &mut rng);
                let image = Image::from_fn(size, size, |x, y| {
                    (base.get(x, y) * speckle[y * size + x]).clamp(0.0, 1.0)
                });
                let name = format!("img_{s:04}.pgm");
                let path = dir.join(&name);
                write_pgm(&image, &path)?;
                manifest.push(format!("{label}/{split}/{name}"));
            }
        }
    }

    manifest.sort();
    let manifest_path = root.join("manifest.txt");
    fs::write(&manifest_path, manifest.join("\n") + "\n")
        .map_err(|e| SnnError::io(&manifest_path, e))?;
    load_dataset(root, None)
}

/// Mean squared pixel value, the signal power used for noise scaling.
pub fn signal_power(image: &Image) -> f64 {
    image.mean_square()
}

/// Standard deviation of the additive noise that realizes `snr_db`
/// against the image's own power. Infinite SNR means no noise; an
/// all-zero image has no power to scale against and is rejected.
pub fn noise_sigma(image: &Image, snr_db: f64) -> Result<f64> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(0.0);
    }
    if !snr_db.is_finite() {
        return Err(SnnError::InvalidParameter(format!(
            "bad snr value {snr_db} dB"
        )));
    }
    let power = signal_power(image);
    if power <= 0.0 {
        return Err(SnnError::Data(
            "cannot scale noise against an all-zero image (zero signal power)".into(),
        ));
    }
    Ok((power / 10f64.powf(snr_db / 10.0)).sqrt())
}

/// Zero-mean Gaussian noise field (before any clamping) whose variance
/// realizes `snr_db` against the image's signal power.
pub fn noise_field(image: &Image, snr_db: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let sigma = noise_sigma(image, snr_db)?;
    if sigma == 0.0 {
        return Ok(vec![0.0; image.pixel_count()]);
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| SnnError::Numeric(format!("bad noise distribution: {e}")))?;
    Ok((0..image.pixel_count())
        .map(|_| normal.sample(rng))
        .collect())
}

/// Add Gaussian noise at `snr_db` and clamp back to the valid intensity
/// range `[0, 1]`. Infinite SNR returns the image unchanged.
pub fn add_noise(image: &Image, snr_db: f64, rng: &mut impl Rng) -> Result<Image> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(image.clone());
    }
    let field = noise_field(image, snr_db, rng)?;
    let mut out = image.clone();
    for (p, n) in out.pixels_mut().iter_mut().zip(&field) {
        *p = (*p + n).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Write `manifest.txt`-style relative listings for a dataset rooted at
/// `root`. Used by generators; loaders do not require a manifest.
pub fn relative_manifest(root: &Path, dataset: &Dataset) -> Vec<String> {
    let mut lines: Vec<String> = dataset
        .train
        .iter()
        .chain(dataset.test.iter())
        .filter_map(|s| s.path.as_ref())
        .filter_map(|p| p.strip_prefix(root).ok())
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    lines.sort();
    lines
}

/// Per-class mean images over the training split, keyed by label.
pub fn class_means(dataset: &Dataset) -> BTreeMap<String, Image> {
    let (w, h) = dataset.geometry;
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for s in &dataset.train {
        let entry = sums
            .entry(s.label.clone())
            .or_insert_with(|| (vec![0.0; w * h], 0));
        for (acc, &p) in entry.0.iter_mut().zip(s.image.pixels()) {
            *acc += p;
        }
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(label, (sum, count))| {
            let pixels = sum.into_iter().map(|v| v / count.max(1) as f64).collect();
            (label, Image::from_pixels(w, h, pixels).expect("mean image"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_generation_is_reproducible_and_loads_back() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_synthetic(dir_a.path(), 3, 4, 2, 32, 7).unwrap();
        generate_synthetic(dir_b.path(), 3, 4, 2, 32, 7).unwrap();

        let read_all = |root: &Path| -> Vec<(String, Vec<u8>)> {
            let manifest = fs::read_to_string(root.join("manifest.txt")).unwrap();
            manifest
                .lines()
                .map(|rel| (rel.to_string(), fs::read(root.join(rel)).unwrap()))
                .collect()
        };
        assert_eq!(read_all(dir_a.path()), read_all(dir_b.path()));

        let ds = load_dataset(dir_a.path(), None).unwrap();
        assert_eq!(ds.classes, vec!["class_00", "class_01", "class_02"]);
        assert_eq!(ds.train.len(), 12);
        assert_eq!(ds.test.len(), 6);
        assert_eq!(ds.geometry, (32, 32));
    }

    #[test]
    fn synthetic_classes_are_separated_beyond_intra_class_spread() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic(dir.path(), 3, 12, 0, 32, 11).unwrap();
        let means = class_means(&ds);
        let l2 = |a: &Image, b: &Image| -> f64 {
            a.pixels()
                .iter()
                .zip(b.pixels())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        // Intra-class standard deviation, measured as RMS distance of
        // samples from their own class mean.
        let mut intra: f64 = 0.0;
        for s in &ds.train {
            intra += l2(&s.image, &means[&s.label]).powi(2);
        }
        let intra = (intra / ds.train.len() as f64).sqrt();
        let labels: Vec<&String> = means.keys().collect();
        for i in 0..labels.len() {
            for j in i + 1..labels.len() {
                let inter = l2(&means[labels[i]], &means[labels[j]]);
                assert!(
                    inter > intra,
                    "classes {} and {} separated by {inter:.3} <= intra spread {intra:.3}",
                    labels[i],
                    labels[j]
                );
            }
        }
    }

    #[test]
    fn speckle_is_unit_mean_exponential_with_local_grain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut lag = 0.0;
        let mut n = 0usize;
        let mut pairs = 0usize;
        for _ in 0..40 {
            let f = speckle_field(64, 64, &mut rng);
            for &v in &f {
                sum += v;
                sum_sq += v * v;
            }
            n += f.len();
            for y in 0..64 {
                for x in 0..63 {
                    lag += (f[y * 64 + x] - 1.0) * (f[y * 64 + x + 1] - 1.0);
                    pairs += 1;
                }
            }
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean - 1.0).abs() < 0.03, "speckle mean {mean} should be 1");
        assert!(
            (var - 1.0).abs() < 0.10,
            "speckle variance {var} should be 1"
        );
        let corr = lag / pairs as f64 / var;
        assert!(
            corr > 0.3,
            "lag-1 correlation {corr} should reflect the grain"
        );
    }

    #[test]
    fn synthetic_generation_rejects_degenerate_requests() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_synthetic(dir.path(), 1, 4, 0, 32, 7).is_err());
        assert!(generate_synthetic(dir.path(), 3, 4, 0, 8, 7).is_err());
    }

    #[test]
    fn flat_layout_splits_deterministically() {
        let root = tempfile::tempdir().unwrap();
        for class in ["a", "b"] {
            let dir = root.path().join(class);
            fs::create_dir_all(&dir).unwrap();
            for i in 0..10 {
                let img = Image::from_fn(8, 8, |x, y| ((x + y + i) % 7) as f64 / 7.0);
                write_pgm(&img, &dir.join(format!("s{i}.pgm"))).unwrap();
            }
        }
        let a = load_dataset(root.path(), Some((0.8, 5))).unwrap();
        let b = load_dataset(root.path(), Some((0.8, 5))).unwrap();
        assert_eq!(a.train.len(), 16);
        assert_eq!(a.test.len(), 4);
        let paths = |d: &Dataset| -> Vec<PathBuf> {
            d.train.iter().filter_map(|s| s.path.clone()).collect()
        };
        assert_eq!(paths(&a), paths(&b));
    }

    #[test]
    fn load_rejects_mixed_geometry() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("c").join("train");
        fs::create_dir_all(&dir).unwrap();
        write_pgm(&Image::zeros(8, 8), &dir.join("a.pgm")).unwrap();
        write_pgm(&Image::zeros(9, 8), &dir.join("b.pgm")).unwrap();
        let err = load_dataset(root.path(), None).unwrap_err();
        assert!(err.to_string().contains("geometry"));
    }

    #[test]
    fn load_rejects_missing_root_and_empty_tree() {
        let root = tempfile::tempdir().unwrap();
        assert!(load_dataset(&root.path().join("nope"), None).is_err());
        let empty = root.path().join("empty");
        fs::create_dir_all(&empty).unwrap();
        assert!(load_dataset(&empty, None).is_err());
    }

    #[test]
    fn noise_power_tracks_requested_snr() {
        let image = Image::from_fn(64, 64, |x, y| 0.3 + 0.4 * (((x * y) % 11) as f64 / 11.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let field = noise_field(&image, 0.0, &mut rng).unwrap();
        let signal = signal_power(&image);
        let noise: f64 = field.iter().map(|n| n * n).sum::<f64>() / field.len() as f64;
        // 0 dB should equalize the powers.
        assert!(
            (noise - signal).abs() / signal < 0.05,
            "noise {noise} vs signal {signal}"
        );
    }

    #[test]
    fn infinite_snr_is_identity_and_zero_image_is_rejected() {
        let image = Image::from_fn(8, 8, |x, _| x as f64 / 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let same = add_noise(&image, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(same, image);
        let zero = Image::zeros(8, 8);
        assert!(add_noise(&zero, 10.0, &mut rng).is_err());
    }

    #[test]
    fn noisy_pixels_stay_in_valid_range() {
        let image = Image::from_fn(16, 16, |x, y| ((x ^ y) % 5) as f64 / 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noisy = add_noise(&image, -5.0, &mut rng).unwrap();
        assert!(noisy.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
