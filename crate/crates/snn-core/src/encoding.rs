//! Image-to-spike conversion: receptive-field filtering, min-max
//! normalization, and the two rate coders (Bernoulli and evenly spaced).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SnnError};
use crate::raster::Image;

/// Fixed 5x5 center-weighted on/off kernel applied before rate coding.
///
/// The center and the plus-shaped neighborhood excite, the outer ring
/// inhibits, and the entries sum to exactly 1 so a flat region passes
/// through unchanged. The kernel is centrally symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptiveFieldKernel {
    weights: [[f64; 5]; 5],
}

impl Default for ReceptiveFieldKernel {
    fn default() -> Self {
        ReceptiveFieldKernel {
            weights: [
                [-0.5, -0.125, 0.125, -0.125, -0.5],
                [-0.125, 0.125, 0.5, 0.125, -0.125],
                [0.125, 0.5, 1.0, 0.5, 0.125],
                [-0.125, 0.125, 0.5, 0.125, -0.125],
                [-0.5, -0.125, 0.125, -0.125, -0.5],
            ],
        }
    }
}

impl ReceptiveFieldKernel {
    /// Kernel entry at (row, col), row/col in `0..5`.
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row][col]
    }

    /// Sum of all 25 entries (1.0 for the default kernel).
    pub fn sum(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }

    /// Convolve the image with the kernel: zero padding, stride 1, output
    /// the same size as the input. Output values may be negative.
    pub fn apply(&self, image: &Image) -> Image {
        let (w, h) = (image.width() as isize, image.height() as isize);
        Image::from_fn(image.width(), image.height(), |x, y| {
            let mut acc = 0.0;
            for ky in 0..5isize {
                let sy = y as isize + ky - 2;
                if sy < 0 || sy >= h {
                    continue;
                }
                for kx in 0..5isize {
                    let sx = x as isize + kx - 2;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    acc += self.weights[ky as usize][kx as usize]
                        * image.get(sx as usize, sy as usize);
                }
            }
            acc
        })
    }
}

/// Min-max normalize pixel values to `[0, 1]`.
///
/// A constant image (zero range) maps to all zeros, so a featureless
/// input produces no spikes downstream.
pub fn normalize(image: &Image) -> Image {
    let (lo, hi) = image.min_max();
    let range = hi - lo;
    if range <= 0.0 {
        return Image::zeros(image.width(), image.height());
    }
    Image::from_fn(image.width(), image.height(), |x, y| {
        (image.get(x, y) - lo) / range
    })
}

/// Spike train over `duration + 1` integer time units (`0..=duration`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    duration: usize,
    fires: Vec<bool>,
}

impl SpikeTrain {
    /// Train with no spikes.
    pub fn silent(duration: usize) -> Self {
        SpikeTrain {
            duration,
            fires: vec![false; duration + 1],
        }
    }

    /// Train firing at the given time units.
    pub fn from_times(duration: usize, times: &[usize]) -> Result<Self> {
        let mut train = SpikeTrain::silent(duration);
        for &t in times {
            if t > duration {
                return Err(SnnError::InvalidParameter(format!(
                    "spike time {t} exceeds duration {duration}"
                )));
            }
            train.fires[t] = true;
        }
        Ok(train)
    }

    /// Last representable time unit.
    pub fn duration(&self) -> usize {
        self.duration
    }

    #[inline]
    pub fn fired(&self, t: usize) -> bool {
        self.fires.get(t).copied().unwrap_or(false)
    }

    pub fn set_fired(&mut self, t: usize) {
        debug_assert!(t <= self.duration);
        self.fires[t] = true;
    }

    /// Number of spikes in the train.
    pub fn count(&self) -> usize {
        self.fires.iter().filter(|f| **f).count()
    }

    /// Time unit of the first spike, if any.
    pub fn first_spike(&self) -> Option<usize> {
        self.fires.iter().position(|f| *f)
    }

    /// All spike time units in increasing order.
    pub fn times(&self) -> Vec<usize> {
        self.fires
            .iter()
            .enumerate()
            .filter_map(|(t, f)| f.then_some(t))
            .collect()
    }

    /// True when the train has no spikes at all.
    pub fn is_silent(&self) -> bool {
        !self.fires.iter().any(|f| *f)
    }
}

/// Per-pixel spike trains for one encoded image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeField {
    width: usize,
    height: usize,
    duration: usize,
    trains: Vec<SpikeTrain>,
}

impl SpikeField {
    pub fn new(
        width: usize,
        height: usize,
        trains: Vec<SpikeTrain>,
        duration: usize,
    ) -> Result<Self> {
        if trains.len() != width * height {
            return Err(SnnError::Dimension(format!(
                "{} trains cannot cover a {width}x{height} field",
                trains.len()
            )));
        }
        if trains.iter().any(|t| t.duration() != duration) {
            return Err(SnnError::Dimension(
                "all spike trains in a field must share one duration".into(),
            ));
        }
        Ok(SpikeField {
            width,
            height,
            duration,
            trains,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn duration(&self) -> usize {
        self.duration
    }

    /// Train for the pixel at (x, y).
    pub fn train(&self, x: usize, y: usize) -> &SpikeTrain {
        &self.trains[y * self.width + x]
    }

    /// All trains, row-major.
    pub fn trains(&self) -> &[SpikeTrain] {
        &self.trains
    }

    /// Total spike count across all pixels.
    pub fn total_spikes(&self) -> usize {
        self.trains.iter().map(|t| t.count()).sum()
    }

    /// Serialize to the `spikefield v1` text format: a header line with
    /// width, height, and duration, then one line of space-separated
    /// firing times per pixel (row-major; silent pixels get empty lines).
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "spikefield v1 {} {} {}\n",
            self.width, self.height, self.duration
        ));
        for train in &self.trains {
            let times: Vec<String> = train.times().iter().map(|t| t.to_string()).collect();
            out.push_str(&times.join(" "));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| SnnError::io(path, e))
    }

    /// Parse the `spikefield v1` text format.
    pub fn read_text(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SnnError::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| {
            SnnError::Format(format!("{}: empty spike-field file", path.display()))
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "spikefield" || fields[1] != "v1" {
            return Err(SnnError::Format(format!(
                "{}: bad spike-field header `{header}`",
                path.display()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                SnnError::Format(format!("{}: bad {what} `{s}` in header", path.display()))
            })
        };
        let width = parse(fields[2], "width")?;
        let height = parse(fields[3], "height")?;
        let duration = parse(fields[4], "duration")?;
        let mut trains = Vec::with_capacity(width * height);
        for (i, line) in lines.enumerate() {
            if i >= width * height {
                return Err(SnnError::Format(format!(
                    "{}: more pixel lines than width*height",
                    path.display()
                )));
            }
            let mut times = Vec::new();
            for tok in line.split_whitespace() {
                let t: usize = tok.parse().map_err(|_| {
                    SnnError::Format(format!("{}: bad spike time `{tok}`", path.display()))
                })?;
                times.push(t);
            }
            trains
                .push(SpikeTrain::from_times(duration, &times).map_err(|e| {
                    SnnError::Format(format!("{}: pixel {i}: {e}", path.display()))
                })?);
        }
        if trains.len() != width * height {
            return Err(SnnError::Format(format!(
                "{}: expected {} pixel lines, found {}",
                path.display(),
                width * height,
                trains.len()
            )));
        }
        SpikeField::new(width, height, trains, duration)
    }
}

/// Which rate coder converts normalized intensities to spike times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingMethod {
    /// Independent Bernoulli draw per time unit with probability `p`.
    Random,
    /// Evenly spaced spikes at a frequency interpolated from `p`.
    Deterministic,
}

impl EncodingMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EncodingMethod::Random => "random",
            EncodingMethod::Deterministic => "deterministic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(EncodingMethod::Random),
            "deterministic" => Ok(EncodingMethod::Deterministic),
            other => Err(SnnError::InvalidParameter(format!(
                "unknown encoding method `{other}` (expected `random` or `deterministic`)"
            ))),
        }
    }
}

/// Everything needed to turn an image into a spike field reproducibly.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub method: EncodingMethod,
    /// Encoding window length in time units; spikes land in `1..=duration`.
    pub duration: usize,
    /// Frequency mapped to intensity 0 by the deterministic coder.
    pub f_min: f64,
    /// Frequency mapped to intensity 1 by the deterministic coder.
    pub f_max: f64,
    /// Base RNG seed; each image index selects its own stream.
    pub seed: u64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            method: EncodingMethod::Random,
            duration: 70,
            f_min: 1.0,
            f_max: 20.0,
            seed: 0,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.duration == 0 {
            return Err(SnnError::InvalidParameter(
                "encoder duration must be >= 1".into(),
            ));
        }
        if !(self.f_min.is_finite()
            && self.f_max.is_finite()
            && 0.0 < self.f_min
            && self.f_min <= self.f_max)
        {
            return Err(SnnError::InvalidParameter(format!(
                "frequency range [{}, {}] must satisfy 0 < f_min <= f_max",
                self.f_min, self.f_max
            )));
        }
        Ok(())
    }

    /// RNG stream for one image index. Same seed + same index is always
    /// the same stream, so encoding is reproducible per image.
    pub fn rng_for_image(&self, image_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(image_index);
        rng
    }
}

/// Bernoulli rate coder: at each time unit in `1..=duration`, fire with
/// probability `p`. Expected spike count is `p * duration`.
pub fn encode_random(p: f64, duration: usize, rng: &mut impl Rng) -> Result<SpikeTrain> {
    check_intensity(p)?;
    let mut train = SpikeTrain::silent(duration);
    for t in 1..=duration {
        if rng.gen::<f64>() < p {
            train.set_fired(t);
        }
    }
    Ok(train)
}

/// Frequency interpolated from intensity by the deterministic coder:
/// `f_min + p * (f_max - f_min)`.
pub fn deterministic_frequency(p: f64, f_min: f64, f_max: f64) -> f64 {
    f_min + p * (f_max - f_min)
}

/// Evenly spaced coder: the interpolated frequency fixes an inter-spike
/// interval of `floor(duration / f)` time units, and spikes land at each
/// multiple of that interval up to `duration`. Intensity 0 still yields
/// exactly one spike (at `duration` with default frequencies), so only an
/// all-zero normalized image stays fully silent after a constant-range
/// collapse.
pub fn encode_deterministic(p: f64, duration: usize, f_min: f64, f_max: f64) -> Result<SpikeTrain> {
    check_intensity(p)?;
    let f = deterministic_frequency(p, f_min, f_max);
    // Interval between spikes; guard against frequencies above the window
    // length, which would otherwise floor to a zero interval.
    let interval = ((duration as f64 / f).floor() as usize).max(1);
    let mut train = SpikeTrain::silent(duration);
    let mut t = interval;
    while t <= duration {
        train.set_fired(t);
        t += interval;
    }
    Ok(train)
}

fn check_intensity(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(SnnError::InvalidParameter(format!(
            "intensity {p} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Full encoding pipeline for one image: receptive-field filtering,
/// min-max normalization, then per-pixel rate coding. `image_index`
/// selects the RNG stream so datasets encode reproducibly per position.
pub fn encode_image(image: &Image, spec: &EncoderSpec, image_index: u64) -> Result<SpikeField> {
    spec.validate()?;
    let rates = normalize(&ReceptiveFieldKernel::default().apply(image));
    let mut rng = spec.rng_for_image(image_index);
    let mut trains = Vec::with_capacity(rates.pixel_count());
    for y in 0..rates.height() {
        for x in 0..rates.width() {
            let p = rates.get(x, y);
            let train = match spec.method {
                EncodingMethod::Random => encode_random(p, spec.duration, &mut rng)?,
                EncodingMethod::Deterministic => {
                    encode_deterministic(p, spec.duration, spec.f_min, spec.f_max)?
                }
            };
            trains.push(train);
        }
    }
    SpikeField::new(image.width(), image.height(), trains, spec.duration)
}
