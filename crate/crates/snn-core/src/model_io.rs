//! Checkpoint serialization for trained models, feature-map export,
//! and parameter/footprint statistics.
//!
//! A checkpoint is a line-oriented text header followed by a `data`
//! sentinel and the weight matrices as little-endian single-precision
//! floats, row-major, in header order. Every floating value — header
//! and payload alike — is stored at single precision, so saving,
//! loading, and saving again reproduces identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::encoding::{EncoderSpec, EncodingMethod};
use crate::error::{Result, SnnError};
use crate::matrix::{Matrix, SynapseMatrix};
use crate::neuron::{LeakMode, LifParams};
use crate::raster::{write_pgm, Image};
use crate::stdp::{classify, StdpParams, UnsupMode, UnsupervisedModel};
use crate::supervised::{
    classify_supervised, GuidanceBundle, HuberSpec, ResponseKernel, SupervisedModel,
};

/// Any trained model the toolkit can save, load, classify with, and
/// inspect.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Unsupervised(UnsupervisedModel),
    Supervised(SupervisedModel),
}

impl TrainedModel {
    pub fn mode_str(&self) -> &'static str {
        match self {
            TrainedModel::Unsupervised(m) => m.mode.as_str(),
            TrainedModel::Supervised(_) => "supervised",
        }
    }

    pub fn classes(&self) -> &[String] {
        match self {
            TrainedModel::Unsupervised(m) => &m.classes,
            TrainedModel::Supervised(m) => &m.classes,
        }
    }

    pub fn geometry(&self) -> (usize, usize) {
        match self {
            TrainedModel::Unsupervised(m) => m.geometry,
            TrainedModel::Supervised(m) => m.geometry,
        }
    }

    pub fn encoder(&self) -> &EncoderSpec {
        match self {
            TrainedModel::Unsupervised(m) => &m.encoder,
            TrainedModel::Supervised(m) => &m.encoder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrainedModel::Unsupervised(m) => m.validate(),
            TrainedModel::Supervised(m) => m.validate(),
        }
    }

    /// Class decision for one image, `None` when an unsupervised output
    /// layer stays silent. The supervised readout always decides.
    pub fn classify(&self, image: &Image, image_index: u64) -> Result<Option<usize>> {
        match self {
            TrainedModel::Unsupervised(m) => classify(m, image, image_index),
            TrainedModel::Supervised(m) => classify_supervised(m, image, image_index).map(Some),
        }
    }
}

/// Round to the stored precision.
fn q(v: f64) -> f64 {
    v as f32 as f64
}

fn fmt_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| q(v).to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn encoder_line(spec: &EncoderSpec) -> String {
    format!(
        "encoder {} {} {} {} {}",
        spec.method.as_str(),
        spec.duration,
        q(spec.f_min),
        q(spec.f_max),
        spec.seed
    )
}

fn lif_line(p: &LifParams) -> String {
    format!(
        "lif {} {} {} {} {} {} {} {} {} {}",
        q(p.p_rest),
        q(p.p_reset),
        q(p.p_th),
        q(p.leak),
        p.t_ref,
        q(p.p_inhibit),
        p.sedsi_t,
        p.leak_mode.as_str(),
        q(p.tau_m),
        q(p.r_m)
    )
}

fn stdp_line(p: &StdpParams) -> String {
    format!(
        "stdp {} {} {} {} {} {}",
        fmt_floats(&[p.a_plus, p.a_minus, p.tau_plus, p.tau_minus]),
        p.t_fore,
        p.t_back,
        fmt_floats(&[p.w_min, p.w_max]),
        fmt_floats(&[p.init_lo, p.init_hi]),
        q(p.silent_decay)
    )
}

/// Serialize a trained model to a checkpoint file.
pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    model.validate()?;
    let mut header = String::from("snncp v1\n");
    header.push_str(&format!("mode {}\n", model.mode_str()));
    let (w, h) = model.geometry();
    header.push_str(&format!("geometry {w} {h}\n"));
    let classes = model.classes();
    header.push_str(&format!("classes {}\n", classes.len()));
    for label in classes {
        if label.is_empty() || label.contains('\n') {
            return Err(SnnError::Format(format!(
                "class label {label:?} cannot be stored"
            )));
        }
        header.push_str(&format!("class {label}\n"));
    }
    header.push_str(&encoder_line(model.encoder()));
    header.push('\n');

    let mut matrices: Vec<&Matrix> = Vec::new();
    match model {
        TrainedModel::Unsupervised(m) => {
            header.push_str(&lif_line(&m.lif));
            header.push('\n');
            let map: Vec<String> = m.class_map.iter().map(|c| c.to_string()).collect();
            header.push_str(&format!("class_map {}\n", map.join(" ")));
            for (syn, stdp) in m.synapses.iter().zip(&m.stdp) {
                if syn.w_min != stdp.w_min || syn.w_max != stdp.w_max {
                    return Err(SnnError::Format(
                        "stage weight bounds disagree with its plasticity constants".into(),
                    ));
                }
                header.push_str(&stdp_line(stdp));
                header.push('\n');
                header.push_str(&format!(
                    "matrix {} {}\n",
                    syn.weights.rows(),
                    syn.weights.cols()
                ));
                matrices.push(&syn.weights);
            }
        }
        TrainedModel::Supervised(m) => {
            header.push_str(&format!("kernel {}\n", q(m.kernel.tau_s)));
            header.push_str(&format!("huber {}\n", q(m.huber.delta)));
            header.push_str(&format!("p_rest {}\n", q(m.p_rest)));
            header.push_str(&format!(
                "matrix {} {}\n",
                m.weights.rows(),
                m.weights.cols()
            ));
            matrices.push(&m.weights);
            header.push_str(&format!(
                "matrix {} {}\n",
                m.guidance.traces.rows(),
                m.guidance.traces.cols()
            ));
            matrices.push(&m.guidance.traces);
        }
    }
    header.push_str("data\n");

    let mut bytes = header.into_bytes();
    for matrix in matrices {
        for &v in matrix.values() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| SnnError::io(path, e))
}

/// Sequential reader over header lines with positioned errors.
struct HeaderLines<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> HeaderLines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| SnnError::Format("checkpoint header ended early".into()))
    }

    /// Next line, which must start with `key ` (or equal `key`).
    fn expect(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        if line == key {
            return Ok("");
        }
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| {
                SnnError::Format(format!(
                    "checkpoint line {}: expected '{key}', found '{line}'",
                    self.line_no
                ))
            })
    }

    fn bad(&self, message: &str) -> SnnError {
        SnnError::Format(format!("checkpoint line {}: {message}", self.line_no))
    }

    /// Next line keyed `key`, parsed into exactly `expected` values.
    fn expect_fields<T: std::str::FromStr>(
        &mut self,
        key: &str,
        expected: usize,
    ) -> Result<Vec<T>> {
        let rest = self.expect(key)?;
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() != expected {
            return Err(self.bad(&format!(
                "expected {expected} fields, found {}",
                fields.len()
            )));
        }
        fields
            .into_iter()
            .map(|f| {
                f.parse::<T>()
                    .map_err(|_| self.bad(&format!("bad value '{f}'")))
            })
            .collect()
    }
}

/// Deserialize a checkpoint file. Extra bytes after the declared
/// matrices and short payloads are both rejected.
pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| SnnError::io(path, e))?;
    let sentinel = b"\ndata\n";
    let data_at = bytes
        .windows(sentinel.len())
        .position(|w| w == sentinel)
        .ok_or_else(|| SnnError::Format("checkpoint has no data sentinel".into()))?;
    let header = std::str::from_utf8(&bytes[..data_at])
        .map_err(|_| SnnError::Format("checkpoint header is not text".into()))?;
    let payload = &bytes[data_at + sentinel.len()..];

    let mut reader = HeaderLines {
        lines: header.lines(),
        line_no: 0,
    };
    let magic = reader.next_line()?;
    if magic != "snncp v1" {
        return Err(reader.bad(&format!("unrecognized checkpoint magic '{magic}'")));
    }
    let mode = reader.expect("mode")?.to_string();
    let geo = reader.expect_fields::<usize>("geometry", 2)?;
    let geometry = (geo[0], geo[1]);
    let class_count: usize = reader.expect_fields("classes", 1)?[0];
    if class_count == 0 {
        return Err(reader.bad("checkpoint declares zero classes"));
    }
    let mut classes = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        let label = reader.expect("class")?;
        if label.is_empty() {
            return Err(reader.bad("empty class label"));
        }
        classes.push(label.to_string());
    }

    let enc = reader.expect("encoder")?;
    let enc_fields: Vec<&str> = enc.split_whitespace().collect();
    if enc_fields.len() != 5 {
        return Err(reader.bad("encoder line needs 5 fields"));
    }
    let encoder = EncoderSpec {
        method: EncodingMethod::parse(enc_fields[0])?,
        duration: enc_fields[1]
            .parse()
            .map_err(|_| reader.bad("bad encoder window"))?,
        f_min: enc_fields[2]
            .parse()
            .map_err(|_| reader.bad("bad encoder f_min"))?,
        f_max: enc_fields[3]
            .parse()
            .map_err(|_| reader.bad("bad encoder f_max"))?,
        seed: enc_fields[4]
            .parse()
            .map_err(|_| reader.bad("bad encoder seed"))?,
    };

    let mut offset = 0usize;
    let mut take_matrix = |rows: usize, cols: usize| -> Result<Matrix> {
        let need = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| SnnError::Format("matrix dimensions overflow".into()))?;
        if payload.len() < offset + need {
            return Err(SnnError::Format(format!(
                "checkpoint payload truncated: need {need} bytes for a {rows}x{cols} matrix, \
                 {} remain",
                payload.len() - offset
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for chunk in payload[offset..offset + need].chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        offset += need;
        Matrix::from_vec(rows, cols, data)
    };

    let model = match mode.as_str() {
        "unsup_single" | "unsup_bilayer" => {
            let unsup_mode = UnsupMode::parse(&mode)?;
            let lif_rest = reader.expect("lif")?;
            let lf: Vec<&str> = lif_rest.split_whitespace().collect();
            if lf.len() != 10 {
                return Err(reader.bad("lif line needs 10 fields"));
            }
            let parse_f = |s: &str, what: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| reader.bad(&format!("bad lif {what}")))
            };
            let lif = LifParams {
                p_rest: parse_f(lf[0], "p_rest")?,
                p_reset: parse_f(lf[1], "p_reset")?,
                p_th: parse_f(lf[2], "p_th")?,
                leak: parse_f(lf[3], "leak")?,
                t_ref: lf[4].parse().map_err(|_| reader.bad("bad lif t_ref"))?,
                p_inhibit: parse_f(lf[5], "p_inhibit")?,
                sedsi_t: lf[6].parse().map_err(|_| reader.bad("bad lif window"))?,
                leak_mode: LeakMode::parse(lf[7])?,
                tau_m: parse_f(lf[8], "tau_m")?,
                r_m: parse_f(lf[9], "r_m")?,
            };
            let class_map: Vec<usize> = reader.expect_fields("class_map", class_count)?;
            let stage_count = match unsup_mode {
                UnsupMode::Single => 1,
                UnsupMode::Bilayer => 2,
            };
            let mut synapses = Vec::with_capacity(stage_count);
            let mut stdp = Vec::with_capacity(stage_count);
            for _ in 0..stage_count {
                let sf: Vec<&str> = reader.expect("stdp")?.split_whitespace().collect();
                if sf.len() != 11 {
                    return Err(reader.bad("stdp line needs 11 fields"));
                }
                let parse_f = |s: &str, what: &str| -> Result<f64> {
                    s.parse()
                        .map_err(|_| reader.bad(&format!("bad stdp {what}")))
                };
                let params = StdpParams {
                    a_plus: parse_f(sf[0], "a_plus")?,
                    a_minus: parse_f(sf[1], "a_minus")?,
                    tau_plus: parse_f(sf[2], "tau_plus")?,
                    tau_minus: parse_f(sf[3], "tau_minus")?,
                    t_fore: sf[4].parse().map_err(|_| reader.bad("bad stdp t_fore"))?,
                    t_back: sf[5].parse().map_err(|_| reader.bad("bad stdp t_back"))?,
                    w_min: parse_f(sf[6], "w_min")?,
                    w_max: parse_f(sf[7], "w_max")?,
                    init_lo: parse_f(sf[8], "init_lo")?,
                    init_hi: parse_f(sf[9], "init_hi")?,
                    silent_decay: parse_f(sf[10], "silent_decay")?,
                };
                let dims = reader.expect_fields::<usize>("matrix", 2)?;
                let weights = take_matrix(dims[0], dims[1])?;
                synapses.push(SynapseMatrix::from_matrix(
                    weights,
                    params.w_min,
                    params.w_max,
                )?);
                stdp.push(params);
            }
            TrainedModel::Unsupervised(UnsupervisedModel {
                mode: unsup_mode,
                geometry,
                classes,
                class_map,
                synapses,
                stdp,
                lif,
                encoder,
            })
        }
        "supervised" => {
            let tau_s: f64 = reader.expect_fields("kernel", 1)?[0];
            let delta: f64 = reader.expect_fields("huber", 1)?[0];
            let p_rest: f64 = reader.expect_fields("p_rest", 1)?[0];
            let dims = reader.expect_fields::<usize>("matrix", 2)?;
            let weights = take_matrix(dims[0], dims[1])?;
            let dims = reader.expect_fields::<usize>("matrix", 2)?;
            let traces = take_matrix(dims[0], dims[1])?;
            TrainedModel::Supervised(SupervisedModel {
                geometry,
                classes,
                weights,
                kernel: ResponseKernel { tau_s },
                huber: HuberSpec { delta },
                p_rest,
                guidance: GuidanceBundle::new(traces)?,
                encoder,
            })
        }
        other => {
            return Err(SnnError::Format(format!(
                "unknown checkpoint mode '{other}'"
            )))
        }
    };

    if let Some(extra) = reader.lines.next() {
        return Err(SnnError::Format(format!(
            "unexpected checkpoint header line '{extra}'"
        )));
    }
    if offset != payload.len() {
        return Err(SnnError::Format(format!(
            "checkpoint has {} trailing bytes after the declared matrices",
            payload.len() - offset
        )));
    }
    model.validate()?;
    Ok(model)
}

/// Parameter count and footprint of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelStats {
    /// Total learned weights across all stages.
    pub parameters: usize,
    /// Stored size of those weights at single precision.
    pub memory_bytes: usize,
    /// Synaptic operations to process one stimulus window: every weight
    /// is visited once per time unit.
    pub ops_per_stimulus: u64,
}

/// Count learned parameters (guidance targets are not parameters).
pub fn model_stats(model: &TrainedModel) -> ModelStats {
    let parameters: usize = match model {
        TrainedModel::Unsupervised(m) => m
            .synapses
            .iter()
            .map(|s| s.weights.rows() * s.weights.cols())
            .sum(),
        TrainedModel::Supervised(m) => m.weights.rows() * m.weights.cols(),
    };
    let duration = model.encoder().duration as u64;
    ModelStats {
        parameters,
        memory_bytes: parameters * 4,
        ops_per_stimulus: parameters as u64 * duration,
    }
}

/// Write one grayscale map per output neuron: its incoming weight
/// column reshaped to the input geometry and min-max scaled to the full
/// gray range. A constant column maps to black. For two-stage models
/// the effective input-to-output matrix (the stage product) is used.
/// Returns the written paths in neuron order.
pub fn export_feature_maps(model: &TrainedModel, dir: &Path) -> Result<Vec<PathBuf>> {
    model.validate()?;
    let effective: Matrix = match model {
        TrainedModel::Unsupervised(m) => match m.synapses.as_slice() {
            [single] => single.weights.clone(),
            [first, second] => first.weights.matmul(&second.weights)?,
            _ => return Err(SnnError::Dimension("unexpected stage count".into())),
        },
        TrainedModel::Supervised(m) => m.weights.clone(),
    };
    let (w, h) = model.geometry();
    if effective.rows() != w * h {
        return Err(SnnError::Dimension(format!(
            "effective matrix has {} rows but the geometry {}x{} implies {}",
            effective.rows(),
            w,
            h,
            w * h
        )));
    }
    fs::create_dir_all(dir).map_err(|e| SnnError::io(dir, e))?;
    let mut written = Vec::with_capacity(effective.cols());
    for j in 0..effective.cols() {
        let column = effective.column(j);
        let (lo, hi) = column
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        let image = Image::from_fn(w, h, |x, y| {
            if range <= 0.0 {
                0.0
            } else {
                (column[y * w + x] - lo) / range
            }
        });
        let path = dir.join(format!("feature_{j:03}.pgm"));
        write_pgm(&image, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unsup_single_model() -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stdp = StdpParams::default();
        let syn = SynapseMatrix::random(
            12,
            3,
            stdp.init_lo,
            stdp.init_hi,
            stdp.w_min,
            stdp.w_max,
            &mut rng,
        )
        .unwrap();
        TrainedModel::Unsupervised(UnsupervisedModel {
            mode: UnsupMode::Single,
            geometry: (4, 3),
            classes: vec!["a".into(), "b".into(), "c".into()],
            class_map: vec![2, 0, 1],
            synapses: vec![syn],
            stdp: vec![stdp],
            lif: LifParams::default(),
            encoder: EncoderSpec::default(),
        })
    }

    fn unsup_bilayer_model() -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s1 = StdpParams::default();
        let s2 = StdpParams {
            a_plus: 8.0,
            a_minus: 3.0,
            w_min: 0.0,
            w_max: 150.0,
            init_lo: 90.0,
            init_hi: 120.0,
            ..StdpParams::default()
        };
        let syn01 =
            SynapseMatrix::random(12, 5, s1.init_lo, s1.init_hi, s1.w_min, s1.w_max, &mut rng)
                .unwrap();
        let syn12 =
            SynapseMatrix::random(5, 2, s2.init_lo, s2.init_hi, s2.w_min, s2.w_max, &mut rng)
                .unwrap();
        TrainedModel::Unsupervised(UnsupervisedModel {
            mode: UnsupMode::Bilayer,
            geometry: (4, 3),
            classes: vec!["x".into(), "y".into()],
            class_map: vec![1, 0],
            synapses: vec![syn01, syn12],
            stdp: vec![s1, s2],
            lif: LifParams::default(),
            encoder: EncoderSpec::default(),
        })
    }

    fn supervised_model() -> TrainedModel {
        let weights = Matrix::from_fn(12, 2, |i, j| (i as f64 - 5.0) * 0.01 + j as f64 * 0.2);
        let traces = Matrix::from_fn(2, 71, |k, t| (k as f64 + 1.0) * (t as f64) * 0.05);
        TrainedModel::Supervised(SupervisedModel {
            geometry: (4, 3),
            classes: vec!["x".into(), "y".into()],
            weights,
            kernel: ResponseKernel::default(),
            huber: HuberSpec::default(),
            p_rest: 0.0,
            guidance: GuidanceBundle::new(traces).unwrap(),
            encoder: EncoderSpec::default(),
        })
    }

    fn round_trip(model: &TrainedModel) {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first.snncp");
        let second = dir.path().join("second.snncp");
        save_checkpoint(model, &first).unwrap();
        let loaded = load_checkpoint(&first).unwrap();
        save_checkpoint(&loaded, &second).unwrap();
        let a = fs::read(&first).unwrap();
        let b = fs::read(&second).unwrap();
        assert_eq!(a, b, "save -> load -> save must be byte-identical");
        assert_eq!(loaded.mode_str(), model.mode_str());
        assert_eq!(loaded.classes(), model.classes());
        assert_eq!(loaded.geometry(), model.geometry());
    }

    #[test]
    fn checkpoints_round_trip_for_all_modes() {
        round_trip(&unsup_single_model());
        round_trip(&unsup_bilayer_model());
        round_trip(&supervised_model());
    }

    #[test]
    fn truncated_and_padded_payloads_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.snncp");
        save_checkpoint(&unsup_single_model(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        let cut = dir.path().join("cut.snncp");
        fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_checkpoint(&cut).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let padded = dir.path().join("padded.snncp");
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0, 0, 0, 0]);
        fs::write(&padded, longer).unwrap();
        let err = load_checkpoint(&padded).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn bad_headers_are_rejected_with_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.snncp");
        save_checkpoint(&unsup_single_model(), &path).unwrap();
        let text = fs::read(&path).unwrap();

        let wrong_magic = dir.path().join("magic.snncp");
        let mut bytes = text.clone();
        bytes[0] = b'x';
        fs::write(&wrong_magic, bytes).unwrap();
        assert!(load_checkpoint(&wrong_magic).is_err());

        let no_sentinel = dir.path().join("nosent.snncp");
        fs::write(&no_sentinel, b"snncp v1\nmode unsup_single\n").unwrap();
        let err = load_checkpoint(&no_sentinel).unwrap_err();
        assert!(err.to_string().contains("sentinel"), "{err}");
    }

    #[test]
    fn stats_count_every_stage() {
        let stats = model_stats(&unsup_single_model());
        assert_eq!(stats.parameters, 36);
        assert_eq!(stats.memory_bytes, 144);
        assert_eq!(stats.ops_per_stimulus, 36 * 70);
        let stats = model_stats(&unsup_bilayer_model());
        assert_eq!(stats.parameters, 12 * 5 + 5 * 2);
        let stats = model_stats(&supervised_model());
        assert_eq!(stats.parameters, 24);
    }

    #[test]
    fn feature_maps_cover_every_output_neuron() {
        let dir = tempfile::tempdir().unwrap();
        let paths = export_feature_maps(&unsup_single_model(), dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            assert!(p.exists());
        }
        // Two-stage models export through the stage product, still one
        // map per output neuron at input geometry.
        let paths = export_feature_maps(&unsup_bilayer_model(), dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let img = crate::raster::load_image(&paths[0]).unwrap();
        assert_eq!((img.width(), img.height()), (4, 3));
    }

    #[test]
    fn constant_feature_columns_map_to_black() {
        let dir = tempfile::tempdir().unwrap();
        let weights = Matrix::filled(12, 1, 0.7);
        let model = TrainedModel::Supervised(SupervisedModel {
            geometry: (4, 3),
            classes: vec!["only".into()],
            weights,
            kernel: ResponseKernel::default(),
            huber: HuberSpec::default(),
            p_rest: 0.0,
            guidance: GuidanceBundle::new(Matrix::filled(1, 71, 0.0)).unwrap(),
            encoder: EncoderSpec::default(),
        });
        let paths = export_feature_maps(&model, dir.path()).unwrap();
        let img = crate::raster::load_image(&paths[0]).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0.0));
    }
}
