//! Run configuration: a strict `key = value` file format carrying every
//! tunable constant, with defaults matching the reference operating
//! point. Unknown keys, duplicate keys, and malformed values are
//! rejected with their line number.

use std::fs;
use std::path::Path;

use crate::encoding::{EncoderSpec, EncodingMethod};
use crate::error::{Result, SnnError};
use crate::neuron::{LeakMode, LifParams};
use crate::stdp::{BilayerTrainConfig, StdpParams, SubsegmentSchedule};
use crate::supervised::{HuberSpec, LrSchedule, ResponseKernel, SupervisedTrainConfig};

/// Every tunable constant of the toolkit, in one flat bag. The typed
/// parameter structs are derived through the accessor methods.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Input size (pixels); informational, datasets carry the real one.
    pub m: usize,
    /// Output classes; informational, datasets carry the real one.
    pub n: usize,
    /// Hidden layer width for the two-stage trainer.
    pub hidden: usize,
    /// Stimulus window in time units.
    pub sedsi_t: usize,

    // Membrane dynamics.
    pub t_ref: usize,
    pub p_rest: f64,
    pub p_reset: f64,
    pub p_th: f64,
    pub leak: f64,
    pub p_inhibit: f64,
    pub leak_mode: LeakMode,
    pub tau_m: f64,
    pub r_m: f64,

    // Encoder.
    pub encoder: EncodingMethod,
    pub f_min: f64,
    pub f_max: f64,
    pub seed: u64,

    // Plasticity, first (or only) stage.
    pub a_plus: f64,
    pub a_minus: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub t_fore: usize,
    pub t_back: usize,
    pub w_min: f64,
    pub w_max: f64,
    pub init_lo: f64,
    pub init_hi: f64,
    pub silent_decay: f64,

    // Plasticity overrides for the hidden-to-output stage.
    pub a_plus_12: f64,
    pub a_minus_12: f64,
    pub tau_plus_12: f64,
    pub tau_minus_12: f64,
    pub w_min_12: f64,
    pub w_max_12: f64,
    pub init_lo_12: f64,
    pub init_hi_12: f64,

    // Subsegment batching for the two-stage trainer.
    pub subsegments: usize,
    pub correlation_halfwidth: usize,

    // Supervised training.
    pub batch_size: usize,
    pub max_steps: usize,
    pub lr_ini: f64,
    pub lr_mid: f64,
    pub tau_s: f64,
    pub huber_delta: f64,

    // Dataset handling.
    pub split_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lif = LifParams::default();
        let encoder = EncoderSpec::default();
        let stdp = StdpParams::default();
        let bilayer = BilayerTrainConfig::default();
        let stdp12 = bilayer.stdp_output;
        let schedule = bilayer.schedule;
        let sup = SupervisedTrainConfig::default();
        RunConfig {
            m: 16_384,
            n: 3,
            hidden: bilayer.hidden_size,
            sedsi_t: lif.sedsi_t,
            t_ref: lif.t_ref,
            p_rest: lif.p_rest,
            p_reset: lif.p_reset,
            p_th: lif.p_th,
            leak: lif.leak,
            p_inhibit: lif.p_inhibit,
            leak_mode: lif.leak_mode,
            tau_m: lif.tau_m,
            r_m: lif.r_m,
            encoder: encoder.method,
            f_min: encoder.f_min,
            f_max: encoder.f_max,
            seed: encoder.seed,
            a_plus: stdp.a_plus,
            a_minus: stdp.a_minus,
            tau_plus: stdp.tau_plus,
            tau_minus: stdp.tau_minus,
            t_fore: stdp.t_fore,
            t_back: stdp.t_back,
            w_min: stdp.w_min,
            w_max: stdp.w_max,
            init_lo: stdp.init_lo,
            init_hi: stdp.init_hi,
            silent_decay: stdp.silent_decay,
            a_plus_12: stdp12.a_plus,
            a_minus_12: stdp12.a_minus,
            tau_plus_12: stdp12.tau_plus,
            tau_minus_12: stdp12.tau_minus,
            w_min_12: stdp12.w_min,
            w_max_12: stdp12.w_max,
            init_lo_12: stdp12.init_lo,
            init_hi_12: stdp12.init_hi,
            subsegments: schedule.count,
            correlation_halfwidth: schedule.correlation_halfwidth,
            batch_size: sup.batch_size,
            max_steps: sup.max_steps,
            lr_ini: 1e-3,
            lr_mid: 1e-4,
            tau_s: sup.kernel.tau_s,
            huber_delta: sup.huber.delta,
            split_ratio: 0.8,
        }
    }
}

fn parse_value<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| SnnError::Config {
        line,
        message: format!("invalid value '{value}' for key '{key}'"),
    })
}

impl RunConfig {
    /// Parse a configuration file's text; missing keys keep defaults.
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| SnnError::Config {
                line,
                message: format!("expected 'key = value', found '{content}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(SnnError::Config {
                    line,
                    message: format!("key '{key}' has no value"),
                });
            }
            if seen.iter().any(|s| s == key) {
                return Err(SnnError::Config {
                    line,
                    message: format!("duplicate key '{key}'"),
                });
            }
            seen.push(key.to_string());
            cfg.apply(key, value, line)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| SnnError::io(path, e))?;
        let cfg = RunConfig::parse_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "m" => self.m = parse_value(value, key, line)?,
            "n" => self.n = parse_value(value, key, line)?,
            "hidden" => self.hidden = parse_value(value, key, line)?,
            "sedsi_t" => self.sedsi_t = parse_value(value, key, line)?,
            "t_ref" => self.t_ref = parse_value(value, key, line)?,
            "p_rest" => self.p_rest = parse_value(value, key, line)?,
            "p_reset" => self.p_reset = parse_value(value, key, line)?,
            "p_th" => self.p_th = parse_value(value, key, line)?,
            "leak" => self.leak = parse_value(value, key, line)?,
            "p_inhibit" => self.p_inhibit = parse_value(value, key, line)?,
            "leak_mode" => {
                self.leak_mode = LeakMode::parse(value).map_err(|e| SnnError::Config {
                    line,
                    message: e.to_string(),
                })?
            }
            "tau_m" => self.tau_m = parse_value(value, key, line)?,
            "r_m" => self.r_m = parse_value(value, key, line)?,
            "encoder" => {
                self.encoder = EncodingMethod::parse(value).map_err(|e| SnnError::Config {
                    line,
                    message: e.to_string(),
                })?
            }
            "f_min" => self.f_min = parse_value(value, key, line)?,
            "f_max" => self.f_max = parse_value(value, key, line)?,
            "seed" => self.seed = parse_value(value, key, line)?,
            "a_plus" => self.a_plus = parse_value(value, key, line)?,
            "a_minus" => self.a_minus = parse_value(value, key, line)?,
            "tau_plus" => self.tau_plus = parse_value(value, key, line)?,
            "tau_minus" => self.tau_minus = parse_value(value, key, line)?,
            "t_fore" => self.t_fore = parse_value(value, key, line)?,
            "t_back" => self.t_back = parse_value(value, key, line)?,
            "w_min" => self.w_min = parse_value(value, key, line)?,
            "w_max" => self.w_max = parse_value(value, key, line)?,
            "init_lo" => self.init_lo = parse_value(value, key, line)?,
            "init_hi" => self.init_hi = parse_value(value, key, line)?,
            "silent_decay" => self.silent_decay = parse_value(value, key, line)?,
            "a_plus_12" => self.a_plus_12 = parse_value(value, key, line)?,
            "a_minus_12" => self.a_minus_12 = parse_value(value, key, line)?,
            "tau_plus_12" => self.tau_plus_12 = parse_value(value, key, line)?,
            "tau_minus_12" => self.tau_minus_12 = parse_value(value, key, line)?,
            "w_min_12" => self.w_min_12 = parse_value(value, key, line)?,
            "w_max_12" => self.w_max_12 = parse_value(value, key, line)?,
            "init_lo_12" => self.init_lo_12 = parse_value(value, key, line)?,
            "init_hi_12" => self.init_hi_12 = parse_value(value, key, line)?,
            "subsegments" => self.subsegments = parse_value(value, key, line)?,
            "correlation_halfwidth" => self.correlation_halfwidth = parse_value(value, key, line)?,
            "batch_size" => self.batch_size = parse_value(value, key, line)?,
            "max_steps" => self.max_steps = parse_value(value, key, line)?,
            "lr_ini" => self.lr_ini = parse_value(value, key, line)?,
            "lr_mid" => self.lr_mid = parse_value(value, key, line)?,
            "tau_s" => self.tau_s = parse_value(value, key, line)?,
            "huber_delta" => self.huber_delta = parse_value(value, key, line)?,
            "split_ratio" => self.split_ratio = parse_value(value, key, line)?,
            _ => {
                return Err(SnnError::Config {
                    line,
                    message: format!("unknown key '{key}'"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(SnnError::InvalidParameter(
                "input size and class count must be at least 1".into(),
            ));
        }
        self.lif_params().validate()?;
        self.encoder_spec().validate()?;
        self.stdp_params().validate()?;
        self.stdp12_params().validate()?;
        self.schedule().validate()?;
        self.supervised_config(1).validate()?;
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(SnnError::InvalidParameter(format!(
                "split ratio {} outside [0, 1]",
                self.split_ratio
            )));
        }
        Ok(())
    }

    pub fn lif_params(&self) -> LifParams {
        LifParams {
            p_rest: self.p_rest,
            p_reset: self.p_reset,
            p_th: self.p_th,
            leak: self.leak,
            t_ref: self.t_ref,
            p_inhibit: self.p_inhibit,
            sedsi_t: self.sedsi_t,
            leak_mode: self.leak_mode,
            tau_m: self.tau_m,
            r_m: self.r_m,
        }
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            method: self.encoder,
            duration: self.sedsi_t,
            f_min: self.f_min,
            f_max: self.f_max,
            seed: self.seed,
        }
    }

    pub fn stdp_params(&self) -> StdpParams {
        StdpParams {
            a_plus: self.a_plus,
            a_minus: self.a_minus,
            tau_plus: self.tau_plus,
            tau_minus: self.tau_minus,
            t_fore: self.t_fore,
            t_back: self.t_back,
            w_min: self.w_min,
            w_max: self.w_max,
            init_lo: self.init_lo,
            init_hi: self.init_hi,
            silent_decay: self.silent_decay,
        }
    }

    /// Hidden-to-output stage constants; the pairing reach comes from
    /// the subsegment schedule, so `t_fore`/`t_back` mirror stage one.
    pub fn stdp12_params(&self) -> StdpParams {
        StdpParams {
            a_plus: self.a_plus_12,
            a_minus: self.a_minus_12,
            tau_plus: self.tau_plus_12,
            tau_minus: self.tau_minus_12,
            t_fore: self.t_fore,
            t_back: self.t_back,
            w_min: self.w_min_12,
            w_max: self.w_max_12,
            init_lo: self.init_lo_12,
            init_hi: self.init_hi_12,
            silent_decay: self.silent_decay,
        }
    }

    pub fn schedule(&self) -> SubsegmentSchedule {
        SubsegmentSchedule {
            count: self.subsegments,
            correlation_halfwidth: self.correlation_halfwidth,
        }
    }

    pub fn bilayer_config(&self, epochs: usize) -> BilayerTrainConfig {
        BilayerTrainConfig {
            hidden_size: self.hidden,
            schedule: self.schedule(),
            stdp_input: self.stdp_params(),
            stdp_output: self.stdp12_params(),
            epochs,
            seed: self.seed,
        }
    }

    pub fn lr_schedule(&self) -> LrSchedule {
        LrSchedule::for_max_steps(self.lr_ini, self.lr_mid, self.max_steps)
    }

    pub fn supervised_config(&self, epochs: usize) -> SupervisedTrainConfig {
        SupervisedTrainConfig {
            epochs,
            batch_size: self.batch_size,
            max_steps: self.max_steps,
            schedule: self.lr_schedule(),
            kernel: ResponseKernel { tau_s: self.tau_s },
            huber: HuberSpec {
                delta: self.huber_delta,
            },
            p_rest: self.p_rest,
            seed: self.seed,
        }
    }
}
