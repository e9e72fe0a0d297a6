//! `snn` — one binary wiring the full pipeline: dataset synthesis,
//! spike encoding, the three trainers, guidance extraction,
//! classification, evaluation, noise sweeps, layer tracing, feature-map
//! export, and model statistics.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (missing or
//! malformed inputs), 3 model or numeric error. Machine-readable output
//! goes to `--out`; stdout carries a short human summary. Every
//! randomized path takes `--seed`, and identical invocations produce
//! identical artifacts. Subcommands refuse to overwrite existing output
//! files unless `--force` is passed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use snn_core::*;

#[derive(Parser)]
#[command(
    name = "snn",
    version,
    about = "Spiking-network image classification pipeline",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic speckled dataset tree at --data.
    GenData {
        /// Dataset root directory to create.
        #[arg(long)]
        data: PathBuf,
        /// Number of classes (at least 2).
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Training images per class.
        #[arg(long, default_value_t = 50)]
        train_per_class: usize,
        /// Test images per class.
        #[arg(long, default_value_t = 20)]
        test_per_class: usize,
        /// Square image edge length in pixels (at least 16).
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Speckle stream seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write into an existing non-empty root.
        #[arg(long)]
        force: bool,
    },
    /// Encode one grayscale image (PGM/PNG) into a spike-field file.
    Encode {
        /// Input image path.
        #[arg(long)]
        image: PathBuf,
        /// Output spike-field path.
        #[arg(long)]
        out: PathBuf,
        /// Optional `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Encoder stream seed (overrides the config value).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Simulate a checkpoint's spiking layers on a spike field and write
    /// the membrane-potential trace of the final layer as CSV.
    Trace {
        /// Input spike-field file (as written by `encode`).
        #[arg(long)]
        field: PathBuf,
        /// Trained checkpoint supplying weights (spiking modes only).
        #[arg(long)]
        model: PathBuf,
        /// Output CSV path (time_unit, one column per neuron, fired_index).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train the single-stage unsupervised classifier.
    TrainUnsup {
        /// Dataset root (class/train and class/test subdirectories).
        #[arg(long)]
        data: PathBuf,
        /// Optional `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for weight initialization and encoder streams
        /// (overrides the config value).
        #[arg(long)]
        seed: Option<u64>,
        /// Training epochs.
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Output checkpoint path.
        #[arg(long)]
        model: PathBuf,
        /// Optional per-epoch accuracy CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Train the two-stage (hidden winner-take-all layer) unsupervised
    /// classifier.
    TrainBilayer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for weight initialization and encoder streams
        /// (overrides the config value).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Extract per-class guidance traces from an unsupervised checkpoint.
    ExtractGuidance {
        /// Trained unsupervised checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Dataset the checkpoint was trained on.
        #[arg(long)]
        data: PathBuf,
        /// Output guidance CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train the supervised readout against a guidance bundle.
    TrainSup {
        #[arg(long)]
        data: PathBuf,
        /// Guidance CSV (as written by `extract-guidance`).
        #[arg(long)]
        guidance: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for the epoch shuffle and encoder streams (overrides
        /// the config value).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 25)]
        epochs: usize,
        /// Output checkpoint path.
        #[arg(long)]
        model: PathBuf,
        /// Optional per-epoch loss/accuracy CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Classify one image with a trained checkpoint.
    Classify {
        #[arg(long)]
        model: PathBuf,
        /// Input image path.
        #[arg(long)]
        image: PathBuf,
        /// Encoder stream seed (overrides the checkpoint value).
        #[arg(long)]
        seed: Option<u64>,
        /// Optional path for the JSON result line.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint on a dataset's test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Encoder stream seed (overrides the checkpoint value).
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel classification threads (0 = default pool).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Optional accuracy CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate under additive Gaussian noise across a list of SNRs.
    NoiseSweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated SNR list in dB; `inf` is the clean condition.
        #[arg(long, default_value = "inf,10,5,0,-5")]
        snr: String,
        /// Noise stream seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Optional sweep CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Export one grayscale feature map per output neuron.
    ExportFeatures {
        #[arg(long)]
        model: PathBuf,
        /// Output directory for the PGM maps.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Print parameter count and footprint of a checkpoint.
    Stats {
        #[arg(long)]
        model: PathBuf,
    },
}

/// CLI failure: either a usage problem (exit 1) or an engine error
/// (exit 2 for data problems, 3 for model/numeric problems).
enum CliError {
    Usage(String),
    Core(SnnError),
}

impl From<SnnError> for CliError {
    fn from(err: SnnError) -> Self {
        CliError::Core(err)
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Explicit --help/--version requests succeed; everything
            // else (unknown subcommand, bad flags, missing arguments)
            // is a usage error.
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Core(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_data_error() { 2 } else { 3 })
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::GenData {
            data,
            classes,
            train_per_class,
            test_per_class,
            size,
            seed,
            force,
        } => gen_data(
            &data,
            classes,
            train_per_class,
            test_per_class,
            size,
            seed,
            force,
        ),
        Command::Encode {
            image,
            out,
            config,
            seed,
            force,
        } => encode(&image, &out, config.as_deref(), seed, force),
        Command::Trace {
            field,
            model,
            out,
            force,
        } => trace(&field, &model, &out, force),
        Command::TrainUnsup {
            data,
            config,
            seed,
            epochs,
            model,
            out,
            force,
        } => train_unsup(
            &data,
            config.as_deref(),
            seed,
            epochs,
            &model,
            out.as_deref(),
            force,
        ),
        Command::TrainBilayer {
            data,
            config,
            seed,
            epochs,
            model,
            out,
            force,
        } => train_bilayer(
            &data,
            config.as_deref(),
            seed,
            epochs,
            &model,
            out.as_deref(),
            force,
        ),
        Command::ExtractGuidance {
            model,
            data,
            out,
            force,
        } => extract_guidance_cmd(&model, &data, &out, force),
        Command::TrainSup {
            data,
            guidance,
            config,
            seed,
            epochs,
            model,
            out,
            force,
        } => train_sup(
            &data,
            &guidance,
            config.as_deref(),
            seed,
            epochs,
            &model,
            out.as_deref(),
            force,
        ),
        Command::Classify {
            model,
            image,
            seed,
            out,
            force,
        } => classify_cmd(&model, &image, seed, out.as_deref(), force),
        Command::Eval {
            model,
            data,
            seed,
            jobs,
            out,
            force,
        } => eval_cmd(&model, &data, seed, jobs, out.as_deref(), force),
        Command::NoiseSweep {
            model,
            data,
            snr,
            seed,
            jobs,
            out,
            force,
        } => noise_sweep_cmd(&model, &data, &snr, seed, jobs, out.as_deref(), force),
        Command::ExportFeatures { model, out, force } => export_features(&model, &out, force),
        Command::Stats { model } => stats(&model),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

/// Refuse to clobber an existing output file unless --force was given.
fn guard_overwrite(path: &Path, force: bool) -> CliResult {
    if !force && path.exists() {
        return Err(SnnError::Data(format!(
            "output {} already exists (pass --force to overwrite)",
            path.display()
        ))
        .into());
    }
    Ok(())
}

fn write_text_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| SnnError::io(path, e))?;
    Ok(())
}

/// Load a checkpoint and re-key its encoder streams when --seed is given.
fn load_model(path: &Path, seed: Option<u64>) -> CliResult<TrainedModel> {
    let mut model = load_checkpoint(path)?;
    if let Some(seed) = seed {
        match &mut model {
            TrainedModel::Unsupervised(m) => m.encoder.seed = seed,
            TrainedModel::Supervised(m) => m.encoder.seed = seed,
        }
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Subcommand bodies.
// ---------------------------------------------------------------------------

fn gen_data(
    root: &Path,
    classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    size: usize,
    seed: u64,
    force: bool,
) -> CliResult {
    if !force
        && root.exists()
        && root
            .read_dir()
            .map(|mut d| d.next().is_some())
            .unwrap_or(false)
    {
        return Err(SnnError::Data(format!(
            "dataset root {} already exists and is not empty (pass --force to overwrite)",
            root.display()
        ))
        .into());
    }
    let dataset = generate_synthetic(root, classes, train_per_class, test_per_class, size, seed)?;
    println!(
        "generated {} classes, {} training and {} test images at {}",
        dataset.classes.len(),
        dataset.train.len(),
        dataset.test.len(),
        root.display()
    );
    Ok(())
}

fn encode(
    image: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    force: bool,
) -> CliResult {
    guard_overwrite(out, force)?;
    let cfg = load_config(config)?;
    let mut encoder = cfg.encoder_spec();
    if let Some(seed) = seed {
        encoder.seed = seed;
    }
    let img = load_image(image)?;
    let field = encode_image(&img, &encoder, 0)?;
    field.write_text(out)?;
    println!(
        "encoded {} ({}x{}) over {} time units: {} spikes -> {}",
        image.display(),
        img.width(),
        img.height(),
        field.duration(),
        field.total_spikes(),
        out.display()
    );
    Ok(())
}

/// Render a layer trace as CSV: `time_unit`, one potential column per
/// neuron, then the index of the neuron that fired that time unit
/// (empty when none did).
fn layer_trace_csv(trace: &LayerTrace) -> String {
    let n = trace.neuron_count();
    let mut csv = String::from("time_unit");
    for j in 0..n {
        let _ = write!(csv, ",neuron_{j}");
    }
    csv.push_str(",fired_index\n");
    for t in 0..=trace.duration() {
        let _ = write!(csv, "{t}");
        for j in 0..n {
            let _ = write!(csv, ",{}", trace.potentials.get(j, t));
        }
        match trace.firing_at(t) {
            Some(event) => {
                let _ = write!(csv, ",{}", event.neuron);
            }
            None => csv.push(','),
        }
        csv.push('\n');
    }
    csv
}

fn trace(field: &Path, model: &Path, out: &Path, force: bool) -> CliResult {
    guard_overwrite(out, force)?;
    let field = SpikeField::read_text(field)?;
    let model = load_checkpoint(model)?;
    let layer_trace = match &model {
        TrainedModel::Unsupervised(m) => {
            let mut trains = field.trains().to_vec();
            let mut last = None;
            for synapses in &m.synapses {
                let trace = simulate_layer(&trains, synapses, &m.lif)?;
                trains = trace.spikes.clone();
                last = Some(trace);
            }
            last.expect("a valid model has at least one stage")
        }
        TrainedModel::Supervised(_) => {
            return Err(SnnError::InvalidParameter(
                "trace needs a spiking checkpoint; supervised readouts have no spiking layer"
                    .into(),
            )
            .into());
        }
    };
    write_text_file(out, &layer_trace_csv(&layer_trace))?;
    println!(
        "traced {} neurons over {} time units ({} firings) -> {}",
        layer_trace.neuron_count(),
        layer_trace.duration(),
        layer_trace.firings.len(),
        out.display()
    );
    Ok(())
}

fn train_unsup(
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    epochs: usize,
    model_out: &Path,
    csv_out: Option<&Path>,
    force: bool,
) -> CliResult {
    guard_overwrite(model_out, force)?;
    if let Some(p) = csv_out {
        guard_overwrite(p, force)?;
    }
    let cfg = load_config(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let mut encoder = cfg.encoder_spec();
    encoder.seed = seed;
    let dataset = load_dataset(data, None)?;
    let outcome = train_unsupervised_single(
        &dataset,
        &cfg.lif_params(),
        &cfg.stdp_params(),
        &encoder,
        epochs,
        seed,
    )?;
    report_unsup_outcome(&outcome, &dataset, model_out, csv_out)
}

fn train_bilayer(
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    epochs: usize,
    model_out: &Path,
    csv_out: Option<&Path>,
    force: bool,
) -> CliResult {
    guard_overwrite(model_out, force)?;
    if let Some(p) = csv_out {
        guard_overwrite(p, force)?;
    }
    let cfg = load_config(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let mut encoder = cfg.encoder_spec();
    encoder.seed = seed;
    let mut bilayer_cfg = cfg.bilayer_config(epochs);
    bilayer_cfg.seed = seed;
    let dataset = load_dataset(data, None)?;
    let outcome = train_unsupervised_bilayer(&dataset, &cfg.lif_params(), &encoder, &bilayer_cfg)?;
    report_unsup_outcome(&outcome, &dataset, model_out, csv_out)
}

fn report_unsup_outcome(
    outcome: &TrainOutcome,
    dataset: &Dataset,
    model_out: &Path,
    csv_out: Option<&Path>,
) -> CliResult {
    save_checkpoint(
        &TrainedModel::Unsupervised(outcome.model.clone()),
        model_out,
    )?;
    if let Some(path) = csv_out {
        write_text_file(path, &history_csv(&dataset.classes, &outcome.history))?;
    }
    let last = outcome.history.last();
    println!(
        "trained {} epochs: accuracy {:.4}, first bijective epoch {}, checkpoint -> {}",
        outcome.history.len(),
        last.map(|e| e.overall_accuracy).unwrap_or(0.0),
        outcome
            .first_bijective_epoch
            .map(|e| e.to_string())
            .unwrap_or_else(|| "none".into()),
        model_out.display()
    );
    Ok(())
}

fn extract_guidance_cmd(model: &Path, data: &Path, out: &Path, force: bool) -> CliResult {
    guard_overwrite(out, force)?;
    let model = match load_checkpoint(model)? {
        TrainedModel::Unsupervised(m) => m,
        TrainedModel::Supervised(_) => {
            return Err(SnnError::InvalidParameter(
                "guidance extraction needs an unsupervised checkpoint".into(),
            )
            .into());
        }
    };
    let dataset = load_dataset(data, None)?;
    let guidance = extract_guidance(&model, &dataset)?;
    guidance.write_csv(out)?;
    println!(
        "extracted {} guidance traces over {} time units -> {}",
        guidance.class_count(),
        guidance.duration(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_sup(
    data: &Path,
    guidance: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    epochs: usize,
    model_out: &Path,
    csv_out: Option<&Path>,
    force: bool,
) -> CliResult {
    guard_overwrite(model_out, force)?;
    if let Some(p) = csv_out {
        guard_overwrite(p, force)?;
    }
    let cfg = load_config(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let mut encoder = cfg.encoder_spec();
    encoder.seed = seed;
    let mut sup_cfg = cfg.supervised_config(epochs);
    sup_cfg.seed = seed;
    let dataset = load_dataset(data, None)?;
    let bundle = GuidanceBundle::read_csv(guidance)?;
    let outcome = train_supervised(&dataset, &bundle, &encoder, &sup_cfg)?;
    save_checkpoint(&TrainedModel::Supervised(outcome.model.clone()), model_out)?;
    if let Some(path) = csv_out {
        write_text_file(
            path,
            &supervised_history_csv(&dataset.classes, &outcome.history),
        )?;
    }
    let last = outcome.history.last();
    println!(
        "trained {} epochs ({} optimizer steps): loss {:.4}, accuracy {:.4}, checkpoint -> {}",
        outcome.history.len(),
        outcome.steps_taken,
        last.map(|e| e.mean_loss).unwrap_or(0.0),
        last.map(|e| e.overall_accuracy).unwrap_or(0.0),
        model_out.display()
    );
    Ok(())
}

fn classify_cmd(
    model: &Path,
    image: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    force: bool,
) -> CliResult {
    if let Some(p) = out {
        guard_overwrite(p, force)?;
    }
    let model = load_model(model, seed)?;
    let img = load_image(image)?;
    let decision = model.classify(&img, 0)?;
    let label = decision.map(|k| model.classes()[k].clone());
    let line = format!(
        "{{\"image\":{:?},\"class_index\":{},\"label\":{}}}",
        image.display().to_string(),
        decision
            .map(|k| k.to_string())
            .unwrap_or_else(|| "null".into()),
        label
            .as_deref()
            .map(|l| format!("{l:?}"))
            .unwrap_or_else(|| "null".into()),
    );
    println!("{line}");
    if let Some(path) = out {
        write_text_file(path, &format!("{line}\n"))?;
    }
    Ok(())
}

/// Accuracy table: one row per class plus an `overall` row.
fn eval_report_csv(report: &EvalReport) -> String {
    let mut csv = String::from("class,total,correct,no_decision,accuracy\n");
    let totals = report.class_totals();
    for (k, class) in report.classes.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{class},{},{},{},{}",
            totals[k], report.confusion[k][k], report.no_decision[k], report.per_class_accuracy[k]
        );
    }
    let _ = writeln!(
        csv,
        "overall,{},{},{},{}",
        report.total_samples,
        report.correct,
        report.no_decision.iter().sum::<usize>(),
        report.overall_accuracy
    );
    csv
}

fn eval_cmd(
    model: &Path,
    data: &Path,
    seed: Option<u64>,
    jobs: usize,
    out: Option<&Path>,
    force: bool,
) -> CliResult {
    if let Some(p) = out {
        guard_overwrite(p, force)?;
    }
    let model = load_model(model, seed)?;
    let dataset = load_dataset(data, None)?;
    let report = evaluate(&model, &dataset.test, &dataset.classes, jobs)?;
    if let Some(path) = out {
        write_text_file(path, &eval_report_csv(&report))?;
    }
    println!(
        "evaluated {} samples: accuracy {:.4}, per-class {:?}",
        report.total_samples, report.overall_accuracy, report.per_class_accuracy
    );
    Ok(())
}

fn parse_snr_list(text: &str) -> CliResult<Vec<f64>> {
    let mut snrs = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.eq_ignore_ascii_case("inf") {
            snrs.push(f64::INFINITY);
        } else {
            snrs.push(part.parse::<f64>().map_err(|_| {
                CliError::Usage(format!(
                    "--snr entry '{part}' is neither a decibel value nor 'inf'"
                ))
            })?);
        }
    }
    if snrs.is_empty() {
        return Err(CliError::Usage("--snr list is empty".into()));
    }
    Ok(snrs)
}

#[allow(clippy::too_many_arguments)]
fn noise_sweep_cmd(
    model: &Path,
    data: &Path,
    snr: &str,
    seed: u64,
    jobs: usize,
    out: Option<&Path>,
    force: bool,
) -> CliResult {
    if let Some(p) = out {
        guard_overwrite(p, force)?;
    }
    let snrs = parse_snr_list(snr)?;
    let model = load_model(model, None)?;
    let dataset = load_dataset(data, None)?;
    let results = noise_sweep(&model, &dataset.test, &dataset.classes, &snrs, seed, jobs)?;
    let csv = noise_sweep_csv(&dataset.classes, &results);
    if let Some(path) = out {
        write_text_file(path, &csv)?;
    }
    for (snr, report) in &results {
        let label = if snr.is_infinite() {
            "inf".to_string()
        } else {
            format!("{snr}")
        };
        println!("snr {label} dB: accuracy {:.4}", report.overall_accuracy);
    }
    Ok(())
}

fn export_features(model: &Path, out: &Path, force: bool) -> CliResult {
    if !force
        && out.exists()
        && out
            .read_dir()
            .map(|mut d| d.next().is_some())
            .unwrap_or(false)
    {
        return Err(SnnError::Data(format!(
            "output directory {} already exists and is not empty (pass --force to overwrite)",
            out.display()
        ))
        .into());
    }
    let model = load_checkpoint(model)?;
    let paths = export_feature_maps(&model, out)?;
    println!("wrote {} feature maps to {}", paths.len(), out.display());
    Ok(())
}

fn stats(model: &Path) -> CliResult {
    let model = load_checkpoint(model)?;
    let stats = model_stats(&model);
    println!("parameters: {}", stats.parameters);
    println!("memory_bytes: {}", stats.memory_bytes);
    println!("ops_per_stimulus: {}", stats.ops_per_stimulus);
    Ok(())
}
