//! End-to-end tests for the `snn` binary: exit codes, output formats,
//! and cross-invocation determinism.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::OnceLock;

use snn_core::{
    save_checkpoint, EncoderSpec, LifParams, StdpParams, SynapseMatrix, TrainedModel, UnsupMode,
    UnsupervisedModel,
};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code_of(out: &Output) -> i32 {
    out.status.code().expect("process exits normally")
}

fn assert_ok(out: &Output, step: &str) {
    assert!(
        out.status.success(),
        "{step} failed (exit {}): {}",
        code_of(out),
        stderr_of(out)
    );
}

// ---------------------------------------------------------------------------
// Shared miniature pipeline, built once per test process.
// ---------------------------------------------------------------------------

struct Fixture {
    _dir: TempDir,
    data: PathBuf,
    unsup_model: PathBuf,
    sup_model: PathBuf,
    image: PathBuf,
}

/// gen-data -> train-unsup -> extract-guidance -> train-sup on a tiny
/// three-class dataset; later tests reuse the artifacts read-only.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let data = dir.path().join("ds");
        let unsup_model = dir.path().join("unsup.snncp");
        let guidance = dir.path().join("guidance.csv");
        let sup_model = dir.path().join("sup.snncp");
        let d = data.to_str().unwrap();
        assert_ok(
            &run(&[
                "gen-data",
                "--data",
                d,
                "--classes",
                "3",
                "--train-per-class",
                "4",
                "--test-per-class",
                "2",
                "--size",
                "32",
                "--seed",
                "5",
            ]),
            "gen-data",
        );
        assert_ok(
            &run(&[
                "train-unsup",
                "--data",
                d,
                "--seed",
                "11",
                "--epochs",
                "2",
                "--model",
                unsup_model.to_str().unwrap(),
            ]),
            "train-unsup",
        );
        assert_ok(
            &run(&[
                "extract-guidance",
                "--model",
                unsup_model.to_str().unwrap(),
                "--data",
                d,
                "--out",
                guidance.to_str().unwrap(),
            ]),
            "extract-guidance",
        );
        assert_ok(
            &run(&[
                "train-sup",
                "--data",
                d,
                "--guidance",
                guidance.to_str().unwrap(),
                "--seed",
                "3",
                "--epochs",
                "2",
                "--model",
                sup_model.to_str().unwrap(),
            ]),
            "train-sup",
        );
        let image = data.join("class_00").join("test").join("img_0000.pgm");
        assert!(image.exists(), "expected test image at {}", image.display());
        Fixture {
            _dir: dir,
            data,
            unsup_model,
            sup_model,
            image,
        }
    })
}

// ---------------------------------------------------------------------------
// Exit codes.
// ---------------------------------------------------------------------------

#[test]
fn usage_errors_exit_one() {
    let unknown = run(&["bogus-cmd"]);
    assert_eq!(code_of(&unknown), 1);
    assert!(
        stderr_of(&unknown).contains("Usage"),
        "unknown subcommand prints usage"
    );

    let bare = run(&[]);
    assert_eq!(code_of(&bare), 1, "bare invocation is a usage error");

    let f = fixture();
    let bad_snr = run(&[
        "noise-sweep",
        "--model",
        f.sup_model.to_str().unwrap(),
        "--data",
        f.data.to_str().unwrap(),
        "--snr",
        "10,abc",
    ]);
    assert_eq!(code_of(&bad_snr), 1);
    assert!(
        stderr_of(&bad_snr).contains("abc"),
        "bad SNR entry is named"
    );
}

#[test]
fn help_and_version_exit_zero() {
    let help = run(&["--help"]);
    assert_eq!(code_of(&help), 0);
    assert!(
        stdout_of(&help).contains("gen-data"),
        "help lists subcommands"
    );

    let version = run(&["--version"]);
    assert_eq!(code_of(&version), 0);
    assert!(stdout_of(&version).contains("snn"));
}

#[test]
fn data_errors_exit_two() {
    let f = fixture();

    let missing = run(&[
        "eval",
        "--model",
        f.sup_model.to_str().unwrap(),
        "--data",
        "/nonexistent/dataset",
    ]);
    assert_eq!(
        code_of(&missing),
        2,
        "missing dataset: {}",
        stderr_of(&missing)
    );

    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.snncp");
    fs::write(&garbage, b"not a checkpoint at all\n").unwrap();
    let corrupt = run(&["stats", "--model", garbage.to_str().unwrap()]);
    assert_eq!(
        code_of(&corrupt),
        2,
        "corrupt checkpoint: {}",
        stderr_of(&corrupt)
    );

    let refuse = run(&["gen-data", "--data", f.data.to_str().unwrap()]);
    assert_eq!(code_of(&refuse), 2, "non-empty root without --force");
    assert!(
        stderr_of(&refuse).contains("--force"),
        "refusal mentions --force"
    );
}

#[test]
fn model_errors_exit_three() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("field.sf");
    assert_ok(
        &run(&[
            "encode",
            "--image",
            f.image.to_str().unwrap(),
            "--out",
            field.to_str().unwrap(),
            "--seed",
            "4",
        ]),
        "encode",
    );

    let trace = run(&[
        "trace",
        "--field",
        field.to_str().unwrap(),
        "--model",
        f.sup_model.to_str().unwrap(),
        "--out",
        dir.path().join("t.csv").to_str().unwrap(),
    ]);
    assert_eq!(
        code_of(&trace),
        3,
        "trace on a readout checkpoint: {}",
        stderr_of(&trace)
    );

    let extract = run(&[
        "extract-guidance",
        "--model",
        f.sup_model.to_str().unwrap(),
        "--data",
        f.data.to_str().unwrap(),
        "--out",
        dir.path().join("g.csv").to_str().unwrap(),
    ]);
    assert_eq!(code_of(&extract), 3, "guidance from a readout checkpoint");
}

// ---------------------------------------------------------------------------
// Output formats.
// ---------------------------------------------------------------------------

#[test]
fn stats_prints_parameter_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.snncp");
    let stdp = StdpParams::default();
    let synapses = SynapseMatrix::filled(16_384, 3, 1.0, stdp.w_min, stdp.w_max).expect("synapses");
    let model = TrainedModel::Unsupervised(UnsupervisedModel {
        mode: UnsupMode::Single,
        geometry: (128, 128),
        classes: vec!["a".into(), "b".into(), "c".into()],
        class_map: vec![0, 1, 2],
        synapses: vec![synapses],
        stdp: vec![stdp],
        lif: LifParams::default(),
        encoder: EncoderSpec::default(),
    });
    save_checkpoint(&model, &path).expect("checkpoint saves");

    let out = run(&["stats", "--model", path.to_str().unwrap()]);
    assert_ok(&out, "stats");
    let text = stdout_of(&out);
    assert!(text.contains("parameters: 49152"), "got: {text}");
    assert!(text.contains("memory_bytes:"));
    assert!(text.contains("ops_per_stimulus:"));
}

#[test]
fn encode_and_trace_render_expected_formats() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("field.sf");
    let trace = dir.path().join("trace.csv");
    assert_ok(
        &run(&[
            "encode",
            "--image",
            f.image.to_str().unwrap(),
            "--out",
            field.to_str().unwrap(),
            "--seed",
            "4",
        ]),
        "encode",
    );
    let field_text = fs::read_to_string(&field).unwrap();
    let mut lines = field_text.lines();
    assert_eq!(lines.next(), Some("spikefield v1 32 32 70"), "header row");
    assert_eq!(lines.count(), 32 * 32, "one spike-train line per pixel");

    assert_ok(
        &run(&[
            "trace",
            "--field",
            field.to_str().unwrap(),
            "--model",
            f.unsup_model.to_str().unwrap(),
            "--out",
            trace.to_str().unwrap(),
        ]),
        "trace",
    );
    let trace_text = fs::read_to_string(&trace).unwrap();
    let mut lines = trace_text.lines();
    assert_eq!(
        lines.next(),
        Some("time_unit,neuron_0,neuron_1,neuron_2,fired_index"),
        "trace header"
    );
    // Potentials at time units 0..=70 inclusive.
    assert_eq!(lines.count(), 71, "one row per time unit");
    for line in trace_text.lines().skip(1) {
        assert_eq!(line.matches(',').count(), 4, "five columns: {line}");
    }
}

#[test]
fn classify_is_deterministic_and_writes_out() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("decision.json");
    let args = [
        "classify",
        "--model",
        f.unsup_model.to_str().unwrap(),
        "--image",
        f.image.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out_path.to_str().unwrap(),
        "--force",
    ];
    let first = run(&args);
    assert_ok(&first, "classify");
    let second = run(&args);
    assert_ok(&second, "classify again");
    assert_eq!(
        stdout_of(&first),
        stdout_of(&second),
        "same seed, same decision"
    );
    assert!(stdout_of(&first).contains("\"class_index\""));
    let written = fs::read_to_string(&out_path).unwrap();
    assert_eq!(written, stdout_of(&second), "--out mirrors stdout");
}

// ---------------------------------------------------------------------------
// Overwrite policy.
// ---------------------------------------------------------------------------

#[test]
fn overwrite_needs_force() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("field.sf");
    let encode_args = |force: bool| {
        let mut v = vec![
            "encode".to_string(),
            format!("--image={}", f.image.display()),
            format!("--out={}", field.display()),
            "--seed=4".to_string(),
        ];
        if force {
            v.push("--force".to_string());
        }
        v
    };
    let first = run(&encode_args(false)
        .iter()
        .map(|s| s.as_str())
        .collect::<Vec<_>>());
    assert_ok(&first, "first encode");
    let refused = run(&encode_args(false)
        .iter()
        .map(|s| s.as_str())
        .collect::<Vec<_>>());
    assert_eq!(code_of(&refused), 2, "existing output without --force");
    assert!(
        stderr_of(&refused).contains("field.sf"),
        "refusal names the path"
    );
    let before = fs::read(&field).unwrap();
    let forced = run(&encode_args(true)
        .iter()
        .map(|s| s.as_str())
        .collect::<Vec<_>>());
    assert_ok(&forced, "forced encode");
    assert_eq!(
        fs::read(&field).unwrap(),
        before,
        "same seed rewrites identical bytes"
    );
}

// ---------------------------------------------------------------------------
// Determinism across full pipelines.
// ---------------------------------------------------------------------------

/// Run the whole pipeline under `root` and return the bytes of every
/// artifact it produced, in a fixed order.
fn pipeline_artifacts(root: &std::path::Path) -> Vec<Vec<u8>> {
    let data = root.join("ds");
    let unsup_model = root.join("unsup.snncp");
    let unsup_csv = root.join("unsup.csv");
    let guidance = root.join("guidance.csv");
    let sup_model = root.join("sup.snncp");
    let sup_csv = root.join("sup.csv");
    let eval_csv = root.join("eval.csv");
    let sweep_csv = root.join("sweep.csv");
    let d = data.to_str().unwrap();
    assert_ok(
        &run(&[
            "gen-data",
            "--data",
            d,
            "--classes",
            "3",
            "--train-per-class",
            "3",
            "--test-per-class",
            "2",
            "--size",
            "32",
            "--seed",
            "5",
        ]),
        "gen-data",
    );
    assert_ok(
        &run(&[
            "train-unsup",
            "--data",
            d,
            "--seed",
            "11",
            "--epochs",
            "2",
            "--model",
            unsup_model.to_str().unwrap(),
            "--out",
            unsup_csv.to_str().unwrap(),
        ]),
        "train-unsup",
    );
    assert_ok(
        &run(&[
            "extract-guidance",
            "--model",
            unsup_model.to_str().unwrap(),
            "--data",
            d,
            "--out",
            guidance.to_str().unwrap(),
        ]),
        "extract-guidance",
    );
    assert_ok(
        &run(&[
            "train-sup",
            "--data",
            d,
            "--guidance",
            guidance.to_str().unwrap(),
            "--seed",
            "3",
            "--epochs",
            "2",
            "--model",
            sup_model.to_str().unwrap(),
            "--out",
            sup_csv.to_str().unwrap(),
        ]),
        "train-sup",
    );
    assert_ok(
        &run(&[
            "eval",
            "--model",
            sup_model.to_str().unwrap(),
            "--data",
            d,
            "--out",
            eval_csv.to_str().unwrap(),
        ]),
        "eval",
    );
    assert_ok(
        &run(&[
            "noise-sweep",
            "--model",
            sup_model.to_str().unwrap(),
            "--data",
            d,
            "--snr",
            "inf,5",
            "--seed",
            "7",
            "--out",
            sweep_csv.to_str().unwrap(),
        ]),
        "noise-sweep",
    );
    [
        unsup_model,
        unsup_csv,
        guidance,
        sup_model,
        sup_csv,
        eval_csv,
        sweep_csv,
    ]
    .iter()
    .map(|p| fs::read(p).unwrap_or_else(|e| panic!("read {}: {e}", p.display())))
    .collect()
}

#[test]
fn full_pipeline_is_reproducible() {
    let first_dir = tempfile::tempdir().unwrap();
    let second_dir = tempfile::tempdir().unwrap();
    let first = pipeline_artifacts(first_dir.path());
    let second = pipeline_artifacts(second_dir.path());
    assert_eq!(first.len(), second.len());
    for (i, (a, b)) in first.iter().zip(&second).enumerate() {
        assert_eq!(a, b, "artifact {i} differs between identical invocations");
    }
}
