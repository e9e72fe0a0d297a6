//! Model evaluation: confusion matrices, per-class accuracy with
//! explicit no-decision accounting, noise-robustness sweeps, and the
//! CSV/JSON renderings the command-line tools emit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{add_noise, Sample};
use crate::error::{Result, SnnError};
use crate::model_io::TrainedModel;
use crate::stdp::EpochStats;
use crate::supervised::SupervisedEpochStats;

/// Outcome of classifying one sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Class labels, index-aligned with every per-class vector here.
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`, decided samples only.
    pub confusion: Vec<Vec<usize>>,
    /// Per true class, samples the model did not decide.
    pub no_decision: Vec<usize>,
    /// Correct over all samples of the class; undecided samples count
    /// against their class.
    pub per_class_accuracy: Vec<f64>,
    pub overall_accuracy: f64,
    pub total_samples: usize,
    pub correct: usize,
}

impl EvalReport {
    fn from_predictions(
        classes: &[String],
        truths: &[usize],
        predictions: &[Option<usize>],
    ) -> EvalReport {
        let n = classes.len();
        let mut confusion = vec![vec![0usize; n]; n];
        let mut no_decision = vec![0usize; n];
        let mut totals = vec![0usize; n];
        for (&truth, &prediction) in truths.iter().zip(predictions) {
            totals[truth] += 1;
            match prediction {
                Some(p) => confusion[truth][p] += 1,
                None => no_decision[truth] += 1,
            }
        }
        let per_class_accuracy: Vec<f64> = (0..n)
            .map(|k| {
                if totals[k] == 0 {
                    0.0
                } else {
                    confusion[k][k] as f64 / totals[k] as f64
                }
            })
            .collect();
        let correct: usize = (0..n).map(|k| confusion[k][k]).sum();
        let total_samples = truths.len();
        EvalReport {
            classes: classes.to_vec(),
            confusion,
            no_decision,
            per_class_accuracy,
            overall_accuracy: if total_samples == 0 {
                0.0
            } else {
                correct as f64 / total_samples as f64
            },
            total_samples,
            correct,
        }
    }

    /// Samples per true class, decided or not.
    pub fn class_totals(&self) -> Vec<usize> {
        self.confusion
            .iter()
            .zip(&self.no_decision)
            .map(|(row, &none)| row.iter().sum::<usize>() + none)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| SnnError::Format(format!("cannot render report: {e}")))
    }
}

/// Run `op` on a dedicated pool of `jobs` threads, or on the global
/// pool when `jobs` is zero.
fn run_pool<T: Send>(jobs: usize, op: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(op());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| {
            SnnError::InvalidParameter(format!("cannot build a {jobs}-thread pool: {e}"))
        })?;
    Ok(pool.install(op))
}

fn check_samples(model: &TrainedModel, samples: &[Sample], classes: &[String]) -> Result<()> {
    if samples.is_empty() {
        return Err(SnnError::Data(
            "nothing to evaluate: the sample set is empty".into(),
        ));
    }
    if model.classes() != classes {
        return Err(SnnError::Data(format!(
            "model classes {:?} do not match dataset classes {classes:?}",
            model.classes()
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.class_index >= classes.len()) {
        return Err(SnnError::Data(format!(
            "sample labeled '{}' points past the class list",
            s.label
        )));
    }
    Ok(())
}

/// Classify every sample (in order, with the sample's position keying
/// its encoder stream) and tabulate the outcome. `jobs` caps the
/// classification fan-out; zero uses the default pool.
pub fn evaluate(
    model: &TrainedModel,
    samples: &[Sample],
    classes: &[String],
    jobs: usize,
) -> Result<EvalReport> {
    check_samples(model, samples, classes)?;
    let predictions: Vec<Option<usize>> = run_pool(jobs, || {
        samples
            .par_iter()
            .enumerate()
            .map(|(idx, s)| model.classify(&s.image, idx as u64))
            .collect::<Result<Vec<_>>>()
    })??;
    let truths: Vec<usize> = samples.iter().map(|s| s.class_index).collect();
    Ok(EvalReport::from_predictions(classes, &truths, &predictions))
}

/// Evaluate under additive Gaussian noise at each listed SNR. The noise
/// stream is keyed by (sweep position, sample position), so a sweep is
/// exactly reproducible, and an infinite SNR adds nothing — its report
/// equals the clean evaluation bit for bit.
pub fn noise_sweep(
    model: &TrainedModel,
    samples: &[Sample],
    classes: &[String],
    snrs_db: &[f64],
    seed: u64,
    jobs: usize,
) -> Result<Vec<(f64, EvalReport)>> {
    check_samples(model, samples, classes)?;
    if snrs_db.is_empty() {
        return Err(SnnError::InvalidParameter(
            "noise sweep needs at least one SNR".into(),
        ));
    }
    let truths: Vec<usize> = samples.iter().map(|s| s.class_index).collect();
    let mut results = Vec::with_capacity(snrs_db.len());
    for (si, &snr) in snrs_db.iter().enumerate() {
        let predictions: Vec<Option<usize>> = run_pool(jobs, || {
            samples
                .par_iter()
                .enumerate()
                .map(|(idx, s)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(((si as u64) << 32) | idx as u64);
                    let noisy = add_noise(&s.image, snr, &mut rng)?;
                    model.classify(&noisy, idx as u64)
                })
                .collect::<Result<Vec<_>>>()
        })??;
        results.push((
            snr,
            EvalReport::from_predictions(classes, &truths, &predictions),
        ));
    }
    Ok(results)
}

/// CSV rendering of a noise sweep: one row per SNR, `inf` for the
/// clean condition.
pub fn noise_sweep_csv(classes: &[String], results: &[(f64, EvalReport)]) -> String {
    let mut out = String::from("snr_db,overall_accuracy");
    for label in classes {
        out.push_str(&format!(",accuracy_{label}"));
    }
    out.push('\n');
    for (snr, report) in results {
        out.push_str(&format!("{snr},{}", report.overall_accuracy));
        for acc in &report.per_class_accuracy {
            out.push_str(&format!(",{acc}"));
        }
        out.push('\n');
    }
    out
}

/// CSV rendering of an unsupervised training history.
pub fn history_csv(classes: &[String], history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,overall_accuracy");
    for label in classes {
        out.push_str(&format!(",accuracy_{label}"));
    }
    out.push_str(",bijective\n");
    for stats in history {
        out.push_str(&format!("{},{}", stats.epoch, stats.overall_accuracy));
        for acc in &stats.per_class_accuracy {
            out.push_str(&format!(",{acc}"));
        }
        out.push_str(&format!(",{}\n", stats.bijective));
    }
    out
}

/// CSV rendering of a supervised training history.
pub fn supervised_history_csv(classes: &[String], history: &[SupervisedEpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss,overall_accuracy");
    for label in classes {
        out.push_str(&format!(",accuracy_{label}"));
    }
    out.push('\n');
    for stats in history {
        out.push_str(&format!(
            "{},{},{}",
            stats.epoch, stats.mean_loss, stats.overall_accuracy
        ));
        for acc in &stats.per_class_accuracy {
            out.push_str(&format!(",{acc}"));
        }
        out.push('\n');
    }
    out
}
