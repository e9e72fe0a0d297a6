//! Gradient-based supervised training of a linear readout over
//! exponentially filtered spike responses: Huber objective, analytic
//! gradients, Adam updates, and a two-phase learning-rate schedule.
//! Class targets come from guidance traces recorded off a trained
//! unsupervised model.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::encoding::{encode_image, EncoderSpec, SpikeField, SpikeTrain};
use crate::error::{Result, SnnError};
use crate::matrix::Matrix;
use crate::neuron::{simulate_layer, LayerTrace};
use crate::raster::Image;
use crate::stdp::UnsupervisedModel;

/// Exponential response filter: each input spike deposits a unit that
/// decays by `exp(-1/tau_s)` per time unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseKernel {
    pub tau_s: f64,
}

impl Default for ResponseKernel {
    fn default() -> Self {
        ResponseKernel { tau_s: 10.0 }
    }
}

impl ResponseKernel {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_s.is_finite() && self.tau_s > 0.0) {
            return Err(SnnError::InvalidParameter(format!(
                "response decay constant must be positive, got {}",
                self.tau_s
            )));
        }
        Ok(())
    }

    /// Per-unit decay factor.
    pub fn rho(&self) -> f64 {
        (-1.0 / self.tau_s).exp()
    }
}

/// Filtered responses `G[i][t]` for every input train: the recursion
/// `G(t) = rho * G(t-1) + spike(t)` with `G` starting at zero before
/// the window. A spike contributes exactly 1 at its own time unit.
pub fn response_matrix(pre: &[SpikeTrain], kernel: &ResponseKernel) -> Result<Matrix> {
    kernel.validate()?;
    if pre.is_empty() {
        return Err(SnnError::Dimension(
            "response filter needs at least one train".into(),
        ));
    }
    let duration = pre[0].duration();
    if pre.iter().any(|t| t.duration() != duration) {
        return Err(SnnError::Dimension(
            "input trains must share one duration".into(),
        ));
    }
    let rho = kernel.rho();
    let mut out = Matrix::zeros(pre.len(), duration + 1);
    for (i, train) in pre.iter().enumerate() {
        let row = out.row_mut(i);
        let mut g = 0.0;
        for (t, slot) in row.iter_mut().enumerate() {
            g = rho * g + if train.fired(t) { 1.0 } else { 0.0 };
            *slot = g;
        }
    }
    Ok(out)
}

/// Readout potentials `p[j][t] = sum_i w[i][j] * G[i][t]` — linear in
/// the weights, so the training objective is convex.
pub fn potential_trace(weights: &Matrix, responses: &Matrix) -> Result<Matrix> {
    if weights.rows() != responses.rows() {
        return Err(SnnError::Dimension(format!(
            "weight rows {} do not match response rows {}",
            weights.rows(),
            responses.rows()
        )));
    }
    let n = weights.cols();
    let cols = responses.cols();
    let mut out = Matrix::zeros(n, cols);
    for i in 0..weights.rows() {
        let g_row = responses.row(i);
        for j in 0..n {
            let w = weights.get(i, j);
            if w == 0.0 {
                continue;
            }
            let out_row = out.row_mut(j);
            for (t, &g) in g_row.iter().enumerate() {
                out_row[t] += w * g;
            }
        }
    }
    Ok(out)
}

/// Huber objective: quadratic inside `delta`, linear outside.
#[derive(Debug, Clone, PartialEq)]
pub struct HuberSpec {
    pub delta: f64,
}

impl Default for HuberSpec {
    fn default() -> Self {
        HuberSpec { delta: 1.0 }
    }
}

impl HuberSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(SnnError::InvalidParameter(format!(
                "huber transition must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Pointwise loss of one residual.
    pub fn value(&self, d: f64) -> f64 {
        let a = d.abs();
        if a <= self.delta {
            0.5 * d * d
        } else {
            self.delta * (a - 0.5 * self.delta)
        }
    }

    /// Pointwise derivative: the residual, clamped to `[-delta, delta]`.
    pub fn derivative(&self, d: f64) -> f64 {
        d.clamp(-self.delta, self.delta)
    }
}

/// Total Huber loss between a predicted and a target trace, summed over
/// every neuron and time unit. Non-finite values are a numeric error.
pub fn huber_loss(prediction: &Matrix, target: &Matrix, spec: &HuberSpec) -> Result<f64> {
    spec.validate()?;
    if prediction.rows() != target.rows() || prediction.cols() != target.cols() {
        return Err(SnnError::Dimension(format!(
            "prediction {}x{} against target {}x{}",
            prediction.rows(),
            prediction.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let mut total = 0.0;
    for (&p, &t) in prediction.values().iter().zip(target.values()) {
        total += spec.value(p - t);
    }
    if !total.is_finite() {
        return Err(SnnError::Numeric("loss is not finite".into()));
    }
    Ok(total)
}

/// Analytic gradient of the Huber loss with respect to the weights:
/// `grad[i][j] = sum_t psi'(p[j][t] - target[j][t]) * G[i][t]`.
pub fn grad_weights(
    responses: &Matrix,
    prediction: &Matrix,
    target: &Matrix,
    spec: &HuberSpec,
) -> Result<Matrix> {
    spec.validate()?;
    if prediction.rows() != target.rows() || prediction.cols() != target.cols() {
        return Err(SnnError::Dimension(
            "prediction and target shapes differ".into(),
        ));
    }
    if prediction.cols() != responses.cols() {
        return Err(SnnError::Dimension(format!(
            "prediction covers {} time units but responses cover {}",
            prediction.cols(),
            responses.cols()
        )));
    }
    let m = responses.rows();
    let n = prediction.rows();
    let cols = responses.cols();
    // psi'[j][t], computed once.
    let mut psi = Matrix::zeros(n, cols);
    for j in 0..n {
        let p_row = prediction.row(j);
        let t_row = target.row(j);
        let out = psi.row_mut(j);
        for t in 0..cols {
            out[t] = spec.derivative(p_row[t] - t_row[t]);
        }
    }
    let mut grad = Matrix::zeros(m, n);
    for i in 0..m {
        let g_row = responses.row(i);
        for j in 0..n {
            let psi_row = psi.row(j);
            let mut acc = 0.0;
            for t in 0..cols {
                acc += psi_row[t] * g_row[t];
            }
            grad.set(i, j, acc);
        }
    }
    Ok(grad)
}

/// Adam optimizer state for one weight matrix.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Completed updates.
    pub step: usize,
    first_moment: Matrix,
    second_moment: Matrix,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    weights: &mut Matrix,
    grad: &Matrix,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if weights.rows() != grad.rows() || weights.cols() != grad.cols() {
        return Err(SnnError::Dimension(format!(
            "gradient {}x{} against weights {}x{}",
            grad.rows(),
            grad.cols(),
            weights.rows(),
            weights.cols()
        )));
    }
    if state.first_moment.rows() != weights.rows() || state.first_moment.cols() != weights.cols() {
        return Err(SnnError::Dimension(
            "optimizer state shaped for a different matrix".into(),
        ));
    }
    state.step += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let correction1 = 1.0 - b1.powi(state.step as i32);
    let correction2 = 1.0 - b2.powi(state.step as i32);
    let m = state.first_moment.values_mut();
    let v = state.second_moment.values_mut();
    let w = weights.values_mut();
    for (idx, &g) in grad.values().iter().enumerate() {
        m[idx] = b1 * m[idx] + (1.0 - b1) * g;
        v[idx] = b2 * v[idx] + (1.0 - b2) * g * g;
        let m_hat = m[idx] / correction1;
        let v_hat = v[idx] / correction2;
        w[idx] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Two-phase learning rate: `lr_ini` through `switch_step` updates,
/// `lr_mid` afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub lr_ini: f64,
    pub lr_mid: f64,
    /// Last 1-based update that still uses `lr_ini`.
    pub switch_step: usize,
}

impl LrSchedule {
    /// Switch after 60% of the step budget.
    pub fn for_max_steps(lr_ini: f64, lr_mid: f64, max_steps: usize) -> Self {
        LrSchedule {
            lr_ini,
            lr_mid,
            switch_step: max_steps * 3 / 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_ini.is_finite() && self.lr_ini > 0.0)
            || !(self.lr_mid.is_finite() && self.lr_mid > 0.0)
        {
            return Err(SnnError::InvalidParameter(format!(
                "learning rates must be positive, got {} and {}",
                self.lr_ini, self.lr_mid
            )));
        }
        Ok(())
    }

    /// Rate for the `step`-th update, 1-based.
    pub fn rate(&self, step: usize) -> f64 {
        if step <= self.switch_step {
            self.lr_ini
        } else {
            self.lr_mid
        }
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::for_max_steps(1e-3, 1e-4, 30_000)
    }
}

/// Per-class guidance traces: row `k` is the target potential trace for
/// class `k`, aligned with the dataset's sorted class order.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceBundle {
    /// `class_count x (duration + 1)`.
    pub traces: Matrix,
}

impl GuidanceBundle {
    pub fn new(traces: Matrix) -> Result<Self> {
        if traces.rows() == 0 || traces.cols() == 0 {
            return Err(SnnError::Dimension(
                "guidance traces cannot be empty".into(),
            ));
        }
        if !traces.all_finite() {
            return Err(SnnError::Numeric("guidance traces must be finite".into()));
        }
        Ok(GuidanceBundle { traces })
    }

    pub fn class_count(&self) -> usize {
        self.traces.rows()
    }

    /// Stimulus window covered by the traces.
    pub fn duration(&self) -> usize {
        self.traces.cols() - 1
    }

    /// Full target trace for a sample of `class_index`: that class's
    /// guidance row for its own readout neuron, flat `p_rest` rows for
    /// every other neuron.
    pub fn target_for(&self, class_index: usize, p_rest: f64) -> Result<Matrix> {
        if class_index >= self.class_count() {
            return Err(SnnError::Dimension(format!(
                "class index {class_index} out of range for {} guidance rows",
                self.class_count()
            )));
        }
        let mut target = Matrix::filled(self.class_count(), self.traces.cols(), p_rest);
        target
            .row_mut(class_index)
            .copy_from_slice(self.traces.row(class_index));
        Ok(target)
    }

    /// Write as CSV, one row per class: `k,v0,...,vT`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for k in 0..self.class_count() {
            out.push_str(&k.to_string());
            for v in self.traces.row(k) {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| SnnError::io(path, e))
    }

    /// Read the CSV form back. Row indices must be 0..n in order and
    /// every row must have the same width.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SnnError::io(path, e))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let index: usize =
                fields.next().unwrap_or("").trim().parse().map_err(|_| {
                    SnnError::Format(format!("line {}: bad class index", line_no + 1))
                })?;
            if index != rows.len() {
                return Err(SnnError::Format(format!(
                    "line {}: expected class index {}, found {index}",
                    line_no + 1,
                    rows.len()
                )));
            }
            let values: Vec<f64> = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        SnnError::Format(format!("line {}: bad trace value '{f}'", line_no + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(first) = rows.first() {
                if values.len() != first.len() {
                    return Err(SnnError::Format(format!(
                        "line {}: row has {} values, expected {}",
                        line_no + 1,
                        values.len(),
                        first.len()
                    )));
                }
            }
            rows.push(values);
        }
        if rows.is_empty() {
            return Err(SnnError::Format("guidance file has no rows".into()));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(SnnError::Format("guidance rows have no values".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let rows_n = data.len() / cols;
        GuidanceBundle::new(Matrix::from_vec(rows_n, cols, data)?)
    }
}

/// Record guidance traces off a trained unsupervised model: for every
/// class, the first training sample of that class is encoded and
/// simulated, and the potential trace of the readout neuron calibrated
/// to that class becomes the class's guidance row.
pub fn extract_guidance(model: &UnsupervisedModel, dataset: &Dataset) -> Result<GuidanceBundle> {
    model.validate()?;
    if model.classes != dataset.classes {
        return Err(SnnError::Data(format!(
            "model classes {:?} do not match dataset classes {:?}",
            model.classes, dataset.classes
        )));
    }
    if (dataset.geometry.0, dataset.geometry.1) != model.geometry {
        return Err(SnnError::Dimension(
            "dataset geometry does not match the model".into(),
        ));
    }
    let n = model.classes.len();
    let duration = model.encoder.duration;
    let mut traces = Matrix::zeros(n, duration + 1);
    for k in 0..n {
        let (position, sample) = dataset
            .train
            .iter()
            .enumerate()
            .find(|(_, s)| s.class_index == k)
            .ok_or_else(|| {
                SnnError::Data(format!(
                    "class '{}' has no training sample to extract guidance from",
                    model.classes[k]
                ))
            })?;
        let neuron = model
            .class_map
            .iter()
            .position(|&c| c == k)
            .ok_or_else(|| {
                SnnError::Data(format!(
                    "model's class map does not cover class '{}'",
                    model.classes[k]
                ))
            })?;
        let field = encode_image(&sample.image, &model.encoder, position as u64)?;
        let trace = final_layer_trace(model, &field)?;
        traces
            .row_mut(k)
            .copy_from_slice(trace.potentials.row(neuron));
    }
    GuidanceBundle::new(traces)
}

/// Simulate the model's stage chain and return the last stage's trace.
fn final_layer_trace(model: &UnsupervisedModel, field: &SpikeField) -> Result<LayerTrace> {
    let mut trains: Vec<SpikeTrain> = field.trains().to_vec();
    let last = model
        .synapses
        .len()
        .checked_sub(1)
        .ok_or_else(|| SnnError::Dimension("model has no synapse stages".into()))?;
    for (stage, syn) in model.synapses.iter().enumerate() {
        let trace = simulate_layer(&trains, syn, &model.lif)?;
        if stage == last {
            return Ok(trace);
        }
        trains = trace.spikes;
    }
    unreachable!("loop returns at the last stage");
}

/// A trained supervised readout.
#[derive(Debug, Clone)]
pub struct SupervisedModel {
    /// Input image geometry (width, height).
    pub geometry: (usize, usize),
    /// Class labels in the dataset's sorted order; readout neuron `k`
    /// corresponds to `classes[k]`.
    pub classes: Vec<String>,
    /// `input_size x class_count` readout weights.
    pub weights: Matrix,
    pub kernel: ResponseKernel,
    pub huber: HuberSpec,
    /// Resting level used for off-class target rows.
    pub p_rest: f64,
    pub guidance: GuidanceBundle,
    pub encoder: EncoderSpec,
}

impl SupervisedModel {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.huber.validate()?;
        self.encoder.validate()?;
        if !self.p_rest.is_finite() {
            return Err(SnnError::InvalidParameter(
                "resting level must be finite".into(),
            ));
        }
        let m = self.geometry.0 * self.geometry.1;
        if self.weights.rows() != m {
            return Err(SnnError::Dimension(format!(
                "weight rows {} do not match geometry {}x{}",
                self.weights.rows(),
                self.geometry.0,
                self.geometry.1
            )));
        }
        if self.weights.cols() != self.classes.len() {
            return Err(SnnError::Dimension(format!(
                "weight columns {} do not match {} classes",
                self.weights.cols(),
                self.classes.len()
            )));
        }
        if self.guidance.class_count() != self.classes.len() {
            return Err(SnnError::Dimension(format!(
                "guidance rows {} do not match {} classes",
                self.guidance.class_count(),
                self.classes.len()
            )));
        }
        if self.guidance.duration() != self.encoder.duration {
            return Err(SnnError::Dimension(format!(
                "guidance window {} does not match encoder window {}",
                self.guidance.duration(),
                self.encoder.duration
            )));
        }
        if !self.weights.all_finite() {
            return Err(SnnError::Numeric("weights must be finite".into()));
        }
        Ok(())
    }

    /// Losses against every class target for one encoded stimulus.
    pub fn class_losses(&self, field: &SpikeField) -> Result<Vec<f64>> {
        let responses = response_matrix(field.trains(), &self.kernel)?;
        let prediction = potential_trace(&self.weights, &responses)?;
        (0..self.classes.len())
            .map(|k| {
                let target = self.guidance.target_for(k, self.p_rest)?;
                huber_loss(&prediction, &target, &self.huber)
            })
            .collect()
    }
}

/// Classify by the smallest loss against each class target; ties go to
/// the lower class index. The supervised readout always decides.
pub fn classify_supervised(
    model: &SupervisedModel,
    image: &Image,
    image_index: u64,
) -> Result<usize> {
    if (image.width(), image.height()) != model.geometry {
        return Err(SnnError::Dimension(format!(
            "image geometry {}x{} does not match the model's {}x{}",
            image.width(),
            image.height(),
            model.geometry.0,
            model.geometry.1
        )));
    }
    let field = encode_image(image, &model.encoder, image_index)?;
    let losses = model.class_losses(&field)?;
    let mut best = 0;
    for (k, &loss) in losses.iter().enumerate() {
        if loss < losses[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Supervised trainer settings.
#[derive(Debug, Clone)]
pub struct SupervisedTrainConfig {
    /// Passes over the training split (the step budget may cut the last
    /// passes short).
    pub epochs: usize,
    /// Samples whose gradients are averaged into one update.
    pub batch_size: usize,
    /// Hard cap on optimizer updates across the whole run.
    pub max_steps: usize,
    pub schedule: LrSchedule,
    pub kernel: ResponseKernel,
    pub huber: HuberSpec,
    /// Resting level for off-class target rows.
    pub p_rest: f64,
    /// Seed for the per-epoch shuffle of the training order.
    pub seed: u64,
}

impl Default for SupervisedTrainConfig {
    fn default() -> Self {
        SupervisedTrainConfig {
            epochs: 25,
            batch_size: 1,
            max_steps: 30_000,
            schedule: LrSchedule::default(),
            kernel: ResponseKernel::default(),
            huber: HuberSpec::default(),
            p_rest: 0.0,
            seed: 0,
        }
    }
}

impl SupervisedTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(SnnError::InvalidParameter(
                "batch size must be at least 1".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(SnnError::InvalidParameter(
                "step budget must be at least 1".into(),
            ));
        }
        self.schedule.validate()?;
        self.kernel.validate()?;
        self.huber.validate()?;
        if !self.p_rest.is_finite() {
            return Err(SnnError::InvalidParameter(
                "resting level must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Training-split performance after one supervised epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedEpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean per-sample loss over the samples visited this epoch.
    pub mean_loss: f64,
    pub per_class_accuracy: Vec<f64>,
    pub overall_accuracy: f64,
}

/// Result of a supervised training run.
#[derive(Debug, Clone)]
pub struct SupervisedTrainOutcome {
    pub model: SupervisedModel,
    pub history: Vec<SupervisedEpochStats>,
    /// Optimizer updates actually taken.
    pub steps_taken: usize,
}

/// Train the readout weights from zero against per-class guidance
/// targets. Each epoch visits the training split in a fresh seeded
/// shuffle; each sample's encoder stream is keyed by its dataset
/// position, so runs are exactly reproducible.
pub fn train_supervised(
    dataset: &Dataset,
    guidance: &GuidanceBundle,
    encoder: &EncoderSpec,
    cfg: &SupervisedTrainConfig,
) -> Result<SupervisedTrainOutcome> {
    cfg.validate()?;
    encoder.validate()?;
    if dataset.train.is_empty() {
        return Err(SnnError::Data("training split is empty".into()));
    }
    let n = dataset.class_count();
    if guidance.class_count() != n {
        return Err(SnnError::Dimension(format!(
            "guidance covers {} classes but the dataset has {n}",
            guidance.class_count()
        )));
    }
    if guidance.duration() != encoder.duration {
        return Err(SnnError::Dimension(format!(
            "guidance window {} does not match encoder window {}",
            guidance.duration(),
            encoder.duration
        )));
    }
    let m = dataset.input_size();

    // Per-class targets are fixed; build them once.
    let targets: Vec<Matrix> = (0..n)
        .map(|k| guidance.target_for(k, cfg.p_rest))
        .collect::<Result<_>>()?;

    let mut weights = Matrix::zeros(m, n);
    let mut adam = AdamState::new(m, n);
    let mut steps_taken = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);

    let class_totals = dataset.train_counts();
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut visited = 0usize;
        let mut batch_grad = Matrix::zeros(m, n);
        let mut in_batch = 0usize;
        let mut budget_hit = false;

        // Visit samples in a fresh seeded order each epoch so one class
        // never monopolizes a long run of consecutive updates.
        let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        order_rng.set_stream(epoch as u64);
        order.shuffle(&mut order_rng);

        for &idx in &order {
            let sample = &dataset.train[idx];
            if steps_taken >= cfg.max_steps {
                budget_hit = true;
                break;
            }
            let field = encode_image(&sample.image, encoder, idx as u64)?;
            let responses = response_matrix(field.trains(), &cfg.kernel)?;
            let prediction = potential_trace(&weights, &responses)?;
            let target = &targets[sample.class_index];
            loss_sum += huber_loss(&prediction, target, &cfg.huber)?;
            visited += 1;

            let grad = grad_weights(&responses, &prediction, target, &cfg.huber)?;
            for (acc, &g) in batch_grad.values_mut().iter_mut().zip(grad.values()) {
                *acc += g;
            }
            in_batch += 1;

            if in_batch == cfg.batch_size {
                let scale = 1.0 / in_batch as f64;
                for v in batch_grad.values_mut() {
                    *v *= scale;
                }
                let lr = cfg.schedule.rate(steps_taken + 1);
                adam_step(&mut weights, &batch_grad, &mut adam, lr)?;
                steps_taken += 1;
                batch_grad = Matrix::zeros(m, n);
                in_batch = 0;
                if !weights.all_finite() {
                    return Err(SnnError::Numeric("weights diverged during training".into()));
                }
            }
        }

        // A partial batch at the epoch boundary still updates.
        if in_batch > 0 && steps_taken < cfg.max_steps {
            let scale = 1.0 / in_batch as f64;
            for v in batch_grad.values_mut() {
                *v *= scale;
            }
            let lr = cfg.schedule.rate(steps_taken + 1);
            adam_step(&mut weights, &batch_grad, &mut adam, lr)?;
            steps_taken += 1;
            if !weights.all_finite() {
                return Err(SnnError::Numeric("weights diverged during training".into()));
            }
        }

        // An epoch cut short by the step budget still records stats for the
        // samples it saw; an epoch that never ran records nothing.
        if visited > 0 {
            history.push(epoch_stats(
                epoch,
                loss_sum / visited as f64,
                dataset,
                &weights,
                guidance,
                encoder,
                cfg,
                &class_totals,
            )?);
        }
        if budget_hit {
            break;
        }
    }

    let model = SupervisedModel {
        geometry: dataset.geometry,
        classes: dataset.classes.clone(),
        weights,
        kernel: cfg.kernel.clone(),
        huber: cfg.huber.clone(),
        p_rest: cfg.p_rest,
        guidance: guidance.clone(),
        encoder: encoder.clone(),
    };
    model.validate()?;
    Ok(SupervisedTrainOutcome {
        model,
        history,
        steps_taken,
    })
}

/// Frozen-weight accuracy over the training split.
#[allow(clippy::too_many_arguments)]
fn epoch_stats(
    epoch: usize,
    mean_loss: f64,
    dataset: &Dataset,
    weights: &Matrix,
    guidance: &GuidanceBundle,
    encoder: &EncoderSpec,
    cfg: &SupervisedTrainConfig,
    class_totals: &[usize],
) -> Result<SupervisedEpochStats> {
    let n = dataset.class_count();
    let mut correct = vec![0usize; n];
    for (idx, sample) in dataset.train.iter().enumerate() {
        let field = encode_image(&sample.image, encoder, idx as u64)?;
        let responses = response_matrix(field.trains(), &cfg.kernel)?;
        let prediction = potential_trace(weights, &responses)?;
        let mut best = 0usize;
        let mut best_loss = f64::INFINITY;
        for k in 0..n {
            let target = guidance.target_for(k, cfg.p_rest)?;
            let loss = huber_loss(&prediction, &target, &cfg.huber)?;
            if loss < best_loss {
                best_loss = loss;
                best = k;
            }
        }
        if best == sample.class_index {
            correct[sample.class_index] += 1;
        }
    }
    let per_class_accuracy: Vec<f64> = correct
        .iter()
        .zip(class_totals)
        .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
        .collect();
    let total: usize = class_totals.iter().sum();
    let all_correct: usize = correct.iter().sum();
    Ok(SupervisedEpochStats {
        epoch,
        mean_loss,
        per_class_accuracy,
        overall_accuracy: if total == 0 {
            0.0
        } else {
            all_correct as f64 / total as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn response_filter_decays_and_accumulates() {
        let kernel = ResponseKernel::default();
        let rho = kernel.rho();
        let trains = vec![SpikeTrain::from_times(10, &[5, 7]).unwrap()];
        let g = response_matrix(&trains, &kernel).unwrap();
        assert_eq!(g.get(0, 4), 0.0);
        assert_relative_eq!(g.get(0, 5), 1.0);
        assert_relative_eq!(g.get(0, 6), rho);
        assert_relative_eq!(g.get(0, 7), rho * rho + 1.0);
        assert_relative_eq!(g.get(0, 8), (rho * rho + 1.0) * rho);
    }

    #[test]
    fn potential_trace_is_the_weighted_sum_of_responses() {
        let weights = Matrix::from_vec(2, 2, vec![1.0, 0.5, 2.0, 0.0]).unwrap();
        let responses = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = potential_trace(&weights, &responses).unwrap();
        assert_eq!(p.row(0), &[1.0 + 8.0, 2.0 + 10.0, 3.0 + 12.0]);
        assert_eq!(p.row(1), &[0.5, 1.0, 1.5]);
    }

    #[test]
    fn huber_is_quadratic_inside_and_linear_outside() {
        let spec = HuberSpec::default();
        assert_relative_eq!(spec.value(0.5), 0.125);
        assert_relative_eq!(spec.value(-0.5), 0.125);
        assert_relative_eq!(spec.value(1.0), 0.5);
        assert_relative_eq!(spec.value(3.0), 2.5);
        assert_relative_eq!(spec.derivative(0.5), 0.5);
        assert_relative_eq!(spec.derivative(4.0), 1.0);
        assert_relative_eq!(spec.derivative(-4.0), -1.0);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let m = rng.gen_range(2..=6);
            let n = rng.gen_range(1..=2);
            let duration = rng.gen_range(5..=15);
            let trains: Vec<SpikeTrain> = (0..m)
                .map(|_| {
                    let times: Vec<usize> = (1..=duration).filter(|_| rng.gen_bool(0.3)).collect();
                    SpikeTrain::from_times(duration, &times).unwrap()
                })
                .collect();
            let kernel = ResponseKernel::default();
            let spec = HuberSpec::default();
            let responses = response_matrix(&trains, &kernel).unwrap();
            let mut weights = Matrix::from_fn(m, n, |_, _| rng.gen_range(-0.5..0.5));
            let target = Matrix::from_fn(n, duration + 1, |_, _| rng.gen_range(-2.0..2.0));

            let prediction = potential_trace(&weights, &responses).unwrap();
            let grad = grad_weights(&responses, &prediction, &target, &spec).unwrap();

            let h = 1e-5;
            for i in 0..m {
                for j in 0..n {
                    let w0 = weights.get(i, j);
                    weights.set(i, j, w0 + h);
                    let up = huber_loss(
                        &potential_trace(&weights, &responses).unwrap(),
                        &target,
                        &spec,
                    )
                    .unwrap();
                    weights.set(i, j, w0 - h);
                    let down = huber_loss(
                        &potential_trace(&weights, &responses).unwrap(),
                        &target,
                        &spec,
                    )
                    .unwrap();
                    weights.set(i, j, w0);
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grad.get(i, j);
                    let scale = analytic.abs().max(numeric.abs()).max(1.0);
                    assert!(
                        (analytic - numeric).abs() / scale < 1e-5,
                        "gradient mismatch at ({i},{j}): analytic {analytic}, numeric {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn first_adam_update_moves_by_about_the_learning_rate() {
        let mut weights = Matrix::zeros(1, 2);
        let grad = Matrix::from_vec(1, 2, vec![3.0, -0.07]).unwrap();
        let mut state = AdamState::new(1, 2);
        adam_step(&mut weights, &grad, &mut state, 1e-3).unwrap();
        assert_relative_eq!(weights.get(0, 0), -1e-3, epsilon = 1e-9);
        assert_relative_eq!(weights.get(0, 1), 1e-3, epsilon = 1e-9);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn schedule_switches_after_sixty_percent_of_the_budget() {
        let s = LrSchedule::for_max_steps(1e-3, 1e-4, 30_000);
        assert_eq!(s.switch_step, 18_000);
        assert_eq!(s.rate(1), 1e-3);
        assert_eq!(s.rate(18_000), 1e-3);
        assert_eq!(s.rate(18_001), 1e-4);
        assert_eq!(s.rate(30_000), 1e-4);
    }

    #[test]
    fn guidance_targets_place_the_class_row_and_rest_elsewhere() {
        let traces = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bundle = GuidanceBundle::new(traces).unwrap();
        let target = bundle.target_for(1, -0.5).unwrap();
        assert_eq!(target.row(0), &[-0.5, -0.5, -0.5]);
        assert_eq!(target.row(1), &[4.0, 5.0, 6.0]);
        assert!(bundle.target_for(2, 0.0).is_err());
    }

    #[test]
    fn guidance_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("guidance.csv");
        let traces = Matrix::from_fn(3, 8, |k, t| (k as f64 + 1.0) * (t as f64 / 7.0) - 0.3);
        let bundle = GuidanceBundle::new(traces).unwrap();
        bundle.write_csv(&path).unwrap();
        let back = GuidanceBundle::read_csv(&path).unwrap();
        assert_eq!(bundle, back);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("0,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn guidance_csv_rejects_out_of_order_and_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,0.5,0.5\n").unwrap();
        assert!(GuidanceBundle::read_csv(&path).is_err());
        std::fs::write(&path, "0,0.5,0.5\n1,0.5\n").unwrap();
        assert!(GuidanceBundle::read_csv(&path).is_err());
    }

    fn toy_dataset() -> Dataset {
        let bright_top = crate::raster::Image::from_fn(8, 8, |_, y| if y < 4 { 0.9 } else { 0.0 });
        let bright_bottom =
            crate::raster::Image::from_fn(8, 8, |_, y| if y >= 4 { 0.9 } else { 0.0 });
        let train = vec![
            ("bottom".to_string(), bright_bottom.clone()),
            ("top".to_string(), bright_top.clone()),
            ("bottom".to_string(), bright_bottom.clone()),
            ("top".to_string(), bright_top.clone()),
        ];
        let test = vec![
            ("bottom".to_string(), bright_bottom),
            ("top".to_string(), bright_top),
        ];
        Dataset::from_samples(train, test).unwrap()
    }

    #[test]
    fn supervised_training_learns_separable_guidance_targets() {
        let dataset = toy_dataset();
        let encoder = EncoderSpec {
            duration: 30,
            seed: 4,
            ..Default::default()
        };
        // Hand-made guidance: class 0 ramps positive, class 1 ramps
        // negative, so the two targets are clearly distinguishable.
        let traces = Matrix::from_fn(2, 31, |k, t| {
            let ramp = t as f64 / 30.0 * 3.0;
            if k == 0 {
                ramp
            } else {
                -ramp
            }
        });
        let guidance = GuidanceBundle::new(traces).unwrap();
        let cfg = SupervisedTrainConfig {
            epochs: 40,
            schedule: LrSchedule::for_max_steps(1e-2, 1e-3, 200),
            ..Default::default()
        };
        let outcome = train_supervised(&dataset, &guidance, &encoder, &cfg).unwrap();
        assert!(outcome.steps_taken <= cfg.max_steps);
        let last = outcome.history.last().unwrap();
        assert!(
            last.overall_accuracy > 0.99,
            "expected the toy problem to be learned, got {}",
            last.overall_accuracy
        );
        // Loss decreases from the first epoch to the last.
        assert!(last.mean_loss < outcome.history[0].mean_loss);
        // Held-out samples classify correctly too.
        for (idx, sample) in dataset.test.iter().enumerate() {
            let decided = classify_supervised(&outcome.model, &sample.image, idx as u64).unwrap();
            assert_eq!(decided, sample.class_index);
        }
    }

    #[test]
    fn step_budget_caps_updates() {
        let dataset = toy_dataset();
        let encoder = EncoderSpec {
            duration: 20,
            seed: 4,
            ..Default::default()
        };
        let guidance = GuidanceBundle::new(Matrix::filled(2, 21, 1.0)).unwrap();
        let cfg = SupervisedTrainConfig {
            epochs: 50,
            max_steps: 7,
            ..Default::default()
        };
        let outcome = train_supervised(&dataset, &guidance, &encoder, &cfg).unwrap();
        assert_eq!(outcome.steps_taken, 7);
        // 4 samples per epoch, budget 7: the second epoch is cut short.
        assert_eq!(outcome.history.len(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let dataset = toy_dataset();
        let encoder = EncoderSpec {
            duration: 20,
            seed: 4,
            ..Default::default()
        };
        let guidance = GuidanceBundle::new(Matrix::from_fn(2, 21, |k, t| {
            if k == 0 {
                t as f64 * 0.1
            } else {
                -(t as f64) * 0.1
            }
        }))
        .unwrap();
        let cfg = SupervisedTrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let a = train_supervised(&dataset, &guidance, &encoder, &cfg).unwrap();
        let b = train_supervised(&dataset, &guidance, &encoder, &cfg).unwrap();
        assert_eq!(a.model.weights.values(), b.model.weights.values());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn mismatched_guidance_is_rejected() {
        let dataset = toy_dataset();
        let encoder = EncoderSpec {
            duration: 20,
            seed: 4,
            ..Default::default()
        };
        // Wrong class count.
        let guidance = GuidanceBundle::new(Matrix::filled(3, 21, 0.0)).unwrap();
        assert!(train_supervised(
            &dataset,
            &guidance,
            &encoder,
            &SupervisedTrainConfig::default()
        )
        .is_err());
        // Wrong window.
        let guidance = GuidanceBundle::new(Matrix::filled(2, 11, 0.0)).unwrap();
        assert!(train_supervised(
            &dataset,
            &guidance,
            &encoder,
            &SupervisedTrainConfig::default()
        )
        .is_err());
    }
}
