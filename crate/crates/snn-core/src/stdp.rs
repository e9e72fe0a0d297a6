//! Spike-timing-dependent plasticity: the exponential learning window,
//! online unsupervised training for single-layer and two-layer models,
//! winner-based class calibration, and spike-count classification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::encoding::{encode_image, EncoderSpec, SpikeField, SpikeTrain};
use crate::error::{Result, SnnError};
use crate::matrix::SynapseMatrix;
use crate::neuron::{
    fire_and_inhibit, input_current, lif_step, simulate_layer, FiringEvent, LifParams, NeuronState,
};
use crate::raster::Image;

/// Plasticity constants for one synapse stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StdpParams {
    /// Potentiation amplitude (pre before post).
    pub a_plus: f64,
    /// Depression amplitude (pre after post).
    pub a_minus: f64,
    /// Potentiation decay constant, in time units.
    pub tau_plus: f64,
    /// Depression decay constant, in time units.
    pub tau_minus: f64,
    /// Potentiation pairs with pre spikes strictly inside the last
    /// `t_fore` time units before a firing (exclusive on both ends).
    pub t_fore: usize,
    /// Depression pairs with pre spikes strictly inside the `t_back`
    /// time units after a firing (exclusive on both ends).
    pub t_back: usize,
    /// Lower weight clamp.
    pub w_min: f64,
    /// Upper weight clamp.
    pub w_max: f64,
    /// Lower edge of the uniform initialization range.
    pub init_lo: f64,
    /// Upper edge of the uniform initialization range.
    pub init_hi: f64,
    /// Per-image penalty taken from synapses whose input stayed silent
    /// for the whole stimulus, applied to the winning neuron's column.
    pub silent_decay: f64,
}

impl Default for StdpParams {
    fn default() -> Self {
        let w_max = 1.4;
        StdpParams {
            a_plus: 0.8,
            a_minus: 0.3,
            tau_plus: 5.0,
            tau_minus: 5.0,
            t_fore: 7,
            t_back: 7,
            w_min: -1.2,
            w_max,
            init_lo: 0.6 * w_max,
            init_hi: 0.8 * w_max,
            silent_decay: 0.2,
        }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.a_plus,
            self.a_minus,
            self.tau_plus,
            self.tau_minus,
            self.w_min,
            self.w_max,
            self.init_lo,
            self.init_hi,
            self.silent_decay,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SnnError::InvalidParameter(
                "plasticity constants must be finite".into(),
            ));
        }
        if self.a_plus < 0.0 || self.a_minus < 0.0 {
            return Err(SnnError::InvalidParameter(format!(
                "window amplitudes must be non-negative, got a_plus {} a_minus {}",
                self.a_plus, self.a_minus
            )));
        }
        if self.tau_plus <= 0.0 || self.tau_minus <= 0.0 {
            return Err(SnnError::InvalidParameter(format!(
                "window decay constants must be positive, got tau_plus {} tau_minus {}",
                self.tau_plus, self.tau_minus
            )));
        }
        if self.t_fore == 0 || self.t_back == 0 {
            return Err(SnnError::InvalidParameter(
                "pairing windows t_fore and t_back must be at least 1".into(),
            ));
        }
        if self.w_min >= self.w_max {
            return Err(SnnError::InvalidParameter(format!(
                "weight bounds must satisfy w_min < w_max, got [{}, {}]",
                self.w_min, self.w_max
            )));
        }
        if !(self.init_lo <= self.init_hi
            && self.init_lo >= self.w_min
            && self.init_hi <= self.w_max)
        {
            return Err(SnnError::InvalidParameter(format!(
                "initialization range [{}, {}] must sit inside weight bounds [{}, {}]",
                self.init_lo, self.init_hi, self.w_min, self.w_max
            )));
        }
        if self.silent_decay < 0.0 {
            return Err(SnnError::InvalidParameter(format!(
                "silent-input decay must be non-negative, got {}",
                self.silent_decay
            )));
        }
        Ok(())
    }
}

/// Learning-window value for a post-minus-pre spike offset.
///
/// Non-negative offsets (pre at or before post) potentiate with
/// amplitude `a_plus` decaying over `tau_plus`; negative offsets (pre
/// after post) depress with amplitude `a_minus` decaying over
/// `tau_minus`. The window itself is unbounded in offset; the pairing
/// ranges `t_fore`/`t_back` decide which pairs get sampled.
pub fn stdp_window(offset: f64, params: &StdpParams) -> f64 {
    if offset >= 0.0 {
        params.a_plus * (-offset / params.tau_plus).exp()
    } else {
        -params.a_minus * (offset / params.tau_minus).exp()
    }
}

/// Apply the full pairing rule for one postsynaptic firing at time `t`.
///
/// For every presynaptic train, window values are summed over pre
/// spikes strictly inside `(t - t_fore, t)` (potentiation) and strictly
/// inside `(t, t + t_back)` (depression), and the summed delta is
/// applied in one clamped step. Spikes exactly at `t` or at the window
/// edges contribute nothing. This is the offline form; online training
/// splits the same pairs across time units to stay causal.
pub fn apply_stdp_at(
    synapses: &mut SynapseMatrix,
    pre: &[SpikeTrain],
    post: usize,
    t: usize,
    params: &StdpParams,
) -> Result<()> {
    if pre.len() != synapses.pre_count() {
        return Err(SnnError::Dimension(format!(
            "{} presynaptic trains against a matrix with {} input rows",
            pre.len(),
            synapses.pre_count()
        )));
    }
    if post >= synapses.post_count() {
        return Err(SnnError::Dimension(format!(
            "postsynaptic index {post} out of range for {} neurons",
            synapses.post_count()
        )));
    }
    for (i, train) in pre.iter().enumerate() {
        let mut delta = 0.0;
        for s in 1..params.t_fore {
            if t >= s && train.fired(t - s) {
                delta += stdp_window(s as f64, params);
            }
        }
        for s in 1..params.t_back {
            let u = t + s;
            if u <= train.duration() && train.fired(u) {
                delta += stdp_window(-(s as f64), params);
            }
        }
        if delta != 0.0 {
            synapses.nudge(i, post, delta);
        }
    }
    Ok(())
}

/// Once-per-image penalty on the winner's column: every synapse whose
/// input train stayed silent for the whole stimulus loses
/// `silent_decay`, clamped at the weight floor. Pair-based updates never
/// touch these synapses, so without this they would keep their
/// initialization forever.
pub fn micro_modify(
    synapses: &mut SynapseMatrix,
    pre: &[SpikeTrain],
    winner: usize,
    params: &StdpParams,
) -> Result<()> {
    if pre.len() != synapses.pre_count() {
        return Err(SnnError::Dimension(format!(
            "{} presynaptic trains against a matrix with {} input rows",
            pre.len(),
            synapses.pre_count()
        )));
    }
    if winner >= synapses.post_count() {
        return Err(SnnError::Dimension(format!(
            "winner index {winner} out of range for {} neurons",
            synapses.post_count()
        )));
    }
    for (i, train) in pre.iter().enumerate() {
        if train.is_silent() {
            synapses.nudge(i, winner, -params.silent_decay);
        }
    }
    Ok(())
}

/// Decision rule over one output layer's spike trains: most spikes
/// wins; equal counts go to the earlier first spike; equal first spikes
/// go to the lower index. Returns `None` when no neuron spiked at all.
pub fn pick_winner(spikes: &[SpikeTrain]) -> Option<usize> {
    let mut best: Option<(usize, usize, usize)> = None;
    for (j, train) in spikes.iter().enumerate() {
        let count = train.count();
        if count == 0 {
            continue;
        }
        let first = train
            .first_spike()
            .expect("non-empty train has a first spike");
        let better = match best {
            None => true,
            Some((bc, bf, _)) => count > bc || (count == bc && first < bf),
        };
        if better {
            best = Some((count, first, j));
        }
    }
    best.map(|(_, _, j)| j)
}

/// Network depth of an unsupervised model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnsupMode {
    Single,
    Bilayer,
}

impl UnsupMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnsupMode::Single => "unsup_single",
            UnsupMode::Bilayer => "unsup_bilayer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unsup_single" => Ok(UnsupMode::Single),
            "unsup_bilayer" => Ok(UnsupMode::Bilayer),
            other => Err(SnnError::Format(format!(
                "unknown unsupervised mode '{other}'"
            ))),
        }
    }
}

/// A trained unsupervised classifier: the synapse stages in feedforward
/// order, the parameters they were trained under, and the calibrated
/// mapping from output neurons to class labels.
#[derive(Debug, Clone)]
pub struct UnsupervisedModel {
    pub mode: UnsupMode,
    /// Input image geometry (width, height).
    pub geometry: (usize, usize),
    /// Class labels, in the dataset's lexicographic order.
    pub classes: Vec<String>,
    /// Output neuron -> index into `classes`.
    pub class_map: Vec<usize>,
    /// Synapse matrices in feedforward order.
    pub synapses: Vec<SynapseMatrix>,
    /// Plasticity constants per stage, aligned with `synapses`.
    pub stdp: Vec<StdpParams>,
    pub lif: LifParams,
    pub encoder: EncoderSpec,
}

impl UnsupervisedModel {
    pub fn output_neurons(&self) -> usize {
        self.synapses.last().map(|s| s.post_count()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        self.encoder.validate()?;
        for p in &self.stdp {
            p.validate()?;
        }
        let expected_stages = match self.mode {
            UnsupMode::Single => 1,
            UnsupMode::Bilayer => 2,
        };
        if self.synapses.len() != expected_stages {
            return Err(SnnError::Dimension(format!(
                "{} expects {expected_stages} synapse stage(s), found {}",
                self.mode.as_str(),
                self.synapses.len()
            )));
        }
        if self.stdp.len() != self.synapses.len() {
            return Err(SnnError::Dimension(
                "each synapse stage needs its plasticity constants".into(),
            ));
        }
        let m = self.geometry.0 * self.geometry.1;
        if self.synapses[0].pre_count() != m {
            return Err(SnnError::Dimension(format!(
                "first stage has {} input rows but the geometry {}x{} implies {m}",
                self.synapses[0].pre_count(),
                self.geometry.0,
                self.geometry.1
            )));
        }
        for pair in self.synapses.windows(2) {
            if pair[0].post_count() != pair[1].pre_count() {
                return Err(SnnError::Dimension(format!(
                    "stage output width {} does not match next stage input width {}",
                    pair[0].post_count(),
                    pair[1].pre_count()
                )));
            }
        }
        if self.class_map.len() != self.output_neurons() {
            return Err(SnnError::Dimension(format!(
                "class map covers {} neurons but the output layer has {}",
                self.class_map.len(),
                self.output_neurons()
            )));
        }
        if self.class_map.iter().any(|&c| c >= self.classes.len()) {
            return Err(SnnError::Dimension(
                "class map points past the class list".into(),
            ));
        }
        if self.encoder.duration != self.lif.sedsi_t {
            return Err(SnnError::InvalidParameter(format!(
                "encoder window {} and membrane stimulus window {} must agree",
                self.encoder.duration, self.lif.sedsi_t
            )));
        }
        Ok(())
    }

    /// Output-layer spike trains for one encoded stimulus.
    pub fn output_spikes(&self, field: &SpikeField) -> Result<Vec<SpikeTrain>> {
        let stages: Vec<&SynapseMatrix> = self.synapses.iter().collect();
        forward_spikes(&stages, &self.lif, field)
    }

    /// Class index decided for one encoded stimulus, or `None` when the
    /// output layer stayed silent.
    pub fn classify_field(&self, field: &SpikeField) -> Result<Option<usize>> {
        let spikes = self.output_spikes(field)?;
        Ok(pick_winner(&spikes).map(|j| self.class_map[j]))
    }
}

/// Encode one image with the model's own encoder and classify it.
/// `image_index` seeds the stochastic encoder stream, so a fixed index
/// reproduces the same decision.
pub fn classify(
    model: &UnsupervisedModel,
    image: &Image,
    image_index: u64,
) -> Result<Option<usize>> {
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
    model.classify_field(&field)
}

/// Training-set performance measured after one epoch's weight updates,
/// with the class map recalibrated for that epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Fraction of each class's training samples decided correctly
    /// (undecided samples count against).
    pub per_class_accuracy: Vec<f64>,
    pub overall_accuracy: f64,
    /// Whether a strict majority vote of winners maps output neurons
    /// onto classes one-to-one.
    pub bijective: bool,
}

/// Result of an unsupervised training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: UnsupervisedModel,
    pub history: Vec<EpochStats>,
    /// First 1-based epoch whose majority vote was bijective.
    pub first_bijective_epoch: Option<usize>,
}

/// Simulate the stage chain and return the last layer's spike trains.
fn forward_spikes(
    stages: &[&SynapseMatrix],
    lif: &LifParams,
    field: &SpikeField,
) -> Result<Vec<SpikeTrain>> {
    let mut trains: Vec<SpikeTrain> = field.trains().to_vec();
    for syn in stages {
        trains = simulate_layer(&trains, syn, lif)?.spikes;
    }
    Ok(trains)
}

/// Winner tallies over the training split with frozen weights:
/// `counts[class][neuron]` is how often `neuron` won on images of
/// `class`. Undecided images tally nowhere.
fn winner_counts(
    dataset: &Dataset,
    stages: &[&SynapseMatrix],
    lif: &LifParams,
    encoder: &EncoderSpec,
) -> Result<Vec<Vec<usize>>> {
    let n_out = stages.last().map(|s| s.post_count()).unwrap_or(0);
    let mut counts = vec![vec![0usize; n_out]; dataset.class_count()];
    for (idx, sample) in dataset.train.iter().enumerate() {
        let field = encode_image(&sample.image, encoder, idx as u64)?;
        let spikes = forward_spikes(stages, lif, &field)?;
        if let Some(j) = pick_winner(&spikes) {
            counts[sample.class_index][j] += 1;
        }
    }
    Ok(counts)
}

/// Assign a class to every output neuron from winner tallies, greedily
/// taking the largest count first (count ties prefer the lower class,
/// then the lower neuron). Classes and neurons are each used at most
/// once in the greedy phase; leftover neurons then take the remaining
/// classes in index order, so equal-sized sides always end bijective.
fn greedy_class_map(counts: &[Vec<usize>], class_count: usize) -> Vec<usize> {
    let n_out = counts.first().map(Vec::len).unwrap_or(0);
    let mut triples: Vec<(usize, usize, usize)> = Vec::with_capacity(class_count * n_out);
    for (k, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            triples.push((c, k, j));
        }
    }
    triples.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut map: Vec<Option<usize>> = vec![None; n_out];
    let mut class_used = vec![false; class_count];
    for (_, k, j) in triples {
        if map[j].is_none() && !class_used[k] {
            map[j] = Some(k);
            class_used[k] = true;
        }
    }
    let mut leftovers = (0..class_count).filter(|&k| !class_used[k]);
    map.into_iter()
        .enumerate()
        .map(|(j, slot)| {
            slot.or_else(|| leftovers.next())
                .unwrap_or(j % class_count.max(1))
        })
        .collect()
}

/// True when every output neuron has a strict, unique majority class
/// and those majorities cover every class exactly once.
fn majority_is_bijective(counts: &[Vec<usize>]) -> bool {
    let class_count = counts.len();
    let n_out = counts.first().map(Vec::len).unwrap_or(0);
    if class_count != n_out || class_count == 0 {
        return false;
    }
    let mut taken = vec![false; class_count];
    for j in 0..n_out {
        let column: Vec<usize> = counts.iter().map(|row| row[j]).collect();
        let max = *column.iter().max().unwrap();
        if max == 0 || column.iter().filter(|&&c| c == max).count() != 1 {
            return false;
        }
        let k = column.iter().position(|&c| c == max).unwrap();
        if taken[k] {
            return false;
        }
        taken[k] = true;
    }
    taken.into_iter().all(|t| t)
}

/// Fold winner tallies and a class map into per-class and overall
/// training accuracy. Undecided samples stay in the denominators.
fn stats_from_counts(
    epoch: usize,
    counts: &[Vec<usize>],
    class_totals: &[usize],
    class_map: &[usize],
) -> EpochStats {
    let mut correct_per_class = vec![0usize; counts.len()];
    for (k, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if class_map[j] == k {
                correct_per_class[k] += c;
            }
        }
    }
    let per_class_accuracy: Vec<f64> = correct_per_class
        .iter()
        .zip(class_totals)
        .map(|(&correct, &total)| {
            if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            }
        })
        .collect();
    let total: usize = class_totals.iter().sum();
    let correct: usize = correct_per_class.iter().sum();
    EpochStats {
        epoch,
        per_class_accuracy,
        overall_accuracy: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
        bijective: majority_is_bijective(counts),
    }
}

/// Shared trainer validation.
fn check_training_inputs(dataset: &Dataset, lif: &LifParams, encoder: &EncoderSpec) -> Result<()> {
    lif.validate()?;
    encoder.validate()?;
    if dataset.train.is_empty() {
        return Err(SnnError::Data("training split is empty".into()));
    }
    if encoder.duration != lif.sedsi_t {
        return Err(SnnError::InvalidParameter(format!(
            "encoder window {} and membrane stimulus window {} must agree",
            encoder.duration, lif.sedsi_t
        )));
    }
    Ok(())
}

/// One online pass over a single encoded stimulus for the single-stage
/// network. Returns the last neuron to fire, if any.
///
/// Causality invariant: the currents for time `t` are drawn before any
/// update that `t`'s spikes trigger, and depression owed to a pre spike
/// is applied at that pre spike's own time unit rather than when the
/// earlier postsynaptic firing happened. Weights in effect at `t`
/// therefore depend only on spikes strictly before `t`.
fn train_single_on_field(
    field: &SpikeField,
    synapses: &mut SynapseMatrix,
    lif: &LifParams,
    stdp: &StdpParams,
) -> Result<Option<usize>> {
    let pre = field.trains();
    let duration = field.duration();
    let n = synapses.post_count();
    let mut states: Vec<NeuronState> = (0..n).map(|_| NeuronState::resting(lif)).collect();
    // Output firings still young enough to owe depression, oldest first.
    let mut recent: Vec<(usize, usize)> = Vec::new();
    let mut last_winner = None;

    for t in 0..=duration {
        let currents = input_current(pre, synapses, t)?;
        for (state, &c) in states.iter_mut().zip(&currents) {
            lif_step(state, c, lif);
        }

        // Depression owed by earlier firings to pre spikes arriving now:
        // a firing at ts pairs with pre spikes strictly inside
        // (ts, ts + t_back).
        recent.retain(|&(ts, _)| ts + stdp.t_back > t);
        if !recent.is_empty() {
            let owed: Vec<(usize, f64)> = recent
                .iter()
                .map(|&(ts, j)| (j, stdp_window(ts as f64 - t as f64, stdp)))
                .collect();
            for (i, train) in pre.iter().enumerate() {
                if train.fired(t) {
                    for &(j, delta) in &owed {
                        synapses.nudge(i, j, delta);
                    }
                }
            }
        }

        if let Some(event) = fire_and_inhibit(&mut states, t, lif) {
            // Potentiation with pre spikes strictly inside (t - t_fore, t).
            for (i, train) in pre.iter().enumerate() {
                let mut delta = 0.0;
                for s in 1..stdp.t_fore {
                    if t >= s && train.fired(t - s) {
                        delta += stdp_window(s as f64, stdp);
                    }
                }
                if delta != 0.0 {
                    synapses.nudge(i, event.neuron, delta);
                }
            }
            recent.push((t, event.neuron));
            last_winner = Some(event.neuron);
        }
    }
    Ok(last_winner)
}

/// Train a single-stage unsupervised classifier: one output neuron per
/// class, online pair updates during each stimulus, the silent-input
/// penalty once per image, and a winner-vote class calibration after
/// every epoch. The returned model carries the final epoch's
/// calibration.
pub fn train_unsupervised_single(
    dataset: &Dataset,
    lif: &LifParams,
    stdp: &StdpParams,
    encoder: &EncoderSpec,
    epochs: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    check_training_inputs(dataset, lif, encoder)?;
    stdp.validate()?;
    let n = dataset.class_count();
    let m = dataset.input_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut synapses = SynapseMatrix::random(
        m,
        n,
        stdp.init_lo,
        stdp.init_hi,
        stdp.w_min,
        stdp.w_max,
        &mut rng,
    )?;

    let class_totals = dataset.train_counts();
    let mut history = Vec::with_capacity(epochs);
    let mut first_bijective_epoch = None;
    let mut class_map: Option<Vec<usize>> = None;

    for epoch in 1..=epochs {
        for (idx, sample) in dataset.train.iter().enumerate() {
            let field = encode_image(&sample.image, encoder, idx as u64)?;
            if let Some(winner) = train_single_on_field(&field, &mut synapses, lif, stdp)? {
                micro_modify(&mut synapses, field.trains(), winner, stdp)?;
            }
        }
        let counts = winner_counts(dataset, &[&synapses], lif, encoder)?;
        let map = greedy_class_map(&counts, n);
        let stats = stats_from_counts(epoch, &counts, &class_totals, &map);
        if stats.bijective && first_bijective_epoch.is_none() {
            first_bijective_epoch = Some(epoch);
        }
        history.push(stats);
        class_map = Some(map);
    }

    let class_map = match class_map {
        Some(map) => map,
        // Zero epochs still calibrates the untrained weights.
        None => greedy_class_map(&winner_counts(dataset, &[&synapses], lif, encoder)?, n),
    };

    let model = UnsupervisedModel {
        mode: UnsupMode::Single,
        geometry: dataset.geometry,
        classes: dataset.classes.clone(),
        class_map,
        synapses: vec![synapses],
        stdp: vec![stdp.clone()],
        lif: lif.clone(),
        encoder: encoder.clone(),
    };
    model.validate()?;
    Ok(TrainOutcome {
        model,
        history,
        first_bijective_epoch,
    })
}

/// How a stimulus window is cut into equal batching subsegments for the
/// two-stage trainer, and how far correlation reaches around the
/// anchoring firing inside each subsegment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsegmentSchedule {
    /// Number of equal subsegments per stimulus window.
    pub count: usize,
    /// Half-width of the pairing window around the anchor, in time
    /// units (closed on both sides).
    pub correlation_halfwidth: usize,
}

impl Default for SubsegmentSchedule {
    fn default() -> Self {
        SubsegmentSchedule {
            count: 10,
            correlation_halfwidth: 3,
        }
    }
}

impl SubsegmentSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(SnnError::InvalidParameter(
                "subsegment count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Length of one subsegment; the window must divide evenly.
    pub fn segment_length(&self, duration: usize) -> Result<usize> {
        self.validate()?;
        if duration == 0 || !duration.is_multiple_of(self.count) {
            return Err(SnnError::Dimension(format!(
                "stimulus window {duration} does not divide into {} equal subsegments",
                self.count
            )));
        }
        Ok(duration / self.count)
    }
}

/// Configuration for the two-stage unsupervised trainer.
///
/// Each stage carries its own plasticity constants: the hidden-to-output
/// stage needs weights orders of magnitude larger than the input stage,
/// because a winner-take-all hidden layer emits at most one spike per
/// time unit and that alone must be able to drive an output neuron over
/// threshold. The stage constants' `t_fore`/`t_back` are unused here;
/// pairing reach comes from the schedule's correlation half-width.
#[derive(Debug, Clone)]
pub struct BilayerTrainConfig {
    pub hidden_size: usize,
    pub schedule: SubsegmentSchedule,
    /// Input -> hidden stage constants.
    pub stdp_input: StdpParams,
    /// Hidden -> output stage constants.
    pub stdp_output: StdpParams,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BilayerTrainConfig {
    fn default() -> Self {
        BilayerTrainConfig {
            hidden_size: 100,
            schedule: SubsegmentSchedule::default(),
            stdp_input: StdpParams::default(),
            stdp_output: StdpParams {
                a_plus: 8.0,
                a_minus: 3.0,
                w_min: 0.0,
                w_max: 150.0,
                init_lo: 90.0,
                init_hi: 120.0,
                ..StdpParams::default()
            },
            epochs: 1,
            seed: 0,
        }
    }
}

impl BilayerTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(SnnError::InvalidParameter(
                "hidden layer must have neurons".into(),
            ));
        }
        self.schedule.validate()?;
        self.stdp_input.validate()?;
        self.stdp_output.validate()?;
        Ok(())
    }
}

/// One online pass over a single encoded stimulus for the two-stage
/// network. Both layers keep continuous membrane state across the whole
/// stimulus; a hidden spike at `t` feeds the output layer at `t`.
/// Weight updates are batched per subsegment and applied at its last
/// time unit, so they first influence the following subsegment.
fn train_bilayer_on_field(
    field: &SpikeField,
    syn01: &mut SynapseMatrix,
    syn12: &mut SynapseMatrix,
    lif: &LifParams,
    cfg: &BilayerTrainConfig,
) -> Result<()> {
    let duration = field.duration();
    let seg_len = cfg.schedule.segment_length(duration)?;
    let halfwidth = cfg.schedule.correlation_halfwidth;
    let input = field.trains();
    let hidden_count = syn01.post_count();
    let output_count = syn12.post_count();

    let mut hidden_states: Vec<NeuronState> = (0..hidden_count)
        .map(|_| NeuronState::resting(lif))
        .collect();
    let mut output_states: Vec<NeuronState> = (0..output_count)
        .map(|_| NeuronState::resting(lif))
        .collect();
    let mut hidden_spikes: Vec<SpikeTrain> = (0..hidden_count)
        .map(|_| SpikeTrain::silent(duration))
        .collect();
    let mut output_events: Vec<FiringEvent> = Vec::new();

    for t in 0..=duration {
        let c1 = input_current(input, syn01, t)?;
        for (state, &c) in hidden_states.iter_mut().zip(&c1) {
            lif_step(state, c, lif);
        }
        if let Some(event) = fire_and_inhibit(&mut hidden_states, t, lif) {
            hidden_spikes[event.neuron].set_fired(t);
        }

        let c2 = input_current(&hidden_spikes, syn12, t)?;
        for (state, &c) in output_states.iter_mut().zip(&c2) {
            lif_step(state, c, lif);
        }
        if let Some(event) = fire_and_inhibit(&mut output_states, t, lif) {
            output_events.push(event);
        }

        if t > 0 && t % seg_len == 0 {
            let seg_start = t + 1 - seg_len;
            // Anchor on the firing with the largest crossing potential in
            // this subsegment; potential ties keep the earlier firing.
            let mut anchor: Option<FiringEvent> = None;
            for event in output_events.iter().filter(|e| e.time >= seg_start) {
                match anchor {
                    Some(a) if event.crossing_potential <= a.crossing_potential => {}
                    _ => anchor = Some(*event),
                }
            }
            let Some(anchor) = anchor else { continue };

            // Pairing window around the anchor. The right edge stops at
            // the current time unit: later spikes have not happened yet
            // when this batch is applied.
            let lo = anchor.time.saturating_sub(halfwidth);
            let hi = (anchor.time + halfwidth).min(t);

            // Hidden -> output: hidden spikes near the anchor, against
            // the anchored output neuron. Offsets here may be zero
            // (same-unit feedforward drive), which potentiates.
            for (p, hidden_train) in hidden_spikes.iter().enumerate() {
                let mut delta = 0.0;
                for u in lo..=hi {
                    if hidden_train.fired(u) {
                        delta += stdp_window(anchor.time as f64 - u as f64, &cfg.stdp_output);
                    }
                }
                if delta != 0.0 {
                    syn12.nudge(p, anchor.neuron, delta);
                }
            }

            // Input -> hidden: for every hidden neuron that spiked in
            // the window, pair its spike times against input spikes in
            // the same window.
            for (p, hidden_train) in hidden_spikes.iter().enumerate() {
                let hidden_times: Vec<usize> =
                    (lo..=hi).filter(|&u| hidden_train.fired(u)).collect();
                if hidden_times.is_empty() {
                    continue;
                }
                for (i, train) in input.iter().enumerate() {
                    let mut delta = 0.0;
                    for u in lo..=hi {
                        if train.fired(u) {
                            for &tp in &hidden_times {
                                delta += stdp_window(tp as f64 - u as f64, &cfg.stdp_input);
                            }
                        }
                    }
                    if delta != 0.0 {
                        syn01.nudge(i, p, delta);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Train a two-stage unsupervised classifier: input to a winner-take-all
/// hidden layer, hidden to one output neuron per class, with subsegment-
/// batched pair updates anchored on the strongest output firing of each
/// subsegment. Calibration matches the single-stage trainer.
pub fn train_unsupervised_bilayer(
    dataset: &Dataset,
    lif: &LifParams,
    encoder: &EncoderSpec,
    cfg: &BilayerTrainConfig,
) -> Result<TrainOutcome> {
    check_training_inputs(dataset, lif, encoder)?;
    cfg.validate()?;
    cfg.schedule.segment_length(encoder.duration)?;

    let n = dataset.class_count();
    let m = dataset.input_size();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut syn01 = SynapseMatrix::random(
        m,
        cfg.hidden_size,
        cfg.stdp_input.init_lo,
        cfg.stdp_input.init_hi,
        cfg.stdp_input.w_min,
        cfg.stdp_input.w_max,
        &mut rng,
    )?;
    let mut syn12 = SynapseMatrix::random(
        cfg.hidden_size,
        n,
        cfg.stdp_output.init_lo,
        cfg.stdp_output.init_hi,
        cfg.stdp_output.w_min,
        cfg.stdp_output.w_max,
        &mut rng,
    )?;

    let class_totals = dataset.train_counts();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut first_bijective_epoch = None;
    let mut class_map: Option<Vec<usize>> = None;

    for epoch in 1..=cfg.epochs {
        for (idx, sample) in dataset.train.iter().enumerate() {
            let field = encode_image(&sample.image, encoder, idx as u64)?;
            train_bilayer_on_field(&field, &mut syn01, &mut syn12, lif, cfg)?;
        }
        let counts = winner_counts(dataset, &[&syn01, &syn12], lif, encoder)?;
        let map = greedy_class_map(&counts, n);
        let stats = stats_from_counts(epoch, &counts, &class_totals, &map);
        if stats.bijective && first_bijective_epoch.is_none() {
            first_bijective_epoch = Some(epoch);
        }
        history.push(stats);
        class_map = Some(map);
    }

    let class_map = match class_map {
        Some(map) => map,
        None => greedy_class_map(&winner_counts(dataset, &[&syn01, &syn12], lif, encoder)?, n),
    };

    let model = UnsupervisedModel {
        mode: UnsupMode::Bilayer,
        geometry: dataset.geometry,
        classes: dataset.classes.clone(),
        class_map,
        synapses: vec![syn01, syn12],
        stdp: vec![cfg.stdp_input.clone(), cfg.stdp_output.clone()],
        lif: lif.clone(),
        encoder: encoder.clone(),
    };
    model.validate()?;
    Ok(TrainOutcome {
        model,
        history,
        first_bijective_epoch,
    })
}
