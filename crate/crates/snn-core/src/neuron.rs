//! Leaky integrate-and-fire dynamics with winner-take-all lateral
//! inhibition and hard refractory periods.

use crate::encoding::SpikeTrain;
use crate::error::{Result, SnnError};
use crate::matrix::{Matrix, SynapseMatrix};

/// How the membrane potential decays between inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakMode {
    /// Move toward the resting level by a fixed amount per time unit,
    /// never crossing it.
    Constant,
    /// One explicit Euler step of `dp/dt = (-(p - p_rest) + r_m * i) / tau_m`
    /// per time unit.
    Exponential,
}

impl LeakMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LeakMode::Constant => "constant",
            LeakMode::Exponential => "exponential",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LeakMode::Constant),
            "exponential" => Ok(LeakMode::Exponential),
            other => Err(SnnError::InvalidParameter(format!(
                "unknown leak mode `{other}` (expected `constant` or `exponential`)"
            ))),
        }
    }
}

/// Membrane and layer parameters, in millivolts and integer time units.
#[derive(Debug, Clone, PartialEq)]
pub struct LifParams {
    /// Resting potential the leak pulls toward.
    pub p_rest: f64,
    /// Potential assigned on firing.
    pub p_reset: f64,
    /// Firing threshold.
    pub p_th: f64,
    /// Constant leak per time unit; stored non-positive, applied by
    /// magnitude toward `p_rest`.
    pub leak: f64,
    /// Absolute refractory period in time units.
    pub t_ref: usize,
    /// Lateral inhibition added to same-layer peers when a neuron fires.
    /// Also the floor potentials are clamped to.
    pub p_inhibit: f64,
    /// Stimulus window length in time units.
    pub sedsi_t: usize,
    pub leak_mode: LeakMode,
    /// Membrane time constant for the exponential mode.
    pub tau_m: f64,
    /// Membrane resistance for the exponential mode.
    pub r_m: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            p_rest: 0.0,
            p_reset: 0.0,
            p_th: 80.0,
            leak: -5.0,
            t_ref: 20,
            p_inhibit: -500.0,
            sedsi_t: 70,
            leak_mode: LeakMode::Constant,
            tau_m: 10.0,
            r_m: 1.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.p_rest,
            self.p_reset,
            self.p_th,
            self.leak,
            self.p_inhibit,
            self.tau_m,
            self.r_m,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(SnnError::InvalidParameter(
                "membrane parameters must be finite".into(),
            ));
        }
        if self.p_th <= self.p_rest {
            return Err(SnnError::InvalidParameter(format!(
                "threshold {} must exceed resting level {}",
                self.p_th, self.p_rest
            )));
        }
        if self.p_reset > self.p_th {
            return Err(SnnError::InvalidParameter(format!(
                "reset level {} must not exceed threshold {}",
                self.p_reset, self.p_th
            )));
        }
        if self.leak > 0.0 {
            return Err(SnnError::InvalidParameter(format!(
                "leak {} must be non-positive (it is applied by magnitude)",
                self.leak
            )));
        }
        if self.p_inhibit > 0.0 {
            return Err(SnnError::InvalidParameter(format!(
                "lateral inhibition {} must be non-positive",
                self.p_inhibit
            )));
        }
        if self.sedsi_t == 0 {
            return Err(SnnError::InvalidParameter(
                "stimulus window must be >= 1 time unit".into(),
            ));
        }
        if self.tau_m <= 0.0 {
            return Err(SnnError::InvalidParameter(format!(
                "membrane time constant {} must be positive",
                self.tau_m
            )));
        }
        Ok(())
    }
}

/// Mutable per-neuron state between time units.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronState {
    pub potential: f64,
    /// Remaining time units in which the neuron neither integrates input
    /// nor fires. While positive, the potential stays pinned at `p_reset`.
    pub refractory_remaining: usize,
}

impl NeuronState {
    /// Fresh neuron at the resting potential.
    pub fn resting(params: &LifParams) -> Self {
        NeuronState {
            potential: params.p_rest,
            refractory_remaining: 0,
        }
    }
}

/// Summed synaptic current into each postsynaptic neuron at time `t`:
/// the sum over presynaptic neurons firing at `t` of their weight row.
pub fn input_current(pre: &[SpikeTrain], synapses: &SynapseMatrix, t: usize) -> Result<Vec<f64>> {
    if pre.len() != synapses.pre_count() {
        return Err(SnnError::Dimension(format!(
            "{} presynaptic trains for a matrix with {} input rows",
            pre.len(),
            synapses.pre_count()
        )));
    }
    let mut currents = vec![0.0; synapses.post_count()];
    for (i, train) in pre.iter().enumerate() {
        if train.fired(t) {
            for (c, w) in currents.iter_mut().zip(synapses.weights.row(i)) {
                *c += w;
            }
        }
    }
    Ok(currents)
}

/// Advance one neuron by one time unit: integrate the input current,
/// then leak toward rest. Refractory neurons only count down; their
/// potential stays at the reset level and input is ignored.
pub fn lif_step(state: &mut NeuronState, current: f64, params: &LifParams) {
    if state.refractory_remaining > 0 {
        state.refractory_remaining -= 1;
        state.potential = params.p_reset;
        return;
    }
    match params.leak_mode {
        LeakMode::Constant => {
            state.potential += current;
            let step = params.leak.abs();
            let gap = params.p_rest - state.potential;
            if gap.abs() <= step {
                state.potential = params.p_rest;
            } else {
                state.potential += step * gap.signum();
            }
        }
        LeakMode::Exponential => {
            state.potential +=
                (-(state.potential - params.p_rest) + params.r_m * current) / params.tau_m;
        }
    }
}

/// A threshold crossing observed during simulation, with the membrane
/// potential at the moment of crossing (before the reset consumed it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiringEvent {
    pub neuron: usize,
    pub time: usize,
    pub crossing_potential: f64,
}

/// Winner-take-all firing for one layer at time `t`.
///
/// Among non-refractory neurons at or above threshold, the one with the
/// highest potential fires (ties go to the lowest index). The winner
/// resets to `p_reset` and enters its refractory period; every other
/// non-refractory neuron in the layer receives the lateral inhibition,
/// clamped at the inhibition floor. Refractory neurons are insensitive:
/// their pinned potential is not disturbed.
pub fn fire_and_inhibit(
    states: &mut [NeuronState],
    t: usize,
    params: &LifParams,
) -> Option<FiringEvent> {
    let mut winner: Option<(usize, f64)> = None;
    for (j, s) in states.iter().enumerate() {
        if s.refractory_remaining == 0 && s.potential >= params.p_th {
            match winner {
                Some((_, best)) if s.potential <= best => {}
                _ => winner = Some((j, s.potential)),
            }
        }
    }
    let (j, crossing) = winner?;
    for (k, s) in states.iter_mut().enumerate() {
        if k == j {
            s.potential = params.p_reset;
            s.refractory_remaining = params.t_ref;
        } else if s.refractory_remaining == 0 {
            s.potential = (s.potential + params.p_inhibit).max(params.p_inhibit);
        }
    }
    Some(FiringEvent {
        neuron: j,
        time: t,
        crossing_potential: crossing,
    })
}

/// Recorded simulation of one layer over a stimulus window.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Stored potentials, one row per neuron, one column per time unit
    /// (`0..=duration`). Values are post-update, so a firing neuron shows
    /// the reset level at its firing time.
    pub potentials: Matrix,
    /// Output spike train per neuron.
    pub spikes: Vec<SpikeTrain>,
    /// The at-most-one firing event per time unit, with its pre-reset
    /// crossing potential.
    pub firings: Vec<FiringEvent>,
}

impl LayerTrace {
    pub fn neuron_count(&self) -> usize {
        self.spikes.len()
    }

    pub fn duration(&self) -> usize {
        self.potentials.cols().saturating_sub(1)
    }

    /// Firing event at time `t`, if any.
    pub fn firing_at(&self, t: usize) -> Option<&FiringEvent> {
        self.firings.iter().find(|f| f.time == t)
    }
}

/// Simulate one layer over the full duration of the presynaptic trains.
///
/// Per time unit: sum the input current, advance every neuron with
/// [`lif_step`], then resolve winner-take-all firing. At most one neuron
/// in the layer fires per time unit, and stored potentials never rest
/// above threshold because firing consumes the excess in the same unit.
pub fn simulate_layer(
    pre: &[SpikeTrain],
    synapses: &SynapseMatrix,
    params: &LifParams,
) -> Result<LayerTrace> {
    params.validate()?;
    if pre.is_empty() {
        return Err(SnnError::Dimension(
            "cannot simulate a layer with no input trains".into(),
        ));
    }
    let duration = pre[0].duration();
    if pre.iter().any(|t| t.duration() != duration) {
        return Err(SnnError::Dimension(
            "presynaptic trains must share one duration".into(),
        ));
    }
    let n = synapses.post_count();
    let mut states: Vec<NeuronState> = (0..n).map(|_| NeuronState::resting(params)).collect();
    let mut potentials = Matrix::zeros(n, duration + 1);
    let mut spikes: Vec<SpikeTrain> = (0..n).map(|_| SpikeTrain::silent(duration)).collect();
    let mut firings = Vec::new();

    for t in 0..=duration {
        let currents = input_current(pre, synapses, t)?;
        for (s, &c) in states.iter_mut().zip(&currents) {
            lif_step(s, c, params);
        }
        if let Some(event) = fire_and_inhibit(&mut states, t, params) {
            spikes[event.neuron].set_fired(t);
            firings.push(event);
        }
        for (j, s) in states.iter().enumerate() {
            potentials.set(j, t, s.potential);
        }
    }

    Ok(LayerTrace {
        potentials,
        spikes,
        firings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::SpikeTrain;

    fn steady_input(duration: usize) -> Vec<SpikeTrain> {
        // One presynaptic neuron firing at every time unit from 1 on.
        let times: Vec<usize> = (1..=duration).collect();
        vec![SpikeTrain::from_times(duration, &times).unwrap()]
    }

    #[test]
    fn constant_leak_decays_and_clamps_at_rest() {
        let params = LifParams::default();
        let mut s = NeuronState {
            potential: 10.0,
            refractory_remaining: 0,
        };
        lif_step(&mut s, 0.0, &params);
        assert_eq!(s.potential, 5.0);
        lif_step(&mut s, 0.0, &params);
        assert_eq!(s.potential, 0.0);
        lif_step(&mut s, 0.0, &params);
        assert_eq!(s.potential, 0.0);
    }

    #[test]
    fn constant_leak_recovers_from_below_rest() {
        let params = LifParams::default();
        let mut s = NeuronState {
            potential: -12.0,
            refractory_remaining: 0,
        };
        lif_step(&mut s, 0.0, &params);
        assert_eq!(s.potential, -7.0);
        lif_step(&mut s, 0.0, &params);
        assert_eq!(s.potential, -2.0);
        lif_step(&mut s, 0.0, &params);
        assert_eq!(s.potential, 0.0);
    }

    #[test]
    fn exponential_leak_single_step() {
        let params = LifParams {
            leak_mode: LeakMode::Exponential,
            ..LifParams::default()
        };
        let mut s = NeuronState {
            potential: params.p_rest + 1.0,
            refractory_remaining: 0,
        };
        lif_step(&mut s, 0.0, &params);
        assert!((s.potential - (params.p_rest + 0.9)).abs() < 1e-12);
    }

    #[test]
    fn steady_drive_crosses_at_expected_times_with_refractory_gap() {
        // Weight 8 against leak 5 nets +3 per time unit, so the first
        // crossing lands at ceil(80 / 3) = 27. The refractory period then
        // pins the neuron for 20 units (28..=47); integration restarts at
        // 48 and the second crossing lands 27 units later at 74.
        let params = LifParams::default();
        let pre = steady_input(100);
        let syn = SynapseMatrix::filled(1, 1, 8.0, 0.0, 10.0).unwrap();
        let trace = simulate_layer(&pre, &syn, &params).unwrap();
        assert_eq!(trace.spikes[0].times(), vec![27, 74]);
        // Pinned at reset throughout the refractory window.
        for t in 27..=47 {
            assert_eq!(trace.potentials.get(0, t), params.p_reset, "t={t}");
        }
        // Integration resumed: potential is 3 at t=48.
        assert!((trace.potentials.get(0, 48) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn wta_highest_potential_wins_and_ties_break_low() {
        let params = LifParams::default();
        let mut states = vec![
            NeuronState {
                potential: 85.0,
                refractory_remaining: 0,
            },
            NeuronState {
                potential: 90.0,
                refractory_remaining: 0,
            },
            NeuronState {
                potential: 90.0,
                refractory_remaining: 0,
            },
        ];
        let event = fire_and_inhibit(&mut states, 5, &params).unwrap();
        assert_eq!(event.neuron, 1);
        assert_eq!(event.crossing_potential, 90.0);
        assert_eq!(states[1].potential, params.p_reset);
        assert_eq!(states[1].refractory_remaining, params.t_ref);
        assert_eq!(states[0].potential, 85.0 + params.p_inhibit);
        assert_eq!(states[2].potential, 90.0 + params.p_inhibit);
    }

    #[test]
    fn inhibition_clamps_at_floor_and_skips_refractory_peers() {
        let params = LifParams::default();
        let mut states = vec![
            NeuronState {
                potential: 95.0,
                refractory_remaining: 0,
            },
            NeuronState {
                potential: -450.0,
                refractory_remaining: 0,
            },
            NeuronState {
                potential: 0.0,
                refractory_remaining: 7,
            },
        ];
        fire_and_inhibit(&mut states, 0, &params).unwrap();
        assert_eq!(states[1].potential, params.p_inhibit);
        // The refractory peer keeps its pinned potential.
        assert_eq!(states[2].potential, 0.0);
        assert_eq!(states[2].refractory_remaining, 7);
    }

    #[test]
    fn no_firing_below_threshold() {
        let params = LifParams::default();
        let mut states = vec![NeuronState {
            potential: 79.999,
            refractory_remaining: 0,
        }];
        assert!(fire_and_inhibit(&mut states, 0, &params).is_none());
    }

    #[test]
    fn stored_potentials_never_exceed_threshold() {
        let params = LifParams::default();
        let pre = steady_input(120);
        let syn = SynapseMatrix::filled(1, 3, 9.5, 0.0, 10.0).unwrap();
        let trace = simulate_layer(&pre, &syn, &params).unwrap();
        for j in 0..3 {
            for t in 0..=120 {
                assert!(trace.potentials.get(j, t) <= params.p_th);
            }
        }
        // And the crossing potentials recorded pre-reset do exceed it.
        assert!(!trace.firings.is_empty());
        for f in &trace.firings {
            assert!(f.crossing_potential >= params.p_th);
        }
    }

    #[test]
    fn simulate_rejects_mismatched_dimensions() {
        let params = LifParams::default();
        let pre = steady_input(10);
        let syn = SynapseMatrix::filled(2, 1, 1.0, 0.0, 2.0).unwrap();
        assert!(simulate_layer(&pre, &syn, &params).is_err());
    }

    #[test]
    fn validate_rejects_threshold_at_or_below_rest() {
        let params = LifParams {
            p_th: 0.0,
            ..LifParams::default()
        };
        assert!(params.validate().is_err());
    }
}
