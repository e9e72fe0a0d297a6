//! Spiking neural network engine for grayscale image classification.
//!
//! The crate covers the full pipeline:
//!
//! - [`encoding`]: receptive-field filtering and rate coding of images
//!   into per-pixel spike trains;
//! - [`neuron`]: leaky integrate-and-fire dynamics with winner-take-all
//!   lateral inhibition and refractory periods;
//! - [`stdp`]: unsupervised spike-timing-dependent training for single
//!   and bilayer networks, plus spike-count classification;
//! - [`supervised`]: a differentiable potential-accumulation relaxation
//!   trained by analytic gradients with Huber loss and Adam;
//! - [`data`]: dataset trees on disk, synthetic speckled datasets, and
//!   additive Gaussian noise at controlled signal-to-noise ratios;
//! - [`eval`]: batch evaluation, confusion matrices, and noise sweeps;
//! - [`model_io`]: checkpoints, feature-map export, and size statistics;
//! - [`config`]: the `key = value` run-configuration format.
//!
//! All randomness flows through explicit seeds, so every pipeline stage
//! is reproducible bit for bit.

pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod model_io;
pub mod neuron;
pub mod raster;
pub mod stdp;
pub mod supervised;

pub use config::RunConfig;
pub use data::{
    add_noise, generate_synthetic, load_dataset, noise_field, noise_sigma, signal_power, Dataset,
    Sample,
};
pub use encoding::{
    deterministic_frequency, encode_deterministic, encode_image, encode_random, normalize,
    EncoderSpec, EncodingMethod, ReceptiveFieldKernel, SpikeField, SpikeTrain,
};
pub use error::{Result, SnnError};
pub use eval::{
    evaluate, history_csv, noise_sweep, noise_sweep_csv, supervised_history_csv, EvalReport,
};
pub use matrix::{Matrix, SynapseMatrix};
pub use model_io::{
    export_feature_maps, load_checkpoint, model_stats, save_checkpoint, ModelStats, TrainedModel,
};
pub use neuron::{
    fire_and_inhibit, input_current, lif_step, simulate_layer, FiringEvent, LayerTrace, LeakMode,
    LifParams, NeuronState,
};
pub use raster::{load_image, read_pgm, write_pgm, Image};
pub use stdp::{
    apply_stdp_at, classify, micro_modify, pick_winner, stdp_window, train_unsupervised_bilayer,
    train_unsupervised_single, BilayerTrainConfig, EpochStats, StdpParams, SubsegmentSchedule,
    TrainOutcome, UnsupMode, UnsupervisedModel,
};
pub use supervised::{
    adam_step, classify_supervised, extract_guidance, grad_weights, huber_loss, potential_trace,
    response_matrix, train_supervised, AdamState, GuidanceBundle, HuberSpec, LrSchedule,
    ResponseKernel, SupervisedEpochStats, SupervisedModel, SupervisedTrainConfig,
    SupervisedTrainOutcome,
};
