//! Deterministic fixtures for the criterion benchmarks: inputs sized
//! like the real workload, built once outside the timed sections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snn_core::{encode_image, EncoderSpec, Image, Matrix, SpikeTrain, SynapseMatrix};

/// Smooth synthetic image with full dynamic range.
pub fn bench_image(side: usize) -> Image {
    Image::from_fn(side, side, |x, y| {
        let u = x as f64 / side as f64;
        let v = y as f64 / side as f64;
        0.5 + 0.5 * (6.0 * u).sin() * (4.0 * v).cos()
    })
}

/// Spike trains for a `side x side` image under the default encoder.
pub fn bench_trains(side: usize, seed: u64) -> Vec<SpikeTrain> {
    let encoder = EncoderSpec {
        seed,
        ..EncoderSpec::default()
    };
    let field = encode_image(&bench_image(side), &encoder, 0).expect("encoding succeeds");
    field.trains().to_vec()
}

/// Random synapse matrix inside the default weight bounds.
pub fn bench_synapses(pre: usize, post: usize, seed: u64) -> SynapseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SynapseMatrix::random(pre, post, 0.6, 1.0, -1.2, 1.4, &mut rng).expect("valid bounds")
}

/// Dense matrix with entries uniform in `[-1, 1]`.
pub fn bench_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0))
}
