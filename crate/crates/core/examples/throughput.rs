//! Per-window forward and training-pass cost for a few input sizes.
//!
//! cargo run --release -p seizurecast --example throughput

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seizurecast::architecture::{Network, NetworkConfig};
use seizurecast::engine::Tensor;

fn main() {
    let cases = [
        ("standard", NetworkConfig::standard(4, 2000), 20),
        ("reduced", NetworkConfig::reduced(4, 500), 20),
        ("standard", NetworkConfig::standard(23, 5120), 3),
    ];
    for (name, config, reps) in cases {
        let (h, w) = (config.input_channels, config.input_width);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::build(config, &mut rng).unwrap();
        let x = Tensor::new(&[h, w], (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

        let t = Instant::now();
        for _ in 0..reps {
            net.predict(&x).unwrap();
        }
        let forward = t.elapsed().as_secs_f64() / reps as f64;
        let t = Instant::now();
        for _ in 0..reps {
            net.sample_gradients(&x, 1, &mut rng).unwrap();
        }
        let train = t.elapsed().as_secs_f64() / reps as f64;
        println!(
            "{name:<9} {h}x{w:<5} forward {:7.2} ms   forward+backward {:7.2} ms",
            forward * 1e3,
            train * 1e3
        );
    }
}
