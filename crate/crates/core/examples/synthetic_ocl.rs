//! Trains a compact label codec on a synthetic dataset and reports held-out
//! top-1 accuracy and rate.
//!
//! Usage: `cargo run --release --example synthetic_ocl -- [lambda] [epochs] [lr] [seed]`

use std::time::Instant;

use brainsem::codec::{ArchScale, LayerId};
use brainsem::data_io::{synthesize_dataset, synthesize_targets, Split, SyntheticSpec};
use brainsem::metrics::evaluate_labels;
use brainsem::trainer::{train_layer, validate, Targets, TrainConfig, TrainingData};
use brainsem::Exec;

fn main() -> brainsem::Result<()> {
    env_logger::init();
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let spec = SyntheticSpec {
        n_classes: 8,
        records_per_class: 50,
        channels: 16,
        samples: 128,
        sample_rate_hz: 1000,
        noise_sigma: 1.0,
        seed: 7,
    };
    let (signals, manifest) = synthesize_dataset(&spec)?;
    let targets = synthesize_targets(&signals, &manifest, 64, 32, 7)?;

    let mut config = TrainConfig::new(LayerId::Label);
    config.lambda = args.first().copied().unwrap_or(4e4);
    config.epochs = args.get(1).map_or(30, |&e| e as usize);
    config.lr = args.get(2).copied().unwrap_or(1e-3);
    config.seed = args.get(3).map_or(0, |&s| s as u64);
    config.arch = ArchScale::compact(spec.channels, spec.samples);

    let start = Instant::now();
    let data = TrainingData::from_manifest(&signals, &manifest);
    let outcome = train_layer(&config, &data, &Targets::Labels(&targets.labels), None, Exec::Parallel)?;
    for log in &outcome.history {
        println!("{log}");
    }
    let test = manifest.indices(Split::Test);
    let eval = evaluate_labels(&outcome.checkpoint.codec, &targets.labels, &signals, &test, Exec::Parallel)?;
    let scores = validate(
        &outcome.checkpoint.codec,
        &signals,
        &test,
        &Targets::Labels(&targets.labels),
        None,
        config.weights(),
        Exec::Parallel,
    )?;
    println!(
        "lambda={} top1={:.4} bps={:.5} test_distortion={:.6} seconds={:.1}",
        config.lambda,
        eval.accuracy()?,
        eval.bps(),
        scores.distortion,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
