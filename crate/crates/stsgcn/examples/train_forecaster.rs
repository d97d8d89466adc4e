//! Train the separable graph forecaster end to end on synthetic motion and
//! save the best checkpoint plus a per-epoch CSV report.
//!
//! Run with: cargo run --release --example train_forecaster

use stsgcn::checkpoint::save_checkpoint;
use stsgcn::data::{make_windows, synth_generate, Representation, SynthSpec, WindowSet};
use stsgcn::model::{EncoderVariant, ModelConfig};
use stsgcn::rng::Rng;
use stsgcn::train::{train, TrainConfig};

fn main() -> stsgcn::Result<()> {
    let spec = SynthSpec {
        joints: 8,
        frames: 150,
        fps: 25,
        period_frames: 36.0,
        harmonics: 2,
        amplitude: 0.8,
        noise_sigma: 0.0,
        representation: Representation::Coords3d,
    };
    let model_cfg = ModelConfig::new(EncoderVariant::Separable, 8, 10, 25);
    let train_cfg = TrainConfig {
        epochs: 6,
        batch_size: 64,
        seed: 1,
        ..TrainConfig::default()
    };

    let mut sequence_seeds = Rng::new(train_cfg.seed);
    let mut split = |count: usize| -> stsgcn::Result<WindowSet> {
        let mut set = WindowSet::empty(8, 10, 25);
        for _ in 0..count {
            let seq = synth_generate(&spec, sequence_seeds.next_u64())?;
            set.append(make_windows(&seq.center_on_root(0)?, 10, 25, 1)?)?;
        }
        Ok(set)
    };
    let train_windows = split(4)?;
    let val_windows = split(1)?;
    println!(
        "training on {} windows, validating on {}",
        train_windows.len(),
        val_windows.len()
    );

    let (params, report) = train(&model_cfg, &train_cfg, &train_windows, &val_windows)?;
    for e in &report.epochs {
        println!(
            "epoch {:>2}: train {:.4} | val {:.4} | lr {} | {:.1}s",
            e.epoch, e.train_loss, e.val_loss, e.lr, e.seconds
        );
    }

    let dir = std::env::temp_dir().join("stsgcn-example-train");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    let ckpt = dir.join("checkpoint.txt");
    save_checkpoint(&params, &ckpt)?;
    let csv = dir.join("train_report.csv");
    report.write_csv(&csv)?;
    println!("wrote {}", ckpt.display());
    println!("wrote {}", csv.display());
    Ok(())
}
