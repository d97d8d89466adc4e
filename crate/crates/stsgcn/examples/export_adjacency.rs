//! Train a small model, export the learnt spatial and temporal affinity
//! stacks as CSV, and summarize what training produced: signed, directed
//! (asymmetric) connection weights.
//!
//! Run with: cargo run --release --example export_adjacency

use stsgcn::data::{make_windows, synth_generate, Representation, SynthSpec};
use stsgcn::model::{
    export_adjacency, import_adjacency_csv, select_adjacency, AdjacencyKind, EncoderVariant,
    ModelConfig,
};
use stsgcn::train::{train, TrainConfig};

fn main() -> stsgcn::Result<()> {
    let spec = SynthSpec {
        joints: 6,
        frames: 120,
        fps: 25,
        period_frames: 24.0,
        harmonics: 2,
        amplitude: 0.6,
        noise_sigma: 0.0,
        representation: Representation::Coords3d,
    };
    let seq = synth_generate(&spec, 9)?.center_on_root(0)?;
    let windows = make_windows(&seq, 10, 5, 1)?;
    let model_cfg = ModelConfig {
        variant: EncoderVariant::Separable,
        joints: 6,
        input_frames: 10,
        output_frames: 5,
        channels: vec![3, 16, 3],
        decoder_stages: 2,
    };
    let train_cfg = TrainConfig {
        epochs: 10,
        batch_size: 32,
        seed: 4,
        ..TrainConfig::default()
    };
    let (params, _) = train(&model_cfg, &train_cfg, &windows, &windows)?;

    let dir = std::env::temp_dir().join("stsgcn-example-adjacency");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    for (kind, label) in [(AdjacencyKind::Space, "spatial"), (AdjacencyKind::Time, "temporal")] {
        let path = dir.join(format!("layer0_{}.csv", kind.tag()));
        export_adjacency(&params.encoder, 0, kind, &path)?;
        let blocks = import_adjacency_csv(&path)?;
        let stack = select_adjacency(&params.encoder, 0, kind)?;
        let n = stack.shape()[1];
        let first = &stack.data()[..n * n];
        let mut asym = 0.0f64;
        let (mut pos, mut neg) = (0usize, 0usize);
        for r in 0..n {
            for c in 0..n {
                asym = asym.max((first[r * n + c] - first[c * n + r]).abs());
                if first[r * n + c] >= 0.0 {
                    pos += 1;
                } else {
                    neg += 1;
                }
            }
        }
        println!(
            "{label}: {} blocks of {n}x{n} -> {} | first block: {pos} positive / {neg} negative entries, max |A - A^T| = {asym:.3}",
            blocks.len(),
            path.display()
        );
    }
    println!("the learnt graphs are signed and directed; nothing symmetrizes or clamps them");
    Ok(())
}
