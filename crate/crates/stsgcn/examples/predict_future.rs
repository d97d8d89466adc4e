//! Forecast the continuation of a motion clip: feed the last T observed
//! frames through a quickly-trained model and write the predicted K frames
//! as a new sequence file.
//!
//! Run with: cargo run --release --example predict_future

use stsgcn::data::{make_windows, save_sequence, synth_generate, PoseSequence, Representation, SynthSpec};
use stsgcn::model::{predict, EncoderVariant, ModelConfig};
use stsgcn::train::{train, TrainConfig};
use stsgcn::Tensor;

fn main() -> stsgcn::Result<()> {
    let spec = SynthSpec {
        joints: 6,
        frames: 160,
        fps: 25,
        period_frames: 32.0,
        harmonics: 2,
        amplitude: 0.7,
        noise_sigma: 0.0,
        representation: Representation::Coords3d,
    };
    let (t, k) = (10, 25);
    let seq = synth_generate(&spec, 3)?.center_on_root(0)?;
    let windows = make_windows(&seq, t, k, 1)?;

    let model_cfg = ModelConfig::new(EncoderVariant::Separable, 6, t, k);
    let train_cfg = TrainConfig {
        epochs: 6,
        batch_size: 64,
        seed: 2,
        ..TrainConfig::default()
    };
    let (params, _) = train(&model_cfg, &train_cfg, &windows, &windows)?;

    // last T frames of the clip as a [1, 3, V, T] block
    let v = seq.joints();
    let f = seq.num_frames();
    let mut block = vec![0.0; 3 * v * t];
    for c in 0..3 {
        for vi in 0..v {
            for ti in 0..t {
                block[(c * v + vi) * t + ti] = seq.values()[((f - t + ti) * v + vi) * 3 + c];
            }
        }
    }
    let input = Tensor::new(vec![1, 3, v, t], block)?;
    let pred = predict(&params, &input)?;

    // back to frame-major layout
    let mut frames = vec![0.0; k * v * 3];
    for c in 0..3 {
        for vi in 0..v {
            for ki in 0..k {
                frames[(ki * v + vi) * 3 + c] = pred.data()[(c * v + vi) * k + ki];
            }
        }
    }
    let forecast = PoseSequence::new(v, seq.representation(), seq.fps(), frames)?;

    let dir = std::env::temp_dir().join("stsgcn-example-predict");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    let path = dir.join("forecast.poseseq");
    save_sequence(&forecast, &path, true)?;
    println!(
        "forecast {} frames ({} ms at {} fps) for {} joints",
        k,
        k * 1000 / 25,
        seq.fps(),
        v
    );
    println!("wrote {}", path.display());
    println!(
        "first predicted frame, joint 1: {:?}",
        forecast.joint(0, 1)
    );
    Ok(())
}
