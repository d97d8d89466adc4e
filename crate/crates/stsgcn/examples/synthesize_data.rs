//! Generate a synthetic motion clip, write it in the native sequence format,
//! read it back, and cut it into (observed, future) training windows.
//!
//! Run with: cargo run --example synthesize_data

use stsgcn::data::{
    load_sequence, make_windows, save_sequence, synth_generate, FormatSpec, Representation,
    SynthSpec,
};

fn main() -> stsgcn::Result<()> {
    let spec = SynthSpec {
        joints: 8,
        frames: 120,
        fps: 25,
        period_frames: 30.0,
        harmonics: 2,
        amplitude: 0.6,
        noise_sigma: 0.01,
        representation: Representation::Coords3d,
    };
    let seq = synth_generate(&spec, 42)?;
    println!(
        "generated {} frames of {} joints at {} fps",
        seq.num_frames(),
        seq.joints(),
        seq.fps()
    );

    let dir = std::env::temp_dir().join("stsgcn-example-data");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    let path = dir.join("clip.poseseq");
    save_sequence(&seq, &path, true)?;
    println!("wrote {}", path.display());

    let loaded = load_sequence(&path, &FormatSpec::Native)?;
    assert_eq!(loaded, seq);
    println!("round trip through the native format is exact");

    let centered = loaded.center_on_root(0)?;
    let windows = make_windows(&centered, 10, 25, 1)?;
    println!(
        "cut {} windows of 10 observed + 25 future frames (root-centered)",
        windows.len()
    );
    let meta = windows.meta(windows.len() - 1);
    println!(
        "last window starts at frame {} of sequence {}",
        meta.start_frame, meta.sequence_id
    );
    Ok(())
}
