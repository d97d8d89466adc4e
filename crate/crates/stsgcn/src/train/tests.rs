use super::*;
use crate::data::{make_windows, synth_generate, Representation, SynthSpec};
use crate::model::{EncoderVariant, LayerGraph};
use crate::rng::Rng;
use crate::tensor::Tape;

fn tiny_model(v: usize, t: usize, k: usize) -> ModelConfig {
    ModelConfig {
        variant: EncoderVariant::Separable,
        joints: v,
        input_frames: t,
        output_frames: k,
        channels: vec![3, 6, 3],
        decoder_stages: 2,
    }
}

fn tiny_windows(v: usize, t: usize, k: usize, n: usize, seed: u64) -> WindowSet {
    let spec = SynthSpec {
        joints: v,
        frames: t + k + n - 1,
        fps: 25,
        period_frames: 7.0,
        harmonics: 2,
        amplitude: 0.5,
        noise_sigma: 0.0,
        representation: Representation::Coords3d,
    };
    let seq = synth_generate(&spec, seed).unwrap();
    make_windows(&seq, t, k, 1).unwrap()
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let model_cfg = tiny_model(4, 5, 3);
    let mut train_cfg = TrainConfig {
        epochs: 30,
        batch_size: 8,
        ..TrainConfig::default()
    };
    train_cfg.seed = 5;
    let windows = tiny_windows(4, 5, 3, 8, 1);
    let val = tiny_windows(4, 5, 3, 4, 2);

    let (params_a, report_a) = train(&model_cfg, &train_cfg, &windows, &val).unwrap();
    let (params_b, report_b) = train(&model_cfg, &train_cfg, &windows, &val).unwrap();
    assert_eq!(params_a.flatten(), params_b.flatten());
    let losses_a: Vec<f64> = report_a.epochs.iter().map(|e| e.train_loss).collect();
    let losses_b: Vec<f64> = report_b.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses_a, losses_b);

    let first = report_a.epochs.first().unwrap().train_loss;
    let last = report_a.epochs.last().unwrap().train_loss;
    assert!(
        last < first,
        "train loss did not decrease: {first} -> {last}"
    );
    assert_eq!(report_a.epochs.len(), 30);
}

#[test]
fn empty_window_set_is_rejected() {
    let model_cfg = tiny_model(4, 5, 3);
    let windows = tiny_windows(4, 5, 3, 4, 1);
    let empty = WindowSet::empty(4, 5, 3);
    let err = train(&model_cfg, &TrainConfig::default(), &empty, &windows).unwrap_err();
    assert!(err.to_string().contains("empty"));
}

#[test]
fn divergence_aborts_with_location() {
    let model_cfg = tiny_model(4, 5, 3);
    let train_cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        lr0: 1e300,
        decay_after: 100,
        ..TrainConfig::default()
    };
    let windows = tiny_windows(4, 5, 3, 8, 3);
    match train(&model_cfg, &train_cfg, &windows, &windows) {
        Err(Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn training_step_leaves_adjacency_asymmetric_and_touched() {
    let model_cfg = tiny_model(4, 4, 2);
    let train_cfg = TrainConfig {
        epochs: 1,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let windows = tiny_windows(4, 4, 2, 4, 9);
    let init = ModelParams::init(&model_cfg, train_cfg.seed).unwrap();
    let (trained, _) = train(&model_cfg, &train_cfg, &windows, &windows).unwrap();

    let (init_space, trained_space) = match (
        &init.encoder.layers[0].graph,
        &trained.encoder.layers[0].graph,
    ) {
        (LayerGraph::Separable { space: a, .. }, LayerGraph::Separable { space: b, .. }) => (a, b),
        _ => panic!("expected separable graphs"),
    };
    assert_ne!(init_space.data(), trained_space.data(), "step was a no-op");
    // no symmetrization: at least one off-diagonal pair must differ
    let v = model_cfg.joints;
    let first = &trained_space.data()[..v * v];
    let asymmetric = (0..v)
        .any(|r| (0..v).any(|c| r != c && (first[r * v + c] - first[c * v + r]).abs() > 1e-12));
    assert!(asymmetric, "adjacency became symmetric");
}

#[test]
fn mpjpe_is_invariant_to_joint_permutation_and_translation() {
    let mut rng = Rng::new(33);
    let (b, v, k) = (2, 5, 3);
    for _ in 0..10 {
        let pred: Vec<f64> = (0..b * 3 * v * k).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let target: Vec<f64> = (0..b * 3 * v * k).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let mut perm: Vec<usize> = (0..v).collect();
        rng.shuffle(&mut perm);
        let permute = |src: &[f64]| {
            let mut out = vec![0.0; src.len()];
            for bi in 0..b {
                for c in 0..3 {
                    for vi in 0..v {
                        for ki in 0..k {
                            out[((bi * 3 + c) * v + vi) * k + ki] =
                                src[((bi * 3 + c) * v + perm[vi]) * k + ki];
                        }
                    }
                }
            }
            out
        };
        let shift = [rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)];
        let translate = |src: &[f64]| {
            let mut out = src.to_vec();
            for bi in 0..b {
                for c in 0..3 {
                    for i in 0..v * k {
                        out[(bi * 3 + c) * v * k + i] += shift[c];
                    }
                }
            }
            out
        };

        let mut tape = Tape::new();
        let base = {
            let p = tape.constant(&[b, 3, v, k], pred.clone()).unwrap();
            let t = tape.constant(&[b, 3, v, k], target.clone()).unwrap();
            let l = tape.loss_mpjpe(p, t).unwrap();
            tape.value(l)[0]
        };
        let permuted = {
            let p = tape.constant(&[b, 3, v, k], permute(&pred)).unwrap();
            let t = tape.constant(&[b, 3, v, k], permute(&target)).unwrap();
            let l = tape.loss_mpjpe(p, t).unwrap();
            tape.value(l)[0]
        };
        let translated = {
            let p = tape.constant(&[b, 3, v, k], translate(&pred)).unwrap();
            let t = tape.constant(&[b, 3, v, k], translate(&target)).unwrap();
            let l = tape.loss_mpjpe(p, t).unwrap();
            tape.value(l)[0]
        };
        assert!((base - permuted).abs() <= 1e-10);
        assert!((base - translated).abs() <= 1e-10);
    }
}

#[test]
fn report_csv_lists_one_row_per_epoch() {
    let report = TrainReport {
        epochs: vec![
            EpochStats {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.6,
                lr: 0.01,
                seconds: 0.1,
            },
            EpochStats {
                epoch: 2,
                train_loss: 0.4,
                val_loss: 0.5,
                lr: 0.01,
                seconds: 0.1,
            },
        ],
    };
    let path = std::env::temp_dir().join(format!("stsgcn-report-{}.csv", std::process::id()));
    report.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "epoch,train_loss,val_loss,lr,seconds");
    assert!(lines[1].starts_with("1,0.5,0.6,0.01,"));
}
