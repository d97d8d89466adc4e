//! End-to-end command pipeline: reproducibility of primary outputs, config
//! precedence, and the binary's error contract.

use std::path::{Path, PathBuf};
use std::process::Command;
use stsgcn::cli::{
    cmd_count_params, cmd_eval, cmd_export_graph, cmd_predict, cmd_synth, cmd_train, Overrides,
    RunConfig,
};
use stsgcn::data::{load_sequence, FormatSpec};
use stsgcn::model::AdjacencyKind;

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stsgcn-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(out: &Path) -> RunConfig {
    let mut cfg = stsgcn::cli::example_config();
    cfg.model.joints = 5;
    cfg.model.channels = vec![3, 8, 3];
    cfg.model.decoder_stages = 2;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 32;
    cfg.train.seed = 3;
    let synth = cfg.synth.as_mut().unwrap();
    synth.spec.joints = 5;
    synth.spec.frames = 80;
    synth.train_sequences = 2;
    synth.val_sequences = 1;
    synth.test_sequences = 1;
    cfg.output.dir = out.to_path_buf();
    cfg
}

#[test]
fn identical_seeds_give_byte_identical_primary_outputs() {
    let base = tmp("repro");
    let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
    for run in 0..2 {
        let out = base.join(format!("run{run}"));
        let cfg = small_config(&out);
        let files = cmd_synth(&cfg).unwrap();
        let (ckpt, _) = cmd_train(&cfg).unwrap();
        let pred = cmd_predict(&cfg, &ckpt, &files[0]).unwrap();
        let adj = cmd_export_graph(&cfg, &ckpt, 0, AdjacencyKind::Space).unwrap();
        outputs.push(vec![
            std::fs::read(&files[0]).unwrap(),
            std::fs::read(&ckpt).unwrap(),
            std::fs::read(&pred).unwrap(),
            std::fs::read(&adj).unwrap(),
        ]);
    }
    for (i, what) in ["synthetic data", "checkpoint", "prediction", "adjacency export"]
        .iter()
        .enumerate()
    {
        assert_eq!(outputs[0][i], outputs[1][i], "{what} differs between runs");
    }
}

#[test]
fn rerunning_in_place_is_idempotent() {
    let out = tmp("idem");
    let cfg = small_config(&out);
    cmd_synth(&cfg).unwrap();
    let (ckpt, _) = cmd_train(&cfg).unwrap();
    let first = std::fs::read(&ckpt).unwrap();
    let (ckpt2, _) = cmd_train(&cfg).unwrap();
    assert_eq!(first, std::fs::read(&ckpt2).unwrap());
}

#[test]
fn eval_never_mutates_the_checkpoint_and_emits_reports() {
    let out = tmp("eval");
    let cfg = small_config(&out);
    cmd_synth(&cfg).unwrap();
    let (ckpt, _) = cmd_train(&cfg).unwrap();
    let before = std::fs::read(&ckpt).unwrap();
    let (csv, txt) = cmd_eval(&cfg, &ckpt).unwrap();
    assert_eq!(before, std::fs::read(&ckpt).unwrap());
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("horizon_frames,"));
    assert!(std::fs::read_to_string(&txt).unwrap().contains("zero-velocity"));
    // run twice: byte-identical evaluation report
    let (csv2, _) = cmd_eval(&cfg, &ckpt).unwrap();
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&csv2).unwrap());
}

#[test]
fn prediction_loads_as_a_k_frame_sequence() {
    let out = tmp("predict");
    let cfg = small_config(&out);
    let files = cmd_synth(&cfg).unwrap();
    let (ckpt, _) = cmd_train(&cfg).unwrap();
    let pred_path = cmd_predict(&cfg, &ckpt, files.last().unwrap()).unwrap();
    let seq = load_sequence(&pred_path, &FormatSpec::Native).unwrap();
    assert_eq!(seq.num_frames(), cfg.model.output_frames);
    assert_eq!(seq.joints(), cfg.model.joints);
}

#[test]
fn count_params_breakdown_sums_to_total() {
    let out = tmp("count");
    let cfg = small_config(&out);
    let text = cmd_count_params(&cfg).unwrap();
    let mut total_line = 0usize;
    let mut sum = 0usize;
    for line in text.lines().skip(1) {
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap();
        let n: usize = parts.next().unwrap().parse().unwrap();
        if name == "total" {
            total_line = n;
        } else {
            sum += n;
        }
    }
    assert_eq!(sum, total_line);
}

#[test]
fn flag_overrides_beat_file_values() {
    let out = tmp("override");
    let mut cfg = small_config(&out);
    cfg.apply(&Overrides {
        seed: Some(99),
        variant: Some(stsgcn::model::EncoderVariant::Full),
        epochs: Some(5),
        out: Some(out.join("elsewhere")),
    });
    assert_eq!(cfg.train.seed, 99);
    assert_eq!(cfg.model.variant, stsgcn::model::EncoderVariant::Full);
    assert_eq!(cfg.train.epochs, 5);
    assert_eq!(cfg.output.dir, out.join("elsewhere"));
}

#[test]
fn config_snapshot_lands_in_the_run_directory() {
    let out = tmp("snapshot");
    let cfg = small_config(&out);
    cmd_synth(&cfg).unwrap();
    let snap = out.join("config.json");
    let text = std::fs::read_to_string(&snap).unwrap();
    let parsed: RunConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.train.seed, cfg.train.seed);
    assert_eq!(parsed.model.joints, cfg.model.joints);
}

#[test]
fn checkpoint_config_mismatch_reports_shape_diff() {
    let out = tmp("mismatch");
    let cfg = small_config(&out);
    cmd_synth(&cfg).unwrap();
    let (ckpt, _) = cmd_train(&cfg).unwrap();
    let mut other = cfg.clone();
    other.model.variant = stsgcn::model::EncoderVariant::Full;
    let err = cmd_eval(&other, &ckpt).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("expected shape"), "{msg}");
}

/// Drive the installed binary itself: exit codes and the one-line error
/// contract on stderr.
#[test]
fn binary_reports_one_line_errors_and_exit_codes() {
    let out = tmp("bin");
    let cfg_path = out.join("config.json");
    let cfg = small_config(&out.join("run"));
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let bin = env!("CARGO_BIN_EXE_stsgcn");
    let ok = Command::new(bin)
        .args(["--config", cfg_path.to_str().unwrap(), "count-params"])
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("total"));

    // missing checkpoint: nonzero exit, single-line machine-parsable error
    let bad = Command::new(bin)
        .args([
            "--config",
            cfg_path.to_str().unwrap(),
            "eval",
            "--checkpoint",
            out.join("missing.txt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");

    // variant override propagates to count-params
    let full = Command::new(bin)
        .args([
            "--config",
            cfg_path.to_str().unwrap(),
            "--variant",
            "full",
            "count-params",
        ])
        .output()
        .unwrap();
    assert!(full.status.success());
    assert!(String::from_utf8_lossy(&full.stdout).contains("space_time"));
}
