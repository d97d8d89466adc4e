//! Config-driven commands binding data, model, training and evaluation into
//! reproducible runs. The binary is a thin argument parser over these.

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    load_sequence, make_windows, save_sequence, synth_generate, FormatSpec, PoseSequence,
    Representation, SynthSpec, WindowSet,
};
use crate::error::{Error, Result};
use crate::eval::{default_horizons, evaluate};
use crate::model::AdjacencyKind;
use crate::model::{count_params, export_adjacency, predict, ModelConfig};
use crate::train::{train, LossKind, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Where training and evaluation read their sequences, and how.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Explicit sequence files per split. Empty lists fall back to the
    /// canonical synthetic-data locations under the output directory.
    pub train: Vec<PathBuf>,
    pub val: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub format: FormatSpec,
    pub stride: usize,
    /// Root-center coordinate sequences before windowing.
    pub center_root: bool,
    pub root_joint: usize,
    pub target_fps: Option<u32>,
    /// Evaluation horizons in frames; defaults to the standard columns
    /// clipped to K.
    pub horizons: Option<Vec<usize>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            format: FormatSpec::Native,
            stride: 1,
            center_root: true,
            root_joint: 0,
            target_fps: None,
            horizons: None,
        }
    }
}

/// Synthetic dataset description: the generator spec plus per-split sequence
/// counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub spec: SynthSpec,
    #[serde(default = "default_one")]
    pub train_sequences: usize,
    #[serde(default)]
    pub val_sequences: usize,
    #[serde(default)]
    pub test_sequences: usize,
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub overwrite: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("stsgcn-run"),
            overwrite: true,
        }
    }
}

/// The single config file driving every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Flag-level overrides; flag > file > default.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<crate::model::EncoderVariant>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::InvalidConfig(format!("{}: {e}", path.display()))
        })
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.train.seed = seed;
        }
        if let Some(variant) = overrides.variant {
            self.model.variant = variant;
        }
        if let Some(epochs) = overrides.epochs {
            self.train.epochs = epochs;
        }
        if let Some(out) = &overrides.out {
            self.output.dir = out.clone();
        }
    }

    /// Structural checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.stride == 0 {
            return Err(Error::InvalidConfig("data.stride must be positive".into()));
        }
        if let Some(horizons) = &self.data.horizons {
            for &h in horizons {
                if h == 0 || h > self.model.output_frames {
                    return Err(Error::InvalidConfig(format!(
                        "horizon {h} out of range 1..={}",
                        self.model.output_frames
                    )));
                }
            }
        }
        if let Some(synth) = &self.synth {
            synth.spec.validate()?;
            if synth.spec.joints != self.model.joints {
                return Err(Error::InvalidConfig(format!(
                    "synth.joints={} but model.joints={}",
                    synth.spec.joints, self.model.joints
                )));
            }
            let need = self.model.input_frames + self.model.output_frames;
            if synth.spec.frames < need {
                return Err(Error::InvalidConfig(format!(
                    "synth.frames={} is below T+K={need}",
                    synth.spec.frames
                )));
            }
        }
        Ok(())
    }

    fn horizons(&self) -> Vec<usize> {
        self.data
            .horizons
            .clone()
            .unwrap_or_else(|| default_horizons(self.model.output_frames))
    }

    fn data_dir(&self) -> PathBuf {
        self.output.dir.join("data")
    }

    fn synth_path(&self, split: &str, index: usize) -> PathBuf {
        self.data_dir().join(format!("{split}_{index:03}.poseseq"))
    }

    /// Sequence files for a split: explicit paths, or the canonical
    /// synthetic-data locations when the list is empty.
    pub fn split_paths(&self, split: Split) -> Result<Vec<PathBuf>> {
        let (explicit, synth_count) = match split {
            Split::Train => (
                &self.data.train,
                self.synth.as_ref().map(|s| s.train_sequences),
            ),
            Split::Val => (&self.data.val, self.synth.as_ref().map(|s| s.val_sequences)),
            Split::Test => (
                &self.data.test,
                self.synth.as_ref().map(|s| s.test_sequences),
            ),
        };
        if !explicit.is_empty() {
            return Ok(explicit.clone());
        }
        match synth_count {
            Some(n) => Ok((0..n).map(|i| self.synth_path(split.tag(), i)).collect()),
            None => Ok(Vec::new()),
        }
    }

    /// Format used for a split: explicit paths use `data.format`, canonical
    /// synthetic files are always native.
    fn split_format(&self, split: Split) -> FormatSpec {
        let explicit = match split {
            Split::Train => &self.data.train,
            Split::Val => &self.data.val,
            Split::Test => &self.data.test,
        };
        if explicit.is_empty() {
            FormatSpec::Native
        } else {
            self.data.format.clone()
        }
    }

    fn snapshot(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("config serialization: {e}")))?;
        let path = dir.join("config.json");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.output.dir)
            .map_err(|e| Error::io(&self.output.dir, e))?;
        self.snapshot(&self.output.dir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn tag(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

fn check_loss_representation(loss: LossKind, rep: Representation, path: &Path) -> Result<()> {
    let ok = matches!(
        (loss, rep),
        (LossKind::Mpjpe, Representation::Coords3d) | (LossKind::Mae, Representation::ExpMap)
    );
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "loss {loss:?} does not match representation {rep:?} of {}",
            path.display()
        )))
    }
}

fn preprocess(cfg: &RunConfig, mut seq: PoseSequence, path: &Path) -> Result<PoseSequence> {
    if let Some(fps) = cfg.data.target_fps {
        seq = seq.downsample(fps)?;
    }
    if seq.representation() == Representation::Coords3d && cfg.data.center_root {
        seq = seq.center_on_root(cfg.data.root_joint)?;
    }
    if seq.joints() != cfg.model.joints {
        return Err(Error::InvalidConfig(format!(
            "{} has V={} joints, model expects {}",
            path.display(),
            seq.joints(),
            cfg.model.joints
        )));
    }
    check_loss_representation(cfg.train.loss, seq.representation(), path)?;
    Ok(seq)
}

/// Load and window all sequences of a split.
pub fn load_split(cfg: &RunConfig, split: Split) -> Result<WindowSet> {
    let paths = cfg.split_paths(split)?;
    let format = cfg.split_format(split);
    let mut set = WindowSet::empty(
        cfg.model.joints,
        cfg.model.input_frames,
        cfg.model.output_frames,
    );
    for path in &paths {
        let seq = load_sequence(path, &format)?;
        let seq = preprocess(cfg, seq, path)?;
        set.append(make_windows(
            &seq,
            cfg.model.input_frames,
            cfg.model.output_frames,
            cfg.data.stride,
        )?)?;
    }
    Ok(set)
}

/// Generate the synthetic dataset files for every split.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let synth = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no synth section".into()))?;
    cfg.ensure_out_dir()?;
    std::fs::create_dir_all(cfg.data_dir()).map_err(|e| Error::io(cfg.data_dir(), e))?;

    let mut written = Vec::new();
    for (split, count, salt) in [
        (Split::Train, synth.train_sequences, 1u64),
        (Split::Val, synth.val_sequences, 2),
        (Split::Test, synth.test_sequences, 3),
    ] {
        let mut split_rng = crate::rng::Rng::new(cfg.train.seed ^ (salt << 32));
        for i in 0..count {
            let seq = synth_generate(&synth.spec, split_rng.next_u64())?;
            let path = cfg.synth_path(split.tag(), i);
            save_sequence(&seq, &path, cfg.output.overwrite)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Train on the configured data; writes the best checkpoint and the per-epoch
/// report into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    let windows = load_split(cfg, Split::Train)?;
    let val = load_split(cfg, Split::Val)?;
    cfg.ensure_out_dir()?;
    let (params, report) = train(&cfg.model, &cfg.train, &windows, &val)?;
    let ckpt = cfg.output.dir.join("checkpoint.txt");
    save_checkpoint(&params, &ckpt)?;
    let report_path = cfg.output.dir.join("train_report.csv");
    report.write_csv(&report_path)?;
    Ok((ckpt, report_path))
}

/// Evaluate a checkpoint on the test split; writes the report as CSV and as
/// an aligned table.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    let params = load_checkpoint(&cfg.model, checkpoint)?;
    let windows = load_split(cfg, Split::Test)?;
    cfg.ensure_out_dir()?;
    let fps = effective_fps(cfg);
    let report = evaluate(
        &params,
        &windows,
        cfg.train.batch_size,
        &cfg.horizons(),
        fps,
        cfg.train.loss,
    )?;
    let csv = cfg.output.dir.join("eval_report.csv");
    report.write_csv(&csv)?;
    let txt = cfg.output.dir.join("eval_report.txt");
    std::fs::write(&txt, report.render_table()).map_err(|e| Error::io(&txt, e))?;
    Ok((csv, txt))
}

fn effective_fps(cfg: &RunConfig) -> u32 {
    if let Some(fps) = cfg.data.target_fps {
        return fps;
    }
    if let Some(synth) = &cfg.synth {
        return synth.spec.fps;
    }
    match &cfg.data.format {
        FormatSpec::Csv(f) => f.fps,
        FormatSpec::Native => 25,
    }
}

/// Forecast the continuation of one sequence file; writes a K-frame sequence.
pub fn cmd_predict(cfg: &RunConfig, checkpoint: &Path, sequence: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let params = load_checkpoint(&cfg.model, checkpoint)?;
    let seq = load_sequence(sequence, &cfg.data.format)?;
    let seq = preprocess(cfg, seq, sequence)?;
    let t = cfg.model.input_frames;
    let f = seq.num_frames();
    if f < t {
        return Err(Error::Data(format!(
            "{} has {f} frames, need at least T={t}",
            sequence.display()
        )));
    }
    // last T observed frames as a [1,3,V,T] block
    let v = seq.joints();
    let mut block = vec![0.0; 3 * v * t];
    for c in 0..3 {
        for vi in 0..v {
            for ti in 0..t {
                block[(c * v + vi) * t + ti] = seq.values()[((f - t + ti) * v + vi) * 3 + c];
            }
        }
    }
    let input = crate::tensor::Tensor::new(vec![1, 3, v, t], block)?;
    let pred = predict(&params, &input)?;
    let k = cfg.model.output_frames;
    let mut frames = vec![0.0; k * v * 3];
    for c in 0..3 {
        for vi in 0..v {
            for ki in 0..k {
                frames[(ki * v + vi) * 3 + c] = pred.data()[(c * v + vi) * k + ki];
            }
        }
    }
    let out_seq = PoseSequence::new(v, seq.representation(), seq.fps(), frames)?;
    cfg.ensure_out_dir()?;
    let path = cfg.output.dir.join("prediction.poseseq");
    save_sequence(&out_seq, &path, cfg.output.overwrite)?;
    Ok(path)
}

/// Export one learnt adjacency stack from a checkpoint as CSV.
pub fn cmd_export_graph(
    cfg: &RunConfig,
    checkpoint: &Path,
    layer: usize,
    kind: AdjacencyKind,
) -> Result<PathBuf> {
    cfg.validate()?;
    let params = load_checkpoint(&cfg.model, checkpoint)?;
    cfg.ensure_out_dir()?;
    let path = cfg
        .output
        .dir
        .join(format!("adjacency_layer{layer}_{}.csv", kind.tag()));
    export_adjacency(&params.encoder, layer, kind, &path)?;
    Ok(path)
}

/// Itemized trainable-parameter breakdown, rendered for stdout.
pub fn cmd_count_params(cfg: &RunConfig) -> Result<String> {
    cfg.model.validate()?;
    let count = count_params(&cfg.model)?;
    let chain: Vec<String> = cfg.model.channels.iter().map(|c| c.to_string()).collect();
    let mut text = format!(
        "variant {} | V={} T={} K={} channels {} | decoder stages {}\n",
        cfg.model.variant.tag(),
        cfg.model.joints,
        cfg.model.input_frames,
        cfg.model.output_frames,
        chain.join("-"),
        cfg.model.decoder_stages
    );
    for (name, numel) in &count.groups {
        let _ = writeln!(text, "{name:<40} {numel:>10}");
    }
    let _ = writeln!(text, "{:<40} {:>10}", "total", count.total);
    Ok(text)
}

/// A ready-to-run configuration around the synthetic pipeline.
pub fn example_config() -> RunConfig {
    RunConfig {
        model: ModelConfig::new(crate::model::EncoderVariant::Separable, 12, 10, 25),
        train: TrainConfig::default(),
        data: DataConfig::default(),
        synth: Some(SynthConfig {
            spec: SynthSpec {
                joints: 12,
                frames: 500,
                fps: 25,
                period_frames: 40.0,
                harmonics: 2,
                amplitude: 1.0,
                noise_sigma: 0.0,
                representation: Representation::Coords3d,
            },
            train_sequences: 4,
            val_sequences: 1,
            test_sequences: 1,
        }),
        output: OutputConfig::default(),
    }
}
