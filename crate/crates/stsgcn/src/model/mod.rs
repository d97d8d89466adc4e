//! Model assembly: configuration, parameter containers, initialization,
//! the end-to-end forward pass and parameter accounting.

mod decoder;
mod encoder;

pub use decoder::{decoder_param_count, DecoderParams, DecoderStage};
pub use encoder::{
    export_adjacency, import_adjacency_csv, select_adjacency, AdjacencyKind, EncoderLayer,
    EncoderParams, EncoderVariant, LayerGraph, SharedGraph,
};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{BatchNormState, Tape, Tensor, Var};
use decoder::BoundStage;
use encoder::{encoder_layer_forward, BoundGraph, BoundLayer};
use serde::{Deserialize, Serialize};

/// Learnable batch-norm affine parameters plus running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Tensor,
    pub shift: Tensor,
    pub state: BatchNormState,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            scale: Tensor::filled(&[channels], 1.0).with_grad(),
            shift: Tensor::zeros(&[channels]).with_grad(),
            state: BatchNormState::new(channels),
        })
    }
}

fn default_channels() -> Vec<usize> {
    vec![3, 64, 32, 64, 3]
}

fn default_decoder_stages() -> usize {
    4
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: EncoderVariant,
    /// V: number of joints.
    pub joints: usize,
    /// T: observed frames.
    pub input_frames: usize,
    /// K: predicted frames.
    pub output_frames: usize,
    /// Encoder channel chain; first and last must be 3.
    #[serde(default = "default_channels")]
    pub channels: Vec<usize>,
    #[serde(default = "default_decoder_stages")]
    pub decoder_stages: usize,
}

impl ModelConfig {
    pub fn new(
        variant: EncoderVariant,
        joints: usize,
        input_frames: usize,
        output_frames: usize,
    ) -> Self {
        ModelConfig {
            variant,
            joints,
            input_frames,
            output_frames,
            channels: default_channels(),
            decoder_stages: default_decoder_stages(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.input_frames == 0 || self.output_frames == 0 {
            return Err(Error::InvalidConfig(
                "joints, input_frames and output_frames must be positive".into(),
            ));
        }
        if self.channels.len() < 2 {
            return Err(Error::InvalidConfig(
                "channel chain needs at least two entries".into(),
            ));
        }
        if self.channels.contains(&0) {
            return Err(Error::InvalidConfig("zero channel width".into()));
        }
        if self.channels.first() != Some(&3) || self.channels.last() != Some(&3) {
            return Err(Error::InvalidConfig(format!(
                "channel chain must start and end at 3 (coordinates), got {:?}",
                self.channels
            )));
        }
        if self.decoder_stages == 0 {
            return Err(Error::InvalidConfig(
                "decoder needs at least one stage".into(),
            ));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.channels.len() - 1
    }
}

/// Every trainable quantity of the model, plus batch-norm running state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl ModelParams {
    /// Deterministic initialization: weights and adjacencies drawn
    /// uniform(-1/sqrt(f), 1/sqrt(f)) with f the matrix's last extent
    /// (fan-in for decoder kernels), batch-norm scale 1 / shift 0, PReLU
    /// slopes 0.25.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let encoder = EncoderParams::init(
            config.variant,
            config.joints,
            config.input_frames,
            &config.channels,
            &mut rng,
        )?;
        let decoder = DecoderParams::init(
            config.input_frames,
            config.output_frames,
            config.decoder_stages,
            &mut rng,
        )?;
        Ok(ModelParams {
            config: config.clone(),
            encoder,
            decoder,
        })
    }

    /// Visit every trainable tensor in canonical order.
    pub fn for_each_param<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor)) {
        if let Some(shared) = &self.encoder.shared {
            f("encoder.shared.space".into(), &shared.space);
            f("encoder.shared.time".into(), &shared.time);
        }
        for (l, layer) in self.encoder.layers.iter().enumerate() {
            let p = format!("encoder.layer{l}");
            match &layer.graph {
                LayerGraph::Separable { space, time } => {
                    f(format!("{p}.space"), space);
                    f(format!("{p}.time"), time);
                }
                LayerGraph::Shared => {}
                LayerGraph::Full { space_time } => f(format!("{p}.space_time"), space_time),
                LayerGraph::Distinct {
                    space,
                    time,
                    weight_time,
                    norm_time,
                    slope_time,
                } => {
                    f(format!("{p}.space"), space);
                    f(format!("{p}.time"), time);
                    f(format!("{p}.weight_time"), weight_time);
                    f(format!("{p}.norm_time.scale"), &norm_time.scale);
                    f(format!("{p}.norm_time.shift"), &norm_time.shift);
                    f(format!("{p}.slope_time"), slope_time);
                }
            }
            f(format!("{p}.weight"), &layer.weight);
            f(format!("{p}.residual"), &layer.residual);
            f(format!("{p}.norm.scale"), &layer.norm.scale);
            f(format!("{p}.norm.shift"), &layer.norm.shift);
            f(format!("{p}.slope"), &layer.slope);
        }
        for (s, stage) in self.decoder.stages.iter().enumerate() {
            let p = format!("decoder.stage{s}");
            f(format!("{p}.kernel"), &stage.kernel);
            f(format!("{p}.bias"), &stage.bias);
            f(format!("{p}.slope"), &stage.slope);
        }
    }

    /// Mutable visit; same order as [`Self::for_each_param`].
    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        if let Some(shared) = &mut self.encoder.shared {
            f("encoder.shared.space".into(), &mut shared.space);
            f("encoder.shared.time".into(), &mut shared.time);
        }
        for (l, layer) in self.encoder.layers.iter_mut().enumerate() {
            let p = format!("encoder.layer{l}");
            match &mut layer.graph {
                LayerGraph::Separable { space, time } => {
                    f(format!("{p}.space"), space);
                    f(format!("{p}.time"), time);
                }
                LayerGraph::Shared => {}
                LayerGraph::Full { space_time } => f(format!("{p}.space_time"), space_time),
                LayerGraph::Distinct {
                    space,
                    time,
                    weight_time,
                    norm_time,
                    slope_time,
                } => {
                    f(format!("{p}.space"), space);
                    f(format!("{p}.time"), time);
                    f(format!("{p}.weight_time"), weight_time);
                    f(format!("{p}.norm_time.scale"), &mut norm_time.scale);
                    f(format!("{p}.norm_time.shift"), &mut norm_time.shift);
                    f(format!("{p}.slope_time"), slope_time);
                }
            }
            f(format!("{p}.weight"), &mut layer.weight);
            f(format!("{p}.residual"), &mut layer.residual);
            f(format!("{p}.norm.scale"), &mut layer.norm.scale);
            f(format!("{p}.norm.shift"), &mut layer.norm.shift);
            f(format!("{p}.slope"), &mut layer.slope);
        }
        for (s, stage) in self.decoder.stages.iter_mut().enumerate() {
            let p = format!("decoder.stage{s}");
            f(format!("{p}.kernel"), &mut stage.kernel);
            f(format!("{p}.bias"), &mut stage.bias);
            f(format!("{p}.slope"), &mut stage.slope);
        }
    }

    /// Visit batch-norm running statistics (non-trainable state).
    pub fn for_each_norm_state<'a>(&'a self, f: &mut dyn FnMut(String, &'a BatchNormState)) {
        for (l, layer) in self.encoder.layers.iter().enumerate() {
            if let LayerGraph::Distinct { norm_time, .. } = &layer.graph {
                f(format!("encoder.layer{l}.norm_time"), &norm_time.state);
            }
            f(format!("encoder.layer{l}.norm"), &layer.norm.state);
        }
    }

    pub fn for_each_norm_state_mut(&mut self, f: &mut dyn FnMut(String, &mut BatchNormState)) {
        for (l, layer) in self.encoder.layers.iter_mut().enumerate() {
            if let LayerGraph::Distinct { norm_time, .. } = &mut layer.graph {
                f(format!("encoder.layer{l}.norm_time"), &mut norm_time.state);
            }
            f(format!("encoder.layer{l}.norm"), &mut layer.norm.state);
        }
    }

    /// Flat copy of all trainable tensors, canonical order.
    pub fn flatten(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.for_each_param(&mut |_, t| out.push(t.clone()));
        out
    }

    /// Overwrite trainable tensors from a flat list in canonical order.
    pub fn load_flat(&mut self, tensors: &[Tensor]) -> Result<()> {
        let mut idx = 0;
        let mut err = None;
        self.for_each_param_mut(&mut |name, t| {
            if err.is_some() {
                return;
            }
            match tensors.get(idx) {
                Some(src) if src.shape() == t.shape() => {
                    t.data_mut().copy_from_slice(src.data());
                }
                Some(src) => {
                    err = Some(Error::CheckpointMismatch(format!(
                        "{name}: expected shape {:?}, got {:?}",
                        t.shape(),
                        src.shape()
                    )));
                }
                None => err = Some(Error::CheckpointMismatch("too few tensors".into())),
            }
            idx += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if idx != tensors.len() {
            return Err(Error::CheckpointMismatch(format!(
                "expected {idx} tensors, got {}",
                tensors.len()
            )));
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param_mut(&mut |_, t| t.zero_grad());
    }

    /// Register every trainable tensor on a tape.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut param_vars = Vec::new();
        let shared = self.encoder.shared.as_ref().map(|s| {
            let space = tape.leaf(&s.space);
            let time = tape.leaf(&s.time);
            param_vars.push(space);
            param_vars.push(time);
            (space, time)
        });
        let layers = self
            .encoder
            .layers
            .iter()
            .map(|layer| {
                let graph = match &layer.graph {
                    LayerGraph::Separable { space, time } => {
                        let sv = tape.leaf(space);
                        let tv = tape.leaf(time);
                        param_vars.push(sv);
                        param_vars.push(tv);
                        BoundGraph::Separable {
                            space: sv,
                            time: tv,
                        }
                    }
                    LayerGraph::Shared => BoundGraph::Shared,
                    LayerGraph::Full { space_time } => {
                        let stv = tape.leaf(space_time);
                        param_vars.push(stv);
                        BoundGraph::Full { space_time: stv }
                    }
                    LayerGraph::Distinct {
                        space,
                        time,
                        weight_time,
                        norm_time,
                        slope_time,
                    } => {
                        let sv = tape.leaf(space);
                        let tv = tape.leaf(time);
                        let wv = tape.leaf(weight_time);
                        let scv = tape.leaf(&norm_time.scale);
                        let shv = tape.leaf(&norm_time.shift);
                        let slv = tape.leaf(slope_time);
                        param_vars.extend([sv, tv, wv, scv, shv, slv]);
                        BoundGraph::Distinct {
                            space: sv,
                            time: tv,
                            weight_time: wv,
                            scale_time: scv,
                            shift_time: shv,
                            slope_time: slv,
                        }
                    }
                };
                let weight = tape.leaf(&layer.weight);
                let residual = tape.leaf(&layer.residual);
                let scale = tape.leaf(&layer.norm.scale);
                let shift = tape.leaf(&layer.norm.shift);
                let slope = tape.leaf(&layer.slope);
                param_vars.extend([weight, residual, scale, shift, slope]);
                BoundLayer {
                    graph,
                    weight,
                    residual,
                    scale,
                    shift,
                    slope,
                }
            })
            .collect();
        let decoder = self
            .decoder
            .stages
            .iter()
            .map(|stage| {
                let kernel = tape.leaf(&stage.kernel);
                let bias = tape.leaf(&stage.bias);
                let slope = tape.leaf(&stage.slope);
                param_vars.extend([kernel, bias, slope]);
                BoundStage {
                    kernel,
                    bias,
                    slope,
                }
            })
            .collect();
        BoundModel {
            shared,
            layers,
            decoder,
            param_vars,
        }
    }
}

/// Tape handles for one registration of the model parameters.
pub struct BoundModel {
    shared: Option<(Var, Var)>,
    layers: Vec<BoundLayer>,
    decoder: Vec<BoundStage>,
    param_vars: Vec<Var>,
}

impl BoundModel {
    /// Leaf vars in the canonical parameter order.
    pub fn param_vars(&self) -> &[Var] {
        &self.param_vars
    }

    /// After backward, copy accumulated gradients into the parameter tensors.
    pub fn write_grads(&self, tape: &Tape, params: &mut ModelParams) -> Result<()> {
        let mut idx = 0;
        let mut err = None;
        params.for_each_param_mut(&mut |name, t| {
            if err.is_some() {
                return;
            }
            match self.param_vars.get(idx) {
                Some(&v) => {
                    if let Err(e) = tape.write_grad(v, t) {
                        err = Some(e);
                    }
                }
                None => err = Some(Error::InvalidConfig(format!("no bound var for {name}"))),
            }
            idx += 1;
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Full forward pass: encoder layers then decoder, `[B,3,V,T] -> [B,3,V,K]`.
pub fn model_forward(
    tape: &mut Tape,
    params: &mut ModelParams,
    bound: &BoundModel,
    input: Var,
    train: bool,
) -> Result<Var> {
    let cfg = params.config.clone();
    let shape = tape.shape_of(input).to_vec();
    if shape.len() != 4
        || shape[1] != cfg.channels[0]
        || shape[2] != cfg.joints
        || shape[3] != cfg.input_frames
    {
        return Err(Error::shape(
            "model_forward",
            format!(
                "input must be [B,{},{},{}], got {shape:?}",
                cfg.channels[0], cfg.joints, cfg.input_frames
            ),
        ));
    }
    let mut h = input;
    for (layer, bound_layer) in params.encoder.layers.iter_mut().zip(&bound.layers) {
        h = encoder_layer_forward(tape, bound_layer, bound.shared, layer, h, train)?;
    }
    decoder::decoder_forward(tape, &bound.decoder, h)
}

/// Run the encoder only: `[B,3,V,T] -> [B,3,V,T]`.
pub fn encoder_forward(
    tape: &mut Tape,
    params: &mut ModelParams,
    bound: &BoundModel,
    input: Var,
    train: bool,
) -> Result<Var> {
    let mut h = input;
    for (layer, bound_layer) in params.encoder.layers.iter_mut().zip(&bound.layers) {
        h = encoder_layer_forward(tape, bound_layer, bound.shared, layer, h, train)?;
    }
    Ok(h)
}

/// Eval-mode prediction on a single input tensor.
pub fn predict(params: &ModelParams, input: &Tensor) -> Result<Tensor> {
    let mut p = params.clone();
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape);
    let x = tape.leaf(input);
    let y = model_forward(&mut tape, &mut p, &bound, x, false)?;
    Ok(tape.to_tensor(y))
}

/// Itemized count of trainable scalars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub groups: Vec<(String, usize)>,
    pub total: usize,
}

/// Exact trainable-parameter count for a configuration, itemized per group.
pub fn count_params(config: &ModelConfig) -> Result<ParamCount> {
    let params = ModelParams::init(config, 0)?;
    let mut groups = Vec::new();
    params.for_each_param(&mut |name, t| groups.push((name, t.numel())));
    let total = groups.iter().map(|(_, n)| n).sum();
    Ok(ParamCount { groups, total })
}
