//! Graph encoder: four layer designs over learnable, signed, directed
//! affinity matrices. Nothing symmetrizes, normalizes or clamps them.

use super::BatchNorm;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderVariant {
    /// Factored space-time adjacency (the proposed design).
    Separable,
    /// Dense, non-separable space-time adjacency.
    Full,
    /// Separate space and time networks intertwined by an activation.
    Distinct,
    /// Factored adjacency shared across all layers.
    #[serde(rename = "shared")]
    SeparableShared,
}

impl EncoderVariant {
    pub fn tag(&self) -> &'static str {
        match self {
            EncoderVariant::Separable => "separable",
            EncoderVariant::Full => "full",
            EncoderVariant::Distinct => "distinct",
            EncoderVariant::SeparableShared => "shared",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "separable" => Ok(EncoderVariant::Separable),
            "full" => Ok(EncoderVariant::Full),
            "distinct" => Ok(EncoderVariant::Distinct),
            "shared" => Ok(EncoderVariant::SeparableShared),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant '{other}' (expected separable|full|distinct|shared)"
            ))),
        }
    }
}

/// Adjacency parameters of one layer. Spatial stacks are `[T,V,V]` (one V x V
/// matrix per frame), temporal stacks `[V,T,T]` (one T x T matrix per joint),
/// and the dense matrix `[V,T,V,T]`.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum LayerGraph {
    Separable {
        space: Tensor,
        time: Tensor,
    },
    /// Uses the encoder-level shared pair.
    Shared,
    Full {
        space_time: Tensor,
    },
    Distinct {
        space: Tensor,
        time: Tensor,
        weight_time: Tensor, // [C_l, C_l]
        norm_time: BatchNorm,
        slope_time: Tensor,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub graph: LayerGraph,
    pub weight: Tensor,   // [C_l, C_{l+1}]
    pub residual: Tensor, // [C_l, C_{l+1}]
    pub norm: BatchNorm,  // over C_{l+1} channels
    pub slope: Tensor,    // [1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedGraph {
    pub space: Tensor,
    pub time: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<EncoderLayer>,
    /// Present iff the variant shares adjacencies across layers.
    pub shared: Option<SharedGraph>,
}

fn uniform_tensor(rng: &mut Rng, shape: &[usize]) -> Result<Tensor> {
    let fan = *shape.last().expect("non-empty shape") as f64;
    let bound = 1.0 / fan.sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.uniform(-bound, bound)).collect(),
    )
    .map(Tensor::with_grad)
}

fn space_stack(rng: &mut Rng, joints: usize, frames: usize) -> Result<Tensor> {
    uniform_tensor(rng, &[frames, joints, joints])
}

fn time_stack(rng: &mut Rng, joints: usize, frames: usize) -> Result<Tensor> {
    uniform_tensor(rng, &[joints, frames, frames])
}

impl EncoderParams {
    pub fn init(
        variant: EncoderVariant,
        joints: usize,
        frames: usize,
        channels: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::InvalidConfig(
                "channel chain needs at least two entries".into(),
            ));
        }
        if channels.contains(&0) {
            return Err(Error::InvalidConfig("zero channel width".into()));
        }
        let shared = match variant {
            EncoderVariant::SeparableShared => Some(SharedGraph {
                space: space_stack(rng, joints, frames)?,
                time: time_stack(rng, joints, frames)?,
            }),
            _ => None,
        };
        let mut layers = Vec::with_capacity(channels.len() - 1);
        for l in 0..channels.len() - 1 {
            let (cin, cout) = (channels[l], channels[l + 1]);
            let graph = match variant {
                EncoderVariant::Separable => LayerGraph::Separable {
                    space: space_stack(rng, joints, frames)?,
                    time: time_stack(rng, joints, frames)?,
                },
                EncoderVariant::SeparableShared => LayerGraph::Shared,
                EncoderVariant::Full => LayerGraph::Full {
                    space_time: uniform_tensor(rng, &[joints, frames, joints, frames])?,
                },
                EncoderVariant::Distinct => LayerGraph::Distinct {
                    space: space_stack(rng, joints, frames)?,
                    time: time_stack(rng, joints, frames)?,
                    weight_time: uniform_tensor(rng, &[cin, cin])?,
                    norm_time: BatchNorm::new(cin)?,
                    slope_time: Tensor::new(vec![1], vec![0.25])?.with_grad(),
                },
            };
            layers.push(EncoderLayer {
                graph,
                weight: uniform_tensor(rng, &[cin, cout])?,
                residual: uniform_tensor(rng, &[cin, cout])?,
                norm: BatchNorm::new(cout)?,
                slope: Tensor::new(vec![1], vec![0.25])?.with_grad(),
            });
        }
        Ok(EncoderParams { layers, shared })
    }
}

pub(crate) enum BoundGraph {
    Separable {
        space: Var,
        time: Var,
    },
    Shared,
    Full {
        space_time: Var,
    },
    Distinct {
        space: Var,
        time: Var,
        weight_time: Var,
        scale_time: Var,
        shift_time: Var,
        slope_time: Var,
    },
}

pub(crate) struct BoundLayer {
    pub graph: BoundGraph,
    pub weight: Var,
    pub residual: Var,
    pub scale: Var,
    pub shift: Var,
    pub slope: Var,
}

/// One encoder layer: graph contraction, channel projection, batch norm,
/// PReLU, plus a projected residual.
#[allow(clippy::too_many_arguments)]
pub(crate) fn encoder_layer_forward(
    tape: &mut Tape,
    bound: &BoundLayer,
    shared: Option<(Var, Var)>,
    layer: &mut EncoderLayer,
    input: Var,
    train: bool,
) -> Result<Var> {
    let contracted = match (&bound.graph, &mut layer.graph) {
        (BoundGraph::Separable { space, time }, _) => {
            let ht = tape.contract_time(*time, input)?;
            tape.contract_space(*space, ht)?
        }
        (BoundGraph::Shared, _) => {
            let (space, time) =
                shared.ok_or_else(|| Error::Unsupported("shared graph without shared vars".into()))?;
            let ht = tape.contract_time(time, input)?;
            tape.contract_space(space, ht)?
        }
        (BoundGraph::Full { space_time }, _) => tape.contract_full(*space_time, input)?,
        (
            BoundGraph::Distinct {
                space,
                time,
                weight_time,
                scale_time,
                shift_time,
                slope_time,
            },
            LayerGraph::Distinct { norm_time, .. },
        ) => {
            let ht = tape.contract_time(*time, input)?;
            let zt = tape.linear_channels(ht, *weight_time)?;
            let nt = tape.batch_norm(zt, *scale_time, *shift_time, &mut norm_time.state, train)?;
            let at = tape.prelu(nt, *slope_time)?;
            tape.contract_space(*space, at)?
        }
        _ => {
            return Err(Error::Unsupported(
                "layer parameters do not match the bound variant".into(),
            ))
        }
    };
    let projected = tape.linear_channels(contracted, bound.weight)?;
    let normed = tape.batch_norm(
        projected,
        bound.scale,
        bound.shift,
        &mut layer.norm.state,
        train,
    )?;
    let activated = tape.prelu(normed, bound.slope)?;
    let skip = tape.linear_channels(input, bound.residual)?;
    tape.add(activated, skip)
}

/// Adjacency stack selector for exporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyKind {
    Space,
    Time,
}

impl AdjacencyKind {
    pub fn tag(&self) -> &'static str {
        match self {
            AdjacencyKind::Space => "space",
            AdjacencyKind::Time => "time",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "space" => Ok(AdjacencyKind::Space),
            "time" => Ok(AdjacencyKind::Time),
            other => Err(Error::InvalidConfig(format!(
                "unknown adjacency kind '{other}' (expected space|time)"
            ))),
        }
    }
}

/// Write one adjacency stack as CSV: one matrix per block, each preceded by a
/// header line naming layer, kind and stack index.
pub fn export_adjacency(
    params: &EncoderParams,
    layer: usize,
    kind: AdjacencyKind,
    path: &Path,
) -> Result<()> {
    let stack = select_adjacency(params, layer, kind)?;
    let mut text = String::new();
    let (n, rows, cols) = (stack.shape()[0], stack.shape()[1], stack.shape()[2]);
    for idx in 0..n {
        let _ = writeln!(text, "# layer={layer} kind={} index={idx}", kind.tag());
        for r in 0..rows {
            let base = (idx * rows + r) * cols;
            for c in 0..cols {
                if c > 0 {
                    text.push(',');
                }
                let _ = write!(text, "{}", stack.data()[base + c]);
            }
            text.push('\n');
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The `[N, rows, cols]` stack for a layer and kind, as stored.
pub fn select_adjacency(
    params: &EncoderParams,
    layer: usize,
    kind: AdjacencyKind,
) -> Result<&Tensor> {
    let entry = params.layers.get(layer).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "layer {layer} out of range ({} layers)",
            params.layers.len()
        ))
    })?;
    fn pick<'a>(kind: AdjacencyKind, space: &'a Tensor, time: &'a Tensor) -> &'a Tensor {
        match kind {
            AdjacencyKind::Space => space,
            AdjacencyKind::Time => time,
        }
    }
    match &entry.graph {
        LayerGraph::Separable { space, time } => Ok(pick(kind, space, time)),
        LayerGraph::Distinct { space, time, .. } => Ok(pick(kind, space, time)),
        LayerGraph::Shared => {
            let shared = params
                .shared
                .as_ref()
                .ok_or_else(|| Error::Unsupported("shared variant without shared pair".into()))?;
            Ok(pick(kind, &shared.space, &shared.time))
        }
        LayerGraph::Full { .. } => Err(Error::Unsupported(
            "full variant stores a dense space-time matrix, not space/time stacks".into(),
        )),
    }
}

/// Parse an adjacency CSV back into `(header, matrix)` blocks.
pub fn import_adjacency_csv(path: &Path) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut blocks = Vec::new();
    let mut current: Option<(String, Vec<Vec<f64>>)> = None;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            if let Some(done) = current.take() {
                blocks.push(done);
            }
            current = Some((header.trim().to_string(), Vec::new()));
        } else {
            let row: Vec<f64> = trimmed
                .split(',')
                .map(|f| {
                    f.trim().parse().map_err(|_| Error::Parse {
                        path: path.into(),
                        line: lineno + 1,
                        detail: format!("'{f}' is not a number"),
                    })
                })
                .collect::<Result<_>>()?;
            match &mut current {
                Some((_, rows)) => rows.push(row),
                None => {
                    return Err(Error::Parse {
                        path: path.into(),
                        line: lineno + 1,
                        detail: "matrix row before any block header".into(),
                    })
                }
            }
        }
    }
    if let Some(done) = current.take() {
        blocks.push(done);
    }
    Ok(blocks)
}
