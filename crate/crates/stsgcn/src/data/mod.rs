//! Pose sequences: representation, file I/O, synthetic generation and
//! windowing into (observed, future) training pairs.

mod io;
mod synth;

pub use io::{load_sequence, save_sequence, CsvFormat, FormatSpec};
pub use synth::{synth_generate, SynthSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// 3D joint coordinates.
    Coords3d,
    /// Axis-angle (exponential map) joint rotations.
    #[serde(rename = "expmap")]
    ExpMap,
}

impl Representation {
    pub fn tag(&self) -> &'static str {
        match self {
            Representation::Coords3d => "coords3d",
            Representation::ExpMap => "expmap",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "coords3d" => Ok(Representation::Coords3d),
            "expmap" => Ok(Representation::ExpMap),
            other => Err(Error::Data(format!("unknown representation '{other}'"))),
        }
    }
}

/// A motion clip: `F` frames of `V` joints with 3 values per joint
/// (coordinates or exponential-map angles), stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    joints: usize,
    representation: Representation,
    fps: u32,
    frames: Vec<f64>,
}

impl PoseSequence {
    pub fn new(
        joints: usize,
        representation: Representation,
        fps: u32,
        frames: Vec<f64>,
    ) -> Result<Self> {
        if joints == 0 {
            return Err(Error::Data("sequence needs at least one joint".into()));
        }
        if fps == 0 {
            return Err(Error::Data("fps must be positive".into()));
        }
        if frames.is_empty() || !frames.len().is_multiple_of(3 * joints) {
            return Err(Error::Data(format!(
                "frame buffer length {} is not a positive multiple of 3*V={}",
                frames.len(),
                3 * joints
            )));
        }
        if let Some(bad) = frames.iter().find(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite value {bad} in sequence")));
        }
        Ok(PoseSequence {
            joints,
            representation,
            fps,
            frames,
        })
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn fps(&self) -> u32 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / (3 * self.joints)
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let w = 3 * self.joints;
        &self.frames[f * w..(f + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.frames
    }

    pub fn joint(&self, f: usize, v: usize) -> [f64; 3] {
        let base = (f * self.joints + v) * 3;
        [
            self.frames[base],
            self.frames[base + 1],
            self.frames[base + 2],
        ]
    }

    /// Translate every frame so `root_joint` sits at the origin.
    pub fn center_on_root(&self, root_joint: usize) -> Result<PoseSequence> {
        if self.representation != Representation::Coords3d {
            return Err(Error::Data(
                "center_on_root only applies to coordinate sequences".into(),
            ));
        }
        if root_joint >= self.joints {
            return Err(Error::Data(format!(
                "root joint {root_joint} out of range for V={}",
                self.joints
            )));
        }
        let mut out = self.frames.clone();
        let w = 3 * self.joints;
        for f in 0..self.num_frames() {
            let base = f * w;
            let root = [
                out[base + root_joint * 3],
                out[base + root_joint * 3 + 1],
                out[base + root_joint * 3 + 2],
            ];
            for v in 0..self.joints {
                for a in 0..3 {
                    out[base + v * 3 + a] -= root[a];
                }
            }
            // make the root row exactly zero regardless of rounding
            for a in 0..3 {
                out[base + root_joint * 3 + a] = 0.0;
            }
        }
        PoseSequence::new(self.joints, self.representation, self.fps, out)
    }

    /// Pure decimation: keep every (fps/target)-th frame starting at frame 0.
    pub fn downsample(&self, target_fps: u32) -> Result<PoseSequence> {
        if target_fps == 0 || !self.fps.is_multiple_of(target_fps) {
            return Err(Error::Data(format!(
                "target fps {target_fps} does not divide source fps {}",
                self.fps
            )));
        }
        let step = (self.fps / target_fps) as usize;
        if step == 1 {
            return Ok(self.clone());
        }
        let w = 3 * self.joints;
        let mut out = Vec::with_capacity((self.num_frames() / step + 1) * w);
        let mut f = 0;
        while f < self.num_frames() {
            out.extend_from_slice(self.frame(f));
            f += step;
        }
        PoseSequence::new(self.joints, self.representation, target_fps, out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowMeta {
    pub sequence_id: usize,
    pub start_frame: usize,
}

/// Paired (observed, future) blocks cut from source sequences. Inputs are
/// `[3, V, T]` and targets `[3, V, K]`, both row-major; the target starts
/// exactly one frame after the input ends.
#[derive(Debug, Clone)]
pub struct WindowSet {
    joints: usize,
    input_frames: usize,
    target_frames: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    meta: Vec<WindowMeta>,
}

impl WindowSet {
    /// An empty set with the given geometry, ready for [`Self::append`].
    pub fn empty(joints: usize, input_frames: usize, target_frames: usize) -> Self {
        WindowSet {
            joints,
            input_frames,
            target_frames,
            inputs: Vec::new(),
            targets: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn input_frames(&self) -> usize {
        self.input_frames
    }

    pub fn target_frames(&self) -> usize {
        self.target_frames
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i]
    }

    pub fn meta(&self, i: usize) -> &WindowMeta {
        &self.meta[i]
    }

    /// Append windows from another set, renumbering its sequence ids so they
    /// stay distinct.
    pub fn append(&mut self, other: WindowSet) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        if other.joints != self.joints
            || other.input_frames != self.input_frames
            || other.target_frames != self.target_frames
        {
            return Err(Error::Data(
                "window sets have incompatible V/T/K geometry".into(),
            ));
        }
        let offset = self
            .meta
            .iter()
            .map(|m| m.sequence_id + 1)
            .max()
            .unwrap_or(0);
        for mut m in other.meta {
            m.sequence_id += offset;
            self.meta.push(m);
        }
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
        Ok(())
    }

    /// Stack the selected windows into `[B,3,V,T]` input and `[B,3,V,K]`
    /// target tensors.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() {
            return Err(Error::Data("cannot build an empty batch".into()));
        }
        let b = indices.len();
        let in_block = 3 * self.joints * self.input_frames;
        let tg_block = 3 * self.joints * self.target_frames;
        let mut xin = Vec::with_capacity(b * in_block);
        let mut tgt = Vec::with_capacity(b * tg_block);
        for &i in indices {
            xin.extend_from_slice(&self.inputs[i]);
            tgt.extend_from_slice(&self.targets[i]);
        }
        Ok((
            Tensor::new(vec![b, 3, self.joints, self.input_frames], xin)?,
            Tensor::new(vec![b, 3, self.joints, self.target_frames], tgt)?,
        ))
    }
}

/// Cut a sequence into overlapping (T observed, K future) pairs.
///
/// Produces `floor((F - T - K)/stride) + 1` pairs; pair `i` starts at frame
/// `i * stride`.
pub fn make_windows(
    seq: &PoseSequence,
    input_frames: usize,
    target_frames: usize,
    stride: usize,
) -> Result<WindowSet> {
    if input_frames == 0 || target_frames == 0 || stride == 0 {
        return Err(Error::Data("T, K and stride must all be positive".into()));
    }
    let f = seq.num_frames();
    let need = input_frames + target_frames;
    if f < need {
        return Err(Error::Data(format!(
            "sequence has {f} frames, need at least T+K={need} for one window"
        )));
    }
    let v = seq.joints();
    let n = (f - need) / stride + 1;
    let mut set = WindowSet {
        joints: v,
        input_frames,
        target_frames,
        inputs: Vec::with_capacity(n),
        targets: Vec::with_capacity(n),
        meta: Vec::with_capacity(n),
    };
    for i in 0..n {
        let start = i * stride;
        set.inputs
            .push(block_cvt(seq, start, input_frames));
        set.targets
            .push(block_cvt(seq, start + input_frames, target_frames));
        set.meta.push(WindowMeta {
            sequence_id: 0,
            start_frame: start,
        });
    }
    Ok(set)
}

/// Copy `len` frames starting at `start` into a `[3, V, len]` block.
fn block_cvt(seq: &PoseSequence, start: usize, len: usize) -> Vec<f64> {
    let v = seq.joints();
    let mut block = vec![0.0; 3 * v * len];
    for c in 0..3 {
        for vi in 0..v {
            for t in 0..len {
                block[(c * v + vi) * len + t] = seq.values()[((start + t) * v + vi) * 3 + c];
            }
        }
    }
    block
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq_from(frames: Vec<f64>, v: usize) -> PoseSequence {
        PoseSequence::new(v, Representation::Coords3d, 25, frames).unwrap()
    }

    #[test]
    fn window_counts_match_enumeration() {
        let v = 2;
        let mk = |f: usize| seq_from((0..f * v * 3).map(|i| i as f64).collect(), v);
        assert_eq!(make_windows(&mk(35), 10, 25, 1).unwrap().len(), 1);
        // starts 0, 1, 2
        assert_eq!(make_windows(&mk(37), 10, 25, 1).unwrap().len(), 3);
        assert!(make_windows(&mk(34), 10, 25, 1).is_err());
    }

    #[test]
    fn windows_reproduce_source_frames() {
        let v = 3;
        let f = 12;
        let seq = seq_from((0..f * v * 3).map(|i| (i as f64) * 0.5).collect(), v);
        let set = make_windows(&seq, 4, 2, 2).unwrap();
        for i in 0..set.len() {
            let start = set.meta(i).start_frame;
            for c in 0..3 {
                for vi in 0..v {
                    for t in 0..4 {
                        assert_eq!(
                            set.input(i)[(c * v + vi) * 4 + t],
                            seq.joint(start + t, vi)[c]
                        );
                    }
                    for t in 0..2 {
                        assert_eq!(
                            set.target(i)[(c * v + vi) * 2 + t],
                            seq.joint(start + 4 + t, vi)[c]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn center_on_root_postconditions() {
        let v = 3;
        let frames: Vec<f64> = (0..2 * v * 3).map(|i| i as f64).collect();
        let seq = seq_from(frames, v);
        let centered = seq.center_on_root(1).unwrap();
        for f in 0..2 {
            assert_eq!(centered.joint(f, 1), [0.0, 0.0, 0.0]);
        }
        // idempotent
        assert_eq!(centered.center_on_root(1).unwrap(), centered);
        // translation invariant
        let shifted: Vec<f64> = seq
            .values()
            .iter()
            .enumerate()
            .map(|(i, x)| x + [5.0, 6.0, 7.0][i % 3])
            .collect();
        let shifted_seq = seq_from(shifted, v);
        assert_eq!(shifted_seq.center_on_root(1).unwrap(), centered);
    }

    #[test]
    fn center_on_root_rejects_expmap() {
        let seq = PoseSequence::new(2, Representation::ExpMap, 25, vec![0.1; 6]).unwrap();
        assert!(seq.center_on_root(0).is_err());
    }

    #[test]
    fn downsample_keeps_every_other_frame() {
        let v = 1;
        let frames: Vec<f64> = (0..6 * 3).map(|i| i as f64).collect();
        let seq = PoseSequence::new(v, Representation::Coords3d, 50, frames).unwrap();
        let down = seq.downsample(25).unwrap();
        assert_eq!(down.num_frames(), 3);
        assert_eq!(down.frame(0), seq.frame(0));
        assert_eq!(down.frame(1), seq.frame(2));
        assert_eq!(down.frame(2), seq.frame(4));
        assert_eq!(seq.downsample(50).unwrap(), seq);
        assert!(seq.downsample(30).is_err());
    }

    proptest! {
        #[test]
        fn windows_always_reconstruct_source(
            f in 6usize..20,
            v in 1usize..4,
            stride in 1usize..3,
            scale in -10.0f64..10.0,
        ) {
            let frames: Vec<f64> = (0..f * v * 3).map(|i| i as f64 * scale).collect();
            let seq = seq_from(frames, v);
            if let Ok(set) = make_windows(&seq, 3, 2, stride) {
                for i in 0..set.len() {
                    let start = set.meta(i).start_frame;
                    for c in 0..3 {
                        for vi in 0..v {
                            for t in 0..3 {
                                prop_assert_eq!(
                                    set.input(i)[(c * v + vi) * 3 + t],
                                    seq.joint(start + t, vi)[c]
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}
