//! Benchmark-protocol metrics: per-horizon position error, angle error via
//! Euler decomposition, and the zero-velocity baseline.

mod rotation;

pub use rotation::{euler_to_rotmat, expmap_to_rotmat, rotmat_to_euler, Mat3};

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::model::{count_params, model_forward, ModelParams};
use crate::tensor::{Tape, Tensor};
use crate::train::LossKind;
use std::fmt::Write as _;
use std::path::Path;

fn check_pair(pred: &Tensor, target: &Tensor, op: &'static str) -> Result<[usize; 4]> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            op,
            format!(
                "prediction shape {:?} differs from target shape {:?}",
                pred.shape(),
                target.shape()
            ),
        ));
    }
    let s = pred.shape();
    if s.len() != 4 || s[1] != 3 {
        return Err(Error::shape(
            op,
            format!("expected [B,3,V,K], got {s:?}"),
        ));
    }
    Ok([s[0], s[1], s[2], s[3]])
}

fn check_horizons(horizons: &[usize], k: usize) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::InvalidConfig("no horizons requested".into()));
    }
    for &h in horizons {
        if h == 0 || h > k {
            return Err(Error::InvalidConfig(format!(
                "horizon {h} out of range 1..={k}"
            )));
        }
    }
    Ok(())
}

/// Mean Euclidean joint error at each requested future frame (1-based, not
/// cumulative), averaged over batch and joints.
pub fn mpjpe_at_horizons(pred: &Tensor, target: &Tensor, horizons: &[usize]) -> Result<Vec<f64>> {
    let [b, _, v, k] = check_pair(pred, target, "mpjpe_at_horizons")?;
    check_horizons(horizons, k)?;
    let p = pred.data();
    let t = target.data();
    let mut out = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let ki = h - 1;
        let mut total = 0.0;
        for bi in 0..b {
            for vi in 0..v {
                let mut sq = 0.0;
                for c in 0..3 {
                    let idx = ((bi * 3 + c) * v + vi) * k + ki;
                    let d = p[idx] - t[idx];
                    sq += d * d;
                }
                total += sq.sqrt();
            }
        }
        out.push(total / (b * v) as f64);
    }
    Ok(out)
}

/// Mean absolute Euler-angle difference (radians) at each requested future
/// frame, after per-joint axis-angle -> rotation -> Euler conversion of both
/// operands; averaged over batch, joints and the three angle components.
pub fn mae_at_horizons(pred: &Tensor, target: &Tensor, horizons: &[usize]) -> Result<Vec<f64>> {
    let [b, _, v, k] = check_pair(pred, target, "mae_at_horizons")?;
    check_horizons(horizons, k)?;
    let p = pred.data();
    let t = target.data();
    let fetch = |src: &[f64], bi: usize, vi: usize, ki: usize| -> [f64; 3] {
        [
            src[((bi * 3) * v + vi) * k + ki],
            src[((bi * 3 + 1) * v + vi) * k + ki],
            src[((bi * 3 + 2) * v + vi) * k + ki],
        ]
    };
    let mut out = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let ki = h - 1;
        let mut total = 0.0;
        for bi in 0..b {
            for vi in 0..v {
                let ep = rotmat_to_euler(&expmap_to_rotmat(fetch(p, bi, vi, ki)))?;
                let et = rotmat_to_euler(&expmap_to_rotmat(fetch(t, bi, vi, ki)))?;
                for c in 0..3 {
                    total += (ep[c] - et[c]).abs();
                }
            }
        }
        out.push(total / (b * v * 3) as f64);
    }
    Ok(out)
}

/// Repeat the last observed frame for all K future frames.
pub fn zero_velocity_baseline(input: &Tensor, output_frames: usize) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::shape(
            "zero_velocity_baseline",
            format!("expected [B,C,V,T], got {s:?}"),
        ));
    }
    let [b, c, v, t] = [s[0], s[1], s[2], s[3]];
    let k = output_frames;
    let mut out = vec![0.0; b * c * v * k];
    for bi in 0..b {
        for ci in 0..c {
            for vi in 0..v {
                let last = input.data()[((bi * c + ci) * v + vi) * t + t - 1];
                for ki in 0..k {
                    out[((bi * c + ci) * v + vi) * k + ki] = last;
                }
            }
        }
    }
    Tensor::new(vec![b, c, v, k], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Position error, same unit as the coordinates (millimeters for
    /// millimeter data).
    MpjpeMm,
    /// Angle error in degrees (converted from the radian metric).
    MaeDeg,
}

impl MetricKind {
    pub fn label(&self) -> &'static str {
        match self {
            MetricKind::MpjpeMm => "mpjpe_mm",
            MetricKind::MaeDeg => "mae_deg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    pub frame: usize,
    pub millis: f64,
}

/// Per-horizon evaluation against the zero-velocity baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metric: MetricKind,
    pub horizons: Vec<Horizon>,
    pub model: Vec<f64>,
    pub baseline: Vec<f64>,
    pub model_average: f64,
    pub baseline_average: f64,
    pub param_count: usize,
    pub windows: usize,
}

/// Standard reporting frames (80-1000 msec at 25 fps), clipped to K.
pub fn default_horizons(output_frames: usize) -> Vec<usize> {
    let frames: Vec<usize> = [2, 4, 8, 10, 14, 25]
        .into_iter()
        .filter(|&f| f <= output_frames)
        .collect();
    if frames.is_empty() {
        vec![output_frames]
    } else {
        frames
    }
}

/// Run the model over a window set in eval mode and score it (and the
/// zero-velocity baseline) at the given horizons.
pub fn evaluate(
    params: &ModelParams,
    windows: &WindowSet,
    batch_size: usize,
    horizons: &[usize],
    fps: u32,
    loss: LossKind,
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::InvalidConfig("evaluation window set is empty".into()));
    }
    let k = windows.target_frames();
    check_horizons(horizons, k)?;
    let mut work = params.clone();
    let n = windows.len();
    let metric_fn = match loss {
        LossKind::Mpjpe => mpjpe_at_horizons,
        LossKind::Mae => mae_at_horizons,
    };

    let mut model_sums = vec![0.0; horizons.len()];
    let mut baseline_sums = vec![0.0; horizons.len()];
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(batch_size) {
        let (x, target) = windows.batch(chunk)?;
        let mut tape = Tape::new();
        let bound = work.bind(&mut tape);
        let xv = tape.leaf(&x);
        let yv = model_forward(&mut tape, &mut work, &bound, xv, false)?;
        let pred = tape.to_tensor(yv);
        drop(tape);
        let baseline = zero_velocity_baseline(&x, k)?;
        let m = metric_fn(&pred, &target, horizons)?;
        let z = metric_fn(&baseline, &target, horizons)?;
        for (i, (mv, zv)) in m.iter().zip(&z).enumerate() {
            model_sums[i] += mv * chunk.len() as f64;
            baseline_sums[i] += zv * chunk.len() as f64;
        }
    }
    let to_unit = |x: f64| match loss {
        LossKind::Mpjpe => x,
        LossKind::Mae => x.to_degrees(),
    };
    let model: Vec<f64> = model_sums.iter().map(|s| to_unit(s / n as f64)).collect();
    let baseline: Vec<f64> = baseline_sums
        .iter()
        .map(|s| to_unit(s / n as f64))
        .collect();
    let model_average = model.iter().sum::<f64>() / model.len() as f64;
    let baseline_average = baseline.iter().sum::<f64>() / baseline.len() as f64;
    Ok(EvalReport {
        metric: match loss {
            LossKind::Mpjpe => MetricKind::MpjpeMm,
            LossKind::Mae => MetricKind::MaeDeg,
        },
        horizons: horizons
            .iter()
            .map(|&f| Horizon {
                frame: f,
                millis: f as f64 * 1000.0 / fps as f64,
            })
            .collect(),
        model,
        baseline,
        model_average,
        baseline_average,
        param_count: count_params(&params.config)?.total,
        windows: n,
    })
}

impl EvalReport {
    /// CSV columns: horizon_frames, horizon_ms, model, baseline.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = format!("horizon_frames,horizon_ms,{},baseline\n", self.metric.label());
        for (h, (m, b)) in self
            .horizons
            .iter()
            .zip(self.model.iter().zip(&self.baseline))
        {
            let _ = writeln!(text, "{},{},{},{}", h.frame, h.millis, m, b);
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Aligned plain-text table with horizons as columns.
    pub fn render_table(&self) -> String {
        let mut text = String::new();
        let _ = writeln!(
            text,
            "metric: {} | windows: {} | parameters: {}",
            self.metric.label(),
            self.windows,
            self.param_count
        );
        let fmt_ms = |ms: f64| {
            if (ms - ms.round()).abs() < 1e-9 {
                format!("{}", ms.round() as i64)
            } else {
                format!("{ms:.1}")
            }
        };
        let mut head = format!("{:<14}|", "msec");
        for h in &self.horizons {
            let _ = write!(head, "{:>10}", fmt_ms(h.millis));
        }
        let _ = write!(head, " | {:>10}", "avg");
        let _ = writeln!(text, "{head}");
        let _ = writeln!(text, "{}", "-".repeat(head.len()));
        for (name, row, avg) in [
            ("model", &self.model, self.model_average),
            ("zero-velocity", &self.baseline, self.baseline_average),
        ] {
            let mut line = format!("{name:<14}|");
            for value in row {
                let _ = write!(line, "{value:>10.3}");
            }
            let _ = write!(line, " | {avg:>10.3}");
            let _ = writeln!(text, "{line}");
        }
        text
    }
}
