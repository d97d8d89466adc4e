//! Forward kernels and their backward rules.
//!
//! Layout convention: activations are `[B, C, V, T]` (batch, channels,
//! joints, frames). The spatial adjacency stack is `[T, V, V]`, the temporal
//! stack `[V, T, T]`, and the dense space-time matrix `[V, T, V, T]`.

use super::tape::{put_grad, take_grad, Node, Tape, Var};
use crate::error::{Error, Result};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Running batch-norm statistics. Updated during train-mode forward passes,
/// read during eval-mode passes. Not trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

pub(crate) enum Record {
    ContractTime {
        at: usize,
        h: usize,
        out: usize,
    },
    ContractSpace {
        a_s: usize,
        ht: usize,
        out: usize,
    },
    ContractFull {
        a_st: usize,
        h: usize,
        out: usize,
    },
    LinearChannels {
        h: usize,
        w: usize,
        out: usize,
    },
    Prelu {
        x: usize,
        slope: usize,
        out: usize,
    },
    BatchNorm {
        x: usize,
        scale: usize,
        shift: usize,
        out: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Conv2d {
        x: usize,
        kernel: usize,
        bias: usize,
        out: usize,
    },
    Add {
        a: usize,
        b: usize,
        out: usize,
    },
    Permute4 {
        x: usize,
        out: usize,
        perm: [usize; 4],
    },
    Sum {
        x: usize,
        out: usize,
    },
    Scale {
        x: usize,
        factor: f64,
        out: usize,
    },
    LossMpjpe {
        pred: usize,
        target: usize,
        out: usize,
        dist: Vec<f64>,
    },
    LossMae {
        pred: usize,
        target: usize,
        out: usize,
    },
}

fn dims4(shape: &[usize], op: &'static str) -> Result<[usize; 4]> {
    if shape.len() != 4 {
        return Err(Error::shape(
            op,
            format!("expected a 4-d tensor, got shape {shape:?}"),
        ));
    }
    Ok([shape[0], shape[1], shape[2], shape[3]])
}

/// Dot product with four accumulators so the reduction pipelines.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < chunks {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut tail = 0.0;
    while i < n {
        tail += a[i] * b[i];
        i += 1;
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// y += a * x over equal-length slices.
#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One kernel row applied along a padded image row:
/// `out[j] += k3[0]*x[j-1] + k3[1]*x[j] + k3[2]*x[j+1]` with zero padding.
#[inline]
fn conv_row_taps(out: &mut [f64], x: &[f64], k3: &[f64]) {
    let q = out.len();
    if q > 1 {
        axpy(&mut out[1..], k3[0], &x[..q - 1]);
        axpy(&mut out[..q - 1], k3[2], &x[1..]);
    }
    axpy(out, k3[1], x);
}

/// Adjoint of [`conv_row_taps`]: scatter an output-row gradient back onto the
/// input row.
#[inline]
fn conv_row_taps_adjoint(gx: &mut [f64], gout: &[f64], k3: &[f64]) {
    let q = gx.len();
    if q > 1 {
        axpy(&mut gx[..q - 1], k3[0], &gout[1..]);
        axpy(&mut gx[1..], k3[2], &gout[..q - 1]);
    }
    axpy(gx, k3[1], gout);
}

impl Tape {
    /// Temporal graph contraction: `out[b,c,v,k] = sum_m at[v,k,m] * h[b,c,v,m]`.
    pub fn contract_time(&mut self, at: Var, h: Var) -> Result<Var> {
        let [av, at1, at2] = {
            let s = self.shape_of(at);
            if s.len() != 3 || s[1] != s[2] {
                return Err(Error::shape(
                    "contract_time",
                    format!("adjacency must be [V,T,T], got {s:?}"),
                ));
            }
            [s[0], s[1], s[2]]
        };
        let [b, c, v, t] = dims4(self.shape_of(h), "contract_time")?;
        if v != av {
            return Err(Error::shape(
                "contract_time",
                format!("joint axis: adjacency has V={av} (axis 0), input has V={v} (axis 2)"),
            ));
        }
        if t != at1 {
            return Err(Error::shape(
                "contract_time",
                format!("time axis: adjacency has T={at1} (axis 1), input has T={t} (axis 3)"),
            ));
        }
        let _ = at2;
        let adata = self.value(at);
        let hdata = self.value(h);
        let mut out = vec![0.0; b * c * v * t];
        for bi in 0..b {
            for ci in 0..c {
                for vi in 0..v {
                    let hoff = ((bi * c + ci) * v + vi) * t;
                    let aoff = vi * t * t;
                    let hrow = &hdata[hoff..hoff + t];
                    for k in 0..t {
                        out[hoff + k] = dot(&adata[aoff + k * t..aoff + (k + 1) * t], hrow);
                    }
                }
            }
        }
        let needs = self.needs_grad(at) || self.needs_grad(h);
        let ov = self.push_node(vec![b, c, v, t], out, needs);
        self.records.push(Record::ContractTime {
            at: at.0,
            h: h.0,
            out: ov.0,
        });
        Ok(ov)
    }

    /// Spatial graph contraction: `out[b,c,w,k] = sum_v a_s[k,w,v] * ht[b,c,v,k]`.
    pub fn contract_space(&mut self, a_s: Var, ht: Var) -> Result<Var> {
        let [at0, av1, av2] = {
            let s = self.shape_of(a_s);
            if s.len() != 3 || s[1] != s[2] {
                return Err(Error::shape(
                    "contract_space",
                    format!("adjacency must be [T,V,V], got {s:?}"),
                ));
            }
            [s[0], s[1], s[2]]
        };
        let [b, c, v, t] = dims4(self.shape_of(ht), "contract_space")?;
        if v != av1 {
            return Err(Error::shape(
                "contract_space",
                format!("joint axis: adjacency has V={av1} (axis 1), input has V={v} (axis 2)"),
            ));
        }
        if t != at0 {
            return Err(Error::shape(
                "contract_space",
                format!("time axis: adjacency has T={at0} (axis 0), input has T={t} (axis 3)"),
            ));
        }
        let _ = av2;
        let adata = self.value(a_s);
        let hdata = self.value(ht);
        let mut out = vec![0.0; b * c * v * t];
        for bi in 0..b {
            for ci in 0..c {
                let boff = (bi * c + ci) * v * t;
                for w in 0..v {
                    for k in 0..t {
                        let aoff = (k * v + w) * v;
                        let mut acc = 0.0;
                        for vi in 0..v {
                            acc += adata[aoff + vi] * hdata[boff + vi * t + k];
                        }
                        out[boff + w * t + k] = acc;
                    }
                }
            }
        }
        let needs = self.needs_grad(a_s) || self.needs_grad(ht);
        let ov = self.push_node(vec![b, c, v, t], out, needs);
        self.records.push(Record::ContractSpace {
            a_s: a_s.0,
            ht: ht.0,
            out: ov.0,
        });
        Ok(ov)
    }

    /// Dense space-time contraction:
    /// `out[b,c,w,k] = sum_{v,m} a_st[w,k,v,m] * h[b,c,v,m]`.
    pub fn contract_full(&mut self, a_st: Var, h: Var) -> Result<Var> {
        let [aw, ak, av, am] = dims4(self.shape_of(a_st), "contract_full")?;
        if aw != av || ak != am {
            return Err(Error::shape(
                "contract_full",
                format!("adjacency must be [V,T,V,T], got {:?}", self.shape_of(a_st)),
            ));
        }
        let [b, c, v, t] = dims4(self.shape_of(h), "contract_full")?;
        if v != av {
            return Err(Error::shape(
                "contract_full",
                format!("joint axis: adjacency has V={av} (axis 2), input has V={v} (axis 2)"),
            ));
        }
        if t != am {
            return Err(Error::shape(
                "contract_full",
                format!("time axis: adjacency has T={am} (axis 3), input has T={t} (axis 3)"),
            ));
        }
        let adata = self.value(a_st);
        let hdata = self.value(h);
        let vt = v * t;
        let mut out = vec![0.0; b * c * vt];
        for bi in 0..b {
            for ci in 0..c {
                let boff = (bi * c + ci) * vt;
                let hblock = &hdata[boff..boff + vt];
                for wk in 0..vt {
                    out[boff + wk] = dot(&adata[wk * vt..(wk + 1) * vt], hblock);
                }
            }
        }
        let needs = self.needs_grad(a_st) || self.needs_grad(h);
        let ov = self.push_node(vec![b, c, v, t], out, needs);
        self.records.push(Record::ContractFull {
            a_st: a_st.0,
            h: h.0,
            out: ov.0,
        });
        Ok(ov)
    }

    /// Channel projection: `out[b,co,v,t] = sum_ci h[b,ci,v,t] * w[ci,co]`.
    pub fn linear_channels(&mut self, h: Var, w: Var) -> Result<Var> {
        let [b, cin, v, t] = dims4(self.shape_of(h), "linear_channels")?;
        let (wci, wco) = {
            let s = self.shape_of(w);
            if s.len() != 2 {
                return Err(Error::shape(
                    "linear_channels",
                    format!("weights must be [Cin,Cout], got {s:?}"),
                ));
            }
            (s[0], s[1])
        };
        if cin != wci {
            return Err(Error::shape(
                "linear_channels",
                format!("channel axis: input has C={cin} (axis 1), weights have C={wci} (axis 0)"),
            ));
        }
        let wdata = self.value(w);
        let hdata = self.value(h);
        let s = v * t;
        let mut out = vec![0.0; b * wco * s];
        for bi in 0..b {
            for co in 0..wco {
                let orow = &mut out[(bi * wco + co) * s..(bi * wco + co + 1) * s];
                for ci in 0..cin {
                    let hrow = &hdata[(bi * cin + ci) * s..(bi * cin + ci + 1) * s];
                    axpy(orow, wdata[ci * wco + co], hrow);
                }
            }
        }
        let needs = self.needs_grad(h) || self.needs_grad(w);
        let ov = self.push_node(vec![b, wco, v, t], out, needs);
        self.records.push(Record::LinearChannels {
            h: h.0,
            w: w.0,
            out: ov.0,
        });
        Ok(ov)
    }

    /// PReLU with a single learnable slope: `x` where `x >= 0`, `slope * x`
    /// otherwise.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.numel(slope) != 1 {
            return Err(Error::shape(
                "prelu",
                format!("slope must be a scalar, got {:?}", self.shape_of(slope)),
            ));
        }
        let a = self.value(slope)[0];
        let out: Vec<f64> = self
            .value(x)
            .iter()
            .map(|&v| if v >= 0.0 { v } else { a * v })
            .collect();
        let shape = self.shape_of(x).to_vec();
        let needs = self.needs_grad(x) || self.needs_grad(slope);
        let ov = self.push_node(shape, out, needs);
        self.records.push(Record::Prelu {
            x: x.0,
            slope: slope.0,
            out: ov.0,
        });
        Ok(ov)
    }

    /// Batch normalization over channel axis 1 of a 4-d tensor.
    ///
    /// Train mode normalizes with batch statistics (epsilon 1e-5) and updates
    /// `state` with momentum 0.1; eval mode is a per-channel affine map using
    /// the running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        state: &mut BatchNormState,
        train: bool,
    ) -> Result<Var> {
        let [b, c, d2, d3] = dims4(self.shape_of(x), "batch_norm")?;
        if self.numel(scale) != c || self.numel(shift) != c {
            return Err(Error::shape(
                "batch_norm",
                format!(
                    "scale/shift must have one entry per channel ({c}), got {} and {}",
                    self.numel(scale),
                    self.numel(shift)
                ),
            ));
        }
        if state.channels() != c {
            return Err(Error::shape(
                "batch_norm",
                format!(
                    "running stats cover {} channels, input has {c}",
                    state.channels()
                ),
            ));
        }
        let n = b * d2 * d3;
        if n == 0 {
            return Err(Error::shape("batch_norm", "batch of size 0".to_string()));
        }
        let plane = d2 * d3;
        let xdata = self.value(x);
        let gamma = self.value(scale);
        let beta = self.value(shift);

        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        if train {
            for ci in 0..c {
                let mut sum = 0.0;
                for bi in 0..b {
                    let off = (bi * c + ci) * plane;
                    for i in 0..plane {
                        sum += xdata[off + i];
                    }
                }
                let m = sum / n as f64;
                let mut sq = 0.0;
                for bi in 0..b {
                    let off = (bi * c + ci) * plane;
                    for i in 0..plane {
                        let d = xdata[off + i] - m;
                        sq += d * d;
                    }
                }
                mean[ci] = m;
                var[ci] = sq / n as f64;
            }
            let unbias = if n > 1 {
                n as f64 / (n as f64 - 1.0)
            } else {
                1.0
            };
            for ci in 0..c {
                state.running_mean[ci] =
                    (1.0 - BN_MOMENTUM) * state.running_mean[ci] + BN_MOMENTUM * mean[ci];
                state.running_var[ci] =
                    (1.0 - BN_MOMENTUM) * state.running_var[ci] + BN_MOMENTUM * var[ci] * unbias;
            }
        } else {
            mean.copy_from_slice(&state.running_mean);
            var.copy_from_slice(&state.running_var);
        }

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; xdata.len()];
        let mut out = vec![0.0; xdata.len()];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * plane;
                let (m, is, g, sh) = (mean[ci], inv_std[ci], gamma[ci], beta[ci]);
                for i in 0..plane {
                    let xh = (xdata[off + i] - m) * is;
                    xhat[off + i] = xh;
                    out[off + i] = g * xh + sh;
                }
            }
        }
        let needs = self.needs_grad(x) || self.needs_grad(scale) || self.needs_grad(shift);
        let ov = self.push_node(vec![b, c, d2, d3], out, needs);
        self.records.push(Record::BatchNorm {
            x: x.0,
            scale: scale.0,
            shift: shift.0,
            out: ov.0,
            xhat,
            inv_std,
            train,
        });
        Ok(ov)
    }

    /// 3x3 convolution over the trailing two axes with unit zero padding.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let [b, cin, p, q] = dims4(self.shape_of(x), "conv2d")?;
        let [cout, kci, kh, kw] = dims4(self.shape_of(kernel), "conv2d")?;
        if kh != 3 || kw != 3 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be 3x3, got {kh}x{kw}"),
            ));
        }
        if kci != cin {
            return Err(Error::shape(
                "conv2d",
                format!("channel axis: input has C={cin} (axis 1), kernel has C={kci} (axis 1)"),
            ));
        }
        if self.numel(bias) != cout {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "bias must have one entry per output channel ({cout}), got {}",
                    self.numel(bias)
                ),
            ));
        }
        let xdata = self.value(x);
        let kdata = self.value(kernel);
        let bdata = self.value(bias);
        let mut out = vec![0.0; b * cout * p * q];
        for bi in 0..b {
            for o in 0..cout {
                let ooff = (bi * cout + o) * p * q;
                out[ooff..ooff + p * q].iter_mut().for_each(|v| *v = bdata[o]);
                for i in 0..cin {
                    let xoff = (bi * cin + i) * p * q;
                    let koff = (o * cin + i) * 9;
                    for pi in 0..p {
                        let orow = ooff + pi * q;
                        for dp in 0..3usize {
                            let y = pi + dp;
                            if y < 1 || y > p {
                                continue;
                            }
                            let xrow = xoff + (y - 1) * q;
                            conv_row_taps(
                                &mut out[orow..orow + q],
                                &xdata[xrow..xrow + q],
                                &kdata[koff + dp * 3..koff + dp * 3 + 3],
                            );
                        }
                    }
                }
            }
        }
        let needs = self.needs_grad(x) || self.needs_grad(kernel) || self.needs_grad(bias);
        let ov = self.push_node(vec![b, cout, p, q], out, needs);
        self.records.push(Record::Conv2d {
            x: x.0,
            kernel: kernel.0,
            bias: bias.0,
            out: ov.0,
        });
        Ok(ov)
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::shape(
                "add",
                format!(
                    "operand shapes differ: {:?} vs {:?}",
                    self.shape_of(a),
                    self.shape_of(b)
                ),
            ));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape_of(a).to_vec();
        let needs = self.needs_grad(a) || self.needs_grad(b);
        let ov = self.push_node(shape, out, needs);
        self.records.push(Record::Add {
            a: a.0,
            b: b.0,
            out: ov.0,
        });
        Ok(ov)
    }

    /// Axis permutation of a 4-d tensor: `out.shape[d] = x.shape[perm[d]]`.
    pub fn permute4(&mut self, x: Var, perm: [usize; 4]) -> Result<Var> {
        let xs = dims4(self.shape_of(x), "permute4")?;
        let mut seen = [false; 4];
        for &p in &perm {
            if p >= 4 || seen[p] {
                return Err(Error::shape(
                    "permute4",
                    format!("invalid permutation {perm:?}"),
                ));
            }
            seen[p] = true;
        }
        let out_shape = [xs[perm[0]], xs[perm[1]], xs[perm[2]], xs[perm[3]]];
        let out = permute4_kernel(self.value(x), xs, perm);
        let needs = self.needs_grad(x);
        let ov = self.push_node(out_shape.to_vec(), out, needs);
        self.records.push(Record::Permute4 {
            x: x.0,
            out: ov.0,
            perm,
        });
        Ok(ov)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total: f64 = self.value(x).iter().sum();
        let needs = self.needs_grad(x);
        let ov = self.push_node(vec![1], vec![total], needs);
        self.records.push(Record::Sum { x: x.0, out: ov.0 });
        Ok(ov)
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let out: Vec<f64> = self.value(x).iter().map(|v| v * factor).collect();
        let shape = self.shape_of(x).to_vec();
        let needs = self.needs_grad(x);
        let ov = self.push_node(shape, out, needs);
        self.records.push(Record::Scale {
            x: x.0,
            factor,
            out: ov.0,
        });
        Ok(ov)
    }

    /// Mean per-joint position error: mean over batch, joints and frames of
    /// the Euclidean distance taken over the coordinate axis (axis 1).
    pub fn loss_mpjpe(&mut self, pred: Var, target: Var) -> Result<Var> {
        let [b, c, v, k] = self.loss_dims(pred, target, "loss_mpjpe")?;
        let p = self.value(pred);
        let t = self.value(target);
        let mut dist = vec![0.0; b * v * k];
        let mut total = 0.0;
        for bi in 0..b {
            for vi in 0..v {
                for ki in 0..k {
                    let mut sq = 0.0;
                    for ci in 0..c {
                        let idx = ((bi * c + ci) * v + vi) * k + ki;
                        let d = p[idx] - t[idx];
                        sq += d * d;
                    }
                    let d = sq.sqrt();
                    dist[(bi * v + vi) * k + ki] = d;
                    total += d;
                }
            }
        }
        let loss = total / (b * v * k) as f64;
        let needs = self.needs_grad(pred) || self.needs_grad(target);
        let ov = self.push_node(vec![1], vec![loss], needs);
        self.records.push(Record::LossMpjpe {
            pred: pred.0,
            target: target.0,
            out: ov.0,
            dist,
        });
        Ok(ov)
    }

    /// Mean angle error: mean over batch, joints and frames of the summed
    /// absolute component differences.
    pub fn loss_mae(&mut self, pred: Var, target: Var) -> Result<Var> {
        let [b, _c, v, k] = self.loss_dims(pred, target, "loss_mae")?;
        let p = self.value(pred);
        let t = self.value(target);
        let total: f64 = p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum();
        let loss = total / (b * v * k) as f64;
        let needs = self.needs_grad(pred) || self.needs_grad(target);
        let ov = self.push_node(vec![1], vec![loss], needs);
        self.records.push(Record::LossMae {
            pred: pred.0,
            target: target.0,
            out: ov.0,
        });
        Ok(ov)
    }

    fn loss_dims(&self, pred: Var, target: Var, op: &'static str) -> Result<[usize; 4]> {
        if self.shape_of(pred) != self.shape_of(target) {
            return Err(Error::shape(
                op,
                format!(
                    "prediction shape {:?} differs from target shape {:?}",
                    self.shape_of(pred),
                    self.shape_of(target)
                ),
            ));
        }
        dims4(self.shape_of(pred), op)
    }
}

fn permute4_kernel(data: &[f64], shape: [usize; 4], perm: [usize; 4]) -> Vec<f64> {
    let out_shape = [
        shape[perm[0]],
        shape[perm[1]],
        shape[perm[2]],
        shape[perm[3]],
    ];
    // in-strides mapped to output axis order
    let mut in_strides = [0usize; 4];
    let mut s = 1;
    let mut raw = [0usize; 4];
    for d in (0..4).rev() {
        raw[d] = s;
        s *= shape[d];
    }
    for d in 0..4 {
        in_strides[d] = raw[perm[d]];
    }
    let mut out = vec![0.0; data.len()];
    let mut oi = 0;
    for i0 in 0..out_shape[0] {
        for i1 in 0..out_shape[1] {
            for i2 in 0..out_shape[2] {
                let base = i0 * in_strides[0] + i1 * in_strides[1] + i2 * in_strides[2];
                for i3 in 0..out_shape[3] {
                    out[oi] = data[base + i3 * in_strides[3]];
                    oi += 1;
                }
            }
        }
    }
    out
}

fn inverse_perm(perm: [usize; 4]) -> [usize; 4] {
    let mut inv = [0usize; 4];
    for (d, &p) in perm.iter().enumerate() {
        inv[p] = d;
    }
    inv
}

impl Record {
    pub(crate) fn backward(&self, nodes: &mut [Node]) {
        match self {
            Record::ContractTime { at, h, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let [b, c, v, t] = shape4(nodes, *h);
                if nodes[*h].needs_grad {
                    let mut gh = take_grad(nodes, *h);
                    let adata = &nodes[*at].data;
                    for bi in 0..b {
                        for ci in 0..c {
                            for vi in 0..v {
                                let off = ((bi * c + ci) * v + vi) * t;
                                let aoff = vi * t * t;
                                for k in 0..t {
                                    let g = gout[off + k];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    let arow = &adata[aoff + k * t..aoff + (k + 1) * t];
                                    for m in 0..t {
                                        gh[off + m] += arow[m] * g;
                                    }
                                }
                            }
                        }
                    }
                    put_grad(nodes, *h, gh);
                }
                if nodes[*at].needs_grad {
                    let mut ga = take_grad(nodes, *at);
                    let hdata = &nodes[*h].data;
                    for bi in 0..b {
                        for ci in 0..c {
                            for vi in 0..v {
                                let off = ((bi * c + ci) * v + vi) * t;
                                let aoff = vi * t * t;
                                for k in 0..t {
                                    let g = gout[off + k];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    for m in 0..t {
                                        ga[aoff + k * t + m] += g * hdata[off + m];
                                    }
                                }
                            }
                        }
                    }
                    put_grad(nodes, *at, ga);
                }
            }
            Record::ContractSpace { a_s, ht, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let [b, c, v, t] = shape4(nodes, *ht);
                if nodes[*ht].needs_grad {
                    let mut gh = take_grad(nodes, *ht);
                    let adata = &nodes[*a_s].data;
                    for bi in 0..b {
                        for ci in 0..c {
                            let boff = (bi * c + ci) * v * t;
                            for w in 0..v {
                                for k in 0..t {
                                    let g = gout[boff + w * t + k];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    let aoff = (k * v + w) * v;
                                    for vi in 0..v {
                                        gh[boff + vi * t + k] += adata[aoff + vi] * g;
                                    }
                                }
                            }
                        }
                    }
                    put_grad(nodes, *ht, gh);
                }
                if nodes[*a_s].needs_grad {
                    let mut ga = take_grad(nodes, *a_s);
                    let hdata = &nodes[*ht].data;
                    for bi in 0..b {
                        for ci in 0..c {
                            let boff = (bi * c + ci) * v * t;
                            for w in 0..v {
                                for k in 0..t {
                                    let g = gout[boff + w * t + k];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    let aoff = (k * v + w) * v;
                                    for vi in 0..v {
                                        ga[aoff + vi] += g * hdata[boff + vi * t + k];
                                    }
                                }
                            }
                        }
                    }
                    put_grad(nodes, *a_s, ga);
                }
            }
            Record::ContractFull { a_st, h, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let [b, c, v, t] = shape4(nodes, *h);
                let vt = v * t;
                if nodes[*h].needs_grad {
                    let mut gh = take_grad(nodes, *h);
                    let adata = &nodes[*a_st].data;
                    for bi in 0..b {
                        for ci in 0..c {
                            let boff = (bi * c + ci) * vt;
                            for wk in 0..vt {
                                let g = gout[boff + wk];
                                if g == 0.0 {
                                    continue;
                                }
                                let arow = &adata[wk * vt..(wk + 1) * vt];
                                for i in 0..vt {
                                    gh[boff + i] += arow[i] * g;
                                }
                            }
                        }
                    }
                    put_grad(nodes, *h, gh);
                }
                if nodes[*a_st].needs_grad {
                    let mut ga = take_grad(nodes, *a_st);
                    let hdata = &nodes[*h].data;
                    for bi in 0..b {
                        for ci in 0..c {
                            let boff = (bi * c + ci) * vt;
                            let hblock = &hdata[boff..boff + vt];
                            for wk in 0..vt {
                                let g = gout[boff + wk];
                                if g == 0.0 {
                                    continue;
                                }
                                let garow = &mut ga[wk * vt..(wk + 1) * vt];
                                for i in 0..vt {
                                    garow[i] += g * hblock[i];
                                }
                            }
                        }
                    }
                    put_grad(nodes, *a_st, ga);
                }
            }
            Record::LinearChannels { h, w, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let [b, cin, v, t] = shape4(nodes, *h);
                let cout = nodes[*out].shape[1];
                let s = v * t;
                if nodes[*h].needs_grad {
                    let mut gh = take_grad(nodes, *h);
                    let wdata = &nodes[*w].data;
                    for bi in 0..b {
                        for co in 0..cout {
                            let grow = &gout[(bi * cout + co) * s..(bi * cout + co + 1) * s];
                            for ci in 0..cin {
                                let wv = wdata[ci * cout + co];
                                if wv == 0.0 {
                                    continue;
                                }
                                let ghrow = &mut gh[(bi * cin + ci) * s..(bi * cin + ci + 1) * s];
                                for i in 0..s {
                                    ghrow[i] += wv * grow[i];
                                }
                            }
                        }
                    }
                    put_grad(nodes, *h, gh);
                }
                if nodes[*w].needs_grad {
                    let mut gw = take_grad(nodes, *w);
                    let hdata = &nodes[*h].data;
                    for bi in 0..b {
                        for ci in 0..cin {
                            let hrow = &hdata[(bi * cin + ci) * s..(bi * cin + ci + 1) * s];
                            for co in 0..cout {
                                let grow = &gout[(bi * cout + co) * s..(bi * cout + co + 1) * s];
                                gw[ci * cout + co] += dot(hrow, grow);
                            }
                        }
                    }
                    put_grad(nodes, *w, gw);
                }
            }
            Record::Prelu { x, slope, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let a = nodes[*slope].data[0];
                if nodes[*x].needs_grad {
                    let mut gx = take_grad(nodes, *x);
                    let xdata = &nodes[*x].data;
                    for i in 0..gx.len() {
                        gx[i] += gout[i] * if xdata[i] >= 0.0 { 1.0 } else { a };
                    }
                    put_grad(nodes, *x, gx);
                }
                if nodes[*slope].needs_grad {
                    let mut gs = take_grad(nodes, *slope);
                    let xdata = &nodes[*x].data;
                    let mut acc = 0.0;
                    for i in 0..xdata.len() {
                        if xdata[i] < 0.0 {
                            acc += gout[i] * xdata[i];
                        }
                    }
                    gs[0] += acc;
                    put_grad(nodes, *slope, gs);
                }
            }
            Record::BatchNorm {
                x,
                scale,
                shift,
                out,
                xhat,
                inv_std,
                train,
            } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let [b, c, d2, d3] = shape4(nodes, *x);
                let plane = d2 * d3;
                let n = (b * plane) as f64;
                let gamma = nodes[*scale].data.clone();
                if nodes[*scale].needs_grad {
                    let mut gs = take_grad(nodes, *scale);
                    for ci in 0..c {
                        let mut acc = 0.0;
                        for bi in 0..b {
                            let off = (bi * c + ci) * plane;
                            for i in 0..plane {
                                acc += gout[off + i] * xhat[off + i];
                            }
                        }
                        gs[ci] += acc;
                    }
                    put_grad(nodes, *scale, gs);
                }
                if nodes[*shift].needs_grad {
                    let mut gb = take_grad(nodes, *shift);
                    for ci in 0..c {
                        let mut acc = 0.0;
                        for bi in 0..b {
                            let off = (bi * c + ci) * plane;
                            for i in 0..plane {
                                acc += gout[off + i];
                            }
                        }
                        gb[ci] += acc;
                    }
                    put_grad(nodes, *shift, gb);
                }
                if nodes[*x].needs_grad {
                    let mut gx = take_grad(nodes, *x);
                    if *train {
                        // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                        for ci in 0..c {
                            let mut sum_g = 0.0;
                            let mut sum_gx = 0.0;
                            for bi in 0..b {
                                let off = (bi * c + ci) * plane;
                                for i in 0..plane {
                                    let dxh = gout[off + i] * gamma[ci];
                                    sum_g += dxh;
                                    sum_gx += dxh * xhat[off + i];
                                }
                            }
                            let mg = sum_g / n;
                            let mgx = sum_gx / n;
                            for bi in 0..b {
                                let off = (bi * c + ci) * plane;
                                for i in 0..plane {
                                    let dxh = gout[off + i] * gamma[ci];
                                    gx[off + i] += inv_std[ci] * (dxh - mg - xhat[off + i] * mgx);
                                }
                            }
                        }
                    } else {
                        for ci in 0..c {
                            let k = gamma[ci] * inv_std[ci];
                            for bi in 0..b {
                                let off = (bi * c + ci) * plane;
                                for i in 0..plane {
                                    gx[off + i] += gout[off + i] * k;
                                }
                            }
                        }
                    }
                    put_grad(nodes, *x, gx);
                }
            }
            Record::Conv2d {
                x,
                kernel,
                bias,
                out,
            } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let [b, cin, p, q] = shape4(nodes, *x);
                let cout = nodes[*out].shape[1];
                if nodes[*bias].needs_grad {
                    let mut gb = take_grad(nodes, *bias);
                    for bi in 0..b {
                        for o in 0..cout {
                            let off = (bi * cout + o) * p * q;
                            let mut acc = 0.0;
                            for i in 0..p * q {
                                acc += gout[off + i];
                            }
                            gb[o] += acc;
                        }
                    }
                    put_grad(nodes, *bias, gb);
                }
                if nodes[*x].needs_grad {
                    let mut gx = take_grad(nodes, *x);
                    let kdata = &nodes[*kernel].data;
                    for bi in 0..b {
                        for o in 0..cout {
                            let ooff = (bi * cout + o) * p * q;
                            for i in 0..cin {
                                let xoff = (bi * cin + i) * p * q;
                                let koff = (o * cin + i) * 9;
                                for pi in 0..p {
                                    let grow = ooff + pi * q;
                                    for dp in 0..3usize {
                                        let y = pi + dp;
                                        if y < 1 || y > p {
                                            continue;
                                        }
                                        let xrow = xoff + (y - 1) * q;
                                        conv_row_taps_adjoint(
                                            &mut gx[xrow..xrow + q],
                                            &gout[grow..grow + q],
                                            &kdata[koff + dp * 3..koff + dp * 3 + 3],
                                        );
                                    }
                                }
                            }
                        }
                    }
                    put_grad(nodes, *x, gx);
                }
                if nodes[*kernel].needs_grad {
                    let mut gk = take_grad(nodes, *kernel);
                    let xdata = &nodes[*x].data;
                    for bi in 0..b {
                        for o in 0..cout {
                            let ooff = (bi * cout + o) * p * q;
                            for i in 0..cin {
                                let xoff = (bi * cin + i) * p * q;
                                let koff = (o * cin + i) * 9;
                                for pi in 0..p {
                                    let grow = &gout[ooff + pi * q..ooff + (pi + 1) * q];
                                    for dp in 0..3usize {
                                        let y = pi + dp;
                                        if y < 1 || y > p {
                                            continue;
                                        }
                                        let xrow = &xdata[xoff + (y - 1) * q..xoff + y * q];
                                        if q > 1 {
                                            gk[koff + dp * 3] += dot(&grow[1..], &xrow[..q - 1]);
                                            gk[koff + dp * 3 + 2] +=
                                                dot(&grow[..q - 1], &xrow[1..]);
                                        }
                                        gk[koff + dp * 3 + 1] += dot(grow, xrow);
                                    }
                                }
                            }
                        }
                    }
                    put_grad(nodes, *kernel, gk);
                }
            }
            Record::Add { a, b, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                for &v in &[*a, *b] {
                    if nodes[v].needs_grad {
                        let mut g = take_grad(nodes, v);
                        for i in 0..g.len() {
                            g[i] += gout[i];
                        }
                        put_grad(nodes, v, g);
                    }
                }
            }
            Record::Permute4 { x, out, perm } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                if nodes[*x].needs_grad {
                    let oshape = shape4(nodes, *out);
                    let ginv = permute4_kernel(&gout, oshape, inverse_perm(*perm));
                    let mut gx = take_grad(nodes, *x);
                    for i in 0..gx.len() {
                        gx[i] += ginv[i];
                    }
                    put_grad(nodes, *x, gx);
                }
            }
            Record::Sum { x, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                if nodes[*x].needs_grad {
                    let mut gx = take_grad(nodes, *x);
                    for g in gx.iter_mut() {
                        *g += gout[0];
                    }
                    put_grad(nodes, *x, gx);
                }
            }
            Record::Scale { x, factor, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                if nodes[*x].needs_grad {
                    let mut gx = take_grad(nodes, *x);
                    for i in 0..gx.len() {
                        gx[i] += factor * gout[i];
                    }
                    put_grad(nodes, *x, gx);
                }
            }
            Record::LossMpjpe {
                pred,
                target,
                out,
                dist,
            } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let g0 = gout[0];
                let [b, c, v, k] = shape4(nodes, *pred);
                let norm = (b * v * k) as f64;
                for (node, sign) in [(*pred, 1.0), (*target, -1.0)] {
                    if !nodes[node].needs_grad {
                        continue;
                    }
                    let mut gr = take_grad(nodes, node);
                    let p = &nodes[*pred].data;
                    let t = &nodes[*target].data;
                    for bi in 0..b {
                        for vi in 0..v {
                            for ki in 0..k {
                                let d = dist[(bi * v + vi) * k + ki];
                                if d == 0.0 {
                                    continue;
                                }
                                for ci in 0..c {
                                    let idx = ((bi * c + ci) * v + vi) * k + ki;
                                    gr[idx] += sign * g0 * (p[idx] - t[idx]) / (d * norm);
                                }
                            }
                        }
                    }
                    put_grad(nodes, node, gr);
                }
            }
            Record::LossMae { pred, target, out } => {
                let Some(gout) = nodes[*out].grad.take() else {
                    return;
                };
                let g0 = gout[0];
                let shape = &nodes[*pred].shape;
                let norm = (shape[0] * shape[2] * shape[3]) as f64;
                for (node, sign) in [(*pred, 1.0), (*target, -1.0)] {
                    if !nodes[node].needs_grad {
                        continue;
                    }
                    let mut gr = take_grad(nodes, node);
                    let p = &nodes[*pred].data;
                    let t = &nodes[*target].data;
                    for i in 0..gr.len() {
                        let d = p[i] - t[i];
                        if d != 0.0 {
                            gr[i] += sign * g0 * d.signum() / norm;
                        }
                    }
                    put_grad(nodes, node, gr);
                }
            }
        }
    }
}

fn shape4(nodes: &[Node], idx: usize) -> [usize; 4] {
    let s = &nodes[idx].shape;
    [s[0], s[1], s[2], s[3]]
}
