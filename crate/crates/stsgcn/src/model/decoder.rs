//! Convolutional decoder: maps the encoder's T observed-frame representation
//! onto K future frames by treating time as the channel axis.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};

/// One decoder stage: a 3x3 convolution over the (coordinate, joint) plane
/// plus a learnable activation slope.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStage {
    pub kernel: Tensor, // [Cout, Cin, 3, 3]
    pub bias: Tensor,   // [Cout]
    pub slope: Tensor,  // [1]
}

/// Stage 1 maps T channels to K; later stages keep K channels and refine the
/// estimate with a residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub stages: Vec<DecoderStage>,
}

impl DecoderParams {
    pub fn init(
        input_frames: usize,
        output_frames: usize,
        n_stages: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_stages == 0 {
            return Err(Error::InvalidConfig(
                "decoder needs at least one stage".into(),
            ));
        }
        let mut stages = Vec::with_capacity(n_stages);
        for s in 0..n_stages {
            let cin = if s == 0 { input_frames } else { output_frames };
            let cout = output_frames;
            let bound = 1.0 / ((cin * 9) as f64).sqrt();
            let kernel = Tensor::new(
                vec![cout, cin, 3, 3],
                (0..cout * cin * 9)
                    .map(|_| rng.uniform(-bound, bound))
                    .collect(),
            )?
            .with_grad();
            let bias = Tensor::new(
                vec![cout],
                (0..cout).map(|_| rng.uniform(-bound, bound)).collect(),
            )?
            .with_grad();
            let slope = Tensor::new(vec![1], vec![0.25])?.with_grad();
            stages.push(DecoderStage {
                kernel,
                bias,
                slope,
            });
        }
        Ok(DecoderParams { stages })
    }
}

pub(crate) struct BoundStage {
    pub kernel: Var,
    pub bias: Var,
    pub slope: Var,
}

/// Exact trainable-scalar count for a decoder configuration:
/// `T*K*9 + K + (n-1)*(K*K*9 + K) + n` slopes.
pub fn decoder_param_count(
    input_frames: usize,
    output_frames: usize,
    n_stages: usize,
) -> Result<usize> {
    if n_stages == 0 {
        return Err(Error::InvalidConfig(
            "decoder needs at least one stage".into(),
        ));
    }
    let (t, k) = (input_frames, output_frames);
    Ok(t * k * 9 + k + (n_stages - 1) * (k * k * 9 + k) + n_stages)
}

/// Run the decoder: `[B,3,V,T] -> [B,3,V,K]`.
///
/// The input is permuted so frames become channels, stage 1 projects T -> K,
/// and each later stage applies conv + PReLU with a residual add of its own
/// input. No activation after the final residual.
pub(crate) fn decoder_forward(
    tape: &mut Tape,
    stages: &[BoundStage],
    input: Var,
) -> Result<Var> {
    // [B,3,V,T] -> [B,T,3,V]
    let mut x = tape.permute4(input, [0, 3, 1, 2])?;
    for (s, stage) in stages.iter().enumerate() {
        let conv = tape.conv2d(x, stage.kernel, stage.bias)?;
        let act = tape.prelu(conv, stage.slope)?;
        x = if s == 0 { act } else { tape.add(act, x)? };
    }
    // [B,K,3,V] -> [B,3,V,K]
    tape.permute4(x, [0, 2, 3, 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(tape: &mut Tape, params: &DecoderParams) -> Vec<BoundStage> {
        params
            .stages
            .iter()
            .map(|s| BoundStage {
                kernel: tape.leaf(&s.kernel),
                bias: tape.leaf(&s.bias),
                slope: tape.leaf(&s.slope),
            })
            .collect()
    }

    #[test]
    fn output_shape_is_b3vk() {
        let mut rng = Rng::new(0);
        let params = DecoderParams::init(4, 6, 3, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params);
        let x = tape.constant(&[2, 3, 5, 4], vec![0.1; 2 * 3 * 5 * 4]).unwrap();
        let y = decoder_forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.shape_of(y), &[2, 3, 5, 6]);
    }

    #[test]
    fn zero_kernels_and_biases_give_zero_prediction() {
        let mut rng = Rng::new(0);
        let mut params = DecoderParams::init(4, 6, 2, &mut rng).unwrap();
        for stage in &mut params.stages {
            stage.kernel.data_mut().iter_mut().for_each(|v| *v = 0.0);
            stage.bias.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params);
        let x = tape.constant(&[1, 3, 2, 4], vec![0.7; 24]).unwrap();
        let y = decoder_forward(&mut tape, &bound, x).unwrap();
        assert!(tape.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn center_delta_kernel_copies_a_selected_frame() {
        // single stage; kernel picks input frame t0 = 2 at the spatial center
        let (t, k, v) = (4usize, 3usize, 5usize);
        let t0 = 2usize;
        let weight = 1.75;
        let mut kdata = vec![0.0; k * t * 9];
        for ko in 0..k {
            kdata[(ko * t + t0) * 9 + 4] = weight;
        }
        let kernel = Tensor::new(vec![k, t, 3, 3], kdata).unwrap();
        let bias = Tensor::new(vec![k], vec![0.0; k]).unwrap();
        let slope = Tensor::new(vec![1], vec![0.25]).unwrap();

        let mut rng = Rng::new(9);
        let xdata: Vec<f64> = (0..3 * v * t).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut tape = Tape::new();
        let bound = vec![BoundStage {
            kernel: tape.leaf(&kernel),
            bias: tape.leaf(&bias),
            slope: tape.leaf(&slope),
        }];
        let x = tape.constant(&[1, 3, v, t], xdata.clone()).unwrap();
        let y = decoder_forward(&mut tape, &bound, x).unwrap();

        // direct convolution oracle: every output frame ko equals
        // prelu(weight * input frame t0)
        let yv = tape.value(y);
        for c in 0..3 {
            for vi in 0..v {
                let src = weight * xdata[(c * v + vi) * t + t0];
                let expect = if src >= 0.0 { src } else { 0.25 * src };
                for ko in 0..k {
                    let got = yv[(c * v + vi) * k + ko];
                    assert!(
                        (got - expect).abs() < 1e-12,
                        "c={c} v={vi} k={ko}: {got} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn param_count_formula() {
        assert_eq!(decoder_param_count(10, 25, 4).unwrap(), 19229);
        assert_eq!(decoder_param_count(1, 1, 1).unwrap(), 11);
        assert!(decoder_param_count(10, 25, 0).is_err());
    }

    #[test]
    fn param_count_matches_instantiated_tensors() {
        let mut rng = Rng::new(3);
        let params = DecoderParams::init(10, 25, 4, &mut rng).unwrap();
        let actual: usize = params
            .stages
            .iter()
            .map(|s| s.kernel.numel() + s.bias.numel() + s.slope.numel())
            .sum();
        assert_eq!(actual, decoder_param_count(10, 25, 4).unwrap());
    }
}
