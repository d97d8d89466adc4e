//! Verify the tape gradients of the full model against central finite
//! differences, for each encoder variant.
//!
//! Run with: cargo run --release --example gradient_check

use stsgcn::model::{model_forward, EncoderVariant, ModelConfig, ModelParams};
use stsgcn::rng::Rng;
use stsgcn::{grad_check, Tensor};

fn main() -> stsgcn::Result<()> {
    let mut rng = Rng::new(14);
    let x = {
        let n = 2 * 3 * 5 * 4;
        Tensor::new(
            vec![2, 3, 5, 4],
            (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )?
    };
    let target = {
        let n = 2 * 3 * 5 * 3;
        Tensor::new(
            vec![2, 3, 5, 3],
            (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )?
    };

    for variant in [
        EncoderVariant::Separable,
        EncoderVariant::Full,
        EncoderVariant::Distinct,
        EncoderVariant::SeparableShared,
    ] {
        let cfg = ModelConfig {
            variant,
            joints: 5,
            input_frames: 4,
            output_frames: 3,
            channels: vec![3, 8, 3],
            decoder_stages: 2,
        };
        let params = ModelParams::init(&cfg, 8)?;
        let n_params: usize = params.flatten().iter().map(|t| t.numel()).sum();
        let template = params.clone();
        let err = grad_check(
            |tape, tensors| {
                let mut p = template.clone();
                p.load_flat(tensors)?;
                let bound = p.bind(tape);
                let xv = tape.leaf(&x);
                let tv = tape.leaf(&target);
                let pred = model_forward(tape, &mut p, &bound, xv, true)?;
                let loss = tape.loss_mpjpe(pred, tv)?;
                Ok((loss, bound.param_vars().to_vec()))
            },
            &params.flatten(),
            1e-5,
        )?;
        println!(
            "{:<16} {n_params:>5} parameters | max relative error vs finite differences: {err:.2e}",
            format!("{variant:?}")
        );
    }
    Ok(())
}
