//! Adam optimizer and the stepped learning-rate schedule.

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First/second moment buffers, one pair per parameter tensor in canonical
/// order, plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let mut moments = Vec::new();
        params.for_each_param(&mut |_, t| {
            moments.push(Moments {
                m: vec![0.0; t.numel()],
                v: vec![0.0; t.numel()],
            })
        });
        AdamState { step: 0, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Bias-corrected Adam update for a single buffer. `step` is the 1-based
/// step counter after incrementing.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    data: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..data.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        data[i] -= lr * mhat / (vhat.sqrt() + epsilon);
    }
}

/// Apply one Adam step in place, reading each tensor's populated gradient.
/// A non-finite gradient rejects the whole step with a diagnostic naming the
/// parameter.
pub fn adam_step(
    params: &mut ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::Optimizer(format!("learning rate must be > 0, got {lr}")));
    }
    // validate every gradient before touching any parameter
    let mut problem = None;
    let mut idx = 0;
    params.for_each_param(&mut |name, t| {
        if problem.is_some() {
            return;
        }
        match t.grad() {
            Some(g) if g.iter().all(|x| x.is_finite()) => {}
            Some(_) => problem = Some(format!("non-finite gradient in {name}")),
            None => problem = Some(format!("missing gradient for {name}")),
        }
        idx += 1;
    });
    if let Some(msg) = problem {
        return Err(Error::Optimizer(msg));
    }
    if idx != state.moments.len() {
        return Err(Error::Optimizer(format!(
            "optimizer state covers {} tensors, model has {idx}",
            state.moments.len()
        )));
    }
    state.step += 1;
    let step = state.step;
    let moments = &mut state.moments;
    let mut i = 0;
    params.for_each_param_mut(&mut |_, t| {
        let slot = &mut moments[i];
        let grad = t.grad().expect("validated above").to_vec();
        adam_update(
            t.data_mut(),
            &grad,
            &mut slot.m,
            &mut slot.v,
            step,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon,
            lr,
        );
        i += 1;
    });
    Ok(())
}

/// Learning rate for a 1-based epoch: `lr0` until `decay_after`, then decayed
/// by `decay_factor` every `decay_every` epochs.
///
/// With the defaults (0.01, decay 0.1 every 5 after 20): epochs 1-20 give
/// 0.01, 21-25 give 0.001, 26-30 give 0.0001.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let decays = if epoch > cfg.decay_after {
        (epoch - cfg.decay_after - 1) / cfg.decay_every + 1
    } else {
        0
    };
    cfg.lr0 * cfg.decay_factor.powi(decays as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderVariant, ModelConfig};

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn schedule_matches_stated_boundaries() {
        let cfg = TrainConfig::default();
        assert!(approx(lr_at_epoch(&cfg, 1), 0.01, 1e-15));
        assert!(approx(lr_at_epoch(&cfg, 20), 0.01, 1e-15));
        assert!(approx(lr_at_epoch(&cfg, 21), 0.001, 1e-15));
        assert!(approx(lr_at_epoch(&cfg, 25), 0.001, 1e-15));
        assert!(approx(lr_at_epoch(&cfg, 26), 0.0001, 1e-15));
        assert!(approx(lr_at_epoch(&cfg, 30), 0.0001, 1e-15));
    }

    #[test]
    fn schedule_is_non_increasing() {
        let cfg = TrainConfig::default();
        let mut last = f64::INFINITY;
        for epoch in 1..200 {
            let lr = lr_at_epoch(&cfg, epoch);
            assert!(lr <= last);
            last = lr;
        }
    }

    #[test]
    fn single_step_on_scalar_moves_by_about_lr() {
        let mut p = vec![1.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, 0.9, 0.999, 1e-8, 0.01);
        assert!(approx(p[0], 1.0 - 0.01, 1e-6), "p = {}", p[0]);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = vec![2.0, -3.0];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        for step in 1..=5 {
            adam_update(
                &mut p,
                &[0.0, 0.0],
                &mut m,
                &mut v,
                step,
                0.9,
                0.999,
                1e-8,
                0.01,
            );
        }
        assert_eq!(p, vec![2.0, -3.0]);
    }

    #[test]
    fn parameter_groups_update_independently() {
        // the second buffer's gradient must not influence the first
        let mut p1 = vec![1.0];
        let (mut m1, mut v1) = (vec![0.0], vec![0.0]);
        adam_update(&mut p1, &[1.0], &mut m1, &mut v1, 1, 0.9, 0.999, 1e-8, 0.01);

        let mut p1_again = vec![1.0];
        let mut p2 = vec![5.0];
        let (mut m1b, mut v1b) = (vec![0.0], vec![0.0]);
        let (mut m2, mut v2) = (vec![0.0], vec![0.0]);
        adam_update(&mut p1_again, &[1.0], &mut m1b, &mut v1b, 1, 0.9, 0.999, 1e-8, 0.01);
        adam_update(&mut p2, &[-7.0], &mut m2, &mut v2, 1, 0.9, 0.999, 1e-8, 0.01);
        assert_eq!(p1, p1_again);
    }

    #[test]
    fn non_finite_gradient_rejects_step() {
        let cfg = ModelConfig {
            variant: EncoderVariant::Separable,
            joints: 3,
            input_frames: 3,
            output_frames: 2,
            channels: vec![3, 3],
            decoder_stages: 1,
        };
        let mut params = ModelParams::init(&cfg, 0).unwrap();
        let before = params.clone();
        // populate all gradients with zeros, then poison one
        params.for_each_param_mut(&mut |_, t| {
            let zeros = vec![0.0; t.numel()];
            t.set_grad(&zeros).unwrap();
        });
        let mut first = true;
        params.for_each_param_mut(&mut |_, t| {
            if first {
                let mut g = vec![0.0; t.numel()];
                g[0] = f64::NAN;
                t.set_grad(&g).unwrap();
                first = false;
            }
        });
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &mut state, &TrainConfig::default(), 0.01).unwrap_err();
        assert!(err.to_string().contains("non-finite gradient"));
        // parameter values untouched by the rejected step
        let values = |p: &ModelParams| -> Vec<Vec<f64>> {
            p.flatten().iter().map(|t| t.data().to_vec()).collect()
        };
        assert_eq!(values(&params), values(&before));
    }
}
