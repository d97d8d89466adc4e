//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

/// Compare analytic gradients against central finite differences.
///
/// `loss_fn` must build the loss on the given tape from the given parameter
/// values and return the loss var together with the leaf var of each
/// parameter, in the same order as `params`. It must be deterministic.
///
/// Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(mut loss_fn: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Tensor]) -> Result<(Var, Vec<Var>)>,
{
    if eps <= 0.0 {
        return Err(Error::InvalidEps(eps));
    }

    let mut tape = Tape::new();
    let (loss, vars) = loss_fn(&mut tape, params)?;
    if vars.len() != params.len() {
        return Err(Error::InvalidConfig(format!(
            "loss_fn returned {} leaf vars for {} parameters",
            vars.len(),
            params.len()
        )));
    }
    let loss_value = tape.value(loss)[0];
    if !loss_value.is_finite() {
        return Err(Error::NonFinite(format!("loss = {loss_value}")));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; p.numel()])
        })
        .collect();
    drop(tape);

    let mut eval_loss = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let (l, _) = loss_fn(&mut t, perturbed)?;
        let v = t.value(l)[0];
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss = {v}")));
        }
        Ok(v)
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        for ei in 0..p.numel() {
            let orig = p.data()[ei];
            work[pi].data_mut()[ei] = orig + eps;
            let lp = eval_loss(&work)?;
            work[pi].data_mut()[ei] = orig - eps;
            let lm = eval_loss(&work)?;
            work[pi].data_mut()[ei] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            let a = analytic[pi][ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_checks_below_1e8() {
        // y = w . x, exactly linear in w
        let w = Tensor::new(vec![3, 1], vec![0.5, -1.25, 2.0])
            .unwrap()
            .with_grad();
        let x = Tensor::new(vec![1, 3, 1, 1], vec![3.0, 4.0, 5.0]).unwrap();
        let err = grad_check(
            |tape, params| {
                let wv = tape.leaf(&params[0]);
                let xv = tape.leaf(&x);
                let y = tape.linear_channels(xv, wv)?;
                let l = tape.sum(y)?;
                Ok((l, vec![wv]))
            },
            &[w],
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn zero_eps_rejected() {
        let w = Tensor::scalar(1.0).with_grad();
        let r = grad_check(
            |tape, params| {
                let v = tape.leaf(&params[0]);
                tape.sum(v).map(|l| (l, vec![v]))
            },
            &[w],
            0.0,
        );
        assert!(matches!(r, Err(Error::InvalidEps(_))));
    }
}
