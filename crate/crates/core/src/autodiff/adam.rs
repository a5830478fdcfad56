//! Adam optimizer with bias correction.

use std::fmt;

use ndarray::ArrayD;

use super::Params;
use crate::num::Real;

/// Optimizer hyperparameters. Hyperparameters are kept in f64 so the same
/// config value round-trips through checkpoints regardless of model dtype.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, aligned with [`Params`] registration order.
pub struct AdamState<F: Real> {
    pub step: u64,
    pub m: Vec<ArrayD<F>>,
    pub v: Vec<ArrayD<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &Params<F>) -> Self {
        let zeros: Vec<ArrayD<F>> = params
            .iter()
            .map(|(_, p)| ArrayD::zeros(p.raw_dim()))
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Gradient contained a NaN; training cannot continue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DivergedError {
    pub step: u64,
    pub param: String,
}

impl fmt::Display for DivergedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "training diverged: NaN gradient for parameter `{}` at optimizer step {}",
            self.param, self.step
        )
    }
}

impl std::error::Error for DivergedError {}

/// One Adam update over all parameters. `grads` must align with the params
/// container (as produced by `StagedParams::collect`).
pub fn adam_step<F: Real>(
    params: &mut Params<F>,
    grads: &[ArrayD<F>],
    state: &mut AdamState<F>,
    hyper: &AdamHyper,
) -> Result<(), DivergedError> {
    assert_eq!(grads.len(), params.len(), "grads misaligned with params");
    let next_step = state.step + 1;
    for (i, (name, _)) in params.iter().enumerate() {
        if grads[i].iter().any(|g| g.as_f64().is_nan()) {
            return Err(DivergedError {
                step: next_step,
                param: name.to_string(),
            });
        }
    }
    state.step = next_step;
    let t = state.step as f64;
    let b1 = F::from_f64(hyper.beta1);
    let b2 = F::from_f64(hyper.beta2);
    let one = F::one();
    let lr = F::from_f64(hyper.lr);
    let inv_corr1 = F::from_f64(1.0 / (1.0 - hyper.beta1.powi(t as i32)));
    let inv_corr2 = F::from_f64(1.0 / (1.0 - hyper.beta2.powi(t as i32)));
    let eps = F::from_f64(hyper.eps);
    for i in 0..params.len() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let g = &grads[i];
        m.zip_mut_with(g, |mi, &gi| *mi = b1 * *mi + (one - b1) * gi);
        v.zip_mut_with(g, |vi, &gi| *vi = b2 * *vi + (one - b2) * gi * gi);
        let value = params.value_mut(super::ParamId(i));
        ndarray::Zip::from(value)
            .and(&*m)
            .and(&*v)
            .for_each(|p, &mi, &vi| {
                let m_hat = mi * inv_corr1;
                let v_hat = vi * inv_corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    fn single_param(value: f64) -> Params<f64> {
        let mut p = Params::new();
        p.add("w", arr1(&[value]).into_dyn());
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = single_param(1.5);
        let mut state = AdamState::new(&params);
        let grads = vec![arr1(&[0.0]).into_dyn()];
        adam_step(&mut params, &grads, &mut state, &AdamHyper::default()).unwrap();
        let id = params.id_by_name("w").unwrap();
        assert_eq!(*params.value(id).first().unwrap(), 1.5);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // fresh state, grad g: m̂ = g, v̂ = g² → Δ = -lr·g/(|g| + eps)
        let g = 0.37f64;
        let lr = 0.001;
        let mut params = single_param(2.0);
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper {
            lr,
            ..AdamHyper::default()
        };
        adam_step(
            &mut params,
            &[arr1(&[g]).into_dyn()],
            &mut state,
            &hyper,
        )
        .unwrap();
        let id = params.id_by_name("w").unwrap();
        let expected = 2.0 - lr * g / (g.abs() + hyper.eps);
        assert!((params.value(id).first().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_approaches_signed_lr_step() {
        let g = -0.004f64;
        let lr = 0.01;
        let mut params = single_param(0.0);
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper {
            lr,
            ..AdamHyper::default()
        };
        let id = params.id_by_name("w").unwrap();
        let mut prev = 0.0f64;
        for step in 0..2000 {
            prev = *params.value(id).first().unwrap();
            adam_step(
                &mut params,
                &[arr1(&[g]).into_dyn()],
                &mut state,
                &hyper,
            )
            .unwrap();
            if step > 1500 {
                let delta = params.value(id).first().unwrap() - prev;
                // update direction approaches -lr·sign(g) = +lr
                assert!((delta - lr).abs() < lr * 0.05, "delta {delta} vs {lr}");
            }
        }
    }

    #[test]
    fn nan_gradient_reports_param_and_step() {
        let mut params = single_param(1.0);
        let mut state = AdamState::new(&params);
        let err = adam_step(
            &mut params,
            &[arr1(&[f64::NAN]).into_dyn()],
            &mut state,
            &AdamHyper::default(),
        )
        .unwrap_err();
        assert_eq!(err.param, "w");
        assert_eq!(err.step, 1);
    }
}
