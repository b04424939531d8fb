//! Adam optimizer with bias correction and an L2 term.

use crate::error::{Error, Result};

/// How the weight-decay coefficient enters the update.
///
/// `Coupled` adds `lambda * theta` to the gradient before the moment
/// updates (classic L2). `Decoupled` applies `lr * lambda * theta`
/// directly to the parameter, bypassing the moments; kept as an
/// ablation knob.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightDecayMode {
    #[default]
    Coupled,
    Decoupled,
}

/// One parameter's view for an optimizer step.
pub struct AdamParam<'a> {
    pub name: &'a str,
    pub values: &'a mut [f64],
    pub grad: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub mode: WeightDecayMode,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(param_sizes: &[usize], lr: f64, weight_decay: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            mode: WeightDecayMode::Coupled,
            first_moment: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One optimizer step over all parameters. Parameter order must match
    /// the order `new` was called with. A NaN/Inf gradient aborts the
    /// step before any parameter is touched.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = AdamParam<'a>>) -> Result<()> {
        let params: Vec<AdamParam<'a>> = params.into_iter().collect();
        if params.len() != self.first_moment.len() {
            return Err(Error::Contract(format!(
                "adam: {} parameters registered, {} supplied",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.grad.len() != p.values.len() || p.values.len() != self.first_moment[i].len() {
                return Err(Error::Contract(format!(
                    "adam: size mismatch for parameter '{}'",
                    p.name
                )));
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter '{}'",
                    p.name
                )));
            }
        }

        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);

        for (i, p) in params.into_iter().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for j in 0..p.values.len() {
                let g = match self.mode {
                    WeightDecayMode::Coupled => p.grad[j] + self.weight_decay * p.values[j],
                    WeightDecayMode::Decoupled => p.grad[j],
                };
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                let mut delta = self.lr * m_hat / (v_hat.sqrt() + self.eps);
                if self.mode == WeightDecayMode::Decoupled {
                    delta += self.lr * self.weight_decay * p.values[j];
                }
                p.values[j] -= delta;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param_step(values: &mut [f64], grad: &[f64], state: &mut AdamState) {
        state
            .step([AdamParam {
                name: "p",
                values,
                grad,
            }])
            .unwrap();
    }

    #[test]
    fn constant_grad_first_step_moves_by_lr() {
        // m_hat/sqrt(v_hat) = 1 on the first step, so theta moves by ~lr.
        let mut state = AdamState::new(&[1], 0.01, 0.0);
        let mut theta = [0.0];
        one_param_step(&mut theta, &[1.0], &mut state);
        assert!((theta[0] + 0.01).abs() < 1e-9, "{}", theta[0]);
    }

    #[test]
    fn zero_grad_coupled_step_closed_form() {
        // With classic L2 the effective gradient is lambda*theta, which
        // Adam normalizes: delta = lr * g / (|g| + eps).
        let (lr, lambda, theta0) = (0.01, 1e-4, 0.5);
        let mut state = AdamState::new(&[1], lr, lambda);
        let mut theta = [theta0];
        one_param_step(&mut theta, &[0.0], &mut state);
        let g = lambda * theta0;
        let expected = theta0 - lr * g / (g.abs() + 1e-8);
        assert!((theta[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_grad_decoupled_step_is_pure_decay() {
        // Decoupled mode: parameter unchanged except the -lr*lambda*theta
        // decay term.
        let (lr, lambda, theta0) = (0.01, 1e-4, 0.5);
        let mut state = AdamState::new(&[1], lr, lambda);
        state.mode = WeightDecayMode::Decoupled;
        let mut theta = [theta0];
        one_param_step(&mut theta, &[0.0], &mut state);
        assert!((theta[0] - (theta0 - lr * lambda * theta0)).abs() < 1e-15);
    }

    #[test]
    fn parameters_update_independently() {
        let mut state = AdamState::new(&[1, 1], 0.01, 0.0);
        let mut a = [1.0];
        let mut b = [1.0];
        state
            .step([
                AdamParam { name: "a", values: &mut a, grad: &[1.0] },
                AdamParam { name: "b", values: &mut b, grad: &[0.0] },
            ])
            .unwrap();
        assert!((a[0] - 0.99).abs() < 1e-9);
        assert_eq!(b[0], 1.0);
    }

    #[test]
    fn nan_grad_aborts_naming_parameter() {
        let mut state = AdamState::new(&[1], 0.01, 0.0);
        let mut theta = [1.0];
        let err = state
            .step([AdamParam {
                name: "prediction",
                values: &mut theta,
                grad: &[f64::NAN],
            }])
            .unwrap_err();
        assert!(err.to_string().contains("prediction"), "{err}");
        assert_eq!(theta[0], 1.0);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn step_counter_increments() {
        let mut state = AdamState::new(&[1], 0.01, 0.0);
        let mut theta = [0.0];
        for expect in 1..=3u64 {
            one_param_step(&mut theta, &[1.0], &mut state);
            assert_eq!(state.step, expect);
        }
    }
}
