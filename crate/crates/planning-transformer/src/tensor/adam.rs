//! Adam with bias correction and global gradient-norm clipping.

use super::{Float, Tensor, TensorError};

/// Global L2 clip applied to all gradients before each update; standard
/// practice for this family of models and not exposed as a hyperparameter.
pub const GRAD_CLIP_NORM: Float = 0.25;

pub struct AdamState {
    pub lr: Float,
    pub beta1: Float,
    pub beta2: Float,
    pub epsilon: Float,
    pub step: u64,
    m: Vec<Vec<Float>>,
    v: Vec<Vec<Float>>,
}

impl AdamState {
    pub fn new(lr: Float) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update over named parameters whose `grad` fields are populated.
    ///
    /// Parameter order must be stable across calls; moment buffers are
    /// allocated on first use and matched by position. A non-finite gradient
    /// aborts the update (no state is touched) and names the parameter.
    pub fn step(&mut self, params: &mut [(&str, &mut Tensor)]) -> Result<(), TensorError> {
        for (name, p) in params.iter() {
            let g = p.grad.as_ref().ok_or_else(|| TensorError::MissingGrad {
                name: (*name).to_string(),
            })?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFiniteGrad {
                    name: (*name).to_string(),
                });
            }
        }
        if self.m.is_empty() {
            for (_, p) in params.iter() {
                self.m.push(vec![0.0; p.numel()]);
                self.v.push(vec![0.0; p.numel()]);
            }
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed size");

        // Global norm clip across the whole parameter set.
        let mut sq_sum = 0.0;
        for (_, p) in params.iter() {
            for g in p.grad.as_ref().unwrap() {
                sq_sum += g * g;
            }
        }
        let norm = sq_sum.sqrt();
        let clip = if norm > GRAD_CLIP_NORM {
            GRAD_CLIP_NORM / norm
        } else {
            1.0
        };

        self.step += 1;
        let t = self.step as Float;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);

        for (i, (_, p)) in params.iter_mut().enumerate() {
            let g = p.grad.as_ref().unwrap();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            assert_eq!(m.len(), p.numel(), "moment buffer shape drift");
            for (j, d) in p.data.iter_mut().enumerate() {
                let gj = g[j] * clip;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *d -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = Tensor::from_vec(vec![1.0, -2.0, 0.5]);
        p.grad = Some(vec![0.0; 3]);
        let before = p.data.clone();
        let mut adam = AdamState::new(0.1);
        adam.step(&mut [("p", &mut p)]).unwrap();
        assert_eq!(p.data, before);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Bias-corrected first step: m_hat = g, v_hat = g^2, so the update is
        // lr * g / (|g| + eps) ~= lr regardless of clipping.
        let mut p = Tensor::from_vec(vec![1.0]);
        p.grad = Some(vec![1.0]);
        let mut adam = AdamState::new(0.1);
        adam.step(&mut [("p", &mut p)]).unwrap();
        assert!((p.data[0] - 0.9).abs() < 1e-4, "got {}", p.data[0]);
    }

    #[test]
    fn descends_on_quadratic() {
        // f(x) = x^2 from x = 1: |x| strictly decreases for 10 steps.
        let mut p = Tensor::from_vec(vec![1.0]);
        let mut adam = AdamState::new(0.05);
        let mut prev = 1.0 as Float;
        for _ in 0..10 {
            p.grad = Some(vec![2.0 * p.data[0]]);
            adam.step(&mut [("x", &mut p)]).unwrap();
            assert!(p.data[0].abs() < prev.abs(), "|x| did not decrease");
            prev = p.data[0];
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Tensor::from_vec(vec![1.0]);
        p.grad = Some(vec![Float::NAN]);
        let mut adam = AdamState::new(0.1);
        let err = adam.step(&mut [("layer0.w", &mut p)]).unwrap_err();
        assert!(err.to_string().contains("layer0.w"));
    }

    #[test]
    fn step_counter_increases_by_one() {
        let mut p = Tensor::from_vec(vec![1.0]);
        let mut adam = AdamState::new(0.01);
        for expect in 1..=5 {
            p.grad = Some(vec![0.3]);
            adam.step(&mut [("p", &mut p)]).unwrap();
            assert_eq!(adam.step, expect);
        }
    }
}
