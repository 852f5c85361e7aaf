use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for every parameter, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (first_moment, second_moment) = params
            .into_iter()
            .map(|p| {
                let z = Tensor::new(p.shape().to_vec(), vec![0.0; p.len()]).expect("shape");
                (z.clone(), z)
            })
            .unzip();
        Self {
            config,
            step: 0,
            first_moment,
            second_moment,
        }
    }

    /// One bias-corrected Adam update, in place.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: vec![params.len()],
                right: vec![grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((w, &gr), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gr;
                *vi = beta2 * *vi + (1.0 - beta2) * gr * gr;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::from_rows(&[vec![1.0, -2.0]]).unwrap()];
        let before = params.clone();
        let mut st = AdamState::new(AdamConfig::default(), &params);
        st.update(&mut params, &[Tensor::zeros(1, 2)]).unwrap();
        assert_eq!(params, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_by_hand() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut params = vec![Tensor::scalar(0.5)];
        let mut st = AdamState::new(cfg, &params);
        st.update(&mut params, &[Tensor::scalar(1.0)]).unwrap();
        // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1 -> step = 0.1 * 1 / (1 + 1e-8)
        assert!((params[0].item() - (0.5 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let init = vec![Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap()];
        let grads = [Tensor::from_rows(&[vec![0.5, -0.25, 1.0]]).unwrap()];
        let run = || {
            let mut p = init.clone();
            let mut s = AdamState::new(AdamConfig::default(), &p);
            for _ in 0..5 {
                s.update(&mut p, &grads).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
        let mut p = init.clone();
        let mut s = AdamState::new(AdamConfig::default(), &p);
        assert!(s.update(&mut p, &[Tensor::zeros(3, 1)]).is_err());
    }
}
