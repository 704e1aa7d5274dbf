use super::{shape_err, NnError, ParamStore, Tensor};

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros = || (0..params.len()).map(|i| Tensor::zeros(params.get(i).shape())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<(), NnError> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return shape_err(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params.get(i).shape() || g.shape() != self.m[i].shape() {
                return shape_err(format!(
                    "gradient for {} has shape {:?}, parameter has {:?}",
                    params.name(i),
                    g.shape(),
                    params.get(i).shape()
                ));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i).data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w));
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = scalar_store(0.3);
        let mut adam = AdamState::new(&params, 1e-3);
        for _ in 0..100 {
            adam.step(&mut params, &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(params.get(0).data()[0], 0.3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [-3.0, 0.02, 40.0] {
            let mut params = scalar_store(1.0);
            let mut adam = AdamState::new(&params, 1e-3);
            adam.step(&mut params, &[Tensor::scalar(g)]).unwrap();
            let moved = params.get(0).data()[0] - 1.0;
            assert!((moved + 1e-3 * f64::signum(g)).abs() < 1e-8, "{moved}");
        }
    }

    #[test]
    fn descends_a_parabola() {
        let mut params = scalar_store(1.0);
        let mut adam = AdamState::new(&params, 1e-2);
        let mut last = 1.0;
        for _ in 0..10 {
            let w = params.get(0).data()[0];
            adam.step(&mut params, &[Tensor::scalar(2.0 * w)]).unwrap();
            let w = params.get(0).data()[0];
            assert!(w * w < last);
            last = w * w;
        }
    }

    #[test]
    fn mismatched_gradients_are_rejected() {
        let mut params = scalar_store(1.0);
        let mut adam = AdamState::new(&params, 1e-3);
        assert!(adam.step(&mut params, &[Tensor::zeros(&[2])]).is_err());
        assert!(adam.step(&mut params, &[]).is_err());
    }
}
