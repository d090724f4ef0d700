use crate::types::ParamGenWeights;

/// Adam with decoupled weight decay.
///
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)`
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self { lr, beta1, beta2, eps, weight_decay, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut ParamGenWeights, grads: &ParamGenWeights) {
        let use_bias = params.use_bias;
        let tensors = params.tensors_mut();
        if self.first.is_empty() {
            self.first = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, (theta, g)) in tensors.into_iter().zip(grads.tensors()).enumerate() {
            let is_bias = idx == 2 || idx == 4;
            if is_bias && !use_bias {
                continue;
            }
            let (m, v) = (&mut self.first[idx], &mut self.second[idx]);
            for i in 0..theta.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * theta[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramgen::init_weights;
    use crate::types::ComponentMode;

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut w = init_weights(ComponentMode::Fixed(2), 3, true, 1).unwrap();
        let before = w.clone();
        let mut g = w.zeros_like();
        g.seeds.iter_mut().for_each(|v| *v = 1.0);
        let mut opt = AdamW::new(0.0, 0.9, 0.999, 1e-8, 0.01);
        for _ in 0..5 {
            opt.update(&mut w, &g);
        }
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = init_weights(ComponentMode::Fixed(1), 1, true, 1).unwrap();
        let s0 = w.seeds[0];
        let mut g = w.zeros_like();
        g.seeds[0] = 0.3;
        let mut opt = AdamW::new(0.1, 0.9, 0.999, 0.0, 0.0);
        opt.update(&mut w, &g);
        assert!((w.seeds[0] - (s0 - 0.1)).abs() < 1e-12);
    }
}
