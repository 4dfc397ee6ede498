//! Adam: bias-corrected first/second-moment updates.

use super::{DenseNet, Gradients};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, ..AdamConfig::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment accumulators for one group of parameter tensors. The accumulator
/// layout mirrors the tensor layout handed to [`AdamState::step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step_count: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, tensor_lens: &[usize]) -> Self {
        AdamState {
            config,
            step_count: 0,
            first: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_net(config: AdamConfig, net: &DenseNet) -> Self {
        let lens: Vec<usize> = net
            .layers()
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect();
        AdamState::new(config, &lens)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over a group of tensors. `params[i]` and `grads[i]` must
    /// have the length this state was built with.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.first.len(), "tensor group mismatch");
        assert_eq!(grads.len(), self.first.len(), "gradient group mismatch");
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for ((tensor, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            assert_eq!(tensor.len(), m.len(), "tensor shape changed under the optimizer");
            assert_eq!(grad.len(), m.len(), "gradient shape mismatch");
            for k in 0..m.len() {
                let g = grad[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                tensor[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }

    /// Convenience for whole-net updates.
    pub fn step_net(&mut self, net: &mut DenseNet, grads: &Gradients) {
        let mut params = net.param_tensors_mut();
        self.step(&mut params, &grads.tensors());
    }
}
