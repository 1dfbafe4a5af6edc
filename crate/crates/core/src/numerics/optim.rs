use super::{Group, ParamId, ParamStore};

/// One learning-rate group handed to the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub group: Group,
    pub lr: f64,
    pub params: Vec<ParamId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction and per-group learning rates.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .iter()
            .map(|(_, p)| vec![0.0; p.tensor.len()])
            .collect();
        Adam {
            cfg,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held in `store`.
    /// Frozen parameters and parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, groups: &[ParamGroup]) {
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for group in groups {
            for &id in &group.params {
                let param = store.get_mut(id);
                if param.frozen {
                    continue;
                }
                let Some(grad) = param.tensor.grad.take() else {
                    continue;
                };
                let (m, v) = (&mut self.first[id.0], &mut self.second[id.0]);
                for (i, w) in param.tensor.data_mut().iter_mut().enumerate() {
                    let g = grad[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    *w -= group.lr * mhat / (vhat.sqrt() + eps);
                }
                param.tensor.grad = Some(grad);
            }
        }
    }
}
