use serde::{Deserialize, Serialize};

/// ADAM hyper-parameters. `step_size` is the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_size: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_size: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn with_step_size(step_size: f64) -> Self {
        Self {
            step_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.step_size > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidArgument(format!(
                "optimizer needs 0 < beta1, beta2 < 1 and positive epsilon/step_size, got {self:?}"
            )))
        }
    }
}

/// ADAM state over a fixed list of parameter slots.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: OptimizerConfig,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: OptimizerConfig, slot_sizes: &[usize]) -> Self {
        Self {
            cfg,
            t: 0,
            m: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Starts a new step; call [`Adam::update`] once per slot afterwards.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn update<'p>(
        &mut self,
        slot: usize,
        params: impl IntoIterator<Item = &'p mut f64>,
        grads: impl IntoIterator<Item = &'p f64>,
    ) {
        let OptimizerConfig {
            beta1,
            beta2,
            epsilon,
            step_size,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for (((p, &g), mi), vi) in params.into_iter().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *p -= step_size * mhat / (vhat.sqrt() + epsilon);
        }
    }
}
