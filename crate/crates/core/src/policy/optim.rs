use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    /// Plain gradient descent.
    Sgd,
    /// Bias-corrected adaptive moments.
    Adam {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: beta1(),
            beta2: beta2(),
            eps: adam_eps(),
        }
    }
}

/// First and second moment estimates for one parameter block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    step: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer { config, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn uses_moments(&self) -> bool {
        matches!(self.config, OptimizerConfig::Adam { .. })
    }

    pub(crate) fn advance(&mut self) {
        self.step += 1;
    }

    /// Descends `params` along `grads` for the current step. `grads = None`
    /// means a zero gradient, which still moves Adam through its momentum.
    pub(crate) fn apply(
        &self,
        params: &mut [f64],
        grads: Option<&[f64]>,
        moments: &mut Moments,
        lr: f64,
    ) {
        match self.config {
            OptimizerConfig::Sgd => {
                if let Some(g) = grads {
                    for (p, g) in params.iter_mut().zip(g) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads.map_or(0.0, |g| g[i]);
                    let m = &mut moments.m[i];
                    let v = &mut moments.v[i];
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    if *m != 0.0 {
                        params[i] -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}
