use serde::{Deserialize, Serialize};

use crate::model::{Gradients, ParamGroup, PolicyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Plain SGD, or Adam with the usual (0.9, 0.999, 1e-8) constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Descends along `grads`, leaving `frozen` groups untouched.
    pub fn step(&mut self, params: &mut PolicyParams, grads: &Gradients, frozen: &[ParamGroup]) {
        let mut g = grads.clone();
        for &f in frozen {
            g.zero_group(params, f);
        }
        let g = g.as_slice();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, gi) in params.as_mut_slice().iter_mut().zip(g) {
                    *p -= self.lr * gi;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != g.len() {
                    self.m = vec![0.0; g.len()];
                    self.v = vec![0.0; g.len()];
                }
                self.step += 1;
                let bc1 = 1.0 - BETA1.powi(self.step as i32);
                let bc2 = 1.0 - BETA2.powi(self.step as i32);
                let frozen_ranges: Vec<_> = frozen.iter().map(|&f| params.layout_range(f)).collect();
                for (i, (p, gi)) in params.as_mut_slice().iter_mut().zip(g).enumerate() {
                    if frozen_ranges.iter().any(|r| r.contains(&i)) {
                        continue;
                    }
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * gi;
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * gi * gi;
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    *p -= self.lr * mhat / (vhat.sqrt() + EPS);
                }
            }
        }
    }
}
