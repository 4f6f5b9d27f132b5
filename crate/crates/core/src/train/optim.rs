use serde::{Deserialize, Serialize};

use crate::nn::{Module, ParamRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// β1 = 0.9, β2 = 0.999, ε = 1e-8.
    #[default]
    Adam,
    /// Heavy-ball momentum 0.9.
    SgdMomentum,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MOMENTUM: f32 = 0.9;

/// Per-parameter optimizer state, allocated on the first step in visit order.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    steps: u32,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// Applies one update from the accumulated gradients.
    pub fn step<M: Module<f32> + ?Sized>(&mut self, model: &mut M) {
        self.steps += 1;
        let t = self.steps as i32;
        let lr = self.lr;
        let kind = self.kind;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let (first, second) = (&mut self.first, &mut self.second);
        let mut slot = 0;
        model.visit("", &mut |_, tensor, role| {
            if role != ParamRole::Weight {
                return;
            }
            let (w, g) = tensor.data_and_grad_mut();
            if first.len() == slot {
                first.push(vec![0.0; w.len()]);
                second.push(if kind == OptimizerKind::Adam { vec![0.0; w.len()] } else { Vec::new() });
            }
            let m = &mut first[slot];
            match kind {
                OptimizerKind::Adam => {
                    let v = &mut second[slot];
                    for i in 0..w.len() {
                        m[i] = (BETA1 as f32) * m[i] + (1.0 - BETA1 as f32) * g[i];
                        v[i] = (BETA2 as f32) * v[i] + (1.0 - BETA2 as f32) * g[i] * g[i];
                        let mh = m[i] as f64 / bc1;
                        let vh = v[i] as f64 / bc2;
                        w[i] -= (lr * mh / (vh.sqrt() + ADAM_EPS)) as f32;
                    }
                }
                OptimizerKind::SgdMomentum => {
                    for i in 0..w.len() {
                        m[i] = MOMENTUM * m[i] + g[i];
                        w[i] -= (lr as f32) * m[i];
                    }
                }
            }
            slot += 1;
        });
    }
}
