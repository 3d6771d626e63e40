use serde::{Deserialize, Serialize};

use super::layers::Parameters;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    RmsProp,
}

/// Per-parameter optimizer state over the flattened parameter vector.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
    RmsProp {
        lr: f64,
        rho: f64,
        eps: f64,
        v: Vec<f64>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-7,
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            },
            OptimizerKind::RmsProp => Optimizer::RmsProp {
                lr,
                rho: 0.9,
                eps: 1e-7,
                v: vec![0.0; n_params],
            },
        }
    }

    /// Applies one update from the flattened gradient.
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grad: &[f64]) {
        let mut offset = 0;
        match self {
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                m,
                v,
                t,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t as i32);
                let c2 = 1.0 - beta2.powi(*t as i32);
                let (lr, b1, b2, eps) = (*lr, *beta1, *beta2, *eps);
                params.visit_mut(&mut |p| {
                    for (j, x) in p.iter_mut().enumerate() {
                        let i = offset + j;
                        let g = grad[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * g;
                        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        *x -= lr * mh / (vh.sqrt() + eps);
                    }
                    offset += p.len();
                });
            }
            Optimizer::RmsProp { lr, rho, eps, v } => {
                let (lr, rho, eps) = (*lr, *rho, *eps);
                params.visit_mut(&mut |p| {
                    for (j, x) in p.iter_mut().enumerate() {
                        let i = offset + j;
                        let g = grad[i];
                        v[i] = rho * v[i] + (1.0 - rho) * g * g;
                        *x -= lr * g / (v[i].sqrt() + eps);
                    }
                    offset += p.len();
                });
            }
        }
    }
}
