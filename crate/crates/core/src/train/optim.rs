use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u32,
}

/// Per-parameter optimizer state, indexed like the model's registry. Weight
/// decay is decoupled: it is added to the update direction, not the gradient
/// moments.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    state: Vec<Option<AdamState>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64, num_params: usize) -> Self {
        Self {
            kind,
            weight_decay,
            state: vec![None; num_params],
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn state(&self, index: usize) -> Option<&AdamState> {
        self.state.get(index).and_then(Option::as_ref)
    }

    /// Updates `param` in place from `grad`.
    ///
    /// SGD: `p ← p − lr·(g + wd·p)`.
    /// Adam: `p ← p − lr·(m̂/(√v̂ + ε) + wd·p)` with bias-corrected moments.
    pub fn step(&mut self, index: usize, param: &mut Matrix, grad: &Matrix, lr: f64) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::Shape {
                op: "optimizer step",
                left: param.shape(),
                right: grad.shape(),
            });
        }
        let slot = self.state.get_mut(index).ok_or(Error::Index {
            what: "parameter",
            index,
            bound: 0,
        })?;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in param.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                    *p -= lr * (g + wd * *p);
                }
            }
            OptimizerKind::Adam => {
                let st = slot.get_or_insert_with(|| AdamState {
                    m: Matrix::zeros(grad.rows(), grad.cols()),
                    v: Matrix::zeros(grad.rows(), grad.cols()),
                    t: 0,
                });
                st.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(st.t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(st.t as i32);
                let (m, v) = (st.m.as_mut_slice(), st.v.as_mut_slice());
                for (j, (p, &g)) in param.as_mut_slice().iter_mut().zip(grad.as_slice()).enumerate() {
                    m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
                    v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    *p -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + wd * *p);
                }
            }
        }
        Ok(())
    }
}
