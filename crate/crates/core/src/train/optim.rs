use std::fmt;
use std::str::FromStr;

use crate::error::{Result, VampError};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Gradient descent with momentum 0.9.
    Momentum,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = VampError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "momentum" | "sgd" => Ok(OptimizerKind::Momentum),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(VampError::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
}

const MOMENTUM: f64 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ParamStore) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(VampError::Config(format!("learning rate {lr} must be positive")));
        }
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Ok(Optimizer {
            kind,
            lr,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        })
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Vec<f64>]) {
        self.t += 1;
        let (bc1, bc2) = (
            1.0 - BETA1.powi(self.t as i32),
            1.0 - BETA2.powi(self.t as i32),
        );
        for (id, g) in grads.iter().enumerate() {
            let p = params.get_mut(id).data_mut();
            match self.kind {
                OptimizerKind::Momentum => {
                    for ((w, m), gv) in p.iter_mut().zip(&mut self.m[id]).zip(g) {
                        *m = MOMENTUM * *m + gv;
                        *w -= self.lr * *m;
                    }
                }
                OptimizerKind::Adam => {
                    let v = &mut self.v[id];
                    for (((w, m), vv), gv) in p.iter_mut().zip(&mut self.m[id]).zip(v).zip(g) {
                        *m = BETA1 * *m + (1.0 - BETA1) * gv;
                        *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
                        *w -= self.lr * (*m / bc1) / ((*vv / bc2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}
