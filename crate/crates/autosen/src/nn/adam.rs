//! Adam optimizer with bias-corrected first and second moments.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::layer::{LayerGrads, LayerStack};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: one (m, v) moment pair per parameter tensor, allocated
/// lazily from the first stack it steps. A single Adam instance must keep
/// stepping the same stack.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    moments: Vec<Vec<(Tensor, Tensor)>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Apply one update: p -= lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, stack: &mut LayerStack, grads: &[LayerGrads]) -> Result<()> {
        if grads.len() != stack.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradient entries for {} layers",
                grads.len(),
                stack.layers.len()
            )));
        }
        if self.moments.is_empty() {
            self.moments = stack
                .layers
                .iter()
                .map(|l| {
                    l.params()
                        .iter()
                        .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
                        .collect()
                })
                .collect();
        }
        self.t += 1;
        let c1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for (li, layer) in stack.layers.iter_mut().enumerate() {
            let mut params = layer.params_mut();
            let gparams = grads[li].params();
            if params.len() != gparams.len() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {}: {} params but {} gradients",
                    li,
                    params.len(),
                    gparams.len()
                )));
            }
            for (pi, param) in params.iter_mut().enumerate() {
                let g = gparams[pi];
                if g.shape() != param.shape() {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {} param {}: grad {:?} vs param {:?}",
                        li,
                        pi,
                        g.shape(),
                        param.shape()
                    )));
                }
                g.check_finite(&format!("layer {} param {} grad", li, pi))?;
                let (m, v) = &mut self.moments[li][pi];
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                for ((pv, gv), (mv, vv)) in param
                    .data_mut()
                    .iter_mut()
                    .zip(g.data().iter())
                    .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
                {
                    *mv = b1 * *mv + (1.0 - b1) * gv;
                    *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                    let m_hat = *mv / c1;
                    let v_hat = *vv / c2;
                    *pv -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
                }
            }
        }
        Ok(())
    }
}
