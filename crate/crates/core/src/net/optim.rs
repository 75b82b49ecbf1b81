//! AdamW, Adam and RMSprop.
//!
//! ```text
//! AdamW:   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
//!          p = p - lr wd p - lr (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
//! Adam:    as AdamW with g = g + wd p and no decoupled decay
//! RMSprop: v = alpha v + (1-alpha) g'^2;  p = p - lr g' / (sqrt(v) + eps),  g' = g + wd p
//! ```

use serde::{Deserialize, Serialize};

use super::QNetworkParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    #[serde(rename = "adamw")]
    AdamW,
    Adam,
    #[serde(rename = "rmsprop")]
    RmsProp,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Decoupled for AdamW, added to the gradient for Adam and RMSprop.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// RMSprop smoothing constant.
    pub rms_alpha: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            lr: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rms_alpha: 0.99,
        }
    }
}

impl OptimizerConfig {
    /// Defaults for `kind`; weight decay is zero for the coupled variants.
    pub fn for_kind(kind: OptimizerKind) -> Self {
        let weight_decay = match kind {
            OptimizerKind::AdamW => 1e-4,
            OptimizerKind::Adam | OptimizerKind::RmsProp => 0.0,
        };
        Self {
            kind,
            weight_decay,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && (0.0..1.0).contains(&self.rms_alpha)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "invalid optimizer settings: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub first_moment: QNetworkParams,
    pub second_moment: QNetworkParams,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &QNetworkParams) -> Self {
        Self {
            config,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut QNetworkParams, grads: &QNetworkParams) -> Result<()> {
        params.check_shape(grads)?;
        params.check_shape(&self.first_moment)?;
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);

        let p_t = params.tensors_mut();
        let g_t = grads.tensors();
        let m_t = self.first_moment.tensors_mut();
        let v_t = self.second_moment.tensors_mut();
        for (((p, g), m), v) in p_t.into_iter().zip(g_t).zip(m_t).zip(v_t) {
            for i in 0..p.len() {
                match c.kind {
                    OptimizerKind::AdamW => {
                        let gi = g[i];
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] = p[i]
                            - c.lr * c.weight_decay * p[i]
                            - c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                    OptimizerKind::Adam => {
                        let gi = g[i] + c.weight_decay * p[i];
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                    OptimizerKind::RmsProp => {
                        let gi = g[i] + c.weight_decay * p[i];
                        v[i] = c.rms_alpha * v[i] + (1.0 - c.rms_alpha) * gi * gi;
                        p[i] -= c.lr * gi / (v[i].sqrt() + c.eps);
                    }
                }
            }
        }
        Ok(())
    }
}
