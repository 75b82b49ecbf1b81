use serde::{Deserialize, Serialize};

use super::{QNetworkParams, OUTPUT_DIM};
use crate::error::{Error, Result};
use crate::game::Action;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Quadratic inside `|r| <= delta`, linear outside (SmoothL1 when delta = 1).
    #[default]
    Huber,
    /// Squared residual.
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    pub delta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Huber,
            delta: 1.0,
        }
    }
}

impl LossConfig {
    pub fn mse() -> Self {
        Self {
            kind: LossKind::Mse,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta > 0.0 && self.delta.is_finite() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "huber delta must be positive, got {}",
                self.delta
            )))
        }
    }

    /// Elementwise loss of residual `r` and its derivative with respect to `r`.
    #[inline]
    pub fn eval(&self, r: f64) -> (f64, f64) {
        match self.kind {
            LossKind::Huber => (huber(r, self.delta), r.clamp(-self.delta, self.delta)),
            LossKind::Mse => (r * r, 2.0 * r),
        }
    }
}

#[inline]
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// One regression sample: only the value of `action` is fitted to `target`.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub action: Action,
    pub target: f64,
}

/// Mean loss over the batch and its exact gradient.
///
/// The unselected action's output receives no gradient.
pub fn loss_and_grad(
    params: &QNetworkParams,
    batch: &[Sample<'_>],
    cfg: &LossConfig,
) -> Result<(f64, QNetworkParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("loss needs a nonempty batch"));
    }
    let (d, h) = (params.input_dim(), params.hidden_dim());
    let scale = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut hidden = vec![0.0; h];
    let mut total = 0.0;

    for s in batch {
        if s.input.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: s.input.len(),
            });
        }
        if !s.target.is_finite() {
            return Err(Error::NonFinite(format!("target {}", s.target)));
        }
        let q = params.forward_into(s.input, &mut hidden);
        let a = s.action.index();
        let (l, dl) = cfg.eval(q[a] - s.target);
        total += l;
        let g = dl * scale;

        grads.b2[a] += g;
        let w2_row = &params.w2[a * h..(a + 1) * h];
        let gw2_row = &mut grads.w2[a * h..(a + 1) * h];
        for j in 0..h {
            gw2_row[j] += g * hidden[j];
            // ReLU gate: zero output means zero pre-activation slope.
            if hidden[j] > 0.0 {
                let gh = g * w2_row[j];
                grads.b1[j] += gh;
                for (gw, x) in grads.w1[j * d..(j + 1) * d].iter_mut().zip(s.input) {
                    *gw += gh * x;
                }
            }
        }
    }
    debug_assert_eq!(OUTPUT_DIM, 2);
    Ok((total * scale, grads))
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut QNetworkParams, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
