//! Boltzmann action selection and temperature annealing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Action;

/// Linear temperature schedule over the first `t_anneal` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSchedule {
    pub tau_init: f64,
    pub tau_final: f64,
    pub t_anneal: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            tau_init: 1.0,
            tau_final: 0.10,
            t_anneal: 95_000,
        }
    }
}

impl AnnealSchedule {
    pub fn new(tau_init: f64, tau_final: f64, t_anneal: u64) -> Result<Self> {
        let s = Self {
            tau_init,
            tau_final,
            t_anneal,
        };
        s.validate()?;
        Ok(s)
    }

    /// `tau_final` may be zero here so the schedule can be summarised on its
    /// own; runs additionally require it to be positive.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_init > 0.0 && self.tau_init.is_finite()) {
            return Err(Error::config(format!(
                "tau_init must be positive, got {}",
                self.tau_init
            )));
        }
        if !(0.0..=self.tau_init).contains(&self.tau_final) {
            return Err(Error::config(format!(
                "tau_final must lie in [0, tau_init], got {}",
                self.tau_final
            )));
        }
        if self.t_anneal == 0 {
            return Err(Error::config("t_anneal must be at least 1"));
        }
        Ok(())
    }

    /// Temperature at 1-based step `t`; constant at `tau_final` after `t_anneal`.
    pub fn temperature(&self, t: u64) -> f64 {
        let t = t.max(1);
        if t >= self.t_anneal {
            return if self.t_anneal == 1 {
                self.tau_init
            } else {
                self.tau_final
            };
        }
        let frac = (t - 1) as f64 / (self.t_anneal - 1) as f64;
        self.tau_init + (self.tau_final - self.tau_init) * frac
    }

    /// Mean temperature over the first `floor(t_anneal / 2)` steps.
    pub fn exploration_strength(&self) -> Result<f64> {
        if self.t_anneal < 2 {
            return Err(Error::config("exploration strength needs t_anneal >= 2"));
        }
        let k = self.t_anneal / 2;
        let sum: f64 = (1..=k).map(|t| self.temperature(t)).sum();
        Ok(sum / k as f64)
    }
}

/// Free-function form of [`AnnealSchedule::temperature`].
pub fn temperature(schedule: &AnnealSchedule, t: u64) -> f64 {
    schedule.temperature(t)
}

/// Free-function form of [`AnnealSchedule::exploration_strength`].
pub fn exploration_strength(schedule: &AnnealSchedule) -> Result<f64> {
    schedule.exploration_strength()
}

/// Action rule used once learning has stopped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalPolicy {
    Softmax { tau_eval: f64 },
    Greedy,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        EvalPolicy::Softmax { tau_eval: 0.10 }
    }
}

impl EvalPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EvalPolicy::Softmax { tau_eval } if !(tau_eval > 0.0 && tau_eval.is_finite()) => Err(
                Error::config(format!("tau_eval must be positive, got {tau_eval}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            EvalPolicy::Softmax { tau_eval } => format!("softmax:{tau_eval}"),
            EvalPolicy::Greedy => "greedy".to_string(),
        }
    }

    pub fn select<R: Rng + ?Sized>(&self, q: [f64; 2], rng: &mut R) -> Result<Action> {
        match *self {
            EvalPolicy::Softmax { tau_eval } => softmax_policy(q, tau_eval, rng).map(|(a, _)| a),
            EvalPolicy::Greedy => {
                check_finite(q)?;
                Ok(greedy_action(q))
            }
        }
    }
}

fn check_finite(q: [f64; 2]) -> Result<()> {
    if q.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("action values {q:?}")))
    }
}

/// Boltzmann probabilities with the maximum subtracted before exponentiating.
pub fn softmax_probs(q: [f64; 2], tau: f64) -> Result<[f64; 2]> {
    check_finite(q)?;
    if !(tau > 0.0) {
        return Err(Error::config(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let max = q[0].max(q[1]);
    let e = q.map(|v| ((v - max) / tau).exp());
    let z = e[0] + e[1];
    Ok([e[0] / z, e[1] / z])
}

/// Samples an action from the Boltzmann distribution at temperature `tau`.
pub fn softmax_policy<R: Rng + ?Sized>(
    q: [f64; 2],
    tau: f64,
    rng: &mut R,
) -> Result<(Action, [f64; 2])> {
    let probs = softmax_probs(q, tau)?;
    let u: f64 = rng.gen();
    let action = if u < probs[0] {
        Action::Cooperate
    } else {
        Action::Defect
    };
    Ok((action, probs))
}

/// Argmax with ties going to Cooperate.
pub fn greedy_action(q: [f64; 2]) -> Action {
    if q[1] > q[0] {
        Action::Defect
    } else {
        Action::Cooperate
    }
}
