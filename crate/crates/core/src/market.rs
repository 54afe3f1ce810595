//! Static market and problem parameters.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matching::ArmPreferenceProfile;

/// `C(n, k)`, saturating at `usize::MAX`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketConfig {
    pub agents: usize,
    pub arms: usize,
    pub dim: usize,
    pub horizon: usize,
    /// Ridge parameter per agent.
    pub lambda: Vec<f64>,
    /// Score noise standard deviation, known to the planner.
    pub sigma: f64,
    /// Assumed uniform minimum margin per agent.
    pub margin: Vec<f64>,
    /// Context norm bound per agent used by the exploration-length formula.
    pub x_max: Vec<f64>,
    pub arm_prefs: ArmPreferenceProfile,
    /// Fixed exploration length replacing the formula.
    pub exploration_rounds: Option<usize>,
}

impl MarketConfig {
    /// `C(K, N)`.
    pub fn loop_len(&self) -> usize {
        binomial(self.arms, self.agents)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::constraint(field, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("n", self.agents)?;
        positive("k", self.arms)?;
        positive("d", self.dim)?;
        positive("horizon", self.horizon)?;
        if self.agents > self.arms {
            return Err(Error::constraint(
                "n",
                format!("N = {} exceeds K = {}", self.agents, self.arms),
            ));
        }
        if self.horizon < self.loop_len() {
            return Err(Error::constraint(
                "horizon",
                format!("T = {} is below C(K,N) = {}", self.horizon, self.loop_len()),
            ));
        }
        for (field, values) in [
            ("lambda", &self.lambda),
            ("margin", &self.margin),
            ("x_max", &self.x_max),
        ] {
            if values.len() != self.agents {
                return Err(Error::constraint(
                    field,
                    format!("expected {} values, got {}", self.agents, values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::constraint(field, "values must be finite"));
            }
        }
        if self.lambda.iter().any(|&v| v <= 0.0) {
            return Err(Error::constraint("lambda", "values must be positive"));
        }
        if self.x_max.iter().any(|&v| v <= 0.0) {
            return Err(Error::constraint("x_max", "values must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::constraint("sigma", "must be finite and >= 0"));
        }
        if self.arm_prefs.agents() != self.agents || self.arm_prefs.arms() != self.arms {
            return Err(Error::constraint(
                "arm_prefs",
                format!(
                    "expected {} lists over {} agents, got {} over {}",
                    self.arms,
                    self.agents,
                    self.arm_prefs.arms(),
                    self.arm_prefs.agents()
                ),
            ));
        }
        if let Some(h) = self.exploration_rounds {
            let loop_len = self.loop_len();
            if h == 0 || h % loop_len != 0 {
                return Err(Error::constraint(
                    "exploration_rounds",
                    format!("{h} is not a positive multiple of C(K,N) = {loop_len}"),
                ));
            }
            if h > self.horizon {
                return Err(Error::constraint(
                    "exploration_rounds",
                    format!("{h} exceeds the horizon {}", self.horizon),
                ));
            }
        }
        Ok(())
    }
}
