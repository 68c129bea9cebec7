//! Per-decision reward: `R = phi * R1 + tau * R2 + lambda * R3`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub tau: f64,
    pub lambda: f64,
}

impl RewardWeights {
    /// Delay-only preset: the URLLC term is switched off.
    pub const D_A2C: RewardWeights = RewardWeights { tau: 0.0, lambda: 5.0 };
    pub const CDPA_A2C: RewardWeights = RewardWeights { tau: 5.0, lambda: 5.0 };
}

/// What the reward needs to know about the packet an RBG was given to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub cqi: u8,
    /// Mean CQI over all UEs attached to the deciding station.
    pub mean_cqi: f64,
    pub is_urllc: bool,
    /// Head-of-line delay of the packet, ms.
    pub delay_ms: f64,
    pub budget_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms {
    pub phi: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub total: f64,
}

/// `sinc(pi * n)` for integer `n`: 1 at zero and exactly 0 elsewhere.
pub fn sinc_pi_int(n: i64) -> f64 {
    if n == 0 {
        1.0
    } else {
        0.0
    }
}

pub fn reward_terms(x: &RewardInputs, w: RewardWeights) -> RewardTerms {
    debug_assert!(x.budget_ms > 0.0);
    let ratio = x.delay_ms / x.budget_ms;
    let phi = 1.0 - ratio;
    // max(sgn(cqi_k - mean), 0)
    let r1 = if f64::from(x.cqi) > x.mean_cqi { 1.0 } else { 0.0 };
    let r2 = if x.is_urllc { 1.0 } else { 0.0 };
    let r3 = sinc_pi_int(ratio.floor() as i64);
    RewardTerms { phi, r1, r2, r3, total: phi * r1 + w.tau * r2 + w.lambda * r3 }
}

pub fn reward(x: &RewardInputs, w: RewardWeights) -> f64 {
    reward_terms(x, w).total
}
