//! Epsilon-greedy action selection with a linear decay schedule.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub min: f64,
    pub explore_ttis: u64,
}

/// Linear decay from `start` at TTI 0 to `min` at `explore_ttis`, flat after.
pub fn epsilon_at(tti: u64, s: &EpsilonSchedule) -> f64 {
    if tti >= s.explore_ttis {
        return s.min;
    }
    let frac = tti as f64 / s.explore_ttis as f64;
    s.start + (s.min - s.start) * frac
}

/// With probability `epsilon` a uniformly random feasible action, otherwise
/// the most probable feasible action (lowest index on ties).
pub fn select_action<R: Rng + ?Sized>(probs: &[f64], mask: &[bool], epsilon: f64, rng: &mut R) -> usize {
    debug_assert_eq!(probs.len(), mask.len());
    let feasible = mask.iter().filter(|&&m| m).count();
    assert!(feasible > 0, "at least one action must be feasible");
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        let k = rng.random_range(0..feasible);
        return mask.iter().enumerate().filter(|(_, &m)| m).nth(k).map(|(i, _)| i).expect("k < feasible");
    }
    let mut best = None;
    for (i, (&p, &m)) in probs.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((i, p));
        }
    }
    best.expect("feasible action exists").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SCHEDULE: EpsilonSchedule = EpsilonSchedule { start: 1.0, min: 0.0, explore_ttis: 3700 };

    #[test]
    fn schedule_shape() {
        assert_eq!(epsilon_at(0, &SCHEDULE), 1.0);
        assert_eq!(epsilon_at(1850, &SCHEDULE), 0.5);
        assert_eq!(epsilon_at(3700, &SCHEDULE), 0.0);
        assert_eq!(epsilon_at(10_000, &SCHEDULE), 0.0);
        let s = EpsilonSchedule { min: 0.05, ..SCHEDULE };
        assert_eq!(epsilon_at(4000, &s), 0.05);
        let mut last = f64::INFINITY;
        for t in 0..4000 {
            let e = epsilon_at(t, &s);
            assert!(e <= last);
            last = e;
        }
    }

    #[test]
    fn greedy_takes_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probs = [0.1, 0.5, 0.4];
        assert!((0..100).all(|_| select_action(&probs, &[true; 3], 0.0, &mut rng) == 1));
        assert_eq!(select_action(&probs, &[true, false, true], 0.0, &mut rng), 2);
        assert_eq!(select_action(&[0.5, 0.5, 0.0], &[true; 3], 0.0, &mut rng), 0);
    }

    #[test]
    fn single_feasible_action_always_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mask = [false, false, true, false];
        for eps in [0.0, 0.5, 1.0] {
            assert!((0..200).all(|_| select_action(&[0.0, 0.0, 1.0, 0.0], &mask, eps, &mut rng) == 2));
        }
    }

    #[test]
    fn full_exploration_is_uniform_over_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mask = [true, false, true, true, false, true];
        let probs = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let mut counts = [0usize; 6];
        let n = 100_000;
        for _ in 0..n {
            counts[select_action(&probs, &mask, 1.0, &mut rng)] += 1;
        }
        assert_eq!(counts[1] + counts[4], 0);
        for i in [0, 2, 3, 5] {
            let frac = counts[i] as f64 / n as f64;
            assert!((frac - 0.25).abs() / 0.25 < 0.02, "{counts:?}");
        }
    }
}
