//! Actor and critic networks and their TD(0) updates.

use rand::Rng;

use super::nn::{Gradients, Mlp, Real, Trace};
use crate::config::Activation;

/// Softmax policy over `n_actions` discrete actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork<T = f32> {
    pub net: Mlp<T>,
}

/// State-value estimator with a single linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNetwork<T = f32> {
    pub net: Mlp<T>,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

impl<T: Real> PolicyNetwork<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, n_actions: usize, hidden: &[usize], act: Activation, rng: &mut R) -> Self {
        Self { net: Mlp::new(&layer_sizes(obs_dim, hidden, n_actions), act, rng) }
    }

    pub fn n_actions(&self) -> usize {
        self.net.output_dim()
    }
}

impl<T: Real> ValueNetwork<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], act: Activation, rng: &mut R) -> Self {
        Self { net: Mlp::new(&layer_sizes(obs_dim, hidden, 1), act, rng) }
    }

    /// `V(obs)`, leaving the activations in `trace` for a later update.
    pub fn value(&self, obs: &[T], trace: &mut Trace<T>) -> f64 {
        self.net.forward(obs, trace);
        trace.output()[0].to_f64().expect("finite")
    }
}

/// Softmax over the feasible logits; masked actions get exactly zero.
pub fn masked_softmax<T: Real>(logits: &[T], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| l.to_f64().expect("finite"))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, &m)| if m { (l.to_f64().expect("finite") - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    probs
}

/// Action probabilities at `obs`; `trace` keeps the activations for
/// [`actor_update`].
pub fn actor_forward<T: Real>(net: &PolicyNetwork<T>, obs: &[T], mask: &[bool], trace: &mut Trace<T>) -> Vec<f64> {
    assert_eq!(mask.len(), net.n_actions(), "mask width mismatch");
    assert!(mask.iter().any(|&m| m), "at least one action must be feasible");
    net.net.forward(obs, trace);
    masked_softmax(trace.output(), mask)
}

/// `r + gamma * V(O') - V(O)`.
pub fn td_error(reward: f64, gamma: f64, v_next: f64, v_curr: f64) -> f64 {
    reward + gamma * v_next - v_curr
}

/// `d log pi(a | O) / d logits` under the mask: `onehot(a) - pi` on feasible
/// entries, zero on masked ones.
fn log_prob_logit_grad<T: Real>(probs: &[f64], mask: &[bool], action: usize) -> Vec<T> {
    probs
        .iter()
        .zip(mask)
        .enumerate()
        .map(|(j, (&p, &m))| {
            let g = if !m {
                0.0
            } else if j == action {
                1.0 - p
            } else {
                -p
            };
            T::from_f64(g).expect("finite")
        })
        .collect()
}

fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite")
}

/// `grad_theta log pi(a | O)` at the traced observation.
pub fn log_prob_gradient<T: Real>(net: &PolicyNetwork<T>, trace: &Trace<T>, mask: &[bool], action: usize) -> Gradients<T> {
    let probs = masked_softmax(trace.output(), mask);
    net.net.gradients(trace, &log_prob_logit_grad(&probs, mask, action))
}

/// Policy-gradient step `theta += lr * delta * grad log pi(a | O)` using the
/// activations from the [`actor_forward`] call that produced `probs`. With
/// `max_norm` set, the step direction is clipped to that gradient norm.
pub fn actor_update<T: Real>(
    net: &mut PolicyNetwork<T>,
    trace: &Trace<T>,
    probs: &[f64],
    mask: &[bool],
    action: usize,
    delta: f64,
    lr: f64,
    max_norm: Option<f64>,
) {
    if delta == 0.0 {
        return;
    }
    assert!(mask[action], "updated action must have been feasible");
    let d: Vec<T> = log_prob_logit_grad::<T>(probs, mask, action).into_iter().map(|g| g * real(delta)).collect();
    net.net.ascend_clipped(trace, &d, real(lr), max_norm.map(real));
}

/// `grad_theta (target - V(O))^2` with the target held fixed, where
/// `delta = target - V(O)`.
pub fn critic_loss_gradient<T: Real>(net: &ValueNetwork<T>, trace: &Trace<T>, delta: f64) -> Gradients<T> {
    net.net.gradients(trace, &[T::from_f64(-2.0 * delta).expect("finite")])
}

/// One gradient-descent step on `delta^2` (semi-gradient: the bootstrapped
/// target is treated as a constant).
pub fn critic_update<T: Real>(net: &mut ValueNetwork<T>, trace: &Trace<T>, delta: f64, lr: f64, max_norm: Option<f64>) {
    if delta == 0.0 {
        return;
    }
    // theta -= lr * (-2 delta grad V)
    net.net.ascend_clipped(trace, &[real(2.0 * delta)], real(lr), max_norm.map(real));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn softmax_symmetry_and_masking() {
        let p = masked_softmax(&[0.3f64; 5], &[true; 5]);
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-15));

        let p = masked_softmax(&[5.0f64, -2.0, 1.0], &[false, true, false]);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn softmax_normalizes_random_logits() {
        let mut r = rng(3);
        for _ in 0..1000 {
            let n = r.random_range(1..60);
            let logits: Vec<f32> = (0..n).map(|_| r.random_range(-30.0..30.0)).collect();
            let mut mask: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
            mask[n - 1] = true;
            let p = masked_softmax(&logits, &mask);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().zip(&mask).all(|(&x, &m)| m || x == 0.0));
        }
    }

    #[test]
    fn td_error_cases() {
        assert!((td_error(1.0, 0.9, 2.0, 1.0) - 1.8).abs() < 1e-12);
        assert_eq!(td_error(1.0, 0.0, 2.0, 0.25), 0.75);
        assert_eq!(td_error(1.0, 0.9, 0.0, 0.25), 0.75);
    }

    #[test]
    fn zero_delta_leaves_networks_alone() {
        let mut actor = PolicyNetwork::<f32>::new(6, 4, &[8, 8], Activation::Relu, &mut rng(1));
        let mut critic = ValueNetwork::<f32>::new(6, &[8, 8], Activation::Relu, &mut rng(2));
        let (a0, c0) = (actor.clone(), critic.clone());
        let obs = [0.1f32, 0.2, 0.0, 1.0, 0.5, 0.3];
        let mask = [true; 4];
        let mut t = Trace::default();
        let probs = actor_forward(&actor, &obs, &mask, &mut t);
        actor_update(&mut actor, &t, &probs, &mask, 2, 0.0, 0.01, None);
        let mut tc = Trace::default();
        critic.value(&obs, &mut tc);
        critic_update(&mut critic, &tc, 0.0, 0.05, None);
        assert_eq!(actor, a0);
        assert_eq!(critic, c0);
    }

    #[test]
    fn positive_advantage_raises_action_probability() {
        let mut r = rng(7);
        for trial in 0..20 {
            let mut actor = PolicyNetwork::<f64>::new(10, 5, &[16, 16, 16], Activation::Relu, &mut r);
            let obs: Vec<f64> = (0..10).map(|_| r.random_range(0.0..1.0)).collect();
            let mask = [true, true, trial % 2 == 0, true, true];
            let a = [0, 1, 3, 4][trial % 4];
            let mut t = Trace::default();
            let before = actor_forward(&actor, &obs, &mask, &mut t);
            actor_update(&mut actor, &t, &before, &mask, a, 1.5, 0.01, None);
            let after = actor_forward(&actor, &obs, &mask, &mut t);
            assert!(after[a] > before[a], "trial {trial}: {} -> {}", before[a], after[a]);
        }
    }

    #[test]
    fn repeated_critic_updates_shrink_td_error() {
        let mut critic = ValueNetwork::<f64>::new(4, &[16, 16, 16], Activation::Relu, &mut rng(5));
        let obs = [0.2, 0.7, 0.1, 0.9];
        let target = 3.0;
        let mut t = Trace::default();
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let delta = target - critic.value(&obs, &mut t);
            assert!(delta.abs() < last, "{delta} !< {last}");
            last = delta.abs();
            critic_update(&mut critic, &t, delta, 0.005, None);
        }
        assert!(last < 0.5);
    }
}
