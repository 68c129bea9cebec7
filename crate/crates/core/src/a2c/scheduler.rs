//! D-A2C and CDPA-A2C: one actor per base station, one shared critic.

use rand::SeedableRng;

use super::explore::{epsilon_at, select_action, EpsilonSchedule};
use super::learner::{actor_forward, actor_update, critic_update, td_error, PolicyNetwork, ValueNetwork};
use super::nn::Trace;
use super::observation::ObservationLayout;
use super::reward::{reward, RewardInputs, RewardWeights};
use crate::config::{Activation, ScenarioConfig};
use crate::sched::{Allocation, Scheduler, SchedulerInput};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct A2cSettings {
    pub layout: ObservationLayout,
    pub weights: RewardWeights,
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub actor_max_grad_norm: Option<f64>,
    pub critic_max_grad_norm: Option<f64>,
    pub epsilon: EpsilonSchedule,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: bool,
}

impl A2cSettings {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let l = &cfg.learning;
        let (tau, lambda) = cfg.reward_weights();
        Self {
            layout: ObservationLayout { candidates: l.candidates, urllc_threshold_ms: l.urllc_threshold_ms },
            weights: RewardWeights { tau, lambda },
            gamma: l.gamma,
            lr_actor: l.lr_actor,
            lr_critic: l.lr_critic,
            actor_max_grad_norm: l.actor_max_grad_norm,
            critic_max_grad_norm: l.critic_max_grad_norm,
            epsilon: EpsilonSchedule { start: l.epsilon_start, min: l.epsilon_min, explore_ttis: l.explore_ttis },
            hidden: l.hidden.clone(),
            activation: l.activation,
            train: l.train,
        }
    }
}

/// Running checks on every decision's action distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecisionStats {
    pub decisions: u64,
    pub explored: u64,
    pub idle: u64,
    /// Largest `|sum(p) - 1|` seen.
    pub max_normalization_error: f64,
    /// Largest probability seen on a masked action.
    pub max_masked_probability: f64,
    /// Training updates made, with the sum and absolute sum of their TD errors.
    pub updates: u64,
    pub td_sum: f64,
    pub td_abs_sum: f64,
}

#[derive(Debug, Clone)]
pub struct A2cScheduler {
    settings: A2cSettings,
    actors: Vec<PolicyNetwork<f32>>,
    critic: ValueNetwork<f32>,
    stats: DecisionStats,
    obs: Vec<f32>,
    next_obs: Vec<f32>,
    mask: Vec<bool>,
    actor_trace: Trace<f32>,
    critic_trace: Trace<f32>,
    next_trace: Trace<f32>,
}

impl A2cScheduler {
    /// Fresh networks for `n_bs` actors, initialized from `init_seed`.
    pub fn new(settings: A2cSettings, n_bs: usize, init_seed: u64) -> Self {
        let mut rng = SimRng::seed_from_u64(init_seed);
        let dim = settings.layout.len();
        let actions = settings.layout.n_actions();
        let actors = (0..n_bs)
            .map(|_| PolicyNetwork::new(dim, actions, &settings.hidden, settings.activation, &mut rng))
            .collect();
        let critic = ValueNetwork::new(dim, &settings.hidden, settings.activation, &mut rng);
        Self::with_networks(settings, actors, critic)
    }

    pub fn with_networks(settings: A2cSettings, actors: Vec<PolicyNetwork<f32>>, critic: ValueNetwork<f32>) -> Self {
        Self {
            settings,
            actors,
            critic,
            stats: DecisionStats::default(),
            obs: Vec::new(),
            next_obs: Vec::new(),
            mask: Vec::new(),
            actor_trace: Trace::default(),
            critic_trace: Trace::default(),
            next_trace: Trace::default(),
        }
    }

    pub fn settings(&self) -> &A2cSettings {
        &self.settings
    }

    pub fn set_training(&mut self, train: bool) {
        self.settings.train = train;
    }

    pub fn actors(&self) -> &[PolicyNetwork<f32>] {
        &self.actors
    }

    pub fn critic(&self) -> &ValueNetwork<f32> {
        &self.critic
    }

    pub fn into_networks(self) -> (Vec<PolicyNetwork<f32>>, ValueNetwork<f32>) {
        (self.actors, self.critic)
    }

    pub fn stats(&self) -> DecisionStats {
        self.stats
    }

    fn current_epsilon(&self, tti: u64) -> f64 {
        if self.settings.train {
            epsilon_at(tti, &self.settings.epsilon)
        } else {
            0.0
        }
    }

    fn record(&mut self, probs: &[f64]) {
        let s = &mut self.stats;
        s.decisions += 1;
        let err = (probs.iter().sum::<f64>() - 1.0).abs();
        s.max_normalization_error = s.max_normalization_error.max(err);
        for (p, &m) in probs.iter().zip(&self.mask) {
            if !m {
                s.max_masked_probability = s.max_masked_probability.max(*p);
            }
        }
    }
}

impl Scheduler for A2cScheduler {
    fn name(&self) -> &'static str {
        if self.settings.weights.tau == 0.0 {
            "da2c"
        } else {
            "cdpa-a2c"
        }
    }

    /// RBGs are filled one at a time. Each decision observes the station,
    /// picks an action epsilon-greedily, and (when training) updates the
    /// shared critic and then this station's actor from the TD error of
    /// the transition to the post-assignment observation.
    fn allocate(&mut self, input: &SchedulerInput, rng: &mut SimRng) -> Allocation {
        let mut alloc = Allocation::idle(input);
        let layout = self.settings.layout;
        let cands = layout.candidates(input);
        let mut remaining: Vec<u64> = cands.iter().map(|&qi| input.queues[qi].backlog_bits).collect();
        let epsilon = self.current_epsilon(input.tti);
        let mean_cqi = input.mean_cqi();
        let idle = layout.idle_action();
        let train = self.settings.train;
        let actor_idx = input.bs.min(self.actors.len() - 1);

        layout.encode(input, &cands, &remaining, 0, &mut self.obs);
        let mut v_curr = None;

        for rbg in 0..input.n_rbg {
            layout.mask(input, &cands, &remaining, &mut self.mask);
            if !self.mask[..idle].iter().any(|&m| m) {
                // Only idle is left; nothing to decide or learn.
                break;
            }
            if train && v_curr.is_none() {
                v_curr = Some(self.critic.value(&self.obs, &mut self.critic_trace));
            }

            let probs = actor_forward(&self.actors[actor_idx], &self.obs, &self.mask, &mut self.actor_trace);
            self.record(&probs);
            let explore_draw = epsilon > 0.0;
            let action = select_action(&probs, &self.mask, epsilon, rng);
            if explore_draw && probs[action] < probs.iter().copied().fold(0.0, f64::max) {
                self.stats.explored += 1;
            }

            let r = if action == idle {
                self.stats.idle += 1;
                0.0
            } else {
                let q = &input.queues[cands[action]];
                alloc.map.assign(rbg, q.grant()).expect("each RBG is decided once");
                remaining[action] = remaining[action].saturating_sub(u64::from(q.rbg_bits));
                reward(
                    &RewardInputs {
                        cqi: q.cqi,
                        mean_cqi,
                        is_urllc: layout.is_urllc(q.flow),
                        delay_ms: q.hol_ms as f64,
                        budget_ms: q.delay_budget_ms() as f64,
                    },
                    self.settings.weights,
                )
            };
            alloc.reward += r;

            layout.encode(input, &cands, &remaining, rbg + 1, &mut self.next_obs);
            if train {
                let v_next = self.critic.value(&self.next_obs, &mut self.next_trace);
                let delta = td_error(r, self.settings.gamma, v_next, v_curr.expect("set above"));
                self.stats.updates += 1;
                self.stats.td_sum += delta;
                self.stats.td_abs_sum += delta.abs();
                critic_update(&mut self.critic, &self.critic_trace, delta, self.settings.lr_critic, self.settings.critic_max_grad_norm);
                actor_update(
                    &mut self.actors[actor_idx],
                    &self.actor_trace,
                    &probs,
                    &self.mask,
                    action,
                    delta,
                    self.settings.lr_actor,
                    self.settings.actor_max_grad_norm,
                );
                // V(O') under the updated critic becomes the next V(O).
                v_curr = Some(self.critic.value(&self.next_obs, &mut self.critic_trace));
            }
            std::mem::swap(&mut self.obs, &mut self.next_obs);
        }
        alloc
    }

    fn epsilon(&self, tti: u64) -> Option<f64> {
        Some(self.current_epsilon(tti))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SchedulerKind;
    use crate::domain::FlowLabel;
    use crate::sched::check_allocation;
    use crate::sched::testutil::{input, queue};

    fn settings(kind: SchedulerKind) -> A2cSettings {
        let mut cfg = ScenarioConfig { scheduler: kind, ..Default::default() };
        cfg.learning.candidates = 6;
        cfg.learning.hidden = vec![32, 32, 32];
        A2cSettings::from_config(&cfg.validate().unwrap())
    }

    #[test]
    fn empty_input_stays_idle_without_learning() {
        let mut s = A2cScheduler::new(settings(SchedulerKind::CdpaA2c), 2, 1);
        let before = s.clone();
        let alloc = s.allocate(&SchedulerInput::empty(1, 0, 7), &mut SimRng::seed_from_u64(0));
        assert!(alloc.map.is_empty());
        assert_eq!(alloc.reward, 0.0);
        assert_eq!(s.actors, before.actors);
        assert_eq!(s.critic, before.critic);
        assert_eq!(s.stats().decisions, 0);
    }

    #[test]
    fn urllc_queue_earns_full_reward_per_rbg() {
        // Greedy, frozen: every decision goes to the single V2X queue unless
        // the policy prefers idle, so force the idle logit down.
        let mut set = settings(SchedulerKind::CdpaA2c);
        set.train = false;
        let mut s = A2cScheduler::new(set, 1, 3);
        let out = s.actors[0].net.layers_mut().last_mut().unwrap();
        let idle = 6;
        out.bias_mut()[idle] = -1e3;
        let mut inp = input(4, vec![queue(0, FlowLabel::V2x, 15, 10, 1_000_000, 1866)]);
        inp.ue_cqi.push((1, 3));
        let alloc = s.allocate(&inp, &mut SimRng::seed_from_u64(0));
        assert_eq!(alloc.map.assigned_count(), 4);
        assert!((alloc.reward - 4.0 * 10.5).abs() < 1e-12);
    }

    #[test]
    fn presets_share_the_code_path() {
        let inp = input(5, vec![queue(0, FlowLabel::Voice, 12, 30, 4000, 900), queue(1, FlowLabel::Video, 5, 90, 20_000, 400)]);
        let run = |kind| {
            let mut s = A2cScheduler::new(settings(kind), 1, 9);
            let mut rng = SimRng::seed_from_u64(4);
            let maps: Vec<_> = (0..20).map(|_| s.allocate(&inp, &mut rng)).collect();
            (maps, s.actors, s.critic)
        };
        // No URLLC traffic: the two presets see identical rewards.
        assert_eq!(run(SchedulerKind::DA2c), run(SchedulerKind::CdpaA2c));
    }

    #[test]
    fn training_allocations_honour_contract() {
        let mut s = A2cScheduler::new(settings(SchedulerKind::CdpaA2c), 1, 5);
        let inp = input(
            7,
            vec![
                queue(0, FlowLabel::Voice, 12, 30, 800, 900),
                queue(1, FlowLabel::V2x, 5, 15, 2400, 400),
                queue(2, FlowLabel::Video, 9, 200, 16_000, 700),
            ],
        );
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..50 {
            let alloc = s.allocate(&inp, &mut rng);
            check_allocation(&inp, &alloc.map).unwrap();
        }
        let st = s.stats();
        assert!(st.decisions > 0);
        assert!(st.max_normalization_error < 1e-9);
        assert_eq!(st.max_masked_probability, 0.0);
    }
}
