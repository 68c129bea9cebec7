//! Observation layout for one scheduling decision at one base station.
//!
//! For each of `M` candidate queues, eight features:
//!
//! | offset | feature                                                   |
//! |--------|-----------------------------------------------------------|
//! | 0      | `cqi / 15`                                                |
//! | 1      | `hol / delay_budget`                                      |
//! | 2      | remaining backlog as a fraction of a full TTI, capped at 1 |
//! | 3      | 1 if the class is URLLC (`budget <= urllc_threshold`)     |
//! | 4..8   | one-hot class: Voice, IMS, Video, V2X                     |
//!
//! followed by two station-wide features: the fraction of RBGs already
//! assigned this TTI and the mean CQI of attached UEs over 15. Unused
//! candidate rows are zero.

use super::nn::Real;
use crate::domain::FlowLabel;
use crate::sched::{QueueView, SchedulerInput};

pub const ROW_WIDTH: usize = 8;
pub const GLOBAL_FEATURES: usize = 2;

pub fn observation_len(m: usize) -> usize {
    m * ROW_WIDTH + GLOBAL_FEATURES
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationLayout {
    pub candidates: usize,
    pub urllc_threshold_ms: u64,
}

impl ObservationLayout {
    pub fn len(&self) -> usize {
        observation_len(self.candidates)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `M` candidates plus the idle action.
    pub fn n_actions(&self) -> usize {
        self.candidates + 1
    }

    pub fn idle_action(&self) -> usize {
        self.candidates
    }

    pub fn is_urllc(&self, flow: FlowLabel) -> bool {
        flow.class().delay_budget_ms <= self.urllc_threshold_ms
    }

    /// Up to `M` input queue indices, most urgent (`hol / budget`) first;
    /// ties go to the lower UE id, then class.
    pub fn candidates(&self, input: &SchedulerInput) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..input.queues.len()).collect();
        let q = &input.queues;
        idx.sort_by(|&a, &b| {
            q[b].urgency()
                .total_cmp(&q[a].urgency())
                .then(q[a].ue_id.cmp(&q[b].ue_id))
                .then(q[a].flow.index().cmp(&q[b].flow.index()))
        });
        idx.truncate(self.candidates);
        idx
    }

    /// Feasibility of each action: candidate slots holding a queue that can
    /// still take bits, and the idle action (always feasible).
    pub fn mask(&self, input: &SchedulerInput, cands: &[usize], remaining: &[u64], out: &mut Vec<bool>) {
        out.clear();
        out.resize(self.n_actions(), false);
        for (slot, &qi) in cands.iter().enumerate() {
            out[slot] = remaining[slot] > 0 && input.queues[qi].rbg_bits > 0;
        }
        out[self.idle_action()] = true;
    }

    /// Writes the observation. `remaining[slot]` is the candidate's backlog
    /// after grants already made this TTI; `assigned` RBGs are taken.
    pub fn encode<T: Real>(&self, input: &SchedulerInput, cands: &[usize], remaining: &[u64], assigned: usize, out: &mut Vec<T>) {
        let f = |x: f64| T::from_f64(x).expect("finite");
        out.clear();
        out.resize(self.len(), T::zero());
        for (slot, &qi) in cands.iter().enumerate() {
            let q: &QueueView = &input.queues[qi];
            let row = &mut out[slot * ROW_WIDTH..(slot + 1) * ROW_WIDTH];
            row[0] = f(f64::from(q.cqi) / 15.0);
            row[1] = f(q.urgency());
            let tti_bits = f64::from(q.rbg_bits) * input.n_rbg as f64;
            row[2] = f(if tti_bits > 0.0 { (remaining[slot] as f64 / tti_bits).min(1.0) } else { 0.0 });
            row[3] = f(if self.is_urllc(q.flow) { 1.0 } else { 0.0 });
            row[4 + q.flow.index()] = T::one();
        }
        let g = self.candidates * ROW_WIDTH;
        out[g] = f(if input.n_rbg > 0 { assigned as f64 / input.n_rbg as f64 } else { 0.0 });
        out[g + 1] = f(input.mean_cqi() / 15.0);
    }
}
