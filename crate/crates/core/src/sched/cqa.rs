use std::cmp::Ordering;

use super::{Allocation, QueueView, Scheduler, SchedulerInput};
use crate::SimRng;

/// Channel and QoS aware scheduler.
///
/// Queues are bucketed by head-of-line delay (`hol / grouping_ms`) and older
/// buckets go first. Inside a bucket queues are ranked by
/// `(1 / priority) * (hol / budget) * rbg_bits`, then by QCI priority and UE
/// id. RBGs are handed out greedily in rank order.
#[derive(Debug, Clone)]
pub struct CqaScheduler {
    grouping_ms: u64,
}

impl CqaScheduler {
    pub fn new(grouping_ms: u64) -> Self {
        Self { grouping_ms: grouping_ms.max(1) }
    }

    pub fn group(&self, q: &QueueView) -> u64 {
        q.hol_ms / self.grouping_ms
    }

    pub fn metric(q: &QueueView) -> f64 {
        (1.0 / q.flow.class().priority) * q.urgency() * f64::from(q.rbg_bits)
    }

    /// Ordering with the queue to serve first sorting first.
    pub fn rank(&self, a: &QueueView, b: &QueueView) -> Ordering {
        self.group(b)
            .cmp(&self.group(a))
            .then_with(|| Self::metric(b).total_cmp(&Self::metric(a)))
            .then_with(|| a.flow.class().priority.total_cmp(&b.flow.class().priority))
            .then_with(|| a.ue_id.cmp(&b.ue_id))
            .then_with(|| a.flow.index().cmp(&b.flow.index()))
    }

    /// Input queue indices in service order.
    pub fn ranking(&self, input: &SchedulerInput) -> Vec<usize> {
        let mut order: Vec<usize> = (0..input.queues.len()).collect();
        order.sort_by(|&a, &b| self.rank(&input.queues[a], &input.queues[b]));
        order
    }
}

impl Scheduler for CqaScheduler {
    fn name(&self) -> &'static str {
        "cqa"
    }

    fn allocate(&mut self, input: &SchedulerInput, _rng: &mut SimRng) -> Allocation {
        let mut alloc = Allocation::idle(input);
        let mut remaining: Vec<u64> = input.queues.iter().map(|q| q.backlog_bits).collect();
        let order = self.ranking(input);
        let mut cursor = 0;
        for rbg in 0..input.n_rbg {
            while cursor < order.len() {
                let i = order[cursor];
                if remaining[i] > 0 && input.queues[i].rbg_bits > 0 {
                    break;
                }
                cursor += 1;
            }
            let Some(&i) = order.get(cursor) else { break };
            let q = &input.queues[i];
            alloc.map.assign(rbg, q.grant()).expect("each RBG is visited once");
            remaining[i] = remaining[i].saturating_sub(u64::from(q.rbg_bits));
        }
        alloc
    }
}
