//! The scheduler contract and the two classical baselines.

mod cqa;
mod pf;

pub use cqa::CqaScheduler;
pub use pf::PfScheduler;

use crate::domain::{FlowLabel, Grant, RbgMap, UeId};
use crate::SimRng;

/// One non-empty (UE, flow) queue as seen by a scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueView {
    pub ue_id: UeId,
    pub flow: FlowLabel,
    pub cqi: u8,
    /// Age of the head packet, ms.
    pub hol_ms: u64,
    pub backlog_bits: u64,
    /// Bits one RBG carries for this UE at its current CQI.
    pub rbg_bits: u32,
}

impl QueueView {
    pub fn grant(&self) -> Grant {
        Grant { ue_id: self.ue_id, flow: self.flow }
    }

    pub fn delay_budget_ms(&self) -> u64 {
        self.flow.class().delay_budget_ms
    }

    /// Head-of-line delay normalized by the class budget.
    pub fn urgency(&self) -> f64 {
        self.hol_ms as f64 / self.delay_budget_ms() as f64
    }
}

/// Everything a scheduler sees for one base station in one TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerInput {
    pub bs: usize,
    pub tti: u64,
    pub n_rbg: usize,
    /// CQI of every UE attached to the station, including idle ones.
    pub ue_cqi: Vec<(UeId, u8)>,
    /// Non-empty queues only.
    pub queues: Vec<QueueView>,
}

impl SchedulerInput {
    pub fn empty(bs: usize, tti: u64, n_rbg: usize) -> Self {
        Self { bs, tti, n_rbg, ue_cqi: Vec::new(), queues: Vec::new() }
    }

    /// Mean CQI over attached UEs; 0 when none are attached.
    pub fn mean_cqi(&self) -> f64 {
        if self.ue_cqi.is_empty() {
            0.0
        } else {
            self.ue_cqi.iter().map(|&(_, c)| f64::from(c)).sum::<f64>() / self.ue_cqi.len() as f64
        }
    }
}

/// A filled RBG map plus the learning signal it produced, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub map: RbgMap,
    /// Sum of per-decision rewards; zero for non-learning schedulers.
    pub reward: f64,
}

impl Allocation {
    pub fn idle(input: &SchedulerInput) -> Self {
        Self { map: RbgMap::new(input.tti, input.n_rbg), reward: 0.0 }
    }
}

/// Common contract for PF, CQA and the actor-critic schedulers.
///
/// A single instance serves every base station of a run; `input.bs` says
/// which one is being scheduled.
pub trait Scheduler {
    fn name(&self) -> &'static str;

    fn allocate(&mut self, input: &SchedulerInput, rng: &mut SimRng) -> Allocation;

    /// Called once per TTI after every station transmitted, with the bits
    /// each served UE received.
    fn end_tti(&mut self, _tti: u64, _served: &[(UeId, u64)]) {}

    /// Exploration rate in effect at `tti`, for learning schedulers.
    fn epsilon(&self, _tti: u64) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractViolation {
    #[error("map has {got} RBGs, expected {expected}")]
    WrongSize { got: usize, expected: usize },
    #[error("RBG {rbg} granted to UE {ue_id} / {flow}, which is not an input queue")]
    UnknownQueue { rbg: usize, ue_id: UeId, flow: FlowLabel },
}

/// Checks that `map` only grants listed queues and has the input's RBG count.
pub fn check_allocation(input: &SchedulerInput, map: &RbgMap) -> Result<(), ContractViolation> {
    if map.n_rbg() != input.n_rbg {
        return Err(ContractViolation::WrongSize { got: map.n_rbg(), expected: input.n_rbg });
    }
    for (rbg, grant) in map.assignments().iter().enumerate() {
        if let Some(g) = grant {
            if !input.queues.iter().any(|q| q.ue_id == g.ue_id && q.flow == g.flow) {
                return Err(ContractViolation::UnknownQueue { rbg, ue_id: g.ue_id, flow: g.flow });
            }
        }
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn contract_checker_rejects_foreign_grants() {
        let inp = input(2, vec![queue(1, FlowLabel::Voice, 9, 0, 800, 900)]);
        let mut map = RbgMap::new(0, 2);
        map.assign(0, Grant { ue_id: 1, flow: FlowLabel::Voice }).unwrap();
        assert!(check_allocation(&inp, &map).is_ok());
        map.assign(1, Grant { ue_id: 2, flow: FlowLabel::Voice }).unwrap();
        assert!(matches!(check_allocation(&inp, &map), Err(ContractViolation::UnknownQueue { rbg: 1, .. })));
        assert!(matches!(check_allocation(&inp, &RbgMap::new(0, 3)), Err(ContractViolation::WrongSize { .. })));
    }

    #[test]
    fn empty_input_gives_empty_map() {
        let inp = SchedulerInput::empty(0, 0, 7);
        let mut rng = SimRng::seed_from_u64(0);
        let mut pf = PfScheduler::new(100.0);
        let mut cqa = CqaScheduler::new(10);
        for map in [pf.allocate(&inp, &mut rng).map, cqa.allocate(&inp, &mut rng).map] {
            assert_eq!(map.n_rbg(), 7);
            assert!(map.is_empty());
        }
    }

    #[test]
    fn mean_cqi_counts_idle_ues() {
        let mut inp = input(1, vec![queue(0, FlowLabel::Voice, 12, 0, 800, 900)]);
        inp.ue_cqi.push((5, 4));
        assert_eq!(inp.mean_cqi(), 8.0);
        assert_eq!(SchedulerInput::empty(0, 0, 1).mean_cqi(), 0.0);
    }
}
