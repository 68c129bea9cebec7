//! The TTI loop.
//!
//! Each [`Simulation::step`] runs, in order: mobility and CQI, Poisson
//! arrivals, HARQ re-queueing, age drops, per-station scheduling,
//! transmission with HARQ outcomes, and KPI recording.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};

use crate::a2c::{A2cScheduler, A2cSettings, Checkpoint};
use crate::channel::{
    advance_mobility, compute_cqi, sample_in_disc, resolve_attempt, select_serving_bs, tb_bits, transmission_outcome, ChannelParams,
    CqiTable, Layout, PacketFate,
};
use crate::config::{SchedulerKind, ScenarioConfig};
use crate::domain::{FlowLabel, FlowQueue, Grant, Packet, PacketStatus, Point, RbgMap, UeId, UeState};
use crate::error::{Error, Result};
use crate::metrics::{self, ClassCounters, ClassSummary, KpiRecord, PacketTally, RunSummary};
use crate::sched::{check_allocation, Allocation, CqaScheduler, PfScheduler, QueueView, Scheduler, SchedulerInput};
use crate::traffic::{assign_flows, sample_arrivals};
use crate::SimRng;

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Placement = 0,
    Traffic = 1,
    Channel = 2,
    Harq = 3,
    Scheduler = 4,
    NetInit = 5,
}

fn stream(seed: u64, s: Stream) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// Seed for network initialization in a run with `seed`.
pub fn net_init_seed(seed: u64) -> u64 {
    stream(seed, Stream::NetInit).next_u64()
}

/// Any of the four schedulers behind one type.
#[derive(Debug, Clone)]
pub enum SchedulerImpl {
    Pf(PfScheduler),
    Cqa(CqaScheduler),
    A2c(Box<A2cScheduler>),
}

impl SchedulerImpl {
    /// Fresh scheduler for `cfg.scheduler`; learning schedulers get newly
    /// initialized networks.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        match cfg.scheduler {
            SchedulerKind::Pf => SchedulerImpl::Pf(PfScheduler::new(cfg.baseline.pf_window_ttis)),
            SchedulerKind::Cqa => SchedulerImpl::Cqa(CqaScheduler::new(cfg.baseline.cqa_grouping_ms)),
            SchedulerKind::DA2c | SchedulerKind::CdpaA2c => SchedulerImpl::A2c(Box::new(A2cScheduler::new(
                A2cSettings::from_config(cfg),
                cfg.n_bs,
                net_init_seed(cfg.seed),
            ))),
        }
    }

    /// Learning scheduler with networks from `ck`, which must match the
    /// configured station count and observation size.
    pub fn from_checkpoint(cfg: &ScenarioConfig, ck: Checkpoint) -> Result<Self> {
        if !cfg.scheduler.is_learning() {
            return Err(Error::Checkpoint(format!("scheduler `{}` does not use a checkpoint", cfg.scheduler)));
        }
        let settings = A2cSettings::from_config(cfg);
        let (dim, actions) = (settings.layout.len(), settings.layout.n_actions());
        if ck.actors.len() != cfg.n_bs {
            return Err(Error::Checkpoint(format!("{} actors for {} base stations", ck.actors.len(), cfg.n_bs)));
        }
        if ck.critic.net.input_dim() != dim || ck.actors[0].net.output_dim() != actions {
            return Err(Error::Checkpoint(format!(
                "networks take {} inputs and {} actions, config needs {dim} and {actions}",
                ck.critic.net.input_dim(),
                ck.actors[0].net.output_dim()
            )));
        }
        Ok(SchedulerImpl::A2c(Box::new(A2cScheduler::with_networks(settings, ck.actors, ck.critic))))
    }

    pub fn as_a2c(&self) -> Option<&A2cScheduler> {
        match self {
            SchedulerImpl::A2c(a) => Some(a),
            _ => None,
        }
    }

    pub fn checkpoint(&self) -> Option<Checkpoint> {
        self.as_a2c().map(|a| Checkpoint { actors: a.actors().to_vec(), critic: a.critic().clone() })
    }
}

impl Scheduler for SchedulerImpl {
    fn name(&self) -> &'static str {
        match self {
            SchedulerImpl::Pf(s) => s.name(),
            SchedulerImpl::Cqa(s) => s.name(),
            SchedulerImpl::A2c(s) => s.name(),
        }
    }

    fn allocate(&mut self, input: &SchedulerInput, rng: &mut SimRng) -> Allocation {
        match self {
            SchedulerImpl::Pf(s) => s.allocate(input, rng),
            SchedulerImpl::Cqa(s) => s.allocate(input, rng),
            SchedulerImpl::A2c(s) => s.allocate(input, rng),
        }
    }

    fn end_tti(&mut self, tti: u64, served: &[(UeId, u64)]) {
        match self {
            SchedulerImpl::Pf(s) => s.end_tti(tti, served),
            SchedulerImpl::Cqa(s) => s.end_tti(tti, served),
            SchedulerImpl::A2c(s) => s.end_tti(tti, served),
        }
    }

    fn epsilon(&self, tti: u64) -> Option<f64> {
        match self {
            SchedulerImpl::Pf(s) => s.epsilon(tti),
            SchedulerImpl::Cqa(s) => s.epsilon(tti),
            SchedulerImpl::A2c(s) => s.epsilon(tti),
        }
    }
}

#[derive(Debug)]
pub struct Simulation<S: Scheduler = SchedulerImpl> {
    cfg: ScenarioConfig,
    params: ChannelParams,
    table: CqiTable,
    layout: Layout,
    ues: Vec<UeState>,
    scheduler: S,
    tti: u64,
    next_packet_id: u64,
    harq_pending: Vec<Packet>,
    rng_traffic: SimRng,
    rng_channel: SimRng,
    rng_harq: SimRng,
    rng_sched: SimRng,
    counters: [ClassCounters; 4],
    tally: PacketTally,
    records: Vec<KpiRecord>,
    last_inputs: Vec<SchedulerInput>,
    last_maps: Vec<RbgMap>,
    completed: Vec<Packet>,
}

impl Simulation<SchedulerImpl> {
    pub fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        let sched = SchedulerImpl::from_config(&cfg);
        Self::new(cfg, sched)
    }
}

impl<S: Scheduler> Simulation<S> {
    /// Places stations and UEs and assigns flows. `cfg` must be validated.
    pub fn new(cfg: ScenarioConfig, scheduler: S) -> Result<Self> {
        let table = match &cfg.channel.cqi_table {
            Some(path) => CqiTable::load(path)?,
            None => CqiTable::default(),
        };
        let params = ChannelParams::from_config(&cfg.channel, cfg.n_rb);
        let ch = &cfg.channel;
        let layout = Layout::triangular(cfg.n_bs, ch.bs_spacing_m, ch.cell_radius_m, ch.tx_power_dbm);

        let mut rng = stream(cfg.seed, Stream::Placement);
        let n_mobile = cfg.n_mobile();
        let mut is_mobile = vec![false; cfg.n_ue];
        for i in sample(&mut rng, cfg.n_ue, n_mobile) {
            is_mobile[i] = true;
        }
        let (mobile, fixed): (Vec<UeId>, Vec<UeId>) = (0..cfg.n_ue as UeId).partition(|&i| is_mobile[i as usize]);
        let flows = assign_flows(&fixed, &mobile, cfg.load_per_ue, &cfg.traffic, &mut rng);

        let ues = flows
            .into_iter()
            .map(|(ue_id, specs)| {
                let home = layout.base_stations[ue_id as usize % layout.base_stations.len()].position;
                let position = sample_in_disc(home, ch.cell_radius_m, &mut rng);
                let velocity = if is_mobile[ue_id as usize] {
                    let angle = rng.random_range(0.0..std::f64::consts::TAU);
                    Point::new(ch.vehicle_speed_mps * angle.cos(), ch.vehicle_speed_mps * angle.sin())
                } else {
                    Point::default()
                };
                UeState {
                    ue_id,
                    position,
                    velocity,
                    serving_bs: select_serving_bs(position, &layout.base_stations, &params),
                    cqi: 0,
                    queues: specs.into_iter().map(FlowQueue::new).collect(),
                }
            })
            .collect();

        Ok(Self {
            rng_traffic: stream(cfg.seed, Stream::Traffic),
            rng_channel: stream(cfg.seed, Stream::Channel),
            rng_harq: stream(cfg.seed, Stream::Harq),
            rng_sched: stream(cfg.seed, Stream::Scheduler),
            cfg,
            params,
            table,
            layout,
            ues,
            scheduler,
            tti: 0,
            next_packet_id: 0,
            harq_pending: Vec::new(),
            counters: [ClassCounters::default(); 4],
            tally: PacketTally::default(),
            records: Vec::new(),
            last_inputs: Vec::new(),
            last_maps: Vec::new(),
            completed: Vec::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn tti(&self) -> u64 {
        self.tti
    }

    pub fn ues(&self) -> &[UeState] {
        &self.ues
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn scheduler(&self) -> &S {
        &self.scheduler
    }

    pub fn into_scheduler(self) -> S {
        self.scheduler
    }

    pub fn records(&self) -> &[KpiRecord] {
        &self.records
    }

    pub fn tally(&self) -> PacketTally {
        self.tally
    }

    /// Packets waiting out a HARQ round trip.
    pub fn harq_pending(&self) -> &[Packet] {
        &self.harq_pending
    }

    /// Scheduler inputs of the last step, one per station.
    pub fn last_inputs(&self) -> &[SchedulerInput] {
        &self.last_inputs
    }

    /// RBG maps of the last step, one per station.
    pub fn last_maps(&self) -> &[RbgMap] {
        &self.last_maps
    }

    /// Packets delivered or dropped during the last step.
    pub fn completed(&self) -> &[Packet] {
        &self.completed
    }

    /// Queues one packet arriving at the current TTI, ahead of the next
    /// `step`. Returns its id, or `None` if the UE has no such flow.
    pub fn inject(&mut self, ue_id: UeId, flow: FlowLabel, size_bits: u32) -> Option<u64> {
        let tti = self.tti;
        let id = self.next_packet_id;
        let q = self.ues.get_mut(ue_id as usize)?.queue_mut(flow)?;
        q.packets.push_back(Packet::new(id, flow, ue_id, size_bits, tti));
        self.next_packet_id += 1;
        self.tally.created += 1;
        Some(id)
    }

    fn complete(&mut self, p: Packet) {
        debug_assert!(matches!(p.status, PacketStatus::Delivered | PacketStatus::Dropped));
        self.counters[p.flow.index()].record(&p);
        match p.status {
            PacketStatus::Delivered => self.tally.delivered += 1,
            _ => self.tally.dropped += 1,
        }
        self.completed.push(p);
    }

    pub fn step(&mut self) {
        let tti = self.tti;
        self.completed.clear();

        // 1. Mobility, handover and CQI.
        let handover = tti > 0 && self.cfg.channel.handover_interval_ttis > 0 && tti % self.cfg.channel.handover_interval_ttis == 0;
        for ue in &mut self.ues {
            if ue.is_mobile() {
                advance_mobility(ue, self.cfg.tti_ms, &self.layout.area);
                if handover {
                    ue.serving_bs = select_serving_bs(ue.position, &self.layout.base_stations, &self.params);
                }
            }
            ue.cqi = compute_cqi(ue, &self.layout.base_stations, &self.params, &self.table, &mut self.rng_channel);
        }

        // 2. Arrivals, capped per station.
        let cap = self.cfg.traffic.arrival_cap_per_bs.map_or(u64::MAX, u64::from);
        let mut admitted = vec![0u64; self.cfg.n_bs];
        for ue in &mut self.ues {
            for q in &mut ue.queues {
                let n = u64::from(sample_arrivals(&q.spec, &mut self.rng_traffic));
                let room = cap - admitted[ue.serving_bs];
                let take = n.min(room);
                admitted[ue.serving_bs] += take;
                if take < n {
                    log::debug!("tti {tti}: arrival cap hit at bs {}, {} packets discarded", ue.serving_bs, n - take);
                    self.tally.capped += n - take;
                }
                for _ in 0..take {
                    q.packets.push_back(Packet::new(self.next_packet_id, q.spec.flow, ue.ue_id, q.spec.packet_size, tti));
                    self.next_packet_id += 1;
                }
                self.tally.created += take;
            }
        }

        // 3. Retransmissions whose round trip is over go back to the queue
        // front, behind a head packet that is mid-attempt.
        let mut due: Vec<Packet> = Vec::new();
        self.harq_pending.retain(|p| {
            if p.retx_ready.is_some_and(|r| r <= tti) {
                due.push(p.clone());
                false
            } else {
                true
            }
        });
        due.sort_by_key(|p| p.id);
        for mut p in due.into_iter().rev() {
            p.status = PacketStatus::Queued;
            let q = self.ues[p.ue_id as usize].queue_mut(p.flow).expect("flow exists");
            let base = usize::from(q.packets.front().is_some_and(|h| h.attempt_start.is_some()));
            q.packets.insert(base, p);
        }

        // 4. Drop packets that waited past `drop_factor` budgets.
        let factor = self.cfg.traffic.drop_factor;
        let mut dropped = Vec::new();
        for ue in &mut self.ues {
            for q in &mut ue.queues {
                let limit = factor * q.spec.flow.class().delay_budget_ms as f64;
                q.packets.retain(|p| {
                    let stale = p.attempt_start.is_none() && p.age_at(tti) as f64 > limit;
                    if stale {
                        let mut p = p.clone();
                        if p.retx_count == 0 {
                            p.t_hol = p.age_at(tti);
                        }
                        p.status = PacketStatus::Dropped;
                        dropped.push(p);
                    }
                    !stale
                });
            }
        }
        dropped.sort_by_key(|p| p.id);
        for p in dropped {
            self.complete(p);
        }

        // 5. Scheduling.
        let n_rbg = self.cfg.n_rbg();
        let mut inputs: Vec<SchedulerInput> = (0..self.cfg.n_bs).map(|b| SchedulerInput::empty(b, tti, n_rbg)).collect();
        for ue in &self.ues {
            let input = &mut inputs[ue.serving_bs];
            input.ue_cqi.push((ue.ue_id, ue.cqi));
            if ue.cqi == 0 {
                continue;
            }
            let rbg_bits = tb_bits(ue.cqi, 1, self.cfg.rbg_size, &self.table);
            for q in &ue.queues {
                if let Some(head) = q.head() {
                    input.queues.push(QueueView {
                        ue_id: ue.ue_id,
                        flow: q.spec.flow,
                        cqi: ue.cqi,
                        hol_ms: head.age_at(tti),
                        backlog_bits: q.backlog_bits(),
                        rbg_bits,
                    });
                }
            }
        }
        let mut maps = Vec::with_capacity(inputs.len());
        let mut bs_reward = Vec::with_capacity(inputs.len());
        for input in &inputs {
            let alloc = self.scheduler.allocate(input, &mut self.rng_sched);
            if let Err(e) = check_allocation(input, &alloc.map) {
                panic!("scheduler `{}` broke its contract at TTI {tti}: {e}", self.scheduler.name());
            }
            bs_reward.push(alloc.reward);
            maps.push(alloc.map);
        }

        // 6. Transmission.
        let mut served: Vec<(UeId, u64)> = Vec::new();
        let mut granted = 0u64;
        for map in &maps {
            for (Grant { ue_id, flow }, count) in map.grants() {
                granted += count as u64;
                let bits = self.transmit(ue_id, flow, count, tti);
                match served.iter_mut().find(|(u, _)| *u == ue_id) {
                    Some((_, b)) => *b += bits,
                    None => served.push((ue_id, bits)),
                }
            }
        }
        served.sort_unstable();
        self.scheduler.end_tti(tti, &served);

        // 7. KPIs.
        self.tally.in_flight = self.harq_pending.len() as u64;
        self.tally.queued = self.ues.iter().flat_map(|u| &u.queues).map(|q| q.packets.len() as u64).sum();
        self.records.push(KpiRecord {
            tti,
            classes: self.counters,
            reward: bs_reward.iter().sum(),
            bs_reward,
            granted_rbgs: granted,
            epsilon: self.scheduler.epsilon(tti),
        });
        self.last_inputs = inputs;
        self.last_maps = maps;
        self.tti += 1;
    }

    /// Sends up to one TTI's worth of `count` RBGs from the (UE, flow)
    /// queue, FIFO with segmentation. Returns the bits put on the air.
    fn transmit(&mut self, ue_id: UeId, flow: FlowLabel, count: usize, tti: u64) -> u64 {
        let ue = &mut self.ues[ue_id as usize];
        let cqi = ue.cqi;
        let mut budget = tb_bits(cqi, count, self.cfg.rbg_size, &self.table);
        let q = ue.queue_mut(flow).expect("granted flow exists");
        let mut sent = 0u64;
        let mut finished = Vec::new();
        while budget > 0 {
            let Some(head) = q.packets.front_mut() else { break };
            if head.attempt_start.is_none() {
                head.attempt_start = Some(tti);
                match head.retx_ready.take() {
                    Some(ready) => head.t_harq += tti - ready,
                    None => head.t_hol = tti - head.arrival_tti,
                }
            }
            let take = budget.min(head.remaining_bits);
            head.remaining_bits -= take;
            budget -= take;
            sent += u64::from(take);
            if head.remaining_bits == 0 {
                let mut p = q.packets.pop_front().expect("head exists");
                p.t_tx += tti - p.attempt_start.expect("attempt started") + 1;
                let outcome = transmission_outcome(cqi, &mut self.rng_harq, &self.params);
                match resolve_attempt(&mut p, outcome, tti, &self.params) {
                    PacketFate::Retransmit { .. } => self.harq_pending.push(p),
                    PacketFate::Delivered | PacketFate::Dropped => finished.push(p),
                }
            }
        }
        for p in finished {
            self.complete(p);
        }
        sent
    }

    /// Runs the remaining TTIs up to `cfg.sim_ttis`.
    pub fn run_to_end(&mut self) {
        while self.tti < self.cfg.sim_ttis {
            self.step();
        }
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.records.last();
        let zero = ClassCounters::default();
        let start = self.cfg.kpi_start_tti;
        let before = self.records.iter().find(|r| r.tti + 1 == start);
        let classes = FlowLabel::ALL
            .iter()
            .map(|&f| {
                let end = last.map_or(&zero, |r| r.class(f));
                ClassSummary::new(f, &end.since(before.map_or(&zero, |r| r.class(f))))
            })
            .collect();
        let rewards: Vec<f64> = self.records.iter().map(|r| r.reward).collect();
        RunSummary {
            scheduler: self.scheduler.name().to_string(),
            seed: self.cfg.seed,
            ttis: self.records.len() as u64,
            classes,
            packets: self.tally,
            mean_reward: metrics::mean(&rewards),
            final_epsilon: last.and_then(|r| r.epsilon),
            config: self.cfg.clone(),
        }
    }
}

/// The output of one complete run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<KpiRecord>,
    pub summary: RunSummary,
    pub scheduler: SchedulerImpl,
}

impl RunOutput {
    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }
}

/// Runs `cfg` with a fresh scheduler.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    run_with(cfg, SchedulerImpl::from_config(cfg))
}

pub fn run_with(cfg: &ScenarioConfig, scheduler: SchedulerImpl) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg.clone(), scheduler)?;
    sim.run_to_end();
    let summary = sim.summary();
    let records = std::mem::take(&mut sim.records);
    Ok(RunOutput { records, summary, scheduler: sim.into_scheduler() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ScenarioConfig {
        ScenarioConfig { n_ue: 6, sim_ttis: 200, seed, ..Default::default() }.validate().unwrap()
    }

    #[test]
    fn zero_ttis_is_an_empty_trace() {
        let cfg = ScenarioConfig { sim_ttis: 0, ..tiny(1) };
        let out = run(&cfg).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.summary.ttis, 0);
    }

    #[test]
    fn no_traffic_means_idle_maps() {
        let cfg = ScenarioConfig { load_per_ue: 0.0, ..tiny(2) };
        let mut sim = Simulation::from_config(cfg).unwrap();
        for _ in 0..20 {
            sim.step();
            assert!(sim.last_maps().iter().all(RbgMap::is_empty));
        }
        assert_eq!(sim.tally(), PacketTally::default());
        assert!(sim.records().iter().all(|r| r.granted_rbgs == 0 && r.reward == 0.0));
    }

    #[test]
    fn streams_are_distinct() {
        let a = stream(5, Stream::Traffic).next_u64();
        let b = stream(5, Stream::Channel).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, stream(5, Stream::Traffic).next_u64());
    }

    #[test]
    fn mobile_fraction_marks_v2x_ues() {
        let cfg = ScenarioConfig { n_ue: 40, mobile_fraction: 0.1, ..tiny(3) };
        let sim = Simulation::from_config(cfg).unwrap();
        let mobile: Vec<_> = sim.ues().iter().filter(|u| u.is_mobile()).collect();
        assert_eq!(mobile.len(), 4);
        assert!(mobile.iter().all(|u| u.queue(FlowLabel::V2x).is_some()));
        assert!(sim.ues().iter().filter(|u| !u.is_mobile()).all(|u| u.queue(FlowLabel::V2x).is_none()));
    }
}
