//! Scenario configuration, loaded from TOML.
//!
//! Every field has a default; a file only needs the keys it overrides. See
//! `docs/config.md` for the full schema.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{FlowLabel, RbgMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "pf")]
    Pf,
    #[serde(rename = "cqa")]
    Cqa,
    #[serde(rename = "da2c")]
    DA2c,
    #[serde(rename = "cdpa-a2c")]
    CdpaA2c,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] =
        [SchedulerKind::Pf, SchedulerKind::Cqa, SchedulerKind::DA2c, SchedulerKind::CdpaA2c];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Pf => "pf",
            SchedulerKind::Cqa => "cqa",
            SchedulerKind::DA2c => "da2c",
            SchedulerKind::CdpaA2c => "cdpa-a2c",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, SchedulerKind::DA2c | SchedulerKind::CdpaA2c)
    }

    /// Default (tau, lambda) reward weights. Baselines carry the CDPA values
    /// only so that a normalized config is always complete.
    pub fn default_reward_weights(self) -> (f64, f64) {
        match self {
            SchedulerKind::DA2c => (0.0, 5.0),
            _ => (5.0, 5.0),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pf" => Ok(SchedulerKind::Pf),
            "cqa" => Ok(SchedulerKind::Cqa),
            "da2c" | "d-a2c" => Ok(SchedulerKind::DA2c),
            "cdpa-a2c" | "cdpa" | "cdpaa2c" => Ok(SchedulerKind::CdpaA2c),
            other => Err(format!("unknown scheduler `{other}` (expected pf, cqa, da2c, cdpa-a2c)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_bs: usize,
    pub n_ue: usize,
    pub mobile_fraction: f64,
    pub n_rb: usize,
    pub rbg_size: usize,
    pub tti_ms: u64,
    /// Per-UE downlink cap, bits/s.
    pub max_load_per_ue: f64,
    /// Offered per-UE load, bits/s. Split evenly across the UE's flows.
    pub load_per_ue: f64,
    pub sim_ttis: u64,
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub channel: ChannelConfig,
    pub traffic: TrafficConfig,
    pub learning: LearningConfig,
    pub baseline: BaselineConfig,
    /// Sliding window for the running-mean reward curve, TTIs.
    pub reward_window: usize,
    /// Packets completed before this TTI are left out of the run summary.
    pub kpi_start_tti: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_bs: 3,
            n_ue: 30,
            mobile_fraction: 0.0,
            n_rb: 25,
            rbg_size: 2,
            tti_ms: 1,
            max_load_per_ue: 256_000.0,
            load_per_ue: 256_000.0,
            sim_ttis: 5000,
            seed: 1,
            scheduler: SchedulerKind::Pf,
            channel: ChannelConfig::default(),
            traffic: TrafficConfig::default(),
            learning: LearningConfig::default(),
            baseline: BaselineConfig::default(),
            reward_window: 100,
            kpi_start_tti: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Distance between neighbouring base stations (triangular layout), m.
    pub bs_spacing_m: f64,
    /// UEs are dropped uniformly in a disc of this radius around a home
    /// station, taken round-robin. Mobile UEs roam the bounding box of the discs.
    pub cell_radius_m: f64,
    pub pl0_db: f64,
    pub d0_m: f64,
    pub pl_exponent: f64,
    pub tx_power_dbm: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_per_rb_hz: f64,
    /// Per-TTI log-normal shadowing; 0 disables it.
    pub shadowing_sigma_db: f64,
    pub bler_target: f64,
    pub harq_rtt_ttis: u64,
    pub max_harq_retx: u8,
    pub vehicle_speed_mps: f64,
    pub handover_interval_ttis: u64,
    /// Optional replacement for the built-in CQI table.
    pub cqi_table: Option<PathBuf>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            bs_spacing_m: 500.0,
            // Hexagon circumradius for the default spacing.
            cell_radius_m: 500.0 / 3f64.sqrt(),
            // 128.1 dB at 1 km with exponent 3.5, re-anchored at 35 m so the
            // near-field clamp does not flatten the whole cell.
            pl0_db: 128.1 - 35.0 * (1000.0f64 / 35.0).log10(),
            d0_m: 35.0,
            pl_exponent: 3.5,
            tx_power_dbm: 46.0,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            bandwidth_per_rb_hz: 180_000.0,
            shadowing_sigma_db: 0.0,
            bler_target: 0.1,
            harq_rtt_ttis: 8,
            max_harq_retx: 3,
            vehicle_speed_mps: 14.0,
            handover_interval_ttis: 100,
            cqi_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub voice_bits: u32,
    pub ims_bits: u32,
    pub video_bits: u32,
    pub v2x_bits: u32,
    /// Cap on new packets per TTI per base station; `None` disables it.
    pub arrival_cap_per_bs: Option<u32>,
    /// Untransmitted packets older than `drop_factor * budget` are dropped.
    pub drop_factor: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            voice_bits: 800,
            ims_bits: 800,
            video_bits: 8000,
            v2x_bits: 2400,
            arrival_cap_per_bs: Some(50),
            drop_factor: 2.0,
        }
    }
}

impl TrafficConfig {
    pub fn packet_bits(&self, flow: FlowLabel) -> u32 {
        match flow {
            FlowLabel::Voice => self.voice_bits,
            FlowLabel::Ims => self.ims_bits,
            FlowLabel::Video => self.video_bits,
            FlowLabel::V2x => self.v2x_bits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    /// Defaults to the scheduler preset when absent.
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Per-update gradient norm caps; `None` disables clipping.
    pub actor_max_grad_norm: Option<f64>,
    pub critic_max_grad_norm: Option<f64>,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub explore_ttis: u64,
    /// Candidate queues per decision (M).
    pub candidates: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub urllc_threshold_ms: u64,
    /// When false the networks are frozen and exploration is disabled.
    pub train: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            tau: None,
            lambda: None,
            gamma: 0.9,
            lr_actor: 0.01,
            lr_critic: 0.05,
            actor_max_grad_norm: Some(20.0),
            critic_max_grad_norm: Some(0.5),
            epsilon_start: 1.0,
            epsilon_min: 0.0,
            explore_ttis: 3700,
            candidates: 50,
            hidden: vec![256, 256, 256],
            activation: Activation::Relu,
            urllc_threshold_ms: 20,
            train: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub pf_window_ttis: f64,
    pub cqa_grouping_ms: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { pf_window_ttis: 100.0, cqa_grouping_ms: 10 }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|source| Error::ConfigParse { path: PathBuf::from("<inline>"), source })
    }

    /// Reads and validates a TOML scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: ScenarioConfig =
            toml::from_str(&text).map_err(|source| Error::ConfigParse { path: path.to_path_buf(), source })?;
        raw.validate()
    }

    pub fn n_rbg(&self) -> usize {
        RbgMap::rbg_count(self.n_rb, self.rbg_size)
    }

    /// (tau, lambda) after preset defaults are applied.
    pub fn reward_weights(&self) -> (f64, f64) {
        let (tau, lambda) = self.scheduler.default_reward_weights();
        (self.learning.tau.unwrap_or(tau), self.learning.lambda.unwrap_or(lambda))
    }

    /// Number of mobile UEs: `round(n_ue * mobile_fraction)`.
    pub fn n_mobile(&self) -> usize {
        (self.n_ue as f64 * self.mobile_fraction).round() as usize
    }

    /// Checks ranges and fills scheduler-dependent defaults.
    pub fn validate(mut self) -> Result<Self> {
        if self.n_bs == 0 {
            return Err(Error::invalid("n_bs", "at least one base station is required"));
        }
        if self.rbg_size == 0 {
            return Err(Error::invalid("rbg_size", "must be positive"));
        }
        if self.n_rbg() == 0 {
            return Err(Error::invalid(
                "n_rb",
                format!("{} RBs do not form a single RBG of size {}", self.n_rb, self.rbg_size),
            ));
        }
        if !(0.0..=1.0).contains(&self.mobile_fraction) {
            return Err(Error::invalid("mobile_fraction", format!("{} is outside [0, 1]", self.mobile_fraction)));
        }
        if self.tti_ms != 1 {
            return Err(Error::invalid("tti_ms", "only 1 ms TTIs (numerology 0) are supported"));
        }
        if !(self.max_load_per_ue > 0.0) {
            return Err(Error::invalid("max_load_per_ue", "must be positive"));
        }
        if !(self.load_per_ue >= 0.0) || self.load_per_ue > self.max_load_per_ue {
            return Err(Error::invalid(
                "load_per_ue",
                format!("{} must lie in [0, max_load_per_ue = {}]", self.load_per_ue, self.max_load_per_ue),
            ));
        }
        if self.sim_ttis > 0 && self.kpi_start_tti >= self.sim_ttis {
            return Err(Error::invalid("kpi_start_tti", "must fall before sim_ttis"));
        }
        if self.reward_window == 0 {
            return Err(Error::invalid("reward_window", "must be at least 1"));
        }

        let l = &self.learning;
        if !(l.lr_actor > 0.0) {
            return Err(Error::invalid("learning.lr_actor", "must be positive"));
        }
        if !(l.lr_critic > 0.0) {
            return Err(Error::invalid("learning.lr_critic", "must be positive"));
        }
        if l.actor_max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return Err(Error::invalid("learning.actor_max_grad_norm", "must be positive"));
        }
        if l.critic_max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return Err(Error::invalid("learning.critic_max_grad_norm", "must be positive"));
        }
        if !(0.0..=1.0).contains(&l.gamma) {
            return Err(Error::invalid("learning.gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&l.epsilon_start) || !(0.0..=1.0).contains(&l.epsilon_min) {
            return Err(Error::invalid("learning.epsilon", "epsilon values must lie in [0, 1]"));
        }
        if l.epsilon_min > l.epsilon_start {
            return Err(Error::invalid("learning.epsilon_min", "must not exceed epsilon_start"));
        }
        if l.candidates == 0 {
            return Err(Error::invalid("learning.candidates", "must be at least 1"));
        }
        if l.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("learning.hidden", "layer widths must be positive"));
        }

        let c = &self.channel;
        if !(c.pl_exponent > 0.0) {
            return Err(Error::invalid("channel.pl_exponent", "must be positive"));
        }
        if !(c.d0_m > 0.0) {
            return Err(Error::invalid("channel.d0_m", "must be positive"));
        }
        if !(0.0..1.0).contains(&c.bler_target) {
            return Err(Error::invalid("channel.bler_target", "must lie in [0, 1)"));
        }
        if c.shadowing_sigma_db < 0.0 {
            return Err(Error::invalid("channel.shadowing_sigma_db", "must be non-negative"));
        }
        if c.handover_interval_ttis == 0 {
            return Err(Error::invalid("channel.handover_interval_ttis", "must be positive"));
        }
        if FlowLabel::ALL.iter().any(|&f| self.traffic.packet_bits(f) == 0) {
            return Err(Error::invalid("traffic", "packet sizes must be positive"));
        }
        if !(self.traffic.drop_factor >= 1.0) {
            return Err(Error::invalid("traffic.drop_factor", "must be at least 1"));
        }

        let (tau, lambda) = self.reward_weights();
        self.learning.tau = Some(tau);
        self.learning.lambda = Some(lambda);
        Ok(self)
    }
}
