//! Geometry, path loss, SINR to CQI mapping, transport block sizing, HARQ
//! outcomes and UE mobility.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ChannelConfig;
use crate::domain::{Packet, PacketStatus, Point, UeState};
use crate::error::{Error, Result};

/// Resource elements per RB per 1 ms subframe: 12 subcarriers x 14 symbols.
pub const RE_PER_RB: f64 = 12.0 * 14.0;

pub const MAX_CQI: u8 = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exponent: f64,
    pub tx_power_dbm: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_per_rb_hz: f64,
    pub n_rb: usize,
    pub shadowing_sigma_db: f64,
    pub bler_target: f64,
    pub harq_rtt_ttis: u64,
    pub max_harq_retx: u8,
}

impl ChannelParams {
    pub fn from_config(c: &ChannelConfig, n_rb: usize) -> Self {
        Self {
            pl0_db: c.pl0_db,
            d0_m: c.d0_m,
            exponent: c.pl_exponent,
            tx_power_dbm: c.tx_power_dbm,
            noise_density_dbm_hz: c.noise_density_dbm_hz,
            noise_figure_db: c.noise_figure_db,
            bandwidth_per_rb_hz: c.bandwidth_per_rb_hz,
            n_rb,
            shadowing_sigma_db: c.shadowing_sigma_db,
            bler_target: c.bler_target,
            harq_rtt_ttis: c.harq_rtt_ttis,
            max_harq_retx: c.max_harq_retx,
        }
    }

    /// Thermal noise plus receiver noise figure over the carrier, dBm.
    pub fn noise_dbm(&self) -> f64 {
        let bw = self.bandwidth_per_rb_hz * self.n_rb.max(1) as f64;
        self.noise_density_dbm_hz + self.noise_figure_db + 10.0 * bw.log10()
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::from_config(&ChannelConfig::default(), 15)
    }
}

/// Log-distance path loss in dB, clamped to `pl0` inside the reference distance.
pub fn path_loss(distance_m: f64, params: &ChannelParams) -> f64 {
    let d = distance_m.max(params.d0_m);
    params.pl0_db + 10.0 * params.exponent * (d / params.d0_m).log10()
}

/// A log-normal shadowing draw in dB; zero when shadowing is disabled.
pub fn shadowing_db<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> f64 {
    if params.shadowing_sigma_db > 0.0 {
        Normal::new(0.0, params.shadowing_sigma_db).expect("sigma is positive").sample(rng)
    } else {
        0.0
    }
}

fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: Point,
    pub tx_power_dbm: f64,
}

/// Axis-aligned deployment area; mobile UEs bounce off its edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub min: Point,
    pub max: Point,
}

impl Area {
    pub fn contains(&self, p: Point) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(rng.random_range(self.min.x..=self.max.x), rng.random_range(self.min.y..=self.max.y))
    }
}

/// Uniform point in the disc of `radius` around `center`.
pub fn sample_in_disc<R: Rng + ?Sized>(center: Point, radius: f64, rng: &mut R) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub base_stations: Vec<BaseStation>,
    pub area: Area,
}

impl Layout {
    /// Base stations on a triangular lattice with `spacing` between
    /// neighbours; three sites form an equilateral triangle.
    pub fn triangular(n_bs: usize, spacing: f64, margin: f64, tx_power_dbm: f64) -> Self {
        let width = (n_bs as f64).sqrt().ceil().max(1.0) as usize;
        let row_height = spacing * 3f64.sqrt() / 2.0;
        let base_stations: Vec<BaseStation> = (0..n_bs)
            .map(|i| {
                let (row, col) = (i / width, i % width);
                let offset = if row % 2 == 1 { spacing / 2.0 } else { 0.0 };
                BaseStation {
                    position: Point::new(col as f64 * spacing + offset, row as f64 * row_height),
                    tx_power_dbm,
                }
            })
            .collect();
        let (mut min, mut max) = (Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN));
        for bs in &base_stations {
            min.x = min.x.min(bs.position.x);
            min.y = min.y.min(bs.position.y);
            max.x = max.x.max(bs.position.x);
            max.y = max.y.max(bs.position.y);
        }
        let area = Area {
            min: Point::new(min.x - margin, min.y - margin),
            max: Point::new(max.x + margin, max.y + margin),
        };
        Self { base_stations, area }
    }
}

/// Received power from `bs` at `pos`, without shadowing, dBm.
pub fn rx_power_dbm(pos: Point, bs: &BaseStation, params: &ChannelParams) -> f64 {
    bs.tx_power_dbm - path_loss(pos.distance(bs.position), params)
}

/// Index of the strongest base station at `pos`; ties go to the lowest index.
pub fn select_serving_bs(pos: Point, stations: &[BaseStation], params: &ChannelParams) -> usize {
    let mut best = 0;
    let mut best_power = f64::NEG_INFINITY;
    for (i, bs) in stations.iter().enumerate() {
        let p = rx_power_dbm(pos, bs, params);
        if p > best_power {
            best = i;
            best_power = p;
        }
    }
    best
}

/// Wideband SINR in dB. Every non-serving station interferes at full power.
/// `shadow_db` (one value per station) is subtracted from the received powers.
pub fn sinr_db(pos: Point, serving: usize, stations: &[BaseStation], params: &ChannelParams, shadow_db: &[f64]) -> f64 {
    let shadow = |i: usize| shadow_db.get(i).copied().unwrap_or(0.0);
    let signal = rx_power_dbm(pos, &stations[serving], params) - shadow(serving);
    let interference: f64 = stations
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != serving)
        .map(|(i, bs)| dbm_to_mw(rx_power_dbm(pos, bs, params) - shadow(i)))
        .sum();
    let noise = dbm_to_mw(params.noise_dbm());
    signal - 10.0 * (interference + noise).log10()
}

/// CQI reported by `ue` towards its serving station.
pub fn compute_cqi<R: Rng + ?Sized>(
    ue: &UeState,
    stations: &[BaseStation],
    params: &ChannelParams,
    table: &CqiTable,
    rng: &mut R,
) -> u8 {
    let shadow: Vec<f64> = if params.shadowing_sigma_db > 0.0 {
        stations.iter().map(|_| shadowing_db(params, rng)).collect()
    } else {
        Vec::new()
    };
    table.cqi_for_sinr(sinr_db(ue.position, ue.serving_bs, stations, params, &shadow))
}

/// SINR thresholds and spectral efficiencies for CQI 1..=15.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqiTable {
    thresholds_db: [f64; 15],
    efficiency: [f64; 15],
}

impl Default for CqiTable {
    /// The usual 4-bit LTE CQI table (QPSK to 64QAM) with 10% BLER
    /// switching points.
    fn default() -> Self {
        Self {
            thresholds_db: [
                -6.7, -4.7, -2.3, 0.2, 2.4, 4.3, 5.9, 8.1, 10.3, 11.7, 14.1, 16.3, 18.7, 21.0, 22.7,
            ],
            efficiency: [
                0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023,
                4.5234, 5.1152, 5.5547,
            ],
        }
    }
}

impl CqiTable {
    pub fn new(thresholds_db: [f64; 15], efficiency: [f64; 15]) -> Result<Self> {
        let increasing = |xs: &[f64]| xs.windows(2).all(|w| w[0] < w[1]) && xs.iter().all(|x| x.is_finite());
        if !increasing(&thresholds_db) {
            return Err(Error::CqiTable("SINR thresholds must be finite and strictly increasing".into()));
        }
        if !increasing(&efficiency) || efficiency[0] <= 0.0 {
            return Err(Error::CqiTable("efficiencies must be positive and strictly increasing".into()));
        }
        Ok(Self { thresholds_db, efficiency })
    }

    /// Parses `cqi threshold_db efficiency` rows, one per CQI 1..=15.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut thresholds = [f64::NAN; 15];
        let mut efficiency = [f64::NAN; 15];
        let mut seen = [false; 15];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::CqiTable(format!("line {}: {what}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad("expected `cqi threshold_db efficiency`"));
            }
            let cqi: usize = fields[0].parse().map_err(|_| bad("bad CQI index"))?;
            if !(1..=15).contains(&cqi) {
                return Err(bad("CQI index must be in 1..=15"));
            }
            if seen[cqi - 1] {
                return Err(bad("duplicate CQI index"));
            }
            seen[cqi - 1] = true;
            thresholds[cqi - 1] = fields[1].parse().map_err(|_| bad("bad threshold"))?;
            efficiency[cqi - 1] = fields[2].parse().map_err(|_| bad("bad efficiency"))?;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::CqiTable(format!("missing row for CQI {}", missing + 1)));
        }
        Self::new(thresholds, efficiency)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# cqi  sinr_threshold_db  efficiency_bits_per_re\n");
        for i in 0..15 {
            out.push_str(&format!("{} {} {}\n", i + 1, self.thresholds_db[i], self.efficiency[i]));
        }
        out
    }

    /// Lowest SINR at which `cqi` is reported. `cqi` must be in 1..=15.
    pub fn threshold_db(&self, cqi: u8) -> f64 {
        self.thresholds_db[usize::from(cqi) - 1]
    }

    /// Bits per resource element; zero for CQI 0.
    pub fn efficiency(&self, cqi: u8) -> f64 {
        match cqi {
            0 => 0.0,
            c => self.efficiency[usize::from(c.min(MAX_CQI)) - 1],
        }
    }

    /// Highest CQI whose threshold does not exceed `sinr_db`, or 0.
    pub fn cqi_for_sinr(&self, sinr_db: f64) -> u8 {
        self.thresholds_db.partition_point(|&t| t <= sinr_db) as u8
    }
}

/// Bits carried by `n_rbg` groups of `rbg_size` RBs at `cqi` in one TTI.
pub fn tb_bits(cqi: u8, n_rbg: usize, rbg_size: usize, table: &CqiTable) -> u32 {
    (table.efficiency(cqi) * RE_PER_RB * rbg_size as f64 * n_rbg as f64).floor() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Delivered,
    HarqRetx,
}

/// Result of one transmission attempt. Link adaptation keeps the first
/// attempt at `bler_target` regardless of `cqi`.
pub fn transmission_outcome<R: Rng + ?Sized>(_cqi: u8, rng: &mut R, params: &ChannelParams) -> TxOutcome {
    if params.bler_target > 0.0 && rng.random::<f64>() < params.bler_target {
        TxOutcome::HarqRetx
    } else {
        TxOutcome::Delivered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketFate {
    Delivered,
    /// Queued for retransmission from the given TTI on.
    Retransmit { ready_tti: u64 },
    Dropped,
}

/// Applies the outcome of an attempt that finished at `tti` to `p`.
pub fn resolve_attempt(p: &mut Packet, outcome: TxOutcome, tti: u64, params: &ChannelParams) -> PacketFate {
    p.attempt_start = None;
    match outcome {
        TxOutcome::Delivered => {
            p.status = PacketStatus::Delivered;
            PacketFate::Delivered
        }
        TxOutcome::HarqRetx if p.retx_count < params.max_harq_retx => {
            p.retx_count += 1;
            p.t_harq += params.harq_rtt_ttis;
            p.remaining_bits = p.size_bits;
            p.status = PacketStatus::HarqPending;
            // `rtt` whole TTIs pass after the failed attempt's last TTI.
            let ready_tti = tti + params.harq_rtt_ttis + 1;
            p.retx_ready = Some(ready_tti);
            PacketFate::Retransmit { ready_tti }
        }
        TxOutcome::HarqRetx => {
            p.status = PacketStatus::Dropped;
            PacketFate::Dropped
        }
    }
}

/// Straight-line motion over `dt_ms`, reflecting off the area edges.
pub fn advance_mobility(ue: &mut UeState, dt_ms: u64, area: &Area) {
    let dt = dt_ms as f64 / 1000.0;
    let reflect = |pos: &mut f64, vel: &mut f64, lo: f64, hi: f64| {
        *pos += *vel * dt;
        if hi <= lo {
            *pos = lo;
            return;
        }
        // A few bounces at most for sane speeds.
        while *pos < lo || *pos > hi {
            if *pos < lo {
                *pos = 2.0 * lo - *pos;
            } else {
                *pos = 2.0 * hi - *pos;
            }
            *vel = -*vel;
        }
    };
    reflect(&mut ue.position.x, &mut ue.velocity.x, area.min.x, area.max.x);
    reflect(&mut ue.position.y, &mut ue.velocity.y, area.min.y, area.max.y);
}
