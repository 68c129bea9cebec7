//! KPI accounting, the reward curve, and CSV / JSON export.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::domain::{is_satisfied, FlowLabel, Packet, PacketStatus};
use crate::error::{Error, Result};

/// Completed-packet counters for one traffic class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounters {
    pub delivered: u64,
    pub dropped: u64,
    /// Delivered with HOL delay strictly below the class budget.
    pub satisfied: u64,
    /// Sum of HOL delays over delivered and dropped packets, ms.
    pub hol_sum_ms: u64,
}

impl ClassCounters {
    pub fn completed(&self) -> u64 {
        self.delivered + self.dropped
    }

    pub fn record(&mut self, p: &Packet) {
        match p.status {
            PacketStatus::Delivered => self.delivered += 1,
            PacketStatus::Dropped => self.dropped += 1,
            s => panic!("packet {} is not complete ({s:?})", p.id),
        }
        if is_satisfied(p) {
            self.satisfied += 1;
        }
        self.hol_sum_ms += p.t_hol;
    }

    /// Counts accumulated after `earlier` (both cumulative).
    pub fn since(&self, earlier: &ClassCounters) -> ClassCounters {
        ClassCounters {
            delivered: self.delivered - earlier.delivered,
            dropped: self.dropped - earlier.dropped,
            satisfied: self.satisfied - earlier.satisfied,
            hol_sum_ms: self.hol_sum_ms - earlier.hol_sum_ms,
        }
    }

    pub fn merge(&mut self, other: &ClassCounters) {
        self.delivered += other.delivered;
        self.dropped += other.dropped;
        self.satisfied += other.satisfied;
        self.hol_sum_ms += other.hol_sum_ms;
    }
}

/// `satisfied / (delivered + dropped)`, or `None` before anything completed.
pub fn delivery_ratio(c: &ClassCounters) -> Option<f64> {
    match c.completed() {
        0 => None,
        n => Some(c.satisfied as f64 / n as f64),
    }
}

/// Mean HOL delay of completed packets, ms.
pub fn mean_hol(c: &ClassCounters) -> Option<f64> {
    match c.completed() {
        0 => None,
        n => Some(c.hol_sum_ms as f64 / n as f64),
    }
}

/// State of the run at the end of one TTI. Class counters are cumulative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub tti: u64,
    /// Indexed by [`FlowLabel::index`].
    pub classes: [ClassCounters; 4],
    /// Reward summed over stations this TTI (zero for PF and CQA).
    pub reward: f64,
    pub bs_reward: Vec<f64>,
    /// RBGs granted over all stations this TTI.
    pub granted_rbgs: u64,
    pub epsilon: Option<f64>,
}

impl KpiRecord {
    pub fn class(&self, flow: FlowLabel) -> &ClassCounters {
        &self.classes[flow.index()]
    }
}

/// Trailing mean over up to `window` most recent values; the first entries
/// average whatever is available.
pub fn reward_curve(rewards: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    (0..rewards.len())
        .map(|i| {
            let w = &rewards[(i + 1).saturating_sub(window)..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Arithmetic mean, or `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: FlowLabel,
    pub delivered: u64,
    pub dropped: u64,
    pub satisfied: u64,
    pub delivery_ratio: Option<f64>,
    pub mean_hol_ms: Option<f64>,
}

impl ClassSummary {
    pub fn new(class: FlowLabel, c: &ClassCounters) -> Self {
        Self {
            class,
            delivered: c.delivered,
            dropped: c.dropped,
            satisfied: c.satisfied,
            delivery_ratio: delivery_ratio(c),
            mean_hol_ms: mean_hol(c),
        }
    }
}

/// Packet bookkeeping at the end of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketTally {
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Waiting for a HARQ retransmission slot.
    pub in_flight: u64,
    pub queued: u64,
    /// Arrivals discarded by the per-station cap; never created.
    pub capped: u64,
}

impl PacketTally {
    pub fn is_conserved(&self) -> bool {
        self.created == self.delivered + self.dropped + self.in_flight + self.queued
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheduler: String,
    pub seed: u64,
    pub ttis: u64,
    pub classes: Vec<ClassSummary>,
    pub packets: PacketTally,
    pub mean_reward: Option<f64>,
    pub final_epsilon: Option<f64>,
    pub config: ScenarioConfig,
}

impl RunSummary {
    pub fn class(&self, flow: FlowLabel) -> &ClassSummary {
        self.classes.iter().find(|c| c.class == flow).expect("every class is summarized")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary is serializable");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One CSV row: cumulative counts of one class after one TTI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub tti: u64,
    pub class: FlowLabel,
    pub delivered: u64,
    pub dropped: u64,
    pub satisfied: u64,
    pub hol_sum_ms: u64,
    pub mean_hol: Option<f64>,
    pub reward: f64,
}

pub const CSV_HEADER: [&str; 8] = ["tti", "class", "delivered", "dropped", "satisfied", "hol_sum_ms", "mean_hol", "reward"];

pub fn csv_rows(records: &[KpiRecord]) -> impl Iterator<Item = CsvRow> + '_ {
    records.iter().flat_map(|r| {
        FlowLabel::ALL.into_iter().map(move |f| {
            let c = r.class(f);
            CsvRow {
                tti: r.tti,
                class: f,
                delivered: c.delivered,
                dropped: c.dropped,
                satisfied: c.satisfied,
                hol_sum_ms: c.hol_sum_ms,
                mean_hol: mean_hol(c),
                reward: r.reward,
            }
        })
    })
}

pub fn write_csv<W: Write>(records: &[KpiRecord], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for row in csv_rows(records) {
        wr.serialize(row)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let rows = rd.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn export(records: &[KpiRecord], summary: &RunSummary, dir: &Path, stem: &str) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_csv(records, std::io::BufWriter::new(file))?;
    std::fs::write(&json_path, summary.to_json()).map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}

/// Per-class summaries recomputed from exported CSV rows, counting packets
/// completed from `kpi_start_tti` on.
pub fn summaries_from_csv(rows: &[CsvRow], kpi_start_tti: u64) -> Vec<ClassSummary> {
    let counters = |tti: Option<u64>, f: FlowLabel| {
        tti.and_then(|t| rows.iter().find(|r| r.tti == t && r.class == f)).map_or(ClassCounters::default(), |r| {
            ClassCounters { delivered: r.delivered, dropped: r.dropped, satisfied: r.satisfied, hol_sum_ms: r.hol_sum_ms }
        })
    };
    let last = rows.iter().map(|r| r.tti).max();
    let before = kpi_start_tti.checked_sub(1);
    FlowLabel::ALL
        .iter()
        .map(|&f| ClassSummary::new(f, &counters(last, f).since(&counters(before, f))))
        .collect()
}
