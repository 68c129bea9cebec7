//! Scenario fan-out over one axis, a scheduler list and a seed list.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rbgsched::domain::FlowLabel;
use rbgsched::metrics::{self, RunSummary};
use rbgsched::{run, ScenarioConfig, SchedulerKind};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    NUe,
    MobileFraction,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::NUe => "n_ue",
            Axis::MobileFraction => "mobile_fraction",
        })
    }
}

impl Axis {
    /// Applies a raw value and returns its canonical label.
    fn apply(self, cfg: &mut ScenarioConfig, raw: &str) -> Result<String, String> {
        let bad = |e: &dyn fmt::Display| format!("{self} value `{raw}`: {e}");
        match self {
            Axis::NUe => {
                cfg.n_ue = raw.trim().parse().map_err(|e| bad(&e))?;
                Ok(cfg.n_ue.to_string())
            }
            Axis::MobileFraction => {
                cfg.mobile_fraction = raw.trim().parse().map_err(|e| bad(&e))?;
                Ok(cfg.mobile_fraction.to_string())
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Job {
    label: String,
    cfg: ScenarioConfig,
}

impl Job {
    fn stem(&self, axis: Axis) -> String {
        format!("{}_{axis}-{}_seed-{}", self.cfg.scheduler, self.label, self.cfg.seed)
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    axis: Axis,
    jobs: Vec<Job>,
}

pub struct SweepReport {
    pub runs: usize,
    pub failures: usize,
    pub aggregate_path: PathBuf,
    pub failures_path: PathBuf,
}

#[derive(Debug, Serialize)]
struct AggregateRow<'a> {
    axis: String,
    value: &'a str,
    scheduler: SchedulerKind,
    class: FlowLabel,
    runs: usize,
    mean_delivery_ratio: Option<f64>,
    std_delivery_ratio: Option<f64>,
    mean_hol_ms: Option<f64>,
    std_hol_ms: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FailureRow<'a> {
    axis: String,
    value: &'a str,
    scheduler: SchedulerKind,
    seed: u64,
    error: &'a str,
}

impl SweepPlan {
    /// Validates every (value, scheduler) cell up front so that bad input is
    /// reported before any run starts.
    pub fn new(base: ScenarioConfig, axis: Axis, values: &[String], schedulers: &[SchedulerKind], seeds: &[u64]) -> Result<Self, String> {
        if values.is_empty() || schedulers.is_empty() {
            return Err("sweep needs at least one value and one scheduler".into());
        }
        let mut sorted = seeds.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(format!("seed {} is listed twice", w[0]));
        }
        let mut jobs = Vec::new();
        for raw in values {
            for &sched in schedulers {
                let mut cfg = ScenarioConfig { scheduler: sched, ..base.clone() };
                let label = axis.apply(&mut cfg, raw)?;
                let cfg = cfg.validate().map_err(|e| e.to_string())?;
                for &seed in seeds {
                    jobs.push(Job { label: label.clone(), cfg: ScenarioConfig { seed, ..cfg.clone() } });
                }
            }
        }
        Ok(Self { axis, jobs })
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    /// Runs every job on the current rayon pool, writing per-run outputs
    /// under `out/runs`, then `aggregate.csv` and `failures.csv`.
    pub fn execute(&self, out: &Path) -> rbgsched::Result<SweepReport> {
        let runs_dir = out.join("runs");
        std::fs::create_dir_all(&runs_dir).map_err(|e| rbgsched::Error::Io { path: runs_dir.clone(), source: e })?;
        let results: Vec<Result<RunSummary, String>> = self
            .jobs
            .par_iter()
            .map(|job| {
                let outcome = catch_unwind(AssertUnwindSafe(|| {
                    let o = run(&job.cfg).map_err(|e| e.to_string())?;
                    metrics::export(&o.records, &o.summary, &runs_dir, &job.stem(self.axis)).map_err(|e| e.to_string())?;
                    Ok(o.summary)
                }));
                outcome.unwrap_or_else(|p| Err(panic_message(p.as_ref())))
            })
            .collect();

        let aggregate_path = out.join("aggregate.csv");
        let failures_path = out.join("failures.csv");
        let mut agg = csv::Writer::from_path(&aggregate_path)?;
        // The header is written by hand so that it is present with no failures.
        let mut fail = csv::WriterBuilder::new().has_headers(false).from_path(&failures_path)?;
        fail.write_record(["axis", "value", "scheduler", "seed", "error"])?;
        let mut failures = 0;

        // Jobs are grouped by cell, seeds innermost.
        let mut start = 0;
        while start < self.jobs.len() {
            let head = &self.jobs[start];
            let end = start
                + self.jobs[start..]
                    .iter()
                    .take_while(|j| j.label == head.label && j.cfg.scheduler == head.cfg.scheduler)
                    .count();
            let mut ok = Vec::new();
            for (job, res) in self.jobs[start..end].iter().zip(&results[start..end]) {
                match res {
                    Ok(s) => ok.push(s),
                    Err(e) => {
                        failures += 1;
                        let row = FailureRow {
                            axis: self.axis.to_string(),
                            value: &job.label,
                            scheduler: job.cfg.scheduler,
                            seed: job.cfg.seed,
                            error: e,
                        };
                        fail.serialize(row)?;
                    }
                }
            }
            for class in FlowLabel::ALL {
                let ratios: Vec<f64> = ok.iter().filter_map(|s| s.class(class).delivery_ratio).collect();
                let hols: Vec<f64> = ok.iter().filter_map(|s| s.class(class).mean_hol_ms).collect();
                agg.serialize(AggregateRow {
                    axis: self.axis.to_string(),
                    value: &head.label,
                    scheduler: head.cfg.scheduler,
                    class,
                    runs: ok.len(),
                    mean_delivery_ratio: metrics::mean(&ratios),
                    std_delivery_ratio: sample_std(&ratios),
                    mean_hol_ms: metrics::mean(&hols),
                    std_hol_ms: sample_std(&hols),
                })?;
            }
            start = end;
        }
        agg.flush().map_err(|e| rbgsched::Error::Io { path: aggregate_path.clone(), source: e })?;
        fail.flush().map_err(|e| rbgsched::Error::Io { path: failures_path.clone(), source: e })?;
        Ok(SweepReport { runs: self.jobs.len(), failures, aggregate_path, failures_path })
    }
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".into()
    }
}

/// Sample standard deviation; `None` below two values.
fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = metrics::mean(v)?;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (v.len() - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig { n_ue: 6, sim_ttis: 20, ..Default::default() }
    }

    #[test]
    fn sample_std_cases() {
        assert_eq!(sample_std(&[]), None);
        assert_eq!(sample_std(&[3.0]), None);
        assert!((sample_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap() - 2.138089935).abs() < 1e-9);
    }

    #[test]
    fn plan_is_cell_major_with_seeds_innermost() {
        let values = vec!["6".to_string(), "9".to_string()];
        let p = SweepPlan::new(base(), Axis::NUe, &values, &[SchedulerKind::Pf, SchedulerKind::Cqa], &[1, 2, 3]).unwrap();
        assert_eq!(p.len(), 12);
        let stems: Vec<String> = p.jobs.iter().take(4).map(|j| j.stem(Axis::NUe)).collect();
        assert_eq!(stems, ["pf_n_ue-6_seed-1", "pf_n_ue-6_seed-2", "pf_n_ue-6_seed-3", "cqa_n_ue-6_seed-1"]);
    }

    #[test]
    fn bad_values_are_rejected_up_front() {
        let p = SweepPlan::new(base(), Axis::MobileFraction, &["1.5".into()], &[SchedulerKind::Pf], &[1]);
        assert!(p.unwrap_err().contains("mobile_fraction"));
        let p = SweepPlan::new(base(), Axis::NUe, &["many".into()], &[SchedulerKind::Pf], &[1]);
        assert!(p.unwrap_err().contains("many"));
        let p = SweepPlan::new(base(), Axis::NUe, &["6".into()], &[SchedulerKind::Pf], &[3, 1, 3]);
        assert!(p.unwrap_err().contains("seed 3"));
    }

    #[test]
    fn mobile_fraction_labels_are_canonical() {
        let p = SweepPlan::new(base(), Axis::MobileFraction, &["0.10".into()], &[SchedulerKind::Pf], &[4]).unwrap();
        assert_eq!(p.jobs[0].stem(Axis::MobileFraction), "pf_mobile_fraction-0.1_seed-4");
    }
}
