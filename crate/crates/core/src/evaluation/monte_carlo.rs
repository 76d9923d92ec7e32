use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metrics produced by one successful run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub prediction_rmse: f64,
    pub simulation_rmse: f64,
    pub diverged: bool,
    pub jacobian_error: f64,
}

/// Labels stamped on every record of an arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmInfo {
    pub arm: String,
    pub objective: String,
    pub tangent: bool,
    pub weight_decay: f64,
    pub dropout: f64,
}

/// One row of `results.csv`. Failed runs carry an error message and no metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: usize,
    pub seed: u64,
    pub arm: String,
    pub objective: String,
    pub tangent: bool,
    pub weight_decay: f64,
    pub dropout: f64,
    pub prediction_rmse: Option<f64>,
    pub simulation_rmse: Option<f64>,
    pub diverged: Option<bool>,
    pub jacobian_error: Option<f64>,
    pub error: Option<String>,
    /// Seconds spent on the run; kept out of `results.csv` so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time: f64,
}

impl MetricRecord {
    pub fn metrics(&self) -> Option<RunMetrics> {
        Some(RunMetrics {
            prediction_rmse: self.prediction_rmse?,
            simulation_rmse: self.simulation_rmse?,
            diverged: self.diverged?,
            jacobian_error: self.jacobian_error?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let median = median(values)?;
        let q1 = quantile(values, 0.25)?;
        let q3 = quantile(values, 0.75)?;
        Some(Self {
            median,
            q1,
            q3,
            iqr: q3 - q1,
        })
    }
}

/// Linearly interpolated sample quantile, `p ∈ [0, 1]`.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub n_runs: usize,
    pub failures: usize,
    pub diverged: usize,
    pub prediction_rmse: Option<Stats>,
    pub simulation_rmse: Option<Stats>,
    pub jacobian_error: Option<Stats>,
}

impl ArmSummary {
    pub fn from_records(arm: &str, records: &[MetricRecord]) -> Self {
        let ok: Vec<RunMetrics> = records.iter().filter_map(MetricRecord::metrics).collect();
        let column = |f: fn(&RunMetrics) -> f64| ok.iter().map(f).collect::<Vec<_>>();
        Self {
            arm: arm.to_string(),
            n_runs: records.len(),
            failures: records.len() - ok.len(),
            diverged: ok.iter().filter(|m| m.diverged).count(),
            prediction_rmse: Stats::of(&column(|m| m.prediction_rmse)),
            simulation_rmse: Stats::of(&column(|m| m.simulation_rmse)),
            jacobian_error: Stats::of(&column(|m| m.jacobian_error)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    /// Ordered by `run_id`.
    pub records: Vec<MetricRecord>,
    pub summary: ArmSummary,
}

impl MonteCarloResult {
    /// RFC-4180 CSV of the records without timing.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV of `run_id,wall_time`.
    pub fn write_timing_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run_id", "wall_time"])?;
        for r in &self.records {
            w.write_record([r.run_id.to_string(), format!("{:?}", r.wall_time)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `run(run_id, seed)` for `seed = base_seed + run_id` on up to `jobs`
/// threads. Failed runs are recorded with their error; the output order and
/// content do not depend on `jobs`.
pub fn monte_carlo<F>(
    info: &ArmInfo,
    n_runs: usize,
    base_seed: u64,
    jobs: usize,
    run: F,
) -> Result<MonteCarloResult>
where
    F: Fn(usize, u64) -> Result<RunMetrics> + Sync,
{
    if n_runs == 0 {
        return Err(Error::Parameter("n_runs must be at least 1".into()));
    }
    if jobs == 0 {
        return Err(Error::Parameter("jobs must be at least 1".into()));
    }
    let one = |run_id: usize| {
        let seed = base_seed.wrapping_add(run_id as u64);
        let start = Instant::now();
        let outcome = run(run_id, seed);
        let wall_time = start.elapsed().as_secs_f64();
        let (m, error) = match outcome {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        };
        MetricRecord {
            run_id,
            seed,
            arm: info.arm.clone(),
            objective: info.objective.clone(),
            tangent: info.tangent,
            weight_decay: info.weight_decay,
            dropout: info.dropout,
            prediction_rmse: m.map(|m| m.prediction_rmse),
            simulation_rmse: m.map(|m| m.simulation_rmse),
            diverged: m.map(|m| m.diverged),
            jacobian_error: m.map(|m| m.jacobian_error),
            error,
            wall_time,
        }
    };
    let records: Vec<MetricRecord> = if jobs == 1 {
        (0..n_runs).map(one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?
            .install(|| (0..n_runs).into_par_iter().map(one).collect())
    };
    let summary = ArmSummary::from_records(&info.arm, &records);
    Ok(MonteCarloResult { records, summary })
}
