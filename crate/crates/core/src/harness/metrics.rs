//! Tracking-performance summaries over one or many runs.

use std::time::Duration;

use thiserror::Error;

use crate::harness::trace::RunTrace;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no traces to summarize")]
    Empty,
    #[error("trace {index} has {got} rows, expected {expected}")]
    Length {
        index: usize,
        expected: usize,
        got: usize,
    },
}

/// Longest run of consecutive iterations with `|y − y_r|` above the
/// threshold, counted from a disturbance change up to the next one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpikeStat {
    pub change_k: usize,
    pub longest: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Mean over runs of each run's mean absolute tracking error.
    pub j_m: f64,
    /// Mean over runs of `‖y − y_r‖₂ / N`.
    pub norm_index: f64,
    pub per_run_mean_abs: Vec<f64>,
    pub per_run_rms: Vec<f64>,
    pub spikes: Vec<Vec<SpikeStat>>,
    /// Median wall-clock time per run, when timings were supplied.
    pub median_time: Option<Duration>,
}

impl Metrics {
    pub fn runs(&self) -> usize {
        self.per_run_mean_abs.len()
    }

    /// Worst spike across all runs and change points.
    pub fn max_spike(&self) -> usize {
        self.spikes
            .iter()
            .flatten()
            .map(|s| s.longest)
            .max()
            .unwrap_or(0)
    }
}

/// Iterations at which the true disturbance differs from the previous row.
pub fn change_points(trace: &RunTrace) -> Vec<usize> {
    trace
        .rows
        .windows(2)
        .filter(|w| {
            (w[0].alpha_true, w[0].beta_true, w[0].gamma_true)
                != (w[1].alpha_true, w[1].beta_true, w[1].gamma_true)
        })
        .map(|w| w[1].k)
        .collect()
}

pub fn spike_stats(trace: &RunTrace, threshold: f64) -> Vec<SpikeStat> {
    let changes = change_points(trace);
    let last = trace.rows.last().map_or(0, |r| r.k + 1);
    changes
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let end = changes.get(i + 1).copied().unwrap_or(last);
            let mut run = 0;
            let mut longest = 0;
            for row in trace.rows.iter().filter(|r| r.k >= start && r.k < end) {
                run = if row.err.abs() > threshold {
                    run + 1
                } else {
                    0
                };
                longest = longest.max(run);
            }
            SpikeStat {
                change_k: start,
                longest,
            }
        })
        .collect()
}

pub fn compute_metrics(traces: &[RunTrace], spike_threshold: f64) -> Result<Metrics, MetricsError> {
    let first = traces.first().ok_or(MetricsError::Empty)?;
    let n = first.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let mut per_run_mean_abs = Vec::with_capacity(traces.len());
    let mut per_run_rms = Vec::with_capacity(traces.len());
    let mut norms = Vec::with_capacity(traces.len());
    for (index, t) in traces.iter().enumerate() {
        if t.len() != n {
            return Err(MetricsError::Length {
                index,
                expected: n,
                got: t.len(),
            });
        }
        let abs: f64 = t.errors().map(f64::abs).sum();
        let sq: f64 = t.errors().map(|e| e * e).sum();
        per_run_mean_abs.push(abs / n as f64);
        per_run_rms.push((sq / n as f64).sqrt());
        norms.push(sq.sqrt() / n as f64);
    }
    let runs = traces.len() as f64;
    Ok(Metrics {
        j_m: per_run_mean_abs.iter().sum::<f64>() / runs,
        norm_index: norms.iter().sum::<f64>() / runs,
        per_run_mean_abs,
        per_run_rms,
        spikes: traces
            .iter()
            .map(|t| spike_stats(t, spike_threshold))
            .collect(),
        median_time: None,
    })
}

pub fn median_duration(times: &[Duration]) -> Option<Duration> {
    if times.is_empty() {
        return None;
    }
    let mut v = times.to_vec();
    v.sort_unstable();
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2
    })
}
