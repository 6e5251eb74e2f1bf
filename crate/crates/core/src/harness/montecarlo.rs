//! Batches of independent seeded runs, executed on a rayon pool.

use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::Disturbance;
use crate::harness::config::{ChannelName, Experiment};
use crate::harness::metrics::{compute_metrics, median_duration, Metrics, MetricsError};
use crate::harness::run::{run_with_schedule, Mode, RunResult, TraceOptions};
use crate::plant::{seeded_rng, Channel, DisturbanceSchedule, DISTURBANCE_STREAM};

/// Largest tolerated share of failed runs.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum McError {
    #[error("runs must be at least 1")]
    NoRuns,
    #[error("{failed} of {runs} runs failed (first: seed {first_seed}: {first_msg})")]
    TooManyFailures {
        failed: usize,
        runs: usize,
        first_seed: u64,
        first_msg: String,
    },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub runs: usize,
    pub seed_base: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    /// Randomized channels take these constant values for the whole run.
    pub disturbance: Disturbance,
    pub mean_abs: f64,
    pub rms: f64,
    pub max_spike: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct McReport {
    pub metrics: Metrics,
    pub runs: Vec<RunSummary>,
    /// `(seed, error)` for every excluded run.
    pub failures: Vec<(u64, String)>,
}

/// The schedule for one replica: randomized channels are replaced by a
/// constant drawn uniformly from their bounds.
pub fn replica_schedule(exp: &Experiment, seed: u64) -> DisturbanceSchedule {
    if exp.randomize.is_empty() {
        return exp.schedule.clone();
    }
    let mut rng = seeded_rng(seed, DISTURBANCE_STREAM);
    let mut draw = |name: ChannelName, ch: &Channel| {
        if exp.randomize.contains(&name) {
            Channel::constant(ch.lower, ch.upper, rng.random_range(ch.lower..=ch.upper))
        } else {
            ch.clone()
        }
    };
    let s = &exp.schedule;
    let alpha = draw(ChannelName::Alpha, s.alpha());
    let beta = draw(ChannelName::Beta, s.beta());
    let gamma = draw(ChannelName::Gamma, s.gamma());
    DisturbanceSchedule::new(alpha, beta, gamma, s.horizon())
        .expect("draws lie within validated bounds")
}

pub fn monte_carlo(exp: &Experiment, opts: &McOptions) -> Result<McReport, McError> {
    if opts.runs == 0 {
        return Err(McError::NoRuns);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| McError::Pool(e.to_string()))?;
    let outcomes: Vec<(u64, Disturbance, Result<RunResult, String>)> = pool.install(|| {
        (0..opts.runs)
            .into_par_iter()
            .map(|i| {
                let seed = opts.seed_base + i as u64;
                let schedule = replica_schedule(exp, seed);
                let d = schedule.at(1).expect("horizon starts at 1");
                let r = run_with_schedule(
                    exp,
                    &schedule,
                    seed,
                    opts.mode,
                    TraceOptions::default(),
                    &mut (),
                )
                .map_err(|e| e.to_string());
                (seed, d, r)
            })
            .collect()
    });

    let mut failures = Vec::new();
    let mut done = Vec::new();
    for (seed, d, r) in outcomes {
        match r {
            Ok(res) => done.push((seed, d, res)),
            Err(msg) => failures.push((seed, msg)),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * opts.runs as f64 || done.is_empty() {
        let (first_seed, first_msg) = failures[0].clone();
        return Err(McError::TooManyFailures {
            failed: failures.len(),
            runs: opts.runs,
            first_seed,
            first_msg,
        });
    }

    let traces: Vec<_> = done.iter().map(|(_, _, r)| r.trace.clone()).collect();
    let mut metrics = compute_metrics(&traces, exp.spike_threshold)?;
    let times: Vec<Duration> = done.iter().map(|(_, _, r)| r.elapsed).collect();
    metrics.median_time = median_duration(&times);
    let runs = done
        .iter()
        .enumerate()
        .map(|(i, (seed, d, r))| RunSummary {
            seed: *seed,
            disturbance: *d,
            mean_abs: metrics.per_run_mean_abs[i],
            rms: metrics.per_run_rms[i],
            max_spike: metrics.spikes[i]
                .iter()
                .map(|s| s.longest)
                .max()
                .unwrap_or(0),
            elapsed: r.elapsed,
        })
        .collect();
    Ok(McReport {
        metrics,
        runs,
        failures,
    })
}

/// Per-run results as CSV.
pub fn write_report<W: std::io::Write>(report: &McReport, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "alpha",
        "beta",
        "gamma",
        "mean_abs_err",
        "rms_err",
        "max_spike",
        "seconds",
    ])?;
    for r in &report.runs {
        w.write_record([
            r.seed.to_string(),
            r.disturbance.alpha.to_string(),
            r.disturbance.beta.to_string(),
            r.disturbance.gamma.to_string(),
            r.mean_abs.to_string(),
            r.rms.to_string(),
            r.max_spike.to_string(),
            r.elapsed.as_secs_f64().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
