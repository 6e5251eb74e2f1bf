//! The closed-loop iteration: plant step, Bayesian update, candidate laws,
//! blending, change detection, covariance update.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::controller::{blended_control, candidate_controls, optimal_control, ControlError};
use crate::harness::config::Experiment;
use crate::harness::trace::{RunTrace, TraceRow};
use crate::learner::{detect_change, LearnerError, LearnerState};
use crate::plant::{AffinePlant, DisturbanceSchedule, NoiseSource, SimError};
use crate::rbf::RbfError;

#[derive(Debug, Error)]
pub enum RunErrorKind {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Network(#[from] RbfError),
}

#[derive(Debug, Error)]
#[error("iteration {k}: {kind}")]
pub struct RunError {
    pub k: usize,
    pub kind: RunErrorKind,
}

trait At<T> {
    fn at(self, k: usize) -> Result<T, RunError>;
}

impl<T, E: Into<RunErrorKind>> At<T> for Result<T, E> {
    fn at(self, k: usize) -> Result<T, RunError> {
        self.map_err(|e| RunError { k, kind: e.into() })
    }
}

/// Which input is applied to the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// The posterior-weighted dual control law.
    #[default]
    Dual,
    /// The full-knowledge benchmark `u_opt`.
    Optimal,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TraceOptions {
    pub posteriors: bool,
    pub candidate_inputs: bool,
}

/// Phases of one iteration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PlantStep,
    PosteriorUpdate,
    ControlLaw,
    ResetCheck,
    CovarianceUpdate,
}

/// Hook notified after each phase of every iteration.
pub trait StepObserver {
    fn after(&mut self, k: usize, phase: Phase, learner: &LearnerState);
}

impl StepObserver for () {
    fn after(&mut self, _: usize, _: Phase, _: &LearnerState) {}
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: RunTrace,
    pub elapsed: Duration,
}

pub fn run_experiment(
    exp: &Experiment,
    seed: u64,
    mode: Mode,
    opts: TraceOptions,
) -> Result<RunResult, RunError> {
    run_with_schedule(exp, &exp.schedule, seed, mode, opts, &mut ())
}

/// Run `exp` with an explicit schedule (Monte Carlo substitutes its own).
pub fn run_with_schedule(
    exp: &Experiment,
    schedule: &DisturbanceSchedule,
    seed: u64,
    mode: Mode,
    opts: TraceOptions,
    observer: &mut dyn StepObserver,
) -> Result<RunResult, RunError> {
    let start = Instant::now();
    let n = exp.iterations;
    let grid = &exp.grid;
    let net = &exp.network;
    let plant = &exp.plant;
    let yr = |k: usize| exp.reference.at(k).at(k);
    let mut noise = NoiseSource::new(seed, plant.noise_variance).at(1)?;
    let mut learner =
        LearnerState::for_grid(grid, exp.initial_covariance, exp.learner_noise_variance).at(1)?;
    let clamp = exp.controller.input_clamp();

    let benchmark = |k: usize, y: f64| -> Result<f64, RunError> {
        let x = [y];
        let d = schedule.at(k).at(k)?;
        optimal_control(&d, plant.drift(&x), plant.gain(&x), yr(k + 1)?).at(k)
    };

    let mut rows = Vec::with_capacity(n);
    let mut y = exp.initial_output;
    let u_opt1 = benchmark(1, y)?;
    let mut u = match mode {
        Mode::Dual => exp.initial_input,
        Mode::Optimal => u_opt1,
    };
    let d1 = schedule.at(1).at(1)?;
    let (t0, p0) = learner.argmax();
    rows.push(TraceRow {
        k: 1,
        y_r: yr(1)?,
        y,
        u,
        u_opt: u_opt1,
        y_hat: y,
        err: y - yr(1)?,
        argmax_t: t0 + 1,
        max_pi: p0,
        reset: false,
        alpha_true: d1.alpha,
        beta_true: d1.beta,
        gamma_true: d1.gamma,
        clamped: clamp.map(|_| false),
        posteriors: if opts.posteriors {
            learner.posteriors().to_vec()
        } else {
            vec![]
        },
        // u(1) is the configured initializer; no candidate laws were evaluated
        candidate_inputs: if opts.candidate_inputs {
            vec![f64::NAN; grid.size()]
        } else {
            vec![]
        },
    });

    for k in 1..n {
        let next = k + 1;
        // (1) apply u(k)
        let d = schedule.at(k).at(k)?;
        let y_next = plant.step(y, u, &d, noise.sample()).at(next)?;
        observer.after(next, Phase::PlantStep, &learner);

        // (2) score every candidate's one-step prediction of y(k+1)
        let (f_prev, g_prev) = net.eval(&[y]).at(next)?;
        let predictions = learner.predict(grid, f_prev, g_prev, u, y_next).at(next)?;
        learner.observe(&predictions).at(next)?;
        observer.after(next, Phase::PosteriorUpdate, &learner);

        // (3)-(4) candidate laws at x(k+1) and their blend
        let (f_hat, g_hat) = net.eval(&[y_next]).at(next)?;
        let target = yr(next + 1)?;
        let inputs = candidate_controls(
            grid.vectors(),
            learner.covariances(),
            f_hat,
            g_hat,
            target,
            &exp.controller,
        )
        .at(next)?;
        let decision = blended_control(learner.posteriors(), &inputs, clamp).at(next)?;
        observer.after(next, Phase::ControlLaw, &learner);

        // (5)-(6) residual of the most probable candidate, change detection
        let (t_star, max_pi) = learner.argmax();
        let posteriors = if opts.posteriors {
            learner.posteriors().to_vec()
        } else {
            vec![]
        };
        let star = &predictions[t_star];
        let reset = detect_change(star.residual, &exp.reset, max_pi);
        if reset {
            learner.reset();
        }
        observer.after(next, Phase::ResetCheck, &learner);

        // (7) covariance rescaling
        learner.update_covariances();
        observer.after(next, Phase::CovarianceUpdate, &learner);

        let u_opt = benchmark(next, y_next)?;
        let truth = schedule.at(next).at(next)?;
        let y_r = yr(next)?;
        rows.push(TraceRow {
            k: next,
            y_r,
            y: y_next,
            u: match mode {
                Mode::Dual => decision.applied,
                Mode::Optimal => u_opt,
            },
            u_opt,
            y_hat: star.y_hat,
            err: y_next - y_r,
            argmax_t: t_star + 1,
            max_pi,
            reset,
            alpha_true: truth.alpha,
            beta_true: truth.beta,
            gamma_true: truth.gamma,
            clamped: clamp.map(|_| decision.clamped),
            posteriors,
            candidate_inputs: if opts.candidate_inputs {
                inputs
            } else {
                vec![]
            },
        });
        y = y_next;
        u = rows[rows.len() - 1].u;
    }

    Ok(RunResult {
        trace: RunTrace { rows },
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::trace::RunTrace;

    fn case1() -> Experiment {
        ExperimentConfig::load_or_bundled("case1")
            .unwrap()
            .resolve()
            .unwrap()
    }

    #[test]
    fn trace_has_one_row_per_iteration() {
        let exp = case1();
        let r = run_experiment(&exp, 3, Mode::Dual, TraceOptions::default()).unwrap();
        assert_eq!(r.trace.len(), 600);
        assert!(r
            .trace
            .rows
            .iter()
            .enumerate()
            .all(|(i, row)| row.k == i + 1));
        assert_eq!(r.trace.rows[0].y, 0.0);
        assert_eq!(r.trace.rows[0].u, 0.0);
        assert!(!r.trace.rows[0].reset);
    }

    #[test]
    fn full_posteriors_are_normalized() {
        let exp = case1();
        let opts = TraceOptions {
            posteriors: true,
            candidate_inputs: true,
        };
        let r = run_experiment(&exp, 3, Mode::Dual, opts).unwrap();
        for row in &r.trace.rows {
            assert_eq!(row.posteriors.len(), 15);
            assert!((row.posteriors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.trace.rows[5].candidate_inputs.len(), 15);
        assert!(r.trace.rows[0].candidate_inputs.iter().all(|u| u.is_nan()));
        let text = r.trace.to_csv_string();
        assert_eq!(
            RunTrace::read(text.as_bytes()).unwrap().to_csv_string(),
            text
        );
    }

    struct Recorder(Vec<(usize, Phase)>);

    impl StepObserver for Recorder {
        fn after(&mut self, k: usize, phase: Phase, _: &LearnerState) {
            self.0.push((k, phase));
        }
    }

    #[test]
    fn phases_run_in_order() {
        let exp = case1();
        let mut rec = Recorder(vec![]);
        run_with_schedule(
            &exp,
            &exp.schedule,
            1,
            Mode::Dual,
            TraceOptions::default(),
            &mut rec,
        )
        .unwrap();
        let order = [
            Phase::PlantStep,
            Phase::PosteriorUpdate,
            Phase::ControlLaw,
            Phase::ResetCheck,
            Phase::CovarianceUpdate,
        ];
        assert_eq!(rec.0.len(), 599 * order.len());
        for (i, chunk) in rec.0.chunks(order.len()).enumerate() {
            let phases: Vec<Phase> = chunk.iter().map(|c| c.1).collect();
            assert_eq!(phases, order);
            assert!(chunk.iter().all(|c| c.0 == i + 2));
        }
    }

    #[test]
    fn optimal_mode_applies_the_benchmark() {
        let exp = case1();
        let r = run_experiment(&exp, 9, Mode::Optimal, TraceOptions::default()).unwrap();
        assert!(r.trace.rows.iter().all(|row| row.u == row.u_opt));
    }
}
