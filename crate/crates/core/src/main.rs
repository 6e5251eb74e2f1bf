use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;

use dual_control::grid::{partition_interval, BoundedInterval, Disturbance};
use dual_control::harness::montecarlo::write_report;
use dual_control::harness::{
    monte_carlo, run_experiment, ExperimentConfig, McOptions, Mode, TraceOptions,
};
use dual_control::plant::{
    sample_noise, seeded_rng, PlantKind, PlantModel, TrainParams, SAMPLE_STREAM,
};
use dual_control::rbf::{train_offline, BranchGeometry, TrainingDataset, TrainingSample};

#[derive(Parser)]
#[command(
    name = "dualctl",
    version,
    about = "Anti-disturbance dual control experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantArg {
    AffineCase1,
    Crh3Train,
}

#[derive(Subcommand)]
enum Cmd {
    /// Partition an interval and print the candidate midpoints.
    Partition {
        #[arg(long, allow_hyphen_values = true)]
        lower: f64,
        #[arg(long, allow_hyphen_values = true)]
        upper: f64,
        #[arg(long)]
        eps: f64,
    },
    /// Sample an undisturbed plant (alpha = beta = 1, gamma = 0) to a CSV.
    Samples {
        #[arg(long, value_enum)]
        plant: PlantArg,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        x_max: f64,
        #[arg(long, allow_hyphen_values = true)]
        u_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        u_max: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_variance: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit RBF output weights to an `x,u,y_next` CSV.
    Train {
        #[arg(long)]
        samples: PathBuf,
        /// Comma list (`-2,0,2`) or range (`240:380:10`).
        #[arg(long, allow_hyphen_values = true)]
        f_centers: String,
        /// Basis variance b² of the f branch.
        #[arg(long)]
        f_width: f64,
        #[arg(long, allow_hyphen_values = true)]
        g_centers: String,
        #[arg(long)]
        g_width: f64,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment and write its trace.
    Run {
        /// Config file, or the name of a bundled config.
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append pi_1..pi_s columns.
        #[arg(long)]
        full_posteriors: bool,
        /// Append u_1..u_s columns.
        #[arg(long)]
        candidate_inputs: bool,
        /// Apply the full-knowledge benchmark input instead.
        #[arg(long)]
        optimal: bool,
    },
    /// Monte Carlo batch over seeds seed_base..seed_base+runs-1.
    Mc {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed_base: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        optimal: bool,
    },
}

fn parse_centers(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let [a, b, step] = [parts[0], parts[1], parts[2]].map(|s| s.trim().parse::<f64>());
        let (a, b, step) = (a?, b?, step?);
        if !(step > 0.0 && b >= a) {
            bail!("range `{spec}` needs start <= stop and a positive step");
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| a + i as f64 * step).collect());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad center `{s}`"))
        })
        .collect()
}

fn mode(optimal: bool) -> Mode {
    if optimal {
        Mode::Optimal
    } else {
        Mode::Dual
    }
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Partition { lower, upper, eps } => {
            let set = partition_interval(&BoundedInterval::new(lower, upper, eps)?);
            println!("s = {}", set.count());
            println!("length = {}", set.sub_interval_length());
            let mids: Vec<String> = set.midpoints().iter().map(|m| m.to_string()).collect();
            println!("midpoints = {}", mids.join(", "));
        }
        Cmd::Samples {
            plant,
            count,
            x_min,
            x_max,
            u_min,
            u_max,
            noise_variance,
            seed,
            out,
        } => {
            if !(x_min < x_max && u_min < u_max) {
                bail!("sampling ranges must be non-empty");
            }
            let kind = match plant {
                PlantArg::AffineCase1 => PlantKind::AffineCase1,
                PlantArg::Crh3Train => PlantKind::Crh3Train(TrainParams::CRH3),
            };
            let model = PlantModel::new(kind, noise_variance)?;
            let mut rng = seeded_rng(seed, SAMPLE_STREAM);
            let nominal = Disturbance::new(1.0, 1.0, 0.0);
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["x", "u", "y_next"])?;
            for _ in 0..count {
                let x = rng.random_range(x_min..x_max);
                let u = rng.random_range(u_min..u_max);
                let e = sample_noise(&mut rng, noise_variance);
                let y = model.step(x, u, &nominal, e)?;
                w.write_record([x.to_string(), u.to_string(), y.to_string()])?;
            }
            w.flush()?;
            eprintln!("wrote {count} samples to {}", out.display());
        }
        Cmd::Train {
            samples,
            f_centers,
            f_width,
            g_centers,
            g_width,
            ridge,
            out,
        } => {
            let mut rdr =
                csv::Reader::from_path(&samples).with_context(|| samples.display().to_string())?;
            let mut rows = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let vals: Vec<f64> = rec
                    .iter()
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .with_context(|| format!("samples row {}", i + 1))?;
                if vals.len() < 3 {
                    bail!("samples row {}: expected state columns, u, y_next", i + 1);
                }
                let n = vals.len();
                rows.push(TrainingSample {
                    x: vals[..n - 2].to_vec(),
                    u: vals[n - 2],
                    y_next: vals[n - 1],
                });
            }
            let f_geom = BranchGeometry::scalar(&parse_centers(&f_centers)?, f_width);
            let g_geom = BranchGeometry::scalar(&parse_centers(&g_centers)?, g_width);
            let data = TrainingDataset {
                samples: rows,
                ridge,
            };
            let fit = train_offline(&data, &f_geom, &g_geom)?;
            fit.network.save(&out)?;
            println!("residual rms = {}", fit.residual_rms);
        }
        Cmd::Run {
            config,
            seed,
            out,
            full_posteriors,
            candidate_inputs,
            optimal,
        } => {
            let cfg = ExperimentConfig::load_or_bundled(&config)?;
            let exp = cfg.resolve()?;
            let opts = TraceOptions {
                posteriors: full_posteriors,
                candidate_inputs,
            };
            let res = run_experiment(&exp, seed.unwrap_or(exp.seed), mode(optimal), opts)?;
            match out.or_else(|| cfg.output.trace.as_ref().map(PathBuf::from)) {
                Some(path) => res.trace.save(&path)?,
                None => res.trace.write(std::io::stdout().lock())?,
            }
            let m = dual_control::harness::compute_metrics(
                std::slice::from_ref(&res.trace),
                exp.spike_threshold,
            )?;
            eprintln!(
                "{}: N={} mean|e|={:.6} rms={:.6} max_spike={} resets={} time={:.3}s",
                exp.name,
                exp.iterations,
                m.j_m,
                m.per_run_rms[0],
                m.max_spike(),
                res.trace.rows.iter().filter(|r| r.reset).count(),
                res.elapsed.as_secs_f64()
            );
        }
        Cmd::Mc {
            config,
            runs,
            seed_base,
            jobs,
            out,
            optimal,
        } => {
            let cfg = ExperimentConfig::load_or_bundled(&config)?;
            let exp = cfg.resolve()?;
            let opts = McOptions {
                runs,
                seed_base,
                jobs,
                mode: mode(optimal),
            };
            let rep = monte_carlo(&exp, &opts)?;
            for (seed, msg) in &rep.failures {
                eprintln!("warning: run with seed {seed} failed and was excluded: {msg}");
            }
            if let Some(path) = out.or_else(|| cfg.output.metrics.as_ref().map(PathBuf::from)) {
                write_report(&rep, std::fs::File::create(&path)?)?;
            }
            let m = &rep.metrics;
            println!("config = {}", exp.name);
            println!("candidates = {}", exp.grid.size());
            println!("runs = {} ({} excluded)", m.runs(), rep.failures.len());
            println!("J_M = {}", m.j_m);
            println!("norm_index = {}", m.norm_index);
            println!("max_spike = {}", m.max_spike());
            if let Some(t) = m.median_time {
                println!("t_r = {}", t.as_secs_f64());
            }
        }
    }
    Ok(())
}
