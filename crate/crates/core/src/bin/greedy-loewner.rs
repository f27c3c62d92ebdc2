use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use greedy_loewner::greedy::GreedyConfig;
use greedy_loewner::report::{self, ExperimentConfig, ExperimentDomain, PlantSpec};
use greedy_loewner::{Error, FrequencyGrid, Result};

#[derive(Parser)]
#[command(version, about = "Greedy Loewner identification of SISO LTI systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single adaptive identification run.
    Identify {
        #[command(flatten)]
        common: Common,
        /// Noise standard deviation (per real/imaginary component).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Adaptive vs equidistant sweep over noise levels and seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise levels; the noiseless run is always included.
        #[arg(long, value_delimiter = ',')]
        noise: Vec<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seed: Vec<u64>,
        /// Equidistant point count (default: adaptive final count).
        #[arg(long)]
        equi_count: Option<usize>,
    },
    /// Runs `compare` on the shipped benchmarks, one subdirectory each.
    Bench {
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        noise: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seed: Vec<u64>,
        /// Also run this model file.
        #[arg(long)]
        model_file: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Freq,
    Time,
}

#[derive(Args)]
struct Common {
    /// Benchmark id: penzl, random:<order>:<seed>, random-discrete:<order>:<seed>, resonant12.
    #[arg(long, conflicts_with = "model_file")]
    plant: Option<String>,
    /// JSON model file.
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    wmin: f64,
    #[arg(long, default_value_t = 1000.0)]
    wmax: f64,
    /// Grid size.
    #[arg(long, default_value_t = 500)]
    grid: usize,
    #[arg(long, default_value_t = GreedyConfig::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = GreedyConfig::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = GreedyConfig::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = GreedyConfig::DEFAULT_INITIAL)]
    init_points: usize,
    #[arg(long, default_value_t = GreedyConfig::DEFAULT_MAX_POINTS)]
    max_points: usize,
    #[arg(long, value_enum, default_value = "freq")]
    domain: DomainArg,
    /// Samples per time-domain experiment.
    #[arg(long, default_value_t = greedy_loewner::time_domain::DEFAULT_SAMPLES)]
    samples: usize,
    /// Sample time for time-domain runs (default 0.9 of Nyquist at wmax).
    #[arg(long)]
    sample_time: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let plant = match (&self.plant, &self.model_file) {
            (Some(id), None) => PlantSpec::Benchmark(id.clone()),
            (None, Some(path)) => PlantSpec::File(path.clone()),
            (None, None) => PlantSpec::Benchmark("penzl".into()),
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "--plant and --model-file are exclusive".into(),
                ))
            }
        };
        let grid = FrequencyGrid::logspace(self.wmin, self.wmax, self.grid)?;
        let mut cfg = ExperimentConfig::new(plant, grid, self.out.clone());
        cfg.domain = match self.domain {
            DomainArg::Freq => ExperimentDomain::Freq,
            DomainArg::Time => ExperimentDomain::Time,
        };
        cfg.greedy.beta = self.beta;
        cfg.greedy.epsilon = self.epsilon;
        cfg.greedy.tol = self.tol;
        cfg.greedy.initial_count = self.init_points;
        cfg.greedy.max_points = self.max_points;
        cfg.samples = self.samples;
        cfg.sample_time = self.sample_time;
        Ok(cfg)
    }
}

fn print_summary(s: &report::ExperimentSummary) {
    println!(
        "{} (order {}), {} grid points on [{:e}, {:e}]",
        s.plant, s.plant_order, s.grid_size, s.omega_min, s.omega_max
    );
    for r in &s.runs {
        match &r.error {
            None => println!(
                "  {:<11} noise {:<8.1e} seed {:<3} points {:<4} order {:<4} h2 {:.3e}  max {:.3e}",
                r.scheme,
                r.noise,
                r.seed,
                r.points,
                r.order.unwrap_or(0),
                r.h2_error,
                r.max_error
            ),
            Some(e) => println!(
                "  {:<11} noise {:<8.1e} seed {:<3} failed: {e}",
                r.scheme, r.noise, r.seed
            ),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Identify { common, noise, seed } => {
            let cfg = common.config()?;
            let out = report::run_identify(&cfg, noise, seed)?;
            println!(
                "{}: {} points, {} iterations, order {}, stop {:?}, h2 {:.3e}, max {:.3e}",
                out.plant,
                out.points,
                out.iterations,
                out.order,
                out.stop,
                out.h2_error,
                out.max_error
            );
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Compare {
            common,
            noise,
            seed,
            equi_count,
        } => {
            let mut cfg = common.config()?;
            cfg.noise_levels = noise;
            cfg.seeds = seed;
            cfg.equi_count = equi_count;
            let summary = report::run_experiment(&cfg)?;
            print_summary(&summary);
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Bench {
            out,
            noise,
            seed,
            model_file,
        } => {
            let grid = FrequencyGrid::logspace(0.1, 1e3, 500)?;
            let mut plants: Vec<(String, PlantSpec)> = vec![("penzl".into(), PlantSpec::Benchmark("penzl".into()))];
            for s in 1..=5 {
                let id = format!("random:10:{s}");
                plants.push((format!("random10-{s}"), PlantSpec::Benchmark(id)));
            }
            if let Some(path) = model_file {
                plants.push(("model-file".into(), PlantSpec::File(path)));
            }
            for (name, plant) in plants {
                let mut cfg = ExperimentConfig::new(plant, grid.clone(), out.join(&name));
                cfg.noise_levels = noise.clone();
                cfg.seeds = seed.clone();
                let summary = report::run_experiment(&cfg)?;
                print_summary(&summary);
            }
            let time_grid = FrequencyGrid::logspace(1e-2, 1e3, 500)?;
            let mut cfg = ExperimentConfig::new(
                PlantSpec::Benchmark("resonant12".into()),
                time_grid,
                out.join("resonant12-time"),
            );
            cfg.domain = ExperimentDomain::Time;
            let summary = report::run_experiment(&cfg)?;
            print_summary(&summary);
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
