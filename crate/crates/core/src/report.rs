//! Experiment runner: adaptive vs equidistant identification, comparison
//! metrics and CSV/JSON export.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greedy::{self, FrequencyOracle, GreedyConfig, GreedyHistory, StopReason};
use crate::loewner::MeasurementSet;
use crate::lti::{self, Domain, FrequencyGrid, StateSpace};
use crate::measurement::{self, Oracle};
use crate::par;
use crate::time_domain::{self, LoggedPlant};

/// Points at which a model's frequency response is read for grid
/// frequencies: `jω` for continuous models, `e^{jωT_s}` for discrete ones.
pub fn response_points(m: &StateSpace, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    match (m.domain, m.sample_time) {
        (Domain::Continuous, _) => Ok(grid.points()),
        (Domain::Discrete, Some(ts)) => grid
            .omegas()
            .iter()
            .map(|&w| lti::bilinear_freq_map(w, ts))
            .collect(),
        (Domain::Discrete, None) => Err(Error::InvalidConfig(
            "discrete model without sample time".into(),
        )),
    }
}

pub fn frequency_response(m: &StateSpace, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    m.eval_many(&response_points(m, grid)?)
}

/// Trapezoidal (in ω) approximation of the frequency-limited H2 norm of
/// `H_1 - H_2` over the grid range.
pub fn h2_grid_error(m1: &StateSpace, m2: &StateSpace, grid: &FrequencyGrid) -> Result<f64> {
    let a = frequency_response(m1, grid)?;
    let b = frequency_response(m2, grid)?;
    Ok(h2_from_samples(grid.omegas(), &a, &b))
}

pub(crate) fn h2_from_samples(omegas: &[f64], a: &[Complex64], b: &[Complex64]) -> f64 {
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).collect();
    let integral: f64 = omegas
        .windows(2)
        .zip(sq.windows(2))
        .map(|(w, f)| 0.5 * (f[0] + f[1]) * (w[1] - w[0]))
        .sum();
    (integral / std::f64::consts::PI).sqrt()
}

/// Largest pointwise deviation on the grid.
pub fn max_grid_error(m1: &StateSpace, m2: &StateSpace, grid: &FrequencyGrid) -> Result<f64> {
    let a = frequency_response(m1, grid)?;
    let b = frequency_response(m2, grid)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
}

/// Noisy data never lets successive interpolants agree to `1e-8`; noisy
/// runs stop at `NOISE_TOL_FACTOR · σ` instead.
pub const NOISE_TOL_FACTOR: f64 = 100.0;
/// Singular values below `NOISE_RANK_FACTOR · σ` (relative) are treated as
/// noise when realizing from noisy data.
pub const NOISE_RANK_FACTOR: f64 = 1e-2;

/// Greedy settings adjusted to a measurement noise level.
pub fn noise_adapted(cfg: &GreedyConfig, noise_std: f64) -> GreedyConfig {
    let mut out = cfg.clone();
    if noise_std > 0.0 {
        out.tol = out.tol.max(NOISE_TOL_FACTOR * noise_std);
        out.rank_tol = out.rank_tol.max(NOISE_RANK_FACTOR * noise_std);
    }
    out
}

/// Baseline: measure `count` log-equidistant grid points and realize.
pub fn run_equidistant<O: FrequencyOracle>(
    oracle: &mut O,
    count: usize,
    grid: &FrequencyGrid,
    d: Complex64,
) -> Result<StateSpace> {
    let mut cfg = GreedyConfig::new(grid.clone());
    cfg.d = d;
    run_equidistant_with(oracle, count, &cfg)
}

/// [`run_equidistant`] with the realization settings (`d`, rank tolerance,
/// real/complex) taken from `cfg`.
pub fn run_equidistant_with<O: FrequencyOracle>(
    oracle: &mut O,
    count: usize,
    cfg: &GreedyConfig,
) -> Result<StateSpace> {
    let points = greedy::initial_points(&cfg.grid, count)?;
    let values = points
        .iter()
        .map(|&s| oracle.measure(s))
        .collect::<Result<Vec<_>>>()?;
    greedy::fit(&MeasurementSet::new(points, values)?, cfg)
}

/// Where the plant comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantSpec {
    /// Benchmark id, see [`PlantSpec::parse_benchmark`].
    Benchmark(String),
    File(PathBuf),
}

impl PlantSpec {
    /// Accepted ids: `penzl`, `random:<order>:<seed>`,
    /// `random-discrete:<order>:<seed>` and `resonant12`. Discrete benchmarks
    /// use the experiment's sample time.
    pub fn build(&self, sample_time: f64) -> Result<StateSpace> {
        match self {
            PlantSpec::File(path) => measurement::load_model(path),
            PlantSpec::Benchmark(id) => Self::parse_benchmark(id, sample_time),
        }
    }

    pub fn parse_benchmark(id: &str, sample_time: f64) -> Result<StateSpace> {
        let bad = || Error::InvalidConfig(format!("unknown plant '{id}'"));
        let parts: Vec<&str> = id.split(':').collect();
        let order_seed = || -> Result<(usize, u64)> {
            if parts.len() != 3 {
                return Err(bad());
            }
            let n: usize = parts[1].parse().map_err(|_| bad())?;
            let seed: u64 = parts[2].parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(Error::InvalidConfig("plant order must be positive".into()));
            }
            Ok((n, seed))
        };
        match parts[0] {
            "penzl" if parts.len() == 1 => Ok(lti::make_penzl()),
            "resonant12" if parts.len() == 1 => Ok(lti::make_resonant12(sample_time)),
            "random" => {
                let (n, seed) = order_seed()?;
                Ok(lti::make_random_stable(n, seed))
            }
            "random-discrete" => {
                let (n, seed) = order_seed()?;
                Ok(lti::make_random_stable_discrete(n, seed, sample_time))
            }
            _ => Err(bad()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PlantSpec::Benchmark(id) => id.clone(),
            PlantSpec::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentDomain {
    Freq,
    Time,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub domain: ExperimentDomain,
    /// Greedy settings; its grid is the experiment grid.
    pub greedy: GreedyConfig,
    /// Equidistant point count; `None` matches the adaptive run.
    pub equi_count: Option<usize>,
    /// Noise levels in addition to the always-present noiseless run.
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Samples per time-domain experiment.
    pub samples: usize,
    /// Sample time for the time domain; defaults to 0.9 of Nyquist at ω_max.
    pub sample_time: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(plant: PlantSpec, grid: FrequencyGrid, out_dir: PathBuf) -> Self {
        ExperimentConfig {
            plant,
            domain: ExperimentDomain::Freq,
            greedy: GreedyConfig::new(grid),
            equi_count: None,
            noise_levels: Vec::new(),
            seeds: vec![0],
            out_dir,
            samples: time_domain::DEFAULT_SAMPLES,
            sample_time: None,
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.greedy.grid
    }

    pub fn effective_sample_time(&self) -> f64 {
        self.sample_time
            .unwrap_or_else(|| time_domain::default_sample_time(self.grid().omega_max()))
    }

    pub fn validate(&self) -> Result<()> {
        self.greedy.validate()?;
        if let Some(&bad) = self.noise_levels.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise level {bad} must be nonnegative")));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if let Some(c) = self.equi_count {
            if c % 2 != 0 || c < 2 {
                return Err(Error::InvalidConfig(format!(
                    "equidistant count {c} must be even and at least 2"
                )));
            }
            if c > self.grid().len() {
                return Err(Error::GridTooSmall {
                    grid: self.grid().len(),
                    requested: c,
                });
            }
        }
        if self.domain == ExperimentDomain::Time {
            if self.noise_levels.iter().any(|&v| v > 0.0) {
                return Err(Error::InvalidConfig(
                    "noise levels apply to frequency-domain runs only".into(),
                ));
            }
            if self.samples < 4 {
                return Err(Error::InvalidConfig("need at least 4 samples per experiment".into()));
            }
            let ts = self.effective_sample_time();
            if !(ts > 0.0) {
                return Err(Error::InvalidConfig("sample time must be positive".into()));
            }
            lti::bilinear_freq_map(self.grid().omega_max(), ts)?;
        }
        Ok(())
    }
}

/// Result of one identification run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub scheme: &'static str,
    pub noise: f64,
    pub seed: u64,
    pub points: usize,
    pub order: Option<usize>,
    pub iterations: Option<usize>,
    pub stop: Option<StopReason>,
    pub calls: usize,
    pub h2_error: f64,
    pub max_error: f64,
    pub runtime_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub plant: String,
    pub plant_order: usize,
    pub domain: ExperimentDomain,
    pub grid_size: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_time: Option<f64>,
    pub beta: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub initial_points: usize,
    pub parallel: bool,
    pub runs: Vec<RunRecord>,
    pub total_runtime_s: f64,
}

/// Everything produced by one adaptive run plus its equidistant partner.
struct Cell {
    noise: f64,
    seed: u64,
    adaptive: std::result::Result<(StateSpace, GreedyHistory, usize, f64), Error>,
    equidistant: Option<std::result::Result<(StateSpace, usize, f64), Error>>,
}

fn run_cell(cfg: &ExperimentConfig, plant: &StateSpace, noise: f64, seed: u64) -> Cell {
    let mut cell = Cell {
        noise,
        seed,
        adaptive: Err(Error::EmptyData),
        equidistant: None,
    };
    let t = Instant::now();
    let adaptive = adaptive_run(cfg, plant, noise, seed);
    let elapsed = t.elapsed().as_secs_f64();
    let count = match (&adaptive, cfg.equi_count) {
        (_, Some(c)) => Some(c),
        (Ok((_, h, _)), None) => Some(h.total_points()),
        (Err(_), None) => None,
    };
    cell.adaptive = adaptive.map(|(m, h, calls)| (m, h, calls, elapsed));
    if let Some(count) = count {
        let t = Instant::now();
        let eq = equidistant_run(cfg, plant, count, noise, seed);
        let elapsed = t.elapsed().as_secs_f64();
        cell.equidistant = Some(eq.map(|(m, calls)| (m, calls, elapsed)));
    }
    cell
}

fn adaptive_run(
    cfg: &ExperimentConfig,
    plant: &StateSpace,
    noise: f64,
    seed: u64,
) -> Result<(StateSpace, GreedyHistory, usize)> {
    match cfg.domain {
        ExperimentDomain::Freq => {
            let mut oracle = Oracle::new(plant.clone(), noise, seed)?;
            let (m, h) = greedy::greedy_loop(&mut oracle, &noise_adapted(&cfg.greedy, noise))?;
            Ok((m, h, oracle.calls()))
        }
        ExperimentDomain::Time => {
            let mut sim = LoggedPlant::new(plant.clone());
            let (m, h) = time_domain::greedy_time_loop(
                &mut sim,
                &cfg.greedy,
                cfg.effective_sample_time(),
                cfg.samples,
            )?;
            let points = h.total_points();
            Ok((m, h, points))
        }
    }
}

fn equidistant_run(
    cfg: &ExperimentConfig,
    plant: &StateSpace,
    count: usize,
    noise: f64,
    seed: u64,
) -> Result<(StateSpace, usize)> {
    match cfg.domain {
        ExperimentDomain::Freq => {
            let mut oracle = Oracle::new(plant.clone(), noise, seed)?;
            let m = run_equidistant_with(&mut oracle, count, &noise_adapted(&cfg.greedy, noise))?;
            Ok((m, oracle.calls()))
        }
        ExperimentDomain::Time => {
            let mut sim = LoggedPlant::new(plant.clone());
            let m = time_domain::equidistant_time(
                &mut sim,
                &cfg.greedy,
                count,
                cfg.effective_sample_time(),
                cfg.samples,
            )?;
            Ok((m, count))
        }
    }
}

fn prepare_plant(cfg: &ExperimentConfig) -> Result<StateSpace> {
    let plant = cfg.plant.build(cfg.effective_sample_time())?;
    match (cfg.domain, plant.domain) {
        (ExperimentDomain::Time, Domain::Continuous) => Err(Error::InvalidConfig(
            "time-domain runs need a discrete plant".into(),
        )),
        (ExperimentDomain::Freq, Domain::Discrete) => Err(Error::InvalidConfig(
            "frequency-domain runs need a continuous plant".into(),
        )),
        (ExperimentDomain::Time, Domain::Discrete) => {
            let ts = plant.sample_time.unwrap_or(cfg.effective_sample_time());
            lti::bilinear_freq_map(cfg.grid().omega_max(), ts)?;
            Ok(plant)
        }
        _ => Ok(plant),
    }
}

fn run_record(
    scheme: &'static str,
    cell: &Cell,
    plant: &StateSpace,
    grid: &FrequencyGrid,
) -> RunRecord {
    let mut rec = RunRecord {
        scheme,
        noise: cell.noise,
        seed: cell.seed,
        points: 0,
        order: None,
        iterations: None,
        stop: None,
        calls: 0,
        h2_error: f64::NAN,
        max_error: f64::NAN,
        runtime_s: 0.0,
        error: None,
    };
    let model = match scheme {
        "adaptive" => match &cell.adaptive {
            Ok((m, h, calls, t)) => {
                rec.points = h.total_points();
                rec.iterations = Some(h.iterations());
                rec.stop = Some(h.stop);
                rec.calls = *calls;
                rec.runtime_s = *t;
                Ok(m)
            }
            Err(e) => Err(e.to_string()),
        },
        _ => match &cell.equidistant {
            Some(Ok((m, calls, t))) => {
                rec.points = *calls;
                rec.calls = *calls;
                rec.runtime_s = *t;
                Ok(m)
            }
            Some(Err(e)) => Err(e.to_string()),
            None => Err("skipped: adaptive run failed".to_string()),
        },
    };
    match model {
        Ok(m) => {
            rec.order = Some(m.order());
            match (h2_grid_error(m, plant, grid), max_grid_error(m, plant, grid)) {
                (Ok(h2), Ok(mx)) => {
                    rec.h2_error = h2;
                    rec.max_error = mx;
                }
                (Err(e), _) | (_, Err(e)) => rec.error = Some(e.to_string()),
            }
        }
        Err(msg) => rec.error = Some(msg),
    }
    rec
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn write_bode(path: &Path, grid: &FrequencyGrid, plant: &StateSpace, cell: &Cell) -> Result<()> {
    let truth = frequency_response(plant, grid)?;
    let nan = || vec![Complex64::new(f64::NAN, f64::NAN); grid.len()];
    let ada = match &cell.adaptive {
        Ok((m, ..)) => frequency_response(m, grid).unwrap_or_else(|_| nan()),
        Err(_) => nan(),
    };
    let equi = match &cell.equidistant {
        Some(Ok((m, ..))) => frequency_response(m, grid).unwrap_or_else(|_| nan()),
        _ => nan(),
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "omega",
        "mag_true",
        "mag_adaptive",
        "mag_equidistant",
        "err_adaptive",
        "err_equidistant",
    ])?;
    for (i, &omega) in grid.omegas().iter().enumerate() {
        w.write_record([
            fmt(omega),
            fmt(truth[i].norm()),
            fmt(ada[i].norm()),
            fmt(equi[i].norm()),
            fmt((ada[i] - truth[i]).norm()),
            fmt((equi[i] - truth[i]).norm()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Error of the adaptive model after each iteration, paired with a fresh
/// equidistant fit using the same number of points.
fn write_convergence(
    path: &Path,
    cfg: &ExperimentConfig,
    plant: &StateSpace,
    cell: &Cell,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "points", "h2_adaptive", "h2_equidistant"])?;
    if let Ok((_, history, ..)) = &cell.adaptive {
        let grid = cfg.grid();
        let rows = par::map_range(history.records.len(), |k| {
            let ms = history.cumulative(k);
            let ada = fit_like(cfg, cell.noise, &ms)
                .and_then(|m| h2_grid_error(&m, plant, grid))
                .unwrap_or(f64::NAN);
            let eq = equidistant_run(cfg, plant, ms.len(), cell.noise, cell.seed)
                .and_then(|(m, _)| h2_grid_error(&m, plant, grid))
                .unwrap_or(f64::NAN);
            (k, ms.len(), ada, eq)
        });
        for (k, n, a, e) in rows {
            w.write_record([k.to_string(), n.to_string(), fmt(a), fmt(e)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fit_like(cfg: &ExperimentConfig, noise: f64, ms: &MeasurementSet) -> Result<StateSpace> {
    let m = greedy::fit(ms, &noise_adapted(&cfg.greedy, noise))?;
    Ok(match cfg.domain {
        ExperimentDomain::Freq => m,
        ExperimentDomain::Time => m.discrete(cfg.effective_sample_time()),
    })
}

fn write_chosen(path: &Path, cell: &Cell) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "iteration", "omega", "h_re", "h_im"])?;
    if let Ok((_, history, ..)) = &cell.adaptive {
        let mut index = 0;
        for rec in &history.records {
            for &omega in &rec.added {
                let h = history.measurements.values()[index];
                w.write_record([
                    index.to_string(),
                    rec.iteration.to_string(),
                    fmt(omega),
                    fmt(h.re),
                    fmt(h.im),
                ])?;
                index += 1;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_noise_table(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "noise",
        "seed",
        "scheme",
        "points",
        "order",
        "h2_error",
        "max_error",
        "status",
    ])?;
    for r in records {
        w.write_record([
            fmt(r.noise),
            r.seed.to_string(),
            r.scheme.to_string(),
            r.points.to_string(),
            r.order.map_or_else(String::new, |o| o.to_string()),
            fmt(r.h2_error),
            fmt(r.max_error),
            r.error.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the adaptive and equidistant schemes for every (noise, seed) cell,
/// writes `bode.csv`, `convergence.csv`, `noise_table.csv`,
/// `chosen_points.csv`, `model.json` and `summary.json` into the output
/// directory and returns the summary. Failing cells are recorded, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let plant = prepare_plant(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;

    let mut noises = vec![0.0];
    noises.extend(cfg.noise_levels.iter().copied().filter(|&v| v > 0.0));
    noises.dedup();
    // the noiseless run does not depend on the seed
    let jobs: Vec<(f64, u64)> = noises
        .iter()
        .flat_map(|&n| {
            let seeds = if n == 0.0 { &cfg.seeds[..1] } else { &cfg.seeds[..] };
            seeds.iter().map(move |&s| (n, s))
        })
        .collect();
    let cells = par::map(&jobs, |&(noise, seed)| run_cell(cfg, &plant, noise, seed));
    for c in &cells {
        if let Err(e) = &c.adaptive {
            log::warn!("adaptive run (noise {:e}, seed {}) failed: {e}", c.noise, c.seed);
        }
    }

    let grid = cfg.grid();
    let records: Vec<RunRecord> = cells
        .iter()
        .flat_map(|c| {
            [
                run_record("adaptive", c, &plant, grid),
                run_record("equidistant", c, &plant, grid),
            ]
        })
        .collect();

    let primary = &cells[0];
    let dir = &cfg.out_dir;
    write_bode(&dir.join("bode.csv"), grid, &plant, primary)?;
    write_convergence(&dir.join("convergence.csv"), cfg, &plant, primary)?;
    write_noise_table(&dir.join("noise_table.csv"), &records)?;
    write_chosen(&dir.join("chosen_points.csv"), primary)?;
    if let Ok((m, ..)) = &primary.adaptive {
        measurement::save_model(m, &dir.join("model.json"))?;
    }

    let summary = ExperimentSummary {
        plant: cfg.plant.label(),
        plant_order: plant.order(),
        domain: cfg.domain,
        grid_size: grid.len(),
        omega_min: grid.omega_min(),
        omega_max: grid.omega_max(),
        sample_time: (cfg.domain == ExperimentDomain::Time).then(|| cfg.effective_sample_time()),
        beta: cfg.greedy.beta,
        epsilon: cfg.greedy.epsilon,
        tol: cfg.greedy.tol,
        initial_points: cfg.greedy.initial_count,
        parallel: par::is_parallel(),
        runs: records,
        total_runtime_s: start.elapsed().as_secs_f64(),
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary is serializable"),
    )?;
    Ok(summary)
}

/// Outcome of a single adaptive identification.
#[derive(Debug, Clone, Serialize)]
pub struct Identification {
    pub plant: String,
    pub domain: ExperimentDomain,
    pub noise: f64,
    pub seed: u64,
    pub points: usize,
    pub iterations: usize,
    pub order: usize,
    pub stop: StopReason,
    pub final_err: f64,
    pub h2_error: f64,
    pub max_error: f64,
    pub runtime_s: f64,
}

/// One adaptive run. Writes `model.json`, `calls.csv` (every measurement in
/// acquisition order) and `history.csv` into the output directory.
pub fn run_identify(cfg: &ExperimentConfig, noise: f64, seed: u64) -> Result<Identification> {
    cfg.validate()?;
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::InvalidConfig(format!("noise level {noise} must be nonnegative")));
    }
    if cfg.domain == ExperimentDomain::Time && noise > 0.0 {
        return Err(Error::InvalidConfig(
            "noise levels apply to frequency-domain runs only".into(),
        ));
    }
    let plant = prepare_plant(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let t = Instant::now();
    let (model, history, _) = adaptive_run(cfg, &plant, noise, seed)?;
    let runtime_s = t.elapsed().as_secs_f64();

    let dir = &cfg.out_dir;
    measurement::save_model(&model, &dir.join("model.json"))?;
    let log: Vec<measurement::CallRecord> = history
        .omegas
        .iter()
        .zip(history.measurements.values())
        .map(|(&w, &value)| measurement::CallRecord {
            point: Complex64::new(0.0, w),
            value,
        })
        .collect();
    measurement::write_call_log(&log, &dir.join("calls.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("history.csv"))?;
    w.write_record(["iteration", "points", "order", "err", "added"])?;
    for r in &history.records {
        let added: Vec<String> = r.added.iter().map(|v| fmt(*v)).collect();
        w.write_record([
            r.iteration.to_string(),
            r.total_points.to_string(),
            r.order.to_string(),
            fmt(r.err),
            added.join(" "),
        ])?;
    }
    w.flush()?;

    let grid = cfg.grid();
    Ok(Identification {
        plant: cfg.plant.label(),
        domain: cfg.domain,
        noise,
        seed,
        points: history.total_points(),
        iterations: history.iterations(),
        order: model.order(),
        stop: history.stop,
        final_err: history.final_err(),
        h2_error: h2_grid_error(&model, &plant, grid)?,
        max_error: max_grid_error(&model, &plant, grid)?,
        runtime_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h2_of_identical_models_is_zero() {
        let m = lti::make_random_stable(4, 9);
        let grid = FrequencyGrid::logspace(0.1, 10.0, 100).unwrap();
        assert_eq!(h2_grid_error(&m, &m, &grid).unwrap(), 0.0);
    }

    #[test]
    fn h2_of_constant_offset() {
        let m = lti::make_random_stable(4, 9);
        let mut shifted = m.clone();
        shifted.d += 0.01;
        let grid = FrequencyGrid::logspace(0.5, 20.0, 500).unwrap();
        let expect = 0.01 * ((20.0 - 0.5) / std::f64::consts::PI).sqrt();
        let got = h2_grid_error(&shifted, &m, &grid).unwrap();
        assert!((got - expect).abs() / expect < 1e-2);
    }

    #[test]
    fn benchmark_ids() {
        assert_eq!(PlantSpec::parse_benchmark("penzl", 0.1).unwrap().order(), 1006);
        assert_eq!(PlantSpec::parse_benchmark("random:7:3", 0.1).unwrap().order(), 7);
        let d = PlantSpec::parse_benchmark("random-discrete:4:3", 0.1).unwrap();
        assert_eq!(d.domain, Domain::Discrete);
        assert!(PlantSpec::parse_benchmark("random:0:3", 0.1).is_err());
        assert!(PlantSpec::parse_benchmark("beam", 0.1).is_err());
        assert!(PlantSpec::parse_benchmark("penzl:2", 0.1).is_err());
    }

    #[test]
    fn equidistant_two_points_misses_higher_order() {
        let plant = lti::make_random_stable(4, 2);
        let grid = FrequencyGrid::logspace(0.1, 50.0, 200).unwrap();
        let mut o = Oracle::noiseless(plant.clone());
        let m = run_equidistant(&mut o, 2, &grid, Complex64::new(0.0, 0.0)).unwrap();
        assert!(max_grid_error(&m, &plant, &grid).unwrap() > 1e-3);
    }
}
