//! Greedy identification from sampled input/output data.
//!
//! Each experiment excites the plant with two complex exponentials at the
//! selected angles, waits for the response to settle and recovers the two
//! frequency-response values by least squares on the steady-state samples.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::{self, GreedyConfig, GreedyHistory};
use crate::lti::{bilinear_freq_map, StateSpace};

/// Largest admissible condition number of the least-squares matrix.
pub const MAX_LS_COND: f64 = 1e12;
/// Default samples per experiment.
pub const DEFAULT_SAMPLES: usize = 4096;

/// Input/output record of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrace {
    pub u: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub sample_time: f64,
    pub k_min: usize,
}

impl DiscreteTrace {
    pub fn new(u: Vec<Complex64>, y: Vec<Complex64>, sample_time: f64, k_min: usize) -> Result<Self> {
        let t = DiscreteTrace {
            u,
            y,
            sample_time,
            k_min,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.u.len() != self.y.len() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} samples, output {}",
                self.u.len(),
                self.y.len()
            )));
        }
        if self.k_min >= self.len() || self.len() - self.k_min < 2 {
            return Err(Error::TraceTooShort {
                len: self.len(),
                window: self.k_min,
            });
        }
        if !(self.sample_time > 0.0) {
            return Err(Error::InvalidConfig("sample time must be positive".into()));
        }
        Ok(())
    }

    /// Writes `p,u_re,u_im,y_re,y_im` rows plus a JSON sidecar
    /// (`<path>.json`) with the sampling metadata.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["p", "u_re", "u_im", "y_re", "y_im"])?;
        for (p, (u, y)) in self.u.iter().zip(&self.y).enumerate() {
            w.write_record([
                p.to_string(),
                u.re.to_string(),
                u.im.to_string(),
                y.re.to_string(),
                y.im.to_string(),
            ])?;
        }
        w.flush()?;
        let meta = TraceMeta {
            domain: "discrete".into(),
            sample_time: self.sample_time,
            k_min: self.k_min,
            length: self.len(),
        };
        fs::write(
            sidecar(path),
            serde_json::to_string_pretty(&meta).expect("metadata is serializable"),
        )?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(sidecar(path))?;
        let meta: TraceMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            field: "sidecar".into(),
            msg: e.to_string(),
        })?;
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let expect = ["p", "u_re", "u_im", "y_re", "y_im"];
        if headers.iter().map(str::trim).ne(expect.iter().copied()) {
            return Err(Error::Parse {
                line: 1,
                field: "header".into(),
                msg: format!("expected {}", expect.join(",")),
            });
        }
        let (mut u, mut y) = (Vec::new(), Vec::new());
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse {
                        line,
                        field: expect[k].into(),
                        msg: "missing".into(),
                    })?
                    .trim()
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| Error::Parse {
                        line,
                        field: expect[k].into(),
                        msg: e.to_string(),
                    })
            };
            if num(0)? as usize != row {
                return Err(Error::Parse {
                    line,
                    field: "p".into(),
                    msg: "sample index out of sequence".into(),
                });
            }
            u.push(Complex64::new(num(1)?, num(2)?));
            y.push(Complex64::new(num(3)?, num(4)?));
        }
        if u.len() != meta.length {
            return Err(Error::DimensionMismatch(format!(
                "sidecar declares {} samples, file has {}",
                meta.length,
                u.len()
            )));
        }
        DiscreteTrace::new(u, y, meta.sample_time, meta.k_min)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceMeta {
    domain: String,
    sample_time: f64,
    k_min: usize,
    length: usize,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Least-squares estimates at two angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfEstimatePair {
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub h_a: Complex64,
    pub h_b: Complex64,
    pub residual: f64,
}

/// `u_p = (1+j)/K (e^{jσ_a p} + e^{jσ_b p})`, `p = 0..K`.
pub fn design_input(sigma_a: f64, sigma_b: f64, k: usize) -> Vec<Complex64> {
    let amp = Complex64::new(1.0, 1.0) / k as f64;
    (0..k)
        .map(|p| {
            let p = p as f64;
            amp * (Complex64::from_polar(1.0, sigma_a * p) + Complex64::from_polar(1.0, sigma_b * p))
        })
        .collect()
}

/// First index `k` at which the magnitude profile `|y|` over the window
/// `[k, k+w)` matches the next window `[k+w, k+2w)` sample by sample to
/// within `rel_tol` of the largest magnitude in both windows. Falls back to
/// `⌈K/2⌉`.
pub fn detect_kmin(y: &[Complex64], window: usize, rel_tol: f64) -> Result<usize> {
    if window == 0 || y.len() <= 2 * window {
        return Err(Error::TraceTooShort {
            len: y.len(),
            window,
        });
    }
    let mag: Vec<f64> = y.iter().map(|v| v.norm()).collect();
    for k in 0..=(mag.len() - 2 * window) {
        let scale = mag[k..k + 2 * window].iter().copied().fold(0.0, f64::max);
        let settled = (0..window).all(|i| (mag[k + i] - mag[k + window + i]).abs() <= rel_tol * scale);
        if settled {
            return Ok(k);
        }
    }
    Ok(y.len().div_ceil(2))
}

fn exponential_basis(sigma_a: f64, sigma_b: f64, rows: std::ops::Range<usize>) -> DMatrix<Complex64> {
    let n = rows.len();
    let start = rows.start;
    DMatrix::from_fn(n, 2, |r, c| {
        let p = (start + r) as f64;
        let sigma = if c == 0 { sigma_a } else { sigma_b };
        Complex64::from_polar(1.0, sigma * p)
    })
}

fn condition_number(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

fn least_squares(f: &DMatrix<Complex64>, rhs: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let qr = f.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.adjoint() * rhs;
    r.solve_upper_triangular(&qty)
        .ok_or(Error::IllConditioned(f64::INFINITY))
}

/// Recovers `H(e^{jσ_a})` and `H(e^{jσ_b})` from a trace.
///
/// The input amplitudes `U_1, U_2` are the coefficients of `u` on the two
/// exponentials (fitted over all `K` samples); the estimate then solves
/// `min ‖F h - ȳ‖₂` with `F[p] = [U_1 e^{jσ_a p}, U_2 e^{jσ_b p}]` for
/// `p = k_min..K`.
pub fn estimate_tf_pair(trace: &DiscreteTrace, sigma_a: f64, sigma_b: f64) -> Result<TfEstimatePair> {
    trace.validate()?;
    if sigma_a == sigma_b {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let k = trace.len();
    let basis_all = exponential_basis(sigma_a, sigma_b, 0..k);
    let cond_all = condition_number(&basis_all);
    if cond_all > MAX_LS_COND {
        return Err(Error::IllConditioned(cond_all));
    }
    let u = DVector::from_column_slice(&trace.u);
    let amps = least_squares(&basis_all, &u)?;
    let umax = trace.u.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = 1e-12 * umax;
    for (amp, sigma) in amps.iter().zip([sigma_a, sigma_b]) {
        if umax == 0.0 || amp.norm() <= floor {
            return Err(Error::ZeroInputComponent(sigma));
        }
    }

    let mut f = exponential_basis(sigma_a, sigma_b, trace.k_min..k);
    let cond = condition_number(&f);
    if cond > MAX_LS_COND {
        return Err(Error::IllConditioned(cond));
    }
    for c in 0..2 {
        let a = amps[c];
        f.column_mut(c).iter_mut().for_each(|v| *v *= a);
    }
    let ybar = DVector::from_column_slice(&trace.y[trace.k_min..]);
    let h = least_squares(&f, &ybar)?;
    let residual = (&f * &h - &ybar).norm();
    Ok(TfEstimatePair {
        sigma_a,
        sigma_b,
        h_a: h[0],
        h_b: h[1],
        residual,
    })
}

/// Something that can be excited with an input sequence from rest.
pub trait DiscretePlant {
    fn simulate(&mut self, u: &[Complex64]) -> Result<Vec<Complex64>>;

    /// Whether `simulate` may run on several threads at once.
    fn is_concurrent(&self) -> bool {
        false
    }
}

impl DiscretePlant for StateSpace {
    fn simulate(&mut self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.simulate_discrete(u, None)
    }

    fn is_concurrent(&self) -> bool {
        true
    }
}

/// Plant wrapper that counts experiments and estimated points.
#[derive(Debug, Clone)]
pub struct LoggedPlant<P> {
    pub plant: P,
    pub experiments: usize,
}

impl<P: DiscretePlant> LoggedPlant<P> {
    pub fn new(plant: P) -> Self {
        LoggedPlant {
            plant,
            experiments: 0,
        }
    }
}

impl<P: DiscretePlant> DiscretePlant for LoggedPlant<P> {
    fn simulate(&mut self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.experiments += 1;
        self.plant.simulate(u)
    }
}

/// Settling detection parameters used by [`run_pair_experiment`].
#[derive(Debug, Clone, Copy)]
pub struct SettleOptions {
    /// Window length as a fraction of `K`.
    pub window_fraction: f64,
    pub rel_tol: f64,
}

impl Default for SettleOptions {
    fn default() -> Self {
        SettleOptions {
            window_fraction: 0.125,
            rel_tol: 1e-9,
        }
    }
}

/// Designs the two-tone input, runs the plant and estimates both values.
pub fn run_pair_experiment<P: DiscretePlant>(
    plant: &mut P,
    sigma_a: f64,
    sigma_b: f64,
    k: usize,
    sample_time: f64,
    settle: SettleOptions,
) -> Result<TfEstimatePair> {
    let u = design_input(sigma_a, sigma_b, k);
    let y = plant.simulate(&u)?;
    let window = ((k as f64 * settle.window_fraction) as usize).max(1);
    let k_min = detect_kmin(&y, window, settle.rel_tol)?;
    let trace = DiscreteTrace::new(u, y, sample_time, k_min)?;
    estimate_tf_pair(&trace, sigma_a, sigma_b)
}

/// Sample time placing `ω_max` at 0.9 of Nyquist.
pub fn default_sample_time(omega_max: f64) -> f64 {
    0.9 * PI / omega_max
}

/// Greedy identification from time-domain experiments. Grid frequencies are
/// mapped to `z = e^{jωT_s}`; every pair of new points costs one
/// experiment of `k` samples, and the initial points are estimated in
/// consecutive pairs.
pub fn greedy_time_loop<P: DiscretePlant>(
    plant: &mut P,
    cfg: &GreedyConfig,
    sample_time: f64,
    k: usize,
) -> Result<(StateSpace, GreedyHistory)> {
    greedy_time_loop_with(plant, cfg, sample_time, k, SettleOptions::default())
}

pub fn greedy_time_loop_with<P: DiscretePlant>(
    plant: &mut P,
    cfg: &GreedyConfig,
    sample_time: f64,
    k: usize,
    settle: SettleOptions,
) -> Result<(StateSpace, GreedyHistory)> {
    let omegas = cfg.grid.omegas().to_vec();
    let zs = omegas
        .iter()
        .map(|&w| bilinear_freq_map(w, sample_time))
        .collect::<Result<Vec<_>>>()?;
    let angles: Vec<f64> = omegas.iter().map(|w| w * sample_time).collect();
    let (model, history) = greedy::run_loop(
        cfg,
        &zs,
        |idx| {
            if idx.len() % 2 != 0 {
                return Err(Error::OddCount(idx.len()));
            }
            let mut out = Vec::with_capacity(idx.len());
            for pair in idx.chunks(2) {
                let est = run_pair_experiment(
                    plant,
                    angles[pair[0]],
                    angles[pair[1]],
                    k,
                    sample_time,
                    settle,
                )?;
                out.push(est.h_a);
                out.push(est.h_b);
            }
            Ok(out)
        },
        |ms| greedy::fit(ms, cfg).map(|m| m.discrete(sample_time)),
    )?;
    Ok((model, history))
}

/// Time-domain baseline: `count` log-equidistant grid points estimated in
/// consecutive pairs and realized in one shot.
pub fn equidistant_time<P: DiscretePlant>(
    plant: &mut P,
    cfg: &GreedyConfig,
    count: usize,
    sample_time: f64,
    k: usize,
) -> Result<StateSpace> {
    let idx = greedy::initial_indices(&cfg.grid, count)?;
    let omegas = cfg.grid.omegas();
    let mut points = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for pair in idx.chunks(2) {
        let (wa, wb) = (omegas[pair[0]], omegas[pair[1]]);
        let est = run_pair_experiment(
            plant,
            wa * sample_time,
            wb * sample_time,
            k,
            sample_time,
            SettleOptions::default(),
        )?;
        points.push(bilinear_freq_map(wa, sample_time)?);
        points.push(bilinear_freq_map(wb, sample_time)?);
        values.push(est.h_a);
        values.push(est.h_b);
    }
    let ms = crate::loewner::MeasurementSet::new(points, values)?;
    Ok(greedy::fit(&ms, cfg)?.discrete(sample_time))
}
