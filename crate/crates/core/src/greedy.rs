//! Greedy selection of frequency-domain measurement points.
//!
//! Each iteration compares the two most recent Loewner interpolants `H_k`
//! and `H_{k-1}` on a fixed candidate grid, weights the discrepancy with a
//! notch-shaped mask around recently measured frequencies and measures the
//! plant at the two best candidates. The loop stops once the interpolants
//! agree to `tol` everywhere on the grid.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lti::{FrequencyGrid, StateSpace};
use crate::loewner::{self, MeasurementSet};
use crate::par;

/// Source of transfer-function measurements.
pub trait FrequencyOracle {
    fn measure(&mut self, s: Complex64) -> Result<Complex64>;

    /// Whether `measure` may be called from several threads at once.
    fn is_concurrent(&self) -> bool {
        false
    }
}

impl<F> FrequencyOracle for F
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    fn measure(&mut self, s: Complex64) -> Result<Complex64> {
        self(s)
    }
}

#[derive(Debug, Clone)]
pub struct GreedyConfig {
    pub beta: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub grid: FrequencyGrid,
    pub initial_count: usize,
    pub d: Complex64,
    pub max_points: usize,
    /// Relative singular-value cut-off used when realizing.
    pub rank_tol: f64,
    /// Augment data with conjugates and return real models.
    pub real: bool,
}

impl GreedyConfig {
    pub const DEFAULT_BETA: f64 = 0.6;
    pub const DEFAULT_EPSILON: f64 = 1e-15;
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const DEFAULT_INITIAL: usize = 6;
    pub const DEFAULT_MAX_POINTS: usize = 200;
    /// Tighter than the loewner default: at `1e-10` the truncation floor on
    /// unit-scale responses sits above the default `tol`.
    pub const DEFAULT_RANK_TOL: f64 = 1e-12;

    pub fn new(grid: FrequencyGrid) -> Self {
        GreedyConfig {
            beta: Self::DEFAULT_BETA,
            epsilon: Self::DEFAULT_EPSILON,
            tol: Self::DEFAULT_TOL,
            grid,
            initial_count: Self::DEFAULT_INITIAL,
            d: Complex64::new(0.0, 0.0),
            max_points: Self::DEFAULT_MAX_POINTS,
            rank_tol: Self::DEFAULT_RANK_TOL,
            real: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.initial_count < 4 || !self.initial_count.is_multiple_of(2) {
            return bad("initial point count must be even and at least 4");
        }
        if self.max_points < self.initial_count {
            return bad("max_points must be at least the initial point count");
        }
        if !(self.rank_tol >= 0.0) {
            return bad("rank tolerance must be nonnegative");
        }
        if self.initial_count > self.grid.len() {
            return Err(Error::GridTooSmall {
                grid: self.grid.len(),
                requested: self.initial_count,
            });
        }
        Ok(())
    }
}

/// Why the loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxPointsReached,
    GridExhausted,
    DegenerateObjective,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Frequencies (rad/s) measured in this iteration.
    pub added: Vec<f64>,
    pub err: f64,
    pub order: usize,
    pub total_points: usize,
}

#[derive(Debug, Clone)]
pub struct GreedyHistory {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Every measurement in acquisition order.
    pub measurements: MeasurementSet,
    /// Grid frequencies of the measurements, in the same order.
    pub omegas: Vec<f64>,
}

impl GreedyHistory {
    /// Number of greedy iterations after initialization.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn total_points(&self) -> usize {
        self.measurements.len()
    }

    /// Measurement set `Σ_k` as it stood after record `k`.
    pub fn cumulative(&self, k: usize) -> MeasurementSet {
        self.measurements.prefix(self.records[k].total_points)
    }

    pub fn final_err(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.err)
    }
}

/// Single notch `1 - exp(-β (ln(|σ|+ε) - ln(|σ_i|+ε))²)`, given magnitudes.
pub fn mask_single_mag(mag: f64, anchor_mag: f64, beta: f64, epsilon: f64) -> f64 {
    let dl = (mag + epsilon).ln() - (anchor_mag + epsilon).ln();
    1.0 - (-beta * dl * dl).exp()
}

pub fn mask_single(s: Complex64, anchor: Complex64, beta: f64, epsilon: f64) -> f64 {
    mask_single_mag(s.norm(), anchor.norm(), beta, epsilon)
}

/// Product of notches over all anchors.
pub fn mask_product(s: Complex64, anchors: &[Complex64], beta: f64, epsilon: f64) -> f64 {
    let mag = s.norm();
    anchors
        .iter()
        .map(|a| mask_single_mag(mag, a.norm(), beta, epsilon))
        .product()
}

fn mask_product_mag(mag: f64, anchors: &[f64], beta: f64, epsilon: f64) -> f64 {
    anchors
        .iter()
        .map(|&a| mask_single_mag(mag, a, beta, epsilon))
        .product()
}

/// `|H_k - H_{k-1}|` at every point.
pub fn discrepancy(hk: &StateSpace, hkm1: &StateSpace, points: &[Complex64]) -> Result<Vec<f64>> {
    par::map(points, |&s| Ok((hk.eval_tf(s)? - hkm1.eval_tf(s)?).norm()))
        .into_iter()
        .collect()
}

/// Index of the largest masked discrepancy among candidates that are not
/// excluded. Ties go to the lowest index (lowest frequency on an ascending
/// grid).
pub fn select_index(
    mags: &[f64],
    discrepancy: &[f64],
    anchor_mags: &[f64],
    beta: f64,
    epsilon: f64,
    excluded: &[bool],
) -> Result<usize> {
    let objective: Vec<f64> = par::map_range(mags.len(), |i| {
        if excluded[i] {
            f64::NAN
        } else {
            mask_product_mag(mags[i], anchor_mags, beta, epsilon) * discrepancy[i]
        }
    });
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in objective.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    match best {
        None => Err(Error::GridExhausted),
        Some((_, v)) if v <= 0.0 => Err(Error::DegenerateObjective),
        Some((i, _)) => Ok(i),
    }
}

/// Grid point maximizing `mask(σ; anchors) · |H_k(σ) - H_{k-1}(σ)|` over
/// the grid minus `exclude`.
pub fn select_point(
    hk: &StateSpace,
    hkm1: &StateSpace,
    anchors: &[Complex64],
    cfg: &GreedyConfig,
    exclude: &[Complex64],
) -> Result<Complex64> {
    let points = cfg.grid.points();
    let disc = discrepancy(hk, hkm1, &points)?;
    let excluded: Vec<bool> = points.iter().map(|p| exclude.contains(p)).collect();
    let anchor_mags: Vec<f64> = anchors.iter().map(|a| a.norm()).collect();
    let i = select_index(
        cfg.grid.omegas(),
        &disc,
        &anchor_mags,
        cfg.beta,
        cfg.epsilon,
        &excluded,
    )?;
    Ok(points[i])
}

/// `max_σ |H_k(σ) - H_{k-1}(σ)|` over the grid and whether it is within `tol`.
pub fn check_convergence(
    hk: &StateSpace,
    hkm1: &StateSpace,
    grid: &FrequencyGrid,
    tol: f64,
) -> Result<(f64, bool)> {
    convergence_on(hk, hkm1, &grid.points(), tol)
}

pub(crate) fn convergence_on(
    hk: &StateSpace,
    hkm1: &StateSpace,
    points: &[Complex64],
    tol: f64,
) -> Result<(f64, bool)> {
    let err = discrepancy(hk, hkm1, points)?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((err, err <= tol))
}

/// Indices of `count` grid points nearest to log-equidistant targets over the
/// grid range. Collisions move to the next-nearest unused point.
pub fn initial_indices(grid: &FrequencyGrid, count: usize) -> Result<Vec<usize>> {
    if count > grid.len() || count < 2 {
        return Err(Error::GridTooSmall {
            grid: grid.len(),
            requested: count,
        });
    }
    if !count.is_multiple_of(2) {
        return Err(Error::OddCount(count));
    }
    let omegas = grid.omegas();
    let (lo, hi) = (grid.omega_min().log10(), grid.omega_max().log10());
    let mut used = vec![false; omegas.len()];
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let target = 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64);
        let mut order: Vec<usize> = (0..omegas.len()).collect();
        order.sort_by(|&a, &b| {
            (omegas[a] - target)
                .abs()
                .total_cmp(&(omegas[b] - target).abs())
                .then(a.cmp(&b))
        });
        let pick = order
            .into_iter()
            .find(|&k| !used[k])
            .expect("grid has enough points");
        used[pick] = true;
        out.push(pick);
    }
    Ok(out)
}

/// The initial points themselves (`jω` on the grid).
pub fn initial_points(grid: &FrequencyGrid, count: usize) -> Result<Vec<Complex64>> {
    let pts = grid.points();
    Ok(initial_indices(grid, count)?
        .into_iter()
        .map(|i| pts[i])
        .collect())
}

/// Realizes an interpolant of the data, real or complex per configuration.
pub(crate) fn fit(ms: &MeasurementSet, cfg: &GreedyConfig) -> Result<StateSpace> {
    if cfg.real {
        loewner::fit_real(ms, cfg.d, cfg.rank_tol)
    } else {
        loewner::fit_complex(ms, cfg.d, cfg.rank_tol)
    }
}

/// Shared loop skeleton. `eval_points[i]` is where models are compared for
/// grid index `i` (`jω` or `e^{jωT_s}`); `measure` returns values for a batch
/// of grid indices, in order.
pub(crate) fn run_loop<M>(
    cfg: &GreedyConfig,
    eval_points: &[Complex64],
    mut measure: M,
    mut fit_model: impl FnMut(&MeasurementSet) -> Result<StateSpace>,
) -> Result<(StateSpace, GreedyHistory)>
where
    M: FnMut(&[usize]) -> Result<Vec<Complex64>>,
{
    cfg.validate()?;
    let omegas = cfg.grid.omegas();
    let mut measured = vec![false; omegas.len()];
    let mut order: Vec<usize> = Vec::new();
    let mut data = MeasurementSet::new(Vec::new(), Vec::new())?;

    let acquire = |idx: &[usize],
                       values: Vec<Complex64>,
                       data: &mut MeasurementSet,
                       measured: &mut Vec<bool>,
                       order: &mut Vec<usize>|
     -> Result<()> {
        if values.len() != idx.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} points",
                values.len(),
                idx.len()
            )));
        }
        for (&i, v) in idx.iter().zip(values) {
            data.push(eval_points[i], v)?;
            measured[i] = true;
            order.push(i);
        }
        Ok(())
    };

    let init = initial_indices(&cfg.grid, cfg.initial_count)?;
    let values = measure(&init)?;
    acquire(&init, values, &mut data, &mut measured, &mut order)?;

    let mut h_prev = fit_model(&data.prefix(cfg.initial_count - 2))?;
    let mut h_cur = fit_model(&data)?;
    let (mut err, mut converged) = convergence_on(&h_cur, &h_prev, eval_points, cfg.tol)?;
    let mut records = vec![IterationRecord {
        iteration: 0,
        added: init.iter().map(|&i| omegas[i]).collect(),
        err,
        order: h_cur.order(),
        total_points: data.len(),
    }];
    log::debug!("init: {} points, err {err:e}", data.len());

    let mut stop = StopReason::Converged;
    while !converged {
        if data.len() + 2 > cfg.max_points {
            stop = StopReason::MaxPointsReached;
            break;
        }
        let disc = discrepancy(&h_cur, &h_prev, eval_points)?;
        let n = order.len();
        let mut anchors = vec![omegas[order[n - 2]], omegas[order[n - 1]]];
        let mut excluded = measured.clone();
        let first = match select_index(omegas, &disc, &anchors, cfg.beta, cfg.epsilon, &excluded) {
            Ok(i) => i,
            Err(Error::GridExhausted) => {
                stop = StopReason::GridExhausted;
                break;
            }
            Err(Error::DegenerateObjective) => {
                stop = StopReason::DegenerateObjective;
                break;
            }
            Err(e) => return Err(e),
        };
        anchors.push(omegas[first]);
        excluded[first] = true;
        let second = match select_index(omegas, &disc, &anchors, cfg.beta, cfg.epsilon, &excluded)
        {
            Ok(i) => i,
            Err(Error::GridExhausted) => {
                stop = StopReason::GridExhausted;
                break;
            }
            Err(Error::DegenerateObjective) => {
                stop = StopReason::DegenerateObjective;
                break;
            }
            Err(e) => return Err(e),
        };
        let pair = [first, second];
        let values = measure(&pair)?;
        acquire(&pair, values, &mut data, &mut measured, &mut order)?;

        h_prev = h_cur;
        h_cur = fit_model(&data)?;
        (err, converged) = convergence_on(&h_cur, &h_prev, eval_points, cfg.tol)?;
        records.push(IterationRecord {
            iteration: records.len(),
            added: vec![omegas[first], omegas[second]],
            err,
            order: h_cur.order(),
            total_points: data.len(),
        });
        log::debug!(
            "iteration {}: {} points, order {}, err {err:e}",
            records.len() - 1,
            data.len(),
            h_cur.order()
        );
    }

    let history = GreedyHistory {
        records,
        stop,
        measurements: data,
        omegas: order.iter().map(|&i| omegas[i]).collect(),
    };
    Ok((h_cur, history))
}

/// Frequency-domain greedy identification.
pub fn greedy_loop<O: FrequencyOracle>(
    oracle: &mut O,
    cfg: &GreedyConfig,
) -> Result<(StateSpace, GreedyHistory)> {
    let points = cfg.grid.points();
    run_loop(
        cfg,
        &points,
        |idx| idx.iter().map(|&i| oracle.measure(points[i])).collect(),
        |ms| fit(ms, cfg),
    )
}
