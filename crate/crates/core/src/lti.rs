//! Descriptor state-space models, transfer-function evaluation, discrete-time
//! simulation and the benchmark plants used throughout the crate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lu::{bandwidth, BandLu};
use crate::par;

/// Threshold on the reciprocal condition estimate of `sE - A`.
pub const RCOND_SINGULAR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Continuous,
    Discrete,
}

/// SISO descriptor realization `E x' = A x + B u`, `y = C x + D u`.
///
/// Entries are stored as complex numbers; `is_real` reports whether all
/// imaginary parts are exactly zero. Order zero is allowed and describes a
/// pure feed-through.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub e: DMatrix<Complex64>,
    pub a: DMatrix<Complex64>,
    pub b: DVector<Complex64>,
    pub c: DVector<Complex64>,
    pub d: Complex64,
    pub domain: Domain,
    pub sample_time: Option<f64>,
}

impl StateSpace {
    pub fn new(
        e: DMatrix<Complex64>,
        a: DMatrix<Complex64>,
        b: DVector<Complex64>,
        c: DVector<Complex64>,
        d: Complex64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || e.nrows() != n || e.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "E is {}x{}, A is {}x{}",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {n}",
                b.len()
            )));
        }
        if c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "C has {} columns, expected {n}",
                c.len()
            )));
        }
        Ok(StateSpace {
            e,
            a,
            b,
            c,
            d,
            domain: Domain::Continuous,
            sample_time: None,
        })
    }

    /// Real-valued model from real matrices.
    pub fn from_real(
        e: &DMatrix<f64>,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
        d: f64,
    ) -> Result<Self> {
        let cx = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
        let cv = |m: &DVector<f64>| m.map(|v| Complex64::new(v, 0.0));
        Self::new(cx(e), cx(a), cv(b), cv(c), Complex64::new(d, 0.0))
    }

    /// Order-zero model `H(s) = d`.
    pub fn feedthrough(d: Complex64) -> Self {
        StateSpace {
            e: DMatrix::zeros(0, 0),
            a: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            c: DVector::zeros(0),
            d,
            domain: Domain::Continuous,
            sample_time: None,
        }
    }

    pub fn discrete(mut self, sample_time: f64) -> Self {
        self.domain = Domain::Discrete;
        self.sample_time = Some(sample_time);
        self
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_real(&self) -> bool {
        let real = |v: &Complex64| v.im == 0.0;
        self.e.iter().all(real)
            && self.a.iter().all(real)
            && self.b.iter().all(real)
            && self.c.iter().all(real)
            && real(&self.d)
    }

    /// Joint lower/upper bandwidth of `E` and `A`.
    pub fn pencil_bandwidth(&self) -> (usize, usize) {
        let (el, eu) = bandwidth(&self.e);
        let (al, au) = bandwidth(&self.a);
        (el.max(al), eu.max(au))
    }

    /// `C (sE - A)^{-1} B + D` via a pivoted LU solve.
    pub fn eval_tf(&self, s: Complex64) -> Result<Complex64> {
        self.eval_banded(s, self.pencil_bandwidth())
    }

    fn eval_banded(&self, s: Complex64, (kl, ku): (usize, usize)) -> Result<Complex64> {
        let n = self.order();
        if n == 0 {
            return Ok(self.d);
        }
        let lu = BandLu::factor_with(n, kl, ku, |i, j| self.e[(i, j)] * s - self.a[(i, j)]);
        if lu.is_singular() || lu.rcond() < RCOND_SINGULAR {
            return Err(Error::SingularPencil(s));
        }
        let mut x: Vec<Complex64> = self.b.iter().copied().collect();
        lu.solve_in_place(&mut x);
        let y: Complex64 = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        Ok(y + self.d)
    }

    /// Evaluates the transfer function at every point, in parallel when the
    /// `parallel` feature is enabled.
    pub fn eval_many(&self, points: &[Complex64]) -> Result<Vec<Complex64>> {
        let band = self.pencil_bandwidth();
        par::map(points, |&s| self.eval_banded(s, band))
            .into_iter()
            .collect()
    }

    /// Sequential counterpart of [`StateSpace::eval_many`].
    pub fn eval_many_sequential(&self, points: &[Complex64]) -> Result<Vec<Complex64>> {
        let band = self.pencil_bandwidth();
        points.iter().map(|&s| self.eval_banded(s, band)).collect()
    }

    /// Runs `x_{p+1} = E^{-1}(A x_p + B u_p)`, `y_p = C x_p + D u_p`.
    pub fn simulate_discrete(
        &self,
        inputs: &[Complex64],
        x0: Option<&DVector<Complex64>>,
    ) -> Result<Vec<Complex64>> {
        if self.domain != Domain::Discrete {
            return Err(Error::InvalidConfig(
                "simulate_discrete needs a discrete-time model".into(),
            ));
        }
        let n = self.order();
        if n == 0 {
            return Ok(inputs.iter().map(|u| self.d * u).collect());
        }
        let lu = BandLu::factor_auto(&self.e);
        if lu.is_singular() || lu.rcond() < RCOND_SINGULAR {
            return Err(Error::SingularE);
        }
        // Pre-solve E^{-1}A and E^{-1}B once.
        let mut ea = DMatrix::zeros(n, n);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            col.iter_mut()
                .zip(self.a.column(j).iter())
                .for_each(|(d, s)| *d = *s);
            lu.solve_in_place(&mut col);
            ea.column_mut(j)
                .iter_mut()
                .zip(&col)
                .for_each(|(d, s)| *d = *s);
        }
        let mut eb: Vec<Complex64> = self.b.iter().copied().collect();
        lu.solve_in_place(&mut eb);
        let eb = DVector::from_vec(eb);

        let mut x = match x0 {
            Some(x0) if x0.len() != n => {
                return Err(Error::DimensionMismatch(format!(
                    "initial state has length {}, expected {n}",
                    x0.len()
                )))
            }
            Some(x0) => x0.clone(),
            None => DVector::zeros(n),
        };
        let mut out = Vec::with_capacity(inputs.len());
        for &u in inputs {
            out.push(self.c.dot(&x) + self.d * u);
            x = &ea * &x + &eb * u;
        }
        Ok(out)
    }

    /// Eigenvalues of `E^{-1} A` for models with nonsingular `E`.
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        let n = self.order();
        if n == 0 {
            return Ok(Vec::new());
        }
        let lu = self.e.clone().lu();
        let ea = lu.solve(&self.a).ok_or(Error::SingularE)?;
        let schur = nalgebra::Schur::new(ea);
        let (_, t) = schur.unpack();
        Ok((0..n).map(|i| t[(i, i)]).collect())
    }

    /// Largest real part (continuous) or modulus (discrete) of the poles.
    pub fn stability_margin(&self) -> Result<f64> {
        let poles = self.poles()?;
        Ok(match self.domain {
            Domain::Continuous => poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max),
            Domain::Discrete => poles.iter().map(|p| p.norm()).fold(0.0, f64::max),
        })
    }
}

/// Logarithmically spaced points `jω` on `[ω_min, ω_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
}

impl FrequencyGrid {
    pub fn logspace(w_min: f64, w_max: f64, m: usize) -> Result<Self> {
        if !(w_min > 0.0 && w_max > w_min && w_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "frequency range [{w_min}, {w_max}] must satisfy 0 < w_min < w_max"
            )));
        }
        if m < 2 {
            return Err(Error::InvalidConfig("grid needs at least two points".into()));
        }
        let (l0, l1) = (w_min.log10(), w_max.log10());
        let mut omegas: Vec<f64> = (0..m)
            .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (m - 1) as f64))
            .collect();
        omegas[0] = w_min;
        omegas[m - 1] = w_max;
        Ok(FrequencyGrid { omegas })
    }

    /// Grid from explicit, strictly increasing, nonnegative frequencies.
    pub fn from_omegas(omegas: Vec<f64>) -> Result<Self> {
        if omegas.len() < 2 {
            return Err(Error::InvalidConfig("grid needs at least two points".into()));
        }
        if omegas.windows(2).any(|w| w[1] <= w[0]) || omegas[0] < 0.0 {
            return Err(Error::InvalidConfig(
                "grid frequencies must be nonnegative and strictly increasing".into(),
            ));
        }
        Ok(FrequencyGrid { omegas })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn omega_min(&self) -> f64 {
        self.omegas[0]
    }

    pub fn omega_max(&self) -> f64 {
        self.omegas[self.omegas.len() - 1]
    }

    /// Points `jω` on the imaginary axis.
    pub fn points(&self) -> Vec<Complex64> {
        self.omegas.iter().map(|&w| Complex64::new(0.0, w)).collect()
    }
}

/// Maps `ω` to `e^{jωT_s}` on the unit circle.
pub fn bilinear_freq_map(omega: f64, sample_time: f64) -> Result<Complex64> {
    if omega < 0.0 || omega * sample_time >= PI {
        return Err(Error::AboveNyquist { omega, sample_time });
    }
    Ok(Complex64::from_polar(1.0, omega * sample_time))
}

/// The order-1006 "FOM" benchmark: three lightly damped oscillators at
/// 100, 200 and 400 rad/s plus 1000 real poles at -1..-1000.
pub fn make_penzl() -> StateSpace {
    let n = 1006;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (k, sigma) in [100.0, 200.0, 400.0].into_iter().enumerate() {
        let i = 2 * k;
        a[(i, i)] = -1.0;
        a[(i + 1, i + 1)] = -1.0;
        a[(i, i + 1)] = sigma;
        a[(i + 1, i)] = -sigma;
    }
    for k in 0..1000 {
        a[(6 + k, 6 + k)] = -(k as f64 + 1.0);
    }
    let b = DVector::from_fn(n, |i, _| if i < 6 { 10.0 } else { 1.0 });
    let e = DMatrix::identity(n, n);
    StateSpace::from_real(&e, &a, &b, &b, 0.0).expect("penzl dimensions are consistent")
}

/// Draws the modal data of a random stable real plant: real poles and
/// complex pairs with natural frequencies log-uniform on `[0.5, 50]` rad/s.
/// Returns the real block-diagonal state matrix.
/// Modal block with natural frequencies stratified over
/// `[10^-0.3, 10^1.7]`: mode `k` of `m` draws from the middle half of the
/// `k`-th log bin, so no two modes cluster.
fn random_modal_block(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && rng.random_bool(0.7) { 2 } else { 1 };
        sizes.push(size);
        i += size;
    }
    let (lo, span) = (-0.3, 2.0);
    let width = span / sizes.len() as f64;
    let mut a = DMatrix::zeros(n, n);
    let mut i = 0;
    for (k, &size) in sizes.iter().enumerate() {
        let wn = 10f64.powf(lo + width * (k as f64 + rng.random_range(0.25..0.75)));
        if size == 2 {
            let zeta = rng.random_range(0.05..0.5);
            let re = -zeta * wn;
            let im = wn * (1.0 - zeta * zeta).sqrt();
            a[(i, i)] = re;
            a[(i + 1, i + 1)] = re;
            a[(i, i + 1)] = im;
            a[(i + 1, i)] = -im;
        } else {
            a[(i, i)] = -wn;
        }
        i += size;
    }
    a
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Random real stable continuous-time plant with `E = I`, deterministic in
/// `seed`. The modal form is hidden behind a random orthogonal similarity.
pub fn make_random_stable(n: usize, seed: u64) -> StateSpace {
    assert!(n >= 1, "order must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modal = random_modal_block(n, &mut rng);
    let q = random_orthogonal(n, &mut rng);
    let a = &q * modal * q.transpose();
    let b = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0) * sign(&mut rng));
    let c = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0) * sign(&mut rng));
    let b = &q * b;
    let c = &q * c;
    StateSpace::from_real(&DMatrix::identity(n, n), &a, &b, &c, 0.0)
        .expect("random plant dimensions are consistent")
}

/// Random real stable discrete-time plant: the continuous modal poles are
/// mapped through `z = e^{p T_s}`, so every pole lies strictly inside the
/// unit disk.
pub fn make_random_stable_discrete(n: usize, seed: u64, sample_time: f64) -> StateSpace {
    assert!(n >= 1, "order must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modal = random_modal_block(n, &mut rng);
    let disc = discretize_modal_block(&modal, sample_time);
    let q = random_orthogonal(n, &mut rng);
    let a = &q * disc * q.transpose();
    let b = &q * DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0) * sign(&mut rng));
    let c = &q * DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0) * sign(&mut rng));
    StateSpace::from_real(&DMatrix::identity(n, n), &a, &b, &c, 0.0)
        .expect("random plant dimensions are consistent")
        .discrete(sample_time)
}

/// Exact exponential of a real block-diagonal modal matrix built from 1x1
/// real poles and 2x2 blocks `[[re, im], [-im, re]]`.
pub fn discretize_modal_block(modal: &DMatrix<f64>, sample_time: f64) -> DMatrix<f64> {
    let n = modal.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && modal[(i, i + 1)] != 0.0 {
            let re = modal[(i, i)];
            let im = modal[(i, i + 1)];
            let r = (re * sample_time).exp();
            let (s, c) = (im * sample_time).sin_cos();
            out[(i, i)] = r * c;
            out[(i + 1, i + 1)] = r * c;
            out[(i, i + 1)] = r * s;
            out[(i + 1, i)] = -r * s;
            i += 2;
        } else {
            out[(i, i)] = (modal[(i, i)] * sample_time).exp();
            i += 1;
        }
    }
    out
}

/// Order-12 lightly damped discrete plant with six resonances between
/// 2 and 500 rad/s, obtained from continuous modal pairs via `z = e^{p T_s}`.
pub fn make_resonant12(sample_time: f64) -> StateSpace {
    const PAIRS: [(f64, f64); 6] = [
        (-8.0, 2.0),
        (-10.0, 15.0),
        (-12.0, 40.0),
        (-15.0, 90.0),
        (-20.0, 200.0),
        (-30.0, 500.0),
    ];
    let n = 2 * PAIRS.len();
    let mut modal = DMatrix::zeros(n, n);
    for (k, &(re, im)) in PAIRS.iter().enumerate() {
        let i = 2 * k;
        modal[(i, i)] = re;
        modal[(i + 1, i + 1)] = re;
        modal[(i, i + 1)] = im;
        modal[(i + 1, i)] = -im;
    }
    let a = discretize_modal_block(&modal, sample_time);
    let b = DVector::from_element(n, 1.0);
    let c = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { 0.5 });
    StateSpace::from_real(&DMatrix::identity(n, n), &a, &b, &c, 0.0)
        .expect("benchmark dimensions are consistent")
        .discrete(sample_time)
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}
