//! Loewner pencils built from partitioned frequency data and the
//! interpolating realizations they define.
//!
//! Rows of the pencil are indexed by the right points `μ_i`, columns by the
//! left points `λ_j`:
//!
//! ```text
//! L[i, j]  = (H(λ_j) - H(μ_i)) / (λ_j - μ_i)
//! Ls[i, j] = (λ_j H(λ_j) - μ_i H(μ_i)) / (λ_j - μ_i)
//! ```
//!
//! The interpolant is `W (Ls - s L)^{-1} V + D` with `V_i = H(μ_i)` and
//! `W_j = H(λ_j)` (both shifted by `D`), i.e. the descriptor realization
//! `E = -L`, `A = -(Ls - D 1 1^T)`, `B = V - D 1`, `C = W - D 1^T`.

use std::cmp::Ordering;
use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lti::{StateSpace, RCOND_SINGULAR};
use crate::lu::BandLu;
use crate::par;

/// Default relative singular-value cut-off for [`compress_realize`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Residual imaginary part (relative) above which [`realify`] refuses.
pub const REALIFY_REJECT: f64 = 1e-6;

/// Interpolation points, measured values and an optional left/right split.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    points: Vec<Complex64>,
    values: Vec<Complex64>,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl MeasurementSet {
    pub fn new(points: Vec<Complex64>, values: Vec<Complex64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(Error::InvalidConfig(format!(
                        "interpolation point {} appears twice",
                        points[i]
                    )));
                }
            }
        }
        Ok(MeasurementSet {
            points,
            values,
            left: Vec::new(),
            right: Vec::new(),
        })
    }

    /// Builds a set with an explicit partition.
    pub fn with_partition(
        points: Vec<Complex64>,
        values: Vec<Complex64>,
        left: Vec<usize>,
        right: Vec<usize>,
    ) -> Result<Self> {
        let mut ms = Self::new(points, values)?;
        let mut seen = vec![false; ms.len()];
        for &i in left.iter().chain(&right) {
            if i >= ms.len() || seen[i] {
                return Err(Error::InvalidConfig(
                    "partition must be disjoint and within range".into(),
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("partition must cover every point".into()));
        }
        ms.left = left;
        ms.right = right;
        Ok(ms)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn is_partitioned(&self) -> bool {
        !self.left.is_empty() || !self.right.is_empty()
    }

    /// Left data `(λ_j, H(λ_j))`.
    pub fn left(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.left.iter().map(|&i| (self.points[i], self.values[i]))
    }

    /// Right data `(μ_i, H(μ_i))`.
    pub fn right(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.right.iter().map(|&i| (self.points[i], self.values[i]))
    }

    /// Appends a measurement, dropping any existing partition.
    pub fn push(&mut self, point: Complex64, value: Complex64) -> Result<()> {
        if self.points.contains(&point) {
            return Err(Error::InvalidConfig(format!(
                "interpolation point {point} appears twice"
            )));
        }
        self.points.push(point);
        self.values.push(value);
        self.left.clear();
        self.right.clear();
        Ok(())
    }

    /// First `count` measurements in insertion order, unpartitioned.
    pub fn prefix(&self, count: usize) -> MeasurementSet {
        let count = count.min(self.len());
        MeasurementSet {
            points: self.points[..count].to_vec(),
            values: self.values[..count].to_vec(),
            left: Vec::new(),
            right: Vec::new(),
        }
    }

    /// Interlacing split: sort by imaginary part (ties by real part), then
    /// odd ranks go left and even ranks go right.
    pub fn split_points(&self) -> Result<MeasurementSet> {
        if !self.len().is_multiple_of(2) {
            return Err(Error::OddCount(self.len()));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (self.points[a], self.points[b]);
            pa.im
                .partial_cmp(&pb.im)
                .unwrap_or(Ordering::Equal)
                .then(pa.re.partial_cmp(&pb.re).unwrap_or(Ordering::Equal))
        });
        let left = order.iter().step_by(2).copied().collect();
        let right = order.iter().skip(1).step_by(2).copied().collect();
        Ok(MeasurementSet {
            points: self.points.clone(),
            values: self.values.clone(),
            left,
            right,
        })
    }

    /// Adds `(σ̄, conj H(σ))` right after every point on the same side of the
    /// partition, so each side is closed under conjugation and its
    /// coordinates come in adjacent conjugate pairs (the layout [`realify`]
    /// expects).
    pub fn conjugate_closure(&self) -> Result<MeasurementSet> {
        if !self.is_partitioned() {
            return Err(Error::InvalidConfig(
                "conjugate closure needs a partitioned set".into(),
            ));
        }
        let mut points = Vec::with_capacity(2 * self.len());
        let mut values = Vec::with_capacity(2 * self.len());
        let mut side = |idx: &[usize]| -> Result<Vec<usize>> {
            let mut out = Vec::with_capacity(2 * idx.len());
            for &i in idx {
                let (p, v) = (self.points[i], self.values[i]);
                if p.im == 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "real interpolation point {p} cannot be paired with its conjugate"
                    )));
                }
                out.push(points.len());
                points.push(p);
                values.push(v);
                out.push(points.len());
                points.push(p.conj());
                values.push(v.conj());
            }
            Ok(out)
        };
        let left = side(&self.left)?;
        let right = side(&self.right)?;
        MeasurementSet::with_partition(points, values, left, right)
    }
}

/// Loewner matrix, shifted Loewner matrix and value vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LoewnerPencil {
    pub l: DMatrix<Complex64>,
    pub ls: DMatrix<Complex64>,
    /// Right values `H(μ_i)` as a column.
    pub v: DVector<Complex64>,
    /// Left values `H(λ_j)` as a row.
    pub w: DVector<Complex64>,
    pub d: Complex64,
}

impl LoewnerPencil {
    pub fn size(&self) -> (usize, usize) {
        self.l.shape()
    }

    /// Full-order realization `(-L, -(Ls - D11ᵀ), V - D1, W - D1ᵀ, D)`
    /// without any rank check.
    pub fn to_descriptor(&self) -> StateSpace {
        let d = self.d;
        StateSpace {
            e: -self.l.clone(),
            a: -self.ls.map(|x| x - d),
            b: self.v.map(|x| x - d),
            c: self.w.map(|x| x - d),
            d,
            domain: crate::lti::Domain::Continuous,
            sample_time: None,
        }
    }
}

/// Builds the pencil from a partitioned set.
pub fn build_pencil(ms: &MeasurementSet, d: Complex64) -> Result<LoewnerPencil> {
    if ms.is_empty() {
        return Err(Error::EmptyData);
    }
    if !ms.is_partitioned() {
        return Err(Error::InvalidConfig("measurement set is not partitioned".into()));
    }
    let left: Vec<(Complex64, Complex64)> = ms.left().collect();
    let right: Vec<(Complex64, Complex64)> = ms.right().collect();
    if left.len() != right.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} left points but {} right points",
            left.len(),
            right.len()
        )));
    }
    for &(lam, _) in &left {
        for &(mu, _) in &right {
            if lam == mu {
                return Err(Error::CoincidentPoints { lambda: lam, mu });
            }
        }
    }
    let n = left.len();
    let entries = par::map_range(n * n, |k| {
        let (i, j) = (k % n, k / n);
        let (lam, wj) = left[j];
        let (mu, vi) = right[i];
        let den = lam - mu;
        ((wj - vi) / den, (lam * wj - mu * vi) / den)
    });
    let l = DMatrix::from_iterator(n, n, entries.iter().map(|e| e.0));
    let ls = DMatrix::from_iterator(n, n, entries.iter().map(|e| e.1));
    Ok(LoewnerPencil {
        l,
        ls,
        v: DVector::from_iterator(n, right.iter().map(|r| r.1)),
        w: DVector::from_iterator(n, left.iter().map(|l| l.1)),
        d,
    })
}

/// Interpolating realization of a pencil whose Loewner matrix is
/// nonsingular. Data that is a pure feed-through yields an order-zero model.
pub fn realize(p: &LoewnerPencil) -> Result<StateSpace> {
    let d = p.d;
    if p.v.iter().chain(p.w.iter()).all(|&x| x == d) {
        return Ok(StateSpace::feedthrough(d));
    }
    let lu = BandLu::factor(&p.l, p.l.nrows(), p.l.nrows());
    let rcond = lu.rcond();
    if lu.is_singular() || rcond < RCOND_SINGULAR {
        return Err(Error::SingularLoewner(rcond));
    }
    Ok(p.to_descriptor())
}

/// Singular values plus leading left/right singular vectors of `m`.
fn svd_parts(m: DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>, DMatrix<Complex64>) {
    let svd = m.svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let u = svd.u.expect("left singular vectors requested");
    let v = svd.v_t.expect("right singular vectors requested").adjoint();
    (sv, u, v)
}

fn numerical_rank(sv: &[f64], rank_tol: f64) -> usize {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// Projects a descriptor model onto the dominant singular subspaces of
/// `[E, A]` (left) and `[E; A]` (right). The order is the numerical rank at
/// `rank_tol` relative to the largest singular value.
pub fn compress_model(m: &StateSpace, rank_tol: f64) -> StateSpace {
    let n = m.order();
    if n == 0 {
        return m.clone();
    }
    let mut wide = DMatrix::zeros(n, 2 * n);
    wide.columns_mut(0, n).copy_from(&m.e);
    wide.columns_mut(n, n).copy_from(&m.a);
    let mut tall = DMatrix::zeros(2 * n, n);
    tall.rows_mut(0, n).copy_from(&m.e);
    tall.rows_mut(n, n).copy_from(&m.a);
    let (sv_w, u_w, _) = svd_parts(wide);
    let (sv_t, _, v_t) = svd_parts(tall);
    let r = numerical_rank(&sv_w, rank_tol).min(numerical_rank(&sv_t, rank_tol));
    if r == 0 {
        let mut out = StateSpace::feedthrough(m.d);
        out.domain = m.domain;
        out.sample_time = m.sample_time;
        return out;
    }
    let y = u_w.columns(0, r).into_owned();
    let x = v_t.columns(0, r).into_owned();
    let yh = y.adjoint();
    StateSpace {
        e: &yh * &m.e * &x,
        a: &yh * &m.a * &x,
        b: &yh * &m.b,
        c: x.transpose() * &m.c,
        d: m.d,
        domain: m.domain,
        sample_time: m.sample_time,
    }
}

/// Rank-revealing realization that tolerates a singular Loewner matrix.
pub fn compress_realize(p: &LoewnerPencil, rank_tol: f64) -> Result<StateSpace> {
    if p.l.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    Ok(compress_model(&p.to_descriptor(), rank_tol))
}

/// Numerical rank of the Loewner matrix at a relative tolerance.
pub fn loewner_rank(p: &LoewnerPencil, rank_tol: f64) -> usize {
    let sv: Vec<f64> = p.l.singular_values().iter().copied().collect();
    numerical_rank(&sv, rank_tol)
}

/// Turns a model whose state coordinates come in adjacent conjugate pairs
/// (as produced from [`MeasurementSet::conjugate_closure`]) into an
/// equivalent real model via the unitary transform
/// `Q = blockdiag([[1, j], [1, -j]] / √2)` applied as `(Qᴴ E Q, Qᴴ A Q, Qᴴ B, C Q)`.
pub fn realify(m: &StateSpace) -> Result<StateSpace> {
    if m.is_real() {
        return Ok(m.clone());
    }
    let n = m.order();
    if !n.is_multiple_of(2) {
        return Err(Error::NotConjugateClosed(f64::INFINITY));
    }
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let jh = Complex64::new(0.0, FRAC_1_SQRT_2);
    let mut q = DMatrix::zeros(n, n);
    for k in (0..n).step_by(2) {
        q[(k, k)] = h;
        q[(k, k + 1)] = jh;
        q[(k + 1, k)] = h;
        q[(k + 1, k + 1)] = -jh;
    }
    let qh = q.adjoint();
    let e = &qh * &m.e * &q;
    let a = &qh * &m.a * &q;
    let b = &qh * &m.b;
    let c = q.transpose() * &m.c;

    let scale = e
        .iter()
        .chain(a.iter())
        .chain(b.iter())
        .chain(c.iter())
        .map(|v| v.norm())
        .fold(m.d.norm(), f64::max);
    let resid = e
        .iter()
        .chain(a.iter())
        .chain(b.iter())
        .chain(c.iter())
        .map(|v| v.im.abs())
        .fold(m.d.im.abs(), f64::max);
    let rel = if scale > 0.0 { resid / scale } else { 0.0 };
    if rel > REALIFY_REJECT {
        return Err(Error::NotConjugateClosed(rel));
    }
    let re = |v: &Complex64| Complex64::new(v.re, 0.0);
    Ok(StateSpace {
        e: e.map(|v| re(&v)),
        a: a.map(|v| re(&v)),
        b: b.map(|v| re(&v)),
        c: c.map(|v| re(&v)),
        d: re(&m.d),
        domain: m.domain,
        sample_time: m.sample_time,
    })
}

/// Complex interpolant of the data: interlacing split, pencil, compression.
pub fn fit_complex(ms: &MeasurementSet, d: Complex64, rank_tol: f64) -> Result<StateSpace> {
    let split = ms.split_points()?;
    compress_realize(&build_pencil(&split, d)?, rank_tol)
}

/// Real interpolant of data measured at `+jω` (or on the upper half of the
/// unit circle): interlacing split, conjugate closure on each side, pencil,
/// realification, compression.
pub fn fit_real(ms: &MeasurementSet, d: Complex64, rank_tol: f64) -> Result<StateSpace> {
    if ms.is_empty() {
        return Err(Error::EmptyData);
    }
    let closed = ms.split_points()?.conjugate_closure()?;
    let pencil = build_pencil(&closed, d)?;
    let real = realify(&pencil.to_descriptor())?;
    Ok(compress_model(&real, rank_tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::make_random_stable;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn j(w: f64) -> Complex64 {
        c(0.0, w)
    }

    fn sampled(m: &StateSpace, pts: &[Complex64]) -> MeasurementSet {
        let vals = m.eval_many(pts).unwrap();
        MeasurementSet::new(pts.to_vec(), vals).unwrap()
    }

    #[test]
    fn interlacing_split() {
        let ms = MeasurementSet::new(vec![j(1.0), j(2.0), j(3.0), j(4.0)], vec![c(0.0, 0.0); 4])
            .unwrap()
            .split_points()
            .unwrap();
        let left: Vec<_> = ms.left().map(|p| p.0).collect();
        let right: Vec<_> = ms.right().map(|p| p.0).collect();
        assert_eq!(left, vec![j(1.0), j(3.0)]);
        assert_eq!(right, vec![j(2.0), j(4.0)]);

        let shuffled =
            MeasurementSet::new(vec![j(4.0), j(1.0), j(3.0), j(2.0)], vec![c(0.0, 0.0); 4])
                .unwrap()
                .split_points()
                .unwrap();
        assert_eq!(shuffled.left().map(|p| p.0).collect::<Vec<_>>(), left);
        assert_eq!(shuffled.right().map(|p| p.0).collect::<Vec<_>>(), right);
    }

    #[test]
    fn odd_split_rejected() {
        let ms = MeasurementSet::new(vec![j(1.0), j(2.0), j(3.0)], vec![c(0.0, 0.0); 3]).unwrap();
        assert!(matches!(ms.split_points(), Err(Error::OddCount(3))));
    }

    #[test]
    fn duplicate_points_rejected() {
        assert!(MeasurementSet::new(vec![j(1.0), j(1.0)], vec![c(0.0, 0.0); 2]).is_err());
        assert!(MeasurementSet::new(vec![j(1.0)], vec![]).is_err());
    }

    fn first_order_pencil() -> LoewnerPencil {
        // H(s) = 1/(s+1), λ = 1, μ = 2
        let ms = MeasurementSet::with_partition(
            vec![c(1.0, 0.0), c(2.0, 0.0)],
            vec![c(0.5, 0.0), c(1.0 / 3.0, 0.0)],
            vec![0],
            vec![1],
        )
        .unwrap();
        build_pencil(&ms, c(0.0, 0.0)).unwrap()
    }

    #[test]
    fn hand_worked_pencil() {
        let p = first_order_pencil();
        assert!((p.l[(0, 0)] - c(-1.0 / 6.0, 0.0)).norm() < 1e-15);
        assert!((p.ls[(0, 0)] - c(1.0 / 6.0, 0.0)).norm() < 1e-15);
        let m = realize(&p).unwrap();
        assert!((m.eval_tf(c(1.0, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-12);
        assert!((m.eval_tf(c(2.0, 0.0)).unwrap() - c(1.0 / 3.0, 0.0)).norm() < 1e-12);
        // closed form 1/(s+1) elsewhere
        let s = c(0.0, 3.0);
        assert!((m.eval_tf(s).unwrap() - 1.0 / (s + 1.0)).norm() < 1e-12);
    }

    #[test]
    fn constant_data_zero_loewner() {
        let k = c(2.5, -0.5);
        let ms = MeasurementSet::with_partition(vec![j(1.0), j(2.0)], vec![k, k], vec![0], vec![1])
            .unwrap();
        let p = build_pencil(&ms, k).unwrap();
        assert_eq!(p.l[(0, 0)], c(0.0, 0.0));
        let m = realize(&p).unwrap();
        assert_eq!(m.order(), 0);
        assert_eq!(m.b.len(), 0);
        assert_eq!(m.eval_tf(j(1.0)).unwrap(), k);
        assert_eq!(m.eval_tf(j(7.0)).unwrap(), k);
    }

    #[test]
    fn coincident_points_rejected() {
        let ms = MeasurementSet {
            points: vec![j(1.0), j(1.0)],
            values: vec![c(1.0, 0.0), c(2.0, 0.0)],
            left: vec![0],
            right: vec![1],
        };
        assert!(matches!(
            build_pencil(&ms, c(0.0, 0.0)),
            Err(Error::CoincidentPoints { .. })
        ));
    }

    #[test]
    fn shifted_loewner_identities() {
        let m = make_random_stable(4, 3);
        let pts: Vec<Complex64> = [0.3, 0.9, 2.0, 4.5, 8.0, 20.0].iter().map(|&w| j(w)).collect();
        let ms = sampled(&m, &pts).split_points().unwrap();
        let p = build_pencil(&ms, c(0.0, 0.0)).unwrap();
        let left: Vec<_> = ms.left().collect();
        let right: Vec<_> = ms.right().collect();
        for (i, &(mu, hmu)) in right.iter().enumerate() {
            for (jj, &(lam, hlam)) in left.iter().enumerate() {
                let a = p.ls[(i, jj)] - mu * p.l[(i, jj)];
                let b = p.ls[(i, jj)] - lam * p.l[(i, jj)];
                assert!((a - hlam).norm() <= 1e-12 * (1.0 + hlam.norm()));
                assert!((b - hmu).norm() <= 1e-12 * (1.0 + hmu.norm()));
                assert!(
                    (p.l[(i, jj)] * (lam - mu) - (hlam - hmu)).norm() <= 1e-12 * (1.0 + hlam.norm())
                );
            }
        }
    }

    #[test]
    fn rank_deficient_loewner_rejected_by_realize() {
        let m = make_random_stable(2, 5);
        let pts: Vec<Complex64> = (0..8).map(|k| j(0.2 * 2f64.powi(k))).collect();
        let p = build_pencil(&sampled(&m, &pts).split_points().unwrap(), c(0.0, 0.0)).unwrap();
        assert!(matches!(realize(&p), Err(Error::SingularLoewner(_))));
        let r = compress_realize(&p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.order(), 2);
    }

    #[test]
    fn zero_data_gives_order_zero() {
        let pts: Vec<Complex64> = (1..=6).map(|k| j(k as f64)).collect();
        let ms = MeasurementSet::new(pts, vec![c(0.0, 0.0); 6]).unwrap();
        let p = build_pencil(&ms.split_points().unwrap(), c(0.0, 0.0)).unwrap();
        let r = compress_realize(&p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.order(), 0);
        assert_eq!(r.d, c(0.0, 0.0));
        let empty = LoewnerPencil {
            l: DMatrix::zeros(0, 0),
            ls: DMatrix::zeros(0, 0),
            v: DVector::zeros(0),
            w: DVector::zeros(0),
            d: c(0.0, 0.0),
        };
        assert!(matches!(compress_realize(&empty, 1e-10), Err(Error::EmptyData)));
    }

    #[test]
    fn realify_conjugate_pairs() {
        let m = make_random_stable(8, 12);
        let pts: Vec<Complex64> = [0.4, 1.1, 3.0, 7.5].iter().map(|&w| j(w)).collect();
        let closed = sampled(&m, &pts)
            .split_points()
            .unwrap()
            .conjugate_closure()
            .unwrap();
        let full = build_pencil(&closed, c(0.0, 0.0)).unwrap().to_descriptor();
        let real = realify(&full).unwrap();
        assert!(real.is_real());
        for (&s, &h) in closed.points().iter().zip(closed.values()) {
            assert!((real.eval_tf(s).unwrap() - h).norm() <= 1e-9 * h.norm());
        }
        let probe: Vec<Complex64> = (0..100).map(|k| j(0.1 * 1.07f64.powi(k))).collect();
        for &s in &probe {
            let a = real.eval_tf(s).unwrap();
            let b = full.eval_tf(s).unwrap();
            assert!((a.norm() - b.norm()).abs() <= 1e-8 * b.norm(), "{a} vs {b}");
        }
        assert_eq!(realify(&real).unwrap(), real);
    }

    #[test]
    fn realify_rejects_unpaired_model() {
        let m = make_random_stable(3, 1);
        let pts: Vec<Complex64> = [0.4, 1.1, 3.0, 7.5, 9.0, 20.0].iter().map(|&w| j(w)).collect();
        let p = build_pencil(&sampled(&m, &pts).split_points().unwrap(), c(0.0, 0.0)).unwrap();
        assert!(matches!(
            realify(&p.to_descriptor()),
            Err(Error::NotConjugateClosed(_))
        ));
    }
}
