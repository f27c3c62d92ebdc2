//! Band-aware LU factorization with partial pivoting for complex matrices.
//!
//! Dense matrices are the special case `lower = upper = n - 1`. The
//! factorization keeps row swaps and multipliers in elimination order, as in
//! LAPACK's `gbtrf`, so that both `A x = b` and `A^H x = b` can be solved. The
//! latter feeds Hager's 1-norm estimator for the reciprocal condition number.

use nalgebra::DMatrix;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Lower and upper bandwidth of a square matrix.
pub fn bandwidth(m: &DMatrix<Complex64>) -> (usize, usize) {
    let n = m.nrows();
    let (mut kl, mut ku) = (0, 0);
    for j in 0..n {
        for i in 0..n {
            if m[(i, j)] != ZERO {
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
    }
    (kl, ku)
}

#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    // upper bandwidth of U after fill-in: kl + ku
    ku_fill: usize,
    // row i holds columns i..=i+ku_fill
    upper: Vec<Complex64>,
    // column j holds multipliers for rows j+1..=j+kl
    lower: Vec<Complex64>,
    piv: Vec<usize>,
    anorm: f64,
    singular: bool,
}

impl BandLu {
    /// Factor a square matrix using the supplied bandwidths. Entries outside
    /// the band are ignored.
    pub fn factor(m: &DMatrix<Complex64>, kl: usize, ku: usize) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "LU of a non-square matrix");
        Self::factor_with(m.nrows(), kl, ku, |i, j| m[(i, j)])
    }

    /// Factor the `n x n` matrix whose in-band entries are given by `entry`.
    pub fn factor_with<F>(n: usize, kl: usize, ku: usize, entry: F) -> Self
    where
        F: Fn(usize, usize) -> Complex64,
    {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        let w = 2 * kl + ku + 1;
        // working rows cover columns (i - kl)..=(i + kl + ku)
        let mut work = vec![ZERO; n * w];
        let at = |i: usize, j: usize| -> usize { i * w + (j + kl - i) };
        let mut anorm: f64 = 0.0;
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n - 1);
            let mut col = 0.0;
            for i in lo..=hi {
                let v = entry(i, j);
                work[at(i, j)] = v;
                col += v.norm();
            }
            anorm = anorm.max(col);
        }

        let ku_fill = kl + ku;
        let mut lower = vec![ZERO; n * kl.max(1)];
        let mut piv = vec![0; n];
        let mut singular = false;
        for j in 0..n {
            let last_row = (j + kl).min(n - 1);
            let last_col = (j + ku_fill).min(n - 1);
            let mut p = j;
            let mut best = work[at(j, j)].norm();
            for i in j + 1..=last_row {
                let v = work[at(i, j)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[j] = p;
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != j {
                for c in j..=last_col {
                    work.swap(at(j, c), at(p, c));
                }
            }
            let pivot = work[at(j, j)];
            for i in j + 1..=last_row {
                let l = work[at(i, j)] / pivot;
                lower[j * kl + (i - j - 1)] = l;
                work[at(i, j)] = ZERO;
                if l != ZERO {
                    for c in j + 1..=last_col {
                        let u = work[at(j, c)];
                        work[at(i, c)] -= l * u;
                    }
                }
            }
        }

        let wu = ku_fill + 1;
        let mut upper = vec![ZERO; n * wu];
        for i in 0..n {
            for c in i..=(i + ku_fill).min(n.saturating_sub(1)) {
                upper[i * wu + (c - i)] = work[at(i, c)];
            }
        }
        BandLu {
            n,
            kl,
            ku_fill,
            upper,
            lower,
            piv,
            anorm,
            singular,
        }
    }

    /// Factor with bandwidths detected from the sparsity pattern.
    pub fn factor_auto(m: &DMatrix<Complex64>) -> Self {
        let (kl, ku) = bandwidth(m);
        Self::factor(m, kl, ku)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// True when an exactly zero pivot was met.
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    fn u(&self, i: usize, c: usize) -> Complex64 {
        self.upper[i * (self.ku_fill + 1) + (c - i)]
    }

    fn l(&self, j: usize, i: usize) -> Complex64 {
        self.lower[j * self.kl + (i - j - 1)]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != ZERO {
                for i in j + 1..=(j + self.kl).min(n - 1) {
                    b[i] -= self.l(j, i) * bj;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for c in i + 1..=(i + self.ku_fill).min(n - 1) {
                acc -= self.u(i, c) * b[c];
            }
            b[i] = acc / self.u(i, i);
        }
    }

    /// Solves `A^H x = b` in place.
    pub fn solve_adjoint_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        // U^H z = b
        for i in 0..n {
            let mut acc = b[i];
            for r in i.saturating_sub(self.ku_fill)..i {
                acc -= self.u(r, i).conj() * b[r];
            }
            b[i] = acc / self.u(i, i).conj();
        }
        // (P L)^H: undo the elimination steps in reverse order
        for j in (0..n).rev() {
            let mut acc = b[j];
            for i in j + 1..=(j + self.kl).min(n - 1) {
                acc -= self.l(j, i).conj() * b[i];
            }
            b[j] = acc;
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
        }
    }

    /// Reciprocal 1-norm condition estimate (Hager / Higham). Returns 0 for an
    /// exactly singular factorization.
    pub fn rcond(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        if self.singular || self.anorm == 0.0 {
            return 0.0;
        }
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let mut y = x.clone();
            self.solve_in_place(&mut y);
            let norm1: f64 = y.iter().map(|v| v.norm()).sum();
            if !norm1.is_finite() {
                return 0.0;
            }
            if norm1 <= est {
                break;
            }
            est = norm1;
            let mut z: Vec<Complex64> = y
                .iter()
                .map(|v| {
                    let a = v.norm();
                    if a == 0.0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        v / a
                    }
                })
                .collect();
            self.solve_adjoint_in_place(&mut z);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |acc, t| if t.1 > acc.1 { t } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx || jmax == last_j {
                break;
            }
            last_j = jmax;
            x.iter_mut().for_each(|v| *v = ZERO);
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        // Higham's alternating-sign safeguard
        let mut alt: Vec<Complex64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let v = if n > 1 {
                    1.0 + i as f64 / (n - 1) as f64
                } else {
                    1.0
                };
                Complex64::new(sign * v, 0.0)
            })
            .collect();
        self.solve_in_place(&mut alt);
        let alt_est = 2.0 * alt.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        let inv_norm = est.max(alt_est);
        if !inv_norm.is_finite() || inv_norm == 0.0 {
            return 0.0;
        }
        1.0 / (self.anorm * inv_norm)
    }
}
