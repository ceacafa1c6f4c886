//! Banded complex matrices and their LU factorization with partial pivoting.
//!
//! Every model here is a nearest-neighbour lattice, so `E - H_eff` has a
//! bandwidth of at most one lattice column. Storage follows the usual
//! row-interchange scheme: row `i` keeps columns `i - kl ..= i + ku + kl`,
//! the extra `kl` slots absorbing fill-in from pivoting.

use nalgebra::{DMatrix, DVector};

use crate::C64;

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![C64::new(0.0, 0.0); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// # Panics
    ///
    /// If `(i, j)` lies outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, value: C64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.slot(i, j);
        self.data[k] += value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn mul_vec(&self, x: &DVector<C64>) -> DVector<C64> {
        DVector::from_fn(self.n, |i, _| {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
        })
    }

    /// Factorizes in place. Returns `None` when a pivot vanishes relative to
    /// the largest entry (numerically singular matrix).
    pub fn factor(mut self) -> Option<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let reach = self.ku + self.kl;
        let floor = 1e-14 * self.max_abs().max(f64::MIN_POSITIVE);
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].norm();
            for i in (k + 1)..=last_row {
                let v = self.data[self.slot(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > floor) {
                return None;
            }
            pivots.push(p);
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for i in (k + 1)..=last_row {
                let s = self.slot(i, k);
                let l = self.data[s] / pivot;
                self.data[s] = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in (k + 1)..=last_col {
                    let upper = self.data[self.slot(k, j)];
                    let t = self.slot(i, j);
                    self.data[t] -= l * upper;
                }
            }
        }
        Some(BandLu { lu: self, pivots })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &DVector<C64>) -> DVector<C64> {
        let a = &self.lu;
        let n = a.n;
        let reach = a.ku + a.kl;
        let mut x = rhs.clone();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let xk = x[k];
            for i in (k + 1)..=(k + a.kl).min(n - 1) {
                x[i] -= a.data[a.slot(i, k)] * xk;
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..=(i + reach).min(n - 1) {
                acc -= a.data[a.slot(i, j)] * x[j];
            }
            x[i] = acc / a.data[a.slot(i, i)];
        }
        x
    }
}
