//! Band storage and LU factorization with partial pivoting.
//!
//! Storage is column-window style: column `j` holds rows `j - ku .. j + kl`,
//! so row swaps during pivoting stay inside each column's window as long as
//! the upper bandwidth is extended by `kl` before factoring (the classical
//! fill bound for partial pivoting on band matrices).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Band matrix with lower bandwidth `kl` and upper bandwidth `ku`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub dim: usize,
    pub kl: usize,
    pub ku: usize,
    /// `data[j * width + (i - j + ku)]` stores entry `(i, j)`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(dim: usize, kl: usize, ku: usize) -> Self {
        BandMatrix {
            dim,
            kl,
            ku,
            data: vec![0.0; dim * (kl + ku + 1)],
        }
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.dim && j < self.dim && i + self.ku >= j && j + self.kl >= i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[j * self.width() + (i + self.ku - j)]
        } else {
            0.0
        }
    }

    /// Accumulate into an entry; panics outside the band (assembly bugs must
    /// not be silently dropped).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={} ku={} dim={}",
            self.kl,
            self.ku,
            self.dim
        );
        let w = self.width();
        self.data[j * w + (i + self.ku - j)] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for j in 0..self.dim {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.dim - 1);
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let w = self.width();
            for i in lo..=hi {
                y[i] += self.data[j * w + (i + self.ku - j)] * xj;
            }
        }
        y
    }

    /// Sorted (row, col, value) triples of stored nonzeros.
    pub fn to_coo(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.dim {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.dim - 1);
            for j in lo..=hi {
                let v = self.get(i, j);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// Entrywise `self += c * other`; bandwidths must agree.
    pub fn axpy(&mut self, c: f64, other: &BandMatrix) {
        assert_eq!((self.dim, self.kl, self.ku), (other.dim, other.kl, other.ku));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::new(self)
    }
}

/// LU factors of a band matrix, partial pivoting, extended upper bandwidth.
#[derive(Debug, Clone)]
pub struct BandLu {
    dim: usize,
    kl: usize,
    /// `ku + kl`: fill produced by pivoting.
    ku_ext: usize,
    data: Vec<f64>,
    /// `perm[k]` = row swapped into position `k` at step `k`.
    perm: Vec<usize>,
    /// max |pivot| / min |pivot|; crude but monotone condition indicator.
    pub condition_estimate: f64,
}

impl BandLu {
    fn new(a: &BandMatrix) -> Result<Self> {
        let dim = a.dim;
        let kl = a.kl;
        let ku_ext = a.ku + a.kl;
        let width = kl + ku_ext + 1;
        let mut data = vec![0.0; dim * width];
        for j in 0..dim {
            let lo = j.saturating_sub(a.ku);
            let hi = (j + kl).min(dim - 1);
            for i in lo..=hi {
                data[j * width + (i + ku_ext - j)] = a.get(i, j);
            }
        }
        let idx = |i: usize, j: usize| j * width + (i + ku_ext - j);

        let mut perm = vec![0usize; dim];
        let mut max_piv = 0.0f64;
        let mut min_piv = f64::INFINITY;
        let scale = data.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        let tiny = 1e-14 * scale;

        for k in 0..dim {
            let row_hi = (k + kl).min(dim - 1);
            let mut p = k;
            let mut best = data[idx(k, k)].abs();
            for r in k + 1..=row_hi {
                let cand = data[idx(r, k)].abs();
                if cand > best {
                    best = cand;
                    p = r;
                }
            }
            if best <= tiny {
                return Err(Error::Singular {
                    condition_estimate: if min_piv.is_finite() && best > 0.0 {
                        max_piv.max(best) / best
                    } else {
                        f64::INFINITY
                    },
                });
            }
            perm[k] = p;
            if p != k {
                let col_hi = (k + ku_ext).min(dim - 1);
                for j in k..=col_hi {
                    data.swap(idx(k, j), idx(p, j));
                }
            }
            let piv = data[idx(k, k)];
            max_piv = max_piv.max(piv.abs());
            min_piv = min_piv.min(piv.abs());
            let col_hi = (k + ku_ext).min(dim - 1);
            for r in k + 1..=row_hi {
                let mult = data[idx(r, k)] / piv;
                data[idx(r, k)] = mult;
                if mult != 0.0 {
                    for j in k + 1..=col_hi {
                        let ukj = data[idx(k, j)];
                        if ukj != 0.0 {
                            data[idx(r, j)] -= mult * ukj;
                        }
                    }
                }
            }
        }

        Ok(BandLu {
            dim,
            kl,
            ku_ext,
            data,
            perm,
            condition_estimate: max_piv / min_piv,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim);
        let width = self.kl + self.ku_ext + 1;
        let idx = |i: usize, j: usize| j * width + (i + self.ku_ext - j);
        let mut x = b.to_vec();
        for k in 0..self.dim {
            let p = self.perm[k];
            if p != k {
                x.swap(k, p);
            }
            let row_hi = (k + self.kl).min(self.dim - 1);
            let xk = x[k];
            if xk != 0.0 {
                for r in k + 1..=row_hi {
                    x[r] -= self.data[idx(r, k)] * xk;
                }
            }
        }
        for k in (0..self.dim).rev() {
            let col_hi = (k + self.ku_ext).min(self.dim - 1);
            let mut s = x[k];
            for j in k + 1..=col_hi {
                s -= self.data[idx(k, j)] * x[j];
            }
            x[k] = s / self.data[idx(k, k)];
        }
        x
    }
}
