//! Assembly of banded finite-difference operators from coefficient fields.
//!
//! Operators act on vector-valued grid functions with `m` components, stored
//! node-major (`global = (node - offset) * m + component`), and are sums of
//! four term kinds:
//!
//! * `Diffusion(a)`:  phi -> -(a phi')' in conservation form,
//! * `Drift(c)`:      phi -> c phi' with centered differences,
//! * `DivProduct(c)`: phi -> -(c phi)' in conservation form,
//! * `Mass(c)`:       phi -> c phi pointwise.
//!
//! Coefficients are matrix-valued node fields sampled on every grid node.
//! Half-point values use arithmetic means of neighboring nodes. Dirichlet
//! rows drop columns at boundary nodes (known zero values); Neumann rows use
//! mirror ghosts, which turns the first and last diffusion rows into one-sided
//! fluxes and makes the first and last drift and div-product rows vanish.

use nalgebra::DMatrix;

use super::banded::{BandLu, BandMatrix};
use super::grid::Grid;
use crate::error::{Error, Result};

/// Matrix-valued coefficient sampled on every node of a grid.
#[derive(Debug, Clone)]
pub struct NodeField {
    m: usize,
    mats: Vec<DMatrix<f64>>,
}

impl NodeField {
    /// Same matrix at every node.
    pub fn constant(grid: &Grid, mat: DMatrix<f64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "coefficient blocks must be square");
        NodeField {
            m: mat.nrows(),
            mats: vec![mat; grid.n_nodes()],
        }
    }

    /// Sample a matrix-valued function of position on every node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> DMatrix<f64>) -> Self {
        let mats: Vec<_> = grid.nodes().into_iter().map(f).collect();
        let m = mats[0].nrows();
        assert!(mats.iter().all(|a| a.nrows() == m && a.ncols() == m));
        NodeField { m, mats }
    }

    /// Scalar (1x1) field from a function of position.
    pub fn from_scalar_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |x| DMatrix::from_element(1, 1, f(x)))
    }

    /// Wrap precomputed per-node matrices.
    pub fn from_mats(mats: Vec<DMatrix<f64>>) -> Self {
        assert!(!mats.is_empty());
        let m = mats[0].nrows();
        assert!(mats.iter().all(|a| a.nrows() == m && a.ncols() == m));
        NodeField { m, mats }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn value(&self, node: usize) -> &DMatrix<f64> {
        &self.mats[node]
    }

    /// Pointwise sum with another field of the same shape.
    pub fn plus(&self, other: &NodeField) -> NodeField {
        assert_eq!((self.m, self.len()), (other.m, other.len()));
        NodeField {
            m: self.m,
            mats: self
                .mats
                .iter()
                .zip(&other.mats)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Pointwise scaling by a constant.
    pub fn scaled(&self, c: f64) -> NodeField {
        NodeField {
            m: self.m,
            mats: self.mats.iter().map(|a| a * c).collect(),
        }
    }

    /// Pointwise scaling by a scalar profile (one factor per node).
    pub fn scaled_by_profile(&self, profile: &[f64]) -> NodeField {
        assert_eq!(profile.len(), self.len());
        NodeField {
            m: self.m,
            mats: self
                .mats
                .iter()
                .zip(profile)
                .map(|(a, &s)| a * s)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.mats
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// One additive contribution to an assembled operator.
#[derive(Debug, Clone)]
pub enum Term {
    Diffusion(NodeField),
    Drift(NodeField),
    DivProduct(NodeField),
    Mass(NodeField),
}

impl Term {
    fn field(&self) -> &NodeField {
        match self {
            Term::Diffusion(f) | Term::Drift(f) | Term::DivProduct(f) | Term::Mass(f) => f,
        }
    }
}

/// Banded matrix representation of a differential operator on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub m: usize,
    pub band: BandMatrix,
}

/// Build the banded matrix for a sum of terms acting on `m`-component
/// grid functions. Every coefficient field must be `m x m` and sampled on
/// every node of `grid`.
pub fn assemble(grid: &Grid, m: usize, terms: &[Term]) -> Result<DiscreteOperator> {
    for t in terms {
        let f = t.field();
        if f.m() != m {
            return Err(Error::shape(
                "operator coefficient block",
                (m, m),
                (f.m(), f.m()),
            ));
        }
        if f.len() != grid.n_nodes() {
            return Err(Error::shape(
                "operator coefficient field length",
                (grid.n_nodes(), 1),
                (f.len(), 1),
            ));
        }
    }

    let dim = grid.n_unknowns() * m;
    let hb = 2 * m - 1;
    let mut band = BandMatrix::zeros(dim, hb, hb);
    let off = grid.unknown_offset();
    let h = grid.h;
    let n = grid.n;
    let unknowns = grid.unknown_range();
    let col_ok = |q: usize| unknowns.contains(&q);

    let add_block = |band: &mut BandMatrix, p: usize, q: usize, mat: &DMatrix<f64>, s: f64| {
        let r0 = (p - off) * m;
        let c0 = (q - off) * m;
        for a in 0..m {
            for b in 0..m {
                let v = mat[(a, b)] * s;
                if v != 0.0 {
                    band.add(r0 + a, c0 + b, v);
                }
            }
        }
    };

    for t in terms {
        let f = t.field();
        for p in grid.unknown_range() {
            match t {
                Term::Diffusion(_) => {
                    let h2 = h * h;
                    if p == 0 {
                        // Mirror ghost collapses the flux difference to one side.
                        let a_half = (f.value(0) + f.value(1)) * 0.5;
                        add_block(&mut band, 0, 0, &a_half, 2.0 / h2);
                        add_block(&mut band, 0, 1, &a_half, -2.0 / h2);
                    } else if p == n {
                        let a_half = (f.value(n - 1) + f.value(n)) * 0.5;
                        add_block(&mut band, n, n, &a_half, 2.0 / h2);
                        add_block(&mut band, n, n - 1, &a_half, -2.0 / h2);
                    } else {
                        let a_lo = (f.value(p - 1) + f.value(p)) * 0.5;
                        let a_hi = (f.value(p) + f.value(p + 1)) * 0.5;
                        add_block(&mut band, p, p, &(&a_lo + &a_hi), 1.0 / h2);
                        if col_ok(p - 1) {
                            add_block(&mut band, p, p - 1, &a_lo, -1.0 / h2);
                        }
                        if col_ok(p + 1) {
                            add_block(&mut band, p, p + 1, &a_hi, -1.0 / h2);
                        }
                    }
                }
                Term::Drift(_) => {
                    if p == 0 || p == n {
                        // Mirror ghosts cancel the centered difference.
                        continue;
                    }
                    let c = f.value(p);
                    if col_ok(p + 1) {
                        add_block(&mut band, p, p + 1, c, 0.5 / h);
                    }
                    if col_ok(p - 1) {
                        add_block(&mut band, p, p - 1, c, -0.5 / h);
                    }
                }
                Term::DivProduct(_) => {
                    if p == 0 || p == n {
                        continue;
                    }
                    let c_lo = (f.value(p - 1) + f.value(p)) * 0.5;
                    let c_hi = (f.value(p) + f.value(p + 1)) * 0.5;
                    add_block(&mut band, p, p, &(&c_lo - &c_hi), 0.5 / h);
                    if col_ok(p - 1) {
                        add_block(&mut band, p, p - 1, &c_lo, 0.5 / h);
                    }
                    if col_ok(p + 1) {
                        add_block(&mut band, p, p + 1, &c_hi, -0.5 / h);
                    }
                }
                Term::Mass(_) => {
                    add_block(&mut band, p, p, f.value(p), 1.0);
                }
            }
        }
    }

    Ok(DiscreteOperator {
        grid: grid.clone(),
        m,
        band,
    })
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.band.dim
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.band.matvec(x)
    }

    pub fn factor(&self) -> Result<BandLu> {
        self.band.factor()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(b))
    }

    /// `I + c * self`, used by implicit time stepping.
    pub fn identity_plus_scaled(&self, c: f64) -> DiscreteOperator {
        let mut band = self.band.clone();
        band.scale(c);
        for i in 0..band.dim {
            band.add(i, i, 1.0);
        }
        DiscreteOperator {
            grid: self.grid.clone(),
            m: self.m,
            band,
        }
    }

    /// `self + c * other`; both operators must come from the same grid and `m`.
    pub fn plus_scaled(&self, c: f64, other: &DiscreteOperator) -> DiscreteOperator {
        let mut band = self.band.clone();
        band.axpy(c, &other.band);
        DiscreteOperator {
            grid: self.grid.clone(),
            m: self.m,
            band,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.band.to_dense()
    }

    pub fn to_coo(&self) -> Vec<(usize, usize, f64)> {
        self.band.to_coo()
    }

    /// Plain text "row col value" lines, one nonzero per line, row-major order.
    pub fn coo_text(&self) -> String {
        let mut s = String::new();
        for (i, j, v) in self.to_coo() {
            s.push_str(&format!("{i} {j} {v:.17e}\n"));
        }
        s
    }
}
