use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition applied to every component of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Dirichlet,
    Neumann,
}

/// Uniform grid on `[x_lo, x_hi]` with `n` cells and `n + 1` nodes.
///
/// Unknowns are the interior nodes for Dirichlet and all nodes for Neumann;
/// quadrature weights are trapezoid over the full node set so they sum to the
/// interval length exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Cell count; node count is `n + 1`.
    pub n: usize,
    pub h: f64,
    pub bc: Bc,
}

pub fn build_grid(x_lo: f64, x_hi: f64, n: usize, bc: Bc) -> Result<Grid> {
    if !(x_lo.is_finite() && x_hi.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "endpoints must be finite, got [{x_lo}, {x_hi}]"
        )));
    }
    if x_hi <= x_lo {
        return Err(Error::InvalidGrid(format!(
            "need x_hi > x_lo, got [{x_lo}, {x_hi}]"
        )));
    }
    if n < 3 {
        return Err(Error::InvalidGrid(format!("need at least 3 cells, got {n}")));
    }
    Ok(Grid {
        x_lo,
        x_hi,
        n,
        h: (x_hi - x_lo) / n as f64,
        bc,
    })
}

impl Grid {
    pub fn n_nodes(&self) -> usize {
        self.n + 1
    }

    pub fn node_x(&self, p: usize) -> f64 {
        self.x_lo + p as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|p| self.node_x(p)).collect()
    }

    /// Full-node indices carrying unknowns: `1..n` Dirichlet, `0..=n` Neumann.
    pub fn unknown_range(&self) -> std::ops::Range<usize> {
        match self.bc {
            Bc::Dirichlet => 1..self.n,
            Bc::Neumann => 0..self.n + 1,
        }
    }

    /// Unknown count per component.
    pub fn n_unknowns(&self) -> usize {
        self.unknown_range().len()
    }

    pub fn unknown_nodes(&self) -> Vec<f64> {
        self.unknown_range().map(|p| self.node_x(p)).collect()
    }

    /// Trapezoid weights over the full node set; sums to `x_hi - x_lo`.
    pub fn quad_weights(&self) -> Vec<f64> {
        let mut w = vec![self.h; self.n_nodes()];
        w[0] = 0.5 * self.h;
        w[self.n] = 0.5 * self.h;
        w
    }

    /// Offset of the first unknown node in the full node set.
    pub fn unknown_offset(&self) -> usize {
        match self.bc {
            Bc::Dirichlet => 1,
            Bc::Neumann => 0,
        }
    }

    /// Flattened (node-major) unknown vector from a full-node grid function.
    pub fn restrict(&self, f: &GridFn) -> Vec<f64> {
        let m = f.m;
        let mut out = Vec::with_capacity(self.n_unknowns() * m);
        for p in self.unknown_range() {
            out.extend_from_slice(f.node(p));
        }
        out
    }

    /// Full-node grid function from an unknown vector; Dirichlet boundary
    /// nodes are set to zero.
    pub fn extend(&self, unknowns: &[f64], m: usize) -> GridFn {
        assert_eq!(unknowns.len(), self.n_unknowns() * m, "unknown vector length");
        let mut f = GridFn::zeros(m, self.n_nodes());
        for (slot, p) in self.unknown_range().enumerate() {
            f.node_mut(p).copy_from_slice(&unknowns[slot * m..(slot + 1) * m]);
        }
        f
    }
}

/// Vector-valued grid function on the full node set, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    /// Components per node.
    pub m: usize,
    /// Length `m * n_nodes`, layout `values[node * m + comp]`.
    pub values: Vec<f64>,
}

impl GridFn {
    pub fn zeros(m: usize, n_nodes: usize) -> Self {
        GridFn {
            m,
            values: vec![0.0; m * n_nodes],
        }
    }

    /// Sample per-component closures of x on the grid nodes.
    pub fn sample(grid: &Grid, fns: &[&dyn Fn(f64) -> f64]) -> Self {
        let m = fns.len();
        let mut f = GridFn::zeros(m, grid.n_nodes());
        for p in 0..grid.n_nodes() {
            let x = grid.node_x(p);
            for (c, g) in fns.iter().enumerate() {
                f.values[p * m + c] = g(x);
            }
        }
        f
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.values[node * self.m + comp]
    }

    pub fn set(&mut self, node: usize, comp: usize, v: f64) {
        self.values[node * self.m + comp] = v;
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn node_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn comp_sup_norm(&self, comp: usize) -> f64 {
        (0..self.n_nodes()).fold(0.0, |acc: f64, p| acc.max(self.get(p, comp).abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |acc, v| acc.min(*v))
    }

    /// Centered first derivative, second-order one-sided at the ends.
    pub fn gradient(&self, grid: &Grid) -> GridFn {
        let m = self.m;
        let n = grid.n;
        let h = grid.h;
        let mut g = GridFn::zeros(m, grid.n_nodes());
        for c in 0..m {
            g.set(0, c, (-3.0 * self.get(0, c) + 4.0 * self.get(1, c) - self.get(2, c)) / (2.0 * h));
            for p in 1..n {
                g.set(p, c, (self.get(p + 1, c) - self.get(p - 1, c)) / (2.0 * h));
            }
            g.set(
                n,
                c,
                (3.0 * self.get(n, c) - 4.0 * self.get(n - 1, c) + self.get(n - 2, c)) / (2.0 * h),
            );
        }
        g
    }

    /// Three-point second derivative; boundary nodes copy the adjacent
    /// interior value (used only for sup-norm bounds).
    pub fn second_derivative(&self, grid: &Grid) -> GridFn {
        let m = self.m;
        let n = grid.n;
        let h2 = grid.h * grid.h;
        let mut g = GridFn::zeros(m, grid.n_nodes());
        for c in 0..m {
            for p in 1..n {
                g.set(
                    p,
                    c,
                    (self.get(p - 1, c) - 2.0 * self.get(p, c) + self.get(p + 1, c)) / h2,
                );
            }
            let first = g.get(1, c);
            let last = g.get(n - 1, c);
            g.set(0, c, first);
            g.set(n, c, last);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dirichlet_grid_exposes_interior_unknowns() {
        let g = build_grid(0.0, std::f64::consts::PI, 4, Bc::Dirichlet).unwrap();
        let u = g.unknown_nodes();
        assert_eq!(u.len(), 3);
        assert_relative_eq!(u[0], std::f64::consts::PI / 4.0, max_relative = 1e-14);
        assert_relative_eq!(u[1], std::f64::consts::PI / 2.0, max_relative = 1e-14);
        assert_relative_eq!(u[2], 3.0 * std::f64::consts::PI / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn neumann_grid_trapezoid_weights() {
        let g = build_grid(0.0, 1.0, 4, Bc::Neumann).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.quad_weights(), vec![0.125, 0.25, 0.25, 0.25, 0.125]);
        assert_eq!(g.n_unknowns(), 5);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for (lo, hi, n) in [(0.0, std::f64::consts::PI, 7), (-2.5, 4.0, 200), (0.0, 1.0, 3)] {
            for bc in [Bc::Dirichlet, Bc::Neumann] {
                let g = build_grid(lo, hi, n, bc).unwrap();
                let sum: f64 = g.quad_weights().iter().sum();
                assert_relative_eq!(sum, hi - lo, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_requests_rejected() {
        assert!(build_grid(0.0, 1.0, 2, Bc::Dirichlet).is_err());
        assert!(build_grid(1.0, 1.0, 10, Bc::Dirichlet).is_err());
        assert!(build_grid(2.0, 1.0, 10, Bc::Neumann).is_err());
        assert!(build_grid(0.0, f64::INFINITY, 10, Bc::Neumann).is_err());
    }

    #[test]
    fn restrict_extend_round_trip() {
        let g = build_grid(0.0, 1.0, 5, Bc::Dirichlet).unwrap();
        let mut f = GridFn::zeros(2, g.n_nodes());
        for p in g.unknown_range() {
            f.set(p, 0, p as f64);
            f.set(p, 1, -(p as f64));
        }
        let v = g.restrict(&f);
        assert_eq!(v.len(), 4 * 2);
        let back = g.extend(&v, 2);
        assert_eq!(back, f);
    }

    #[test]
    fn gradient_second_order_on_smooth_function() {
        let g = build_grid(0.0, std::f64::consts::PI, 200, Bc::Neumann).unwrap();
        let f = GridFn::sample(&g, &[&|x: f64| x.sin()]);
        let df = f.gradient(&g);
        let mut worst = 0.0f64;
        for p in 0..g.n_nodes() {
            worst = worst.max((df.get(p, 0) - g.node_x(p).cos()).abs());
        }
        assert!(worst < 5e-4, "gradient error {worst}");
    }
}
