//! Uniform 1D grids and flux-form finite-difference operator assembly.
//!
//! Conventions fixed here and relied on everywhere else:
//! - grid functions live on the full node set `x_0..=x_n`; Dirichlet unknowns
//!   are the interior nodes and are zero-extended for quadrature and output;
//! - vector-valued functions are stored node-major (`node * m + comp`), which
//!   keeps coupled operators banded with half-bandwidth `2m - 1`;
//! - `diffusion(a)` assembles `-Div(a D.)` with arithmetic-midpoint face
//!   values, `drift(b)` assembles `+b D.` centered, `div_product(c)` assembles
//!   `-Div(c .)` in flux form (not expanded by the product rule), `mass(q)`
//!   assembles `+q .`;
//! - Neumann rows close with mirror ghosts, under which the diffusion row at
//!   the boundary becomes `-2 a_{1/2} (phi_1 - phi_0)/h^2` and the drift and
//!   flux-product rows cancel to zero.

mod banded;
mod grid;
mod operator;

pub use banded::{BandLu, BandMatrix};
pub use grid::{build_grid, Bc, Grid, GridFn};
pub use operator::{assemble, DiscreteOperator, NodeField, Term};
