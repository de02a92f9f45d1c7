//! Problem definitions: coupled system blocks, steady states, scenarios.
//!
//! A [`SystemSpec`] declares the coefficient blocks of the parabolic system
//!
//! ```text
//! u_t = Div(a11(W) Du)              + b11(W) Du              + g11(W) u
//! v_t = Div(a21(W) Du + a22(W) Dv)  + b21(W) Du + b22(W) Dv  + g22(W) v
//! ```
//!
//! with W = (u, v), u having m1 components and v having m2. The semi-trivial
//! steady state W* = (u*, 0) solves the u-subsystem alone with v = 0.
//! Derivative blocks (`a21_v`, `b21_v`, `a22_u`, `a22_uu`, `a21_uv`) are
//! declared explicitly, never obtained by differentiating the others; the
//! `a21_v`/`b21_v` convention is row-diagonal: entry (i, j) is the partial
//! derivative of block entry (i, j) with respect to v_i.

mod field;
mod registry;

pub use field::FieldSpec;
pub use registry::{analytic_scenario, registry_names};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{build_grid, Bc, Grid, GridFn, NodeField, Term};
use crate::error::{Error, Result};

/// Block slots of the system, fixing shape and role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    A11,
    A21,
    A22,
    B11,
    B21,
    B22,
    G11,
    G22,
    A21V,
    B21V,
    A22U,
    A22UU,
    A21UV,
}

/// All coefficient blocks; omitted blocks default to zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Blocks {
    pub a11: FieldSpec,
    pub a21: FieldSpec,
    pub a22: FieldSpec,
    pub b11: FieldSpec,
    pub b21: FieldSpec,
    pub b22: FieldSpec,
    pub g11: FieldSpec,
    pub g22: FieldSpec,
    pub a21_v: FieldSpec,
    pub b21_v: FieldSpec,
    pub a22_u: FieldSpec,
    pub a22_uu: FieldSpec,
    pub a21_uv: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub m1: usize,
    pub m2: usize,
    /// Interval endpoints [x_lo, x_hi].
    pub domain: [f64; 2],
    pub bc: Bc,
    pub blocks: Blocks,
}

impl SystemSpec {
    pub fn field(&self, b: Block) -> &FieldSpec {
        match b {
            Block::A11 => &self.blocks.a11,
            Block::A21 => &self.blocks.a21,
            Block::A22 => &self.blocks.a22,
            Block::B11 => &self.blocks.b11,
            Block::B21 => &self.blocks.b21,
            Block::B22 => &self.blocks.b22,
            Block::G11 => &self.blocks.g11,
            Block::G22 => &self.blocks.g22,
            Block::A21V => &self.blocks.a21_v,
            Block::B21V => &self.blocks.b21_v,
            Block::A22U => &self.blocks.a22_u,
            Block::A22UU => &self.blocks.a22_uu,
            Block::A21UV => &self.blocks.a21_uv,
        }
    }

    pub fn block_shape(&self, b: Block) -> (usize, usize) {
        match b {
            Block::A11 | Block::B11 | Block::G11 => (self.m1, self.m1),
            Block::A22 | Block::B22 | Block::G22 | Block::A22U | Block::A22UU | Block::A21UV => {
                (self.m2, self.m2)
            }
            Block::A21 | Block::B21 | Block::A21V | Block::B21V => (self.m2, self.m1),
        }
    }

    pub fn eval_block(&self, b: Block, u: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        let (r, c) = self.block_shape(b);
        self.field(b).eval(u, v, r, c)
    }

    /// Sample a square block at the steady state on every grid node.
    pub fn steady_node_field(&self, b: Block, grid: &Grid, u_star: &GridFn) -> Result<NodeField> {
        let (r, c) = self.block_shape(b);
        assert_eq!(r, c, "steady_node_field needs a square block");
        let v0 = vec![0.0; self.m2];
        let mut mats = Vec::with_capacity(grid.n_nodes());
        for p in 0..grid.n_nodes() {
            mats.push(self.eval_block(b, u_star.node(p), &v0)?);
        }
        Ok(NodeField::from_mats(mats))
    }

    /// `diag(B(W*) · Du*)` on every node, for the row-diagonal derivative
    /// blocks: the m2 x m2 diagonal coefficient entering the eigenproblem.
    pub fn gradient_contraction(&self, b: Block, grid: &Grid, u_star: &GridFn) -> Result<NodeField> {
        let v0 = vec![0.0; self.m2];
        let du = u_star.gradient(grid);
        let mut mats = Vec::with_capacity(grid.n_nodes());
        for p in 0..grid.n_nodes() {
            let mat = self.eval_block(b, u_star.node(p), &v0)?;
            let mut d = DMatrix::zeros(self.m2, self.m2);
            for i in 0..self.m2 {
                let mut s = 0.0;
                for j in 0..self.m1 {
                    s += mat[(i, j)] * du.get(p, j);
                }
                d[(i, i)] = s;
            }
            mats.push(d);
        }
        Ok(NodeField::from_mats(mats))
    }
}

/// Sampling box for state-dependent checks: per-component [lo, hi] ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBox {
    pub u: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
}

impl StateBox {
    /// Box [0, hi] in every component, the common nonnegative-state case.
    pub fn nonnegative(m1: usize, m2: usize, hi: f64) -> Self {
        StateBox {
            u: vec![[0.0, hi]; m1],
            v: vec![[0.0, hi]; m2],
        }
    }

    fn validate(&self, m1: usize, m2: usize) -> Result<()> {
        if self.u.len() != m1 || self.v.len() != m2 {
            return Err(Error::shape(
                "state box dimensions",
                (m1, m2),
                (self.u.len(), self.v.len()),
            ));
        }
        for r in self.u.iter().chain(self.v.iter()) {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::precondition(format!(
                    "state box range [{}, {}] is empty or not finite",
                    r[0], r[1]
                )));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let draw = |r: &[f64; 2], rng: &mut ChaCha8Rng| {
            if r[0] == r[1] {
                r[0]
            } else {
                rng.random_range(r[0]..r[1])
            }
        };
        (
            self.u.iter().map(|r| draw(r, rng)).collect(),
            self.v.iter().map(|r| draw(r, rng)).collect(),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Result of sampling-based structural validation.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
    /// Worst-case smallest eigenvalue of the symmetrized diffusion block.
    pub lambda0: f64,
    /// Worst-case largest eigenvalue (upper ellipticity constant).
    pub lambda0_max: f64,
    pub passed: bool,
}

/// Sample-based validation of the structural assumptions: normal ellipticity
/// of the full diffusion block and vanishing of the u-to-v couplings at v = 0.
pub fn validate_system(
    spec: &SystemSpec,
    state_box: &StateBox,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::precondition("need at least one sample"));
    }
    state_box.validate(spec.m1, spec.m2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.m1 + spec.m2;
    let zero_v = vec![0.0; spec.m2];

    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    let mut worst_a21 = 0.0f64;
    let mut worst_b21 = 0.0f64;

    for _ in 0..samples {
        let (u, v) = state_box.sample(&mut rng);
        let a11 = spec.eval_block(Block::A11, &u, &v)?;
        let a21 = spec.eval_block(Block::A21, &u, &v)?;
        let a22 = spec.eval_block(Block::A22, &u, &v)?;
        // Full diffusion block with a21 in both off-diagonal slots, then
        // symmetrized; its extreme eigenvalues bound the quadratic form.
        let mut full = DMatrix::zeros(n, n);
        full.view_mut((0, 0), (spec.m1, spec.m1)).copy_from(&a11);
        full.view_mut((spec.m1, 0), (spec.m2, spec.m1)).copy_from(&a21);
        full.view_mut((0, spec.m1), (spec.m1, spec.m2))
            .copy_from(&a21.transpose());
        full.view_mut((spec.m1, spec.m1), (spec.m2, spec.m2))
            .copy_from(&a22);
        let sym = (&full + full.transpose()) * 0.5;
        let eigs = sym.symmetric_eigen().eigenvalues;
        lambda_min = lambda_min.min(eigs.min());
        lambda_max = lambda_max.max(eigs.max());

        worst_a21 = worst_a21.max(spec.eval_block(Block::A21, &u, &zero_v)?.amax());
        worst_b21 = worst_b21.max(spec.eval_block(Block::B21, &u, &zero_v)?.amax());
    }

    let mut checks = Vec::new();
    checks.push(CheckOutcome {
        name: "ellipticity".into(),
        passed: lambda_min > 0.0,
        detail: format!("lambda0 = {lambda_min:.6e}, Lambda0 = {lambda_max:.6e}"),
    });
    checks.push(CheckOutcome {
        name: "a21-vanishes-at-v0".into(),
        passed: worst_a21 <= 1e-12,
        detail: format!("max |a21(u, 0)| = {worst_a21:.6e}"),
    });
    checks.push(CheckOutcome {
        name: "b21-vanishes-at-v0".into(),
        passed: worst_b21 <= 1e-12,
        detail: format!("max |b21(u, 0)| = {worst_b21:.6e}"),
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport {
        checks,
        lambda0: lambda_min,
        lambda0_max: lambda_max,
        passed,
    })
}

/// Discrete semi-trivial steady state.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub u_star: GridFn,
    /// Sup norm of the discrete residual of the u-subsystem.
    pub residual: f64,
}

/// Residual and operator of the u-subsystem at the frozen state `u`.
fn u_subsystem_residual(
    spec: &SystemSpec,
    grid: &Grid,
    unknowns: &[f64],
) -> Result<(Vec<f64>, f64, crate::discretization::DiscreteOperator)> {
    let m1 = spec.m1;
    let u_fn = grid.extend(unknowns, m1);
    let v0 = vec![0.0; spec.m2];
    let mut a_mats = Vec::with_capacity(grid.n_nodes());
    let mut b_mats = Vec::with_capacity(grid.n_nodes());
    for p in 0..grid.n_nodes() {
        a_mats.push(spec.eval_block(Block::A11, u_fn.node(p), &v0)?);
        b_mats.push(spec.eval_block(Block::B11, u_fn.node(p), &v0)? * -1.0);
    }
    let op = crate::discretization::assemble(
        grid,
        m1,
        &[
            Term::Diffusion(NodeField::from_mats(a_mats)),
            Term::Drift(NodeField::from_mats(b_mats)),
        ],
    )?;
    let mut r = op.apply(unknowns);
    for (slot, p) in grid.unknown_range().enumerate() {
        let g = spec.eval_block(Block::G11, u_fn.node(p), &v0)?;
        let up = u_fn.node(p);
        for a in 0..m1 {
            let mut s = 0.0;
            for b in 0..m1 {
                s += g[(a, b)] * up[b];
            }
            r[slot * m1 + a] -= s;
        }
    }
    let sup = r.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    Ok((r, sup, op))
}

/// Damped-Newton solve of the discrete u-subsystem
/// `-Div(a11(u,0) Du) = b11(u,0) Du + g11(u,0) u`.
///
/// The Jacobian treats the operator coefficients as frozen and
/// finite-differences only the local reaction map `u -> g11(u,0) u`; for
/// state-dependent diffusion this is a quasi-Newton step, which the damping
/// and the residual-based stopping rule absorb.
pub fn solve_semi_trivial(
    spec: &SystemSpec,
    grid: &Grid,
    init: &GridFn,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyState> {
    let m1 = spec.m1;
    if init.m != m1 {
        return Err(Error::shape("steady solve initial guess", (m1, 1), (init.m, 1)));
    }
    let mut u = grid.restrict(init);
    if u.iter().any(|&x| x <= 0.0) {
        return Err(Error::precondition(
            "initial guess must be positive at interior nodes",
        ));
    }
    let v0 = vec![0.0; spec.m2];

    let (mut r, mut res, mut op) = u_subsystem_residual(spec, grid, &u)?;
    let mut iterations = 0usize;
    while res > tol {
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                last: res,
                previous: res,
            });
        }
        iterations += 1;

        // J = op - d/du [g11(u,0) u], the reaction Jacobian by forward
        // differences per node (the reaction is local).
        let mut jac = op.band.clone();
        let u_fn = grid.extend(&u, m1);
        for (slot, p) in grid.unknown_range().enumerate() {
            let up: Vec<f64> = u_fn.node(p).to_vec();
            let g = spec.eval_block(Block::G11, &up, &v0)?;
            let base = {
                let mut b = vec![0.0; m1];
                for a in 0..m1 {
                    for c in 0..m1 {
                        b[a] += g[(a, c)] * up[c];
                    }
                }
                b
            };
            for bcomp in 0..m1 {
                let delta = 1e-6 * (1.0 + up[bcomp].abs());
                let mut upert = up.clone();
                upert[bcomp] += delta;
                let gp = spec.eval_block(Block::G11, &upert, &v0)?;
                for a in 0..m1 {
                    let mut s = 0.0;
                    for c in 0..m1 {
                        s += gp[(a, c)] * upert[c];
                    }
                    let d = (s - base[a]) / delta;
                    if d != 0.0 {
                        jac.add(slot * m1 + a, slot * m1 + bcomp, -d);
                    }
                }
            }
        }
        let step = jac.factor()?.solve(&r);

        // Backtracking line search on the residual norm.
        let mut s = 1.0;
        let mut accepted = false;
        while s >= 1.0 / 1024.0 {
            let cand: Vec<f64> = u.iter().zip(&step).map(|(&x, &d)| x - s * d).collect();
            match u_subsystem_residual(spec, grid, &cand) {
                Ok((rc, resc, opc)) if resc < res => {
                    u = cand;
                    r = rc;
                    res = resc;
                    op = opc;
                    accepted = true;
                    break;
                }
                _ => s *= 0.5,
            }
        }
        let _ = &r;
        if !accepted {
            return Err(Error::NonConvergence {
                iterations,
                last: res,
                previous: res,
            });
        }
    }

    let scale = u.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let min = u.iter().fold(f64::INFINITY, |acc, &x| acc.min(x));
    if !(min > 1e-10 * scale.max(1e-300)) || scale == 0.0 {
        return Err(Error::PositivityLost(format!(
            "steady solve converged to a profile that is not strictly positive \
             (min {min:.3e}, sup {scale:.3e}); no positive steady state found from this guess"
        )));
    }

    Ok(SteadyState {
        u_star: grid.extend(&u, m1),
        residual: res,
    })
}

/// How the steady state is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SteadySpec {
    /// Run the damped-Newton solver from `init_amplitude` times a positive
    /// reference profile (principal-eigenfunction bump for Dirichlet,
    /// constant for Neumann).
    Solve {
        #[serde(default = "default_amplitude")]
        init_amplitude: f64,
        #[serde(default = "default_steady_tol")]
        tol: f64,
        #[serde(default = "default_steady_iter")]
        max_iter: usize,
    },
    /// Steady state known in closed form as a spatial constant (valid under
    /// Neumann conditions); the residual is still evaluated and reported.
    ClosedForm { values: Vec<f64> },
}

fn default_amplitude() -> f64 {
    1.0
}
fn default_steady_tol() -> f64 {
    1e-10
}
fn default_steady_iter() -> usize {
    60
}

/// Closed-form reference for the v-subsystem: v_i(x, t) = amplitude *
/// exp(rate_i t) * phi(x) with phi the principal Dirichlet eigenfunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormRef {
    pub rates: Vec<f64>,
    pub amplitude: f64,
}

/// Principal Dirichlet eigenfunction of the interval, sin-profile normalized
/// to peak 1.
pub fn principal_profile(domain: [f64; 2], x: f64) -> f64 {
    let l = domain[1] - domain[0];
    (std::f64::consts::PI * (x - domain[0]) / l).sin()
}

/// Principal Dirichlet eigenvalue (pi / length)^2 of the interval.
pub fn principal_eigenvalue(domain: [f64; 2]) -> f64 {
    let l = domain[1] - domain[0];
    (std::f64::consts::PI / l).powi(2)
}

impl ClosedFormRef {
    pub fn eval(&self, domain: [f64; 2], x: f64, t: f64, comp: usize) -> f64 {
        self.amplitude * (self.rates[comp] * t).exp() * principal_profile(domain, x)
    }
}

/// A fully specified experiment: system, steady state recipe, eigenproblem
/// shift k and coupling K, and default grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub label: Option<String>,
    pub system: SystemSpec,
    pub steady: SteadySpec,
    pub k: f64,
    #[serde(rename = "K", default)]
    pub coupling: FieldSpec,
    pub grid_size: usize,
    #[serde(default)]
    pub closed_form: Option<ClosedFormRef>,
}

impl Scenario {
    pub fn validate_basic(&self) -> Result<()> {
        if self.system.m1 == 0 || self.system.m2 == 0 {
            return Err(Error::Validation("m1 and m2 must be at least 1".into()));
        }
        if self.grid_size < 3 {
            return Err(Error::Validation(format!(
                "grid_size must be at least 3, got {}",
                self.grid_size
            )));
        }
        if !(self.k > 0.0) {
            return Err(Error::Validation(format!("k must be positive, got {}", self.k)));
        }
        let [lo, hi] = self.system.domain;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Validation(format!(
                "domain [{lo}, {hi}] is not a proper interval"
            )));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        self.build_grid_with(self.grid_size)
    }

    pub fn build_grid_with(&self, n: usize) -> Result<Grid> {
        build_grid(self.system.domain[0], self.system.domain[1], n, self.system.bc)
    }

    /// Obtain u* on the given grid per the steady recipe.
    pub fn steady_state(&self, grid: &Grid) -> Result<SteadyState> {
        match &self.steady {
            SteadySpec::Solve {
                init_amplitude,
                tol,
                max_iter,
            } => {
                let amp = *init_amplitude;
                let mut init = GridFn::zeros(self.system.m1, grid.n_nodes());
                for p in grid.unknown_range() {
                    let x = grid.node_x(p);
                    let profile = match self.system.bc {
                        Bc::Dirichlet => principal_profile(self.system.domain, x),
                        Bc::Neumann => 1.0,
                    };
                    for c in 0..self.system.m1 {
                        init.set(p, c, amp * profile);
                    }
                }
                solve_semi_trivial(&self.system, grid, &init, *tol, *max_iter)
            }
            SteadySpec::ClosedForm { values } => {
                if values.len() != self.system.m1 {
                    return Err(Error::shape(
                        "constant steady state",
                        (self.system.m1, 1),
                        (values.len(), 1),
                    ));
                }
                if values.iter().any(|&x| x <= 0.0) {
                    return Err(Error::PositivityLost(
                        "declared constant steady state has a nonpositive component".into(),
                    ));
                }
                let mut u = GridFn::zeros(self.system.m1, grid.n_nodes());
                for p in grid.unknown_range() {
                    for c in 0..self.system.m1 {
                        u.set(p, c, values[c]);
                    }
                }
                let (_, res, _) = u_subsystem_residual(&self.system, grid, &grid.restrict(&u))?;
                Ok(SteadyState {
                    u_star: u,
                    residual: res,
                })
            }
        }
    }

    /// The domain-scaling construction: a new scenario on the stretched
    /// domain (R < 1 enlarges it) whose eigenvalue is exactly R^{-2} times
    /// the original's on the same grid resolution. Gradient-carrying blocks
    /// absorb powers of R; the coupling matrix absorbs the shift mismatch
    /// (1 - R^2) k.
    pub fn scaled(&self, r: f64) -> Result<Scenario> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::precondition(format!("scaling ratio must be positive, got {r}")));
        }
        if r == 1.0 {
            return Ok(self.clone());
        }
        let r2 = r * r;
        let m2 = self.system.m2;
        let k_const = self
            .coupling
            .eval_constant(m2, m2)
            .map_err(|_| Error::precondition("scaling requires a state-independent coupling K"))?;
        let shifted = &k_const + DMatrix::identity(m2, m2) * ((1.0 - r2) * self.k);

        let mut blocks = self.system.blocks.clone();
        blocks.b11 = FieldSpec::scaled(r, blocks.b11);
        blocks.b21 = FieldSpec::scaled(r, blocks.b21);
        blocks.b22 = FieldSpec::scaled(r, blocks.b22);
        // Gradients of the resampled u* shrink by R, so the declared
        // v-derivative of b21 compensates to keep the mass term exact.
        blocks.b21_v = FieldSpec::scaled(1.0 / r, blocks.b21_v);
        blocks.g11 = FieldSpec::scaled(r2, blocks.g11);

        Ok(Scenario {
            label: self
                .label
                .as_ref()
                .map(|l| format!("{l}@R={r}"))
                .or_else(|| Some(format!("scaled@R={r}"))),
            system: SystemSpec {
                m1: self.system.m1,
                m2,
                domain: [self.system.domain[0] / r, self.system.domain[1] / r],
                bc: self.system.bc,
                blocks,
            },
            steady: self.steady.clone(),
            k: r2 * self.k,
            coupling: FieldSpec::Constant {
                entries: (0..m2)
                    .map(|i| (0..m2).map(|j| shifted[(i, j)]).collect())
                    .collect(),
            },
            grid_size: self.grid_size,
            closed_form: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let scn: Scenario = serde_json::from_str(text)?;
        scn.validate_basic()?;
        Ok(scn)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Scenario> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
