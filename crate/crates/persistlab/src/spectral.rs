//! Eigenvalue machinery for positivity-preserving operator pencils.
//!
//! The central object is a pencil (L, M): L an invertible elliptic operator,
//! M a mass-type operator. The decision quantity is the dominant eigenvalue
//! tau of L⁻¹M, computed by power iteration (one banded solve per step) with
//! a dense Schur fallback on small problems. [`spectral_comparison`] brackets
//! tau against a candidate with a single solve and a sign check, and
//! [`lopez_eigenpair`] / [`maximum_principle_check`] cover the
//! diagonal-system-plus-cooperative-coupling maximum principle operator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretization::{BandLu, BandMatrix, DiscreteOperator, Grid};
use crate::error::{Error, Result};

/// Problems at or below this many unknowns may fall back to a dense solve.
pub const DENSE_FALLBACK_LIMIT: usize = 600;

/// "Positive" means every entry above this times the sup norm.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Dominant eigenpair of L⁻¹M.
#[derive(Debug, Clone, Serialize)]
pub struct TauResult {
    pub tau: f64,
    /// Eigenvector in unknown layout, sup norm 1, positive-mass orientation.
    pub psi: Vec<f64>,
    /// All entries strictly positive (beyond [`POSITIVITY_TOL`]).
    pub positive: bool,
    /// Final sup norm of `M psi - tau L psi` (psi normalized).
    pub residual: f64,
    pub iterations: usize,
    /// Growth constant k(tau - 1)/tau, filled in once the shift k is known.
    pub kappa: Option<f64>,
}

impl TauResult {
    /// Attach the growth constant derived from the shift k.
    pub fn with_shift(mut self, k: f64) -> Self {
        self.kappa = Some(k * (self.tau - 1.0) / self.tau);
        self
    }

    /// The instability verdict: dominant eigenvalue beyond 1 with a positive
    /// eigenvector.
    pub fn v_unstable(&self) -> bool {
        self.tau > 1.0 && self.positive
    }

    /// Eigenvector as CSV rows `node,component,psi`.
    pub fn psi_csv(&self, grid: &Grid, m: usize) -> String {
        let mut out = String::from("node,component,psi\n");
        let off = grid.unknown_offset();
        for (slot, chunk) in self.psi.chunks(m).enumerate() {
            for (c, v) in chunk.iter().enumerate() {
                out.push_str(&format!("{},{},{v:.17e}\n", off + slot, c));
            }
        }
        out
    }

    /// Scalar summary (everything but the eigenvector) as a JSON object.
    pub fn header_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Header<'a> {
            tau: f64,
            kappa: &'a Option<f64>,
            residual: f64,
            iterations: usize,
            positive: bool,
            v_unstable: bool,
        }
        Ok(serde_json::to_string_pretty(&Header {
            tau: self.tau,
            kappa: &self.kappa,
            residual: self.residual,
            iterations: self.iterations,
            positive: self.positive,
            v_unstable: self.v_unstable(),
        })?)
    }
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flip so the entry sum is nonnegative, then check strict positivity.
fn orient_positive_mass(x: &mut [f64]) -> bool {
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let sup = sup_norm(x);
    x.iter().all(|&v| v > POSITIVITY_TOL * sup)
}

fn check_pencil_dims(l: &DiscreteOperator, m: &DiscreteOperator) -> Result<()> {
    if l.dim() != m.dim() {
        return Err(Error::shape("operator pencil", (l.dim(), l.dim()), (m.dim(), m.dim())));
    }
    Ok(())
}

/// Dominant eigenpair of L⁻¹M by power iteration from a strictly positive
/// random start. Stops when `‖M psi - tau L psi‖∞ ≤ tol` for the normalized
/// iterate. A second start and, below [`DENSE_FALLBACK_LIMIT`] unknowns, a
/// dense eigensolve back up the iteration when the dominant pair converges
/// slowly.
pub fn principal_eigenpair(
    l: &DiscreteOperator,
    m: &DiscreteOperator,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<TauResult> {
    check_pencil_dims(l, m)?;
    let lu = l.factor()?;
    let mut last_err = None;
    for attempt in 0..2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        match power_iteration(l, m, &lu, tol, max_iter, &mut rng) {
            Ok(res) => return Ok(res),
            Err(e) => last_err = Some(e),
        }
    }
    if l.dim() <= DENSE_FALLBACK_LIMIT {
        dense_principal(l, m, &lu, tol)
    } else {
        Err(last_err.expect("two attempts recorded"))
    }
}

fn power_iteration(
    l: &DiscreteOperator,
    m: &DiscreteOperator,
    lu: &BandLu,
    tol: f64,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TauResult> {
    let dim = l.dim();
    let mut x: Vec<f64> = (0..dim).map(|_| 0.5 + rng.random::<f64>()).collect();
    let nrm = sup_norm(&x);
    x.iter_mut().for_each(|v| *v /= nrm);

    let mut rq = f64::NAN;
    let mut rq_prev = f64::NAN;
    for it in 1..=max_iter {
        let y = lu.solve(&m.apply(&x));
        rq_prev = rq;
        rq = dot(&x, &y) / dot(&x, &x);
        if !rq.is_finite() {
            return Err(Error::NonFinite("power iteration Rayleigh quotient".into()));
        }
        // Normalize with a sign convention anchored to the largest entry so
        // iterates do not alternate when the eigenvalue is negative.
        let (mut scale, mut best) = (0.0f64, 0.0f64);
        for &v in &y {
            if v.abs() > best {
                best = v.abs();
                scale = v;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::NonFinite("power iteration collapsed to zero".into()));
        }
        x = y.iter().map(|v| v / scale).collect();

        let mx = m.apply(&x);
        let lx = l.apply(&x);
        let res = mx
            .iter()
            .zip(&lx)
            .fold(0.0f64, |a, (mv, lv)| a.max((mv - rq * lv).abs()));
        if res <= tol {
            let positive = orient_positive_mass(&mut x);
            return Ok(TauResult {
                tau: rq,
                psi: x,
                positive,
                residual: res,
                iterations: it,
                kappa: None,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last: rq,
        previous: rq_prev,
    })
}

/// Dense L⁻¹M as an explicit matrix; shared by the fallback path and the
/// oracle-facing spectral radius below.
fn dense_iteration_matrix(m: &DiscreteOperator, lu: &BandLu, dim: usize) -> DMatrix<f64> {
    let md = m.to_dense();
    let mut a = DMatrix::zeros(dim, dim);
    let mut col = vec![0.0; dim];
    for j in 0..dim {
        for i in 0..dim {
            col[i] = md[(i, j)];
        }
        let sol = lu.solve(&col);
        for i in 0..dim {
            a[(i, j)] = sol[i];
        }
    }
    a
}

/// Modulus-largest eigenvalue of the dense matrix of L⁻¹M. Intended for
/// small problems and cross-checks; O(dim³).
pub fn dense_spectral_radius(l: &DiscreteOperator, m: &DiscreteOperator) -> Result<f64> {
    check_pencil_dims(l, m)?;
    let lu = l.factor()?;
    let a = dense_iteration_matrix(m, &lu, l.dim());
    let eigs = a.complex_eigenvalues();
    Ok(eigs.iter().fold(0.0f64, |acc, z| acc.max(z.norm())))
}

fn dense_principal(
    l: &DiscreteOperator,
    m: &DiscreteOperator,
    lu: &BandLu,
    tol: f64,
) -> Result<TauResult> {
    let dim = l.dim();
    let a = dense_iteration_matrix(m, lu, dim);
    let eigs = a.complex_eigenvalues();
    let top = eigs
        .iter()
        .cloned()
        .max_by(|p, q| p.norm().partial_cmp(&q.norm()).unwrap())
        .expect("nonempty spectrum");
    if top.im.abs() > 1e-8 * top.norm().max(1e-300) {
        // A genuinely complex dominant pair has no meaningful tau.
        return Err(Error::NonConvergence {
            iterations: 0,
            last: top.norm(),
            previous: top.re,
        });
    }
    let tau = top.re;

    // Inverse iteration on the near-singular shift pins the eigenvector.
    let shift = tau * (1.0 + 1e-12) + 1e-300;
    let shifted = &a - DMatrix::identity(dim, dim) * shift;
    let lu_dense = shifted.lu();
    let mut x = DVector::from_element(dim, 1.0);
    for _ in 0..5 {
        match lu_dense.solve(&x) {
            Some(y) => {
                let nrm = y.amax();
                if nrm == 0.0 || !nrm.is_finite() {
                    break;
                }
                x = y / nrm;
            }
            None => break,
        }
    }
    let mut psi: Vec<f64> = x.iter().cloned().collect();
    let nrm = sup_norm(&psi);
    psi.iter_mut().for_each(|v| *v /= nrm);
    let positive = orient_positive_mass(&mut psi);
    let mx = m.apply(&psi);
    let lx = l.apply(&psi);
    let residual = mx
        .iter()
        .zip(&lx)
        .fold(0.0f64, |acc, (mv, lv)| acc.max((mv - tau * lv).abs()));
    if residual > (10.0 * tol).max(1e-8) {
        return Err(Error::NonConvergence {
            iterations: 5,
            last: residual,
            previous: tau,
        });
    }
    Ok(TauResult {
        tau,
        psi,
        positive,
        residual,
        iterations: 0,
        kappa: None,
    })
}

/// Order relation between the pencil's dominant eigenvalue and a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Ordering3 {
    /// tau > tau_star certified.
    Greater,
    /// tau < tau_star certified.
    Less,
    /// Sign pattern mixed or inside the strictness margin.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonVerdict {
    pub ordering: Ordering3,
    pub tau_star: f64,
    /// Extrema of s = tau_star phi - L⁻¹M phi, the certificate quantities.
    pub s_min: f64,
    pub s_max: f64,
    pub margin: f64,
}

/// One-solve bracketing of the dominant eigenvalue: for a strictly positive
/// test function phi, if L⁻¹M phi exceeds tau_star phi everywhere then the
/// dominant eigenvalue exceeds tau_star, and symmetrically below. Strictness
/// is enforced through a margin of 1e-8 ‖phi‖∞.
pub fn spectral_comparison(
    l: &DiscreteOperator,
    m: &DiscreteOperator,
    phi: &[f64],
    tau_star: f64,
) -> Result<ComparisonVerdict> {
    check_pencil_dims(l, m)?;
    if phi.len() != l.dim() {
        return Err(Error::shape("comparison test function", (l.dim(), 1), (phi.len(), 1)));
    }
    if !phi.iter().all(|&v| v > 0.0) {
        return Err(Error::precondition(
            "comparison test function must be strictly positive at interior nodes",
        ));
    }
    let lu = l.factor()?;
    let lphi = l.apply(phi);
    let mphi = m.apply(phi);
    let y: Vec<f64> = lphi
        .iter()
        .zip(&mphi)
        .map(|(lv, mv)| tau_star * lv - mv)
        .collect();
    let s = lu.solve(&y);
    let s_min = s.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let s_max = s.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let margin = 1e-8 * sup_norm(phi);
    let ordering = if s_max < -margin {
        Ordering3::Greater
    } else if s_min > margin {
        Ordering3::Less
    } else {
        Ordering3::Inconclusive
    };
    Ok(ComparisonVerdict {
        ordering,
        tau_star,
        s_min,
        s_max,
        margin,
    })
}

/// Principal eigenpair of the coupled operator `u -> (L_i u_i)_i + k u - K u`.
#[derive(Debug, Clone, Serialize)]
pub struct LopezResult {
    pub lambda1: f64,
    /// Stacked positive eigenfunction (slot-major, component within node).
    pub phi: Vec<f64>,
    pub k_used: f64,
    /// Per Remark-style sufficiency: (lambda_i + k) psi_i > sum_j K_ij psi_j
    /// pointwise, with the scalar eigenpairs (lambda_i, psi_i) of each L_i.
    pub k_large_enough: bool,
    /// Minimal pointwise slack of the above inequality.
    pub krem_margin: f64,
    /// Scalar principal eigenvalues of the uncoupled operators.
    pub component_eigenvalues: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn validate_lopez_inputs(diag_ops: &[DiscreteOperator], coupling: &DMatrix<f64>) -> Result<usize> {
    let m = diag_ops.len();
    if m == 0 {
        return Err(Error::precondition("need at least one scalar operator"));
    }
    if coupling.nrows() != m || coupling.ncols() != m {
        return Err(Error::shape(
            "coupling matrix",
            (m, m),
            (coupling.nrows(), coupling.ncols()),
        ));
    }
    for i in 0..m {
        for j in 0..m {
            if i != j && coupling[(i, j)] < 0.0 {
                return Err(Error::precondition(format!(
                    "coupling must have nonnegative off-diagonal entries; entry ({i}, {j}) = {}",
                    coupling[(i, j)]
                )));
            }
        }
    }
    let dim0 = diag_ops[0].dim();
    for (i, op) in diag_ops.iter().enumerate() {
        if op.m != 1 {
            return Err(Error::precondition(format!(
                "operator {i} is not scalar (m = {})",
                op.m
            )));
        }
        if op.dim() != dim0 {
            return Err(Error::shape("diagonal operator sizes", (dim0, 1), (op.dim(), 1)));
        }
    }
    Ok(m)
}

/// Stacked band matrix of `(L_i u_i)_i + k u - K u` in slot-major layout.
fn stacked_lopez_matrix(
    diag_ops: &[DiscreteOperator],
    coupling: &DMatrix<f64>,
    k: f64,
) -> BandMatrix {
    let m = diag_ops.len();
    let n_slots = diag_ops[0].dim();
    let dim = n_slots * m;
    // Scalar neighbor coupling sits m apart; in-node coupling at most m-1.
    let mut band = BandMatrix::zeros(dim, m, m);
    for (i, op) in diag_ops.iter().enumerate() {
        for (r, c, v) in op.to_coo() {
            band.add(r * m + i, c * m + i, v);
        }
    }
    for slot in 0..n_slots {
        for i in 0..m {
            band.add(slot * m + i, slot * m + i, k);
            for j in 0..m {
                let kij = coupling[(i, j)];
                if kij != 0.0 {
                    band.add(slot * m + i, slot * m + j, -kij);
                }
            }
        }
    }
    band
}

/// Smallest eigenvalue and positive-oriented eigenvector of a band matrix by
/// shifted inverse iteration; `shift` must make the spectrum positive.
fn smallest_eigenpair(
    band: &BandMatrix,
    shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, f64, usize)> {
    let dim = band.dim;
    let mut shifted = band.clone();
    for i in 0..dim {
        shifted.add(i, i, shift);
    }
    let lu = shifted.factor()?;
    let mut x = vec![1.0; dim];
    let mut lam = f64::NAN;
    let mut lam_prev = f64::NAN;
    for it in 1..=max_iter {
        let y = lu.solve(&x);
        let mu = dot(&x, &y) / dot(&x, &x);
        lam_prev = lam;
        lam = 1.0 / mu - shift;
        let nrm = sup_norm(&y);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::NonFinite("inverse iteration collapsed".into()));
        }
        x = y.iter().map(|v| v / nrm).collect();
        let ax = band.matvec(&x);
        let res = ax
            .iter()
            .zip(&x)
            .fold(0.0f64, |a, (av, xv)| a.max((av - lam * xv).abs()));
        if res <= tol * (1.0 + lam.abs()) {
            orient_positive_mass(&mut x);
            return Ok((lam, x, res, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last: lam,
        previous: lam_prev,
    })
}

/// Principal eigenpair of the diagonal elliptic system coupled through the
/// cooperative constant matrix K, shifted by k. Also evaluates the
/// decoupled-eigenpair sufficiency test for k.
pub fn lopez_eigenpair(
    diag_ops: &[DiscreteOperator],
    coupling: &DMatrix<f64>,
    k: f64,
) -> Result<LopezResult> {
    let m = validate_lopez_inputs(diag_ops, coupling)?;
    let n_slots = diag_ops[0].dim();

    let row_max = (0..m)
        .map(|i| (0..m).map(|j| coupling[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let shift = 1.0 + row_max + k.abs();
    let band = stacked_lopez_matrix(diag_ops, coupling, k);
    let (lambda1, phi, residual, iterations) = smallest_eigenpair(&band, shift, 1e-11, 20_000)?;

    // Scalar eigenpairs of each L_i alone for the k-sufficiency inequality.
    let mut component_eigenvalues = Vec::with_capacity(m);
    let mut component_funcs: Vec<Vec<f64>> = Vec::with_capacity(m);
    for op in diag_ops {
        let (lam_i, psi_i, _, _) = smallest_eigenpair(&op.band, 1.0, 1e-11, 20_000)?;
        component_eigenvalues.push(lam_i);
        component_funcs.push(psi_i);
    }
    let mut krem_margin = f64::INFINITY;
    for slot in 0..n_slots {
        for i in 0..m {
            let lhs = (component_eigenvalues[i] + k) * component_funcs[i][slot];
            let rhs: f64 = (0..m)
                .map(|j| coupling[(i, j)] * component_funcs[j][slot])
                .sum();
            krem_margin = krem_margin.min(lhs - rhs);
        }
    }

    Ok(LopezResult {
        lambda1,
        phi,
        k_used: k,
        k_large_enough: krem_margin > 0.0,
        krem_margin,
        component_eigenvalues,
        residual,
        iterations,
    })
}

/// Solve `(L + k I - K) u = f` for one strictly positive right-hand side.
pub fn maximum_principle_solve(
    diag_ops: &[DiscreteOperator],
    coupling: &DMatrix<f64>,
    k: f64,
    f: &[f64],
) -> Result<Vec<f64>> {
    let m = validate_lopez_inputs(diag_ops, coupling)?;
    let dim = diag_ops[0].dim() * m;
    if f.len() != dim {
        return Err(Error::shape("right-hand side", (dim, 1), (f.len(), 1)));
    }
    if !f.iter().all(|&v| v > 0.0) {
        return Err(Error::precondition(
            "maximum principle check needs a strictly positive right-hand side",
        ));
    }
    let band = stacked_lopez_matrix(diag_ops, coupling, k);
    Ok(band.factor()?.solve(f))
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleReport {
    pub trials: usize,
    pub positive: usize,
    pub fraction: f64,
    pub k_used: f64,
    /// Most negative solution entry observed over all trials.
    pub worst_entry: f64,
}

/// Sample random strictly positive right-hand sides and report how often the
/// solution of `(L + k I - K) u = f` stays positive at every node.
pub fn maximum_principle_check(
    diag_ops: &[DiscreteOperator],
    coupling: &DMatrix<f64>,
    k: f64,
    trials: usize,
    seed: u64,
) -> Result<MaxPrincipleReport> {
    let m = validate_lopez_inputs(diag_ops, coupling)?;
    if trials == 0 {
        return Err(Error::precondition("need at least one trial"));
    }
    let dim = diag_ops[0].dim() * m;
    let band = stacked_lopez_matrix(diag_ops, coupling, k);
    let lu = band.factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positive = 0usize;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let f: Vec<f64> = (0..dim).map(|_| 0.1 + rng.random::<f64>()).collect();
        let u = lu.solve(&f);
        let min = u.iter().fold(f64::INFINITY, |a, &v| a.min(v));
        worst = worst.min(min);
        if min > 0.0 {
            positive += 1;
        }
    }
    Ok(MaxPrincipleReport {
        trials,
        positive,
        fraction: positive as f64 / trials as f64,
        k_used: k,
        worst_entry: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble, build_grid, Bc, NodeField, Term};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// L = -Δ_h + k, M = (g + k) Id on (0, pi) Dirichlet with m components.
    fn scalar_pencil(n: usize, m: usize, g: f64, k: f64) -> (DiscreteOperator, DiscreteOperator) {
        let grid = build_grid(0.0, PI, n, Bc::Dirichlet).unwrap();
        let eye = DMatrix::identity(m, m);
        let l = assemble(
            &grid,
            m,
            &[
                Term::Diffusion(NodeField::constant(&grid, eye.clone())),
                Term::Mass(NodeField::constant(&grid, eye.clone() * k)),
            ],
        )
        .unwrap();
        let mm = assemble(
            &grid,
            m,
            &[Term::Mass(NodeField::constant(&grid, eye * (g + k)))],
        )
        .unwrap();
        (l, mm)
    }

    #[test]
    fn shifted_laplacian_tau_matches_dense_oracle_and_limit() {
        let (l, m) = scalar_pencil(200, 1, 2.0, 1.0);
        let res = principal_eigenpair(&l, &m, 1e-10, 10_000, 7).unwrap();
        // Continuum value (g + k)/(lambda* + k) = 3/2; h^2 defect allowed.
        assert!((res.tau - 1.5).abs() < 1e-3, "tau = {}", res.tau);
        let oracle = dense_spectral_radius(&l, &m).unwrap();
        assert!((res.tau - oracle).abs() < 1e-9, "tau {} vs dense {}", res.tau, oracle);
        assert!(res.positive);
        assert!(res.residual <= 1e-10);
        // The eigenvector is the sampled principal sine mode.
        let grid = build_grid(0.0, PI, 200, Bc::Dirichlet).unwrap();
        for (slot, p) in grid.unknown_range().enumerate() {
            assert_relative_eq!(res.psi[slot], grid.node_x(p).sin(), epsilon = 1e-6);
        }
    }

    #[test]
    fn equal_operators_give_tau_one_immediately() {
        // Residuals bottom out near cond(L) * eps * ‖L‖ for the random
        // start, so ask for a tolerance the first iterate can meet.
        let (l, _) = scalar_pencil(80, 2, 2.0, 1.0);
        let res = principal_eigenpair(&l, &l, 1e-9, 100, 1).unwrap();
        assert_relative_eq!(res.tau, 1.0, epsilon = 1e-10);
        assert!(res.iterations <= 3, "iterations = {}", res.iterations);
        assert!(res.residual <= 1e-9);
    }

    #[test]
    fn zero_reaction_is_stable() {
        let (l, m) = scalar_pencil(200, 1, 0.0, 1.0);
        let res = principal_eigenpair(&l, &m, 1e-10, 10_000, 3).unwrap();
        assert!((res.tau - 0.5).abs() < 1e-3);
        assert!(!res.v_unstable());
        assert!(res.positive);
    }

    #[test]
    fn kappa_follows_from_tau_and_shift() {
        let (l, m) = scalar_pencil(100, 1, 2.0, 1.0);
        let res = principal_eigenpair(&l, &m, 1e-10, 10_000, 5).unwrap().with_shift(1.0);
        let expect = (res.tau - 1.0) / res.tau;
        assert_relative_eq!(res.kappa.unwrap(), expect, max_relative = 1e-15);
    }

    #[test]
    fn comparison_brackets_the_computed_eigenvalue() {
        let grid = build_grid(0.0, PI, 120, Bc::Dirichlet).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let gk = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]);
        let l = assemble(
            &grid,
            2,
            &[
                Term::Diffusion(NodeField::constant(&grid, a)),
                Term::Mass(NodeField::constant(&grid, DMatrix::identity(2, 2))),
            ],
        )
        .unwrap();
        let m = assemble(&grid, 2, &[Term::Mass(NodeField::constant(&grid, gk))]).unwrap();
        let res = principal_eigenpair(&l, &m, 1e-10, 10_000, 11).unwrap();
        assert!(res.positive);

        let below = spectral_comparison(&l, &m, &res.psi, res.tau - 0.1).unwrap();
        assert_eq!(below.ordering, Ordering3::Greater);
        let above = spectral_comparison(&l, &m, &res.psi, res.tau + 0.1).unwrap();
        assert_eq!(above.ordering, Ordering3::Less);
        let at = spectral_comparison(&l, &m, &res.psi, res.tau).unwrap();
        assert_eq!(at.ordering, Ordering3::Inconclusive);
    }

    #[test]
    fn comparison_requires_positive_test_function() {
        let (l, m) = scalar_pencil(30, 1, 2.0, 1.0);
        let mut phi = vec![1.0; l.dim()];
        phi[3] = 0.0;
        let err = spectral_comparison(&l, &m, &phi, 1.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn scaling_m_scales_tau_and_preserves_psi() {
        let grid = build_grid(0.0, PI, 100, Bc::Dirichlet).unwrap();
        let l = assemble(
            &grid,
            2,
            &[
                Term::Diffusion(NodeField::constant(&grid, DMatrix::identity(2, 2))),
                Term::Mass(NodeField::constant(&grid, DMatrix::identity(2, 2))),
            ],
        )
        .unwrap();
        let gk = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]);
        let m1 = assemble(&grid, 2, &[Term::Mass(NodeField::constant(&grid, gk.clone()))]).unwrap();
        let m2 = assemble(&grid, 2, &[Term::Mass(NodeField::constant(&grid, gk * 2.0))]).unwrap();
        let r1 = principal_eigenpair(&l, &m1, 1e-11, 10_000, 2).unwrap();
        let r2 = principal_eigenpair(&l, &m2, 1e-11, 10_000, 2).unwrap();
        assert_relative_eq!(r2.tau, 2.0 * r1.tau, max_relative = 1e-8);
        let dev = r1
            .psi
            .iter()
            .zip(&r2.psi)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(dev <= 1e-8, "psi deviation {dev:.3e}");
    }

    fn laplacian_ops(n: usize, factors: &[f64]) -> Vec<DiscreteOperator> {
        let grid = build_grid(0.0, PI, n, Bc::Dirichlet).unwrap();
        factors
            .iter()
            .map(|&c| {
                assemble(
                    &grid,
                    1,
                    &[Term::Diffusion(NodeField::constant(
                        &grid,
                        DMatrix::from_element(1, 1, c),
                    ))],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn lopez_symmetric_coupling_matches_dense_eigensolve() {
        let n = 100;
        let ops = laplacian_ops(n, &[1.0, 1.0]);
        let coupling = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let k = 5.0;
        let res = lopez_eigenpair(&ops, &coupling, k).unwrap();

        // Dense oracle: the stacked operator is symmetric here.
        let band = stacked_lopez_matrix(&ops, &coupling, k);
        let dense = band.to_dense();
        let smallest = dense.symmetric_eigen().eigenvalues.min();
        assert_relative_eq!(res.lambda1, smallest, epsilon = 1e-8);

        // Symmetric coupling: principal direction (1,1) sin, lambda1 =
        // lambda*_h + k - 1, close to 5.
        assert!((res.lambda1 - 5.0).abs() < 1e-3);
        assert!(res.k_large_enough);
        let sup = res.phi.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(res.phi.iter().all(|&v| v > 1e-10 * sup));
    }

    #[test]
    fn lopez_decoupled_takes_minimum_component_eigenvalue() {
        let ops = laplacian_ops(80, &[1.0, 2.0]);
        let res = lopez_eigenpair(&ops, &DMatrix::zeros(2, 2), 1.0).unwrap();
        let lam_h = res.component_eigenvalues[0];
        assert!((lam_h - 1.0).abs() < 1e-3);
        assert_relative_eq!(res.lambda1, lam_h + 1.0, epsilon = 1e-8);
    }

    #[test]
    fn lopez_rejects_negative_offdiagonal_coupling() {
        let ops = laplacian_ops(20, &[1.0, 1.0]);
        let coupling = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let err = lopez_eigenpair(&ops, &coupling, 5.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn small_k_fails_the_sufficiency_inequality() {
        let ops = laplacian_ops(60, &[1.0, 1.0]);
        let coupling = DMatrix::from_row_slice(2, 2, &[0.0, 10.0, 10.0, 0.0]);
        let res = lopez_eigenpair(&ops, &coupling, 0.0).unwrap();
        assert!(!res.k_large_enough);
        assert!(res.krem_margin < 0.0);
        assert!(res.lambda1 < 0.0, "lambda1 = {}", res.lambda1);
    }

    #[test]
    fn conforming_system_passes_all_positivity_trials() {
        let ops = laplacian_ops(50, &[1.0, 1.0]);
        let coupling = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let report = maximum_principle_check(&ops, &coupling, 5.0, 100, 42).unwrap();
        assert_eq!(report.positive, 100);
        assert!(report.worst_entry > 0.0);
    }

    #[test]
    fn undersized_k_loses_positivity() {
        let ops = laplacian_ops(50, &[1.0, 1.0]);
        let coupling = DMatrix::from_row_slice(2, 2, &[0.0, 10.0, 10.0, 0.0]);
        let report = maximum_principle_check(&ops, &coupling, 0.0, 50, 42).unwrap();
        assert!(report.fraction < 1.0, "fraction = {}", report.fraction);
        assert!(report.worst_entry < 0.0);
    }

    #[test]
    fn negative_rhs_entry_is_rejected() {
        let ops = laplacian_ops(20, &[1.0, 1.0]);
        let coupling = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mut f = vec![1.0; ops[0].dim() * 2];
        f[5] = -1.0;
        let err = maximum_principle_solve(&ops, &coupling, 5.0, &f).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn eigenpair_exports_parse() {
        let (l, m) = scalar_pencil(20, 1, 2.0, 1.0);
        let res = principal_eigenpair(&l, &m, 1e-10, 10_000, 1).unwrap().with_shift(1.0);
        let grid = build_grid(0.0, PI, 20, Bc::Dirichlet).unwrap();
        let csv = res.psi_csv(&grid, 1);
        assert_eq!(csv.lines().count(), 1 + l.dim());
        assert!(csv.starts_with("node,component,psi\n"));
        let header: serde_json::Value = serde_json::from_str(&res.header_json().unwrap()).unwrap();
        assert!(header["tau"].as_f64().unwrap() > 1.0);
        assert!(header["v_unstable"].as_bool().unwrap());
    }
}
