//! Matrix-structure toolkit for cross-diffusion operators: sign
//! classification, the multiplier class with proportional top blocks,
//! simultaneous triangularization of diffusion/drift pairs, the strict
//! positivity certificate for the transformed inverse operator, and the
//! similarity transform that flips competitive couplings into cooperative
//! ones.
//!
//! The triangularization mechanism, in block form: partition the matrices
//! into main diagonal blocks [[a, b], [c, d]] (a square, b a column, c a
//! row, d a scalar) and take the change-of-variable matrix T with top rows
//! [alpha, alpha k_hat]. If the pair condition
//! `-a k_hat + b = (d - <c, k_hat>) k_bar` holds for both the diffusion and
//! the drift matrix with the same vectors k_hat, k_bar, then the single
//! multiplier block [[Id, -k_bar], [0, 1]] annihilates the strictly upper
//! entries of both products B A T^{-1} and B B_drift T^{-1} at once.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Entrywise sign classification with strict inequalities. For 1x1 matrices
/// the off-diagonal classes are vacuous and reported false.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct MatrixClass {
    pub positive: bool,
    pub nonnegative: bool,
    pub cooperative: bool,
    /// Off-diagonal entries nonnegative (zero allowed), the weak variant.
    pub weakly_cooperative: bool,
    pub competitive: bool,
    pub partially_competitive: bool,
    pub diagonal: bool,
    pub lower_triangular: bool,
}

pub fn classify(a: &DMatrix<f64>) -> Result<MatrixClass> {
    let (n, mcols) = a.shape();
    if n != mcols {
        return Err(Error::shape("classify", (n, n), (n, mcols)));
    }
    let mut class = MatrixClass {
        positive: true,
        nonnegative: true,
        cooperative: n > 1,
        weakly_cooperative: true,
        competitive: n > 1,
        partially_competitive: false,
        diagonal: true,
        lower_triangular: true,
    };
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            class.positive &= v > 0.0;
            class.nonnegative &= v >= 0.0;
            if i != j {
                class.cooperative &= v > 0.0;
                class.weakly_cooperative &= v >= 0.0;
                class.competitive &= v < 0.0;
                class.partially_competitive |= v < 0.0;
                class.diagonal &= v == 0.0;
            }
            if j > i {
                class.lower_triangular &= v == 0.0;
            }
        }
    }
    Ok(class)
}

/// A matrix quantity that is either constant or sampled along the interval.
#[derive(Debug, Clone)]
pub enum MatrixField {
    Constant(DMatrix<f64>),
    Sampled { xs: Vec<f64>, mats: Vec<DMatrix<f64>> },
}

impl MatrixField {
    pub fn constant(m: DMatrix<f64>) -> Self {
        MatrixField::Constant(m)
    }

    pub fn sampled(xs: Vec<f64>, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if xs.len() != mats.len() || xs.is_empty() {
            return Err(Error::precondition(
                "sampled matrix field needs matching, nonempty coordinates and values",
            ));
        }
        Ok(MatrixField::Sampled { xs, mats })
    }

    pub fn n_samples(&self) -> usize {
        match self {
            MatrixField::Constant(_) => 1,
            MatrixField::Sampled { mats, .. } => mats.len(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatrixField::Constant(_))
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixField::Constant(m) => m.shape(),
            MatrixField::Sampled { mats, .. } => mats[0].shape(),
        }
    }

    /// Value at sample i; constants broadcast.
    pub fn at(&self, i: usize) -> &DMatrix<f64> {
        match self {
            MatrixField::Constant(m) => m,
            MatrixField::Sampled { mats, .. } => &mats[i],
        }
    }

    /// Entrywise spatial derivative at sample i: zero for constants,
    /// second-order differences for sampled fields.
    pub fn derivative(&self, i: usize) -> DMatrix<f64> {
        match self {
            MatrixField::Constant(m) => DMatrix::zeros(m.nrows(), m.ncols()),
            MatrixField::Sampled { xs, mats } => {
                let n = mats.len();
                if n == 1 {
                    return DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
                }
                if i == 0 {
                    if n == 2 {
                        return (&mats[1] - &mats[0]) / (xs[1] - xs[0]);
                    }
                    let h = xs[1] - xs[0];
                    (&mats[0] * -3.0 + &mats[1] * 4.0 - &mats[2]) / (2.0 * h)
                } else if i == n - 1 {
                    if n == 2 {
                        return (&mats[1] - &mats[0]) / (xs[1] - xs[0]);
                    }
                    let h = xs[n - 1] - xs[n - 2];
                    (&mats[n - 1] * 3.0 - &mats[n - 2] * 4.0 + &mats[n - 3]) / (2.0 * h)
                } else {
                    (&mats[i + 1] - &mats[i - 1]) / (xs[i + 1] - xs[i - 1])
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.n_samples()).fold(0.0f64, |acc, i| acc.max(self.at(i).amax()))
    }

    fn to_json(&self) -> Value {
        match self {
            MatrixField::Constant(m) => json!({ "constant": rows(m) }),
            MatrixField::Sampled { xs, mats } => json!({
                "xs": xs,
                "samples": mats.iter().map(rows).collect::<Vec<_>>(),
            }),
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Membership verdict for the multiplier class: main diagonal blocks of the
/// form [[alpha, alpha k_hat], [gamma, delta]] with invertible alpha.
#[derive(Debug, Clone)]
pub struct ClassMVerdict {
    pub member: bool,
    pub reason: Option<String>,
}

fn block_starts(k_hat: &[DVector<f64>]) -> Vec<(usize, usize)> {
    let mut starts = Vec::with_capacity(k_hat.len());
    let mut off = 0;
    for kh in k_hat {
        starts.push((off, kh.len() + 1));
        off += kh.len() + 1;
    }
    starts
}

fn invertible(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1e-300);
    let n = m.nrows();
    m.determinant().abs() > 1e-12 * scale.powi(n as i32)
}

/// Check that T's main diagonal blocks have top rows [alpha, alpha k_hat_i]
/// with invertible alpha.
pub fn in_class_m(t: &DMatrix<f64>, k_hat: &[DVector<f64>]) -> Result<ClassMVerdict> {
    let n: usize = k_hat.iter().map(|k| k.len() + 1).sum();
    if t.nrows() != n || t.ncols() != n {
        return Err(Error::shape("class membership", (n, n), (t.nrows(), t.ncols())));
    }
    let scale = t.amax().max(1e-300);
    for (b, (off, size)) in block_starts(k_hat).into_iter().enumerate() {
        let d = size - 1;
        let alpha = t.view((off, off), (d, d)).into_owned();
        let beta = t.view((off, off + d), (d, 1)).into_owned();
        if !invertible(&alpha) {
            return Ok(ClassMVerdict {
                member: false,
                reason: Some(format!("alpha not invertible in block {b}")),
            });
        }
        let defect = (&alpha * &k_hat[b] - beta.column(0)).amax();
        if defect > 1e-9 * scale {
            return Ok(ClassMVerdict {
                member: false,
                reason: Some(format!(
                    "block {b}: top-right column deviates from alpha * k_hat by {defect:.3e}"
                )),
            });
        }
    }
    Ok(ClassMVerdict {
        member: true,
        reason: None,
    })
}

#[derive(Debug, Clone)]
pub struct BlockConditionReport {
    pub holds: bool,
    pub reason: Option<String>,
    /// Largest relative defect of the pair identity over all blocks.
    pub worst_defect: f64,
}

fn split_block<'a>(
    q: &'a DMatrix<f64>,
    off: usize,
    d: usize,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, f64) {
    let a = q.view((off, off), (d, d)).into_owned();
    let b = DVector::from_column_slice(q.view((off, off + d), (d, 1)).as_slice());
    let c = q.view((off + d, off), (1, d)).into_owned();
    let delta = q[(off + d, off + d)];
    (a, b, c, delta)
}

/// The pair condition `-a k_hat + b = (d - <c, k_hat>) k_bar` per main block
/// of each matrix, plus the reduced-block invertibility requirement.
pub fn check_block_condition(
    a_mat: &DMatrix<f64>,
    b_mat: &DMatrix<f64>,
    k_hat: &[DVector<f64>],
    k_bar: &[DVector<f64>],
) -> Result<BlockConditionReport> {
    let n: usize = k_hat.iter().map(|k| k.len() + 1).sum();
    if a_mat.shape() != (n, n) || b_mat.shape() != (n, n) {
        return Err(Error::shape("block condition", (n, n), a_mat.shape()));
    }
    if k_bar.len() != k_hat.len() || k_bar.iter().zip(k_hat).any(|(kb, kh)| kb.len() != kh.len()) {
        return Err(Error::precondition(
            "k_bar must mirror the block structure of k_hat",
        ));
    }
    let scale = a_mat.amax().max(b_mat.amax()).max(1e-300);
    let mut worst = 0.0f64;
    let b_is_zero = b_mat.amax() <= 1e-14 * scale;
    for (blk, (off, size)) in block_starts(k_hat).into_iter().enumerate() {
        let d = size - 1;
        let kh = &k_hat[blk];
        let kb = &k_bar[blk];
        for (name, q) in [("diffusion", a_mat), ("drift", b_mat)] {
            if name == "drift" && b_is_zero {
                continue;
            }
            let (a, b, c, delta) = split_block(q, off, d);
            let lhs = -&a * kh + &b;
            let rhs = kb * (delta - (c.transpose().column(0)).dot(kh));
            let defect = (lhs - rhs).amax() / scale;
            worst = worst.max(defect);
            if defect > 1e-12 {
                return Ok(BlockConditionReport {
                    holds: false,
                    reason: Some(format!(
                        "block {blk} of the {name} matrix violates the pair identity \
                         (relative defect {defect:.3e})"
                    )),
                    worst_defect: worst,
                });
            }
        }
        // Invertibility of a - (1/d) b c - k_bar (c - (1/d) d c); the last
        // parenthesis vanishes identically but the division needs d != 0.
        let (a, b, c, delta) = split_block(a_mat, off, d);
        if delta == 0.0 {
            return Ok(BlockConditionReport {
                holds: false,
                reason: Some(format!(
                    "block {blk}: delta is zero in the invertibility expression"
                )),
                worst_defect: worst,
            });
        }
        let tail = (&c - &c * delta * (1.0 / delta)).into_owned();
        let reduced = &a - &b * &c * (1.0 / delta) - kb * tail;
        if !invertible(&reduced) {
            return Ok(BlockConditionReport {
                holds: false,
                reason: Some(format!("block {blk}: reduced matrix is not invertible")),
                worst_defect: worst,
            });
        }
    }
    Ok(BlockConditionReport {
        holds: true,
        reason: None,
        worst_defect: worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriMode {
    /// Constant multiplier and change of variable, zero drift matrix.
    ConstLbZeroB,
    /// Constant change of variable; the multiplier-diffusion product must
    /// come out diagonal.
    ConstTDiagLb,
    /// Both the multiplier-diffusion product and the logarithmic derivative
    /// of the change of variable diagonal; fields allowed everywhere.
    DiagLbDiagDtt,
}

/// Outcome of the simultaneous triangularization.
#[derive(Debug, Clone)]
pub struct Triangularization {
    /// The multiplier applied on the left of the system.
    pub b_mult: MatrixField,
    /// Lower-triangular factor with B A T^{-1} = L^{-1} A_d.
    pub l_mult: MatrixField,
    pub t: MatrixField,
    /// Positive diagonal of the triangularized diffusion.
    pub a_diag: MatrixField,
    /// The product L B, the quantity entering the positivity inequality.
    pub lb: MatrixField,
    /// C = -(D(LB) A T^{-1} + LB B T^{-1}); must be diagonal.
    pub c: MatrixField,
    /// C_hat = D(LB) A D(T^{-1}) + LB B D(T^{-1}); must be cooperative
    /// (zero off-diagonals allowed).
    pub c_hat: MatrixField,
    pub k_hat: Vec<DVector<f64>>,
    pub k_bar: Vec<DVector<f64>>,
    /// Largest strictly-upper magnitude of the two triangularized products.
    pub upper_defect: f64,
    pub certified: bool,
    pub failures: Vec<String>,
}

impl Triangularization {
    pub fn to_json(&self) -> Value {
        json!({
            "B_mult": self.b_mult.to_json(),
            "L_mult": self.l_mult.to_json(),
            "T": self.t.to_json(),
            "A_d": self.a_diag.to_json(),
            "LB": self.lb.to_json(),
            "C": self.c.to_json(),
            "C_hat": self.c_hat.to_json(),
            "k_hat": self.k_hat.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>(),
            "k_bar": self.k_bar.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>(),
            "upper_defect": self.upper_defect,
            "certified": self.certified,
            "failures": self.failures,
        })
    }
}

fn strict_upper_max(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max(m[(i, j)].abs());
        }
    }
    worst
}

fn off_diag_min(m: &DMatrix<f64>) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                min = min.min(m[(i, j)]);
            }
        }
    }
    min
}

fn off_diag_max_abs(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

fn field_is_zero(f: &MatrixField) -> bool {
    f.max_abs() <= 1e-14
}

/// Check the strictly-upper *block* pattern (above the main-block diagonal)
/// vanishes; lower blocks are unconstrained.
fn block_upper_defect(m: &DMatrix<f64>, starts: &[(usize, usize)]) -> f64 {
    let mut worst = 0.0f64;
    for (bi, &(oi, si)) in starts.iter().enumerate() {
        for &(oj, sj) in starts.iter().skip(bi + 1) {
            for i in oi..oi + si {
                for j in oj..oj + sj {
                    worst = worst.max(m[(i, j)].abs());
                }
            }
        }
    }
    worst
}

/// Simultaneously triangularize the diffusion/drift pair under the declared
/// main-block partition (`sizes`, each at least 2). The class vectors k_hat
/// are read off T, k_bar off the diffusion matrix; the drift matrix must
/// satisfy the same pair identity. Blocks larger than 2x2 are supported only
/// with a zero drift matrix and constant data.
pub fn triangularize(
    a: &MatrixField,
    b: &MatrixField,
    t: &MatrixField,
    mode: TriMode,
    sizes: &[usize],
) -> Result<Triangularization> {
    let n: usize = sizes.iter().sum();
    if sizes.iter().any(|&s| s < 2) {
        return Err(Error::precondition("main blocks must have size at least 2"));
    }
    for (name, f) in [("diffusion", a), ("drift", b), ("change of variable", t)] {
        if f.shape() != (n, n) {
            return Err(Error::shape(name, (n, n), f.shape()));
        }
    }
    let n_samples = [a, b, t]
        .iter()
        .map(|f| f.n_samples())
        .max()
        .expect("nonempty");
    for f in [a, b, t] {
        if f.n_samples() != 1 && f.n_samples() != n_samples {
            return Err(Error::precondition(
                "sampled inputs must share the same sample count",
            ));
        }
    }
    let b_zero = field_is_zero(b);
    match mode {
        TriMode::ConstLbZeroB => {
            if !b_zero {
                return Err(Error::precondition(
                    "this mode requires a zero drift matrix",
                ));
            }
            if !a.is_constant() || !t.is_constant() {
                return Err(Error::precondition(
                    "this mode requires constant diffusion and change of variable",
                ));
            }
        }
        TriMode::ConstTDiagLb => {
            if !t.is_constant() {
                return Err(Error::precondition(
                    "this mode requires a constant change of variable",
                ));
            }
        }
        TriMode::DiagLbDiagDtt => {}
    }
    if sizes.iter().any(|&s| s > 2) && !b_zero {
        return Err(Error::precondition(
            "blocks larger than 2x2 need a zero drift matrix",
        ));
    }

    let starts: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        let mut off = 0;
        for &s in sizes {
            v.push((off, s));
            off += s;
        }
        v
    };
    let scale = a.max_abs().max(t.max_abs()).max(1e-300);
    for i in 0..n_samples {
        let d = block_upper_defect(a.at(i), &starts).max(block_upper_defect(b.at(i), &starts));
        if d > 1e-12 * scale {
            return Err(Error::precondition(
                "inputs must be block lower triangular with respect to the declared partition",
            ));
        }
    }

    // Class vectors from T and the diffusion matrix at the first sample;
    // constancy across samples is validated below.
    let mut k_hat: Vec<DVector<f64>> = Vec::with_capacity(sizes.len());
    let mut k_bar: Vec<DVector<f64>> = Vec::with_capacity(sizes.len());
    let mut b_blocks: Vec<DMatrix<f64>> = Vec::with_capacity(sizes.len());
    for &(off, size) in &starts {
        let d = size - 1;
        let (alpha, beta, _, _) = split_block(t.at(0), off, d);
        if !invertible(&alpha) {
            return Err(Error::precondition(format!(
                "change-of-variable alpha block at offset {off} is singular"
            )));
        }
        let kh = alpha
            .clone()
            .lu()
            .solve(&beta)
            .ok_or_else(|| Error::Singular {
                condition_estimate: f64::INFINITY,
            })?;

        let (aa, ab, ac, adel) = split_block(a.at(0), off, d);
        let numer = -&aa * &kh + &ab;
        let denom = adel - (ac.transpose().column(0)).dot(&kh);
        let kb = if denom.abs() > 1e-12 * scale {
            numer / denom
        } else if numer.amax() <= 1e-12 * scale {
            DVector::zeros(d)
        } else {
            return Err(Error::precondition(format!(
                "block at offset {off}: pair identity has a degenerate denominator"
            )));
        };

        // Multiplier block: top rows [alpha_B, -alpha_B k_bar], unit bottom.
        let alpha_b = if d == 1 {
            DMatrix::identity(1, 1)
        } else {
            let w = &aa - &kb * ac.row(0);
            if !invertible(&w) {
                return Err(Error::precondition(format!(
                    "block at offset {off}: reduced diffusion block is singular"
                )));
            }
            &alpha
                * w.lu()
                    .try_inverse()
                    .ok_or(Error::Singular {
                        condition_estimate: f64::INFINITY,
                    })?
        };
        let mut blk = DMatrix::zeros(size, size);
        blk.view_mut((0, 0), (d, d)).copy_from(&alpha_b);
        blk.view_mut((0, d), (d, 1)).copy_from(&(-&alpha_b * &kb));
        blk[(d, d)] = 1.0;
        b_blocks.push(blk);
        k_hat.push(kh);
        k_bar.push(kb);
    }
    let mut b_mult_mat = DMatrix::zeros(n, n);
    for (blk, &(off, size)) in b_blocks.iter().zip(&starts) {
        b_mult_mat.view_mut((off, off), (size, size)).copy_from(blk);
    }

    // Validate the pair identity at every sample for both matrices, so the
    // one multiplier works everywhere.
    for i in 0..n_samples {
        for (name, q) in [("diffusion", a), ("drift", b)] {
            if name == "drift" && b_zero {
                continue;
            }
            for (blk, &(off, size)) in starts.iter().enumerate().map(|(j, s)| (j, s)) {
                let d = size - 1;
                let (qa, qb, qc, qdel) = split_block(q.at(i), off, d);
                let lhs = -&qa * &k_hat[blk] + &qb;
                let rhs = &k_bar[blk] * (qdel - (qc.transpose().column(0)).dot(&k_hat[blk]));
                if (lhs - rhs).amax() > 1e-10 * scale {
                    return Err(Error::precondition(format!(
                        "block condition fails for the {name} matrix at sample {i}, block {blk}"
                    )));
                }
            }
        }
    }

    let mut failures: Vec<String> = Vec::new();
    let mut upper_defect = 0.0f64;
    let mut a_diag_mats = Vec::with_capacity(n_samples);
    let mut l_mats = Vec::with_capacity(n_samples);
    let mut lb_mats = Vec::with_capacity(n_samples);
    let mut t_inv_mats = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let t_inv = t
            .at(i)
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::Singular {
                condition_estimate: f64::INFINITY,
            })?;
        let x_a = &b_mult_mat * a.at(i) * &t_inv;
        let x_b = &b_mult_mat * b.at(i) * &t_inv;
        upper_defect = upper_defect
            .max(strict_upper_max(&x_a))
            .max(strict_upper_max(&x_b));

        let mut a_d = DMatrix::zeros(n, n);
        let mut ok = true;
        for j in 0..n {
            let v = x_a[(j, j)].abs();
            if v <= 1e-12 * scale {
                failures.push(format!(
                    "triangularized diffusion has vanishing diagonal entry {j} at sample {i}"
                ));
                ok = false;
                break;
            }
            a_d[(j, j)] = v;
        }
        if !ok {
            a_d = DMatrix::identity(n, n);
        }
        let x_a_inv = x_a.clone().lu().try_inverse().ok_or(Error::Singular {
            condition_estimate: f64::INFINITY,
        })?;
        let l = &a_d * &x_a_inv;
        let lb = &l * &b_mult_mat;
        a_diag_mats.push(a_d);
        l_mats.push(l);
        lb_mats.push(lb);
        t_inv_mats.push(t_inv);
    }

    if upper_defect > 1e-10 * scale {
        failures.push(format!(
            "triangularized products keep strictly-upper mass {upper_defect:.3e}"
        ));
    }

    // Package fields; sample coordinates follow whichever input is sampled.
    let xs: Vec<f64> = match (a, b, t) {
        (MatrixField::Sampled { xs, .. }, _, _)
        | (_, MatrixField::Sampled { xs, .. }, _)
        | (_, _, MatrixField::Sampled { xs, .. }) => xs.clone(),
        _ => vec![0.0],
    };
    let pack = |mats: Vec<DMatrix<f64>>| -> MatrixField {
        if n_samples == 1 {
            MatrixField::Constant(mats.into_iter().next().expect("one sample"))
        } else {
            MatrixField::Sampled {
                xs: xs.clone(),
                mats,
            }
        }
    };
    let lb_field = pack(lb_mats.clone());
    let t_inv_field = pack(t_inv_mats.clone());

    // C and C_hat from the product fields and their sampled derivatives.
    let mut c_mats = Vec::with_capacity(n_samples);
    let mut c_hat_mats = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let dlb = lb_field.derivative(i);
        let dtinv = t_inv_field.derivative(i);
        let c = -(&dlb * a.at(i) * &t_inv_mats[i] + &lb_mats[i] * b.at(i) * &t_inv_mats[i]);
        let c_hat = &dlb * a.at(i) * &dtinv + &lb_mats[i] * b.at(i) * &dtinv;
        let tol = 1e-10 * (1.0 + scale);
        if off_diag_max_abs(&c) > tol {
            failures.push(format!(
                "zeroth-order matrix C is not diagonal at sample {i} \
                 (off-diagonal {:.3e})",
                off_diag_max_abs(&c)
            ));
        }
        if off_diag_min(&c_hat) < -tol {
            failures.push(format!(
                "gradient matrix C_hat has a negative off-diagonal entry at sample {i} \
                 ({:.3e})",
                off_diag_min(&c_hat)
            ));
        }
        c_mats.push(c);
        c_hat_mats.push(c_hat);
    }

    // Mode-specific structural promises.
    match mode {
        TriMode::ConstLbZeroB => {}
        TriMode::ConstTDiagLb | TriMode::DiagLbDiagDtt => {
            for (i, lb) in lb_mats.iter().enumerate() {
                if off_diag_max_abs(lb) > 1e-10 * (1.0 + scale) {
                    failures.push(format!(
                        "multiplier product LB is not diagonal at sample {i}"
                    ));
                    break;
                }
            }
            if mode == TriMode::DiagLbDiagDtt {
                for i in 0..n_samples {
                    let dtt = t.derivative(i)
                        * t.at(i).clone().lu().try_inverse().ok_or(Error::Singular {
                            condition_estimate: f64::INFINITY,
                        })?;
                    if off_diag_max_abs(&dtt) > 1e-8 * (1.0 + scale) {
                        failures.push(format!(
                            "logarithmic derivative of T is not diagonal at sample {i}"
                        ));
                        break;
                    }
                }
            }
        }
    }

    failures.dedup();
    let certified = failures.is_empty();
    Ok(Triangularization {
        b_mult: MatrixField::Constant(b_mult_mat),
        l_mult: pack(l_mats),
        t: t.clone(),
        a_diag: pack(a_diag_mats),
        lb: lb_field,
        c: pack(c_mats),
        c_hat: pack(c_hat_mats),
        k_hat,
        k_bar,
        upper_defect,
        certified,
        failures,
    })
}

/// The strict positivity certificate for the transformed inverse operator.
#[derive(Debug, Clone)]
pub struct PositivityCertificate {
    pub p_pos: DMatrix<f64>,
    pub p_coop: DMatrix<f64>,
    pub kappa: f64,
    pub k: f64,
    pub mppos_holds: bool,
    /// Minimal entrywise slack of the certifying inequality over samples.
    pub margin: f64,
    /// The induced reaction matrix (LB)^{-1} [P_pos + kappa Id - P_coop] T - k Id.
    pub m_out: MatrixField,
    /// m_out shifted by another -k Id, the background matrix.
    pub m_bg: MatrixField,
}

impl PositivityCertificate {
    pub fn to_json(&self) -> Value {
        json!({
            "P_pos": rows(&self.p_pos),
            "P_coop": rows(&self.p_coop),
            "kappa": self.kappa,
            "k": self.k,
            "mppos_holds": self.mppos_holds,
            "margin": self.margin,
            "M_out": self.m_out.to_json(),
            "m_bg": self.m_bg.to_json(),
        })
    }
}

fn inverse_or_singular(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !invertible(m) {
        return Err(Error::Singular {
            condition_estimate: f64::INFINITY,
        });
    }
    m.clone().lu().try_inverse().ok_or(Error::Singular {
        condition_estimate: f64::INFINITY,
    })
}

/// Evaluate the certifying inequality
/// `kappa T^{-1} P_pos^{-1} T > T^{-1} P_pos^{-1} (P_coop T + k LB)`
/// at every sample of the triangularization and emit the induced matrices.
pub fn certify_positivity(
    tri: &Triangularization,
    p_pos: &DMatrix<f64>,
    p_coop: &DMatrix<f64>,
    k: f64,
    kappa: f64,
) -> Result<PositivityCertificate> {
    if !classify(p_pos)?.positive {
        return Err(Error::precondition(
            "certificate needs an entrywise positive matrix P_pos",
        ));
    }
    let coop_class = classify(p_coop)?;
    if !(coop_class.cooperative || coop_class.weakly_cooperative) {
        return Err(Error::precondition(
            "certificate needs a cooperative matrix P_coop",
        ));
    }
    if !tri.certified {
        return Err(Error::precondition(
            "triangularization is not certified; cannot evaluate the positivity inequality",
        ));
    }
    let n = p_pos.nrows();
    let p_pos_inv = inverse_or_singular(p_pos)?;
    let n_samples = tri.lb.n_samples().max(tri.t.n_samples());

    let mut margin = f64::INFINITY;
    let mut m_out_mats = Vec::with_capacity(n_samples);
    let mut m_bg_mats = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let t_i = tri.t.at(if tri.t.n_samples() == 1 { 0 } else { i });
        let lb_i = tri.lb.at(if tri.lb.n_samples() == 1 { 0 } else { i });
        let t_inv = inverse_or_singular(t_i)?;
        let lb_inv = inverse_or_singular(lb_i)?;
        let lhs = &t_inv * &p_pos_inv * t_i * kappa;
        let rhs = &t_inv * &p_pos_inv * (p_coop * t_i + lb_i * k);
        for r in 0..n {
            for c in 0..n {
                margin = margin.min(lhs[(r, c)] - rhs[(r, c)]);
            }
        }
        let core = p_pos + DMatrix::identity(n, n) * kappa - p_coop;
        let m_out = &lb_inv * core * t_i - DMatrix::identity(n, n) * k;
        let m_bg = &m_out - DMatrix::identity(n, n) * k;
        m_out_mats.push(m_out);
        m_bg_mats.push(m_bg);
    }
    let pack = |mats: Vec<DMatrix<f64>>| {
        if mats.len() == 1 {
            MatrixField::Constant(mats.into_iter().next().expect("one"))
        } else {
            match &tri.lb {
                MatrixField::Sampled { xs, .. } => MatrixField::Sampled {
                    xs: xs.clone(),
                    mats,
                },
                MatrixField::Constant(_) => match &tri.t {
                    MatrixField::Sampled { xs, .. } => MatrixField::Sampled {
                        xs: xs.clone(),
                        mats,
                    },
                    MatrixField::Constant(_) => unreachable!("multiple samples need coordinates"),
                },
            }
        }
    };
    Ok(PositivityCertificate {
        p_pos: p_pos.clone(),
        p_coop: p_coop.clone(),
        kappa,
        k,
        mppos_holds: margin > 0.0,
        margin,
        m_out: pack(m_out_mats),
        m_bg: pack(m_bg_mats),
    })
}

/// Sign-flip similarity for block-competitive couplings.
#[derive(Debug, Clone)]
pub struct CompetitiveTransform {
    /// diag(Id_k, -Id_l); its own inverse.
    pub p: DMatrix<f64>,
    pub g_bar: DMatrix<f64>,
    pub class_of_g_bar: MatrixClass,
}

impl CompetitiveTransform {
    /// The coefficient rewriting rule for matrices: P^{-1} M P.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.p * m * &self.p
    }
}

/// Conjugate G by P = diag(Id_k, -Id_l), flipping the sign of the
/// off-diagonal blocks. Spectra are preserved; a matrix whose off-diagonal
/// blocks are entrywise negative and diagonal blocks cooperative becomes
/// cooperative.
pub fn competitive_transform(
    g: &DMatrix<f64>,
    sizes: (usize, usize),
) -> Result<CompetitiveTransform> {
    let (kdim, ldim) = sizes;
    let n = kdim + ldim;
    if g.shape() != (n, n) || kdim == 0 || ldim == 0 {
        return Err(Error::shape("competitive transform", (n, n), g.shape()));
    }
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, i)] = if i < kdim { 1.0 } else { -1.0 };
    }
    debug_assert!((&p * &p - DMatrix::identity(n, n)).amax() < 1e-15);
    let g_bar = &p * g * &p;
    let class_of_g_bar = classify(&g_bar)?;
    Ok(CompetitiveTransform {
        p,
        g_bar,
        class_of_g_bar,
    })
}

/// Decompose a prescribed reaction matrix as
/// `M_target = (LB)^{-1} P_pos T + nu_star M_*` with positive M_*, positive
/// P_pos and cooperative P_coop, using a one-parameter template family.
/// `nu_star = +1` shrinks M_target itself (M_* = (1 - theta) M_target);
/// `nu_star = -1` adds a positive rank-one-style bump (M_* = theta * ones).
pub fn build_m_from_given(
    m_target: &DMatrix<f64>,
    lb: &DMatrix<f64>,
    t: &DMatrix<f64>,
    k: f64,
    kappa: f64,
    nu_star: i32,
) -> Result<PositivityCertificate> {
    if nu_star != 1 && nu_star != -1 {
        return Err(Error::precondition("nu_star must be +1 or -1"));
    }
    let n = m_target.nrows();
    for (name, q) in [("target", m_target), ("multiplier product", lb), ("change of variable", t)] {
        if q.shape() != (n, n) {
            return Err(Error::shape(name, (n, n), q.shape()));
        }
    }
    let nu = nu_star as f64;
    // nu_star T > 0 entrywise is the admissibility condition on T.
    for i in 0..n {
        for j in 0..n {
            if nu * t[(i, j)] <= 0.0 {
                return Err(Error::precondition(format!(
                    "need nu_star * T > 0 entrywise; entry ({i}, {j}) = {}",
                    t[(i, j)]
                )));
            }
        }
    }
    let lb_class = classify(lb)?;
    let diag_pos = (0..n).all(|i| lb[(i, i)] > 0.0);
    if !(lb_class.positive || diag_pos) {
        return Err(Error::precondition(
            "multiplier product must be positive or have positive diagonal entries",
        ));
    }
    let t_inv = inverse_or_singular(t)?;
    let scale = 1.0 + m_target.amax();

    let thetas: Vec<f64> = if nu_star == 1 {
        (1..20).map(|i| i as f64 * 0.05).collect()
    } else {
        (1..=400).map(|i| i as f64 * 0.05 * scale).collect()
    };
    let ones = DMatrix::from_element(n, n, 1.0);
    let mut last_reason = String::from("no candidate evaluated");
    for &theta in &thetas {
        let m_star = if nu_star == 1 {
            m_target * (1.0 - theta)
        } else {
            &ones * theta
        };
        if !classify(&m_star)?.positive {
            last_reason = format!("theta = {theta}: M_* is not entrywise positive");
            continue;
        }
        let p_pos = lb * (m_target - &m_star * nu) * &t_inv;
        if !classify(&p_pos)?.positive {
            last_reason = format!("theta = {theta}: induced P_pos has a nonpositive entry");
            continue;
        }
        let q = lb * (&m_star * nu + DMatrix::identity(n, n) * k) * &t_inv;
        let p_coop = DMatrix::identity(n, n) * kappa - &q;
        if !classify(&p_coop)?.cooperative {
            last_reason = format!(
                "theta = {theta}: induced P_coop is not cooperative \
                 (smallest off-diagonal {:.3e})",
                off_diag_min(&p_coop)
            );
            continue;
        }
        // Exact reconstruction check, then the positivity inequality report.
        let lb_inv = inverse_or_singular(lb)?;
        let core = &p_pos + DMatrix::identity(n, n) * kappa - &p_coop;
        let m_rec = &lb_inv * core * t - DMatrix::identity(n, n) * k;
        let defect = (&m_rec - m_target).amax();
        if defect > 1e-9 * scale {
            last_reason = format!("theta = {theta}: reconstruction defect {defect:.3e}");
            continue;
        }

        let p_pos_inv = inverse_or_singular(&p_pos)?;
        let lhs = &t_inv * &p_pos_inv * t * kappa;
        let rhs = &t_inv * &p_pos_inv * (&p_coop * t + lb * k);
        let mut margin = f64::INFINITY;
        for r in 0..n {
            for c in 0..n {
                margin = margin.min(lhs[(r, c)] - rhs[(r, c)]);
            }
        }
        let m_bg = &m_rec - DMatrix::identity(n, n) * k;
        return Ok(PositivityCertificate {
            p_pos,
            p_coop,
            kappa,
            k,
            mppos_holds: margin > 0.0,
            margin,
            m_out: MatrixField::Constant(m_rec),
            m_bg: MatrixField::Constant(m_bg),
        });
    }
    Err(Error::precondition(format!(
        "no admissible decomposition found under the template family; last failure: {last_reason}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m2(rows: [[f64; 2]; 2]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[rows[0][0], rows[0][1], rows[1][0], rows[1][1]])
    }

    #[test]
    fn classification_follows_strict_sign_patterns() {
        let c = classify(&m2([[1.0, 2.0], [3.0, 4.0]])).unwrap();
        assert!(c.positive && c.cooperative && c.nonnegative);
        assert!(!c.competitive && !c.partially_competitive);

        let c = classify(&m2([[1.0, -1.0], [-1.0, 1.0]])).unwrap();
        assert!(c.competitive && c.partially_competitive);
        assert!(!c.cooperative && !c.positive);

        let c = classify(&m2([[1.0, 2.0], [-1.0, 3.0]])).unwrap();
        assert!(c.partially_competitive && !c.competitive && !c.cooperative);

        let c = classify(&m2([[2.0, 0.0], [0.0, 3.0]])).unwrap();
        assert!(c.diagonal && c.lower_triangular && c.weakly_cooperative);
        assert!(!c.cooperative);

        assert!(classify(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn class_membership_requires_proportional_top_blocks() {
        // 3x3 block: alpha = Id_2, k_hat = (1,1), so the top-right column
        // must equal (1,1).
        let t = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.5, 0.5, 2.0],
        );
        let k_hat = vec![DVector::from_column_slice(&[1.0, 1.0])];
        assert!(in_class_m(&t, &k_hat).unwrap().member);

        let mut t_bad = t.clone();
        t_bad[(0, 2)] += 1e-3;
        let verdict = in_class_m(&t_bad, &k_hat).unwrap();
        assert!(!verdict.member);

        let mut t_sing = t;
        t_sing[(0, 0)] = 0.0;
        t_sing[(0, 1)] = 0.0;
        let verdict = in_class_m(&t_sing, &k_hat).unwrap();
        assert!(!verdict.member);
        assert!(verdict.reason.unwrap().contains("alpha not invertible"));
    }

    #[test]
    fn scalar_block_condition_matches_hand_arithmetic() {
        // a=1, b=3, c=2, d=4, k_hat=1, k_bar=1: -1*1+3 = 2 = (4-2*1)*1.
        let a = m2([[1.0, 3.0], [2.0, 4.0]]);
        let b = DMatrix::zeros(2, 2);
        let k_hat = vec![DVector::from_column_slice(&[1.0])];
        let k_bar = vec![DVector::from_column_slice(&[1.0])];
        let rep = check_block_condition(&a, &b, &k_hat, &k_bar).unwrap();
        assert!(rep.holds, "{rep:?}");

        let a_bad = m2([[1.0, 3.0], [2.0, 5.0]]);
        let rep = check_block_condition(&a_bad, &b, &k_hat, &k_bar).unwrap();
        assert!(!rep.holds);

        let a_div = m2([[1.0, 1.0], [2.0, 0.0]]);
        let k_bar0 = vec![DVector::from_column_slice(&[0.5])];
        let rep = check_block_condition(&a_div, &b, &k_hat, &k_bar0).unwrap();
        assert!(!rep.holds);
        assert!(rep.reason.unwrap().contains("delta is zero"));
    }

    #[test]
    fn diagonal_constant_case_triangularizes_to_identity_multipliers() {
        let a = MatrixField::constant(m2([[2.0, 0.0], [0.0, 3.0]]));
        let b = MatrixField::constant(DMatrix::zeros(2, 2));
        let t = MatrixField::constant(DMatrix::identity(2, 2));
        let tri = triangularize(&a, &b, &t, TriMode::ConstLbZeroB, &[2]).unwrap();
        assert!(tri.certified, "{:?}", tri.failures);
        assert!((tri.b_mult.at(0) - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((tri.l_mult.at(0) - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((tri.a_diag.at(0) - m2([[2.0, 0.0], [0.0, 3.0]])).amax() < 1e-12);
        assert!(tri.c.max_abs() < 1e-12);
        assert!(tri.c_hat.max_abs() < 1e-12);
    }

    /// The showcase pair: symmetric diffusion with strong negative cross
    /// terms, sign-flip change of variable. Expected multiplier by hand:
    /// k_hat = 0, k_bar = -0.9, B = [[1, 0.9], [0, 1]].
    fn showcase_tri() -> Triangularization {
        let a = MatrixField::constant(m2([[1.0, -0.9], [-0.9, 1.0]]));
        let b = MatrixField::constant(DMatrix::zeros(2, 2));
        let t = MatrixField::constant(m2([[1.0, 0.0], [0.0, -1.0]]));
        triangularize(&a, &b, &t, TriMode::ConstLbZeroB, &[2]).unwrap()
    }

    #[test]
    fn cross_diffusion_showcase_matches_hand_computation() {
        let tri = showcase_tri();
        assert!(tri.certified, "{:?}", tri.failures);
        assert_relative_eq!(tri.k_bar[0][0], -0.9, max_relative = 1e-12);
        assert!((tri.b_mult.at(0) - m2([[1.0, 0.9], [0.0, 1.0]])).amax() < 1e-12);
        assert!((tri.a_diag.at(0) - m2([[0.19, 0.0], [0.0, 1.0]])).amax() < 1e-12);
        assert!(tri.upper_defect < 1e-12);

        // Brute-force oracle: multiply out B A T^{-1} directly.
        let a = m2([[1.0, -0.9], [-0.9, 1.0]]);
        let t_inv = m2([[1.0, 0.0], [0.0, -1.0]]);
        let x = tri.b_mult.at(0) * a * t_inv;
        assert!(x[(0, 1)].abs() < 1e-14);
        assert_relative_eq!(x[(0, 0)], 0.19, max_relative = 1e-12);
        // And L^{-1} A_d reproduces the same product.
        let l_inv = tri.l_mult.at(0).clone().try_inverse().unwrap();
        assert!((l_inv * tri.a_diag.at(0) - x).amax() < 1e-12);
    }

    #[test]
    fn constant_t_mode_handles_diagonal_field_times_constant() {
        // A(x) = diag(d1(x), d2(x)) * C1 with T = C1: the products become
        // diagonal fields; verified by brute multiplication per sample.
        let c1 = m2([[1.0, 0.5], [0.3, 1.0]]);
        let xs: Vec<f64> = (0..20).map(|i| 0.1 + 0.15 * i as f64).collect();
        let a_mats: Vec<DMatrix<f64>> = xs
            .iter()
            .map(|&x| DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0 + x * x, 2.0 + x.sin()])) * &c1)
            .collect();
        let b_mats: Vec<DMatrix<f64>> = xs
            .iter()
            .map(|&x| DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5 + 0.1 * x, 1.0 + 0.2 * x])) * &c1)
            .collect();
        let a = MatrixField::sampled(xs.clone(), a_mats.clone()).unwrap();
        let b = MatrixField::sampled(xs.clone(), b_mats.clone()).unwrap();
        let t = MatrixField::constant(c1.clone());
        let tri = triangularize(&a, &b, &t, TriMode::ConstTDiagLb, &[2]).unwrap();
        assert!(tri.certified, "{:?}", tri.failures);
        assert!(tri.upper_defect < 1e-10);

        let t_inv = c1.try_inverse().unwrap();
        for (i, am) in a_mats.iter().enumerate() {
            let x = tri.b_mult.at(0) * am * &t_inv;
            assert!(strict_upper_max(&x) < 1e-12, "sample {i}");
            let xb = tri.b_mult.at(0) * &b_mats[i] * &t_inv;
            assert!(strict_upper_max(&xb) < 1e-12, "sample {i}");
        }
    }

    #[test]
    fn field_t_mode_keeps_log_derivative_and_products_diagonal() {
        let c = m2([[1.0, 0.5], [0.3, 1.0]]);
        let xs: Vec<f64> = (0..25).map(|i| 0.2 + 0.1 * i as f64).collect();
        let deltas: Vec<(f64, f64)> = xs.iter().map(|&x| (1.0 + x * x, 2.0 + x)).collect();
        let t_mats: Vec<DMatrix<f64>> = deltas
            .iter()
            .map(|&(d1, d2)| DMatrix::from_diagonal(&DVector::from_column_slice(&[d1, d2])) * &c)
            .collect();
        let a_mats: Vec<DMatrix<f64>> = xs
            .iter()
            .map(|&x| DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0 + x, 1.0 + 0.5 * x])) * &c)
            .collect();
        let b_mats: Vec<DMatrix<f64>> = xs
            .iter()
            .map(|&x| DMatrix::from_diagonal(&DVector::from_column_slice(&[0.2 * x, 0.1 + 0.3 * x])) * &c)
            .collect();
        let a = MatrixField::sampled(xs.clone(), a_mats).unwrap();
        let b = MatrixField::sampled(xs.clone(), b_mats).unwrap();
        let t = MatrixField::sampled(xs, t_mats).unwrap();
        let tri = triangularize(&a, &b, &t, TriMode::DiagLbDiagDtt, &[2]).unwrap();
        assert!(tri.certified, "{:?}", tri.failures);
        // C_hat is genuinely nonzero here (T varies) but stays diagonal.
        assert!(tri.c_hat.max_abs() > 1e-6);
    }

    #[test]
    fn violated_pair_identity_is_rejected() {
        let a = MatrixField::constant(m2([[1.0, 5.0], [-0.9, 1.0]]));
        let b = MatrixField::constant(m2([[1.0, 1.0], [0.0, 1.0]]));
        let t = MatrixField::constant(m2([[1.0, 0.0], [0.0, -1.0]]));
        let err = triangularize(&a, &b, &t, TriMode::ConstTDiagLb, &[2]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("block condition"), "{msg}");
    }

    #[test]
    fn positivity_certificate_on_the_showcase_instance() {
        let tri = showcase_tri();
        let p_pos = m2([[2.0, 1.0], [1.0, 2.0]]);
        let p_coop = m2([[0.0, 1.0], [1.0, 0.0]]);
        let cert = certify_positivity(&tri, &p_pos, &p_coop, 1.0, 1e3).unwrap();
        assert!(cert.mppos_holds, "margin {}", cert.margin);

        // Independent evaluation of both sides of the inequality.
        let t = m2([[1.0, 0.0], [0.0, -1.0]]);
        let p_inv = p_pos.clone().try_inverse().unwrap();
        let lhs = &t * &p_inv * &t * 1e3;
        let rhs = &t * &p_inv * (&p_coop * &t + tri.lb.at(0) * 1.0);
        let mut margin = f64::INFINITY;
        for i in 0..2 {
            for j in 0..2 {
                margin = margin.min(lhs[(i, j)] - rhs[(i, j)]);
            }
        }
        assert_relative_eq!(cert.margin, margin, max_relative = 1e-10);

        // kappa = 0 cannot dominate the right-hand side.
        let cert0 = certify_positivity(&tri, &p_pos, &p_coop, 1.0, 0.0).unwrap();
        assert!(!cert0.mppos_holds);

        // Monotone in kappa once it holds.
        let cert2 = certify_positivity(&tri, &p_pos, &p_coop, 1.0, 2e3).unwrap();
        assert!(cert2.mppos_holds && cert2.margin > cert.margin);

        let p_zero = m2([[1.0, 0.0], [1.0, 1.0]]);
        assert!(certify_positivity(&tri, &p_zero, &p_coop, 1.0, 1e3).is_err());
    }

    #[test]
    fn competitive_transform_flips_offdiagonal_blocks() {
        let g = m2([[1.0, -2.0], [-3.0, 4.0]]);
        let tr = competitive_transform(&g, (1, 1)).unwrap();
        assert!((&tr.g_bar - m2([[1.0, 2.0], [3.0, 4.0]])).amax() < 1e-14);
        assert!(tr.class_of_g_bar.cooperative);

        // Similarity preserves the spectrum.
        let mut e1: Vec<f64> = g.complex_eigenvalues().iter().map(|z| z.re).collect();
        let mut e2: Vec<f64> = tr.g_bar.complex_eigenvalues().iter().map(|z| z.re).collect();
        e1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in e1.iter().zip(&e2) {
            assert_relative_eq!(x, y, epsilon = 1e-10);
        }

        assert!(competitive_transform(&g, (2, 1)).is_err());
    }

    #[test]
    fn double_transform_is_the_identity() {
        let g = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, -2.0, -0.5, -3.0, 4.0, 1.0, -1.0, 2.0, 0.5],
        );
        let tr = competitive_transform(&g, (1, 2)).unwrap();
        let back = competitive_transform(&tr.g_bar, (1, 2)).unwrap();
        assert!((&back.g_bar - &g).amax() < 1e-14);
    }

    #[test]
    fn completely_competitive_target_admits_negative_branch() {
        let m_target = m2([[-1.0, -3.0], [-3.0, -1.0]]);
        let lb = m2([[1.0, -2.0], [-2.0, 1.0]]);
        let t = m2([[-1.0, 0.0], [0.0, -1.0]]);
        let cert = build_m_from_given(&m_target, &lb, &t, 1.0, 20.0, -1).unwrap();
        assert!(classify(&cert.p_pos).unwrap().positive);
        assert!(classify(&cert.p_coop).unwrap().cooperative);
        let m_out = cert.m_out.at(0);
        assert!((m_out - &m_target).amax() < 1e-9);
    }

    #[test]
    fn positive_target_admits_positive_branch() {
        let m_target = m2([[5.0, 4.6], [4.6, 5.0]]);
        let lb = m2([[1.0, 0.0], [0.0, 2.0]]);
        let t = m2([[1.0, 0.9], [0.9, 1.0]]);
        let cert = build_m_from_given(&m_target, &lb, &t, 1.0, 30.0, 1).unwrap();
        assert!(classify(&cert.p_pos).unwrap().positive);
        assert!(classify(&cert.p_coop).unwrap().cooperative);
        assert!((cert.m_out.at(0) - &m_target).amax() < 1e-9);
    }

    #[test]
    fn positive_branch_rejects_sign_flipping_t() {
        let m_target = m2([[5.0, 1.0], [1.0, 5.0]]);
        let lb = DMatrix::identity(2, 2);
        let t = m2([[1.0, 0.0], [0.0, -1.0]]);
        let err = build_m_from_given(&m_target, &lb, &t, 1.0, 10.0, 1).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn certificates_serialize_with_all_matrices() {
        let tri = showcase_tri();
        let v = tri.to_json();
        assert_eq!(v["certified"], Value::Bool(true));
        assert!(v["B_mult"]["constant"].is_array());

        let cert = certify_positivity(
            &tri,
            &m2([[2.0, 1.0], [1.0, 2.0]]),
            &m2([[0.0, 1.0], [1.0, 0.0]]),
            1.0,
            1e3,
        )
        .unwrap();
        let vj = cert.to_json();
        assert_eq!(vj["mppos_holds"], Value::Bool(true));
        assert!(vj["M_out"]["constant"].is_array());
    }
}
