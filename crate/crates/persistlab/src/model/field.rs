//! Serializable coefficient fields.
//!
//! A block of the system (diffusion, drift, reaction, or a declared
//! derivative block) is a matrix-valued function of the state (u, v),
//! described by a registry name plus parameters so scenarios round-trip
//! through JSON. Shapes are imposed by the surrounding block slot, not
//! stored in the field itself.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named coefficient field. The JSON form is `{"name": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "name",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum FieldSpec {
    /// Identically zero, any shape.
    Zero,
    /// State-independent matrix.
    Constant { entries: Vec<Vec<f64>> },
    /// State-independent diagonal matrix.
    Diag { entries: Vec<f64> },
    /// `diag(alpha_i - u_i)`: as a reaction block this makes the i-th source
    /// term the logistic expression `u_i (alpha_i - u_i)`.
    Logistic { alpha: Vec<f64> },
    /// `entries * u[component]`.
    ScaleByU {
        entries: Vec<Vec<f64>>,
        #[serde(default)]
        component: usize,
    },
    /// `entries * v[component]`; vanishes at v = 0 as cross-diffusion must.
    ScaleByV {
        entries: Vec<Vec<f64>>,
        #[serde(default)]
        component: usize,
    },
    /// `factor * inner`, used by the domain-scaling construction.
    Scaled { factor: f64, inner: Box<FieldSpec> },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Zero
    }
}

fn matrix_from_rows(context: &str, rows: &[Vec<f64>], nr: usize, nc: usize) -> Result<DMatrix<f64>> {
    let got_r = rows.len();
    let got_c = rows.first().map_or(0, |r| r.len());
    if got_r != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::shape(context, (nr, nc), (got_r, got_c)));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl FieldSpec {
    /// Shortcut for a constant field given row-major entries.
    pub fn constant(rows: &[&[f64]]) -> Self {
        FieldSpec::Constant {
            entries: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn diag(entries: &[f64]) -> Self {
        FieldSpec::Diag {
            entries: entries.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        FieldSpec::Constant {
            entries: vec![vec![value]],
        }
    }

    pub fn scaled(factor: f64, inner: FieldSpec) -> Self {
        FieldSpec::Scaled {
            factor,
            inner: Box::new(inner),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FieldSpec::Zero => true,
            FieldSpec::Scaled { factor, inner } => *factor == 0.0 || inner.is_zero(),
            _ => false,
        }
    }

    /// True if the value changes with (u, v); constant fields let the
    /// simulator reuse factored operators across steps.
    pub fn depends_on_state(&self) -> bool {
        match self {
            FieldSpec::Zero | FieldSpec::Constant { .. } | FieldSpec::Diag { .. } => false,
            FieldSpec::Logistic { .. }
            | FieldSpec::ScaleByU { .. }
            | FieldSpec::ScaleByV { .. } => true,
            FieldSpec::Scaled { inner, .. } => inner.depends_on_state(),
        }
    }

    /// Evaluate at state (u, v) with the shape demanded by the block slot.
    pub fn eval(&self, u: &[f64], v: &[f64], nr: usize, nc: usize) -> Result<DMatrix<f64>> {
        let out = match self {
            FieldSpec::Zero => DMatrix::zeros(nr, nc),
            FieldSpec::Constant { entries } => matrix_from_rows("constant field", entries, nr, nc)?,
            FieldSpec::Diag { entries } => {
                if nr != nc || entries.len() != nr {
                    return Err(Error::shape("diagonal field", (nr, nc), (entries.len(), entries.len())));
                }
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries))
            }
            FieldSpec::Logistic { alpha } => {
                if nr != nc || alpha.len() != nr {
                    return Err(Error::shape("logistic field", (nr, nc), (alpha.len(), alpha.len())));
                }
                if u.len() != alpha.len() {
                    return Err(Error::shape(
                        "logistic field state",
                        (alpha.len(), 1),
                        (u.len(), 1),
                    ));
                }
                DMatrix::from_fn(nr, nc, |i, j| if i == j { alpha[i] - u[i] } else { 0.0 })
            }
            FieldSpec::ScaleByU { entries, component } => {
                let base = matrix_from_rows("u-scaled field", entries, nr, nc)?;
                let s = *u.get(*component).ok_or_else(|| {
                    Error::precondition(format!(
                        "u-scaled field references u[{component}] but m1 = {}",
                        u.len()
                    ))
                })?;
                base * s
            }
            FieldSpec::ScaleByV { entries, component } => {
                let base = matrix_from_rows("v-scaled field", entries, nr, nc)?;
                let s = *v.get(*component).ok_or_else(|| {
                    Error::precondition(format!(
                        "v-scaled field references v[{component}] but m2 = {}",
                        v.len()
                    ))
                })?;
                base * s
            }
            FieldSpec::Scaled { factor, inner } => inner.eval(u, v, nr, nc)? * *factor,
        };
        if out.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("coefficient field evaluation".into()));
        }
        Ok(out)
    }

    /// Evaluate a field that must be constant in the state (fails otherwise);
    /// used where the toolkit needs one matrix, not a field.
    pub fn eval_constant(&self, nr: usize, nc: usize) -> Result<DMatrix<f64>> {
        if self.depends_on_state() {
            return Err(Error::precondition(
                "expected a state-independent field in this position",
            ));
        }
        self.eval(&[], &[], nr, nc)
    }
}
