//! Built-in scenarios with analytically known behaviour.
//!
//! Every scenario lives on (0, pi) with homogeneous Dirichlet conditions and
//! the same scalar u-subsystem `-u'' = u (2 - u)`, so the principal
//! eigenvalue of the Laplacian is exactly 1 and closed forms stay simple.
//! The v-side blocks differ per scenario; where the v-subsystem decouples
//! into sin-profile modes the exponential rates are attached as a
//! [`ClosedFormRef`] for later comparison against simulation output.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::discretization::Bc;
use crate::error::{Error, Result};
use crate::model::{
    principal_eigenvalue, Blocks, ClosedFormRef, FieldSpec, Scenario, SteadySpec, SystemSpec,
};

const DOMAIN: [f64; 2] = [0.0, std::f64::consts::PI];
const DEFAULT_GRID: usize = 200;
const DEFAULT_AMPLITUDE: f64 = 1e-3;

/// Names accepted by [`analytic_scenario`].
pub fn registry_names() -> &'static [&'static str] {
    &[
        "diag_extinction",
        "crossdiff_extinction",
        "coop_persistence",
        "crossdiff_persistence",
        "scaled",
    ]
}

/// Build a named scenario. `params` is a JSON object (or null) of overrides;
/// unknown parameter keys are rejected.
pub fn analytic_scenario(name: &str, params: &Value) -> Result<Scenario> {
    let mut map = params_map(params)?;
    let scn = match name {
        "diag_extinction" => diag_extinction(&mut map),
        "crossdiff_extinction" => crossdiff_extinction(&mut map),
        "coop_persistence" => coop_persistence(&mut map),
        "crossdiff_persistence" => crossdiff_persistence(&mut map),
        "scaled" => scaled(&mut map),
        other => {
            return Err(Error::UnknownScenario(format!(
                "{other} (known: {})",
                registry_names().join(", ")
            )))
        }
    }?;
    if let Some(stray) = map.keys().next() {
        return Err(Error::Validation(format!(
            "unknown parameter `{stray}` for scenario {name}"
        )));
    }
    scn.validate_basic()?;
    Ok(scn)
}

fn params_map(params: &Value) -> Result<BTreeMap<String, Value>> {
    match params {
        Value::Null => Ok(BTreeMap::new()),
        Value::Object(m) => Ok(m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        _ => Err(Error::Validation(
            "scenario parameters must be a JSON object".into(),
        )),
    }
}

fn take<T: serde::de::DeserializeOwned>(
    map: &mut BTreeMap<String, Value>,
    key: &str,
    default: T,
) -> Result<T> {
    match map.remove(key) {
        None => Ok(default),
        Some(v) => serde_json::from_value(v)
            .map_err(|e| Error::Validation(format!("parameter `{key}`: {e}"))),
    }
}

/// Scalar logistic u-subsystem shared by every registry scenario.
fn base_system(m2: usize, a22: FieldSpec, g22: FieldSpec) -> SystemSpec {
    SystemSpec {
        m1: 1,
        m2,
        domain: DOMAIN,
        bc: Bc::Dirichlet,
        blocks: Blocks {
            a11: FieldSpec::scalar(1.0),
            g11: FieldSpec::Logistic { alpha: vec![2.0] },
            a22,
            g22,
            ..Blocks::default()
        },
    }
}

fn scenario_shell(
    label: &str,
    system: SystemSpec,
    k: f64,
    coupling: FieldSpec,
    grid_size: usize,
    closed_form: Option<ClosedFormRef>,
) -> Scenario {
    Scenario {
        label: Some(label.into()),
        system,
        steady: SteadySpec::Solve {
            init_amplitude: 1.0,
            tol: 1e-10,
            max_iter: 60,
        },
        k,
        coupling,
        grid_size,
        closed_form,
    }
}

fn check_square(name: &str, m: &[Vec<f64>], dim: usize) -> Result<()> {
    if m.len() != dim || m.iter().any(|row| row.len() != dim) {
        return Err(Error::Validation(format!(
            "parameter `{name}` must be a {dim} x {dim} matrix"
        )));
    }
    Ok(())
}

fn constant_field(m: &[Vec<f64>]) -> FieldSpec {
    FieldSpec::Constant {
        entries: m.to_vec(),
    }
}

/// Decoupled linear v-subsystem `v_t = a_i v_i'' + sum_j c_ij v_j` with
/// diagonal diffusion. Each component decays (or grows) like
/// exp((-lambda* a_i + c_ii) t) sin(x) when c is diagonal; a full c is
/// accepted only when it yields one common rate for the sin-profile mode.
fn diag_extinction(map: &mut BTreeMap<String, Value>) -> Result<Scenario> {
    let grid_size = take(map, "grid_size", DEFAULT_GRID)?;
    let k = take(map, "k", 1.0)?;
    let a: Vec<f64> = take(map, "a", vec![2.0, 2.0])?;
    let m2 = a.len();
    if m2 == 0 {
        return Err(Error::Validation("parameter `a` must be nonempty".into()));
    }
    if a.iter().any(|&x| x <= 0.0) {
        return Err(Error::Validation(
            "diagonal diffusion entries must be positive".into(),
        ));
    }
    let eye: Vec<Vec<f64>> = (0..m2)
        .map(|i| (0..m2).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let c: Vec<Vec<f64>> = take(map, "c", eye)?;
    check_square("c", &c, m2)?;

    let lam = principal_eigenvalue(DOMAIN);
    let off_diag = c
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| *j != i))
        .fold(0.0f64, |acc, (_, &x)| acc.max(x.abs()));
    let rates: Vec<f64> = if off_diag <= 1e-14 {
        a.iter().zip(&c).enumerate().map(|(i, (&ai, row))| -lam * ai + row[i]).collect()
    } else {
        // Coupled reaction: the sin mode v = (1,..,1) sin(x) e^{rt} only
        // closes if every component sees the same rate.
        let r: Vec<f64> = a
            .iter()
            .zip(&c)
            .map(|(&ai, row)| -lam * ai + row.iter().sum::<f64>())
            .collect();
        let spread = r.iter().fold(f64::NEG_INFINITY, |x, &y| x.max(y))
            - r.iter().fold(f64::INFINITY, |x, &y| x.min(y));
        if spread > 1e-12 {
            return Err(Error::Validation(
                "a non-diagonal `c` needs equal row rates -lambda* a_i + sum_j c_ij \
                 for a closed-form mode; adjust `a` or `c`"
                    .into(),
            ));
        }
        r
    };

    Ok(scenario_shell(
        "diag_extinction",
        base_system(m2, FieldSpec::diag(&a), constant_field(&c)),
        k,
        FieldSpec::Zero,
        grid_size,
        Some(ClosedFormRef {
            rates,
            amplitude: DEFAULT_AMPLITUDE,
        }),
    ))
}

/// Cross-diffusive v-subsystem whose off-diagonal reaction exactly cancels
/// the off-diagonal diffusion on the sin profile: c_ij = lambda* a_ij for
/// i != j, so each component still evolves like exp((-lambda* a_ii + c_ii) t).
fn crossdiff_extinction(map: &mut BTreeMap<String, Value>) -> Result<Scenario> {
    let grid_size = take(map, "grid_size", DEFAULT_GRID)?;
    let k = take(map, "k", 1.0)?;
    let a: Vec<Vec<f64>> = take(map, "a", vec![vec![2.0, 1.0], vec![1.0, 2.0]])?;
    let m2 = a.len();
    check_square("a", &a, m2)?;
    let c_default: Vec<Vec<f64>> = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
    let c: Vec<Vec<f64>> = take(map, "c", c_default)?;
    check_square("c", &c, m2)?;

    let lam = principal_eigenvalue(DOMAIN);
    for i in 0..m2 {
        for j in 0..m2 {
            if i != j && (c[i][j] - lam * a[i][j]).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "closed-form constraint violated at ({i}, {j}): need c_ij = lambda* a_ij \
                     off the diagonal, got c = {} vs lambda* a = {}",
                    c[i][j],
                    lam * a[i][j]
                )));
            }
        }
    }
    let rates: Vec<f64> = (0..m2).map(|i| -lam * a[i][i] + c[i][i]).collect();

    Ok(scenario_shell(
        "crossdiff_extinction",
        base_system(m2, constant_field(&a), constant_field(&c)),
        k,
        FieldSpec::Zero,
        grid_size,
        Some(ClosedFormRef {
            rates,
            amplitude: DEFAULT_AMPLITUDE,
        }),
    ))
}

/// Cooperative coupling pushed through the auxiliary matrix K: plain
/// diffusion, strongly cooperative reaction, large shift k.
fn coop_persistence(map: &mut BTreeMap<String, Value>) -> Result<Scenario> {
    let grid_size = take(map, "grid_size", DEFAULT_GRID)?;
    let k = take(map, "k", 5.0)?;
    Ok(scenario_shell(
        "coop_persistence",
        base_system(
            2,
            FieldSpec::diag(&[1.0, 1.0]),
            FieldSpec::constant(&[&[2.0, 3.0], &[3.0, 2.0]]),
        ),
        k,
        FieldSpec::constant(&[&[0.0, 1.0], &[1.0, 0.0]]),
        grid_size,
        None,
    ))
}

/// Competitive reaction where only the off-diagonal diffusion rescues the
/// slow mode: the full variant is v-unstable, the diagonal comparator with
/// the same reaction is stable.
fn crossdiff_persistence(map: &mut BTreeMap<String, Value>) -> Result<Scenario> {
    let grid_size = take(map, "grid_size", DEFAULT_GRID)?;
    let k = take(map, "k", 1.0)?;
    let variant: String = take(map, "diffusion", "full".to_string())?;
    let a22 = match variant.as_str() {
        "full" => FieldSpec::constant(&[&[1.0, -0.9], &[-0.9, 1.0]]),
        "diag" => FieldSpec::diag(&[1.5, 1.5]),
        other => {
            return Err(Error::Validation(format!(
                "parameter `diffusion` must be \"full\" or \"diag\", got \"{other}\""
            )))
        }
    };
    Ok(scenario_shell(
        "crossdiff_persistence",
        base_system(
            2,
            a22,
            FieldSpec::constant(&[&[0.65, -0.33], &[-0.33, 0.65]]),
        ),
        k,
        FieldSpec::Zero,
        grid_size,
        None,
    ))
}

/// Domain-scaling demonstration: a scalar, stable base problem (no v
/// reaction) pushed through [`Scenario::scaled`]. `R < 1` stretches the
/// domain and multiplies the eigenvalue by exactly R^{-2} on the same grid.
fn scaled(map: &mut BTreeMap<String, Value>) -> Result<Scenario> {
    let grid_size = take(map, "grid_size", DEFAULT_GRID)?;
    let k = take(map, "k", 1.0)?;
    let r = take(map, "R", 0.5)?;
    let base = scenario_shell(
        "scaled",
        base_system(1, FieldSpec::scalar(1.0), FieldSpec::Zero),
        k,
        FieldSpec::Zero,
        grid_size,
        None,
    );
    base.scaled(r)
}
