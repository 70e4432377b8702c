//! Roughness functional, the heat-flow action on coefficients and projection
//! of an orbit onto a smoothness level.

use serde::{Deserialize, Serialize};

use crate::basis::CoeffVector;
use crate::{Error, Result};

/// Largest amplification `exp(-lambda_N t)` a negative flow time may apply.
pub const DEBLUR_LIMIT: f64 = 1e12;

/// Default relative tolerance of [`solve_to_section`].
pub const DEFAULT_SECTION_TOL: f64 = 1e-10;

/// Signed heat-flow time; positive blurs, negative deblurs.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FlowTime(pub f64);

/// Target value `kappa > 0` of the roughness functional.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SmoothnessLevel(f64);

impl SmoothnessLevel {
    pub fn new(kappa: f64) -> Result<Self> {
        if kappa.is_finite() && kappa > 0.0 {
            Ok(Self(kappa))
        } else {
            Err(Error::InvalidKappa(kappa))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SmoothnessLevel {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SmoothnessLevel> for f64 {
    fn from(k: SmoothnessLevel) -> f64 {
        k.0
    }
}

/// First-order roughness `G(c) = sum_n lambda_n c_n^2`, equal to the integral
/// of the squared gradient of the synthesized function.
pub fn g_value(c: &CoeffVector) -> f64 {
    weighted_norm2(c.basis().eigenvalues(), c.coeffs())
}

pub(crate) fn weighted_norm2(lambda: &[f64], c: &[f64]) -> f64 {
    lambda.iter().zip(c).map(|(l, c)| l * c * c).sum()
}

fn g_flowed(lambda: &[f64], c: &[f64], t: f64) -> f64 {
    lambda
        .iter()
        .zip(c)
        .map(|(l, c)| l * (-2.0 * l * t).exp() * c * c)
        .sum()
}

/// Most negative flow time the deblur guard admits for this eigenvalue range.
pub fn min_flow_time(max_eigenvalue: f64) -> f64 {
    if max_eigenvalue <= 0.0 {
        f64::NEG_INFINITY
    } else {
        -DEBLUR_LIMIT.ln() / max_eigenvalue
    }
}

/// Heat flow `c_n -> exp(-lambda_n t) c_n`.
pub fn flow(c: &CoeffVector, t: FlowTime) -> Result<CoeffVector> {
    let t = t.0;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("flow time {t}")));
    }
    let lam_max = c.basis().max_eigenvalue();
    if t < min_flow_time(lam_max) {
        return Err(Error::DeblurOverflow {
            t,
            factor: (-lam_max * t).exp(),
        });
    }
    let mut out = c.clone();
    let basis = c.basis().clone();
    for (v, l) in out.coeffs_mut().iter_mut().zip(basis.eigenvalues()) {
        *v *= (-l * t).exp();
    }
    Ok(out)
}

/// Finds the unique `t*` with `G(flow(c, t*)) = kappa` by bisection and
/// returns it with the flowed vector.
///
/// `G(flow(c, t))` decreases strictly from `+inf` to `0`, so a bracket grown
/// geometrically from `[-1, 1]` always exists unless the deblur guard cuts
/// off the negative side first.
pub fn solve_to_section(c: &CoeffVector, kappa: SmoothnessLevel, tol: f64) -> Result<(FlowTime, CoeffVector)> {
    let lambda = c.basis().eigenvalues();
    let coeffs = c.coeffs();
    let kappa = kappa.value();
    let g0 = weighted_norm2(lambda, coeffs);
    if !(g0 > 0.0) {
        return Err(Error::UniformDensity);
    }
    let tol = tol.max(f64::EPSILON);
    if (g0 - kappa).abs() <= tol * kappa {
        return Ok((FlowTime(0.0), c.clone()));
    }
    let residual = |t: f64| g_flowed(lambda, coeffs, t) - kappa;

    let t_min = min_flow_time(c.basis().max_eigenvalue());
    let (mut lo, mut hi) = if g0 > kappa { (0.0, 1.0) } else { (-1.0_f64.max(t_min), 0.0) };
    while residual(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidArgument("section bracket diverged".into()));
        }
    }
    while residual(lo) < 0.0 {
        if lo <= t_min {
            return Err(Error::DeblurOverflow {
                t: lo,
                factor: (-c.basis().max_eigenvalue() * lo).exp(),
            });
        }
        hi = lo;
        lo = (2.0 * lo).max(t_min);
    }

    // stop well inside tol so G recomputed from the flowed coefficients still meets it
    let stop = 0.01 * tol * kappa;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..400 {
        t = 0.5 * (lo + hi);
        let r = residual(t);
        if r.abs() <= stop || t == lo || t == hi {
            break;
        }
        if r > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
    }
    let flowed = flow(c, FlowTime(t))?;
    Ok((FlowTime(t), flowed))
}

/// How a common smoothness level is chosen from several G-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaStrategy {
    /// The smaller of exactly two G-values.
    PairMin,
    /// Empirical `q`-quantile with linear interpolation between order statistics.
    Quantile(f64),
}

impl Default for KappaStrategy {
    fn default() -> Self {
        KappaStrategy::Quantile(0.10)
    }
}

pub fn select_kappa(g_values: &[f64], strategy: KappaStrategy) -> Result<SmoothnessLevel> {
    if g_values.is_empty() {
        return Err(Error::EmptySamples);
    }
    match strategy {
        KappaStrategy::PairMin => {
            if g_values.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "PairMin needs exactly 2 values, got {}",
                    g_values.len()
                )));
            }
            SmoothnessLevel::new(g_values[0].min(g_values[1]))
        }
        KappaStrategy::Quantile(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 1]")));
            }
            let mut v = g_values.to_vec();
            v.sort_by(f64::total_cmp);
            let pos = q * (v.len() - 1) as f64;
            let i = pos.floor() as usize;
            let j = pos.ceil() as usize;
            SmoothnessLevel::new(v[i] + (pos - i as f64) * (v[j] - v[i]))
        }
    }
}
