//! Heat kernels on the circle and the 2-sphere and the kernel density
//! estimates built from them.
//!
//! Because each basis function is an eigenfunction of the Laplacian, the heat
//! kernel centred at `mu` expands as `sum_n exp(-lambda_n h) phi_n(mu) phi_n(x)`.
//! The estimate from samples `x_1..x_T` therefore has coefficients
//! `exp(-lambda_n h) * mean_i phi_n(x_i)` and never needs a grid.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::basis::{dot3, BasisSpec, BasisTable, CoeffVector, Domain, Point};
use crate::{Error, Result};

/// Smallest accepted bandwidth; below it the kernel is effectively a point mass.
pub const MIN_BANDWIDTH: f64 = 1e-4;

/// Largest series cutoff produced by [`series_cutoff`].
pub const MAX_CUTOFF: usize = 200;

const TRUNCATION_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    domain: Domain,
    points: Vec<Point>,
    label: String,
    /// Angle at which a circle sample was cut open from the real line.
    cut: Option<f64>,
}

impl SampleSet {
    pub fn new(domain: Domain, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        for p in &points {
            p.validate(domain)?;
        }
        Ok(Self {
            domain,
            points,
            label: String::new(),
            cut: None,
        })
    }

    pub fn circle(angles: Vec<f64>) -> Result<Self> {
        Self::new(Domain::Circle, angles.into_iter().map(Point::Angle).collect())
    }

    pub fn sphere(units: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(Domain::Sphere2, units.into_iter().map(Point::Unit).collect())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_cut(mut self, cut: f64) -> Self {
        self.cut = Some(cut);
        self
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn cut(&self) -> Option<f64> {
        self.cut
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Circle angles; `None` on the sphere.
    pub fn angles(&self) -> Option<Vec<f64>> {
        self.points
            .iter()
            .map(|p| match p {
                Point::Angle(t) => Some(*t),
                Point::Unit(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub sample_count: usize,
    pub bandwidth: f64,
    pub truncation: usize,
    pub coeffs: CoeffVector,
}

impl DensityEstimate {
    pub fn basis(&self) -> &Arc<BasisSpec> {
        self.coeffs.basis()
    }

    pub fn domain(&self) -> Domain {
        self.coeffs.domain()
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h >= MIN_BANDWIDTH {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth {
            got: h,
            min: MIN_BANDWIDTH,
        })
    }
}

/// Smallest `M` with `exp(-lambda_M h) < 1e-14`, capped at [`MAX_CUTOFF`].
pub fn series_cutoff(domain: Domain, h: f64) -> Result<usize> {
    check_bandwidth(h)?;
    let target = -TRUNCATION_EPS.ln() / h;
    let lambda = |m: usize| match domain {
        Domain::Circle => (m * m) as f64,
        Domain::Sphere2 => (m * (m + 1)) as f64,
    };
    Ok((1..=MAX_CUTOFF).find(|&m| lambda(m) > target).unwrap_or(MAX_CUTOFF))
}

fn resolve_cutoff(domain: Domain, h: f64, cutoff: Option<usize>) -> Result<usize> {
    check_bandwidth(h)?;
    match cutoff {
        Some(0) => Err(Error::InvalidCutoff),
        Some(m) => Ok(m),
        None => series_cutoff(domain, h),
    }
}

/// Heat kernel on the circle centred at `mu`:
/// `(2pi)^-1 (1 + 2 sum_{m=1}^M exp(-m^2 h) cos(m (theta - mu)))`.
pub fn heat_kernel_circle(theta: f64, mu: f64, h: f64, cutoff: Option<usize>) -> Result<f64> {
    let m_max = resolve_cutoff(Domain::Circle, h, cutoff)?;
    let d = theta - mu;
    let series: f64 = (1..=m_max)
        .map(|m| {
            let mf = m as f64;
            (-mf * mf * h).exp() * (mf * d).cos()
        })
        .sum();
    Ok((1.0 + 2.0 * series) / (2.0 * PI))
}

/// Heat kernel on the unit sphere centred at `mu`:
/// `(4pi)^-1 sum_{m=0}^M (2m+1) exp(-m(m+1) h) P_m(<x, mu>)`.
pub fn heat_kernel_sphere(x: &[f64; 3], mu: &[f64; 3], h: f64, cutoff: Option<usize>) -> Result<f64> {
    Point::Unit(*x).validate(Domain::Sphere2)?;
    Point::Unit(*mu).validate(Domain::Sphere2)?;
    let m_max = resolve_cutoff(Domain::Sphere2, h, cutoff)?;
    let t = dot3(x, mu).clamp(-1.0, 1.0);
    Ok(sphere_series(t, h, m_max))
}

fn sphere_series(t: f64, h: f64, m_max: usize) -> f64 {
    // Legendre recurrence inlined so the series costs O(M).
    let mut sum = 1.0;
    let (mut p_prev, mut p_curr) = (1.0, t);
    for m in 1..=m_max {
        let mf = m as f64;
        sum += (2.0 * mf + 1.0) * (-mf * (mf + 1.0) * h).exp() * p_curr;
        let p_next = ((2.0 * mf + 1.0) * t * p_curr - mf * p_prev) / (mf + 1.0);
        p_prev = p_curr;
        p_curr = p_next;
    }
    sum / (4.0 * PI)
}

/// Heat kernel on either domain.
pub fn heat_kernel(x: &Point, mu: &Point, h: f64, cutoff: Option<usize>) -> Result<f64> {
    match (x, mu) {
        (Point::Angle(a), Point::Angle(b)) => heat_kernel_circle(*a, *b, h, cutoff),
        (Point::Unit(a), Point::Unit(b)) => heat_kernel_sphere(a, b, h, cutoff),
        _ => Err(Error::DomainMismatch(x.domain(), mu.domain())),
    }
}

/// Unsmoothed coefficients `mean_i phi_n(x_i)` of the empirical measure.
pub fn empirical_coefficients(samples: &SampleSet, spec: &Arc<BasisSpec>) -> Result<CoeffVector> {
    if samples.domain() != spec.domain() {
        return Err(Error::DomainMismatch(samples.domain(), spec.domain()));
    }
    let table = BasisTable::new(spec.clone(), samples.points())?;
    mean_rows(&table, 0..table.rows())
}

/// Mean of selected rows of a basis table, accumulated in the given order.
pub fn mean_rows(table: &BasisTable, rows: impl ExactSizeIterator<Item = usize>) -> Result<CoeffVector> {
    let count = rows.len();
    if count == 0 {
        return Err(Error::EmptySamples);
    }
    let mut acc = vec![0.0; table.basis().size()];
    for k in rows {
        for (a, v) in acc.iter_mut().zip(table.row(k)) {
            *a += v;
        }
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    CoeffVector::new(table.basis().clone(), acc)
}

/// Applies the heat-kernel weights `exp(-lambda_n h)` to empirical coefficients.
pub fn estimate_from_empirical(
    empirical: &CoeffVector,
    sample_count: usize,
    h: f64,
    cutoff: Option<usize>,
) -> Result<DensityEstimate> {
    let truncation = resolve_cutoff(empirical.domain(), h, cutoff)?;
    let mut coeffs = empirical.clone();
    let basis = coeffs.basis().clone();
    for (c, lam) in coeffs.coeffs_mut().iter_mut().zip(basis.eigenvalues()) {
        *c *= (-lam * h).exp();
    }
    coeffs.coeffs_mut()[0] = basis.domain().normalized_c0();
    Ok(DensityEstimate {
        sample_count,
        bandwidth: h,
        truncation,
        coeffs,
    })
}

/// Heat-kernel density estimate with bandwidth `h`, in closed form.
///
/// `cutoff` records the kernel series truncation; `None` applies [`series_cutoff`].
pub fn kde(samples: &SampleSet, h: f64, spec: &Arc<BasisSpec>, cutoff: Option<usize>) -> Result<DensityEstimate> {
    check_bandwidth(h)?;
    let empirical = empirical_coefficients(samples, spec)?;
    estimate_from_empirical(&empirical, samples.len(), h, cutoff)
}

/// Pointwise kernel sum `T^-1 sum_i K_h(x, x_i)` at each point.
pub fn kernel_sum(samples: &SampleSet, h: f64, cutoff: Option<usize>, points: &[Point]) -> Result<Vec<f64>> {
    let m = resolve_cutoff(samples.domain(), h, cutoff)?;
    let inv = 1.0 / samples.len() as f64;
    points
        .iter()
        .map(|x| {
            let mut s = 0.0;
            for mu in samples.points() {
                s += heat_kernel(x, mu, h, Some(m))?;
            }
            Ok(s * inv)
        })
        .collect()
}
