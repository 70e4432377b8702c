//! Orthonormal Laplacian eigenbases on the circle and the 2-sphere.
//!
//! Circle: `1/sqrt(2pi), cos(theta)/sqrt(pi), sin(theta)/sqrt(pi), cos(2theta)/sqrt(pi), ...`
//! with eigenvalue `floor((n+1)/2)^2` for entry `n`.
//!
//! Sphere: real spherical harmonics ordered `Y_0^0, Y_1^-1, Y_1^0, Y_1^1, Y_2^-2, ...`
//! with eigenvalue `l(l+1)`. No Condon-Shortley phase is applied. Order `m > 0`
//! carries `cos(m phi)`, order `m < 0` carries `sin(|m| phi)`.
//!
//! Quadrature on the sphere is a product rule: Gauss-Legendre in `cos(theta)`
//! and the uniform rule in `phi`. It integrates every product of two basis
//! functions exactly once `resolution > max_degree`, so analysis followed by
//! synthesis is the identity on band-limited vectors up to round-off.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// Minimum number of nodes per axis accepted by [`quadrature_grid`].
pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Circle,
    Sphere2,
}

impl Domain {
    /// Total measure of the domain (`2pi` or `4pi`).
    pub fn area(self) -> f64 {
        match self {
            Domain::Circle => 2.0 * PI,
            Domain::Sphere2 => 4.0 * PI,
        }
    }

    /// Coefficient of the constant eigenfunction for any normalized density.
    pub fn normalized_c0(self) -> f64 {
        1.0 / self.area().sqrt()
    }

    /// Value of the uniform density.
    pub fn uniform_density(self) -> f64 {
        1.0 / self.area()
    }
}

/// A point of a [`Domain`]: an angle on the circle or a unit 3-vector on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Point {
    Angle(f64),
    Unit([f64; 3]),
}

impl Point {
    pub fn domain(&self) -> Domain {
        match self {
            Point::Angle(_) => Domain::Circle,
            Point::Unit(_) => Domain::Sphere2,
        }
    }

    /// Checks the point against `domain`: a finite angle, or a 3-vector of norm `1 +- 1e-9`.
    pub fn validate(&self, domain: Domain) -> Result<()> {
        match (self, domain) {
            (Point::Angle(t), Domain::Circle) if t.is_finite() => Ok(()),
            (Point::Unit(x), Domain::Sphere2) => {
                let norm = dot3(x, x).sqrt();
                if norm.is_finite() && (norm - 1.0).abs() <= UNIT_TOL {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(Domain::Sphere2))
                }
            }
            _ => Err(Error::InvalidPoint(domain)),
        }
    }
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Unit vector from latitude/longitude in degrees.
pub fn unit_from_lat_lon(lat_deg: f64, lon_deg: f64) -> [f64; 3] {
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Latitude/longitude in degrees of a unit vector; longitude in `(-180, 180]`.
pub fn lat_lon_from_unit(x: &[f64; 3]) -> (f64, f64) {
    let lat = x[2].clamp(-1.0, 1.0).asin().to_degrees();
    let mut lon = x[1].atan2(x[0]).to_degrees();
    if lon <= -180.0 {
        lon += 360.0;
    }
    (lat, lon)
}

/// Identity of one basis entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisLabel {
    Constant,
    Cos(usize),
    Sin(usize),
    Harmonic { degree: usize, order: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    domain: Domain,
    max_degree: usize,
    eigenvalues: Vec<f64>,
    labels: Vec<BasisLabel>,
}

impl BasisSpec {
    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Number of entries, `N + 1`.
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    /// Largest eigenvalue in the basis.
    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("basis is never empty")
    }

    /// Values of every basis function at `point`, written into `out`.
    pub fn eval_all_into(&self, point: &Point, out: &mut [f64]) -> Result<()> {
        point.validate(self.domain)?;
        if out.len() != self.size() {
            return Err(Error::LengthMismatch {
                expected: self.size(),
                got: out.len(),
            });
        }
        match *point {
            Point::Angle(theta) => fourier_values(theta, self.max_degree, out),
            Point::Unit(x) => harmonic_values(&x, self.max_degree, out),
        }
        Ok(())
    }

    pub fn eval_all(&self, point: &Point) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.eval_all_into(point, &mut out)?;
        Ok(out)
    }

    fn same_as(&self, other: &BasisSpec) -> bool {
        self.domain == other.domain && self.max_degree == other.max_degree
    }
}

/// Builds the eigenbasis of the given degree.
///
/// Circle bases hold `2 * max_degree + 1` entries, sphere bases `(max_degree + 1)^2`.
pub fn make_basis(domain: Domain, max_degree: usize) -> Result<Arc<BasisSpec>> {
    if max_degree == 0 {
        return Err(Error::DegenerateBasis);
    }
    let (eigenvalues, labels) = match domain {
        Domain::Circle => {
            let mut ev = vec![0.0];
            let mut lb = vec![BasisLabel::Constant];
            for m in 1..=max_degree {
                let lam = (m * m) as f64;
                ev.extend([lam, lam]);
                lb.extend([BasisLabel::Cos(m), BasisLabel::Sin(m)]);
            }
            (ev, lb)
        }
        Domain::Sphere2 => {
            let mut ev = Vec::with_capacity((max_degree + 1).pow(2));
            let mut lb = Vec::with_capacity(ev.capacity());
            for l in 0..=max_degree {
                for m in -(l as i64)..=(l as i64) {
                    ev.push((l * (l + 1)) as f64);
                    lb.push(if l == 0 {
                        BasisLabel::Constant
                    } else {
                        BasisLabel::Harmonic { degree: l, order: m }
                    });
                }
            }
            (ev, lb)
        }
    };
    Ok(Arc::new(BasisSpec {
        domain,
        max_degree,
        eigenvalues,
        labels,
    }))
}

/// Value of basis function `n` at `point`.
pub fn eval_basis(spec: &BasisSpec, n: usize, point: &Point) -> Result<f64> {
    if n >= spec.size() {
        return Err(Error::IndexOutOfRange {
            index: n,
            size: spec.size(),
        });
    }
    Ok(spec.eval_all(point)?[n])
}

fn fourier_values(theta: f64, max_degree: usize, out: &mut [f64]) {
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    out[0] = 1.0 / (2.0 * PI).sqrt();
    for m in 1..=max_degree {
        let (s, c) = (m as f64 * theta).sin_cos();
        out[2 * m - 1] = c * inv_sqrt_pi;
        out[2 * m] = s * inv_sqrt_pi;
    }
}

/// Real spherical harmonics up to `max_degree`, degree-major order.
///
/// Uses the fully normalized associated Legendre recurrence, so no factorials
/// are formed and large degrees stay finite.
fn harmonic_values(x: &[f64; 3], max_degree: usize, out: &mut [f64]) {
    let z = x[2].clamp(-1.0, 1.0);
    let s = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let phi = x[1].atan2(x[0]);
    let lmax = max_degree;
    let idx = |l: usize, m: i64| (l * l + l) as i64 + m;

    // pmm holds the normalized P_m^m for the current order.
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        let (sin_m, cos_m) = (m as f64 * phi).sin_cos();
        let mut store = |l: usize, p: f64| {
            if m == 0 {
                out[idx(l, 0) as usize] = p;
            } else {
                let r = std::f64::consts::SQRT_2 * p;
                out[idx(l, m as i64) as usize] = r * cos_m;
                out[idx(l, -(m as i64)) as usize] = r * sin_m;
            }
        };
        store(m, pmm);
        if m == lmax {
            break;
        }
        let mut p_prev = pmm;
        let mut p_curr = ((2 * m + 3) as f64).sqrt() * z * pmm;
        store(m + 1, p_curr);
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            let p_next = a * (z * p_curr - b * p_prev);
            p_prev = p_curr;
            p_curr = p_next;
            store(l, p_curr);
        }
    }
}

/// Legendre polynomial `P_m(x)` by the three-term recurrence.
pub fn legendre(m: usize, x: f64) -> Result<f64> {
    if !(x.abs() <= 1.0 + 1e-12) {
        return Err(Error::LegendreDomain(x));
    }
    Ok(legendre_unchecked(m, x.clamp(-1.0, 1.0)))
}

pub(crate) fn legendre_unchecked(m: usize, x: f64) -> f64 {
    legendre_with_previous(m, x).0
}

/// `(P_m(x), P_{m-1}(x))`, with `P_{-1} = 0`.
fn legendre_with_previous(m: usize, x: f64) -> (f64, f64) {
    if m == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p_curr = x;
    for k in 1..m {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p_curr - kf * p_prev) / (kf + 1.0);
        p_prev = p_curr;
        p_curr = p_next;
    }
    (p_curr, p_prev)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, p_prev) = legendre_with_previous(n, x);
            let dx = p / (nf * (x * p - p_prev) / (x * x - 1.0));
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, p_prev) = legendre_with_previous(n, x);
        let dp = nf * (x * p - p_prev) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    domain: Domain,
    resolution: usize,
    nodes: Vec<Point>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature sum of `values` against the grid weights.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }
}

/// Quadrature rule for the domain.
///
/// Circle: `resolution` equispaced angles starting at `-pi`, each of weight
/// `2pi / resolution`. Sphere: `resolution x resolution` product of
/// Gauss-Legendre in `cos(theta)` with the uniform rule in `phi`.
pub fn quadrature_grid(domain: Domain, resolution: usize) -> Result<QuadratureGrid> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::ResolutionTooLow {
            got: resolution,
            min: MIN_RESOLUTION,
        });
    }
    let (nodes, weights) = match domain {
        Domain::Circle => {
            let step = 2.0 * PI / resolution as f64;
            let nodes = (0..resolution)
                .map(|k| Point::Angle(-PI + step * k as f64))
                .collect();
            (nodes, vec![step; resolution])
        }
        Domain::Sphere2 => {
            let (zs, zw) = gauss_legendre(resolution);
            let dphi = 2.0 * PI / resolution as f64;
            let mut nodes = Vec::with_capacity(resolution * resolution);
            let mut weights = Vec::with_capacity(resolution * resolution);
            for (z, wz) in zs.iter().zip(&zw) {
                let s = (1.0 - z * z).max(0.0).sqrt();
                for j in 0..resolution {
                    let phi = dphi * j as f64;
                    nodes.push(Point::Unit([s * phi.cos(), s * phi.sin(), *z]));
                    weights.push(wz * dphi);
                }
            }
            (nodes, weights)
        }
    };
    Ok(QuadratureGrid {
        domain,
        resolution,
        nodes,
        weights,
    })
}

/// Spectral representation of a function: coefficients against a basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffVector {
    #[serde(skip)]
    basis: Arc<BasisSpec>,
    coeffs: Vec<f64>,
}

impl CoeffVector {
    pub fn new(basis: Arc<BasisSpec>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.size() {
            return Err(Error::LengthMismatch {
                expected: basis.size(),
                got: coeffs.len(),
            });
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: Arc<BasisSpec>) -> Self {
        let coeffs = vec![0.0; basis.size()];
        Self { basis, coeffs }
    }

    /// The uniform density.
    pub fn uniform(basis: Arc<BasisSpec>) -> Self {
        let mut c = Self::zeros(basis);
        c.coeffs[0] = c.basis.domain().normalized_c0();
        c
    }

    pub fn basis(&self) -> &Arc<BasisSpec> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Non-constant components `c_1..c_N`.
    pub fn tail(&self) -> &[f64] {
        &self.coeffs[1..]
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.basis.domain()
    }

    /// Fails unless both vectors use the same basis.
    pub fn check_compatible(&self, other: &CoeffVector) -> Result<()> {
        if self.domain() != other.domain() {
            return Err(Error::DomainMismatch(self.domain(), other.domain()));
        }
        if !self.basis.same_as(&other.basis) {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }

    /// Copy with `c_0` set so the synthesized function integrates to one.
    pub fn renormalized(&self) -> Self {
        let mut c = self.clone();
        c.coeffs[0] = self.domain().normalized_c0();
        c
    }

    /// Value at a single point, without renormalization.
    pub fn value_at(&self, point: &Point) -> Result<f64> {
        let phi = self.basis.eval_all(point)?;
        Ok(phi.iter().zip(&self.coeffs).map(|(p, c)| p * c).sum())
    }
}

/// Basis functions tabulated on a fixed set of points.
///
/// Analysis and repeated synthesis on a quadrature grid reuse one table.
#[derive(Debug, Clone)]
pub struct BasisTable {
    basis: Arc<BasisSpec>,
    rows: usize,
    values: Vec<f64>,
}

impl BasisTable {
    pub fn new(basis: Arc<BasisSpec>, points: &[Point]) -> Result<Self> {
        let size = basis.size();
        let mut values = vec![0.0; points.len() * size];
        for (p, row) in points.iter().zip(values.chunks_mut(size)) {
            basis.eval_all_into(p, row)?;
        }
        Ok(Self {
            basis,
            rows: points.len(),
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let size = self.basis.size();
        &self.values[k * size..(k + 1) * size]
    }

    pub fn basis(&self) -> &Arc<BasisSpec> {
        &self.basis
    }

    /// `sum_n c_n phi_n` at every tabulated point.
    pub fn synthesize(&self, c: &CoeffVector) -> Result<Vec<f64>> {
        if !self.basis.same_as(c.basis()) {
            return Err(Error::BasisMismatch);
        }
        Ok((0..self.rows)
            .map(|k| self.row(k).iter().zip(c.coeffs()).map(|(p, c)| p * c).sum())
            .collect())
    }

    /// Weighted projection `c_n = sum_k w_k v_k phi_n(x_k)`.
    pub fn project(&self, weights: &[f64], values: &[f64]) -> Result<CoeffVector> {
        for len in [weights.len(), values.len()] {
            if len != self.rows {
                return Err(Error::LengthMismatch {
                    expected: self.rows,
                    got: len,
                });
            }
        }
        let mut coeffs = vec![0.0; self.basis.size()];
        for k in 0..self.rows {
            let wv = weights[k] * values[k];
            for (c, p) in coeffs.iter_mut().zip(self.row(k)) {
                *c += wv * p;
            }
        }
        CoeffVector::new(self.basis.clone(), coeffs)
    }
}

/// Minimum grid resolution accepted by [`analyze`] for a basis of this degree.
pub fn min_analysis_resolution(spec: &BasisSpec) -> usize {
    (4 * spec.max_degree()).max(MIN_RESOLUTION)
}

/// L2 projection of gridded values onto the basis.
pub fn analyze(spec: &Arc<BasisSpec>, grid: &QuadratureGrid, values: &[f64]) -> Result<CoeffVector> {
    if grid.domain() != spec.domain() {
        return Err(Error::DomainMismatch(spec.domain(), grid.domain()));
    }
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let min = min_analysis_resolution(spec);
    if grid.resolution() < min {
        return Err(Error::ResolutionTooLow {
            got: grid.resolution(),
            min,
        });
    }
    BasisTable::new(spec.clone(), grid.nodes())?.project(grid.weights(), values)
}

/// Evaluates `sum_n c_n phi_n` at each point; with `renormalize`, `c_0` is
/// first reset so the function integrates to one.
pub fn synthesize(c: &CoeffVector, points: &[Point], renormalize: bool) -> Result<Vec<f64>> {
    let c = if renormalize { c.renormalized() } else { c.clone() };
    let mut phi = vec![0.0; c.len()];
    points
        .iter()
        .map(|p| {
            c.basis().eval_all_into(p, &mut phi)?;
            Ok(phi.iter().zip(c.coeffs()).map(|(a, b)| a * b).sum())
        })
        .collect()
}
