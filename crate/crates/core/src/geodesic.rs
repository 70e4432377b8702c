//! Riemannian numerics on the ellipsoid `S_kappa = { c : sum_{n>=1} lambda_n c_n^2 = kappa }`.
//!
//! All geometry acts on the non-constant components `c_1..c_N`; `c_0` is
//! carried along untouched. The distance `d_kappa` between two estimates is
//! the length of a discrete geodesic found by path straightening: gradient
//! descent of the path energy `E = 1/2 int |alpha'|^2` under the metric
//! whose gradient is `w(tau) = u(tau) - tau * u~(tau)`. Here `u` is the
//! covariant integral of the velocity and `u~` is `u(1)` translated back
//! along the path.
//!
//! Tangent vectors move between neighbouring tangent spaces by the rotation
//! carrying one unit normal onto the next. It preserves length, and on
//! spherical sections it is exact parallel transport along great circles.

use serde::{Deserialize, Serialize};

use crate::basis::CoeffVector;
use crate::heatkde::DensityEstimate;
use crate::smoothing::{g_value, solve_to_section, weighted_norm2, SmoothnessLevel, DEFAULT_SECTION_TOL};
use crate::{Error, Result};

/// Relative tolerance accepted for a point to lie on its section.
pub const SECTION_POINT_TOL: f64 = 1e-8;

const PROJECTION_TOL: f64 = 1e-10;
const PROJECTION_MAX_ITER: usize = 200;
const ANTIPODAL_NUDGE: f64 = 1e-6;

/// A coefficient vector lying on `S_kappa`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionPoint {
    coeffs: CoeffVector,
    kappa: SmoothnessLevel,
}

impl SectionPoint {
    pub fn new(coeffs: CoeffVector, kappa: SmoothnessLevel) -> Result<Self> {
        let g = g_value(&coeffs);
        if (g - kappa.value()).abs() > SECTION_POINT_TOL * kappa.value() {
            return Err(Error::SectionMismatch(g, kappa.value()));
        }
        Ok(Self { coeffs, kappa })
    }

    pub fn coeffs(&self) -> &CoeffVector {
        &self.coeffs
    }

    pub fn kappa(&self) -> SmoothnessLevel {
        self.kappa
    }

    /// Components `c_1..c_N`, the part the section constrains.
    pub fn tail(&self) -> &[f64] {
        self.coeffs.tail()
    }

    fn section(&self) -> Section<'_> {
        Section {
            lambda: &self.coeffs.basis().eigenvalues()[1..],
            kappa: self.kappa.value(),
        }
    }

    /// Unit normal `u_c = n_c / |n_c|`, `n_c = (lambda_n c_n)_{n>=1}`.
    pub fn unit_normal(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.tail().len()];
        self.section().unit_normal(self.tail(), &mut u);
        u
    }
}

/// A vector in the tangent space of a section point (components `1..N`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentVector {
    pub base: SectionPoint,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }
}

/// Geometry of one ellipsoid, borrowed from a basis.
#[derive(Clone, Copy)]
struct Section<'a> {
    lambda: &'a [f64],
    kappa: f64,
}

impl Section<'_> {
    fn g(&self, x: &[f64]) -> f64 {
        weighted_norm2(self.lambda, x)
    }

    /// Writes the unit normal into `out` and returns `|n_c|`.
    fn unit_normal(&self, x: &[f64], out: &mut [f64]) -> f64 {
        for ((o, l), c) in out.iter_mut().zip(self.lambda).zip(x) {
            *o = l * c;
        }
        let len = norm(out);
        if len > 0.0 {
            out.iter_mut().for_each(|o| *o /= len);
        }
        len
    }

    /// Moves `x` onto the section along its normal line.
    ///
    /// Each pass steps `x <- x + s u_x` with `s` the root of
    /// `G(x + s u_x) = kappa` nearest zero, so a single pass usually lands.
    /// After the iteration cap, radial scaling finishes the job.
    fn project_point(&self, x: &mut [f64]) -> Result<()> {
        let mut u = vec![0.0; x.len()];
        for _ in 0..PROJECTION_MAX_ITER {
            let g = self.g(x);
            if (g - self.kappa).abs() <= PROJECTION_TOL * self.kappa {
                return Ok(());
            }
            let len = self.unit_normal(x, &mut u);
            if !(len > 0.0) || !len.is_finite() {
                return Err(Error::InvalidArgument("cannot project the zero vector onto a section".into()));
            }
            // G(x + s u) = g + 2 s |n| + s^2 a
            let a = self.g(&u);
            let b = 2.0 * len;
            let cst = g - self.kappa;
            let disc = b * b - 4.0 * a * cst;
            let s = if disc >= 0.0 {
                -2.0 * cst / (b + disc.sqrt())
            } else {
                -b / (2.0 * a)
            };
            for (xi, ui) in x.iter_mut().zip(&u) {
                *xi += s * ui;
            }
        }
        let g = self.g(x);
        if !(g > 0.0) {
            return Err(Error::InvalidArgument("cannot project the zero vector onto a section".into()));
        }
        let scale = (self.kappa / g).sqrt();
        x.iter_mut().for_each(|v| *v *= scale);
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the component of `w` along the unit normal `u`.
fn remove_normal(u: &[f64], w: &mut [f64]) {
    let p = dot(u, w);
    for (wi, ui) in w.iter_mut().zip(u) {
        *wi -= p * ui;
    }
}

/// Carries a tangent vector at the point with normal `from` to the tangent
/// space with normal `to`, by the rotation in span{from, to} taking `from` to `to`.
fn transport(from: &[f64], to: &[f64], v: &mut [f64]) {
    let d = dot(from, to);
    if 1.0 + d < 1e-12 {
        let len = norm(v);
        remove_normal(to, v);
        let new = norm(v);
        if new > 0.0 {
            v.iter_mut().for_each(|x| *x *= len / new);
        }
        return;
    }
    let c = dot(v, to) / (1.0 + d);
    for ((vi, f), t) in v.iter_mut().zip(from).zip(to) {
        *vi -= c * (f + t);
    }
    // round-off cleanup
    remove_normal(to, v);
}

/// Projects `c` onto `S_kappa`. The constant coefficient is left unchanged.
pub fn project_to_section(c: &CoeffVector, kappa: SmoothnessLevel) -> Result<SectionPoint> {
    let mut out = c.clone();
    let basis = c.basis().clone();
    let sec = Section {
        lambda: &basis.eigenvalues()[1..],
        kappa: kappa.value(),
    };
    sec.project_point(&mut out.coeffs_mut()[1..])?;
    Ok(SectionPoint { coeffs: out, kappa })
}

/// Orthogonal projection of `w` onto the tangent space at `base`.
pub fn project_tangent(base: &SectionPoint, w: &[f64]) -> Result<TangentVector> {
    if w.len() != base.tail().len() {
        return Err(Error::LengthMismatch {
            expected: base.tail().len(),
            got: w.len(),
        });
    }
    let u = base.unit_normal();
    let mut components = w.to_vec();
    remove_normal(&u, &mut components);
    Ok(TangentVector {
        base: base.clone(),
        components,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicOptions {
    /// Number of path segments `k`.
    pub segments: usize,
    /// Initial gradient step.
    pub step: f64,
    /// Upper bound for the gradient step after successful iterations.
    pub max_step: f64,
    pub max_iter: usize,
    /// Gradient-norm stopping threshold; `None` means `1e-6 * sqrt(kappa)`.
    pub grad_tol: Option<f64>,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            segments: 30,
            step: 0.1,
            max_step: 1.0,
            max_iter: 200,
            grad_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicPath {
    pub kappa: SmoothnessLevel,
    pub points: Vec<SectionPoint>,
    pub energy: f64,
    pub length: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Energy after initialization and after every accepted iteration.
    pub energy_log: Vec<f64>,
}

impl GeodesicPath {
    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    fn flat(&self) -> (usize, Vec<f64>) {
        let n = self.points[0].tail().len();
        let mut out = Vec::with_capacity(n * self.points.len());
        for p in &self.points {
            out.extend_from_slice(p.tail());
        }
        (n, out)
    }

    fn normals(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(SectionPoint::unit_normal).collect()
    }
}

/// Chordal length `sum_i |alpha_{i+1} - alpha_i|` over components `1..N`.
pub fn path_length(path: &GeodesicPath) -> f64 {
    path.points
        .windows(2)
        .map(|w| {
            w[0].tail()
                .iter()
                .zip(w[1].tail())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

fn check_field(path: &GeodesicPath, field: &[TangentVector]) -> Result<()> {
    if field.len() != path.points.len() {
        return Err(Error::LengthMismatch {
            expected: path.points.len(),
            got: field.len(),
        });
    }
    Ok(())
}

fn wrap_field(path: &GeodesicPath, vectors: Vec<Vec<f64>>) -> Vec<TangentVector> {
    path.points
        .iter()
        .zip(vectors)
        .map(|(p, components)| TangentVector {
            base: p.clone(),
            components,
        })
        .collect()
}

/// Velocity field of a path: `v(i) = P_i(k (alpha_i - alpha_{i-1}))`, with a
/// forward difference at the start point.
pub fn path_velocity(path: &GeodesicPath) -> Vec<TangentVector> {
    let (n, flat) = path.flat();
    let normals = path.normals();
    let k = path.segments();
    let vectors = (0..=k)
        .map(|i| {
            let (lo, hi) = if i == 0 { (0, 1) } else { (i - 1, i) };
            let mut v: Vec<f64> = (0..n)
                .map(|j| k as f64 * (flat[hi * n + j] - flat[lo * n + j]))
                .collect();
            remove_normal(&normals[i], &mut v);
            v
        })
        .collect();
    wrap_field(path, vectors)
}

/// Discrete covariant derivative along the path.
///
/// Entry `i >= 1` is `k (w_i - T(w_{i-1}))` with `T` the transport into the
/// tangent space at `alpha_i`; entry 0 uses the forward difference.
pub fn covariant_derivative(path: &GeodesicPath, field: &[TangentVector]) -> Result<Vec<TangentVector>> {
    check_field(path, field)?;
    let normals = path.normals();
    let k = path.segments() as f64;
    let vectors = (0..field.len())
        .map(|i| {
            let (lo, hi, at) = if i == 0 { (0, 1, 0) } else { (i - 1, i, i) };
            let mut out;
            if at == hi {
                let mut prev = field[lo].components.clone();
                transport(&normals[lo], &normals[hi], &mut prev);
                out = field[hi].components.clone();
                out.iter_mut().zip(&prev).for_each(|(a, b)| *a = k * (*a - b));
            } else {
                let mut next = field[hi].components.clone();
                transport(&normals[hi], &normals[lo], &mut next);
                out = next;
                out.iter_mut()
                    .zip(&field[lo].components)
                    .for_each(|(a, b)| *a = k * (*a - b));
            }
            remove_normal(&normals[at], &mut out);
            out
        })
        .collect();
    Ok(wrap_field(path, vectors))
}

fn integrate(normals: &[Vec<f64>], field: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = normals[0].len();
    let mut out = Vec::with_capacity(field.len());
    out.push(vec![0.0; n]);
    for i in 1..field.len() {
        let mut u = out[i - 1].clone();
        transport(&normals[i - 1], &normals[i], &mut u);
        for (a, f) in u.iter_mut().zip(&field[i]) {
            *a += f / k as f64;
        }
        remove_normal(&normals[i], &mut u);
        out.push(u);
    }
    out
}

/// Covariant integral with zero initial value: `u_0 = 0`,
/// `u_i = P_i(T(u_{i-1}) + field_i / k)`.
pub fn covariant_integral(path: &GeodesicPath, field: &[TangentVector]) -> Result<Vec<TangentVector>> {
    check_field(path, field)?;
    let normals = path.normals();
    let f: Vec<Vec<f64>> = field.iter().map(|t| t.components.clone()).collect();
    Ok(wrap_field(path, integrate(&normals, &f, path.segments())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

fn translate(normals: &[Vec<f64>], v: &[f64], direction: Direction) -> Vec<Vec<f64>> {
    let m = normals.len();
    let mut out = vec![Vec::new(); m];
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..m).collect(),
        Direction::Backward => (0..m).rev().collect(),
    };
    let len = norm(v);
    out[order[0]] = v.to_vec();
    for w in order.windows(2) {
        let mut next = out[w[0]].clone();
        transport(&normals[w[0]], &normals[w[1]], &mut next);
        let now = norm(&next);
        if now > 0.0 {
            next.iter_mut().for_each(|x| *x *= len / now);
        }
        out[w[1]] = next;
    }
    out
}

/// Parallel translation of `v` along the path, from the start (`Forward`)
/// or from the end (`Backward`).
pub fn parallel_translate(path: &GeodesicPath, v: &TangentVector, direction: Direction) -> Result<Vec<TangentVector>> {
    let anchor = match direction {
        Direction::Forward => &path.points[0],
        Direction::Backward => path.points.last().expect("path has points"),
    };
    if anchor.tail() != v.base.tail() {
        return Err(Error::InvalidArgument(
            "tangent vector is not based at the path endpoint".into(),
        ));
    }
    let normals = path.normals();
    Ok(wrap_field(path, translate(&normals, &v.components, direction)))
}

/// Working state of path straightening: `k + 1` points of dimension `n`, row-major.
struct Work<'a> {
    sec: Section<'a>,
    n: usize,
    k: usize,
}

impl Work<'_> {
    fn row<'b>(&self, v: &'b [f64], i: usize) -> &'b [f64] {
        &v[i * self.n..(i + 1) * self.n]
    }

    fn energy(&self, path: &[f64]) -> f64 {
        let mut e = 0.0;
        for i in 1..=self.k {
            let (a, b) = (self.row(path, i - 1), self.row(path, i));
            e += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        0.5 * self.k as f64 * e
    }

    fn normals(&self, path: &[f64]) -> Vec<Vec<f64>> {
        (0..=self.k)
            .map(|i| {
                let mut u = vec![0.0; self.n];
                self.sec.unit_normal(self.row(path, i), &mut u);
                u
            })
            .collect()
    }

    /// Gradient field `w(tau) = u(tau) - tau u~(tau)` and its L2 norm.
    ///
    /// `u` is the covariant integral of `s`, where `s` is the covariant
    /// integral of the projected second difference
    /// `a_i = P_i(k^2 (alpha_{i+1} - 2 alpha_i + alpha_{i-1}))`, started at
    /// `s_1 = 0`. This is the velocity form with the constant `v(0)` part
    /// removed (that part is cancelled by `tau u~` anyway), so `w` vanishes
    /// exactly where the discrete energy is stationary.
    fn gradient(&self, path: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let (n, k) = (self.n, self.k);
        let kf = k as f64;
        let normals = self.normals(path);
        let mut s = vec![vec![0.0; n]; k + 1];
        for i in 1..k {
            let (prev, cur, next) = (self.row(path, i - 1), self.row(path, i), self.row(path, i + 1));
            let mut acc: Vec<f64> = (0..n).map(|j| kf * (next[j] - 2.0 * cur[j] + prev[j])).collect();
            remove_normal(&normals[i], &mut acc);
            let mut z = s[i].clone();
            z.iter_mut().zip(&acc).for_each(|(a, b)| *a += b);
            transport(&normals[i], &normals[i + 1], &mut z);
            s[i + 1] = z;
        }
        let u = integrate(&normals, &s, k);
        let back = translate(&normals, &u[k], Direction::Backward);
        let mut sum2 = 0.0;
        let w: Vec<Vec<f64>> = (0..=k)
            .map(|i| {
                let tau = i as f64 / kf;
                let wi: Vec<f64> = u[i].iter().zip(&back[i]).map(|(a, b)| a - tau * b).collect();
                sum2 += dot(&wi, &wi);
                wi
            })
            .collect();
        (w, (sum2 / kf).sqrt())
    }

    fn chord(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let (n, k) = (self.n, self.k);
        let mut path = vec![0.0; (k + 1) * n];
        let scale = norm(a).max(norm(b));
        let nudge = self.nudge_direction(a) ;
        for i in 0..=k {
            let s = i as f64 / k as f64;
            let row = &mut path[i * n..(i + 1) * n];
            if i == 0 {
                row.copy_from_slice(a);
                continue;
            }
            if i == k {
                row.copy_from_slice(b);
                continue;
            }
            for j in 0..n {
                row[j] = (1.0 - s) * a[j] + s * b[j];
            }
            if norm(row) <= 1e-9 * scale {
                for (r, d) in row.iter_mut().zip(&nudge) {
                    *r += ANTIPODAL_NUDGE * scale * d;
                }
            }
            self.sec.project_point(row)?;
        }
        Ok(path)
    }

    /// Unit tangent at `a` closest to the first coordinate axis that is not normal.
    fn nudge_direction(&self, a: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n];
        self.sec.unit_normal(a, &mut u);
        for j in 0..self.n {
            let mut e = vec![0.0; self.n];
            e[j] = 1.0;
            remove_normal(&u, &mut e);
            let len = norm(&e);
            if len > 1e-3 {
                e.iter_mut().for_each(|x| *x /= len);
                return e;
            }
        }
        vec![0.0; self.n]
    }
}

/// Path straightening between two points of the same section.
///
/// The path starts as the chord from `p1` to `p2` projected onto the
/// section and is updated by `alpha <- P(alpha - eps w)` until `|w|` falls
/// below the tolerance or `max_iter` is reached. A step that raises the
/// energy is retried with half the step size; accepted steps double it up
/// to `max_step`. Endpoints are never moved.
pub fn path_straighten(p1: &SectionPoint, p2: &SectionPoint, opts: &GeodesicOptions) -> Result<GeodesicPath> {
    p1.coeffs().check_compatible(p2.coeffs())?;
    let (k1, k2) = (p1.kappa().value(), p2.kappa().value());
    if (k1 - k2).abs() > SECTION_POINT_TOL * k1.max(k2) {
        return Err(Error::SectionMismatch(k1, k2));
    }
    if opts.segments < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 segments, got {}", opts.segments)));
    }
    if !(opts.step > 0.0 && opts.max_step >= opts.step) {
        return Err(Error::InvalidArgument("step sizes must satisfy 0 < step <= max_step".into()));
    }
    let kappa = p1.kappa();
    let grad_tol = opts.grad_tol.unwrap_or(1e-6 * kappa.value().sqrt());
    let basis = p1.coeffs().basis().clone();
    let work = Work {
        sec: Section {
            lambda: &basis.eigenvalues()[1..],
            kappa: kappa.value(),
        },
        n: p1.tail().len(),
        k: opts.segments,
    };
    let (n, k) = (work.n, work.k);

    let finish = |flat: &[f64], energy_log: Vec<f64>, iterations: usize, converged: bool, grad_norm: f64| {
        let (c0a, c0b) = (p1.coeffs().coeffs()[0], p2.coeffs().coeffs()[0]);
        let points: Vec<SectionPoint> = (0..=k)
            .map(|i| {
                if i == 0 {
                    return p1.clone();
                }
                if i == k {
                    return p2.clone();
                }
                let s = i as f64 / k as f64;
                let mut coeffs = Vec::with_capacity(n + 1);
                coeffs.push((1.0 - s) * c0a + s * c0b);
                coeffs.extend_from_slice(&flat[i * n..(i + 1) * n]);
                SectionPoint {
                    coeffs: CoeffVector::new(basis.clone(), coeffs).expect("sizes match"),
                    kappa,
                }
            })
            .collect();
        let mut path = GeodesicPath {
            kappa,
            points,
            energy: *energy_log.last().unwrap_or(&0.0),
            length: 0.0,
            iterations,
            converged,
            grad_norm,
            energy_log,
        };
        path.length = path_length(&path);
        path
    };

    if p1.tail() == p2.tail() {
        let flat: Vec<f64> = (0..=k).flat_map(|_| p1.tail().iter().copied()).collect();
        return Ok(finish(&flat, vec![0.0], 0, true, 0.0));
    }

    let mut path = work.chord(p1.tail(), p2.tail())?;
    let mut energy = work.energy(&path);
    let mut energy_log = vec![energy];
    let mut step = opts.step;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut candidate = path.clone();

    'outer: while iterations < opts.max_iter {
        let (w, g) = work.gradient(&path);
        grad_norm = g;
        if grad_norm <= grad_tol {
            converged = true;
            break;
        }
        loop {
            candidate.copy_from_slice(&path);
            for (i, wi) in w.iter().enumerate().take(k).skip(1) {
                let row = &mut candidate[i * n..(i + 1) * n];
                for (r, d) in row.iter_mut().zip(wi) {
                    *r -= step * d;
                }
                work.sec.project_point(row)?;
            }
            let e = work.energy(&candidate);
            if e <= energy * (1.0 + 1e-13) {
                std::mem::swap(&mut path, &mut candidate);
                energy = e;
                energy_log.push(e);
                iterations += 1;
                step = (2.0 * step).min(opts.max_step);
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                break 'outer;
            }
        }
    }
    if !converged {
        let (_, g) = work.gradient(&path);
        grad_norm = g;
        converged = grad_norm <= grad_tol;
    }
    Ok(finish(&path, energy_log, iterations, converged, grad_norm))
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceResult {
    pub distance: f64,
    pub kappa: SmoothnessLevel,
    /// Flow times that carried the two inputs onto the section.
    pub flow_times: (f64, f64),
    pub path: GeodesicPath,
}

impl DistanceResult {
    pub fn converged(&self) -> bool {
        self.path.converged
    }
}

/// Flows both estimates onto `S_kappa` and measures the geodesic between them.
pub fn d_kappa(
    f1: &DensityEstimate,
    f2: &DensityEstimate,
    kappa: SmoothnessLevel,
    opts: &GeodesicOptions,
) -> Result<DistanceResult> {
    d_kappa_coeffs(&f1.coeffs, &f2.coeffs, kappa, opts)
}

/// [`d_kappa`] on raw coefficient vectors.
pub fn d_kappa_coeffs(
    c1: &CoeffVector,
    c2: &CoeffVector,
    kappa: SmoothnessLevel,
    opts: &GeodesicOptions,
) -> Result<DistanceResult> {
    c1.check_compatible(c2)?;
    let (t1, s1) = solve_to_section(c1, kappa, DEFAULT_SECTION_TOL)?;
    let (t2, s2) = solve_to_section(c2, kappa, DEFAULT_SECTION_TOL)?;
    let p1 = SectionPoint::new(s1, kappa)?;
    let p2 = SectionPoint::new(s2, kappa)?;
    let path = path_straighten(&p1, &p2, opts)?;
    Ok(DistanceResult {
        distance: path.length,
        kappa,
        flow_times: (t1.0, t2.0),
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_basis, BasisSpec, Domain};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn kappa(v: f64) -> SmoothnessLevel {
        SmoothnessLevel::new(v).unwrap()
    }

    /// Sphere2 degree 1: three entries with eigenvalue 2, a round sphere.
    fn round() -> Arc<BasisSpec> {
        make_basis(Domain::Sphere2, 1).unwrap()
    }

    fn point(b: &Arc<BasisSpec>, tail: &[f64], k: f64) -> SectionPoint {
        let mut c = vec![b.domain().normalized_c0()];
        c.extend_from_slice(tail);
        project_to_section(&CoeffVector::new(b.clone(), c).unwrap(), kappa(k)).unwrap()
    }

    fn random_tail(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn projection_fixed_point_and_sphere_case() {
        let b = round();
        let p = point(&b, &[0.3, -0.2, 0.5], 0.4);
        let again = project_to_section(p.coeffs(), kappa(0.4)).unwrap();
        assert_eq!(again.tail(), p.tail());

        // equal eigenvalues: projection is radial scaling to radius sqrt(kappa / lambda)
        let tail = [0.3, -0.2, 0.5];
        let r = (0.4f64 / 2.0).sqrt();
        let len = norm(&tail);
        for (a, t) in p.tail().iter().zip(tail) {
            assert_abs_diff_eq!(*a, t * r / len, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_lands_on_section_for_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = make_basis(Domain::Circle, 6).unwrap();
        for _ in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-3.0..2.0));
            let tail: Vec<f64> = random_tail(&mut rng, 12).iter().map(|x| x * scale).collect();
            let k = rng.random_range(0.01..5.0);
            let p = point(&b, &tail, k);
            assert!((g_value(p.coeffs()) - k).abs() <= 1e-10 * k);
        }
        let zero = CoeffVector::uniform(b);
        assert!(project_to_section(&zero, kappa(1.0)).is_err());
    }

    #[test]
    fn tangent_projection() {
        let b = make_basis(Domain::Circle, 2).unwrap();
        let p = point(&b, &[0.4, 0.1, -0.2, 0.3], 1.0);
        let u = p.unit_normal();
        let t = project_tangent(&p, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(dot(&t.components, &u).abs() < 1e-12 * t.norm());
        assert!(t.norm() <= norm(&[1.0, 2.0, 3.0, 4.0]));
        let again = project_tangent(&p, &t.components).unwrap();
        for (a, b) in again.components.iter().zip(&t.components) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        let normal = project_tangent(&p, &u).unwrap();
        assert!(normal.norm() < 1e-12);
        assert!(project_tangent(&p, &[1.0]).is_err());
    }

    fn great_circle(angle: f64, k: usize, kap: f64) -> GeodesicPath {
        // radius sqrt(kappa / 2) on the round section
        let b = round();
        let r = (kap / 2.0).sqrt();
        let points = (0..=k)
            .map(|i| {
                let t = angle * i as f64 / k as f64;
                point(&b, &[r * t.cos(), r * t.sin(), 0.0], kap)
            })
            .collect();
        GeodesicPath {
            kappa: kappa(kap),
            points,
            energy: 0.0,
            length: 0.0,
            iterations: 0,
            converged: true,
            grad_norm: 0.0,
            energy_log: vec![],
        }
    }

    #[test]
    fn covariant_derivative_of_great_circle_velocity_vanishes() {
        let path = great_circle(1.2, 100, 2.0);
        let v = path_velocity(&path);
        let d = covariant_derivative(&path, &v).unwrap();
        assert!(d.iter().all(|t| t.norm() <= 1e-2));
        assert_abs_diff_eq!(path_length(&path), 1.2, epsilon = 1e-4);
    }

    #[test]
    fn covariant_derivative_basics() {
        let b = round();
        let p = point(&b, &[0.2, 0.3, 0.1], 1.0);
        let mut path = great_circle(0.0, 10, 1.0);
        path.points = vec![p.clone(); 11];
        let v = project_tangent(&p, &[0.1, -0.4, 0.2]).unwrap();
        let field = vec![v.clone(); 11];
        let d = covariant_derivative(&path, &field).unwrap();
        assert!(d.iter().all(|t| t.norm() < 1e-12));
        assert!(covariant_derivative(&path, &field[1..]).is_err());

        // linearity
        let path = great_circle(1.0, 20, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rand_field = |rng: &mut ChaCha8Rng| -> Vec<TangentVector> {
            path.points
                .iter()
                .map(|p| project_tangent(p, &random_tail(rng, 3)).unwrap())
                .collect()
        };
        let (f, g) = (rand_field(&mut rng), rand_field(&mut rng));
        let combo: Vec<TangentVector> = f
            .iter()
            .zip(&g)
            .map(|(a, b)| TangentVector {
                base: a.base.clone(),
                components: a.components.iter().zip(&b.components).map(|(x, y)| 2.0 * x - 3.0 * y).collect(),
            })
            .collect();
        let (df, dg, dc) = (
            covariant_derivative(&path, &f).unwrap(),
            covariant_derivative(&path, &g).unwrap(),
            covariant_derivative(&path, &combo).unwrap(),
        );
        for i in 0..df.len() {
            for j in 0..3 {
                let expect = 2.0 * df[i].components[j] - 3.0 * dg[i].components[j];
                assert_abs_diff_eq!(dc[i].components[j], expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn covariant_integral_round_trip() {
        let path = great_circle(1.5, 100, 2.0);
        let zero: Vec<TangentVector> = path
            .points
            .iter()
            .map(|p| project_tangent(p, &[0.0; 3]).unwrap())
            .collect();
        assert!(covariant_integral(&path, &zero).unwrap().iter().all(|t| t.norm() == 0.0));

        // smooth field: rotating mix of the velocity and the binormal
        let field: Vec<TangentVector> = path
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s = i as f64 / 100.0;
                let t = 1.5 * s;
                project_tangent(p, &[-t.sin() * (1.0 + s), t.cos() * (1.0 + s), (3.0 * s).cos()]).unwrap()
            })
            .collect();
        let u = covariant_integral(&path, &field).unwrap();
        let back = covariant_derivative(&path, &u).unwrap();
        let scale = field.iter().map(TangentVector::norm).fold(0.0, f64::max);
        for (a, b) in back.iter().zip(&field) {
            let err = norm(&a.components.iter().zip(&b.components).map(|(x, y)| x - y).collect::<Vec<_>>());
            assert!(err <= 0.02 * scale, "err {err}");
        }
    }

    #[test]
    fn integral_of_velocity_is_displacement_in_flat_limit() {
        // a short arc on a large sphere is nearly flat
        let path = great_circle(0.01, 50, 200.0);
        let v = path_velocity(&path);
        let u = covariant_integral(&path, &v).unwrap();
        let disp: Vec<f64> = path.points[50]
            .tail()
            .iter()
            .zip(path.points[0].tail())
            .map(|(a, b)| a - b)
            .collect();
        let end = &u[50].components;
        let err = norm(&end.iter().zip(&disp).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err < 1e-2 * norm(&disp));
    }

    #[test]
    fn parallel_translation_on_sphere() {
        let path = great_circle(std::f64::consts::FRAC_PI_2, 60, 2.0);
        // tangent at (1,0,0): velocity direction (0,1,0) and binormal (0,0,1)
        let v = project_tangent(&path.points[0], &[0.0, 0.6, 0.8]).unwrap();
        let moved = parallel_translate(&path, &v, Direction::Forward).unwrap();
        for t in &moved {
            assert_abs_diff_eq!(t.norm(), 1.0, epsilon = 1e-9);
        }
        // closed form at the end: velocity there is (-1,0,0), binormal unchanged
        let end = &moved.last().unwrap().components;
        assert_abs_diff_eq!(end[0], -0.6, epsilon = 1e-3);
        assert_abs_diff_eq!(end[1], 0.0, epsilon = 1e-3);
        assert_abs_diff_eq!(end[2], 0.8, epsilon = 1e-3);

        let w = project_tangent(path.points.last().unwrap(), &[-0.6, 0.0, 0.8]).unwrap();
        let back = parallel_translate(&path, &w, Direction::Backward).unwrap();
        assert_abs_diff_eq!(back[0].components[1], 0.6, epsilon = 1e-3);
        assert!(parallel_translate(&path, &w, Direction::Forward).is_err());

        let mut still = great_circle(0.0, 5, 2.0);
        still.points = vec![path.points[0].clone(); 6];
        let c = parallel_translate(&still, &v, Direction::Forward).unwrap();
        assert!(c.iter().all(|t| t.components == v.components));
    }

    #[test]
    fn straightening_recovers_great_circles() {
        let b = round();
        let kap: f64 = 0.8;
        let r = (kap / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let p1 = point(&b, &random_tail(&mut rng, 3), kap);
            let p2 = point(&b, &random_tail(&mut rng, 3), kap);
            let path = path_straighten(&p1, &p2, &GeodesicOptions::default()).unwrap();
            let cos = dot(p1.tail(), p2.tail()) / (r * r);
            let exact = r * cos.clamp(-1.0, 1.0).acos();
            assert!((path.length - exact).abs() <= 0.01 * exact, "{} vs {}", path.length, exact);
            assert!(path.converged, "grad {}", path.grad_norm);
            assert!(path.energy_log.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-13)));
            assert_eq!(path.points[0].tail(), p1.tail());
            assert_eq!(path.points.last().unwrap().tail(), p2.tail());
            for p in &path.points {
                assert!((g_value(p.coeffs()) - kap).abs() <= 1e-8 * kap);
            }
        }
    }

    #[test]
    fn ellipse_geodesic_matches_brute_force_arc_length() {
        // components (cos t, cos 2t) of a degree-2 circle basis span an
        // invariant plane with eigenvalues 1 and 4: the ellipse x^2 + 4 y^2 = kappa
        let b = make_basis(Domain::Circle, 2).unwrap();
        let kap: f64 = 1.0;
        let (ax, ay) = (kap.sqrt(), (kap / 4.0).sqrt());
        let at = |s: f64| point(&b, &[ax * s.cos(), 0.0, ay * s.sin(), 0.0], kap);
        let arc = |s0: f64, s1: f64| {
            let m = 100_000;
            let mut len = 0.0;
            let mut prev = (ax * s0.cos(), ay * s0.sin());
            for i in 1..=m {
                let s = s0 + (s1 - s0) * i as f64 / m as f64;
                let cur = (ax * s.cos(), ay * s.sin());
                len += ((cur.0 - prev.0).powi(2) + (cur.1 - prev.1).powi(2)).sqrt();
                prev = cur;
            }
            len
        };
        for (s0, s1) in [(0.1, 1.2), (-0.5, 1.9), (0.3, 2.8)] {
            let path = path_straighten(&at(s0), &at(s1), &GeodesicOptions::default()).unwrap();
            let exact = arc(s0, s1);
            assert!((path.length - exact).abs() <= 0.01 * exact, "{} vs {}", path.length, exact);
            assert!(path.converged);
        }
    }

    #[test]
    fn exactly_antipodal_points_still_give_half_circumference() {
        let b = round();
        let p1 = point(&b, &[1.0, 0.0, 0.0], 2.0);
        let p2 = point(&b, &[-1.0, 0.0, 0.0], 2.0);
        let opts = GeodesicOptions {
            segments: 60,
            ..Default::default()
        };
        let path = path_straighten(&p1, &p2, &opts).unwrap();
        assert!((path.length - std::f64::consts::PI).abs() < 0.01 * std::f64::consts::PI, "{}", path.length);
    }

    #[test]
    fn identical_endpoints() {
        let b = round();
        let p = point(&b, &[0.1, 0.2, 0.3], 1.0);
        let path = path_straighten(&p, &p, &GeodesicOptions::default()).unwrap();
        assert_eq!(path.length, 0.0);
        assert_eq!(path.iterations, 0);
    }

    #[test]
    fn mismatched_sections_rejected() {
        let b = round();
        let p = point(&b, &[0.1, 0.2, 0.3], 1.0);
        let q = point(&b, &[0.1, 0.2, 0.3], 2.0);
        assert!(matches!(
            path_straighten(&p, &q, &GeodesicOptions::default()),
            Err(Error::SectionMismatch(..))
        ));
        let opts = GeodesicOptions {
            segments: 1,
            ..Default::default()
        };
        assert!(path_straighten(&p, &p, &opts).is_err());
    }

    #[test]
    fn length_is_stable_under_refinement() {
        let b = make_basis(Domain::Circle, 3).unwrap();
        let p1 = point(&b, &[0.5, 0.1, 0.2, -0.1, 0.05, 0.0], 1.0);
        let p2 = point(&b, &[-0.2, 0.4, 0.0, 0.2, -0.05, 0.02], 1.0);
        let len = |k: usize| {
            let opts = GeodesicOptions {
                segments: k,
                ..Default::default()
            };
            path_straighten(&p1, &p2, &opts).unwrap().length
        };
        let (a, b) = (len(30), len(60));
        assert!((a - b).abs() / b < 5e-3, "{a} {b}");
    }

    #[test]
    fn straight_segment_in_flat_limit() {
        // tiny separation on a large section is a straight segment
        let b = make_basis(Domain::Circle, 2).unwrap();
        let p1 = point(&b, &[3.0, 1.0, 2.0, 0.5], 100.0);
        let mut t = p1.tail().to_vec();
        t[1] += 1e-4;
        let p2 = point(&b, &t, 100.0);
        let path = path_straighten(&p1, &p2, &GeodesicOptions::default()).unwrap();
        let chord = norm(&p1.tail().iter().zip(p2.tail()).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert_abs_diff_eq!(path.length, chord, epsilon = 1e-9);
    }
}
