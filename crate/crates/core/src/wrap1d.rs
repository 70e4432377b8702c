//! Real-line samples mapped onto the circle.
//!
//! A shared interval `[a, b]` enclosing all sample sets (plus padding) is sent
//! affinely onto `[-pi, pi)`. Estimation then happens on the circle, and the
//! cut at `theta = -pi` is recorded on the resulting sample set so that
//! line-based statistics can unroll it again.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::heatkde::SampleSet;
use crate::{Error, Result};

/// Fraction of the pooled range added on each side by [`detect_boundary`].
pub const DEFAULT_PAD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrapMap {
    a: f64,
    b: f64,
}

impl WrapMap {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument(format!("interval [{a}, {b}] is not finite")));
        }
        if !(b > a) {
            return Err(Error::ZeroRange);
        }
        Ok(Self { a, b })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// `x -> -pi + 2pi (x - a) / (b - a)`.
    pub fn forward(&self, x: f64) -> f64 {
        -PI + 2.0 * PI * (x - self.a) / (self.b - self.a)
    }

    pub fn inverse(&self, theta: f64) -> f64 {
        self.a + (theta + PI) * (self.b - self.a) / (2.0 * PI)
    }

    /// Circle density = line density times this factor, `(b - a) / 2pi`.
    pub fn density_scale(&self) -> f64 {
        (self.b - self.a) / (2.0 * PI)
    }

    /// Converts a density value on the circle back to the line.
    pub fn line_density(&self, circle_density: f64) -> f64 {
        circle_density / self.density_scale()
    }
}

/// Interval `[min - pad * range, max + pad * range]` over all pooled samples.
pub fn detect_boundary(sets: &[&[f64]], pad: f64) -> Result<WrapMap> {
    if !(pad >= 0.0 && pad.is_finite()) {
        return Err(Error::InvalidArgument(format!("pad must be a nonnegative number, got {pad}")));
    }
    if sets.is_empty() || sets.iter().any(|s| s.is_empty()) {
        return Err(Error::EmptySamples);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in sets.iter().flat_map(|s| s.iter()) {
        if !x.is_finite() {
            return Err(Error::InvalidArgument(format!("sample {x} is not finite")));
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let range = hi - lo;
    if range <= 0.0 {
        return Err(Error::ZeroRange);
    }
    WrapMap::new(lo - pad * range, hi + pad * range)
}

/// Maps line samples onto the circle; the result carries the cut at `-pi`.
///
/// `x = b` lands on `pi` and is folded to `-pi`, keeping angles in `[-pi, pi)`.
pub fn wrap_samples(xs: &[f64], map: &WrapMap) -> Result<SampleSet> {
    let (a, b) = map.interval();
    let angles = xs
        .iter()
        .map(|&x| {
            if !(a..=b).contains(&x) {
                return Err(Error::OutOfInterval { value: x, lo: a, hi: b });
            }
            let t = map.forward(x);
            Ok(if t >= PI { t - 2.0 * PI } else { t })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet::circle(angles)?.with_cut(-PI))
}

/// Inverse of [`wrap_samples`] for a set carrying a cut.
pub fn unwrap_samples(set: &SampleSet, map: &WrapMap) -> Result<Vec<f64>> {
    let cut = set.cut().ok_or(Error::MissingCutPoint)?;
    let angles = set.angles().ok_or(Error::DomainMismatch(crate::basis::Domain::Circle, set.domain()))?;
    Ok(angles
        .into_iter()
        .map(|t| map.inverse(-PI + unroll(t, cut)))
        .collect())
}

/// Position of `theta` along the circle measured from `cut`, in `[0, 2pi)`.
pub fn unroll(theta: f64, cut: f64) -> f64 {
    let r = (theta - cut).rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}
