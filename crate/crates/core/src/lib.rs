//! Bandwidth-robust comparison of densities on the circle and the 2-sphere.
//!
//! Densities are estimated with heat kernels and represented by their
//! coefficients in an orthonormal Laplacian eigenbasis. The heat flow acts on
//! those coefficients by `c_n -> exp(-lambda_n t) c_n`; every orbit of that
//! action crosses the level set `G(c) = sum lambda_n c_n^2 = kappa` exactly
//! once. Two estimates are compared by flowing both onto that ellipsoid and
//! measuring the geodesic distance between them there.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`basis`] | Fourier / real spherical-harmonic bases, quadrature, analysis and synthesis |
//! | [`heatkde`] | Heat kernels and closed-form kernel density estimates |
//! | [`smoothing`] | Roughness functional, heat flow, projection onto a smoothness level |
//! | [`geodesic`] | Path straightening on the ellipsoidal section and the distance `d_kappa` |
//! | [`testing`] | Bootstrap two-sample test, baseline distances, mixture simulation |
//! | [`wrap1d`] | Mapping real-line samples onto the circle |
//!
//! ```
//! use dkappa_core::basis::{make_basis, Domain};
//! use dkappa_core::heatkde::{kde, SampleSet};
//! use dkappa_core::geodesic::{d_kappa, GeodesicOptions};
//! use dkappa_core::smoothing::SmoothnessLevel;
//!
//! let basis = make_basis(Domain::Circle, 8).unwrap();
//! let a = SampleSet::circle(vec![-0.3, 0.1, 0.2, 0.4]).unwrap();
//! let b = SampleSet::circle(vec![1.0, 1.2, 1.5, 2.0]).unwrap();
//! let fa = kde(&a, 0.2, &basis, None).unwrap();
//! let fb = kde(&b, 0.3, &basis, None).unwrap();
//! let kappa = SmoothnessLevel::new(0.05).unwrap();
//! let d = d_kappa(&fa, &fb, kappa, &GeodesicOptions::default()).unwrap();
//! assert!(d.distance > 0.0);
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
mod error;
pub mod geodesic;
pub mod heatkde;
pub mod smoothing;
pub mod testing;
pub mod wrap1d;

pub use error::{Error, Result};
