//! Continuum analysis of the local direction covariance on quadratic surfaces.
//!
//! A surface `0 = xᵀMx + x₃` passes through the origin with normal `e³`.
//! Averaging `uuᵀ/|u|²` over the patch inside a sphere of radius `r_s` gives
//! a covariance whose leading-order expansion in `r_s` encodes the principal
//! curvatures. This module computes that covariance by quadrature, compares
//! it with the closed-form expansion, and with the discrete covariance built
//! from random samples through [`crate::metric`].

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{DirectionFactor, MetricError};

pub const MIN_RESOLUTION: usize = 64;

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error("patch inside radius {radius} is not a graph over the tangent plane")]
    PatchNotGraph { radius: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// `0 = m11 x₁² + m22 x₂² + m13 x₁x₃ + m23 x₂x₃ + m33 x₃² + x₃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSurface {
    pub m11: f64,
    pub m22: f64,
    pub m13: f64,
    pub m23: f64,
    pub m33: f64,
}

/// Principal curvatures at the origin together with the search radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSummary {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa_bar: f64,
    pub search_radius: f64,
}

impl QuadraticSurface {
    pub fn plane() -> Self {
        Self { m11: 0.0, m22: 0.0, m13: 0.0, m23: 0.0, m33: 0.0 }
    }

    pub fn sphere_like(m: f64) -> Self {
        Self { m11: m, m22: m, ..Self::plane() }
    }

    /// Random surface with every entry of `M` in `[-bound, bound]`.
    pub fn random(seed: u64, bound: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = || rng.random_range(-bound..=bound);
        Self { m11: e(), m22: e(), m13: e(), m23: e(), m33: e() }
    }

    /// The symmetric matrix `M`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.m11, 0.0, 0.5 * self.m13,
            0.0, self.m22, 0.5 * self.m23,
            0.5 * self.m13, 0.5 * self.m23, self.m33,
        )
    }

    pub fn summary(&self, search_radius: f64) -> CurvatureSummary {
        let kappa1 = -2.0 * self.m11;
        let kappa2 = -2.0 * self.m22;
        CurvatureSummary { kappa1, kappa2, kappa_bar: 0.5 * (kappa1 + kappa2), search_radius }
    }

    /// Signed normal curvature in tangent direction `(cos θ, sin θ, 0)`.
    pub fn normal_curvature(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        -2.0 * (self.m11 * c * c + self.m22 * s * s)
    }

    /// Height of the branch through the origin, or `None` where the branch
    /// stops being a graph.
    pub fn height(&self, x1: f64, x2: f64) -> Option<f64> {
        let a = self.m33;
        let b = 1.0 + self.m13 * x1 + self.m23 * x2;
        let c = self.m11 * x1 * x1 + self.m22 * x2 * x2;
        let disc = b * b - 4.0 * a * c;
        if b <= 0.0 || disc < 0.0 {
            return None;
        }
        // root form without cancellation as a -> 0
        Some(-2.0 * c / (b + disc.sqrt()))
    }

    /// Point on the surface and its area element `|∂x/∂s × ∂x/∂t|`.
    fn lift(&self, x1: f64, x2: f64) -> Option<(Vector3<f64>, f64)> {
        let x3 = self.height(x1, x2)?;
        let f3 = 1.0 + self.m13 * x1 + self.m23 * x2 + 2.0 * self.m33 * x3;
        if f3 <= 0.0 {
            return None;
        }
        let h1 = -(2.0 * self.m11 * x1 + self.m13 * x3) / f3;
        let h2 = -(2.0 * self.m22 * x2 + self.m23 * x3) / f3;
        Some((Vector3::new(x1, x2, x3), (1.0 + h1 * h1 + h2 * h2).sqrt()))
    }

    /// Parameter radius along direction `θ` where the patch leaves the sphere.
    fn boundary_radius(&self, cos: f64, sin: f64, r_s: f64) -> Result<f64, CurvatureError> {
        let outside = |rho: f64| -> Result<bool, CurvatureError> {
            let (x, _) = self.lift(rho * cos, rho * sin).ok_or(CurvatureError::PatchNotGraph { radius: r_s })?;
            Ok(x.norm_squared() >= r_s * r_s)
        };
        let (mut lo, mut hi) = (0.0, r_s);
        if !outside(hi)? {
            return Ok(hi);
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if outside(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]` (Golub–Welsch).
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| (0.5 * (eig.eigenvalues[i] + 1.0), eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Continuum local direction covariance of the patch inside radius `r_s`.
///
/// Polar coordinates in the parameter plane: Gauss–Legendre in the radius up
/// to the boundary curve, and the periodic trapezoid rule in the angle, each
/// spectrally accurate for this smooth integrand.
pub fn continuum_covariance(surface: &QuadraticSurface, r_s: f64, resolution: usize) -> Result<Matrix3<f64>, CurvatureError> {
    if !(r_s > 0.0 && r_s.is_finite()) {
        return Err(CurvatureError::InvalidArgument(format!("search radius must be positive, got {r_s}")));
    }
    if resolution < MIN_RESOLUTION {
        return Err(CurvatureError::InvalidArgument(format!("resolution must be at least {MIN_RESOLUTION}")));
    }
    let rule = gauss_legendre(resolution);
    let n_theta = 2 * resolution;
    let mut moment = Matrix3::zeros();
    let mut area = 0.0;
    for k in 0..n_theta {
        let (sin, cos) = (2.0 * std::f64::consts::PI * k as f64 / n_theta as f64).sin_cos();
        let rho_max = surface.boundary_radius(cos, sin, r_s)?;
        for &(node, weight) in &rule {
            let rho = node * rho_max;
            let (x, ds) = surface.lift(rho * cos, rho * sin).ok_or(CurvatureError::PatchNotGraph { radius: r_s })?;
            let w = weight * rho_max * rho * ds;
            moment += (x * x.transpose()) * (w / x.norm_squared());
            area += w;
        }
    }
    Ok(moment / area)
}

/// Leading-order coefficients `a_ij` of the covariance expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub a11: f64,
    pub a22: f64,
    pub a13: f64,
    pub a23: f64,
    pub a33: f64,
}

impl ExpansionCoefficients {
    pub fn of(s: &QuadraticSurface) -> Self {
        let sum2 = (s.m11 + s.m22).powi(2);
        Self {
            a11: -(sum2 + 4.0 * s.m11 * s.m11) / 32.0,
            a22: -(sum2 + 4.0 * s.m22 * s.m22) / 32.0,
            a13: s.m13 * (3.0 * s.m11 + s.m22) / 16.0,
            a23: s.m23 * (s.m11 + 3.0 * s.m22) / 16.0,
            a33: (3.0 * s.m11 * s.m11 + 2.0 * s.m11 * s.m22 + 3.0 * s.m22 * s.m22) / 16.0,
        }
    }

    /// Truncated covariance at radius `r_s`.
    pub fn matrix(&self, r_s: f64) -> Matrix3<f64> {
        let r2 = r_s * r_s;
        Matrix3::new(
            0.5 + self.a11 * r2, 0.0, self.a13 * r2,
            0.0, 0.5 + self.a22 * r2, self.a23 * r2,
            self.a13 * r2, self.a23 * r2, self.a33 * r2,
        )
    }
}

/// Truncated eigenvalue expansions `[λ₁, λ₂, λ₃]` in terms of curvature.
pub fn predicted_eigenvalues(summary: &CurvatureSummary) -> [f64; 3] {
    let CurvatureSummary { kappa1: k1, kappa2: k2, kappa_bar: kb, search_radius: r } = *summary;
    let r2 = r * r;
    [
        0.5 - (kb * kb + k1 * k1) * r2 / 32.0,
        0.5 - (kb * kb + k2 * k2) * r2 / 32.0,
        (2.0 * kb * kb + k1 * k1 + k2 * k2) * r2 / 32.0,
    ]
}

/// Truncated eigenvector expansions `u¹, u²`, normalized.
pub fn predicted_eigenvectors(coeffs: &ExpansionCoefficients, r_s: f64) -> [Vector3<f64>; 2] {
    let r2 = r_s * r_s;
    [
        Vector3::new(1.0, 0.0, 2.0 * coeffs.a13 * r2).normalize(),
        Vector3::new(0.0, 1.0, 2.0 * coeffs.a23 * r2).normalize(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusResidual {
    pub radius: f64,
    /// Largest gap between a quadrature eigenvalue and its expansion.
    pub eigenvalue: f64,
    /// Largest `|(P - λᵢI)uᵢ|` over the two expanded tangent eigenpairs.
    pub eigenvector: f64,
    /// Angle between the quadrature tangent plane and `span(e¹, e²)`.
    pub tangent_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub surface: QuadraticSurface,
    pub residuals: Vec<RadiusResidual>,
    /// Fitted exponent `p` in `residual ~ r^p` between consecutive radii.
    pub eigenvalue_orders: Vec<f64>,
    pub eigenvector_orders: Vec<f64>,
}

/// Quadrature resolution used by [`eigen_expansion_check`].
pub const CHECK_RESOLUTION: usize = 96;

/// Compares the quadrature covariance with the truncated expansions at each
/// radius and fits the empirical order of the residuals.
pub fn eigen_expansion_check(surface: &QuadraticSurface, radii: &[f64]) -> Result<ExpansionReport, CurvatureError> {
    if radii.len() < 3 {
        return Err(CurvatureError::InvalidArgument("need at least 3 radii".into()));
    }
    let coeffs = ExpansionCoefficients::of(surface);
    let mut residuals = Vec::with_capacity(radii.len());
    for &r in radii {
        let p = continuum_covariance(surface, r, CHECK_RESOLUTION)?;
        let predicted = predicted_eigenvalues(&surface.summary(r));
        let eig = SymmetricEigen::new(p);
        let mut computed: Vec<(f64, Vector3<f64>)> =
            (0..3).map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned())).collect();
        computed.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut dominant = [predicted[0], predicted[1]];
        dominant.sort_by(|a, b| b.total_cmp(a));
        let eigenvalue = [
            (computed[0].0 - dominant[0]).abs(),
            (computed[1].0 - dominant[1]).abs(),
            (computed[2].0 - predicted[2]).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let vectors = predicted_eigenvectors(&coeffs, r);
        let eigenvector = (0..2)
            .map(|i| ((p - Matrix3::identity() * predicted[i]) * vectors[i]).norm())
            .fold(0.0, f64::max);
        let tangent_angle = computed[2].1.xy().norm().asin();
        residuals.push(RadiusResidual { radius: r, eigenvalue, eigenvector, tangent_angle });
    }
    let orders = |f: fn(&RadiusResidual) -> f64| {
        residuals
            .windows(2)
            .map(|w| (f(&w[0]) / f(&w[1])).ln() / (w[0].radius / w[1].radius).ln())
            .collect::<Vec<f64>>()
    };
    Ok(ExpansionReport {
        surface: *surface,
        eigenvalue_orders: orders(|r| r.eigenvalue),
        eigenvector_orders: orders(|r| r.eigenvector),
        residuals,
    })
}

/// Area-uniform samples of the patch inside radius `r_s`.
pub fn sample_patch(surface: &QuadraticSurface, r_s: f64, count: usize, seed: u64) -> Result<Vec<Vector3<f64>>, CurvatureError> {
    // envelope for the area element, from a polar grid plus margin
    let mut ds_max: f64 = 1.0;
    for i in 1..=64 {
        for k in 0..128 {
            let (s, c) = (2.0 * std::f64::consts::PI * k as f64 / 128.0).sin_cos();
            let rho = r_s * i as f64 / 64.0;
            if let Some((_, ds)) = surface.lift(rho * c, rho * s) {
                ds_max = ds_max.max(ds);
            }
        }
    }
    ds_max *= 1.05;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 100 * count + 1000 {
            return Err(CurvatureError::PatchNotGraph { radius: r_s });
        }
        let (x1, x2) = (rng.random_range(-r_s..r_s), rng.random_range(-r_s..r_s));
        if x1 * x1 + x2 * x2 > r_s * r_s {
            continue;
        }
        let Some((x, ds)) = surface.lift(x1, x2) else { continue };
        if x.norm_squared() > r_s * r_s || x.norm_squared() == 0.0 {
            continue;
        }
        if rng.random::<f64>() * ds_max <= ds {
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDeviation {
    pub samples: usize,
    /// Spectral norm of `P_discrete - P_continuum`.
    pub deviation: f64,
    pub discrete_weak_eigenvalue: f64,
    pub continuum_weak_eigenvalue: f64,
}

/// Builds the discrete covariance from `sample_count` area-uniform samples
/// through the metric module and compares it with quadrature.
pub fn discrete_vs_continuum(
    surface: &QuadraticSurface,
    r_s: f64,
    sample_count: usize,
    seed: u64,
) -> Result<DiscreteDeviation, CurvatureError> {
    if sample_count < 1000 {
        return Err(CurvatureError::InvalidArgument("need at least 1000 samples".into()));
    }
    let continuum = continuum_covariance(surface, r_s, CHECK_RESOLUTION)?;
    let samples = sample_patch(surface, r_s, sample_count, seed)?;
    let factor = DirectionFactor::build(&[0.0; 3], samples.iter().map(|x| x.as_slice()))?;
    let metric = factor.eigendecompose(crate::metric::DEFAULT_MU, 1e-14)?;
    let mut discrete = Matrix3::zeros();
    for (j, &lam) in metric.eigvals().iter().enumerate() {
        let v = Vector3::from_iterator(metric.eigvecs().column(j).iter().copied());
        discrete += v * v.transpose() * lam;
    }
    let weak = |m: Matrix3<f64>| SymmetricEigen::new(m).eigenvalues.min();
    Ok(DiscreteDeviation {
        samples: samples.len(),
        deviation: (discrete - continuum).symmetric_eigen().eigenvalues.abs().max(),
        discrete_weak_eigenvalue: weak(discrete),
        continuum_weak_eigenvalue: weak(continuum),
    })
}
