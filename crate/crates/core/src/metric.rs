//! Local direction covariance and the metric it induces.
//!
//! For a vertex `v` and its neighboring data points `x_i`, the local direction
//! covariance is the average of the outer products of the unit directions
//! `(x_i - v) / |x_i - v|`. It is stored in factored form `P = D Dᵀ` where the
//! columns of `D` are those unit directions scaled by `1/sqrt(m)`. The induced
//! metric `(P + mu I)^-1` is never formed: a thin SVD of `D` yields the
//! nonzero eigenpairs of `P`, and quadratic forms are evaluated in `O(kN)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Neighbors closer than this to the vertex are treated as duplicates of it.
pub const COINCIDENT_TOL: f64 = 1e-12;

/// Default regularization added to `P` before inversion.
pub const DEFAULT_MU: f64 = 1e-3;

/// Default eigenvalue drop tolerance, relative to the largest eigenvalue.
pub const DEFAULT_DROP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    /// No neighbor remained after dropping points that coincide with the vertex.
    #[error("neighborhood contains no data points distinct from the vertex")]
    EmptyNeighborhood,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("eigendecomposition failed: {0}")]
    Decomposition(String),
}

/// Factored local direction covariance `P = D Dᵀ`.
#[derive(Debug, Clone)]
pub struct DirectionFactor {
    columns: DMatrix<f64>,
    center: Vec<f64>,
}

impl DirectionFactor {
    /// Builds the factor from a vertex and its neighbors. Neighbors within
    /// [`COINCIDENT_TOL`] of the vertex are silently dropped.
    pub fn build<'a, I>(vertex: &[f64], neighbors: I) -> Result<Self, MetricError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let dim = vertex.len();
        let mut dirs: Vec<f64> = Vec::new();
        for x in neighbors {
            if x.len() != dim {
                return Err(MetricError::DimensionMismatch { expected: dim, found: x.len() });
            }
            let norm = x.iter().zip(vertex).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if norm <= COINCIDENT_TOL {
                continue;
            }
            dirs.extend(x.iter().zip(vertex).map(|(a, b)| (a - b) / norm));
        }
        if dirs.is_empty() {
            return Err(MetricError::EmptyNeighborhood);
        }
        let count = dirs.len() / dim;
        let mut columns = DMatrix::from_vec(dim, count, dirs);
        columns /= (count as f64).sqrt();
        Ok(Self { columns, center: vertex.to_vec() })
    }

    /// Scaled direction columns, `N × m`.
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Number of neighbors `m` that contributed a direction.
    pub fn count(&self) -> usize {
        self.columns.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Trace of `P`, which is 1 up to rounding.
    pub fn trace(&self) -> f64 {
        self.columns.iter().map(|c| c * c).sum()
    }

    /// Action of `P` on a vector without forming `P`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        let coeffs = self.columns.tr_mul(&z);
        (&self.columns * coeffs).as_slice().to_vec()
    }

    /// Eigenpairs of `P` above `drop_tol * lambda_max`, via a thin SVD of the
    /// direction columns (`lambda = sigma^2`).
    pub fn eigendecompose(&self, mu: f64, drop_tol: f64) -> Result<LocalMetric, MetricError> {
        let svd = nalgebra::linalg::SVD::try_new(self.columns.clone(), true, false, f64::EPSILON, 500)
            .ok_or_else(|| MetricError::Decomposition("SVD did not converge".into()))?;
        let u = svd.u.ok_or_else(|| MetricError::Decomposition("missing U".into()))?;
        // The SVD can leave nearby small singular vectors slightly mixed.
        // Rayleigh-Ritz on its column space, which is exactly range(D),
        // restores residuals at rounding level.
        let pu = &self.columns * self.columns.tr_mul(&u);
        let ritz = u.tr_mul(&pu);
        let ritz = (&ritz + ritz.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::try_new(ritz, f64::EPSILON, 0)
            .ok_or_else(|| MetricError::Decomposition("Rayleigh-Ritz step did not converge".into()))?;
        let u = u * eig.eigenvectors;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lambda_max = eig.eigenvalues[order[0]];
        if !lambda_max.is_finite() || lambda_max <= 0.0 {
            return Err(MetricError::Decomposition("zero spectrum".into()));
        }
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| {
                let lam = eig.eigenvalues[i];
                lam > 0.0 && lam >= drop_tol * lambda_max
            })
            .collect();
        let n = self.ambient_dim();
        let mut eigvecs = DMatrix::zeros(n, kept.len());
        let mut eigvals = Vec::with_capacity(kept.len());
        for (j, &i) in kept.iter().enumerate() {
            eigvecs.set_column(j, &u.column(i));
            eigvals.push(eig.eigenvalues[i]);
        }
        Ok(LocalMetric { eigvecs, eigvals, mu })
    }
}

/// Low-rank representation of `(P + mu I)^-1`.
#[derive(Debug, Clone)]
pub struct LocalMetric {
    eigvecs: DMatrix<f64>,
    eigvals: Vec<f64>,
    mu: f64,
}

impl LocalMetric {
    /// Builds a metric directly from eigenpairs. `eigvecs` must have
    /// orthonormal columns and `eigvals` be positive and descending.
    pub fn from_eigenpairs(eigvecs: DMatrix<f64>, eigvals: Vec<f64>, mu: f64) -> Self {
        assert_eq!(eigvecs.ncols(), eigvals.len());
        Self { eigvecs, eigvals, mu }
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn ambient_dim(&self) -> usize {
        self.eigvecs.nrows()
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), MetricError> {
        if x.len() != self.ambient_dim() {
            return Err(MetricError::DimensionMismatch { expected: self.ambient_dim(), found: x.len() });
        }
        Ok(())
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = self.ambient_dim();
        (0..self.rank())
            .map(|j| {
                let col = &self.eigvecs.as_slice()[j * n..(j + 1) * n];
                col.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `xᵀ (P + mu I)^-1 x` evaluated as
    /// `yᵀ (Λ + mu I)^-1 y + (|x|² - |y|²) / mu` with `y = Vᵀ x`.
    pub fn q_form(&self, x: &[f64]) -> Result<f64, MetricError> {
        self.check_dim(x)?;
        let y = self.project(x);
        let in_range: f64 = y.iter().zip(&self.eigvals).map(|(yi, l)| yi * yi / (l + self.mu)).sum();
        let y2: f64 = y.iter().map(|v| v * v).sum();
        let x2: f64 = x.iter().map(|v| v * v).sum();
        Ok(in_range + (x2 - y2).max(0.0) / self.mu)
    }

    /// `q_form(v - center)`.
    pub fn q_form_displaced(&self, center: &[f64], v: &[f64]) -> Result<f64, MetricError> {
        self.check_dim(center)?;
        self.check_dim(v)?;
        let d: Vec<f64> = v.iter().zip(center).map(|(a, b)| a - b).collect();
        self.q_form(&d)
    }

    /// `(P + mu I)^-1 x` without forming the matrix.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
        self.check_dim(x)?;
        let n = self.ambient_dim();
        let y = self.project(x);
        let inv_mu = 1.0 / self.mu;
        let mut out: Vec<f64> = x.iter().map(|v| v * inv_mu).collect();
        for (j, (yj, l)) in y.iter().zip(&self.eigvals).enumerate() {
            let c = yj * (1.0 / (l + self.mu) - inv_mu);
            let col = &self.eigvecs.as_slice()[j * n..(j + 1) * n];
            for (o, v) in out.iter_mut().zip(col) {
                *o += c * v;
            }
        }
        Ok(out)
    }
}

/// Convenience: build the factor and decompose it in one step.
pub fn local_metric<'a, I>(vertex: &[f64], neighbors: I, mu: f64, drop_tol: f64) -> Result<LocalMetric, MetricError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    DirectionFactor::build(vertex, neighbors)?.eigendecompose(mu, drop_tol)
}
