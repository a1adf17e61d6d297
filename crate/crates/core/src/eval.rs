//! Point-to-mesh error statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{Complex, TopologyCounts};
use crate::conflict::EmbeddedTriangle;
use crate::distance::point_triangle_distance;
use crate::exec::Exec;
use crate::spatial::{sq_dist, IndexMode, PointCloud};

const SEED_TRIANGLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("complex has no triangles")]
    EmptyComplex,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n_points: usize,
    pub max: f64,
    pub avg: f64,
    pub rms: f64,
    pub topology: TopologyCounts,
    pub per_point: Vec<f64>,
}

/// Distance queries against a fixed set of triangles, pruned with bounding
/// spheres around the triangle centroids.
pub struct MeshDistance<'a> {
    triangles: &'a [EmbeddedTriangle],
    centers: PointCloud,
    max_radius: f64,
}

impl<'a> MeshDistance<'a> {
    pub fn new(triangles: &'a [EmbeddedTriangle]) -> Result<Self, EvalError> {
        let centers: Vec<Vec<f64>> = triangles.iter().map(|t| t.center().to_vec()).collect();
        let centers = PointCloud::with_mode(centers, IndexMode::Auto).map_err(|_| EvalError::EmptyComplex)?;
        let max_radius = triangles.iter().map(|t| t.radius()).fold(0.0, f64::max);
        Ok(Self { triangles, centers, max_radius })
    }

    pub fn distance(&self, p: &[f64]) -> Result<f64, EvalError> {
        if p.len() != self.centers.dim() {
            return Err(EvalError::DimensionMismatch { expected: self.centers.dim(), found: p.len() });
        }
        let exact = |i: usize| point_triangle_distance(p, self.triangles[i].vertices());
        let near = self.centers.knn(p, SEED_TRIANGLES).expect("dimension checked");
        let mut best = near.iter().map(|&(i, _)| exact(i)).fold(f64::INFINITY, f64::min);
        // every triangle closer than `best` has its center within best + radius
        let reach = best + self.max_radius;
        for i in self.centers.radius_query(p, reach).expect("dimension checked") {
            let t = &self.triangles[i];
            if sq_dist(p, t.center()).sqrt() - t.radius() < best {
                best = best.min(exact(i));
            }
        }
        Ok(best)
    }
}

/// Shortest distance from `point` to the closed triangles of `complex`.
pub fn point_to_mesh_distance(point: &[f64], complex: &Complex) -> Result<f64, EvalError> {
    MeshDistance::new(complex.triangle_geometry())?.distance(point)
}

/// Error statistics of every cloud point against the mesh.
pub fn evaluate(cloud: &PointCloud, complex: &Complex, exec: Exec) -> Result<ErrorReport, EvalError> {
    let mesh = MeshDistance::new(complex.triangle_geometry())?;
    if cloud.dim() != mesh.centers.dim() {
        return Err(EvalError::DimensionMismatch { expected: mesh.centers.dim(), found: cloud.dim() });
    }
    let per_point: Vec<f64> = exec.map_range(cloud.len(), |i| mesh.distance(cloud.point(i)).expect("dimension checked"));
    let n = per_point.len() as f64;
    let max = per_point.iter().copied().fold(0.0, f64::max);
    let avg = per_point.iter().sum::<f64>() / n;
    let rms = (per_point.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    Ok(ErrorReport { n_points: per_point.len(), max, avg, rms, topology: complex.topology_counts(), per_point })
}
