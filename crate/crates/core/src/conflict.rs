//! Overlap and conflict tests between triangles embedded in `R^N`.
//!
//! Two triangles overlap when, after orthogonally projecting both onto the
//! plane of one of them, the open interiors of the projected triangles
//! intersect. They conflict when they overlap and their Euclidean distance
//! is within a tolerance. The projection is tried in both directions so the
//! relation is symmetric, skipping the plane of a sliver when the other
//! triangle is better shaped.

use thiserror::Error;

use crate::distance::simplex_distance;
use crate::exec::Exec;
use crate::spatial::sq_dist;

/// Relative area below which a triangle is treated as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Shape ratio below which a triangle's plane is not used for projection
/// unless the other triangle is even thinner.
pub const SLIVER_RATIO: f64 = 0.05;

/// Relative slack used when comparing projected intervals.
const SEPARATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConflictError {
    #[error("degenerate reference triangle")]
    DegenerateTriangle,
}

/// A triangle with a cached bounding sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTriangle {
    vertices: [Vec<f64>; 3],
    center: Vec<f64>,
    radius: f64,
}

impl EmbeddedTriangle {
    pub fn new(a: &[f64], b: &[f64], c: &[f64]) -> Self {
        let center: Vec<f64> = (0..a.len()).map(|i| (a[i] + b[i] + c[i]) / 3.0).collect();
        let radius = [a, b, c].iter().map(|v| sq_dist(v, &center)).fold(0.0, f64::max).sqrt();
        Self { vertices: [a.to_vec(), b.to_vec(), c.to_vec()], center, radius }
    }

    pub fn vertices(&self) -> [&[f64]; 3] {
        [&self.vertices[0], &self.vertices[1], &self.vertices[2]]
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `2·area / longest_edge²`, a scale-free shape measure.
    pub fn shape_ratio(&self) -> f64 {
        let [a, b, c] = self.vertices();
        let e1: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let e2: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
        let (l1, l2) = (dot(&e1, &e1), dot(&e2, &e2));
        let l3 = sq_dist(b, c);
        let area2 = (l1 * l2 - dot(&e1, &e2).powi(2)).max(0.0).sqrt();
        let longest = l1.max(l2).max(l3);
        if longest == 0.0 {
            0.0
        } else {
            area2 / longest
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.shape_ratio() <= DEGENERATE_TOL
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub type Triangle2 = [[f64; 2]; 3];

/// Projects both triangles onto the plane of `reference`, with the
/// reference's first vertex at the origin.
pub fn project_to_plane(
    reference: &EmbeddedTriangle,
    other: &EmbeddedTriangle,
) -> Result<(Triangle2, Triangle2), ConflictError> {
    if reference.is_degenerate() {
        return Err(ConflictError::DegenerateTriangle);
    }
    let [o, b, c] = reference.vertices();
    let mut u1: Vec<f64> = b.iter().zip(o).map(|(x, y)| x - y).collect();
    let n1 = dot(&u1, &u1).sqrt();
    u1.iter_mut().for_each(|v| *v /= n1);
    let e2: Vec<f64> = c.iter().zip(o).map(|(x, y)| x - y).collect();
    let along = dot(&e2, &u1);
    let mut u2: Vec<f64> = e2.iter().zip(&u1).map(|(x, y)| x - along * y).collect();
    let n2 = dot(&u2, &u2).sqrt();
    u2.iter_mut().for_each(|v| *v /= n2);
    let coords = |p: &[f64]| {
        let d: Vec<f64> = p.iter().zip(o).map(|(x, y)| x - y).collect();
        [dot(&d, &u1), dot(&d, &u2)]
    };
    let r = [[0.0, 0.0], [n1, 0.0], [along, n2]];
    let [p, q, s] = other.vertices();
    Ok((r, [coords(p), coords(q), coords(s)]))
}

fn area2(t: &Triangle2) -> f64 {
    let (a, b, c) = (t[0], t[1], t[2]);
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn longest_edge2(t: &Triangle2) -> f64 {
    (0..3)
        .map(|i| {
            let (p, q) = (t[i], t[(i + 1) % 3]);
            (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
        })
        .fold(0.0, f64::max)
}

/// Whether the open interiors of two planar triangles intersect.
///
/// Uses the separating axis theorem over the six edge normals; intervals
/// that merely touch count as separated. A degenerate triangle has an empty
/// interior and never overlaps.
pub fn open_interiors_intersect(t1: &Triangle2, t2: &Triangle2) -> bool {
    let scale = longest_edge2(t1).max(longest_edge2(t2)).sqrt();
    if scale == 0.0 {
        return false;
    }
    for t in [t1, t2] {
        if area2(t).abs() <= DEGENERATE_TOL * longest_edge2(t) {
            return false;
        }
    }
    let eps = SEPARATION_TOL * scale;
    for t in [t1, t2] {
        for i in 0..3 {
            let (p, q) = (t[i], t[(i + 1) % 3]);
            let (nx, ny) = (q[1] - p[1], p[0] - q[0]);
            let len = (nx * nx + ny * ny).sqrt();
            let (nx, ny) = (nx / len, ny / len);
            let interval = |tr: &Triangle2| {
                tr.iter().map(|v| v[0] * nx + v[1] * ny).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                })
            };
            let (lo1, hi1) = interval(t1);
            let (lo2, hi2) = interval(t2);
            if hi1 <= lo2 + eps || hi2 <= lo1 + eps {
                return false;
            }
        }
    }
    true
}

/// Overlap with `reference`'s plane as the projection plane.
pub fn overlap_projected(reference: &EmbeddedTriangle, other: &EmbeddedTriangle) -> Result<bool, ConflictError> {
    let (r, o) = project_to_plane(reference, other)?;
    Ok(open_interiors_intersect(&r, &o))
}

/// Symmetric overlap: true if the projected open interiors intersect in
/// either triangle's plane. The plane of a sliver (shape ratio below
/// [`SLIVER_RATIO`]) is poorly determined, so it is only used when that
/// triangle is at least as well shaped as the other. `t1` must be
/// nondegenerate.
pub fn overlap(t1: &EmbeddedTriangle, t2: &EmbeddedTriangle) -> Result<bool, ConflictError> {
    if t1.is_degenerate() {
        return Err(ConflictError::DegenerateTriangle);
    }
    let (s1, s2) = (t1.shape_ratio(), t2.shape_ratio());
    if (s1 >= SLIVER_RATIO || s1 >= s2) && overlap_projected(t1, t2)? {
        return Ok(true);
    }
    if t2.is_degenerate() || (s2 < SLIVER_RATIO && s2 < s1) {
        return Ok(false);
    }
    overlap_projected(t2, t1)
}

/// Minimum Euclidean distance between the two closed triangles.
pub fn triangle_distance(t1: &EmbeddedTriangle, t2: &EmbeddedTriangle) -> f64 {
    simplex_distance(&t1.vertices(), &t2.vertices())
}

/// Lower bound on the distance between two triangles from their bounding spheres.
pub fn sphere_gap(t1: &EmbeddedTriangle, t2: &EmbeddedTriangle) -> f64 {
    (sq_dist(&t1.center, &t2.center).sqrt() - t1.radius - t2.radius).max(0.0)
}

/// Whether two triangles conflict at tolerance `delta`.
pub fn pair_conflicts(t1: &EmbeddedTriangle, t2: &EmbeddedTriangle, delta: f64) -> Result<bool, ConflictError> {
    if sphere_gap(t1, t2) > delta {
        return Ok(false);
    }
    Ok(overlap(t1, t2)? && triangle_distance(t1, t2) <= delta)
}

/// Whether `candidate` conflicts with any of `existing`.
pub fn conflicts_with_any(
    candidate: &EmbeddedTriangle,
    existing: &[EmbeddedTriangle],
    delta: f64,
    exec: Exec,
) -> Result<bool, ConflictError> {
    if candidate.is_degenerate() {
        return Err(ConflictError::DegenerateTriangle);
    }
    // candidate is nondegenerate, so pair_conflicts cannot fail
    Ok(exec.any_range(existing.len(), |i| pair_conflicts(candidate, &existing[i], delta).unwrap_or(false)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tri(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> EmbeddedTriangle {
        EmbeddedTriangle::new(&a, &b, &c)
    }

    #[test]
    fn projection_identities() {
        let t = tri([0.1, 0.2, 0.3], [1.0, 0.0, 0.5], [0.2, 1.1, -0.4]);
        let (r, o) = project_to_plane(&t, &t).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(r[i][0], o[i][0], epsilon = 1e-12);
            assert_abs_diff_eq!(r[i][1], o[i][1], epsilon = 1e-12);
        }
        // shifted along the normal
        let [a, b, c] = t.vertices();
        let e1: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let e2: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
        let n = [e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]];
        let shift = |p: &[f64]| [p[0] + 2.0 * n[0], p[1] + 2.0 * n[1], p[2] + 2.0 * n[2]];
        let s = tri(shift(a), shift(b), shift(c));
        let (_, o) = project_to_plane(&t, &s).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(r[i][0], o[i][0], epsilon = 1e-12);
            assert_abs_diff_eq!(r[i][1], o[i][1], epsilon = 1e-12);
        }
    }

    #[test]
    fn shared_edge_does_not_overlap() {
        let a = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let b = tri([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]);
        assert!(!overlap(&a, &b).unwrap());
        assert!(overlap(&a, &a).unwrap());
        // folded 90 degrees about the shared edge
        let f = tri([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.8]);
        assert!(!overlap(&a, &f).unwrap());
        assert!(!pair_conflicts(&a, &f, 0.25).unwrap());
    }

    #[test]
    fn stacked_triangles_conflict_only_when_near() {
        let t1 = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let far = tri([0.2, 0.2, 1.0], [1.2, 0.2, 1.0], [0.2, 1.2, 1.0]);
        let near = tri([0.2, 0.2, 0.1], [1.2, 0.2, 0.1], [0.2, 1.2, 0.1]);
        assert!(overlap(&t1, &far).unwrap());
        assert!(!pair_conflicts(&t1, &far, 0.25).unwrap());
        assert!(pair_conflicts(&t1, &near, 0.25).unwrap());
        assert_abs_diff_eq!(triangle_distance(&t1, &far), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_reference_errors() {
        let d = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]);
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert_eq!(project_to_plane(&d, &t).unwrap_err(), ConflictError::DegenerateTriangle);
        assert!(!overlap(&t, &d).unwrap());
        assert!(conflicts_with_any(&d, &[t], 0.1, Exec::Sequential).is_err());
    }
}
