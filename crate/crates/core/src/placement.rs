//! Placement of the vertex that completes a triangle on an active edge.
//!
//! Given edge vertices `v1`, `v2` with local metrics `Q1`, `Q2`, the new
//! vertex minimizes `(v - v1)ᵀ Q1 (v - v1)` over points on the sphere of
//! radius `rc` about the edge midpoint that are equidistant from both edge
//! vertices in their own metrics, restricted to the half-space on the far
//! side of the owning triangle.
//!
//! The solve is carried out in the affine subspace through the midpoint
//! spanned by the edge direction, the outward normal and the eigenvectors
//! of both metrics. Any component orthogonal to that span adds `|w|²/mu` to
//! both quadratic forms, leaving the isosceles residual unchanged and only
//! increasing the objective, so the reduced problem loses nothing. On the
//! reduced problem a null-space SQP runs from several starting points on the
//! sphere, with the sphere constraint enforced exactly by radial retraction.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::complex::{Complex, EdgeKey, VertexId};
use crate::metric::{LocalMetric, MetricError};
use crate::spatial::{sq_dist, PointCloud};

pub const MAX_ITERATIONS: usize = 200;
const FEAS_TOL: f64 = 1e-8;
const STATIONARITY_TOL: f64 = 1e-7;
const BASIS_DROP_TOL: f64 = 1e-8;
const ROTATIONS: usize = 8;
const MAX_START_PLANES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlacementError {
    #[error("constraint set is empty")]
    EmptyConstraintSet,
    #[error("solver did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("both seeding solutions coincide")]
    DegenerateSecond,
    #[error("minimizer is {distance} from the nearest data point")]
    MinimizerTooFar { distance: f64 },
    #[error("active edge has zero length")]
    DegenerateEdge,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// `rc = (sqrt(3)/2) · (edge_length + char_length) / 2`.
pub fn constraint_radius(edge_length: f64, char_length: f64) -> f64 {
    0.75f64.sqrt() * 0.5 * (edge_length + char_length)
}

/// Inputs of one placement solve.
#[derive(Debug, Clone, Copy)]
pub struct PlacementProblem<'a> {
    pub v1: &'a [f64],
    pub v2: &'a [f64],
    pub q1: &'a LocalMetric,
    pub q2: &'a LocalMetric,
    /// Third vertex of the triangle owning the edge; `None` when seeding.
    pub v0: Option<&'a [f64]>,
    pub rc: f64,
}

impl PlacementProblem<'_> {
    pub fn midpoint(&self) -> Vec<f64> {
        self.v1.iter().zip(self.v2).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Unit normal to the edge in the plane of `v0, v1, v2`, pointing away
    /// from `v0`.
    pub fn outward_normal(&self) -> Option<Vec<f64>> {
        let v0 = self.v0?;
        let e: Vec<f64> = self.v2.iter().zip(self.v1).map(|(a, b)| a - b).collect();
        let ee: f64 = e.iter().map(|x| x * x).sum();
        let vm = self.midpoint();
        let w: Vec<f64> = vm.iter().zip(v0).map(|(a, b)| a - b).collect();
        let t = w.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / ee;
        let n: Vec<f64> = w.iter().zip(&e).map(|(a, b)| a - t * b).collect();
        normalized(&n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSolution {
    pub minimizer: Vec<f64>,
    pub objective: f64,
    /// `|v* - vm| - rc`.
    pub sphere_residual: f64,
    /// `(v*-v1)ᵀQ1(v*-v1) - (v*-v2)ᵀQ2(v*-v2)`.
    pub isosceles_residual: f64,
    /// `nᵀ(v* - vm)` for the normal used by the solve.
    pub side: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = dot(v, v).sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

/// In-plane normal to the edge within the dominant tangent plane of `q`,
/// used when no owning triangle exists.
fn tangent_normal(q: &LocalMetric, edge: &[f64]) -> Option<Vec<f64>> {
    let n = q.ambient_dim();
    let cols = q.eigvecs().as_slice();
    let col = |j: usize| &cols[j * n..(j + 1) * n];
    let ehat = normalized(edge)?;
    let raw: Vec<f64> = if q.rank() >= 2 {
        let (t1, t2) = (col(0), col(1));
        let (a, b) = (dot(t2, &ehat), -dot(t1, &ehat));
        if a.hypot(b) > 1e-8 {
            t1.iter().zip(t2).map(|(x, y)| a * x + b * y).collect()
        } else {
            t1.to_vec()
        }
    } else if q.rank() == 1 {
        col(0).to_vec()
    } else {
        return None;
    };
    let along = dot(&raw, &ehat);
    let orth: Vec<f64> = raw.iter().zip(&ehat).map(|(x, e)| x - along * e).collect();
    if dot(&orth, &orth).sqrt() < 1e-8 {
        // fall back to any axis orthogonal to the edge
        return (0..n).find_map(|i| {
            let mut u = vec![0.0; n];
            u[i] = 1.0;
            let a = dot(&u, &ehat);
            let o: Vec<f64> = u.iter().zip(&ehat).map(|(x, e)| x - a * e).collect();
            (dot(&o, &o).sqrt() > 0.5).then(|| normalized(&o)).flatten()
        });
    }
    normalized(&orth)
}

/// The placement problem restricted to an orthonormal basis `B` through the
/// midpoint: `v = vm + B z`.
struct Reduced {
    basis: Vec<Vec<f64>>,
    vm: Vec<f64>,
    z1: DVector<f64>,
    z2: DVector<f64>,
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    rc: f64,
}

struct Evaluation {
    f: f64,
    h: f64,
    grad_f: DVector<f64>,
    grad_h: DVector<f64>,
}

impl Reduced {
    /// Builds the reduced problem. `normal` becomes basis vector 1.
    fn new(p: &PlacementProblem, normal: &[f64]) -> Result<Self, PlacementError> {
        let dim = p.v1.len();
        for x in [p.v2, normal] {
            if x.len() != dim {
                return Err(MetricError::DimensionMismatch { expected: dim, found: x.len() }.into());
            }
        }
        for q in [p.q1, p.q2] {
            if q.ambient_dim() != dim {
                return Err(MetricError::DimensionMismatch { expected: dim, found: q.ambient_dim() }.into());
            }
        }
        let edge: Vec<f64> = p.v2.iter().zip(p.v1).map(|(a, b)| a - b).collect();
        let ehat = normalized(&edge).ok_or(PlacementError::DegenerateEdge)?;
        let mut basis: Vec<Vec<f64>> = vec![ehat];
        let mut candidates: Vec<Vec<f64>> = vec![normal.to_vec()];
        for q in [p.q1, p.q2] {
            let cols = q.eigvecs().as_slice();
            candidates.extend(cols.chunks_exact(dim).map(|c| c.to_vec()));
        }
        for mut c in candidates {
            if basis.len() == dim {
                break;
            }
            let norm0 = dot(&c, &c).sqrt();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let a = dot(&c, b);
                    c.iter_mut().zip(b).for_each(|(x, y)| *x -= a * y);
                }
            }
            let norm = dot(&c, &c).sqrt();
            if norm > BASIS_DROP_TOL * norm0 {
                basis.push(c.into_iter().map(|x| x / norm).collect());
            }
        }
        let d = basis.len();
        let vm = p.midpoint();
        let coords = |x: &[f64]| {
            let rel: Vec<f64> = x.iter().zip(&vm).map(|(a, b)| a - b).collect();
            DVector::from_iterator(d, basis.iter().map(|b| dot(b, &rel)))
        };
        let z1 = coords(p.v1);
        let z2 = coords(p.v2);
        let reduce = |q: &LocalMetric| -> Result<DMatrix<f64>, PlacementError> {
            let qb: Vec<Vec<f64>> = basis.iter().map(|b| q.apply(b)).collect::<Result<_, _>>()?;
            let mut a = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in i..d {
                    let v = 0.5 * (dot(&basis[i], &qb[j]) + dot(&basis[j], &qb[i]));
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            Ok(a)
        };
        Ok(Self { a1: reduce(p.q1)?, a2: reduce(p.q2)?, basis, vm, z1, z2, rc: p.rc })
    }

    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn evaluate(&self, z: &DVector<f64>) -> Evaluation {
        let r1 = z - &self.z1;
        let r2 = z - &self.z2;
        let a1r1 = &self.a1 * &r1;
        let a2r2 = &self.a2 * &r2;
        let f = r1.dot(&a1r1);
        let g = r2.dot(&a2r2);
        Evaluation { f, h: f - g, grad_f: 2.0 * &a1r1, grad_h: 2.0 * (a1r1 - a2r2) }
    }

    fn feasible(&self, e: &Evaluation) -> bool {
        e.h.abs() <= FEAS_TOL * e.f.max(1.0)
    }

    fn retract(&self, z: DVector<f64>) -> DVector<f64> {
        let n = z.norm();
        z * (self.rc / n)
    }

    fn lift(&self, z: &DVector<f64>) -> Vec<f64> {
        let mut v = self.vm.clone();
        for (b, zi) in self.basis.iter().zip(z.iter()) {
            v.iter_mut().zip(b).for_each(|(x, y)| *x += zi * y);
        }
        v
    }

    /// Orthonormal basis of the complement of span(rows).
    fn null_space(rows: &[DVector<f64>], d: usize) -> Vec<DVector<f64>> {
        let mut q: Vec<DVector<f64>> = Vec::new();
        for r in rows {
            let mut v = r.clone();
            for u in &q {
                v -= u * u.dot(&v);
            }
            let n = v.norm();
            if n > 1e-12 * r.norm().max(f64::MIN_POSITIVE) {
                q.push(v / n);
            }
        }
        let row_rank = q.len();
        for i in 0..d {
            if q.len() == d {
                break;
            }
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            for _ in 0..2 {
                for u in &q {
                    v -= u * u.dot(&v);
                }
            }
            let n = v.norm();
            if n > 1e-6 {
                q.push(v / n);
            }
        }
        q.split_off(row_rank)
    }

    /// Runs SQP from `z0`. Returns the final point, iteration count and
    /// whether it converged.
    fn sqp(&self, z0: DVector<f64>) -> (DVector<f64>, usize, bool) {
        let d = self.dim();
        let mut z = self.retract(z0);
        let mut rho = 0.0f64;
        for it in 0..MAX_ITERATIONS {
            let ev = self.evaluate(&z);
            // Linearized constraint rows: sphere (z) and isosceles (grad_h).
            let zn = z.norm_squared();
            let gh_t = &ev.grad_h - &z * (z.dot(&ev.grad_h) / zn);
            let gh2 = gh_t.norm_squared();
            let zspace = Self::null_space(&[z.clone(), ev.grad_h.clone()], d);
            let zmat = if zspace.is_empty() {
                DMatrix::zeros(d, 0)
            } else {
                DMatrix::from_columns(&zspace)
            };
            let reduced_grad = zmat.tr_mul(&ev.grad_f);
            let stationary = reduced_grad.norm() <= STATIONARITY_TOL * ev.grad_f.norm().max(1.0);
            if self.feasible(&ev) && stationary {
                return (z, it, true);
            }
            // Multipliers by least squares on the full gradient.
            let gf_t = &ev.grad_f - &z * (z.dot(&ev.grad_f) / zn);
            let lambda = if gh2 > 0.0 { gf_t.dot(&gh_t) / gh2 } else { 0.0 };
            let nu = z.dot(&(&ev.grad_f - &ev.grad_h * lambda)) / (2.0 * zn);
            let w = &self.a1 * 2.0 - (&self.a1 - &self.a2) * (2.0 * lambda) - DMatrix::identity(d, d) * (2.0 * nu);
            // Normal step restores the linearized isosceles constraint.
            let dn = if gh2 > 0.0 { &gh_t * (-ev.h / gh2) } else { DVector::zeros(d) };
            let mut step = dn.clone();
            if zmat.ncols() > 0 {
                let hr = zmat.tr_mul(&(&w * &zmat));
                let rhs = zmat.tr_mul(&(&ev.grad_f + &w * &dn));
                let eig = hr.symmetric_eigen();
                let scale = eig.eigenvalues.amax().max(1e-300);
                let mut t = DVector::zeros(zmat.ncols());
                for k in 0..zmat.ncols() {
                    let lam = eig.eigenvalues[k].abs().max(1e-8 * scale);
                    let u = eig.eigenvectors.column(k);
                    t -= u * (u.dot(&rhs) / lam);
                }
                step += &zmat * t;
            }
            rho = rho.max(2.0 * lambda.abs() + 1.0);
            let merit = |e: &Evaluation| e.f + rho * e.h.abs();
            let phi0 = merit(&ev);
            let slope = ev.grad_f.dot(&step) - rho * ev.h.abs();
            let local = step.norm() < 1e-3 * self.rc;
            let mut alpha = 1.0;
            let mut next = self.retract(&z + &step);
            if !local {
                loop {
                    let cand = self.evaluate(&next);
                    if merit(&cand) <= phi0 + 1e-4 * alpha * slope.min(0.0) || alpha < 1e-6 {
                        break;
                    }
                    alpha *= 0.5;
                    next = self.retract(&z + &step * alpha);
                }
            }
            if !next.iter().all(|x| x.is_finite()) {
                return (z, it, false);
            }
            z = next;
        }
        let ev = self.evaluate(&z);
        let ok = self.feasible(&ev);
        (z, MAX_ITERATIONS, ok && d == 2)
    }

    /// Starting directions: the normal (basis 1) rotated toward each of the
    /// first few complementary basis directions.
    fn starts(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        let unit = |i: usize| {
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            v
        };
        if d <= 2 {
            return vec![unit(1), -unit(1)];
        }
        let mut out = Vec::new();
        for j in 2..d.min(2 + MAX_START_PLANES) {
            for k in 0..ROTATIONS {
                let th = std::f64::consts::TAU * k as f64 / ROTATIONS as f64;
                if j > 2 && (k == 0 || k == ROTATIONS / 2) {
                    continue;
                }
                out.push(unit(1) * th.cos() + unit(j) * th.sin());
            }
        }
        out
    }

    /// All converged stationary points from every start.
    fn solve_all(&self) -> (Vec<(DVector<f64>, usize)>, bool) {
        let mut found = Vec::new();
        let mut any_feasible_end = false;
        for s in self.starts() {
            let (z, iters, ok) = self.sqp(s * self.rc);
            if ok {
                found.push((z, iters));
            } else if self.feasible(&self.evaluate(&z)) {
                any_feasible_end = true;
            }
        }
        (found, any_feasible_end)
    }

    fn solution(&self, p: &PlacementProblem, z: &DVector<f64>, iterations: usize) -> PlacementSolution {
        let v = self.lift(z);
        let f1 = p.q1.q_form_displaced(p.v1, &v).unwrap_or(f64::NAN);
        let f2 = p.q2.q_form_displaced(p.v2, &v).unwrap_or(f64::NAN);
        PlacementSolution {
            sphere_residual: sq_dist(&v, &self.vm).sqrt() - self.rc,
            isosceles_residual: f1 - f2,
            objective: f1,
            side: z[1],
            minimizer: v,
            iterations,
        }
    }
}

/// Solves for the new vertex. With `v0` present the half-space constraint
/// is applied; without it the best solution on either side is returned.
pub fn solve_placement(problem: &PlacementProblem) -> Result<PlacementSolution, PlacementError> {
    if problem.v1 == problem.v2 {
        return Err(PlacementError::DegenerateEdge);
    }
    let normal = match problem.outward_normal() {
        Some(n) => n,
        None => {
            let edge: Vec<f64> = problem.v2.iter().zip(problem.v1).map(|(a, b)| a - b).collect();
            tangent_normal(problem.q1, &edge).ok_or(PlacementError::EmptyConstraintSet)?
        }
    };
    let reduced = Reduced::new(problem, &normal)?;
    if reduced.dim() < 2 {
        return Err(PlacementError::EmptyConstraintSet);
    }
    let (found, feasible_end) = reduced.solve_all();
    if found.is_empty() {
        return Err(if feasible_end {
            PlacementError::NoConvergence(MAX_ITERATIONS)
        } else {
            PlacementError::EmptyConstraintSet
        });
    }
    let half_space = problem.v0.is_some();
    found
        .iter()
        .map(|(z, it)| reduced.solution(problem, z, *it))
        .filter(|s| !half_space || s.side >= -1e-10 * problem.rc)
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .ok_or(PlacementError::EmptyConstraintSet)
}

/// Seeding solve without the half-space constraint: returns the best
/// solution on each side of the dominant tangent plane's in-plane normal.
pub fn solve_placement_pair(
    problem: &PlacementProblem,
) -> Result<(PlacementSolution, PlacementSolution), PlacementError> {
    let problem = PlacementProblem { v0: None, ..*problem };
    let edge: Vec<f64> = problem.v2.iter().zip(problem.v1).map(|(a, b)| a - b).collect();
    if problem.v1 == problem.v2 {
        return Err(PlacementError::DegenerateEdge);
    }
    let normal = tangent_normal(problem.q1, &edge).ok_or(PlacementError::EmptyConstraintSet)?;
    let reduced = Reduced::new(&problem, &normal)?;
    if reduced.dim() < 2 {
        return Err(PlacementError::EmptyConstraintSet);
    }
    let (found, feasible_end) = reduced.solve_all();
    if found.is_empty() {
        return Err(if feasible_end {
            PlacementError::NoConvergence(MAX_ITERATIONS)
        } else {
            PlacementError::EmptyConstraintSet
        });
    }
    let sols: Vec<PlacementSolution> = found.iter().map(|(z, it)| reduced.solution(&problem, z, *it)).collect();
    let best = |pos: bool| {
        sols.iter()
            .filter(|s| (s.side >= 0.0) == pos)
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
            .cloned()
    };
    let (a, b) = match (best(true), best(false)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(PlacementError::DegenerateSecond),
    };
    if sq_dist(&a.minimizer, &b.minimizer).sqrt() < 1e-6 * problem.rc {
        return Err(PlacementError::DegenerateSecond);
    }
    Ok((a, b))
}

/// A vertex proposed to complete the active edge's triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    /// An existing complex vertex.
    Existing(VertexId),
    /// A data point that does not yet back a vertex.
    NewPoint(usize),
}

/// Turns a minimizer into at most two candidate vertices.
///
/// The first candidate is the data point nearest the minimizer. If some
/// front edge adjacent to the active edge has its far vertex within
/// `merge_tol` of that point, the far vertex is proposed as well and tried
/// first.
pub fn candidate_vertices(
    solution: &PlacementSolution,
    cloud: &PointCloud,
    complex: &Complex,
    edge: EdgeKey,
    accept_tol: f64,
    merge_tol: f64,
) -> Result<Vec<Candidate>, PlacementError> {
    let (idx, dist) = cloud
        .nearest(&solution.minimizer)
        .map_err(|_| MetricError::DimensionMismatch { expected: cloud.dim(), found: solution.minimizer.len() })?;
    if dist > accept_tol {
        return Err(PlacementError::MinimizerTooFar { distance: dist });
    }
    let first = match complex.vertex_for_source(idx) {
        Some(v) => Candidate::Existing(v),
        None => Candidate::NewPoint(idx),
    };
    let first_pos = cloud.point(idx);
    let mut merge: Option<(f64, VertexId)> = None;
    for (adj, _) in complex.adjacent_front_edges(edge) {
        let shared = match adj.shared_vertex(edge) {
            Some(s) => s,
            None => continue,
        };
        let far = adj.other(shared);
        if edge.contains(far) || Candidate::Existing(far) == first {
            continue;
        }
        let d = sq_dist(complex.coords(far), first_pos).sqrt();
        if d <= merge_tol && merge.is_none_or(|(bd, bv)| (d, far) < (bd, bv)) {
            merge = Some((d, far));
        }
    }
    let mut out = Vec::with_capacity(2);
    if let Some((_, v)) = merge {
        out.push(Candidate::Existing(v));
    }
    out.push(first);
    Ok(out)
}
