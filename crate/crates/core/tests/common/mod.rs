//! Independent oracles shared by the integration suites. Nothing here calls
//! the library code it is used to check.
#![allow(dead_code)]

use frontmesh::datasets::{add_noise, embed, sample_manifold, EmbeddingBasis, ManifoldSpec};
use frontmesh::exec::Exec;
use frontmesh::spatial::PointCloud;
use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------- datasets

/// Samples `count` points, adds noise, embeds them in `R^dim`. Uses seeds
/// `seed`, `seed + 1`, `seed + 2` for sampling, noise and basis.
pub fn embedded_cloud(spec: &ManifoldSpec, count: usize, noise: f64, dim: usize, seed: u64) -> (PointCloud, EmbeddingBasis) {
    let p = sample_manifold(spec, count, seed, Exec::Parallel).unwrap();
    let p = if noise > 0.0 { add_noise(&p, noise, seed + 1, Exec::Parallel) } else { p };
    let basis = EmbeddingBasis::random(dim, seed + 2).unwrap();
    (PointCloud::new(embed(&p, &basis, Exec::Parallel)).unwrap(), basis)
}

// ---------------------------------------------------------------- metric

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Neighbors concentrated near a random `k`-plane through the vertex, so the
/// spectrum has a few dominant directions plus a small tail.
pub fn metric_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let center = gaussian(rng, n);
    let frame: Vec<Vec<f64>> = (0..k).map(|_| gaussian(rng, n)).collect();
    let nbrs = (0..m)
        .map(|_| {
            let mut x = center.clone();
            for f in &frame {
                let c: f64 = rng.sample(StandardNormal);
                x.iter_mut().zip(f).for_each(|(xi, fi)| *xi += c * fi);
            }
            x.iter_mut().for_each(|xi| *xi += 0.01 * rng.sample::<f64, _>(StandardNormal));
            x
        })
        .collect();
    (center, nbrs)
}

/// Dense `P` from raw neighbor directions.
pub fn dense_covariance(center: &[f64], neighbors: &[Vec<f64>]) -> DMatrix<f64> {
    let n = center.len();
    let mut p = DMatrix::zeros(n, n);
    let mut m = 0usize;
    for x in neighbors {
        let u = DVector::from_iterator(n, x.iter().zip(center).map(|(a, b)| a - b));
        let norm2 = u.norm_squared();
        if norm2.sqrt() <= 1e-12 {
            continue;
        }
        p += &u * u.transpose() / norm2;
        m += 1;
    }
    p / m as f64
}

/// `xᵀ(P + μI)⁻¹x` by a dense LU solve.
pub fn dense_q_form(p: &DMatrix<f64>, mu: f64, x: &[f64]) -> f64 {
    let n = p.nrows();
    let a = p + DMatrix::identity(n, n) * mu;
    let x = DVector::from_column_slice(x);
    let y = a.lu().solve(&x).expect("P + mu I is positive definite");
    x.dot(&y)
}

// ---------------------------------------------------------------- spatial

pub fn scan_radius(points: &[Vec<f64>], c: &[f64], r: f64) -> Vec<usize> {
    (0..points.len()).filter(|&i| sq(&points[i], c) <= r * r).collect()
}

pub fn scan_knn(points: &[Vec<f64>], q: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (sq(p, q), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(d, i)| (i, d.sqrt())).collect()
}

pub fn scan_nearest_at_distance(points: &[Vec<f64>], c: usize, target: f64) -> Option<usize> {
    (0..points.len())
        .filter(|&j| j != c)
        .map(|j| ((sq(&points[j], &points[c]).sqrt() - target).abs(), j))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, j)| j)
}

// ---------------------------------------------------------------- distance

fn bary(t: [&[f64]; 3], a: f64, b: f64) -> Vec<f64> {
    let c = 1.0 - a - b;
    (0..t[0].len()).map(|i| c * t[0][i] + a * t[1][i] + b * t[2][i]).collect()
}

/// Minimizes `f` over the barycentric simplex by grid search followed by
/// repeated local zooms. Returns an upper bound on the true minimum.
fn simplex_grid_min(f: &dyn Fn(f64, f64) -> f64, grid: usize, zooms: usize) -> f64 {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let scan = |lo_a: f64, lo_b: f64, h: f64, steps: usize, best: &mut (f64, f64, f64)| {
        for i in 0..=steps {
            for j in 0..=steps {
                let (a, b) = (lo_a + i as f64 * h, lo_b + j as f64 * h);
                if a < 0.0 || b < 0.0 || a + b > 1.0 {
                    continue;
                }
                let v = f(a, b);
                if v < best.0 {
                    *best = (v, a, b);
                }
            }
        }
    };
    let mut h = 1.0 / grid as f64;
    scan(0.0, 0.0, h, grid, &mut best);
    for _ in 0..zooms {
        let (_, a, b) = best;
        scan(a - h, b - h, h / 10.0, 20, &mut best);
        h /= 10.0;
    }
    best.0
}

/// Point-to-triangle distance by barycentric sampling with refinement.
pub fn sampled_point_triangle(p: &[f64], t: [&[f64]; 3]) -> f64 {
    simplex_grid_min(&|a, b| sq(p, &bary(t, a, b)), 100, 6).sqrt()
}

/// Triangle-to-triangle distance by sampling one triangle and measuring
/// each sample against the other with [`sampled_point_triangle`].
pub fn sampled_triangle_triangle(t1: [&[f64]; 3], t2: [&[f64]; 3]) -> f64 {
    simplex_grid_min(&|a, b| sampled_point_triangle(&bary(t1, a, b), t2).powi(2), 24, 4).sqrt()
}

// ---------------------------------------------------------------- overlap

/// A random triangle and a second one drawn around it, so that about
/// half of the pairs overlap.
pub fn random_pair(rng: &mut ChaCha8Rng, dim: usize) -> [[Vec<f64>; 3]; 2] {
    let mut p = || (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let a = [p(), p(), p()];
    let shift = p();
    let b = [p(), p(), p()].map(|v| (0..dim).map(|i| 0.5 * v[i] + 0.5 * a[0][i] + 0.6 * shift[i]).collect());
    [a, b]
}

const SLIVER_RATIO: f64 = 0.05;

/// `2·area / longest²` computed from the Gram determinant.
pub fn shape_ratio(t: [&[f64]; 3]) -> f64 {
    let e1: Vec<f64> = t[1].iter().zip(t[0]).map(|(a, b)| a - b).collect();
    let e2: Vec<f64> = t[2].iter().zip(t[0]).map(|(a, b)| a - b).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let area2 = (dot(&e1, &e1) * dot(&e2, &e2) - dot(&e1, &e2).powi(2)).max(0.0).sqrt();
    let longest = dot(&e1, &e1).max(dot(&e2, &e2)).max(sq(t[1], t[2]));
    if longest == 0.0 {
        0.0
    } else {
        area2 / longest
    }
}

/// Orthonormal basis of `span(b - a, c - a)` from a QR factorization.
fn plane_basis(t: [&[f64]; 3]) -> DMatrix<f64> {
    let n = t[0].len();
    let m = DMatrix::from_fn(n, 2, |i, j| t[j + 1][i] - t[0][i]);
    m.qr().q()
}

/// A projected triangle as three half-planes `n·x < c` with unit normals.
struct HalfPlanes([(Vector2<f64>, f64); 3]);

impl HalfPlanes {
    fn new(p: [Vector2<f64>; 3]) -> Self {
        let orient = (p[1] - p[0]).perp(&(p[2] - p[0])).signum();
        let hp = |a: Vector2<f64>, b: Vector2<f64>| {
            let d = b - a;
            let n = Vector2::new(d.y, -d.x) * orient;
            let n = n / n.norm();
            (n, n.dot(&a))
        };
        Self([hp(p[0], p[1]), hp(p[1], p[2]), hp(p[2], p[0])])
    }
}

/// Counts raster cell centers strictly inside both triangles after every
/// edge has been pushed outward by `grow` (negative shrinks). Rows are
/// resolved analytically, so this is exact rasterization at `res²`.
fn raster_hits(a: &[Vector2<f64>; 3], b: &[Vector2<f64>; 3], grow: f64, res: usize) -> usize {
    let planes: Vec<(Vector2<f64>, f64)> =
        HalfPlanes::new(*a).0.into_iter().chain(HalfPlanes::new(*b).0).map(|(n, c)| (n, c + grow)).collect();
    let lo = a.iter().chain(b.iter()).fold(Vector2::repeat(f64::INFINITY), |m, p| m.inf(p)) - Vector2::repeat(grow.abs());
    let hi = a.iter().chain(b.iter()).fold(Vector2::repeat(f64::NEG_INFINITY), |m, p| m.sup(p)) + Vector2::repeat(grow.abs());
    let (w, h) = ((hi.x - lo.x) / res as f64, (hi.y - lo.y) / res as f64);
    if w <= 0.0 || h <= 0.0 {
        return 0;
    }
    let mut hits = 0;
    for row in 0..res {
        let y = lo.y + (row as f64 + 0.5) * h;
        let (mut xmin, mut xmax) = (f64::NEG_INFINITY, f64::INFINITY);
        for &(n, c) in &planes {
            // n.x * x < c - n.y * y
            let rhs = c - n.y * y;
            if n.x.abs() < 1e-300 {
                if rhs <= 0.0 {
                    xmax = f64::NEG_INFINITY;
                }
            } else if n.x > 0.0 {
                xmax = xmax.min(rhs / n.x);
            } else {
                xmin = xmin.max(rhs / n.x);
            }
        }
        if xmax <= xmin {
            continue;
        }
        // cell centers lo.x + (k + 0.5) w strictly inside (xmin, xmax)
        let first = ((xmin - lo.x) / w - 0.5).floor() as i64 + 1;
        let last = ((xmax - lo.x) / w - 0.5).ceil() as i64 - 1;
        let (first, last) = (first.max(0), last.min(res as i64 - 1));
        if last >= first {
            hits += (last - first + 1) as usize;
        }
    }
    hits
}

fn project(basis: &DMatrix<f64>, origin: &[f64], t: [&[f64]; 3]) -> [Vector2<f64>; 3] {
    t.map(|p| {
        let d = DVector::from_iterator(p.len(), p.iter().zip(origin).map(|(a, b)| a - b));
        let c = basis.tr_mul(&d);
        Vector2::new(c[0], c[1])
    })
}

/// Which planes the symmetric overlap rule projects onto: a triangle's
/// plane is skipped when it is a sliver thinner than the other triangle.
pub fn planes_used(t1: [&[f64]; 3], t2: [&[f64]; 3]) -> Vec<usize> {
    let (s1, s2) = (shape_ratio(t1), shape_ratio(t2));
    let mut out = Vec::new();
    if s1 > 1e-12 && (s1 >= SLIVER_RATIO || s1 >= s2) {
        out.push(0);
    }
    if s2 > 1e-12 && (s2 >= SLIVER_RATIO || s2 >= s1) {
        out.push(1);
    }
    out
}

/// Rasterized overlap with edges offset by `grow`.
pub fn raster_overlap(t1: [&[f64]; 3], t2: [&[f64]; 3], grow: f64, res: usize) -> bool {
    planes_used(t1, t2).into_iter().any(|k| {
        let r = if k == 0 { t1 } else { t2 };
        let basis = plane_basis(r);
        let (a, b) = (project(&basis, r[0], t1), project(&basis, r[0], t2));
        let degenerate = |p: &[Vector2<f64>; 3]| (p[1] - p[0]).perp(&(p[2] - p[0])).abs() <= 1e-12 * (p[1] - p[0]).norm_squared().max((p[2] - p[0]).norm_squared());
        if degenerate(&a) || degenerate(&b) {
            return false;
        }
        raster_hits(&a, &b, grow, res) > 0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapAgreement {
    Agree,
    /// Disagreement explained by a witness within the boundary band.
    Boundary,
    Disagree,
}

/// Compares a decision against the raster oracle. A disagreement counts as
/// a boundary case when offsetting the edges by `band` flips the oracle.
pub fn judge_overlap(t1: [&[f64]; 3], t2: [&[f64]; 3], decision: bool, res: usize, band: f64) -> OverlapAgreement {
    let oracle = raster_overlap(t1, t2, 0.0, res);
    if oracle == decision {
        return OverlapAgreement::Agree;
    }
    let flipped = if decision { raster_overlap(t1, t2, band, res) } else { !raster_overlap(t1, t2, -band, res) };
    if flipped {
        OverlapAgreement::Boundary
    } else {
        OverlapAgreement::Disagree
    }
}
