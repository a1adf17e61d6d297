//! Exact Euclidean radius and nearest-neighbor queries over a fixed cloud.
//!
//! Classic space partitioning degrades in high ambient dimension, so the
//! tree is built over the coordinates of each point projected onto the
//! cloud's leading principal directions. Orthogonal projection never
//! increases distances, so bounding-box distances in the projected space are
//! valid lower bounds; candidates are always verified with the full
//! `N`-dimensional distance. Small clouds skip the tree and scan linearly.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Clouds smaller than this are searched by linear scan.
pub const LINEAR_SCAN_BELOW: usize = 2000;

const PROJ_DIM: usize = 3;
const LEAF_SIZE: usize = 16;
const POWER_ITERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("point cloud is empty")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// How queries are answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexMode {
    /// Tree for clouds of at least [`LINEAR_SCAN_BELOW`] points.
    #[default]
    Auto,
    Tree,
    Linear,
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// An ordered set of points in `R^N` with a spatial index.
#[derive(Debug, Clone)]
pub struct PointCloud {
    data: Vec<f64>,
    dim: usize,
    tree: Option<ProjectionTree>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, SpatialError> {
        Self::with_mode(points, IndexMode::Auto)
    }

    pub fn with_mode(points: Vec<Vec<f64>>, mode: IndexMode) -> Result<Self, SpatialError> {
        let dim = points.first().ok_or(SpatialError::Empty)?.len();
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(SpatialError::DimensionMismatch { expected: dim, found: p.len() });
            }
            data.extend_from_slice(p);
        }
        Self::from_flat(data, dim, mode)
    }

    /// Builds from row-major coordinates.
    pub fn from_flat(data: Vec<f64>, dim: usize, mode: IndexMode) -> Result<Self, SpatialError> {
        if dim == 0 || data.is_empty() {
            return Err(SpatialError::Empty);
        }
        if data.len() % dim != 0 {
            return Err(SpatialError::DimensionMismatch { expected: dim, found: data.len() % dim });
        }
        let n = data.len() / dim;
        let use_tree = match mode {
            IndexMode::Auto => n >= LINEAR_SCAN_BELOW,
            IndexMode::Tree => true,
            IndexMode::Linear => false,
        };
        let tree = use_tree.then(|| ProjectionTree::build(&data, dim));
        Ok(Self { data, dim, tree })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn has_tree(&self) -> bool {
        self.tree.is_some()
    }

    fn check(&self, q: &[f64]) -> Result<(), SpatialError> {
        if q.len() != self.dim {
            return Err(SpatialError::DimensionMismatch { expected: self.dim, found: q.len() });
        }
        Ok(())
    }

    /// Indices of all points with `|x_i - center| <= radius`, ascending.
    pub fn radius_query(&self, center: &[f64], radius: f64) -> Result<Vec<usize>, SpatialError> {
        self.check(center)?;
        let r2 = radius * radius;
        let mut out = match &self.tree {
            Some(tree) => tree.radius(self, center, radius),
            None => (0..self.len()).filter(|&i| sq_dist(self.point(i), center) <= r2).collect(),
        };
        out.sort_unstable();
        Ok(out)
    }

    /// Nearest point and its distance; ties go to the smallest index.
    pub fn nearest(&self, query: &[f64]) -> Result<(usize, f64), SpatialError> {
        self.check(query)?;
        let (idx, d2) = match &self.tree {
            Some(tree) => tree.nearest(self, query),
            None => {
                let mut best = (usize::MAX, f64::INFINITY);
                for i in 0..self.len() {
                    let d2 = sq_dist(self.point(i), query);
                    if d2 < best.1 {
                        best = (i, d2);
                    }
                }
                best
            }
        };
        Ok((idx, d2.sqrt()))
    }

    /// The `k` nearest points ordered by distance, then index.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>, SpatialError> {
        self.check(query)?;
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let mut offer = |i: usize, d2: f64, best: &mut Vec<(f64, usize)>| {
            if best.len() == k && (d2, i) >= best[k - 1] {
                return;
            }
            let pos = best.partition_point(|&e| e < (d2, i));
            best.insert(pos, (d2, i));
            best.truncate(k);
        };
        if k == 0 {
            return Ok(Vec::new());
        }
        match &self.tree {
            Some(tree) => tree.visit_knn(self, query, k, &mut best, &mut offer),
            None => {
                for i in 0..self.len() {
                    offer(i, sq_dist(self.point(i), query), &mut best);
                }
            }
        }
        Ok(best.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect())
    }

    /// Index `j != center_index` whose distance to `x_center` is closest to
    /// `target`; ties go to the smallest index. Returns `None` for a
    /// single-point cloud.
    pub fn nearest_at_distance(&self, center_index: usize, target: f64) -> Option<usize> {
        let c = self.point(center_index);
        let mut best: Option<(f64, usize)> = None;
        for j in 0..self.len() {
            if j == center_index {
                continue;
            }
            let gap = (sq_dist(self.point(j), c).sqrt() - target).abs();
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, j));
            }
        }
        best.map(|(_, j)| j)
    }

    /// Mean and top principal directions (as rows of a `p × N` matrix).
    pub fn principal_axes(&self, p: usize) -> (Vec<f64>, DMatrix<f64>) {
        principal_axes(&self.data, self.dim, p)
    }
}

fn principal_axes(data: &[f64], dim: usize, p: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = data.len() / dim;
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let p = p.min(dim);
    if dim <= p {
        return (mean, DMatrix::identity(dim, dim));
    }
    // X is n×dim centered; randomized subspace iteration on XᵀX.
    let x = DMatrix::from_fn(n, dim, |i, j| data[i * dim + j] - mean[j]);
    let l = (p + 4).min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let omega = DMatrix::from_fn(dim, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (&x * omega).qr().q();
    let mut basis = DMatrix::zeros(dim, l);
    for _ in 0..POWER_ITERS {
        basis = (x.tr_mul(&q)).qr().q();
        q = (&x * &basis).qr().q();
    }
    // Rotate the captured subspace to principal directions.
    let c = &x * &basis;
    let eig = (c.tr_mul(&c)).symmetric_eigen();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = DMatrix::zeros(p, dim);
    for (r, &k) in order.iter().take(p).enumerate() {
        let dir = &basis * eig.eigenvectors.column(k);
        let norm = dir.norm();
        for j in 0..dim {
            axes[(r, j)] = dir[j] / norm;
        }
    }
    (mean, axes)
}

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; PROJ_DIM],
    hi: [f64; PROJ_DIM],
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct ProjectionTree {
    mean: Vec<f64>,
    axes: DMatrix<f64>,
    p: usize,
    proj: Vec<[f64; PROJ_DIM]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl ProjectionTree {
    fn build(data: &[f64], dim: usize) -> Self {
        let (mean, axes) = principal_axes(data, dim, PROJ_DIM);
        let p = axes.nrows();
        let proj: Vec<[f64; PROJ_DIM]> = data
            .chunks_exact(dim)
            .map(|row| project(&mean, &axes, row))
            .collect();
        let mut tree = Self { mean, axes, p, order: (0..proj.len()).collect(), proj, nodes: Vec::new() };
        tree.split(0, tree.proj.len());
        tree
    }

    fn split(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; PROJ_DIM];
        let mut hi = [f64::NEG_INFINITY; PROJ_DIM];
        for &i in &self.order[start..end] {
            for d in 0..self.p {
                lo[d] = lo[d].min(self.proj[i][d]);
                hi[d] = hi[d].max(self.proj[i][d]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node { lo, hi, start, end, children: None });
        if end - start > LEAF_SIZE {
            let axis = (0..self.p).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
            let mid = start + (end - start) / 2;
            let proj = &self.proj;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                proj[a][axis].total_cmp(&proj[b][axis]).then(a.cmp(&b))
            });
            let left = self.split(start, mid);
            let right = self.split(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn lower_bound2(&self, node: &Node, q: &[f64; PROJ_DIM]) -> f64 {
        (0..self.p)
            .map(|d| {
                let g = (node.lo[d] - q[d]).max(q[d] - node.hi[d]).max(0.0);
                g * g
            })
            .sum()
    }

    // Projected bounds carry rounding error; shrink them slightly so pruning
    // never discards a point that passes the exact test.
    fn prunes(lb2: f64, bound2: f64) -> bool {
        lb2 * (1.0 - 1e-9) > bound2 + 1e-300
    }

    fn radius(&self, cloud: &PointCloud, center: &[f64], radius: f64) -> Vec<usize> {
        let q = project(&self.mean, &self.axes, center);
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if Self::prunes(self.lower_bound2(node, &q), r2) {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => out.extend(
                    self.order[node.start..node.end]
                        .iter()
                        .copied()
                        .filter(|&i| sq_dist(cloud.point(i), center) <= r2),
                ),
            }
        }
        out
    }

    fn nearest(&self, cloud: &PointCloud, query: &[f64]) -> (usize, f64) {
        let q = project(&self.mean, &self.axes, query);
        let mut best = (f64::INFINITY, usize::MAX);
        self.descend(0, cloud, query, &q, &mut |i, d2| {
            if (d2, i) < best {
                best = (d2, i);
            }
            best.0
        });
        (best.1, best.0)
    }

    fn visit_knn<F>(&self, cloud: &PointCloud, query: &[f64], k: usize, best: &mut Vec<(f64, usize)>, offer: &mut F)
    where
        F: FnMut(usize, f64, &mut Vec<(f64, usize)>),
    {
        let q = project(&self.mean, &self.axes, query);
        self.descend(0, cloud, query, &q, &mut |i, d2| {
            offer(i, d2, best);
            if best.len() == k {
                best[k - 1].0
            } else {
                f64::INFINITY
            }
        });
    }

    /// Depth-first search, nearer child first. `visit` receives each
    /// candidate and returns the current pruning bound (squared).
    fn descend<F>(&self, id: usize, cloud: &PointCloud, query: &[f64], q: &[f64; PROJ_DIM], visit: &mut F) -> f64
    where
        F: FnMut(usize, f64) -> f64,
    {
        let node = &self.nodes[id];
        let mut bound = f64::INFINITY;
        match node.children {
            None => {
                for &i in &self.order[node.start..node.end] {
                    bound = visit(i, sq_dist(cloud.point(i), query));
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (self.lower_bound2(&self.nodes[l], q), self.lower_bound2(&self.nodes[r], q));
                let (first, second, d_second) = if dl <= dr { (l, r, dr) } else { (r, l, dl) };
                bound = self.descend(first, cloud, query, q, visit);
                if !Self::prunes(d_second, bound) {
                    bound = self.descend(second, cloud, query, q, visit);
                }
            }
        }
        bound
    }
}

fn project(mean: &[f64], axes: &DMatrix<f64>, x: &[f64]) -> [f64; PROJ_DIM] {
    let mut out = [0.0; PROJ_DIM];
    for (r, o) in out.iter_mut().enumerate().take(axes.nrows()) {
        *o = (0..x.len()).map(|j| axes[(r, j)] * (x[j] - mean[j])).sum();
    }
    out
}
