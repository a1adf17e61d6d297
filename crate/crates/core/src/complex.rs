//! The evolving triangulation: vertices, edges, triangles, the set of front
//! edges and the FILO stack of edges waiting to be advanced.
//!
//! Vertex ids are dense and assigned in insertion order. Every ordered
//! collection iterates in ascending key order so runs are reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::EmbeddedTriangle;

pub type VertexId = u32;
pub type TriangleId = u32;

/// Unordered vertex pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey(VertexId, VertexId);

impl EdgeKey {
    pub fn new(a: VertexId, b: VertexId) -> Self {
        assert_ne!(a, b, "edge endpoints must differ");
        if a < b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn a(self) -> VertexId {
        self.0
    }

    pub fn b(self) -> VertexId {
        self.1
    }

    pub fn contains(self, v: VertexId) -> bool {
        self.0 == v || self.1 == v
    }

    /// The endpoint that is not `v`.
    pub fn other(self, v: VertexId) -> VertexId {
        if self.0 == v {
            self.1
        } else {
            self.0
        }
    }

    /// The vertex shared with `e`, if exactly one is shared.
    pub fn shared_vertex(self, e: EdgeKey) -> Option<VertexId> {
        if self == e {
            return None;
        }
        [self.0, self.1].into_iter().find(|&v| e.contains(v))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComplexError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("triangle has repeated vertices")]
    RepeatedVertex,
    #[error("triangle {0:?} already present")]
    DuplicateTriangle([VertexId; 3]),
    #[error("edge {0:?} would be owned by more than two triangles")]
    EdgeOverownership(EdgeKey),
    #[error("data point {0} already backs a vertex")]
    DuplicateSource(usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub coords: Vec<f64>,
    /// Index of the data point this vertex coincides with.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct EdgeData {
    owners: Vec<TriangleId>,
    viable: bool,
}

/// `(V, E, F, front edges, V - E + F)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyCounts {
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    pub front_edges: usize,
    pub euler: i64,
}

impl TopologyCounts {
    pub fn is_watertight(&self) -> bool {
        self.front_edges == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Complex {
    vertices: Vec<Vertex>,
    by_source: HashMap<usize, VertexId>,
    neighbors: Vec<BTreeSet<VertexId>>,
    edges: BTreeMap<EdgeKey, EdgeData>,
    triangles: Vec<[VertexId; 3]>,
    triangle_set: HashSet<[VertexId; 3]>,
    geometry: Vec<EmbeddedTriangle>,
    front: BTreeSet<EdgeKey>,
    stack: Vec<EdgeKey>,
}

impl Complex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, coords: Vec<f64>, source: usize) -> Result<VertexId, ComplexError> {
        if self.by_source.contains_key(&source) {
            return Err(ComplexError::DuplicateSource(source));
        }
        let id = self.vertices.len() as VertexId;
        self.vertices.push(Vertex { coords, source });
        self.by_source.insert(source, id);
        self.neighbors.push(BTreeSet::new());
        Ok(id)
    }

    pub fn vertex_for_source(&self, source: usize) -> Option<VertexId> {
        self.by_source.get(&source).copied()
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id as usize]
    }

    pub fn coords(&self, id: VertexId) -> &[f64] {
        &self.vertices[id as usize].coords
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangles(&self) -> &[[VertexId; 3]] {
        &self.triangles
    }

    /// Cached embedded geometry, parallel to [`Complex::triangles`].
    pub fn triangle_geometry(&self) -> &[EmbeddedTriangle] {
        &self.geometry
    }

    pub fn contains_triangle(&self, a: VertexId, b: VertexId, c: VertexId) -> bool {
        self.triangle_set.contains(&sorted3(a, b, c))
    }

    pub fn has_edge(&self, e: EdgeKey) -> bool {
        self.edges.contains_key(&e)
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.edges.keys().copied()
    }

    pub fn owner_count(&self, e: EdgeKey) -> usize {
        self.edges.get(&e).map_or(0, |d| d.owners.len())
    }

    pub fn owners(&self, e: EdgeKey) -> &[TriangleId] {
        self.edges.get(&e).map_or(&[], |d| d.owners.as_slice())
    }

    pub fn is_front(&self, e: EdgeKey) -> bool {
        self.front.contains(&e)
    }

    /// Front edges in ascending key order.
    pub fn front_edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.front.iter().copied()
    }

    /// Vertices joined to `v` by an edge, ascending.
    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.neighbors[v as usize].iter().copied()
    }

    pub fn is_front_vertex(&self, v: VertexId) -> bool {
        self.neighbors(v).any(|w| self.is_front(EdgeKey::new(v, w)))
    }

    /// Third vertex of the single triangle owning a front edge.
    pub fn opposite_vertex(&self, e: EdgeKey) -> Option<VertexId> {
        let d = self.edges.get(&e)?;
        if d.owners.len() != 1 {
            return None;
        }
        let t = self.triangles[d.owners[0] as usize];
        t.into_iter().find(|&v| !e.contains(v))
    }

    pub fn is_viable(&self, e: EdgeKey) -> bool {
        self.edges.get(&e).is_some_and(|d| d.viable)
    }

    pub fn mark_unviable(&mut self, e: EdgeKey) {
        if let Some(d) = self.edges.get_mut(&e) {
            d.viable = false;
        }
    }

    /// Marks every edge viable again; used at stage transitions.
    pub fn reset_viability(&mut self) {
        self.edges.values_mut().for_each(|d| d.viable = true);
    }

    /// Adds a triangle, inserting missing edges. Returns the newly created
    /// edges in ascending key order; the caller decides whether to push them.
    pub fn add_triangle(&mut self, a: VertexId, b: VertexId, c: VertexId) -> Result<Vec<EdgeKey>, ComplexError> {
        for v in [a, b, c] {
            if v as usize >= self.vertices.len() {
                return Err(ComplexError::UnknownVertex(v));
            }
        }
        if a == b || b == c || a == c {
            return Err(ComplexError::RepeatedVertex);
        }
        let key = sorted3(a, b, c);
        if self.triangle_set.contains(&key) {
            return Err(ComplexError::DuplicateTriangle(key));
        }
        let tri_edges = [EdgeKey::new(key[0], key[1]), EdgeKey::new(key[0], key[2]), EdgeKey::new(key[1], key[2])];
        if let Some(&e) = tri_edges.iter().find(|e| self.owner_count(**e) >= 2) {
            return Err(ComplexError::EdgeOverownership(e));
        }
        let tid = self.triangles.len() as TriangleId;
        self.triangles.push(key);
        self.triangle_set.insert(key);
        self.geometry
            .push(EmbeddedTriangle::new(self.coords(key[0]), self.coords(key[1]), self.coords(key[2])));
        let mut created = Vec::new();
        for e in tri_edges {
            let data = self.edges.entry(e).or_insert_with(|| {
                created.push(e);
                EdgeData { owners: Vec::with_capacity(2), viable: true }
            });
            data.owners.push(tid);
            if data.owners.len() == 1 {
                self.front.insert(e);
            } else {
                self.front.remove(&e);
            }
            self.neighbors[e.a() as usize].insert(e.b());
            self.neighbors[e.b() as usize].insert(e.a());
        }
        created.sort();
        Ok(created)
    }

    pub fn push_edge(&mut self, e: EdgeKey) {
        self.stack.push(e);
    }

    pub fn stack_len(&self) -> usize {
        self.stack.len()
    }

    /// Pops until the top of the stack is a viable front edge.
    pub fn pop_active_front_edge(&mut self) -> Option<EdgeKey> {
        while let Some(e) = self.stack.pop() {
            if self.is_front(e) && self.is_viable(e) {
                return Some(e);
            }
        }
        None
    }

    pub fn clear_stack(&mut self) {
        self.stack.clear();
    }

    pub fn topology_counts(&self) -> TopologyCounts {
        let (v, e, f) = (self.vertices.len(), self.edges.len(), self.triangles.len());
        TopologyCounts {
            vertices: v,
            edges: e,
            triangles: f,
            front_edges: self.front.len(),
            euler: v as i64 - e as i64 + f as i64,
        }
    }

    /// Front edges sharing exactly one vertex with `e`, each paired with the
    /// angle between the two edge vectors leaving the shared vertex.
    pub fn adjacent_front_edges(&self, e: EdgeKey) -> Vec<(EdgeKey, f64)> {
        let mut out = Vec::new();
        for shared in [e.a(), e.b()] {
            let far = e.other(shared);
            for w in self.neighbors(shared) {
                if w == far {
                    continue;
                }
                let adj = EdgeKey::new(shared, w);
                if self.is_front(adj) {
                    out.push((adj, self.angle_at(shared, far, w)));
                }
            }
        }
        out.sort_by(|x, y| x.0.cmp(&y.0));
        out
    }

    /// Angle at `apex` between the segments to `p` and `q`.
    pub fn angle_at(&self, apex: VertexId, p: VertexId, q: VertexId) -> f64 {
        let (s, a, b) = (self.coords(apex), self.coords(p), self.coords(q));
        let (mut dab, mut daa, mut dbb) = (0.0, 0.0, 0.0);
        for i in 0..s.len() {
            let (u, v) = (a[i] - s[i], b[i] - s[i]);
            dab += u * v;
            daa += u * u;
            dbb += v * v;
        }
        (dab / (daa * dbb).sqrt()).clamp(-1.0, 1.0).acos()
    }

    /// Full structural check: ownership counts, edge presence, front set
    /// consistency and absence of isolated vertices.
    pub fn validate(&self) -> Result<(), ComplexError> {
        let mut counted: BTreeMap<EdgeKey, usize> = BTreeMap::new();
        for t in &self.triangles {
            for e in [EdgeKey::new(t[0], t[1]), EdgeKey::new(t[0], t[2]), EdgeKey::new(t[1], t[2])] {
                if !self.edges.contains_key(&e) {
                    return Err(ComplexError::Invariant(format!("triangle {t:?} missing edge {e:?}")));
                }
                *counted.entry(e).or_default() += 1;
            }
        }
        for (e, d) in &self.edges {
            let n = counted.get(e).copied().unwrap_or(0);
            if n == 0 {
                return Err(ComplexError::Invariant(format!("isolated edge {e:?}")));
            }
            if n > 2 || n != d.owners.len() {
                return Err(ComplexError::Invariant(format!("edge {e:?} owned {n} times")));
            }
        }
        let recomputed: BTreeSet<EdgeKey> = counted.iter().filter(|(_, &n)| n == 1).map(|(e, _)| *e).collect();
        if recomputed != self.front {
            return Err(ComplexError::Invariant("front set out of sync".into()));
        }
        if !self.triangles.is_empty() {
            if let Some(v) = (0..self.vertices.len()).find(|&v| self.neighbors[v].is_empty()) {
                return Err(ComplexError::Invariant(format!("isolated vertex {v}")));
            }
        }
        Ok(())
    }
}

fn sorted3(a: VertexId, b: VertexId, c: VertexId) -> [VertexId; 3] {
    let mut t = [a, b, c];
    t.sort_unstable();
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn complex_with(points: &[[f64; 3]]) -> Complex {
        let mut c = Complex::new();
        for (i, p) in points.iter().enumerate() {
            c.add_vertex(p.to_vec(), i).unwrap();
        }
        c
    }

    #[test]
    fn first_and_second_triangle() {
        let mut c = complex_with(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        let created = c.add_triangle(0, 1, 2).unwrap();
        assert_eq!(created, vec![EdgeKey::new(0, 1), EdgeKey::new(0, 2), EdgeKey::new(1, 2)]);
        assert_eq!(c.front_edges().count(), 3);
        let created = c.add_triangle(1, 3, 2).unwrap();
        assert_eq!(created, vec![EdgeKey::new(1, 3), EdgeKey::new(2, 3)]);
        assert!(!c.is_front(EdgeKey::new(1, 2)));
        assert_eq!(c.owner_count(EdgeKey::new(1, 2)), 2);
        let counts = c.topology_counts();
        assert_eq!((counts.vertices, counts.edges, counts.triangles, counts.front_edges, counts.euler), (4, 5, 2, 4, 1));
        c.validate().unwrap();
    }

    #[test]
    fn third_owner_rejected() {
        let mut c = complex_with(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]);
        c.add_triangle(0, 1, 2).unwrap();
        c.add_triangle(0, 1, 3).unwrap();
        assert_eq!(c.add_triangle(0, 1, 4).unwrap_err(), ComplexError::EdgeOverownership(EdgeKey::new(0, 1)));
        assert!(matches!(c.add_triangle(2, 1, 0), Err(ComplexError::DuplicateTriangle(_))));
        assert_eq!(c.add_triangle(0, 0, 1).unwrap_err(), ComplexError::RepeatedVertex);
        assert_eq!(c.add_triangle(0, 1, 9).unwrap_err(), ComplexError::UnknownVertex(9));
        c.add_triangle(1, 2, 4).unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn closed_tetrahedron() {
        let mut c = complex_with(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        for t in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
            c.add_triangle(t[0], t[1], t[2]).unwrap();
        }
        let counts = c.topology_counts();
        assert_eq!((counts.vertices, counts.edges, counts.triangles, counts.front_edges, counts.euler), (4, 6, 4, 0, 2));
        assert_eq!(3 * counts.triangles, 2 * counts.edges);
        c.validate().unwrap();
    }

    #[test]
    fn stack_pops_front_edges_only() {
        let mut c = complex_with(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        c.add_triangle(0, 1, 2).unwrap();
        c.add_triangle(1, 2, 3).unwrap();
        c.push_edge(EdgeKey::new(0, 1));
        assert_eq!(c.pop_active_front_edge(), Some(EdgeKey::new(0, 1)));
        c.push_edge(EdgeKey::new(0, 2));
        c.push_edge(EdgeKey::new(1, 2)); // covered
        assert_eq!(c.pop_active_front_edge(), Some(EdgeKey::new(0, 2)));
        c.push_edge(EdgeKey::new(1, 2));
        assert_eq!(c.pop_active_front_edge(), None);
        c.push_edge(EdgeKey::new(1, 3));
        c.mark_unviable(EdgeKey::new(1, 3));
        assert_eq!(c.pop_active_front_edge(), None);
        c.reset_viability();
        assert!(c.is_viable(EdgeKey::new(1, 3)));
    }

    #[test]
    fn adjacent_front_angles() {
        // 0-1 along x, 0-2 along y: right angle at vertex 0
        let mut c = complex_with(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0], [1.0, -1.0, 0.0]]);
        c.add_triangle(0, 1, 2).unwrap();
        let adj = c.adjacent_front_edges(EdgeKey::new(0, 1));
        let right = adj.iter().find(|(e, _)| *e == EdgeKey::new(0, 2)).unwrap();
        assert_abs_diff_eq!(right.1, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        // collinear continuation 0-1-3
        c.add_triangle(1, 3, 4).unwrap();
        let adj = c.adjacent_front_edges(EdgeKey::new(0, 1));
        let straight = adj.iter().find(|(e, _)| *e == EdgeKey::new(1, 3)).unwrap();
        assert_abs_diff_eq!(straight.1, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn no_front_neighbors() {
        let mut c = complex_with(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        for t in [[0, 1, 2], [0, 1, 3], [0, 2, 3]] {
            c.add_triangle(t[0], t[1], t[2]).unwrap();
        }
        // front edges are 1-2, 1-3, 2-3; pick a new isolated-ish check
        assert!(c.adjacent_front_edges(EdgeKey::new(0, 1)).iter().all(|(e, _)| c.is_front(*e)));
        let mut d = complex_with(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        for t in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
            d.add_triangle(t[0], t[1], t[2]).unwrap();
        }
        d.push_edge(EdgeKey::new(0, 1));
        assert_eq!(d.pop_active_front_edge(), None);
        assert!(d.adjacent_front_edges(EdgeKey::new(0, 1)).is_empty());
    }
}
