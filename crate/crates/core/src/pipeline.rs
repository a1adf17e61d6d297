//! The two triangulation stages and optional hole filling.
//!
//! The advancing front grows the complex one triangle at a time from a
//! two-triangle seed. Each popped front edge gets a new vertex from the
//! metric-aware placement solve, which is then snapped to the data. Seam
//! sewing afterwards closes the gaps left where fronts met, choosing among
//! existing vertices only.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{Complex, ComplexError, EdgeKey, TopologyCounts, VertexId};
use crate::conflict::{conflicts_with_any, EmbeddedTriangle};
use crate::exec::Exec;
use crate::metric::{local_metric, LocalMetric, MetricError, DEFAULT_DROP_TOL, DEFAULT_MU};
use crate::placement::{
    candidate_vertices, constraint_radius, solve_placement, solve_placement_pair, Candidate, PlacementError,
    PlacementProblem,
};
use crate::spatial::{sq_dist, PointCloud};

const SEED_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TriangulationConfig {
    pub char_length: f64,
    pub mu: f64,
    pub drop_tol: f64,
    pub conflict_delta: f64,
    pub accept_tol: f64,
    pub merge_tol: f64,
    pub max_sew_length: f64,
    pub seed: u64,
    pub start_index: Option<usize>,
    pub skip_sewing: bool,
    pub fill_holes: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl TriangulationConfig {
    /// Defaults derived from the characteristic length.
    pub fn new(char_length: f64) -> Self {
        Self {
            char_length,
            mu: DEFAULT_MU,
            drop_tol: DEFAULT_DROP_TOL,
            conflict_delta: 0.25 * char_length,
            accept_tol: 0.5 * char_length,
            merge_tol: 0.5 * char_length,
            max_sew_length: 1.5 * char_length,
            seed: 0,
            start_index: None,
            skip_sewing: false,
            fill_holes: false,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fields = [
            ("char_length", self.char_length),
            ("mu", self.mu),
            ("conflict_delta", self.conflict_delta),
            ("accept_tol", self.accept_tol),
            ("merge_tol", self.merge_tol),
            ("max_sew_length", self.max_sew_length),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PipelineError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.drop_tol >= 0.0 && self.drop_tol < 1.0) {
            return Err(PipelineError::InvalidConfig(format!("drop_tol must be in [0, 1), got {}", self.drop_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least 4 data points, got {0}")]
    TooFewPoints(usize),
    #[error("start index {index} out of range for {len} points")]
    StartIndexOutOfRange { index: usize, len: usize },
    #[error("could not build the initial complex after {0} attempts")]
    SeedFailure(usize),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// Per-edge failures, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionCounts {
    pub conflict: usize,
    pub minimizer_too_far: usize,
    pub empty_neighborhood: usize,
    pub empty_constraint_set: usize,
    pub no_convergence: usize,
    /// Every candidate would duplicate a triangle or overown an edge.
    pub invalid_candidate: usize,
    /// Sewing found no vertex within the maximum edge length.
    pub no_candidate: usize,
}

impl RejectionCounts {
    pub fn total(&self) -> usize {
        self.conflict
            + self.minimizer_too_far
            + self.empty_neighborhood
            + self.empty_constraint_set
            + self.no_convergence
            + self.invalid_candidate
            + self.no_candidate
    }

    fn add(&mut self, o: &RejectionCounts) {
        self.conflict += o.conflict;
        self.minimizer_too_far += o.minimizer_too_far;
        self.empty_neighborhood += o.empty_neighborhood;
        self.empty_constraint_set += o.empty_constraint_set;
        self.no_convergence += o.no_convergence;
        self.invalid_candidate += o.invalid_candidate;
        self.no_candidate += o.no_candidate;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub seconds: f64,
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: RejectionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    pub topology: TopologyCounts,
}

impl RunReport {
    pub fn accepted(&self) -> usize {
        self.stages.iter().map(|s| s.accepted).sum()
    }

    pub fn iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }

    pub fn rejected(&self) -> RejectionCounts {
        let mut r = RejectionCounts::default();
        self.stages.iter().for_each(|s| r.add(&s.rejected));
        r
    }

    /// Appends the stages of `later` and takes its topology.
    pub fn extend(&mut self, later: RunReport) {
        self.stages.extend(later.stages);
        self.topology = later.topology;
    }
}

/// Metric last used at each vertex, retained for seam sewing.
pub type MetricCache = HashMap<VertexId, LocalMetric>;

fn metric_around(
    cloud: &PointCloud,
    point: &[f64],
    radius: f64,
    config: &TriangulationConfig,
) -> Result<LocalMetric, MetricError> {
    let idx = cloud
        .radius_query(point, radius)
        .map_err(|_| MetricError::DimensionMismatch { expected: cloud.dim(), found: point.len() })?;
    local_metric(point, idx.iter().map(|&i| cloud.point(i)), config.mu, config.drop_tol)
}

fn edge_metrics(
    cloud: &PointCloud,
    p1: &[f64],
    p2: &[f64],
    config: &TriangulationConfig,
) -> Result<(LocalMetric, LocalMetric), MetricError> {
    let radius = sq_dist(p1, p2).sqrt();
    let (m1, m2) = config.exec.join(
        || metric_around(cloud, p1, radius, config),
        || metric_around(cloud, p2, radius, config),
    );
    Ok((m1?, m2?))
}

fn check_invariants(complex: &Complex) {
    if cfg!(debug_assertions) {
        if let Err(e) = complex.validate() {
            panic!("complex invariant broken: {e}");
        }
    }
}

/// Builds the initial two-triangle complex. Returns it with the metrics of
/// the two edge vertices.
pub fn seed_complex(cloud: &PointCloud, config: &TriangulationConfig) -> Result<(Complex, MetricCache), PipelineError> {
    config.validate()?;
    let n = cloud.len();
    if n < 4 {
        return Err(PipelineError::TooFewPoints(n));
    }
    if let Some(index) = config.start_index {
        if index >= n {
            return Err(PipelineError::StartIndexOutOfRange { index, len: n });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for attempt in 0..SEED_ATTEMPTS {
        let i1 = match config.start_index {
            Some(i) if attempt == 0 => i,
            _ => rng.random_range(0..n),
        };
        if let Some(seeded) = try_seed(cloud, config, i1) {
            return Ok(seeded);
        }
        log::debug!("seed attempt {attempt} from point {i1} failed");
    }
    Err(PipelineError::SeedFailure(SEED_ATTEMPTS))
}

fn try_seed(cloud: &PointCloud, config: &TriangulationConfig, i1: usize) -> Option<(Complex, MetricCache)> {
    let i2 = cloud.nearest_at_distance(i1, config.char_length)?;
    let (p1, p2) = (cloud.point(i1), cloud.point(i2));
    let (q1, q2) = edge_metrics(cloud, p1, p2, config).ok()?;
    let rc = constraint_radius(sq_dist(p1, p2).sqrt(), config.char_length);
    let problem = PlacementProblem { v1: p1, v2: p2, q1: &q1, q2: &q2, v0: None, rc };
    let (a, b) = solve_placement_pair(&problem).ok()?;
    let (i3, d3) = cloud.nearest(&a.minimizer).ok()?;
    let (i4, d4) = cloud.nearest(&b.minimizer).ok()?;
    let distinct = BTreeSet::from([i1, i2, i3, i4]).len() == 4;
    if !distinct || d3 > config.accept_tol || d4 > config.accept_tol {
        return None;
    }
    let t3 = EmbeddedTriangle::new(p1, p2, cloud.point(i3));
    let t4 = EmbeddedTriangle::new(p1, p2, cloud.point(i4));
    if t3.is_degenerate() || t4.is_degenerate() {
        return None;
    }
    let mut complex = Complex::new();
    let ids: Vec<VertexId> =
        [i1, i2, i3, i4].iter().map(|&i| complex.add_vertex(cloud.point(i).to_vec(), i)).collect::<Result<_, _>>().ok()?;
    complex.add_triangle(ids[0], ids[1], ids[2]).ok()?;
    complex.add_triangle(ids[0], ids[1], ids[3]).ok()?;
    let mut edges: Vec<EdgeKey> = complex.edges().collect();
    edges.sort();
    edges.into_iter().for_each(|e| complex.push_edge(e));
    let cache = MetricCache::from([(ids[0], q1), (ids[1], q2)]);
    Some((complex, cache))
}

enum Outcome {
    Accepted,
    Rejected(fn(&mut RejectionCounts)),
}

fn reject_for(err: &PlacementError) -> fn(&mut RejectionCounts) {
    match err {
        PlacementError::MinimizerTooFar { .. } => |r| r.minimizer_too_far += 1,
        PlacementError::NoConvergence(_) => |r| r.no_convergence += 1,
        PlacementError::Metric(MetricError::EmptyNeighborhood) => |r| r.empty_neighborhood += 1,
        _ => |r| r.empty_constraint_set += 1,
    }
}

/// Structural admissibility of triangle `(e, c)`: no repeated vertex, no
/// duplicate and no edge gaining a third owner.
fn admissible(complex: &Complex, e: EdgeKey, c: VertexId) -> bool {
    !e.contains(c)
        && !complex.contains_triangle(e.a(), e.b(), c)
        && complex.owner_count(e) < 2
        && [EdgeKey::new(e.a(), c), EdgeKey::new(e.b(), c)].iter().all(|&k| complex.owner_count(k) < 2)
}

/// Tries each candidate third vertex in order and adds the first triangle
/// that is admissible and, when `delta` is set, conflict free.
fn accept_first<I>(complex: &mut Complex, e: EdgeKey, candidates: I, delta: Option<f64>, exec: Exec) -> Outcome
where
    I: IntoIterator<Item = (Option<VertexId>, usize, Vec<f64>)>,
{
    let mut saw_conflict = false;
    for (existing, source, coords) in candidates {
        if let Some(c) = existing {
            if !admissible(complex, e, c) {
                continue;
            }
        } else if complex.vertex_for_source(source).is_some() {
            continue;
        }
        let tri = EmbeddedTriangle::new(complex.coords(e.a()), complex.coords(e.b()), &coords);
        if tri.is_degenerate() {
            continue;
        }
        if let Some(delta) = delta {
            if conflicts_with_any(&tri, complex.triangle_geometry(), delta, exec).unwrap_or(true) {
                saw_conflict = true;
                continue;
            }
        }
        let c = match existing {
            Some(c) => c,
            None => match complex.add_vertex(coords, source) {
                Ok(c) => c,
                Err(_) => continue,
            },
        };
        match complex.add_triangle(e.a(), e.b(), c) {
            Ok(created) => {
                created.into_iter().for_each(|k| complex.push_edge(k));
                return Outcome::Accepted;
            }
            Err(err) => panic!("admissible triangle rejected: {err}"),
        }
    }
    if saw_conflict {
        Outcome::Rejected(|r| r.conflict += 1)
    } else {
        Outcome::Rejected(|r| r.invalid_candidate += 1)
    }
}

fn advance_edge(
    cloud: &PointCloud,
    complex: &mut Complex,
    cache: &mut MetricCache,
    config: &TriangulationConfig,
    e: EdgeKey,
) -> Outcome {
    let (v1, v2) = (e.a(), e.b());
    let (p1, p2) = (complex.coords(v1).to_vec(), complex.coords(v2).to_vec());
    let (q1, q2) = match edge_metrics(cloud, &p1, &p2, config) {
        Ok(m) => m,
        Err(err) => return Outcome::Rejected(reject_for(&PlacementError::Metric(err))),
    };
    let v0 = complex.opposite_vertex(e).map(|v| complex.coords(v).to_vec());
    let rc = constraint_radius(sq_dist(&p1, &p2).sqrt(), config.char_length);
    let problem = PlacementProblem { v1: &p1, v2: &p2, q1: &q1, q2: &q2, v0: v0.as_deref(), rc };
    let solved = solve_placement(&problem)
        .and_then(|s| candidate_vertices(&s, cloud, complex, e, config.accept_tol, config.merge_tol));
    cache.insert(v1, q1);
    cache.insert(v2, q2);
    let candidates = match solved {
        Ok(c) => c,
        Err(err) => return Outcome::Rejected(reject_for(&err)),
    };
    let resolved: Vec<(Option<VertexId>, usize, Vec<f64>)> = candidates
        .into_iter()
        .map(|c| match c {
            Candidate::Existing(v) => (Some(v), complex.vertex(v).source, complex.coords(v).to_vec()),
            Candidate::NewPoint(i) => (None, i, cloud.point(i).to_vec()),
        })
        .collect();
    accept_first(complex, e, resolved, Some(config.conflict_delta), config.exec)
}

fn finish(stage: &str, start: Instant, iterations: usize, accepted: usize, rejected: RejectionCounts, complex: &Complex) -> RunReport {
    RunReport {
        stages: vec![StageReport {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            iterations,
            accepted,
            rejected,
        }],
        topology: complex.topology_counts(),
    }
}

/// Grows the complex until every front edge is unviable.
pub fn advancing_front(
    cloud: &PointCloud,
    complex: &mut Complex,
    cache: &mut MetricCache,
    config: &TriangulationConfig,
) -> RunReport {
    let start = Instant::now();
    let (mut iterations, mut accepted) = (0, 0);
    let mut rejected = RejectionCounts::default();
    loop {
        let e = match complex.pop_active_front_edge() {
            Some(e) => e,
            None => {
                // any viable front edge that is not on the stack gets a turn
                let pending: Vec<EdgeKey> = complex.front_edges().filter(|&e| complex.is_viable(e)).collect();
                if pending.is_empty() {
                    break;
                }
                pending.into_iter().for_each(|e| complex.push_edge(e));
                continue;
            }
        };
        iterations += 1;
        match advance_edge(cloud, complex, cache, config, e) {
            Outcome::Accepted => accepted += 1,
            Outcome::Rejected(count) => {
                count(&mut rejected);
                complex.mark_unviable(e);
            }
        }
        check_invariants(complex);
    }
    log::info!("advancing front: {accepted} triangles in {iterations} iterations");
    finish("advancing_front", start, iterations, accepted, rejected, complex)
}

fn cached_metric(
    cloud: &PointCloud,
    complex: &Complex,
    cache: &mut MetricCache,
    config: &TriangulationConfig,
    v: VertexId,
) -> Result<LocalMetric, MetricError> {
    if let Some(m) = cache.get(&v) {
        return Ok(m.clone());
    }
    let m = metric_around(cloud, complex.coords(v), config.char_length, config)?;
    cache.insert(v, m.clone());
    Ok(m)
}

/// The adjacent front-edge pair with the smallest angle where at least one
/// edge is viable; returns the edge to start a sewing sequence from.
fn sequence_seed(complex: &Complex) -> Option<EdgeKey> {
    let mut best: Option<(f64, EdgeKey, EdgeKey)> = None;
    for e in complex.front_edges() {
        for (adj, angle) in complex.adjacent_front_edges(e) {
            if e > adj || !(complex.is_viable(e) || complex.is_viable(adj)) {
                continue;
            }
            if best.is_none_or(|(a, x, y)| (angle, e, adj) < (a, x, y)) {
                best = Some((angle, e, adj));
            }
        }
    }
    let (_, e, adj) = best?;
    // e < adj by construction
    Some(if complex.is_viable(e) { e } else { adj })
}

fn sew_edge(
    cloud: &PointCloud,
    complex: &mut Complex,
    cache: &mut MetricCache,
    config: &TriangulationConfig,
    e: EdgeKey,
    check_conflicts: bool,
) -> Outcome {
    let (v1, v2) = (e.a(), e.b());
    let metrics = cached_metric(cloud, complex, cache, config, v1)
        .and_then(|q1| Ok((q1, cached_metric(cloud, complex, cache, config, v2)?)));
    let (q1, q2) = match metrics {
        Ok(m) => m,
        Err(err) => return Outcome::Rejected(reject_for(&PlacementError::Metric(err))),
    };
    let (p1, p2) = (complex.coords(v1), complex.coords(v2));
    let max2 = config.max_sew_length * config.max_sew_length;
    let front_vertices: BTreeSet<VertexId> = complex.front_edges().flat_map(|k| [k.a(), k.b()]).collect();
    let mut scored: Vec<(f64, VertexId)> = front_vertices
        .into_iter()
        .filter(|&w| !e.contains(w))
        .filter(|&w| {
            let pw = complex.coords(w);
            sq_dist(pw, p1) <= max2 && sq_dist(pw, p2) <= max2
        })
        .filter(|&w| check_conflicts || complex.is_front(EdgeKey::new(v1, w)) || complex.is_front(EdgeKey::new(v2, w)))
        .filter_map(|w| {
            let pw = complex.coords(w);
            let score = q1.q_form_displaced(p1, pw).ok()? + q2.q_form_displaced(p2, pw).ok()?;
            Some((score, w))
        })
        .collect();
    if scored.is_empty() {
        return Outcome::Rejected(|r| r.no_candidate += 1);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let candidates: Vec<_> =
        scored.into_iter().map(|(_, w)| (Some(w), complex.vertex(w).source, complex.coords(w).to_vec())).collect();
    let delta = check_conflicts.then_some(config.conflict_delta);
    accept_first(complex, e, candidates, delta, config.exec)
}

fn sewing_stage(
    name: &str,
    cloud: &PointCloud,
    complex: &mut Complex,
    cache: &mut MetricCache,
    config: &TriangulationConfig,
    check_conflicts: bool,
) -> RunReport {
    let start = Instant::now();
    let (mut iterations, mut accepted) = (0, 0);
    let mut rejected = RejectionCounts::default();
    complex.reset_viability();
    complex.clear_stack();
    while let Some(seed) = sequence_seed(complex) {
        complex.push_edge(seed);
        while let Some(e) = complex.pop_active_front_edge() {
            iterations += 1;
            match sew_edge(cloud, complex, cache, config, e, check_conflicts) {
                Outcome::Accepted => accepted += 1,
                Outcome::Rejected(count) => {
                    count(&mut rejected);
                    complex.mark_unviable(e);
                }
            }
            check_invariants(complex);
        }
    }
    // isolated front edges without a neighbor on the front never seed a sequence
    let leftover: Vec<EdgeKey> = complex.front_edges().filter(|&e| complex.is_viable(e)).collect();
    for e in leftover {
        if !complex.is_front(e) || !complex.is_viable(e) {
            continue;
        }
        iterations += 1;
        match sew_edge(cloud, complex, cache, config, e, check_conflicts) {
            Outcome::Accepted => accepted += 1,
            Outcome::Rejected(count) => {
                count(&mut rejected);
                complex.mark_unviable(e);
            }
        }
    }
    log::info!("{name}: {accepted} triangles in {iterations} iterations");
    finish(name, start, iterations, accepted, rejected, complex)
}

/// Closes seams between fronts using existing vertices only.
pub fn seam_sewing(
    cloud: &PointCloud,
    complex: &mut Complex,
    cache: &mut MetricCache,
    config: &TriangulationConfig,
) -> RunReport {
    sewing_stage("seam_sewing", cloud, complex, cache, config, true)
}

/// Sewing without the conflict test, restricted to candidates that share a
/// front edge with the active edge.
pub fn fill_holes(
    cloud: &PointCloud,
    complex: &mut Complex,
    cache: &mut MetricCache,
    config: &TriangulationConfig,
) -> RunReport {
    sewing_stage("fill_holes", cloud, complex, cache, config, false)
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    pub complex: Complex,
    pub report: RunReport,
    pub metrics: MetricCache,
}

/// Runs seeding, the advancing front and, unless disabled, seam sewing and
/// hole filling.
pub fn triangulate(cloud: &PointCloud, config: &TriangulationConfig) -> Result<Triangulation, PipelineError> {
    let start = Instant::now();
    let (mut complex, mut metrics) = seed_complex(cloud, config)?;
    let seed_report = finish("seed", start, 0, 2, RejectionCounts::default(), &complex);
    let mut report = seed_report;
    report.stages[0].iterations = 2;
    report.extend(advancing_front(cloud, &mut complex, &mut metrics, config));
    if !config.skip_sewing {
        report.extend(seam_sewing(cloud, &mut complex, &mut metrics, config));
    }
    if config.fill_holes {
        report.extend(fill_holes(cloud, &mut complex, &mut metrics, config));
    }
    Ok(Triangulation { complex, report, metrics })
}
