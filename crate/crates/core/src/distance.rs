//! Exact Euclidean distance between two small simplices in `R^N`.
//!
//! The squared distance between points `x = Σ a_i p_i` and `y = Σ b_j q_j`
//! is a convex quadratic over the product of the two barycentric simplices.
//! Its minimizer lies in the relative interior of some pair of faces, where
//! it is the unconstrained least-squares solution over the affine hulls of
//! those faces. Every face pair is tried and the smallest feasible value is
//! kept; in `R^N` with `N >= 4` this includes interior-interior pairs, which
//! the usual vertex/edge case split misses.

use crate::spatial::sq_dist;

const FEAS_TOL: f64 = 1e-12;

/// Distance between the convex hulls of `a` and `b` (each 1 to 3 points).
pub fn simplex_distance(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    assert!((1..=3).contains(&a.len()) && (1..=3).contains(&b.len()));
    let origin = a[0];
    let pts: Vec<Vec<f64>> = a
        .iter()
        .chain(b.iter())
        .map(|p| p.iter().zip(origin).map(|(x, o)| x - o).collect())
        .collect();
    let np = pts.len();
    let mut gram = [[0.0f64; 6]; 6];
    for i in 0..np {
        for j in i..np {
            let g: f64 = pts[i].iter().zip(&pts[j]).map(|(x, y)| x * y).sum();
            gram[i][j] = g;
            gram[j][i] = g;
        }
    }
    let na = a.len();
    let scale2 = (0..np).map(|i| gram[i][i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    struct Candidate {
        value: f64,
        coeffs: [f64; 6],
    }
    let mut cands: Vec<Candidate> = Vec::new();
    for mask_a in 1u32..(1 << na) {
        for mask_b in 1u32..(1 << b.len()) {
            let sa: Vec<usize> = (0..na).filter(|i| mask_a & (1 << i) != 0).collect();
            let sb: Vec<usize> = (0..b.len()).filter(|j| mask_b & (1 << j) != 0).map(|j| j + na).collect();
            if let Some(c) = solve_face_pair(&gram, &sa, &sb) {
                cands.push(Candidate { value: c.0, coeffs: c.1 });
            }
        }
    }
    let best = cands.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    // Gram-based values lose precision for tiny distances, so near-best
    // candidates are re-measured directly.
    let mut out = f64::INFINITY;
    let dim = origin.len();
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    for c in cands.iter().filter(|c| c.value <= best + 1e-9 * scale2) {
        x.iter_mut().for_each(|v| *v = 0.0);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, p) in a.iter().enumerate() {
            let w = c.coeffs[i];
            if w != 0.0 {
                x.iter_mut().zip(p.iter()).for_each(|(xv, pv)| *xv += w * pv);
            }
        }
        for (j, q) in b.iter().enumerate() {
            let w = c.coeffs[na + j];
            if w != 0.0 {
                y.iter_mut().zip(q.iter()).for_each(|(yv, qv)| *yv += w * qv);
            }
        }
        out = out.min(sq_dist(&x, &y).sqrt());
    }
    out
}

/// Distance from a point to a closed triangle.
pub fn point_triangle_distance(p: &[f64], tri: [&[f64]; 3]) -> f64 {
    simplex_distance(&tri, &[p])
}

/// Minimizes over affine hulls of the faces `sa` (indices into the first
/// simplex) and `sb` (indices into the second, offset by its size). Returns
/// the squared distance and the full coefficient vector when the minimizer
/// lies in the closed faces.
fn solve_face_pair(g: &[[f64; 6]; 6], sa: &[usize], sb: &[usize]) -> Option<(f64, [f64; 6])> {
    // x - y = c + Σ α_i (p_i - p_0) - Σ β_j (q_j - q_0), c = p_0 - q_0.
    let (a0, b0) = (sa[0], sb[0]);
    let ip = |i: usize, j: usize| g[i][j];
    // Direction vectors as (plus, minus, sign) index pairs.
    let mut dirs: Vec<(usize, usize, f64)> = Vec::with_capacity(4);
    for &i in &sa[1..] {
        dirs.push((i, a0, 1.0));
    }
    for &j in &sb[1..] {
        dirs.push((j, b0, -1.0));
    }
    let dot = |(p1, m1, s1): (usize, usize, f64), (p2, m2, s2): (usize, usize, f64)| {
        s1 * s2 * (ip(p1, p2) - ip(p1, m2) - ip(m1, p2) + ip(m1, m2))
    };
    let c = (a0, b0, 1.0);
    let k = dirs.len();
    let mut sol = [0.0f64; 4];
    if k > 0 {
        let mut m = [[0.0f64; 5]; 4];
        for r in 0..k {
            for s in 0..k {
                m[r][s] = dot(dirs[r], dirs[s]);
            }
            m[r][k] = -dot(dirs[r], c);
        }
        solve_small(&mut m, k, &mut sol)?;
    }
    let mut coeffs = [0.0f64; 6];
    let (mut sum_a, mut sum_b) = (0.0, 0.0);
    for (idx, &(p, _, s)) in dirs.iter().enumerate() {
        let w = sol[idx];
        if w < -FEAS_TOL {
            return None;
        }
        coeffs[p] = w;
        if s > 0.0 {
            sum_a += w;
        } else {
            sum_b += w;
        }
    }
    if sum_a > 1.0 + FEAS_TOL || sum_b > 1.0 + FEAS_TOL {
        return None;
    }
    coeffs[a0] = 1.0 - sum_a;
    coeffs[b0] = 1.0 - sum_b;
    let mut value = dot(c, c);
    for r in 0..k {
        value += 2.0 * sol[r] * dot(dirs[r], c);
        for s in 0..k {
            value += sol[r] * sol[s] * dot(dirs[r], dirs[s]);
        }
    }
    Some((value.max(0.0), coeffs))
}

/// Gaussian elimination with partial pivoting on a `k × (k+1)` augmented
/// system. Returns `None` when the system is numerically singular.
fn solve_small(m: &mut [[f64; 5]; 4], k: usize, out: &mut [f64; 4]) -> Option<()> {
    let scale = (0..k).map(|i| m[i][i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        for r in (col + 1)..k {
            let f = m[r][col] / m[col][col];
            for c in col..=k {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    for r in (0..k).rev() {
        let mut acc = m[r][k];
        for c in (r + 1)..k {
            acc -= m[r][c] * out[c];
        }
        out[r] = acc / m[r][r];
    }
    Some(())
}
