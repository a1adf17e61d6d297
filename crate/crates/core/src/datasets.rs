//! Synthetic test surfaces, sampled uniformly by area, and their isometric
//! embedding into a higher-dimensional space.
//!
//! Generation is split into fixed-size chunks, each drawing from its own
//! ChaCha stream, so the output depends only on the seed and not on how the
//! chunks are scheduled.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("invalid manifold parameters: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("basis vectors are not orthonormal")]
    NotOrthonormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldSpec {
    Sphere { radius: f64 },
    /// `major` is the radius of the center circle, `minor` that of the tube.
    Torus { major: f64, minor: f64 },
    SwissRoll { kappa: f64, tau_max: f64, theta_max: f64 },
    /// A `width × height` sheet folded by `crease_angle` along the line
    /// halfway up its height.
    CreasedSheet { width: f64, height: f64, crease_angle: f64 },
}

impl ManifoldSpec {
    pub fn sphere() -> Self {
        Self::Sphere { radius: 4.0 }
    }

    pub fn torus() -> Self {
        Self::Torus { major: 4.0, minor: 1.0 }
    }

    pub fn swiss_roll() -> Self {
        Self::SwissRoll { kappa: 0.5, tau_max: 6.0, theta_max: 4.0 * PI }
    }

    pub fn creased_sheet() -> Self {
        Self::CreasedSheet { width: 8.5, height: 11.0, crease_angle: 0.8 }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let ok = match *self {
            Self::Sphere { radius } => radius > 0.0,
            Self::Torus { major, minor } => major > minor && minor > 0.0,
            Self::SwissRoll { kappa, tau_max, theta_max } => kappa > 0.0 && tau_max > 0.0 && theta_max > 0.0,
            Self::CreasedSheet { width, height, crease_angle } => {
                width > 0.0 && height > 0.0 && crease_angle > 0.0 && crease_angle < PI
            }
        };
        if ok {
            Ok(())
        } else {
            Err(DatasetError::InvalidSpec(format!("{self:?}")))
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Self::Sphere { radius } => 4.0 * PI * radius * radius,
            Self::Torus { major, minor } => 4.0 * PI * PI * major * minor,
            Self::SwissRoll { kappa, tau_max, theta_max } => {
                let t = theta_max;
                let arc = 0.5 * (t * (1.0 + t * t).sqrt() + t.asinh());
                kappa * tau_max * arc
            }
            Self::CreasedSheet { width, height, .. } => width * height,
        }
    }

    fn sample_one(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        match *self {
            Self::Sphere { radius: a } => {
                let u = rng.random::<f64>() * TAU;
                let v = (1.0 - 2.0 * rng.random::<f64>()).clamp(-1.0, 1.0).acos();
                [a * u.cos() * v.sin(), a * u.sin() * v.sin(), a * v.cos()]
            }
            Self::Torus { major, minor } => {
                let u = rng.random::<f64>() * TAU;
                // area element ∝ major + minor cos v
                let v = loop {
                    let v = rng.random::<f64>() * TAU;
                    if rng.random::<f64>() * (major + minor) <= major + minor * v.cos() {
                        break v;
                    }
                };
                let w = major + minor * v.cos();
                [w * u.cos(), w * u.sin(), minor * v.sin()]
            }
            Self::SwissRoll { kappa, tau_max, theta_max } => {
                let tau = rng.random::<f64>() * tau_max;
                // area element ∝ sqrt(1 + θ²), increasing in θ
                let bound = (1.0 + theta_max * theta_max).sqrt();
                let th = loop {
                    let th = rng.random::<f64>() * theta_max;
                    if rng.random::<f64>() * bound <= (1.0 + th * th).sqrt() {
                        break th;
                    }
                };
                [tau, kappa * th * th.cos(), kappa * th * th.sin()]
            }
            Self::CreasedSheet { width, height, crease_angle } => {
                let x = (rng.random::<f64>() - 0.5) * width;
                let y = (rng.random::<f64>() - 0.5) * height;
                if y <= 0.0 {
                    [x, y, 0.0]
                } else {
                    [x, y * crease_angle.cos(), y * crease_angle.sin()]
                }
            }
        }
    }

    /// Signed deviation from the surface for points that should lie on it.
    /// Exact for the sphere and torus; used by tests and diagnostics.
    pub fn implicit_residual(&self, p: &[f64; 3]) -> Option<f64> {
        match *self {
            Self::Sphere { radius } => Some((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - radius),
            Self::Torus { major, minor } => {
                let rho = p[0].hypot(p[1]) - major;
                Some((rho * rho + p[2] * p[2]).sqrt() - minor)
            }
            _ => None,
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunked<T: Send, F>(count: usize, exec: Exec, f: F) -> Vec<T>
where
    F: Fn(std::ops::Range<usize>, usize) -> Vec<T> + Sync + Send,
{
    let chunks = count.div_ceil(CHUNK);
    exec.map_range(chunks, |k| f(k * CHUNK..((k + 1) * CHUNK).min(count), k))
        .into_iter()
        .flatten()
        .collect()
}

/// `count` area-uniform points on the manifold.
pub fn sample_manifold(spec: &ManifoldSpec, count: usize, seed: u64, exec: Exec) -> Result<Vec<[f64; 3]>, DatasetError> {
    spec.validate()?;
    Ok(chunked(count, exec, |range, k| {
        let mut rng = chunk_rng(seed, k);
        range.map(|_| spec.sample_one(&mut rng)).collect()
    }))
}

/// Adds `sigma · N(0, I₃)` to every point.
pub fn add_noise(points: &[[f64; 3]], sigma: f64, seed: u64, exec: Exec) -> Vec<[f64; 3]> {
    if sigma == 0.0 {
        return points.to_vec();
    }
    chunked(points.len(), exec, |range, k| {
        let mut rng = chunk_rng(seed, k);
        range
            .map(|i| {
                let p = points[i];
                let mut n = [0.0; 3];
                n.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
                [p[0] + sigma * n[0], p[1] + sigma * n[1], p[2] + sigma * n[2]]
            })
            .collect()
    })
}

/// Three orthonormal vectors in `R^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBasis {
    vectors: [Vec<f64>; 3],
}

impl EmbeddingBasis {
    pub fn new(vectors: [Vec<f64>; 3]) -> Result<Self, DatasetError> {
        let n = vectors[0].len();
        for v in &vectors[1..] {
            if v.len() != n {
                return Err(DatasetError::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-12 {
                    return Err(DatasetError::NotOrthonormal);
                }
            }
        }
        Ok(Self { vectors })
    }

    /// Gram–Schmidt on standard normal vectors.
    pub fn random(ambient_dim: usize, seed: u64) -> Result<Self, DatasetError> {
        if ambient_dim < 3 {
            return Err(DatasetError::DimensionMismatch { expected: 3, found: ambient_dim });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(3);
        while out.len() < 3 {
            let mut v: Vec<f64> = (0..ambient_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..2 {
                for b in &out {
                    let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                out.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let [a, b, c]: [Vec<f64>; 3] = out.try_into().expect("three vectors");
        Self::new([a, b, c])
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<f64>; 3] {
        &self.vectors
    }

    pub fn embed(&self, p: &[f64; 3]) -> Vec<f64> {
        (0..self.ambient_dim())
            .map(|k| p[0] * self.vectors[0][k] + p[1] * self.vectors[1][k] + p[2] * self.vectors[2][k])
            .collect()
    }

    pub fn unembed(&self, x: &[f64]) -> Result<[f64; 3], DatasetError> {
        if x.len() != self.ambient_dim() {
            return Err(DatasetError::DimensionMismatch { expected: self.ambient_dim(), found: x.len() });
        }
        let c = |b: &Vec<f64>| b.iter().zip(x).map(|(u, v)| u * v).sum();
        Ok([c(&self.vectors[0]), c(&self.vectors[1]), c(&self.vectors[2])])
    }
}

pub fn embed(points: &[[f64; 3]], basis: &EmbeddingBasis, exec: Exec) -> Vec<Vec<f64>> {
    exec.map_slice(points, |p| basis.embed(p))
}

pub fn unembed(points: &[Vec<f64>], basis: &EmbeddingBasis) -> Result<Vec<[f64; 3]>, DatasetError> {
    points.iter().map(|x| basis.unembed(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_on_surfaces() {
        for spec in [ManifoldSpec::sphere(), ManifoldSpec::torus()] {
            for p in sample_manifold(&spec, 5000, 3, Exec::Sequential).unwrap() {
                assert!(spec.implicit_residual(&p).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn modes_agree() {
        let spec = ManifoldSpec::swiss_roll();
        let a = sample_manifold(&spec, 10_000, 9, Exec::Sequential).unwrap();
        let b = sample_manifold(&spec, 10_000, 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(add_noise(&a, 0.1, 2, Exec::Sequential), add_noise(&a, 0.1, 2, Exec::Parallel));
    }

    #[test]
    fn basis_is_orthonormal_and_embedding_round_trips() {
        let basis = EmbeddingBasis::random(50, 11).unwrap();
        let e1 = basis.embed(&[1.0, 0.0, 0.0]);
        assert_eq!(e1, basis.vectors()[0]);
        let p = [0.3, -1.2, 2.5];
        let q = basis.unembed(&basis.embed(&p)).unwrap();
        for i in 0..3 {
            assert!((p[i] - q[i]).abs() < 1e-12);
        }
        assert!(basis.unembed(&[0.0; 3]).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ManifoldSpec::Torus { major: 1.0, minor: 2.0 }.validate().is_err());
        assert!(ManifoldSpec::CreasedSheet { width: 1.0, height: 1.0, crease_angle: 4.0 }.validate().is_err());
        assert!(ManifoldSpec::Sphere { radius: 0.0 }.validate().is_err());
    }
}
