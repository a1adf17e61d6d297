mod common;

use std::f64::consts::{PI, TAU};

use frontmesh::datasets::{add_noise, embed, sample_manifold, unembed, EmbeddingBasis, ManifoldSpec};
use frontmesh::exec::Exec;
use proptest::prelude::*;

/// Pearson statistic of `values` binned on `[lo, hi)` against a density
/// given by its antiderivative `cdf` (unnormalized).
fn chi_square(values: &[f64], lo: f64, hi: f64, bins: usize, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / (hi - lo)) * bins as f64).floor() as isize;
        counts[k.clamp(0, bins as isize - 1) as usize] += 1;
    }
    let total = cdf(hi) - cdf(lo);
    let n = values.len() as f64;
    (0..bins)
        .map(|k| {
            let a = lo + (hi - lo) * k as f64 / bins as f64;
            let b = lo + (hi - lo) * (k + 1) as f64 / bins as f64;
            let expect = n * (cdf(b) - cdf(a)) / total;
            (counts[k] as f64 - expect).powi(2) / expect
        })
        .sum()
}

// 99.99th percentile of chi-square with 19 degrees of freedom is about 49.
const CHI2_19: f64 = 49.0;

#[test]
fn sphere_is_area_uniform() {
    let pts = sample_manifold(&ManifoldSpec::Sphere { radius: 1.0 }, 1_000_000, 3, Exec::Parallel).unwrap();
    let mean_z = pts.iter().map(|p| p[2]).sum::<f64>() / pts.len() as f64;
    assert!(mean_z.abs() <= 0.005, "{mean_z}");
    // octants are equally likely: each count within 4 sigma of n/8
    let mut oct = [0usize; 8];
    for p in &pts {
        oct[(p[0] > 0.0) as usize | ((p[1] > 0.0) as usize) << 1 | ((p[2] > 0.0) as usize) << 2] += 1;
    }
    let (n, q) = (pts.len() as f64, 1.0 / 8.0);
    let sigma = (n * q * (1.0 - q)).sqrt();
    for c in oct {
        assert!((c as f64 - n * q).abs() <= 4.0 * sigma, "{oct:?}");
    }
    // z is uniform on [-1, 1] for an area-uniform sphere
    let z: Vec<f64> = pts.iter().map(|p| p[2]).collect();
    assert!(chi_square(&z, -1.0, 1.0, 20, |t| t) < CHI2_19);
    let lon: Vec<f64> = pts.iter().map(|p| p[1].atan2(p[0]) + PI).collect();
    assert!(chi_square(&lon, 0.0, TAU, 20, |t| t) < CHI2_19);
}

#[test]
fn torus_is_area_uniform() {
    let (major, minor) = (4.0, 1.0);
    let pts = sample_manifold(&ManifoldSpec::Torus { major, minor }, 1_000_000, 4, Exec::Parallel).unwrap();
    let tube: Vec<f64> = pts.iter().map(|p| p[2].atan2(p[0].hypot(p[1]) - major) + PI).collect();
    // angle measured from the inner equator: density ∝ R - r cos(t)
    let stat = chi_square(&tube, 0.0, TAU, 20, |t| major * t - minor * t.sin());
    assert!(stat < CHI2_19, "{stat}");
    let around: Vec<f64> = pts.iter().map(|p| p[1].atan2(p[0]) + PI).collect();
    assert!(chi_square(&around, 0.0, TAU, 20, |t| t) < CHI2_19);
}

#[test]
fn swiss_roll_is_area_uniform() {
    let spec = ManifoldSpec::swiss_roll();
    let ManifoldSpec::SwissRoll { kappa, tau_max, theta_max } = spec else { unreachable!() };
    let pts = sample_manifold(&spec, 1_000_000, 5, Exec::Parallel).unwrap();
    let theta: Vec<f64> = pts.iter().map(|p| p[1].hypot(p[2]) / kappa).collect();
    let arc = |t: f64| 0.5 * (t * (1.0 + t * t).sqrt() + t.asinh());
    let stat = chi_square(&theta, 0.0, theta_max, 20, arc);
    assert!(stat < CHI2_19, "{stat}");
    let tau: Vec<f64> = pts.iter().map(|p| p[0]).collect();
    assert!(chi_square(&tau, 0.0, tau_max, 20, |t| t) < CHI2_19);
}

#[test]
fn creased_sheet_is_area_uniform_after_unfolding() {
    let spec = ManifoldSpec::creased_sheet();
    let ManifoldSpec::CreasedSheet { width, height, crease_angle } = spec else { unreachable!() };
    let pts = sample_manifold(&spec, 1_000_000, 6, Exec::Parallel).unwrap();
    let unfolded: Vec<f64> = pts.iter().map(|p| if p[2] > 0.0 { p[1].hypot(p[2]) } else { p[1] }).collect();
    assert!(chi_square(&unfolded, -height / 2.0, height / 2.0, 20, |t| t) < CHI2_19);
    for p in &pts {
        assert!(p[0].abs() <= width / 2.0);
        if p[2] > 0.0 {
            assert!((p[2].atan2(p[1]) - crease_angle).abs() < 1e-12);
        }
    }
}

#[test]
fn noise_has_chi_distributed_magnitude() {
    let pts = sample_manifold(&ManifoldSpec::torus(), 10_000, 7, Exec::Parallel).unwrap();
    let noisy = add_noise(&pts, 0.01, 8, Exec::Parallel);
    let ms = pts.iter().zip(&noisy).map(|(a, b)| common::sq(a, b)).sum::<f64>() / pts.len() as f64;
    let rms = ms.sqrt();
    assert!((rms / (0.01 * 3f64.sqrt()) - 1.0).abs() < 0.2, "{rms}");
    // radial deviation from the torus surface
    let spec = ManifoldSpec::torus();
    let radial = noisy.iter().map(|p| spec.implicit_residual(p).unwrap().powi(2)).sum::<f64>() / pts.len() as f64;
    assert!(radial.sqrt() > 0.005 && radial.sqrt() < 0.0125, "{}", radial.sqrt());
    assert_eq!(add_noise(&pts, 0.0, 8, Exec::Parallel), pts);
    assert_eq!(add_noise(&pts, 0.01, 8, Exec::Sequential), noisy);
}

#[test]
fn embedding_round_trips_on_many_points() {
    let pts = sample_manifold(&ManifoldSpec::swiss_roll(), 10_000, 9, Exec::Parallel).unwrap();
    let basis = EmbeddingBasis::random(50, 10).unwrap();
    let back = unembed(&embed(&pts, &basis, Exec::Parallel), &basis).unwrap();
    for (a, b) in pts.iter().zip(&back) {
        assert!(common::sq(a, b).sqrt() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embedding_preserves_distances(seed in any::<u64>(), dim in 3usize..80) {
        let pts = sample_manifold(&ManifoldSpec::sphere(), 40, seed, Exec::Sequential).unwrap();
        let basis = EmbeddingBasis::random(dim, seed).unwrap();
        for (i, v) in basis.vectors().iter().enumerate() {
            for (j, w) in basis.vectors().iter().enumerate() {
                let d: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                prop_assert!((d - (i == j) as u8 as f64).abs() <= 1e-12);
            }
        }
        let x = embed(&pts, &basis, Exec::Sequential);
        prop_assert_eq!(&basis.embed(&[1.0, 0.0, 0.0]), &basis.vectors()[0]);
        for i in 0..pts.len() {
            for j in 0..i {
                let d3 = common::sq(&pts[i], &pts[j]).sqrt();
                let dn = common::sq(&x[i], &x[j]).sqrt();
                prop_assert!((d3 - dn).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_seed_deterministic(seed in any::<u64>(), n in 1usize..10_000) {
        let a = sample_manifold(&ManifoldSpec::torus(), n, seed, Exec::Parallel).unwrap();
        let b = sample_manifold(&ManifoldSpec::torus(), n, seed, Exec::Sequential).unwrap();
        prop_assert_eq!(a, b);
    }
}
