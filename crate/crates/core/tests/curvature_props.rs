use frontmesh::curvature::{
    continuum_covariance, discrete_vs_continuum, eigen_expansion_check, predicted_eigenvalues, ExpansionCoefficients,
    QuadraticSurface, CHECK_RESOLUTION,
};
use proptest::prelude::*;

const RADII: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

#[test]
fn residuals_shrink_sixteenfold_per_halving() {
    for seed in 0..5 {
        let s = QuadraticSurface::random(seed, 1.0);
        let r = eigen_expansion_check(&s, &RADII).unwrap();
        for w in r.residuals.windows(2) {
            let ev = w[0].eigenvalue / w[1].eigenvalue;
            let vec = w[0].eigenvector / w[1].eigenvector;
            assert!((8.0..=32.0).contains(&ev), "seed {seed}: eigenvalue ratio {ev}");
            assert!((8.0..=32.0).contains(&vec), "seed {seed}: eigenvector ratio {vec}");
            // tangent plane tilts as r^2
            let tilt = w[0].tangent_angle / w[1].tangent_angle;
            assert!((2.0..=8.0).contains(&tilt) || w[0].tangent_angle < 1e-12, "seed {seed}: tilt ratio {tilt}");
        }
        for res in &r.residuals {
            assert!(res.tangent_angle <= 4.0 * res.radius * res.radius, "seed {seed}: {res:?}");
        }
    }
}

#[test]
fn plane_residuals_sit_at_roundoff() {
    let r = eigen_expansion_check(&QuadraticSurface::plane(), &RADII).unwrap();
    for res in &r.residuals {
        assert!(res.eigenvalue < 1e-13 && res.eigenvector < 1e-13 && res.tangent_angle < 1e-13, "{res:?}");
    }
    let p = continuum_covariance(&QuadraticSurface::plane(), 0.3, 64).unwrap();
    let expect = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(0.5, 0.5, 0.0));
    assert!((p - expect).abs().max() < 1e-14);
}

#[test]
fn off_diagonal_entries_fit_the_expansion() {
    let s = QuadraticSurface { m11: 0.6, m22: -0.3, m13: 0.8, m23: -0.5, m33: 0.4 };
    let c = ExpansionCoefficients::of(&s);
    // fit P13 = a r^2 + b r^4 through the three radii in least squares
    let radii = [0.02, 0.04, 0.08];
    for (entry, expected) in [((0, 2), c.a13), ((1, 2), c.a23)] {
        let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &r in &radii {
            let p = continuum_covariance(&s, r, CHECK_RESOLUTION).unwrap();
            let (x1, x2, y) = (r * r, r.powi(4), p[entry]);
            s11 += x1 * x1;
            s12 += x1 * x2;
            s22 += x2 * x2;
            t1 += x1 * y;
            t2 += x2 * y;
        }
        let fitted = (t1 * s22 - t2 * s12) / (s11 * s22 - s12 * s12);
        assert!((fitted - expected).abs() <= 1e-3 * expected.abs(), "{entry:?}: {fitted} vs {expected}");
    }
}

#[test]
fn sphere_like_weak_eigenvalue() {
    for m in [0.25, 0.5, 1.0] {
        let r = 0.05;
        let p = continuum_covariance(&QuadraticSurface::sphere_like(m), r, CHECK_RESOLUTION).unwrap();
        let weak = p.symmetric_eigen().eigenvalues.min();
        let leading = m * m * r * r / 2.0;
        assert!((weak - leading).abs() <= 2.0 * m.powi(4) * r.powi(4), "m {m}: {weak} vs {leading}");
    }
}

#[test]
fn discrete_covariance_converges_at_monte_carlo_rate() {
    let s = QuadraticSurface::random(7, 1.0);
    let mean = |n: usize| (0..8).map(|k| discrete_vs_continuum(&s, 0.1, n, 100 + k).unwrap().deviation).sum::<f64>() / 8.0;
    let (small, large) = (mean(4000), mean(16000));
    let ratio = large / small;
    assert!((0.35..=0.7).contains(&ratio), "{small} -> {large}");
}

#[test]
fn large_samples_match_the_continuum() {
    let plane = discrete_vs_continuum(&QuadraticSurface::plane(), 0.1, 1_000_000, 1).unwrap();
    assert!(plane.deviation < 3e-3, "{plane:?}");
    let sphere = discrete_vs_continuum(&QuadraticSurface::sphere_like(1.0), 0.1, 1_000_000, 2).unwrap();
    assert!((sphere.discrete_weak_eigenvalue / 0.005 - 1.0).abs() < 0.1, "{sphere:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn covariance_has_unit_trace(seed in any::<u64>(), r in 0.01f64..0.2) {
        let s = QuadraticSurface::random(seed, 1.0);
        let p = continuum_covariance(&s, r, 64).unwrap();
        prop_assert!((p.trace() - 1.0).abs() < 1e-10);
        prop_assert!((p - p.transpose()).abs().max() < 1e-15);
        let sum: f64 = predicted_eigenvalues(&s.summary(r)).iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normal_curvature_extremes_lie_on_the_axes(seed in any::<u64>()) {
        let s = QuadraticSurface::random(seed, 1.0);
        let k = s.summary(0.1);
        let (lo, hi) = (k.kappa1.min(k.kappa2), k.kappa1.max(k.kappa2));
        for i in 0..360 {
            let c = s.normal_curvature(i as f64 * std::f64::consts::PI / 180.0);
            prop_assert!(c >= lo - 1e-15 && c <= hi + 1e-15);
        }
        prop_assert_eq!(s.normal_curvature(0.0), k.kappa1);
        prop_assert!((s.normal_curvature(std::f64::consts::FRAC_PI_2) - k.kappa2).abs() < 1e-15);
        prop_assert_eq!(k.kappa_bar, 0.5 * (k.kappa1 + k.kappa2));
    }
}
