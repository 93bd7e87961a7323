use std::f64::consts::PI;

use angmf::distributions::{angmf_nll_of_angle, AngMFParams};
use angmf::estimators::{
    angular_cost, fit_angmf_mle, mean_direction, spherical_median, DEFAULT_TOL,
};
use angmf::rng::RngState;
use angmf::sampling::sample_angmf;
use angmf::sphere::{angle_between, normalize, UnitVector3, Vec3};
use angmf::synth::{sample_boundary_pixels, TwoPlaneScene};

fn from_spherical(theta: f64, phi: f64) -> UnitVector3 {
    normalize(Vec3::new(
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    ))
    .unwrap()
}

/// Minimizes the summed angle by exhaustive search: a 1° grid over the
/// whole sphere, then a 0.1° grid around the best cell.
fn grid_search_median(samples: &[UnitVector3]) -> UnitVector3 {
    let mut best = (f64::INFINITY, UnitVector3::Z);
    for i in 0..=180 {
        for j in 0..360 {
            let c = from_spherical((i as f64).to_radians(), (j as f64).to_radians());
            let cost = angular_cost(c, samples);
            if cost < best.0 {
                best = (cost, c);
            }
        }
    }
    let (theta0, phi0) = (
        best.1.z().clamp(-1.0, 1.0).acos(),
        best.1.y().atan2(best.1.x()),
    );
    for i in -20..=20 {
        for j in -20..=20 {
            let theta = theta0 + (i as f64 * 0.1).to_radians();
            let phi = phi0 + (j as f64 * 0.1).to_radians();
            let c = from_spherical(theta, phi);
            let cost = angular_cost(c, samples);
            if cost < best.0 {
                best = (cost, c);
            }
        }
    }
    best.1
}

#[test]
fn contaminated_median_agrees_with_grid_search() {
    // plane A tilted away from the grid poles so the 0.1° grid is regular there
    let a = from_spherical(0.7, 0.4);
    let axis = normalize(a.as_vec().cross(Vec3::new(0.0, 0.0, 1.0))).unwrap();
    let b = a.rotate_about(axis, PI / 3.0);
    let mut samples = vec![a; 80];
    samples.extend(std::iter::repeat_n(b, 20));

    let oracle = grid_search_median(&samples);
    let median = spherical_median(&samples, DEFAULT_TOL).unwrap();
    assert!(median.converged);
    assert!(angle_between(oracle, a).radians() < 2.0 * 0.1f64.to_radians());
    assert!(angle_between(median.direction, a).radians() < 1e-3);
    assert!(angular_cost(median.direction, &samples) <= angular_cost(oracle, &samples) + 1e-9);

    let mean = mean_direction(&samples).unwrap();
    let off = angle_between(mean, a).degrees();
    assert!(off > 5.0, "mean only {off}° off");
    // the mean is pulled along the great circle towards B
    assert!(angle_between(mean, b).radians() < angle_between(a, b).radians());
}

#[test]
fn median_beats_mean_across_contamination_regimes() {
    let a = UnitVector3::new(0.0, 0.6, 0.8).unwrap();
    for &(contamination, sep_deg) in &[(0.1, 40.0), (0.2, 60.0), (0.35, 40.0), (0.35, 90.0)] {
        let b = a.rotate_about(UnitVector3::X, f64::to_radians(sep_deg));
        let scene = TwoPlaneScene::new(a, b, contamination, 50.0).unwrap();
        let mut wins = 0;
        for trial in 0..100 {
            let mut rng = RngState::for_stream(4242, trial);
            let samples = sample_boundary_pixels(&scene, &mut rng, 300);
            let median = spherical_median(&samples, DEFAULT_TOL).unwrap().direction;
            let mean = mean_direction(&samples).unwrap();
            if angle_between(median, a).radians() < angle_between(mean, a).radians() {
                wins += 1;
            }
        }
        assert!(
            wins >= 95,
            "contamination {contamination}, {sep_deg}°: {wins}/100"
        );
    }
}

#[test]
fn mle_kappa_matches_brute_force_scan() {
    let mu = normalize(Vec3::new(-0.48, 0.0, 0.88)).unwrap();
    let p = AngMFParams::new(mu, 5.0).unwrap();
    let samples = sample_angmf(&p, &mut RngState::new(99), 10_000);
    let fit = fit_angmf_mle(&samples, DEFAULT_TOL).unwrap();
    assert!(fit.converged);
    assert!(fit.nll_trace.windows(2).all(|w| w[1] <= w[0]));

    // scan κ at the true μ on a 1e-3 grid
    let angles: Vec<f64> = samples
        .iter()
        .map(|s| angle_between(mu, *s).radians())
        .collect();
    let mean_nll = |k: f64| {
        angles
            .iter()
            .map(|&a| angmf_nll_of_angle(k, a))
            .sum::<f64>()
            / angles.len() as f64
    };
    let scan = (3000..7000)
        .map(|i| i as f64 * 1e-3)
        .min_by(|a, b| mean_nll(*a).total_cmp(&mean_nll(*b)))
        .unwrap();
    assert!((scan - 5.0).abs() < 0.5, "scan optimum {scan}");
    // the joint fit lands next to the fixed-μ scan
    assert!(
        (fit.params.kappa() - scan).abs() < 0.05 * scan,
        "fit {} vs scan {scan}",
        fit.params.kappa()
    );
    assert!(fit.final_nll <= mean_nll(scan) + 1e-12);
}
