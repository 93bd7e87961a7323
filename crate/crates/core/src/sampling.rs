//! Exact samplers for AngMF and vonMF.
//!
//! Both distributions are rotationally symmetric about μ, so a sample is a
//! polar angle α drawn from the radial marginal plus an azimuth φ uniform on
//! `[0, 2π)`:
//!
//! ```text
//! n = cos α · μ + sin α · (cos φ · e1 + sin φ · e2)
//! ```
//!
//! with `(e1, e2)` the tangent basis at μ. For AngMF the radial CDF is
//! inverted by bisection; for vonMF the cosine `t = μᵀn` has the closed-form
//! inverse `t = 1 + log(u + (1 − u) e^{−2κ}) / κ`.

use std::f64::consts::PI;

use crate::distributions::{error_cdf_unchecked, AngMFParams, VonMFParams};
use crate::rng::RngState;
use crate::sphere::{tangent_basis, Angle, TangentBasis, UnitVector3, Vec3};

const BISECTION_STEPS: u32 = 60;

/// Angle α with `angmf_error_cdf(kappa, α) = u`.
///
/// `u` is clamped to `[0, 1]`; the endpoints map exactly to 0 and π.
pub fn invert_error_cdf(kappa: f64, u: f64) -> Angle {
    debug_assert!(kappa >= 0.0);
    if !(u > 0.0) {
        return Angle::ZERO;
    }
    if u >= 1.0 {
        return Angle::STRAIGHT;
    }
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if error_cdf_unchecked(kappa, mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Angle::new(0.5 * (lo + hi)).expect("bracket stays inside [0, π]")
}

fn place(basis: &TangentBasis, mu: UnitVector3, cos_a: f64, sin_a: f64, phi: f64) -> UnitVector3 {
    let (sp, cp) = phi.sin_cos();
    let v = mu.as_vec() * cos_a + (basis.e1.as_vec() * cp + basis.e2.as_vec() * sp) * sin_a;
    crate::sphere::normalize(v).expect("sample lies on the sphere")
}

/// Draws `count` directions from AngMF(μ, κ).
pub fn sample_angmf(p: &AngMFParams, rng: &mut RngState, count: usize) -> Vec<UnitVector3> {
    let basis = tangent_basis(p.mu());
    (0..count)
        .map(|_| {
            let alpha = invert_error_cdf(p.kappa(), rng.next_f64()).radians();
            let phi = 2.0 * PI * rng.next_f64();
            let (s, c) = alpha.sin_cos();
            place(&basis, p.mu(), c, s, phi)
        })
        .collect()
}

/// Draws `count` directions from vonMF(μ, κ). κ = 0 is the uniform sphere.
pub fn sample_vonmf(p: &VonMFParams, rng: &mut RngState, count: usize) -> Vec<UnitVector3> {
    let basis = tangent_basis(p.mu());
    let k = p.kappa();
    (0..count)
        .map(|_| {
            let u = rng.next_f64();
            let t = vonmf_cosine(k, u);
            let phi = 2.0 * PI * rng.next_f64();
            let s = (1.0 - t * t).max(0.0).sqrt();
            place(&basis, p.mu(), t, s, phi)
        })
        .collect()
}

/// Inverse CDF of `t = μᵀn` under vonMF.
pub(crate) fn vonmf_cosine(kappa: f64, u: f64) -> f64 {
    if kappa == 0.0 {
        return 2.0 * u - 1.0;
    }
    // u + (1 − u) e^{−2κ} = 1 + (1 − u)(e^{−2κ} − 1)
    let t = 1.0 + ((1.0 - u) * (-2.0 * kappa).exp_m1()).ln_1p() / kappa;
    t.clamp(-1.0, 1.0)
}

/// A direction uniform on the sphere.
pub fn random_unit_vector(rng: &mut RngState) -> UnitVector3 {
    let t = 2.0 * rng.next_f64() - 1.0;
    let phi = 2.0 * PI * rng.next_f64();
    let s = (1.0 - t * t).max(0.0).sqrt();
    crate::sphere::normalize(Vec3::new(s * phi.cos(), s * phi.sin(), t)).expect("unit")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{angmf_error_cdf, expected_angular_error};
    use crate::sphere::angle_between;

    #[test]
    fn inversion_endpoints() {
        for k in [0.0, 1.0, 50.0] {
            assert_eq!(invert_error_cdf(k, 0.0).radians(), 0.0);
            assert_eq!(invert_error_cdf(k, 1.0).radians(), PI);
        }
        assert!((invert_error_cdf(0.0, 0.5).radians() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn inversion_accuracy_and_monotone() {
        for k in [0.0, 0.3, 1.0, 5.0, 20.0, 1e3] {
            let mut prev = 0.0;
            for i in 1..200 {
                let u = i as f64 / 200.0;
                let a = invert_error_cdf(k, u).radians();
                assert!(a >= prev);
                prev = a;
                let back = angmf_error_cdf(k, a).unwrap();
                assert!((back - u).abs() < 1e-10, "κ={k} u={u}: {back}");
            }
        }
    }

    #[test]
    fn concentrated_samples_hug_mu() {
        let mu = UnitVector3::new(0.0, 0.6, 0.8).unwrap();
        let p = AngMFParams::new(mu, 1e6).unwrap();
        let mut rng = RngState::new(1);
        for n in sample_angmf(&p, &mut rng, 2000) {
            assert!(angle_between(n, mu).radians() < 1e-2);
        }
    }

    #[test]
    fn uniform_samples_have_small_resultant() {
        let mut rng = RngState::new(2);
        let n = 100_000;
        let p = AngMFParams::new(UnitVector3::Z, 0.0).unwrap();
        let s = sample_angmf(&p, &mut rng, n);
        let r = s.iter().fold(Vec3::ZERO, |a, v| a + v.as_vec()).norm() / n as f64;
        assert!(r < 0.02, "{r}");

        let p = VonMFParams::new(UnitVector3::X, 0.0).unwrap();
        let s = sample_vonmf(&p, &mut rng, n);
        let r = s.iter().fold(Vec3::ZERO, |a, v| a + v.as_vec()).norm() / n as f64;
        assert!(r < 0.02, "{r}");
    }

    #[test]
    fn angmf_mean_angle_matches_expected_error() {
        let mu = UnitVector3::new(0.48, 0.6, 0.64).unwrap();
        let p = AngMFParams::new(mu, 1.0).unwrap();
        let mut rng = RngState::new(3);
        let n = 100_000;
        let mean: f64 = sample_angmf(&p, &mut rng, n)
            .iter()
            .map(|v| angle_between(*v, mu).radians())
            .sum::<f64>()
            / n as f64;
        let e = expected_angular_error(1.0).unwrap().radians();
        assert!((mean - e).abs() < 0.01, "{mean} vs {e}");
    }

    #[test]
    fn vonmf_endpoint_and_mean_cosine() {
        assert_eq!(vonmf_cosine(3.0, 1.0), 1.0);
        assert!((vonmf_cosine(3.0, 0.0) + 1.0).abs() < 1e-12);
        let mu = UnitVector3::Y;
        let p = VonMFParams::new(mu, 5.0).unwrap();
        let mut rng = RngState::new(4);
        let n = 100_000;
        let mean: f64 = sample_vonmf(&p, &mut rng, n)
            .iter()
            .map(|v| v.dot(mu))
            .sum::<f64>()
            / n as f64;
        // coth 5 − 1/5 = 0.800090803982019375…
        assert!((mean - 0.800_090_803_982_019_4).abs() < 0.005, "{mean}");
    }

    #[test]
    fn small_kappa_vonmf_is_continuous() {
        for u in [0.1, 0.5, 0.9] {
            assert!((vonmf_cosine(1e-12, u) - (2.0 * u - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_streams_are_bit_identical() {
        let p = AngMFParams::new(UnitVector3::Z, 2.5).unwrap();
        let a = sample_angmf(&p, &mut RngState::new(77), 500);
        let b = sample_angmf(&p, &mut RngState::new(77), 500);
        assert_eq!(a, b);
    }
}
