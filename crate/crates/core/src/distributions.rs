//! Densities, negative log-likelihoods and gradients for the von Mises-Fisher
//! (vonMF) and angular von Mises-Fisher (AngMF) distributions on the 2-sphere.
//!
//! Both families share the parameters `(μ, κ)`. The vonMF log-density is
//! linear in the cosine `μᵀn`, so its NLL is an L2 loss with learned
//! attenuation. The AngMF log-density is linear in the angle `acos(μᵀn)`, so
//! its NLL is the angular loss with learned attenuation:
//!
//! ```text
//! p(n | μ, κ) = (κ² + 1) exp(−κ α) / (2π (1 + exp(−κ π))),   α = acos(μᵀn)
//! ```
//!
//! Losses drop the additive constants: `log 4π` for vonMF and `log 2π` for
//! AngMF. NLL magnitudes are therefore not comparable across the two
//! families.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{angle_between, Angle, UnitVector3, Vec3};

const FOUR_PI: f64 = 4.0 * PI;
const TWO_PI: f64 = 2.0 * PI;

/// Below this κ the small-argument series replace the closed forms.
const SMALL_KAPPA: f64 = 1e-4;
/// Above this κ, `log sinh κ` switches to the overflow-free identity.
const LARGE_KAPPA: f64 = 20.0;
/// Dot-product clamp on the arccos-gradient path.
pub const GRAD_DOT_LIMIT: f64 = 1.0 - 1e-7;

/// Chunk size for the reproducible parallel reduction in [`batch_nll`].
const REDUCE_CHUNK: usize = 1024;

fn check_kappa(kappa: f64) -> Result<f64> {
    if kappa >= 0.0 && kappa.is_finite() {
        Ok(kappa)
    } else {
        Err(Error::domain("kappa", kappa, "[0, ∞)"))
    }
}

macro_rules! params_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            mu: UnitVector3,
            kappa: f64,
        }

        impl $name {
            /// Fails unless `kappa` is finite and nonnegative.
            pub fn new(mu: UnitVector3, kappa: f64) -> Result<Self> {
                Ok($name { mu, kappa: check_kappa(kappa)? })
            }

            #[inline]
            pub fn mu(&self) -> UnitVector3 {
                self.mu
            }

            #[inline]
            pub fn kappa(&self) -> f64 {
                self.kappa
            }
        }
    };
}

params_type!(
    /// Mean direction and concentration of a vonMF distribution.
    VonMFParams
);
params_type!(
    /// Mean direction and concentration of an AngMF distribution.
    AngMFParams
);

/// Gradient of a per-pixel NLL with respect to `(μ, κ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllGradient {
    /// Tangent-plane gradient with respect to μ (orthogonal to μ).
    pub d_mu: Vec3,
    pub d_kappa: f64,
    /// Set when `|μᵀn|` exceeded [`GRAD_DOT_LIMIT`] and the arccos
    /// derivative was evaluated at the clamped dot.
    pub clamped: bool,
}

/// `log(sinh κ / κ)`, finite for every κ ≥ 0.
pub(crate) fn log_sinhc(kappa: f64) -> f64 {
    if kappa < SMALL_KAPPA {
        let k2 = kappa * kappa;
        // sinh κ / κ = 1 + κ²/6 + κ⁴/120 + κ⁶/5040 + …
        (k2 / 6.0 + k2 * k2 / 120.0 + k2 * k2 * k2 / 5040.0).ln_1p()
    } else if kappa > LARGE_KAPPA {
        kappa + (-(-2.0 * kappa).exp()).ln_1p() - std::f64::consts::LN_2 - kappa.ln()
    } else {
        kappa.sinh().ln() - kappa.ln()
    }
}

/// `coth κ − 1/κ`, the vonMF mean resultant length on the 2-sphere.
pub(crate) fn coth_minus_inv(kappa: f64) -> f64 {
    if kappa < SMALL_KAPPA {
        let k2 = kappa * kappa;
        kappa / 3.0 - kappa * k2 / 45.0 + 2.0 * kappa * k2 * k2 / 945.0
            - kappa * k2 * k2 * k2 / 4725.0
    } else {
        1.0 / kappa.tanh() - 1.0 / kappa
    }
}

/// `π e^{−κπ} / (1 + e^{−κπ})`, evaluated without overflow.
#[inline]
fn pi_tail(kappa: f64) -> f64 {
    let e = (-kappa * PI).exp();
    PI * e / (1.0 + e)
}

/// vonMF density at `n`.
pub fn vonmf_pdf(p: &VonMFParams, n: UnitVector3) -> f64 {
    // κ e^{κt} / (4π sinh κ) = exp(κt − log(sinh κ / κ)) / 4π
    (p.kappa * p.mu.dot(n) - log_sinhc(p.kappa)).exp() / FOUR_PI
}

/// vonMF negative log-likelihood with `log 4π` dropped:
/// `−log κ + log sinh κ − κ μᵀn`.
pub fn vonmf_nll(p: &VonMFParams, n_gt: UnitVector3) -> f64 {
    log_sinhc(p.kappa) - p.kappa * p.mu.dot(n_gt).clamp(-1.0, 1.0)
}

/// AngMF density at `n`.
pub fn angmf_pdf(p: &AngMFParams, n: UnitVector3) -> f64 {
    let k = p.kappa;
    let alpha = angle_between(p.mu, n).radians();
    (k * k + 1.0) * (-k * alpha).exp() / (TWO_PI * (1.0 + (-k * PI).exp()))
}

/// Normalizer part of the AngMF NLL: `−log(κ² + 1) + log(1 + e^{−κπ})`.
#[inline]
pub(crate) fn angmf_log_normalizer(kappa: f64) -> f64 {
    -(kappa * kappa).ln_1p() + (-kappa * PI).exp().ln_1p()
}

/// AngMF NLL of an angular error `alpha` (radians) with `log 2π` dropped.
#[inline]
pub fn angmf_nll_of_angle(kappa: f64, alpha: f64) -> f64 {
    angmf_log_normalizer(kappa) + kappa * alpha
}

/// AngMF negative log-likelihood with `log 2π` dropped:
/// `−log(κ² + 1) + log(1 + e^{−κπ}) + κ acos(μᵀn)`.
pub fn angmf_nll(p: &AngMFParams, n_gt: UnitVector3) -> f64 {
    angmf_nll_of_angle(p.kappa, angle_between(p.mu, n_gt).radians())
}

/// Probability that the angle between an AngMF sample and μ is at most
/// `alpha_star` (radians).
pub fn angmf_error_cdf(kappa: f64, alpha_star: f64) -> Result<f64> {
    let k = check_kappa(kappa)?;
    let a = check_angle(alpha_star)?;
    Ok(error_cdf_unchecked(k, a))
}

pub(crate) fn error_cdf_unchecked(kappa: f64, alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let v = (1.0 - (-kappa * alpha).exp() * (c + kappa * s)) / (1.0 + (-kappa * PI).exp());
    v.clamp(0.0, 1.0)
}

/// Density of the angular error `alpha` (radians) under AngMF; the
/// derivative of [`angmf_error_cdf`].
pub fn angmf_error_pdf(kappa: f64, alpha: f64) -> Result<f64> {
    let k = check_kappa(kappa)?;
    let a = check_angle(alpha)?;
    Ok((-k * a).exp() * a.sin() * (k * k + 1.0) / (1.0 + (-k * PI).exp()))
}

fn check_angle(alpha: f64) -> Result<f64> {
    Angle::new(alpha).map(Angle::radians)
}

/// Expected angular error under AngMF:
/// `2κ/(κ² + 1) + π e^{−κπ}/(1 + e^{−κπ})`.
///
/// Decreases from π/2 at κ = 0 towards 0 as κ grows. This is the per-pixel
/// uncertainty score used throughout the crate.
pub fn expected_angular_error(kappa: f64) -> Result<Angle> {
    let k = check_kappa(kappa)?;
    Ok(Angle::new(expected_error_unchecked(k)).expect("expected error lies in (0, π/2]"))
}

#[inline]
pub(crate) fn expected_error_unchecked(kappa: f64) -> f64 {
    2.0 * kappa / (kappa * kappa + 1.0) + pi_tail(kappa)
}

/// `d/dκ` of the AngMF NLL at angular error `alpha`.
#[inline]
pub(crate) fn angmf_dkappa(kappa: f64, alpha: f64) -> f64 {
    alpha - expected_error_unchecked(kappa)
}

/// Analytic gradient of [`angmf_nll`].
///
/// `d_kappa = α − E[α](κ)`; `d_mu = −κ (n − tμ)/√(1 − t²)` with `t = μᵀn`.
/// The dot is clamped to ±[`GRAD_DOT_LIMIT`] on this path only, which bounds
/// the μ-gradient where the arccos derivative is singular.
pub fn angmf_nll_grad(p: &AngMFParams, n_gt: UnitVector3) -> NllGradient {
    let k = p.kappa;
    let alpha = angle_between(p.mu, n_gt).radians();
    let t = p.mu.dot(n_gt).clamp(-1.0, 1.0);
    let clamped = t.abs() > GRAD_DOT_LIMIT;
    let tc = t.clamp(-GRAD_DOT_LIMIT, GRAD_DOT_LIMIT);
    let denom = (1.0 - tc * tc).sqrt();
    let d_mu = n_gt.as_vec().reject(p.mu) * (-k / denom);
    NllGradient {
        d_mu,
        d_kappa: angmf_dkappa(k, alpha),
        clamped,
    }
}

/// Analytic gradient of [`vonmf_nll`].
///
/// `d_kappa = coth κ − 1/κ − μᵀn`; `d_mu` is the tangent projection of
/// `−κ n`.
pub fn vonmf_nll_grad(p: &VonMFParams, n_gt: UnitVector3) -> NllGradient {
    let k = p.kappa;
    let t = p.mu.dot(n_gt).clamp(-1.0, 1.0);
    NllGradient {
        d_mu: n_gt.as_vec().reject(p.mu) * (-k),
        d_kappa: coth_minus_inv(k) - t,
        clamped: false,
    }
}

/// Mean AngMF NLL over the pixels whose `valid` flag is set.
///
/// Partial sums run over fixed 1024-element chunks and are combined in
/// order, so the result does not depend on the number of threads.
pub fn batch_nll(params: &[AngMFParams], gts: &[UnitVector3], valid: &[bool]) -> Result<f64> {
    if params.len() != gts.len() || params.len() != valid.len() {
        return Err(Error::Shape(format!(
            "batch_nll: {} params, {} ground truths, {} mask flags",
            params.len(),
            gts.len(),
            valid.len()
        )));
    }
    let partials: Vec<(f64, usize)> = params
        .par_chunks(REDUCE_CHUNK)
        .zip(gts.par_chunks(REDUCE_CHUNK))
        .zip(valid.par_chunks(REDUCE_CHUNK))
        .map(|((p, g), v)| {
            let mut sum = 0.0;
            let mut count = 0;
            for ((p, g), &ok) in p.iter().zip(g).zip(v) {
                if ok {
                    sum += angmf_nll(p, *g);
                    count += 1;
                }
            }
            (sum, count)
        })
        .collect();
    let (sum, count) = partials
        .into_iter()
        .fold((0.0, 0), |(s, c), (ps, pc)| (s + ps, c + pc));
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(sum / count as f64)
}
