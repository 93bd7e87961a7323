//! Direction and parameter estimators.
//!
//! [`mean_direction`] minimizes the summed squared chordal distance and is
//! what an L2 (or vonMF) loss converges to. [`spherical_median`] minimizes
//! the summed geodesic distance and is what the angular (AngMF) loss
//! converges to. The median is far less sensitive to one-sided contamination
//! such as ground-truth normals blurred across a plane boundary.
//!
//! [`fit_angmf_mle`] fits both AngMF parameters jointly. For fixed κ the
//! μ-part of the likelihood is the spherical-median objective, and for fixed
//! μ the stationarity condition in κ is `E[α](κ) = mean angle`.

use serde::Serialize;

use crate::distributions::{angmf_dkappa, angmf_log_normalizer, AngMFParams};
use crate::error::{Error, Result};
use crate::sphere::{angle_between, normalize, UnitVector3, Vec3};

/// Default first-order tolerance on the tangent gradient norm.
pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;
/// Concentration at which the MLE stops and reports non-convergence.
pub const KAPPA_CEILING: f64 = 1e6;
/// Iterates closer than this to a sample are treated as sitting on it.
const ON_SAMPLE: f64 = 1e-9;
const MAX_BACKTRACKS: u32 = 60;

/// Normalized vector sum of the samples.
pub fn mean_direction(samples: &[UnitVector3]) -> Result<UnitVector3> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum = samples.iter().fold(Vec3::ZERO, |acc, s| acc + s.as_vec());
    if sum.norm() <= 1e-12 * samples.len() as f64 {
        return Err(Error::DegenerateResultant);
    }
    normalize(sum).map_err(|_| Error::DegenerateResultant)
}

/// Sum of angles from `mu` to every sample.
pub fn angular_cost(mu: UnitVector3, samples: &[UnitVector3]) -> f64 {
    samples
        .iter()
        .map(|s| angle_between(mu, *s).radians())
        .sum()
}

/// Pieces of the angular objective at one point, accumulated in sample
/// order.
struct MedianTerms {
    /// `Σ u_j` over samples away from μ; `u_j` is the unit tangent towards
    /// sample j. The Riemannian gradient of the cost is `−Σ u_j`.
    pull: Vec3,
    /// `Σ 1/α_j` over the same samples.
    weight: f64,
    /// Samples within [`ON_SAMPLE`] of μ.
    coincident: usize,
    cost: f64,
}

fn median_terms(mu: UnitVector3, samples: &[UnitVector3]) -> MedianTerms {
    let mut t = MedianTerms {
        pull: Vec3::ZERO,
        weight: 0.0,
        coincident: 0,
        cost: 0.0,
    };
    for s in samples {
        let alpha = angle_between(mu, *s).radians();
        t.cost += alpha;
        if alpha < ON_SAMPLE {
            t.coincident += 1;
            continue;
        }
        let tangent = s.as_vec().reject(mu);
        let tn = tangent.norm();
        if tn == 0.0 {
            // antipodal: every direction is a descent direction; no pull
            t.weight += 1.0 / alpha;
            continue;
        }
        t.pull += tangent * (1.0 / tn);
        t.weight += 1.0 / alpha;
    }
    t
}

impl MedianTerms {
    /// First-order optimality residual. On a sample point the cost is not
    /// differentiable; there the residual is how far the pull of the other
    /// samples exceeds what the coincident samples can absorb.
    fn residual(&self) -> f64 {
        (self.pull.norm() - self.coincident as f64).max(0.0)
    }
}

/// Result of [`spherical_median`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MedianReport {
    pub direction: UnitVector3,
    /// Sum of angles to the samples at `direction`, radians.
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Direction minimizing the summed angle to the samples.
///
/// Weiszfeld iteration on the sphere: from μ, step along
/// `Σ u_j / Σ (1/α_j)` via the exponential map, halving the step whenever
/// the cost would increase. When an iterate lands on a sample, that sample is
/// dropped from the step and plain tangent descent with backtracking takes
/// over for that iteration.
pub fn spherical_median(samples: &[UnitVector3], tol: f64) -> Result<MedianReport> {
    let mut mu = match mean_direction(samples) {
        Ok(m) => m,
        // a balanced set has no mean; start from the first sample instead
        Err(Error::DegenerateResultant) => samples[0],
        Err(e) => return Err(e),
    };
    let mut terms = median_terms(mu, samples);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        if terms.residual() < tol {
            return Ok(MedianReport {
                direction: mu,
                cost: terms.cost,
                gradient_norm: terms.residual(),
                iterations,
                converged: true,
            });
        }
        iterations += 1;
        let step = if terms.coincident == 0 {
            terms.pull * (1.0 / terms.weight)
        } else {
            // off the kink along the net pull; scale by the mean spread
            terms.pull * (1.0 / terms.weight.max(1.0))
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = mu.exp_map(step * scale);
            let cand_terms = median_terms(cand, samples);
            // near the optimum the cost change drops below its rounding
            // noise; the residual still tells descent apart there
            let noise = 4.0 * f64::EPSILON * terms.cost;
            if cand_terms.cost <= terms.cost
                || (cand_terms.cost <= terms.cost + noise
                    && cand_terms.residual() < terms.residual())
            {
                accepted = Some((cand, cand_terms));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((m, t)) => {
                let stalled = m == mu;
                mu = m;
                terms = t;
                if stalled {
                    break;
                }
            }
            None => break,
        }
    }
    let residual = terms.residual();
    Ok(MedianReport {
        direction: mu,
        cost: terms.cost,
        gradient_norm: residual,
        iterations,
        converged: residual < tol,
    })
}

/// Result of [`fit_angmf_mle`].
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub params: AngMFParams,
    /// Mean AngMF NLL at `params`.
    pub final_nll: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean NLL after every accepted iteration, starting with the initial
    /// point. Nonincreasing.
    #[serde(skip)]
    pub nll_trace: Vec<f64>,
}

#[inline]
fn softplus(rho: f64) -> f64 {
    if rho > 30.0 {
        rho + (-rho).exp().ln_1p()
    } else {
        rho.exp().ln_1p()
    }
}

#[inline]
fn inv_softplus(kappa: f64) -> f64 {
    if kappa > 30.0 {
        kappa + (-(-kappa).exp()).ln_1p()
    } else {
        kappa.exp_m1().ln()
    }
}

#[inline]
fn sigmoid(rho: f64) -> f64 {
    1.0 / (1.0 + (-rho).exp())
}

fn mean_nll(kappa: f64, mean_angle: f64) -> f64 {
    angmf_log_normalizer(kappa) + kappa * mean_angle
}

/// `d²/dκ²` of the mean AngMF NLL (independent of the angles).
fn nll_kappa_curvature(kappa: f64) -> f64 {
    use std::f64::consts::PI;
    let k2 = kappa * kappa;
    let e = (-kappa * PI).exp();
    // d/dκ [−2κ/(κ²+1) − π e/(1+e)]
    2.0 * (k2 - 1.0) / ((k2 + 1.0) * (k2 + 1.0)) + PI * PI * e / ((1.0 + e) * (1.0 + e))
}

/// Maximum-likelihood fit of AngMF `(μ, κ)` to the samples.
///
/// Starts from `μ₀ = mean_direction`, `κ₀ = 1`. Each iteration takes a
/// Weiszfeld-scaled tangent step in μ (retracted with the exponential map)
/// together with a Newton step in `ρ = softplus⁻¹(κ)`, and backtracks both
/// until the mean NLL does not increase. Stops when the tangent gradient
/// norm and `|∂NLL/∂κ|` are both below `tol`, or when κ reaches
/// [`KAPPA_CEILING`] (reported as not converged).
pub fn fit_angmf_mle(samples: &[UnitVector3], tol: f64) -> Result<FitReport> {
    if samples.len() < 2 {
        return Err(Error::InsufficientPixels {
            needed: 2,
            available: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mut mu = match mean_direction(samples) {
        Ok(m) => m,
        Err(Error::DegenerateResultant) => samples[0],
        Err(e) => return Err(e),
    };
    let mut rho = inv_softplus(1.0);
    let mut kappa = softplus(rho);
    let mut terms = median_terms(mu, samples);
    let mut nll = mean_nll(kappa, terms.cost / n);
    let mut trace = vec![nll];
    let mut iterations = 0;

    let report = |mu, kappa, nll, iterations, converged, trace| FitReport {
        params: AngMFParams::new(mu, kappa).expect("κ stays finite and positive"),
        final_nll: nll,
        iterations,
        converged,
        nll_trace: trace,
    };

    loop {
        let mean_angle = terms.cost / n;
        let dk = angmf_dkappa(kappa, mean_angle);
        let grad_mu = kappa * terms.residual() / n;
        // at the κ = 0 boundary a positive slope is a KKT point
        let dk_ok = dk.abs() < tol || (kappa < 1e-12 && dk > 0.0);
        if grad_mu < tol && dk_ok {
            return Ok(report(mu, kappa, nll, iterations, true, trace));
        }
        if kappa >= KAPPA_CEILING {
            return Ok(report(mu, KAPPA_CEILING, nll, iterations, false, trace));
        }
        if iterations >= MAX_ITERATIONS {
            return Ok(report(mu, kappa, nll, iterations, false, trace));
        }
        iterations += 1;

        let mu_step = if terms.coincident == 0 {
            terms.pull * (1.0 / terms.weight)
        } else {
            terms.pull * (1.0 / terms.weight.max(1.0))
        };
        let sig = sigmoid(rho);
        let g_rho = dk * sig;
        let h_rho = nll_kappa_curvature(kappa) * sig * sig + dk * sig * (1.0 - sig);
        let rho_step = if h_rho > 0.0 { -g_rho / h_rho } else { -g_rho };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand_mu = mu.exp_map(mu_step * scale);
            let cand_rho = rho + rho_step * scale;
            let cand_kappa = softplus(cand_rho).min(KAPPA_CEILING);
            let cand_terms = median_terms(cand_mu, samples);
            let cand_nll = mean_nll(cand_kappa, cand_terms.cost / n);
            if cand_nll <= nll {
                accepted = Some((cand_mu, cand_rho, cand_kappa, cand_terms, cand_nll));
                break;
            }
            scale *= 0.5;
        }
        let Some((m, r, k, t, v)) = accepted else {
            // no descent left at machine precision
            let converged = grad_mu < tol.sqrt() && dk.abs() < tol.sqrt();
            return Ok(report(mu, kappa, nll, iterations, converged, trace));
        };
        let stalled = m == mu && k == kappa;
        mu = m;
        rho = r;
        kappa = k;
        terms = t;
        nll = v;
        trace.push(nll);
        if stalled {
            let converged = terms.residual() * kappa / n < tol.sqrt() && dk.abs() < tol.sqrt();
            return Ok(report(mu, kappa, nll, iterations, converged, trace));
        }
    }
}
