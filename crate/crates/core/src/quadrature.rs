//! Adaptive Simpson quadrature for the smooth one- and two-dimensional
//! integrals used to verify densities and closed forms.

const PANELS: usize = 32;
const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first cut into 32 panels so narrow peaks are not skipped
/// by the initial five-point estimate, then each panel is refined
/// adaptively with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let h = (b - a) / PANELS as f64;
    let panel_tol = tol / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let lo = a + h * i as f64;
        let hi = if i + 1 == PANELS { b } else { lo + h };
        let (flo, fhi) = (f(lo), f(hi));
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += refine(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, MAX_DEPTH);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates a function of a direction over the unit sphere, parameterized
/// by polar angle θ ∈ [0, π] and azimuth φ ∈ [0, 2π).
pub fn integrate_sphere<F: Fn(crate::UnitVector3) -> f64>(f: F, tol: f64) -> f64 {
    use std::f64::consts::PI;
    let inner_tol = tol / (4.0 * PI);
    adaptive_simpson(
        |theta| {
            let (st, ct) = theta.sin_cos();
            if st == 0.0 {
                return 0.0;
            }
            st * adaptive_simpson(
                |phi| {
                    let (sp, cp) = phi.sin_cos();
                    let n = crate::sphere::normalize(crate::Vec3::new(st * cp, st * sp, ct))
                        .expect("point on the sphere");
                    f(n)
                },
                0.0,
                2.0 * PI,
                inner_tol,
            )
        },
        0.0,
        PI,
        tol / 2.0,
    )
}
