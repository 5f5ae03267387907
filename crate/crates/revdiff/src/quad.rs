//! One-dimensional quadrature used by the reference-statistics oracles.
//!
//! Composite Simpson with Kahan-compensated summation, plus a self-refining
//! wrapper that doubles the panel count until two successive results agree to
//! a relative tolerance. All target-density oracles funnel through this one
//! primitive so the doubling-invariance property covers them all.

use crate::error::{Error, Result};

/// Composite Simpson rule over `[a, b]` with `panels` subintervals
/// (`panels` must be even and >= 2).
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels >= 2 && panels % 2 == 0, "panels must be even and >= 2");
    assert!(b > a, "empty interval");
    let h = (b - a) / panels as f64;
    // Kahan compensation keeps the 1e6-term sums accurate to ~1 ulp.
    let mut sum = f(a) + f(b);
    let mut comp = 0.0;
    let mut add = |v: f64, sum: &mut f64, comp: &mut f64| {
        let y = v - *comp;
        let t = *sum + y;
        *comp = (t - *sum) - y;
        *sum = t;
    };
    for i in 1..panels {
        let x = a + h * i as f64;
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        add(w * f(x), &mut sum, &mut comp);
    }
    sum * h / 3.0
}

/// Simpson with panel doubling until the relative change drops below
/// `rel_tol`; errors out if `max_doublings` refinements do not converge.
pub fn refining_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    initial_panels: usize,
    rel_tol: f64,
    max_doublings: usize,
) -> Result<f64> {
    let mut panels = initial_panels.max(2);
    if panels % 2 == 1 {
        panels += 1;
    }
    let mut prev = simpson(f, a, b, panels);
    for _ in 0..max_doublings {
        panels *= 2;
        let next = simpson(f, a, b, panels);
        let scale = next.abs().max(prev.abs()).max(f64::MIN_POSITIVE);
        if (next - prev).abs() <= rel_tol * scale {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Oracle(format!(
        "quadrature did not converge to rel tol {rel_tol:e} within {max_doublings} doublings \
         (last value {prev:.17e})"
    )))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// E|X| for X ~ N(mu, sigma^2):
/// sigma*sqrt(2/pi)*exp(-mu^2/(2 sigma^2)) + mu*(1 - 2*Phi(-mu/sigma)).
pub fn mean_abs_normal(mu: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0);
    let z = mu / sigma;
    sigma * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp()
        + mu * (1.0 - 2.0 * normal_cdf(-z))
}

/// Radius r such that P(|X| <= r) = `mass` for X ~ N(0, I_d); used to
/// truncate the prior. Computed from the chi-squared inverse CDF.
pub fn normal_ball_radius(dim: usize, mass: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    assert!(dim >= 1 && mass > 0.0 && mass < 1.0);
    let chi2 = ChiSquared::new(dim as f64).expect("valid dof");
    chi2.inverse_cdf(mass).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_polynomials_exactly() {
        // Simpson is exact on cubics.
        let f = |x: f64| 3.0 * x * x * x - x + 2.0;
        let exact = |x: f64| 0.75 * x * x * x * x - 0.5 * x * x + 2.0 * x;
        let got = simpson(&f, -1.0, 2.0, 2);
        assert!((got - (exact(2.0) - exact(-1.0))).abs() < 1e-12, "{got}");
    }

    #[test]
    fn simpson_matches_gaussian_integral() {
        let f = |x: f64| (-0.5 * x * x).exp();
        let got = simpson(&f, -10.0, 10.0, 10_000);
        let want = (2.0 * std::f64::consts::PI).sqrt();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn refining_simpson_converges_and_reports_failure() {
        let f = |x: f64| (-x * x).exp();
        let got = refining_simpson(&f, -8.0, 8.0, 64, 1e-12, 12).unwrap();
        assert!((got - std::f64::consts::PI.sqrt()).abs() < 1e-11);

        // An unreachable tolerance with a tiny refinement budget must error
        // rather than return a silently inaccurate value.
        let g = |x: f64| x.sin().exp();
        let err = refining_simpson(&g, 0.0, 3.0, 2, 1e-30, 3);
        assert!(matches!(err, Err(Error::Oracle(_))));
    }

    #[test]
    fn mean_abs_normal_closed_form() {
        // mu = 0: sigma*sqrt(2/pi).
        let want = 0.7 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean_abs_normal(0.0, 0.7) - want).abs() < 1e-15);

        // Large positive mean: E|X| ~ mu.
        assert!((mean_abs_normal(50.0, 1.0) - 50.0).abs() < 1e-12);

        // Cross-check against quadrature for an asymmetric case; split at the
        // kink of |x| so Simpson sees smooth integrands.
        let (mu, sigma) = (0.8, 1.3);
        let f = move |x: f64| {
            let z = (x - mu) / sigma;
            x.abs() * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let byquad = simpson(&f, mu - 14.0 * sigma, 0.0, 20_000)
            + simpson(&f, 0.0, mu + 14.0 * sigma, 20_000);
        assert!((mean_abs_normal(mu, sigma) - byquad).abs() < 1e-12);
    }

    #[test]
    fn truncation_radius_matches_tabulated_values() {
        // chi^2_1 at 0.9999: quantile 15.1367052266236...; sqrt ~ 3.8906.
        let r1 = normal_ball_radius(1, 0.9999);
        assert!((r1 - 15.136705226623606f64.sqrt()).abs() < 1e-9, "{r1}");
        // Monotone in dimension.
        let r2 = normal_ball_radius(2, 0.9999);
        let r10 = normal_ball_radius(10, 0.9999);
        assert!(r1 < r2 && r2 < r10);
        // d=1 sanity: P(|x| <= r1) = 2*Phi(r1) - 1 = 0.9999.
        let mass = 2.0 * normal_cdf(r1) - 1.0;
        assert!((mass - 0.9999).abs() < 1e-12, "{mass}");
    }
}
