//! Independent reference computations shared by the integration tests.

use gaga::inference::GaGaHyper;
use statrs::function::gamma::ln_gamma;

/// Log marginal density of one gene under one pattern, by quadrature over
/// log α. Each class's λ is integrated in closed form:
/// ∫ Π_j Ga(x_j; α, α/λ) IGa(λ; α0, h) dλ
///   = Π x^(α−1) α^(αJ) / Γ(α)^J · h^α0 / Γ(α0) · Γ(αJ + α0) / (αS + h)^(αJ + α0),
/// with h = α0/ν.
pub fn oracle_log_marginal(classes: &[Vec<f64>], h: &GaGaHyper) -> f64 {
    let scale = h.alpha0 / h.nu;
    let rate = h.beta / h.mu;
    let log_f = |alpha: f64| {
        let mut v = h.beta * rate.ln() - ln_gamma(h.beta) + (h.beta - 1.0) * alpha.ln() - rate * alpha;
        for x in classes {
            let j = x.len() as f64;
            let s: f64 = x.iter().sum();
            let lp: f64 = x.iter().map(|v| v.ln()).sum();
            v += (alpha - 1.0) * lp + alpha * j * alpha.ln() - j * ln_gamma(alpha);
            v += h.alpha0 * scale.ln() - ln_gamma(h.alpha0) + ln_gamma(alpha * j + h.alpha0)
                - (alpha * j + h.alpha0) * (alpha * s + scale).ln();
        }
        v
    };
    let (lo, hi) = (-5.0, 15.0);
    let peak = (0..=4000)
        .map(|k| lo + (hi - lo) * k as f64 / 4000.0)
        .map(|u: f64| log_f(u.exp()) + u)
        .fold(f64::NEG_INFINITY, f64::max);
    let z = gaga::quad::integrate(|u: f64| (log_f(u.exp()) + u - peak).exp(), lo, hi, 1e-11).unwrap();
    peak + z.ln()
}
