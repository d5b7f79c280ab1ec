//! The gamma-shape (GaS) distribution: the conditional posterior of a gamma
//! shape parameter given group sums and counts.
//!
//! Its unnormalized density on y > 0 is
//!
//! ```text
//! y^(b - p·d - 1) · exp(-c·y) · Π_i Γ(a_i·y + d) / Γ(y)^a_i · (y / (r + s_i·y))^(a_i·y + d)
//! ```
//!
//! The normalizing constant has no closed form. For large y the density is
//! close to `Ga(b + ½Σ(a_i - 1), c + Σ a_i log(s_i/a_i))`; the constant is
//! approximated by evaluating that gamma and the exact kernel at the gamma
//! mode. When the gamma mode misses the true mode, a few Newton steps locate
//! it and the gamma is re-matched to the mode location and curvature.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::{self, Rng};
use crate::special::{digamma, ln_gamma, trigamma, CompensatedSum};

const MAX_NEWTON_STEPS: usize = 200;
const MAX_BRACKET_STEPS: usize = 1100;
/// Refinement triggers when the score at the approximate mode exceeds this
/// fraction of the score one approximate standard deviation above it.
const SCORE_TRIGGER: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GasParams {
    a: Vec<f64>,
    b: f64,
    c: f64,
    d: f64,
    r: f64,
    s: Vec<f64>,
}

impl GasParams {
    pub fn new(a: Vec<f64>, b: f64, c: f64, d: f64, r: f64, s: Vec<f64>) -> Result<Self> {
        if a.len() != s.len() {
            return Err(Error::InvalidParams(format!("len(a) = {} but len(s) = {}", a.len(), s.len())));
        }
        if a.iter().any(|&ai| !(ai >= 0.0 && ai.is_finite())) {
            return Err(Error::InvalidParams("a must be finite and nonnegative".into()));
        }
        if s.iter().any(|&si| !(si > 0.0 && si.is_finite())) {
            return Err(Error::InvalidParams("s must be finite and positive".into()));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParams(format!("b = {b} must be positive")));
        }
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidParams(format!("d = {d} must be nonnegative")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParams(format!("r = {r} must be positive")));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParams("c must be finite".into()));
        }
        let params = Self { a, b, c, d, r, s };
        let rate = params.approx_rate();
        if !(rate > 0.0) {
            return Err(Error::IntegrabilityViolation(rate));
        }
        Ok(params)
    }

    /// The p = 0 member, which is exactly Ga(shape, rate).
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(Vec::new(), shape, rate, 0.0, 1.0, Vec::new())
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// True when every product factor is the empty factor, so the density is
    /// exactly Ga(b, c).
    pub fn is_pure_gamma(&self) -> bool {
        self.d == 0.0 && self.a.iter().all(|&ai| ai == 0.0)
    }

    fn active(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let skip_empty = self.d == 0.0;
        self.a
            .iter()
            .zip(&self.s)
            .filter(move |(&ai, _)| !(skip_empty && ai == 0.0))
            .map(|(&ai, &si)| (ai, si))
    }

    fn approx_rate(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.add(self.c);
        for (&ai, &si) in self.a.iter().zip(&self.s) {
            if ai > 0.0 {
                acc.add(ai * (si / ai).ln());
            }
        }
        acc.value()
    }

    fn power_exponent(&self) -> f64 {
        self.b - self.p() as f64 * self.d - 1.0
    }

    fn log_kernel(&self, y: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.add(self.power_exponent() * y.ln());
        acc.add(-self.c * y);
        let lg_y = ln_gamma(y);
        for (ai, si) in self.active() {
            let n = ai * y + self.d;
            acc.add(ln_gamma(n));
            acc.add(-ai * lg_y);
            // log(y / (r + s y)) = -log(s + r / y)
            acc.add(-n * (si + self.r / y).ln());
        }
        acc.value()
    }

    /// First and second derivatives of the log density at y.
    pub fn score_and_curvature(&self, y: f64) -> (f64, f64) {
        let e = self.power_exponent();
        let mut score = CompensatedSum::new();
        let mut curv = CompensatedSum::new();
        score.add(e / y);
        score.add(-self.c);
        curv.add(-e / (y * y));
        let (psi_y, psi1_y) = (digamma(y), trigamma(y));
        for (ai, si) in self.active() {
            let n = ai * y + self.d;
            let q = self.r + si * y;
            let u = self.r / (y * q);
            if ai > 0.0 {
                score.add(ai * digamma(n));
                score.add(-ai * psi_y);
                score.add(-ai * (si + self.r / y).ln());
                curv.add(ai * ai * trigamma(n));
                curv.add(-ai * psi1_y);
                curv.add(2.0 * ai * u);
            }
            score.add(n * u);
            curv.add(-n * self.r * (self.r + 2.0 * si * y) / (y * y * q * q));
        }
        (score.value(), curv.value())
    }

    pub fn score(&self, y: f64) -> f64 {
        self.score_and_curvature(y).0
    }
}

/// Log of the density with the normalizing constant omitted.
pub fn gas_log_density_unnorm(y: f64, params: &GasParams) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::DomainError(y));
    }
    Ok(params.log_kernel(y))
}

/// Gamma stand-in for a GaS density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaApprox {
    pub shape: f64,
    pub rate: f64,
    pub refined: bool,
}

impl GammaApprox {
    pub fn mode(&self) -> f64 {
        (self.shape - 1.0) / self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sd(&self) -> f64 {
        self.shape.sqrt() / self.rate
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * y.ln() - self.rate * y
    }

    pub fn sample_with(&self, rng: &mut Rng, count: usize) -> Vec<f64> {
        (0..count).map(|_| rng::gamma(rng, self.shape, self.rate)).collect()
    }
}

/// Large-y gamma approximation (unrefined).
pub fn gas_gamma_approx(params: &GasParams) -> Result<GammaApprox> {
    let shape = params.b + 0.5 * params.a.iter().map(|ai| ai - 1.0).sum::<f64>();
    if !(shape > 0.0) {
        return Err(Error::ApproxDegenerate { shape });
    }
    Ok(GammaApprox {
        shape,
        rate: params.approx_rate(),
        refined: false,
    })
}

/// Returns `approx` unchanged when its mode already sits at a stationary
/// point of the log density; otherwise locates the true mode by Newton's
/// method and matches a gamma to the mode and curvature there.
///
/// An approximation without an interior mode (shape ≤ 1) is always refined,
/// starting from its mean.
pub fn gas_mode_refine(params: &GasParams, approx: &GammaApprox) -> Result<GammaApprox> {
    let mode = approx.mode();
    if mode > 0.0 {
        let trigger = SCORE_TRIGGER * params.score(mode + approx.sd()).abs();
        if params.score(mode).abs() <= trigger {
            return Ok(*approx);
        }
        refine_from(params, mode)
    } else {
        refine_from(params, approx.mean())
    }
}

/// Unconditional refinement starting at `start`: Newton steps on the score,
/// kept inside a bracket [lo, hi] with score(lo) > 0 > score(hi) and replaced
/// by bisection in log y whenever they leave it.
pub fn refine_from(params: &GasParams, start: f64) -> Result<GammaApprox> {
    let fail = |y: f64| Error::RefineFailed(format!("no sign change of the score near y = {y}"));
    let (mut lo, mut hi) = (start, start);
    if params.score(start) > 0.0 {
        for _ in 0..MAX_BRACKET_STEPS {
            hi *= 2.0;
            if params.score(hi) < 0.0 {
                break;
            }
        }
        if !(params.score(hi) < 0.0) {
            return Err(fail(hi));
        }
    } else {
        for _ in 0..MAX_BRACKET_STEPS {
            lo *= 0.5;
            if params.score(lo) > 0.0 {
                break;
            }
        }
        if !(params.score(lo) > 0.0) {
            return Err(fail(lo));
        }
    }
    let mut y = start.clamp(lo, hi);
    let mut converged = false;
    for _ in 0..MAX_NEWTON_STEPS {
        let (g, h) = params.score_and_curvature(y);
        if !g.is_finite() || !h.is_finite() {
            return Err(Error::RefineFailed(format!("non-finite derivatives at y = {y}")));
        }
        if g > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let newton = y - g / h;
        let next = if h < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            (lo * hi).sqrt()
        };
        let step = next - y;
        y = next;
        if h < 0.0 && step.abs() <= 1e-8 / (-h).sqrt() {
            converged = true;
            break;
        }
        if hi / lo - 1.0 < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::RefineFailed(format!("Newton did not converge (last y = {y})")));
    }
    let (_, h) = params.score_and_curvature(y);
    let curvature = -h;
    if !(curvature > 0.0) {
        return Err(Error::RefineFailed(format!("log density not concave at mode {y}")));
    }
    Ok(GammaApprox {
        shape: 1.0 + curvature * y * y,
        rate: curvature * y,
        refined: true,
    })
}

/// Gamma approximation actually used for the normalizer and for sampling.
pub fn gas_approximation(params: &GasParams) -> Result<GammaApprox> {
    let base = gas_gamma_approx(params)?;
    if params.is_pure_gamma() {
        return Ok(base);
    }
    gas_mode_refine(params, &base)
}

/// Approximate log normalizing constant: log g(m) − log f(m) at the mode m of
/// the (possibly refined) gamma approximation g.
pub fn gas_log_norm_const(params: &GasParams) -> Result<f64> {
    gas_log_norm_const_with_approx(params).map(|(c, _)| c)
}

pub fn gas_log_norm_const_with_approx(params: &GasParams) -> Result<(f64, GammaApprox)> {
    if params.is_pure_gamma() {
        let approx = gas_gamma_approx(params)?;
        return Ok((approx.shape * approx.rate.ln() - ln_gamma(approx.shape), approx));
    }
    let approx = gas_approximation(params)?;
    let m = approx.mode();
    Ok((approx.log_pdf(m) - params.log_kernel(m), approx))
}

/// Log normalizing constant by adaptive quadrature in u = log y. `tol` bounds
/// the relative error of the integral, i.e. roughly the absolute error of the
/// returned value.
pub fn gas_log_norm_const_oracle(params: &GasParams, tol: f64) -> Result<f64> {
    let (_, peak, lo, hi) = integration_window(params, tol)?;
    let integral = quad::integrate(|u| (log_integrand(params, u) - peak).exp(), lo, hi, tol)?;
    Ok(-(peak + integral.ln()))
}

/// Quadrature mean and variance of the normalized density.
pub fn gas_moments_oracle(params: &GasParams, tol: f64) -> Result<(f64, f64)> {
    let (_, peak, lo, hi) = integration_window(params, tol)?;
    let w = |u: f64, k: i32| (log_integrand(params, u) - peak).exp() * u.exp().powi(k);
    let z = quad::integrate(|u| w(u, 0), lo, hi, tol)?;
    let m1 = quad::integrate(|u| w(u, 1), lo, hi, tol)? / z;
    let m2 = quad::integrate(|u| w(u, 2), lo, hi, tol)? / z;
    Ok((m1, m2 - m1 * m1))
}

fn log_integrand(params: &GasParams, u: f64) -> f64 {
    let y = u.exp();
    if !(y > 0.0) || !y.is_finite() {
        return f64::NEG_INFINITY;
    }
    params.log_kernel(y) + u
}

/// Peak location/value of the log integrand and an interval outside of which
/// the integrand is below `peak × min(1e-12, tol/100)`.
fn integration_window(params: &GasParams, tol: f64) -> Result<(f64, f64, f64, f64)> {
    let h = |u: f64| log_integrand(params, u);
    let (start, step0) = match gas_gamma_approx(params) {
        Ok(g) => (g.mean().ln(), 1.0 / g.shape.max(1.0).sqrt()),
        Err(_) => (0.0, 0.5),
    };

    // bracket the maximum
    let (mut lo, mut mid, mut hi) = (start - step0, start, start + step0);
    let mut step = step0;
    for _ in 0..200 {
        let (flo, fmid, fhi) = (h(lo), h(mid), h(hi));
        if fmid >= flo && fmid >= fhi {
            break;
        }
        step *= 1.6;
        if flo > fhi {
            hi = mid;
            mid = lo;
            lo = mid - step;
        } else {
            lo = mid;
            mid = hi;
            hi = mid + step;
        }
    }
    if !(h(mid) >= h(lo) && h(mid) >= h(hi)) {
        return Err(Error::QuadratureNonConvergence("could not bracket the mode".into()));
    }

    // golden-section refinement of the peak
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - invphi * (b - a);
    let mut x2 = a + invphi * (b - a);
    let (mut f1, mut f2) = (h(x1), h(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 * (1.0 + mid.abs()) {
            break;
        }
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = h(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = h(x2);
        }
    }
    let peak_u = 0.5 * (a + b);
    let peak = h(peak_u).max(f1).max(f2);
    if !peak.is_finite() {
        return Err(Error::QuadratureNonConvergence("non-finite peak".into()));
    }

    let cutoff = peak + (1e-12f64).min(tol / 100.0).ln();
    let expand = |dir: f64| -> Result<f64> {
        let mut u = peak_u;
        let mut step = step0 * 0.5;
        for _ in 0..400 {
            u += dir * step;
            if h(u) < cutoff {
                return Ok(u);
            }
            step *= 1.3;
        }
        Err(Error::QuadratureNonConvergence("integrand does not decay".into()))
    };
    let lo = expand(-1.0)?;
    let hi = expand(1.0)?;
    Ok((peak_u, peak, lo, hi))
}

/// Draws from the (refined) gamma approximation. Deterministic given `seed`.
pub fn gas_sample(params: &GasParams, count: usize, seed: u64) -> Result<Vec<f64>> {
    let approx = gas_approximation(params)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(approx.sample_with(&mut rng, count))
}

/// Oracle probability that y < `y0`.
pub fn gas_mass_below_oracle(params: &GasParams, y0: f64, tol: f64) -> Result<f64> {
    let (_, peak, lo, hi) = integration_window(params, tol)?;
    let w = |u: f64| (log_integrand(params, u) - peak).exp();
    let z = quad::integrate(w, lo, hi, tol)?;
    let cut = y0.ln().min(hi);
    if cut <= lo {
        return Ok(0.0);
    }
    Ok(quad::integrate(w, lo, cut, tol)? / z)
}

/// Accuracy of the gamma approximation against quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasCheck {
    /// max |g(y) − f(y)/C| over a grid spanning ±10 sd around the mode.
    pub density_error: f64,
    /// The same, divided by the peak of the exact density.
    pub density_error_rel_peak: f64,
    /// |log C_approx − log C_oracle| / |log C_oracle|.
    pub log_norm_rel_error: f64,
    pub log_norm_abs_error: f64,
    pub refined: bool,
}

pub fn check_against_oracle(params: &GasParams, tol: f64) -> Result<GasCheck> {
    let (approx_c, g) = gas_log_norm_const_with_approx(params)?;
    let oracle_c = gas_log_norm_const_oracle(params, tol)?;
    let (mode, sd) = (g.mode().max(0.0), g.sd());
    let (lo, hi) = ((mode - 10.0 * sd).max(mode * 1e-3).max(f64::MIN_POSITIVE), mode + 10.0 * sd);
    let mut err: f64 = 0.0;
    let mut peak: f64 = 0.0;
    const GRID: usize = 4000;
    for k in 0..=GRID {
        let y = lo + (hi - lo) * k as f64 / GRID as f64;
        let exact = (params.log_kernel(y) + oracle_c).exp();
        peak = peak.max(exact);
        err = err.max((g.log_pdf(y).exp() - exact).abs());
    }
    Ok(GasCheck {
        density_error: err,
        density_error_rel_peak: err / peak,
        log_norm_rel_error: ((approx_c - oracle_c) / oracle_c).abs(),
        log_norm_abs_error: (approx_c - oracle_c).abs(),
        refined: g.refined,
    })
}

/// Shape posteriors of simulated genes: 1 to 3 classes of 3 to 30 arrays,
/// true α log-uniform on [10, 1000], expression levels log-uniform on
/// [20, 5000], prior d = α0 ∈ [0.5, 5]. Candidates with more than 0.1% of
/// their mass below y = 4 are redrawn.
pub fn microarray_sweep(count: usize, seed: u64) -> Result<Vec<GasParams>> {
    use rand::Rng as _;
    let mut out = Vec::with_capacity(count);
    let mut draw = 0u64;
    while out.len() < count {
        let mut r = rng::substream(seed, draw);
        draw += 1;
        let p = r.random_range(1..=3);
        let alpha = 10f64.powf(r.random_range(1.0..3.0));
        let d = r.random_range(0.5..5.0);
        let b = r.random_range(0.5..3.0);
        let mu = 10f64.powf(r.random_range(1.0..3.0));
        let level = 10f64.powf(r.random_range(1.3..3.7));
        let (mut a, mut s, mut log_prod) = (Vec::new(), Vec::new(), 0.0);
        for _ in 0..p {
            let j = r.random_range(3..=30);
            let lambda = level * 10f64.powf(r.random_range(-0.3..0.3));
            let mut sum = 0.0;
            for _ in 0..j {
                let x = rng::gamma(&mut r, alpha, alpha / lambda);
                sum += x;
                log_prod += x.ln();
            }
            a.push(j as f64);
            s.push(sum);
        }
        let params = GasParams::new(a, b, b / mu - log_prod, d, d * level, s)?;
        if gas_mass_below_oracle(&params, 4.0, 1e-8)? <= 1e-3 {
            out.push(params);
        }
    }
    Ok(out)
}
