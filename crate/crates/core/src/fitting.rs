//! Empirical Bayes fitting of the hyperparameters by generalized EM.
//!
//! Each iteration computes the posterior responsibilities of every
//! (pattern, cluster) pair, updates π and ρ in closed form, and improves the
//! remaining parameters by Nelder–Mead on the expected complete-data log
//! marginal, in log-parameter space. An iteration that lowers the total log
//! marginal is rejected and ends the run.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use log::{debug, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{
    gene_log_joint, gene_pattern_log_marginal, mean_cv, GaGaHyper, Hyper, MiGaGaHyper, PriorComponent, ShapePrior,
};
use crate::model::{all_sufficient_stats, ExpressionMatrix, GeneSuffStats, GroupAssignment, PatternSet};
use crate::special::{log_sum_exp, pairwise_sum};

/// Responsibilities below this are left out of the M-step objective.
const WEIGHT_FLOOR: f64 = 1e-12;
/// A cluster holding less than this fraction of the genes is reported empty.
const EMPTY_CLUSTER_MASS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    GaGa,
    MiGaGa { components: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub model: ModelKind,
    pub max_iterations: usize,
    /// Stop once the relative gain in total log marginal drops below this.
    pub rel_loglik_tol: f64,
    /// Nelder–Mead iterations per M-step.
    pub m_step_iterations: u64,
    /// Dirichlet prior weight r_m on the mixture proportions.
    pub dirichlet_weight: f64,
    /// Recorded with the fit; EM itself draws no random numbers.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::GaGa,
            max_iterations: 200,
            rel_loglik_tol: 1e-6,
            m_step_iterations: 60,
            dirichlet_weight: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub hyper: Hyper,
    /// Total log marginal at the start and after every accepted iteration.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Indices of clusters that ended with (numerically) no genes.
    pub empty_clusters: Vec<usize>,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

/// Σ_i log Σ_l π_l f(x_i | l).
pub fn total_log_marginal(
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
    hyper: &Hyper,
) -> Result<f64> {
    total_log_marginal_stats(&all_sufficient_stats(matrix, groups, patterns)?, hyper)
}

pub fn total_log_marginal_stats(stats: &[GeneSuffStats], hyper: &Hyper) -> Result<f64> {
    hyper.validate()?;
    let per_gene = stats
        .par_iter()
        .map(|st| gene_log_joint(st, hyper).map(|l| log_sum_exp(&l)))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&per_gene))
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn winsorize(x: &mut [f64], frac: f64) {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((n as f64) * frac) as usize;
    let (lo, hi) = (sorted[k.min(n - 1)], sorted[(n - 1).saturating_sub(k)]);
    x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

/// Moment match of Ga(shape, rate = shape/mean) to a sample.
fn gamma_moments(x: &[f64], max_shape: f64) -> Result<(f64, f64)> {
    if x.len() < 2 {
        return Err(Error::DegenerateData("fewer than two usable genes".into()));
    }
    let (mean, var) = moments(x);
    if !(var > 0.0) || !(mean > 0.0) {
        return Err(Error::DegenerateData("no spread across genes".into()));
    }
    Ok(((mean * mean / var).clamp(0.01, max_shape), mean))
}

/// Method-of-moments starting values. The shape prior is matched to the
/// reciprocal squared within-group CVs (1/CV² ≈ α), the mean prior to the
/// reciprocal gene means (1/λ ~ Ga(α0, α0/ν)). For a mixture, genes are
/// split into equal slices by mean and each slice is matched separately.
pub fn init_hyperparams(
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
    model: ModelKind,
) -> Result<Hyper> {
    init_hyperparams_with(matrix, groups, patterns, model, 1.0)
}

fn init_hyperparams_with(
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
    model: ModelKind,
    dirichlet_weight: f64,
) -> Result<Hyper> {
    let diag: Vec<_> = matrix
        .rows()
        .map(|r| mean_cv(r, groups.labels(), groups.n_groups()))
        .collect();
    let mut inv_cv2: Vec<f64> = diag
        .iter()
        .filter_map(|d| d.cv)
        .filter(|&cv| cv > 0.0)
        .map(|cv| 1.0 / (cv * cv))
        .collect();
    if inv_cv2.len() < 2 {
        return Err(Error::DegenerateData("no gene has within-group variation".into()));
    }
    winsorize(&mut inv_cv2, 0.01);
    let (beta, mu) = gamma_moments(&inv_cv2, 1e4)?;

    let h = patterns.len();
    let pi = vec![1.0 / h as f64; h];
    let mut inv_means: Vec<f64> = diag.iter().map(|d| 1.0 / d.mean).collect();
    winsorize(&mut inv_means, 0.01);
    match model {
        ModelKind::GaGa => {
            let (alpha0, nu) = gamma_moments(&inv_means, 1e6)?;
            Ok(GaGaHyper::new(alpha0, nu, beta, mu, pi)?.into())
        }
        ModelKind::MiGaGa { components } => {
            if components == 0 {
                return Err(Error::InvalidParams("need at least one component".into()));
            }
            inv_means.sort_by(f64::total_cmp);
            let n = inv_means.len();
            let comps = (0..components)
                .map(|m| {
                    let slice = &inv_means[m * n / components..(m + 1) * n / components];
                    gamma_moments(slice, 1e6).map(|(alpha0, nu)| PriorComponent { alpha0, nu })
                })
                .collect::<Result<Vec<_>>>()?;
            let rho = vec![1.0 / components as f64; components];
            let weights = vec![dirichlet_weight; components];
            Ok(MiGaGaHyper::new(comps, rho, weights, beta, mu, pi)?.into())
        }
    }
}

/// Posterior responsibilities under the current hyperparameters.
struct EStep {
    total: f64,
    /// n × H × M.
    w: Vec<f64>,
}

fn e_step(stats: &[GeneSuffStats], hyper: &Hyper) -> Result<EStep> {
    let per_gene = stats
        .par_iter()
        .map(|st| {
            let logs = gene_log_joint(st, hyper)?;
            let total = log_sum_exp(&logs);
            let w: Vec<f64> = logs
                .iter()
                .map(|&x| if x == f64::NEG_INFINITY { 0.0 } else { (x - total).exp() })
                .collect();
            Ok((total, w))
        })
        .collect::<Result<Vec<_>>>()?;
    let totals: Vec<f64> = per_gene.iter().map(|g| g.0).collect();
    let total = pairwise_sum(&totals);
    if !total.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(EStep {
        total,
        w: per_gene.into_iter().flat_map(|g| g.1).collect(),
    })
}

/// Free parameters of the M-step, on the log scale:
/// [log α0_1, log ν_1, ..., log α0_M, log ν_M, log β, log μ].
fn pack(comps: &[PriorComponent], shape: ShapePrior) -> Vec<f64> {
    let mut theta: Vec<f64> = comps.iter().flat_map(|c| [c.alpha0.ln(), c.nu.ln()]).collect();
    theta.push(shape.beta.ln());
    theta.push(shape.mu.ln());
    theta
}

fn unpack(theta: &[f64]) -> (Vec<PriorComponent>, ShapePrior) {
    let m = (theta.len() - 2) / 2;
    let comps = (0..m)
        .map(|k| PriorComponent {
            alpha0: theta[2 * k].exp(),
            nu: theta[2 * k + 1].exp(),
        })
        .collect();
    let shape = ShapePrior {
        beta: theta[2 * m].exp(),
        mu: theta[2 * m + 1].exp(),
    };
    (comps, shape)
}

struct ExpectedLogMarginal<'a> {
    stats: &'a [GeneSuffStats],
    w: &'a [f64],
    n_patterns: usize,
}

impl ExpectedLogMarginal<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        let (comps, shape) = unpack(theta);
        if comps.iter().any(|c| !(c.alpha0.is_finite() && c.nu.is_finite() && c.alpha0 > 0.0 && c.nu > 0.0))
            || !(shape.beta > 0.0 && shape.mu > 0.0 && shape.beta.is_finite() && shape.mu.is_finite())
        {
            return Err(Error::NonFiniteObjective);
        }
        let m = comps.len();
        let per_gene = self
            .stats
            .par_iter()
            .enumerate()
            .map(|(i, st)| {
                let w = &self.w[i * self.n_patterns * m..(i + 1) * self.n_patterns * m];
                let mut terms = Vec::with_capacity(w.len());
                for l in 0..self.n_patterns {
                    for (k, &comp) in comps.iter().enumerate() {
                        let wi = w[l * m + k];
                        if wi > WEIGHT_FLOOR {
                            terms.push(wi * gene_pattern_log_marginal(st, l, comp, shape)?);
                        }
                    }
                }
                Ok(pairwise_sum(&terms))
            })
            .collect::<Result<Vec<_>>>()?;
        let q = pairwise_sum(&per_gene);
        if q.is_finite() {
            Ok(q)
        } else {
            Err(Error::NonFiniteObjective)
        }
    }
}

impl CostFunction for ExpectedLogMarginal<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        // infeasible points (integrability, failed refinement) are walls
        Ok(self.value(theta).map(|q| -q).unwrap_or(f64::INFINITY))
    }
}

fn m_step(objective: ExpectedLogMarginal<'_>, start: Vec<f64>, iterations: u64) -> Result<Vec<f64>> {
    let start_cost = -objective.value(&start)?;
    let mut simplex = vec![start.clone()];
    for k in 0..start.len() {
        let mut v = start.clone();
        v[k] += 0.1;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-10)
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    let res = Executor::new(objective, solver)
        .configure(|s| s.max_iters(iterations))
        .run()
        .map_err(|e| Error::InvalidParams(format!("M-step optimizer: {e}")))?;
    let state = res.state();
    match (&state.best_param, state.best_cost) {
        (Some(p), c) if c <= start_cost => Ok(p.clone()),
        _ => Ok(start),
    }
}

fn build_hyper(template: &Hyper, theta: &[f64], pi: Vec<f64>, rho: Vec<f64>) -> Result<Hyper> {
    let (comps, shape) = unpack(theta);
    Ok(match template {
        Hyper::GaGa(_) => GaGaHyper::new(comps[0].alpha0, comps[0].nu, shape.beta, shape.mu, pi)?.into(),
        Hyper::MiGaGa(h) => {
            MiGaGaHyper::new(comps, rho, h.dirichlet_weights.clone(), shape.beta, shape.mu, pi)?.into()
        }
    })
}

fn components_of(hyper: &Hyper) -> Vec<PriorComponent> {
    hyper.mixture().into_iter().map(|c| c.0).collect()
}

/// Runs EM from `start` on precomputed sufficient statistics.
pub fn em_fit_from(stats: &[GeneSuffStats], start: Hyper, config: &FitConfig) -> Result<FitResult> {
    start.validate()?;
    if stats.is_empty() {
        return Err(Error::DegenerateData("no genes".into()));
    }
    let n = stats.len() as f64;
    let h = start.pi().len();
    let mut hyper = start;
    let mut current = e_step(stats, &hyper)?;
    let mut trace = vec![current.total];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        let m = hyper.n_components();
        let mut pi = vec![0.0; h];
        let mut mass = vec![0.0; m];
        for gene in current.w.chunks(h * m) {
            for l in 0..h {
                for k in 0..m {
                    pi[l] += gene[l * m + k];
                    mass[k] += gene[l * m + k];
                }
            }
        }
        pi.iter_mut().for_each(|p| *p /= n);
        let total_pi: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total_pi);
        let rho = match &hyper {
            Hyper::GaGa(_) => vec![1.0],
            Hyper::MiGaGa(mh) => {
                let raw: Vec<f64> = mass
                    .iter()
                    .zip(&mh.dirichlet_weights)
                    .map(|(&s, &r)| (s + r - 1.0).max(0.0))
                    .collect();
                let total: f64 = raw.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::AllClustersPruned);
                }
                raw.iter().map(|x| x / total).collect()
            }
        };

        let theta0 = pack(&components_of(&hyper), hyper.shape_prior());
        let objective = ExpectedLogMarginal {
            stats,
            w: &current.w,
            n_patterns: h,
        };
        let theta = m_step(objective, theta0, config.m_step_iterations)?;
        let candidate = build_hyper(&hyper, &theta, pi, rho)?;
        let next = e_step(stats, &candidate)?;
        iterations += 1;
        if next.total < current.total {
            debug!("EM iteration {iterations} lowered the log marginal; stopping");
            converged = true;
            break;
        }
        let gain = (next.total - current.total) / current.total.abs().max(f64::MIN_POSITIVE);
        hyper = candidate;
        current = next;
        trace.push(current.total);
        debug!("EM iteration {iterations}: log marginal {}", current.total);
        if gain < config.rel_loglik_tol {
            converged = true;
            break;
        }
    }

    let m = hyper.n_components();
    let mut mass = vec![0.0; m];
    for gene in current.w.chunks(h * m) {
        for (idx, &w) in gene.iter().enumerate() {
            mass[idx % m] += w;
        }
    }
    let empty_clusters: Vec<usize> = (0..m).filter(|&k| mass[k] < EMPTY_CLUSTER_MASS * n).collect();
    if !empty_clusters.is_empty() && m > 1 {
        warn!("clusters {empty_clusters:?} hold no genes");
    }
    Ok(FitResult {
        hyper,
        loglik_trace: trace,
        converged,
        iterations,
        empty_clusters,
    })
}

/// Full fit: sufficient statistics, moment initialization, EM.
pub fn em_fit(
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
    config: &FitConfig,
) -> Result<FitResult> {
    let stats = all_sufficient_stats(matrix, groups, patterns)?;
    let start = init_hyperparams_with(matrix, groups, patterns, config.model, config.dirichlet_weight)?;
    em_fit_from(&stats, start, config)
}

pub fn em_fit_gaga(
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
    config: &FitConfig,
) -> Result<FitResult> {
    let config = FitConfig {
        model: ModelKind::GaGa,
        ..config.clone()
    };
    em_fit(matrix, groups, patterns, &config)
}

pub fn em_fit_migaga(
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
    components: usize,
    config: &FitConfig,
) -> Result<FitResult> {
    let config = FitConfig {
        model: ModelKind::MiGaGa { components },
        ..config.clone()
    };
    em_fit(matrix, groups, patterns, &config)
}

/// Drops components whose weight is below `min_weight` and renormalizes.
pub fn prune_clusters(hyper: &MiGaGaHyper, min_weight: f64) -> Result<MiGaGaHyper> {
    if !(0.0..1.0).contains(&min_weight) {
        return Err(Error::InvalidParams(format!("pruning threshold {min_weight} outside [0, 1)")));
    }
    let keep: Vec<usize> = (0..hyper.n_components()).filter(|&k| hyper.rho[k] >= min_weight).collect();
    if keep.is_empty() {
        return Err(Error::AllClustersPruned);
    }
    let total: f64 = keep.iter().map(|&k| hyper.rho[k]).sum();
    MiGaGaHyper::new(
        keep.iter().map(|&k| hyper.components[k]).collect(),
        keep.iter().map(|&k| hyper.rho[k] / total).collect(),
        keep.iter().map(|&k| hyper.dirichlet_weights[k]).collect(),
        hyper.beta,
        hyper.mu,
        hyper.pi.clone(),
    )
}

/// Free parameter count of a MiGaGa model with `m` components and `h`
/// patterns.
pub fn parameter_count(m: usize, h: usize) -> usize {
    2 * m + 2 + (h - 1) + (m - 1)
}

pub fn bic(loglik: f64, m: usize, h: usize, n_genes: usize) -> f64 {
    -2.0 * loglik + parameter_count(m, h) as f64 * (n_genes as f64).ln()
}

#[derive(Debug)]
pub struct BicSelection {
    /// (M, fit, BIC) for every candidate.
    pub candidates: Vec<(usize, FitResult, f64)>,
    /// Candidates whose fit failed; they take no part in the selection.
    pub failures: Vec<(usize, Error)>,
    pub best: usize,
}

/// Fits MiGaGa for M = 1..=max_components and picks the lowest BIC; ties go
/// to the smaller M.
pub fn bic_select(
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
    max_components: usize,
    config: &FitConfig,
) -> Result<BicSelection> {
    let stats = all_sufficient_stats(matrix, groups, patterns)?;
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for m in 1..=max_components {
        let model = ModelKind::MiGaGa { components: m };
        let fit = init_hyperparams_with(matrix, groups, patterns, model, config.dirichlet_weight)
            .and_then(|start| em_fit_from(&stats, start, &FitConfig { model, ..config.clone() }));
        match fit {
            Ok(fit) => {
                let score = bic(fit.loglik(), m, patterns.len(), matrix.n_genes());
                candidates.push((m, fit, score));
            }
            Err(e) => {
                warn!("M = {m} fit failed: {e}");
                failures.push((m, e));
            }
        }
    }
    let best = candidates
        .iter()
        .fold(None::<(usize, f64)>, |acc, (m, _, b)| match acc {
            Some((_, best)) if best <= *b => acc,
            _ => Some((*m, *b)),
        })
        .map(|x| x.0)
        .ok_or_else(|| match failures.pop() {
            Some((_, e)) => e,
            None => Error::InvalidParams("max_components must be at least 1".into()),
        })?;
    Ok(BicSelection {
        candidates,
        failures,
        best,
    })
}
