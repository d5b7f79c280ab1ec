//! Synthetic data: draws from the hierarchy, array bootstrap, and the
//! FDR/power/ROC bookkeeping used to score a gene list against the truth.
//! Also a Welch t-test with Benjamini–Hochberg adjustment as a reference.

use rand::Rng as _;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::inference::Hyper;
use crate::model::{ExpressionMatrix, GroupAssignment, PatternSet};
use crate::rng;

/// What generated a parametric data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// True pattern index per gene.
    pub delta: Vec<usize>,
    pub hyper: Hyper,
    pub alpha: Vec<f64>,
    /// One λ per class of the gene's pattern.
    pub lambda: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SimTruth {
    pub fn is_de(&self) -> Vec<bool> {
        self.delta.iter().map(|&d| d != 0).collect()
    }
}

/// Draws `n` genes with `per_group` arrays in each of the pattern set's
/// groups. Gene `i` uses its own substream, so the output does not depend on
/// thread count.
pub fn simulate_parametric(
    hyper: &Hyper,
    n: usize,
    per_group: usize,
    patterns: &PatternSet,
    seed: u64,
) -> Result<(ExpressionMatrix, GroupAssignment, SimTruth)> {
    hyper.validate()?;
    if hyper.pi().len() != patterns.len() {
        return Err(Error::InvalidParams(format!(
            "{} pattern probabilities for {} patterns",
            hyper.pi().len(),
            patterns.len()
        )));
    }
    let groups = GroupAssignment::balanced(patterns.n_groups(), per_group)?;
    let shape = hyper.shape_prior();
    let mixture = hyper.mixture();
    let rho: Vec<f64> = mixture.iter().map(|c| c.1).collect();

    let genes: Vec<(usize, f64, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(seed, i as u64);
            let delta = rng::categorical(&mut r, hyper.pi());
            let alpha = rng::gamma(&mut r, shape.beta, shape.beta / shape.mu);
            let comp = mixture[if rho.len() == 1 { 0 } else { rng::categorical(&mut r, &rho) }].0;
            let pattern = patterns.get(delta);
            let lambda: Vec<f64> = (0..pattern.n_distinct())
                .map(|_| rng::inv_gamma(&mut r, comp.alpha0, comp.scale()))
                .collect();
            let row = groups
                .labels()
                .iter()
                .map(|&z| {
                    let l = lambda[pattern.classes()[z]];
                    rng::gamma(&mut r, alpha, alpha / l)
                })
                .collect();
            (delta, alpha, lambda, row)
        })
        .collect();

    let mut truth = SimTruth {
        delta: Vec::with_capacity(n),
        hyper: hyper.clone(),
        alpha: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        seed,
    };
    let mut values = Vec::with_capacity(n * groups.n_arrays());
    for (delta, alpha, lambda, row) in genes {
        truth.delta.push(delta);
        truth.alpha.push(alpha);
        truth.lambda.push(lambda);
        values.extend(row);
    }
    let gene_ids = (0..n).map(|i| format!("gene{}", i + 1)).collect();
    let array_ids = array_names(&groups);
    let matrix = ExpressionMatrix::from_flat(values, gene_ids, array_ids)?;
    Ok((matrix, groups, truth))
}

fn array_names(groups: &GroupAssignment) -> Vec<String> {
    let mut seen = vec![0usize; groups.n_groups()];
    groups
        .labels()
        .iter()
        .map(|&z| {
            seen[z] += 1;
            format!("{}_{}", groups.names()[z], seen[z])
        })
        .collect()
}

/// Source column drawn for every output column: `ee[j]` from all arrays,
/// `de[j]` from the arrays of column j's group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapIndices {
    pub ee: Vec<usize>,
    pub de: Vec<usize>,
}

pub fn bootstrap_indices(groups: &GroupAssignment, seed: u64) -> Result<BootstrapIndices> {
    let members = groups.members();
    if let Some(k) = members.iter().position(Vec::is_empty) {
        return Err(Error::GroupEmpty(k));
    }
    let j = groups.n_arrays();
    let mut r = rng::substream(seed, 0);
    let mut ee = Vec::with_capacity(j);
    let mut de = Vec::with_capacity(j);
    for &z in groups.labels() {
        ee.push(r.random_range(0..j));
        let pool = &members[z];
        de.push(pool[r.random_range(0..pool.len())]);
    }
    Ok(BootstrapIndices { ee, de })
}

/// Resamples arrays with replacement. All EE genes share one source column
/// per output column, as do all DE genes (within the column's group), so
/// gene–gene correlation inside each set is kept.
pub fn simulate_bootstrap(
    source: &ExpressionMatrix,
    groups: &GroupAssignment,
    de: &[bool],
    seed: u64,
) -> Result<ExpressionMatrix> {
    if groups.n_arrays() != source.n_arrays() {
        return Err(Error::ShapeMismatch(format!(
            "{} group labels for {} arrays",
            groups.n_arrays(),
            source.n_arrays()
        )));
    }
    if de.len() != source.n_genes() {
        return Err(Error::ShapeMismatch(format!("{} DE flags for {} genes", de.len(), source.n_genes())));
    }
    let idx = bootstrap_indices(groups, seed)?;
    let values = source
        .rows()
        .zip(de)
        .flat_map(|(row, &is_de)| {
            let cols = if is_de { &idx.de } else { &idx.ee };
            cols.iter().map(move |&c| row[c])
        })
        .collect();
    ExpressionMatrix::from_flat(values, source.gene_ids().to_vec(), source.array_ids().to_vec())
}

/// Realized FDR and power of a gene list (nonzero pattern = declared).
pub fn evaluate_fdr_power(assigned: &[usize], delta: &[usize]) -> Result<(f64, f64)> {
    if assigned.len() != delta.len() {
        return Err(Error::ShapeMismatch("assignments and truth differ in length".into()));
    }
    let mut declared = 0usize;
    let mut false_pos = 0usize;
    let mut true_pos = 0usize;
    let mut de = 0usize;
    for (&a, &d) in assigned.iter().zip(delta) {
        de += (d != 0) as usize;
        if a != 0 {
            declared += 1;
            if d == 0 {
                false_pos += 1;
            } else {
                true_pos += 1;
            }
        }
    }
    if de == 0 {
        return Err(Error::NoTrueDe);
    }
    let fdr = if declared == 0 { 0.0 } else { false_pos as f64 / declared as f64 };
    Ok((fdr, true_pos as f64 / de as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// (realized FDR, realized power) after declaring the first k genes,
    /// k = 0..=n.
    pub points: Vec<(f64, f64)>,
    /// ∫ power d(FDR) by trapezoids, in sweep order.
    pub auc: f64,
    /// Smallest and largest FDR reached.
    pub fdr_range: (f64, f64),
}

/// Sweeps declarations in v0-ascending order (ties by index).
pub fn roc_curve(v0: &[f64], delta: &[usize]) -> Result<RocCurve> {
    if v0.len() != delta.len() {
        return Err(Error::ShapeMismatch("v0 and truth differ in length".into()));
    }
    let n_de = delta.iter().filter(|&&d| d != 0).count();
    if n_de == 0 {
        return Err(Error::NoTrueDe);
    }
    let mut order: Vec<usize> = (0..v0.len()).collect();
    order.sort_by(|&i, &j| v0[i].total_cmp(&v0[j]).then(i.cmp(&j)));
    let mut points = Vec::with_capacity(v0.len() + 1);
    points.push((0.0, 0.0));
    let mut tp = 0usize;
    for (k, &i) in order.iter().enumerate() {
        tp += (delta[i] != 0) as usize;
        let declared = k + 1;
        points.push(((declared - tp) as f64 / declared as f64, tp as f64 / n_de as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    let fdr_range = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    Ok(RocCurve {
        points,
        auc,
        fdr_range,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TTestResult {
    pub t: Vec<f64>,
    pub df: Vec<f64>,
    pub p_values: Vec<f64>,
    pub declared: Vec<bool>,
}

/// Welch statistic, Welch–Satterthwaite df and two-sided p-value. A gene
/// with no variance in either group gets t = 0, p = 1.
pub fn welch_t(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let (ua, ub) = (va / na, vb / nb);
    let se2 = ua + ub;
    if !(se2 > 0.0) {
        return (0.0, na + nb - 2.0, 1.0);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (ua * ua / (na - 1.0) + ub * ub / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    (t, df, p)
}

/// Benjamini–Hochberg step-up at level `alpha`.
pub fn benjamini_hochberg(p: &[f64], alpha: f64) -> Vec<bool> {
    let n = p.len();
    let mut declared = vec![false; n];
    if !(alpha > 0.0) {
        return declared;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let cut = (1..=n).rev().find(|&k| p[order[k - 1]] <= k as f64 * alpha / n as f64);
    if let Some(k) = cut {
        for &i in &order[..k] {
            declared[i] = true;
        }
    }
    declared
}

/// Two-group Welch t-test per gene with BH control (meant for log-scale
/// data).
pub fn baseline_ttest_bh(matrix: &ExpressionMatrix, groups: &GroupAssignment, alpha: f64) -> Result<TTestResult> {
    if groups.n_groups() != 2 {
        return Err(Error::InvalidGroups(format!("need 2 groups, found {}", groups.n_groups())));
    }
    if groups.n_arrays() != matrix.n_arrays() {
        return Err(Error::ShapeMismatch("group labels do not match arrays".into()));
    }
    let members = groups.members();
    if let Some(k) = members.iter().position(|m| m.len() < 2) {
        return Err(Error::TooFewReplicates(format!(
            "group '{}' has {} array(s)",
            groups.names()[k],
            members[k].len()
        )));
    }
    let tests: Vec<(f64, f64, f64)> = matrix
        .rows()
        .map(|row| {
            let a: Vec<f64> = members[0].iter().map(|&j| row[j]).collect();
            let b: Vec<f64> = members[1].iter().map(|&j| row[j]).collect();
            welch_t(&a, &b)
        })
        .collect();
    let p_values: Vec<f64> = tests.iter().map(|t| t.2).collect();
    Ok(TTestResult {
        t: tests.iter().map(|t| t.0).collect(),
        df: tests.iter().map(|t| t.1).collect(),
        declared: benjamini_hochberg(&p_values, alpha),
        p_values,
    })
}
