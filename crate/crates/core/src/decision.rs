//! Gene lists with Bayesian FDR control, and assignment of declared genes to
//! expression patterns.

use crate::inference::PatternPosterior;

/// Outcome of the BFDR threshold rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    /// Largest declared v0, or None when nothing is declared.
    pub v0_cut: Option<f64>,
    pub declared: Vec<bool>,
    pub bfdr: f64,
}

/// Sorts genes by v0 (ties by index) and declares the longest prefix whose
/// running mean of v0 stays at or below `alpha`. Since the running mean of
/// an ascending sequence never decreases, the prefix is unique.
pub fn bfdr_threshold(v0: &[f64], alpha: f64) -> Threshold {
    let mut order: Vec<usize> = (0..v0.len()).collect();
    order.sort_by(|&i, &j| v0[i].total_cmp(&v0[j]).then(i.cmp(&j)));
    let mut sum = 0.0;
    let mut best = (0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        sum += v0[i];
        let mean = sum / (k + 1) as f64;
        if mean <= alpha {
            best = (k + 1, mean);
        } else {
            break;
        }
    }
    let mut declared = vec![false; v0.len()];
    for &i in &order[..best.0] {
        declared[i] = true;
    }
    Threshold {
        v0_cut: best.0.checked_sub(1).map(|k| v0[order[k]]),
        declared,
        bfdr: best.1,
    }
}

/// Undeclared genes get pattern 0; declared genes the most probable
/// non-null pattern, ties to the lowest index.
pub fn classify_genes(posterior: &PatternPosterior, declared: &[bool]) -> Vec<usize> {
    posterior
        .rows()
        .zip(declared)
        .map(|(v, &d)| {
            if !d || v.len() < 2 {
                return 0;
            }
            let mut best = 1;
            for l in 2..v.len() {
                if v[l] > v[best] {
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// Posterior expected false negative rate: mean of 1 − v0 over undeclared
/// genes, 0 if every gene is declared.
pub fn bfnr_estimate(v0: &[f64], declared: &[bool]) -> f64 {
    let (sum, count) = v0
        .iter()
        .zip(declared)
        .filter(|(_, &d)| !d)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + (1.0 - v), c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionResult {
    pub declared: Vec<bool>,
    pub assigned_pattern: Vec<usize>,
    /// t* on 1 − v0: a gene is declared when 1 − v0 ≥ t*. None when no gene
    /// is declared.
    pub threshold: Option<f64>,
    pub bfdr_estimate: f64,
    pub bfnr_estimate: f64,
}

impl DecisionResult {
    pub fn n_declared(&self) -> usize {
        self.declared.iter().filter(|&&d| d).count()
    }
}

/// Threshold rule followed by pattern assignment.
pub fn find_genes(posterior: &PatternPosterior, alpha: f64) -> DecisionResult {
    let v0 = posterior.null_probs();
    let t = bfdr_threshold(&v0, alpha);
    DecisionResult {
        assigned_pattern: classify_genes(posterior, &t.declared),
        threshold: t.v0_cut.map(|c| 1.0 - c),
        bfdr_estimate: t.bfdr,
        bfnr_estimate: bfnr_estimate(&v0, &t.declared),
        declared: t.declared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Every cut point k, prefix mean recomputed from scratch.
    fn exhaustive(v0: &[f64], alpha: f64) -> usize {
        let mut sorted = v0.to_vec();
        sorted.sort_by(f64::total_cmp);
        (0..=sorted.len())
            .filter(|&k| {
                k == 0 || {
                    let mut s = 0.0;
                    for v in &sorted[..k] {
                        s += v;
                    }
                    s / k as f64 <= alpha
                }
            })
            .max()
            .unwrap()
    }

    #[test]
    fn worked_example() {
        let t = bfdr_threshold(&[0.01, 0.02, 0.10, 0.40], 0.05);
        assert_eq!(t.declared, vec![true, true, true, false]);
        assert_relative_eq!(t.bfdr, 0.13 / 3.0, max_relative = 1e-15);
        assert_eq!(t.v0_cut, Some(0.10));
    }

    #[test]
    fn edge_cases() {
        let t = bfdr_threshold(&[0.2, 0.3], 0.05);
        assert_eq!(t.declared, vec![false, false]);
        assert_eq!((t.bfdr, t.v0_cut), (0.0, None));
        let t = bfdr_threshold(&[0.2, 0.9, 1.0], 1.0);
        assert!(t.declared.iter().all(|&d| d));
    }

    #[test]
    fn classify_examples() {
        let post = PatternPosterior::from_rows(vec![0.1, 0.3, 0.6, 0.10, 0.45, 0.45, 0.1, 0.3, 0.6], 3);
        assert_eq!(classify_genes(&post, &[true, true, false]), vec![2, 1, 0]);
    }

    #[test]
    fn bfnr_examples() {
        assert_relative_eq!(bfnr_estimate(&[0.9, 0.8], &[false, false]), 0.15, max_relative = 1e-15);
        assert_eq!(bfnr_estimate(&[0.9, 0.8], &[true, true]), 0.0);
        assert_eq!(bfnr_estimate(&[1.0, 1.0], &[false, false]), 0.0);
    }

    #[test]
    fn find_genes_invariants() {
        let post = PatternPosterior::from_rows(vec![0.01, 0.99, 0.5, 0.5, 0.03, 0.97], 2);
        let d = find_genes(&post, 0.05);
        for (decl, pat) in d.declared.iter().zip(&d.assigned_pattern) {
            assert_eq!(*decl, *pat != 0);
        }
        assert!(d.bfdr_estimate <= 0.05);
        assert_relative_eq!(d.threshold.unwrap(), 0.97);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(v0 in prop::collection::vec(0.0f64..=1.0, 0..60), alpha in 0.0f64..=1.0) {
            let t = bfdr_threshold(&v0, alpha);
            prop_assert_eq!(t.declared.iter().filter(|&&d| d).count(), exhaustive(&v0, alpha));
            if t.declared.iter().any(|&d| d) {
                prop_assert!(t.bfdr <= alpha);
            }
        }

        #[test]
        fn running_mean_is_monotone(v0 in prop::collection::vec(0.0f64..=1.0, 1..60)) {
            let mut s = v0.clone();
            s.sort_by(f64::total_cmp);
            let mut sum = 0.0;
            let means: Vec<f64> = s.iter().enumerate().map(|(k, v)| { sum += v; sum / (k + 1) as f64 }).collect();
            prop_assert!(means.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        }

        #[test]
        fn argmax_invariant_under_monotone_transform(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..20)) {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let squashed: Vec<f64> = flat.iter().map(|v| (3.0 * v).exp() / (1.0 + (3.0 * v).exp())).collect();
            let declared = vec![true; rows.len()];
            let a = classify_genes(&PatternPosterior::from_rows(flat, 4), &declared);
            let b = classify_genes(&PatternPosterior::from_rows(squashed, 4), &declared);
            prop_assert_eq!(a, b);
        }
    }
}
