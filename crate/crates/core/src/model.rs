//! Expression data, group labels, expression patterns and the per-gene
//! sufficient statistics every downstream computation is built on.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::special::CompensatedSum;

/// Strictly positive gene × array expression values on the original
/// (unlogged) scale, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    gene_ids: Vec<String>,
    array_ids: Vec<String>,
    values: Vec<f64>,
}

impl ExpressionMatrix {
    /// Validates a rectangular grid. Values are kept exactly as given.
    pub fn new(rows: Vec<Vec<f64>>, gene_ids: Vec<String>, array_ids: Vec<String>) -> Result<Self> {
        if rows.len() != gene_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} gene ids",
                rows.len(),
                gene_ids.len()
            )));
        }
        let ncol = array_ids.len();
        let mut values = Vec::with_capacity(rows.len() * ncol);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != ncol {
                return Err(Error::ShapeMismatch(format!(
                    "row for gene '{}' has {} values, expected {}",
                    gene_ids[i],
                    row.len(),
                    ncol
                )));
            }
            values.extend(row);
        }
        Self::from_flat(values, gene_ids, array_ids)
    }

    /// Same as [`ExpressionMatrix::new`] for an already flattened row-major grid.
    pub fn from_flat(values: Vec<f64>, gene_ids: Vec<String>, array_ids: Vec<String>) -> Result<Self> {
        let (n, ncol) = (gene_ids.len(), array_ids.len());
        if n == 0 {
            return Err(Error::ShapeMismatch("matrix has no genes".into()));
        }
        if ncol < 2 {
            return Err(Error::ShapeMismatch(format!("need at least 2 arrays, got {ncol}")));
        }
        if values.len() != n * ncol {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n} x {ncol} matrix",
                values.len()
            )));
        }
        check_unique(&gene_ids)?;
        check_unique(&array_ids)?;
        for (idx, &v) in values.iter().enumerate() {
            let (i, j) = (idx / ncol, idx % ncol);
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    gene: gene_ids[i].clone(),
                    array: array_ids[j].clone(),
                });
            }
            if v <= 0.0 {
                return Err(Error::NonPositiveValue {
                    gene: gene_ids[i].clone(),
                    array: array_ids[j].clone(),
                    value: v,
                });
            }
        }
        Ok(Self {
            gene_ids,
            array_ids,
            values,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_arrays(&self) -> usize {
        self.array_ids.len()
    }

    pub fn row(&self, gene: usize) -> &[f64] {
        let j = self.n_arrays();
        &self.values[gene * j..(gene + 1) * j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_arrays())
    }

    pub fn get(&self, gene: usize, array: usize) -> f64 {
        self.values[gene * self.n_arrays() + array]
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn array_ids(&self) -> &[String] {
        &self.array_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multiplies every value by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_flat(
            self.values.iter().map(|v| v * factor).collect(),
            self.gene_ids.clone(),
            self.array_ids.clone(),
        )
    }
}

/// Spelled-out alias kept for callers that think in terms of validation.
pub fn validate_expression_matrix(
    rows: Vec<Vec<f64>>,
    gene_ids: Vec<String>,
    array_ids: Vec<String>,
) -> Result<ExpressionMatrix> {
    ExpressionMatrix::new(rows, gene_ids, array_ids)
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// Group membership of each array. Labels are 0-based (`0..k`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    labels: Vec<usize>,
    names: Vec<String>,
}

impl GroupAssignment {
    /// Every group `0..k` must own at least one array and `k >= 2`.
    pub fn new(labels: Vec<usize>, names: Vec<String>) -> Result<Self> {
        let k = names.len();
        if k < 2 {
            return Err(Error::InvalidGroups(format!("need at least 2 groups, got {k}")));
        }
        let mut sizes = vec![0usize; k];
        for &z in &labels {
            if z >= k {
                return Err(Error::InvalidGroups(format!("label {z} out of range for {k} groups")));
            }
            sizes[z] += 1;
        }
        if let Some(g) = sizes.iter().position(|&c| c == 0) {
            return Err(Error::GroupEmpty(g));
        }
        Ok(Self { labels, names })
    }

    /// Groups named "1".."K".
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self::new(labels, (1..=k).map(|g| g.to_string()).collect())
    }

    /// `per_group` consecutive arrays for each of `k` groups.
    pub fn balanced(k: usize, per_group: usize) -> Result<Self> {
        Self::from_labels((0..k).flat_map(|g| std::iter::repeat(g).take(per_group)).collect())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_groups(&self) -> usize {
        self.names.len()
    }

    pub fn n_arrays(&self) -> usize {
        self.labels.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups()];
        for &z in &self.labels {
            sizes[z] += 1;
        }
        sizes
    }

    /// Array indices belonging to each group.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_groups()];
        for (j, &z) in self.labels.iter().enumerate() {
            out[z].push(j);
        }
        out
    }
}

/// A partition of the K groups into classes sharing a mean. Class codes are
/// canonical: they appear in first-use order starting at 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    classes: Vec<usize>,
    n_distinct: usize,
}

impl Pattern {
    /// Canonicalizes arbitrary codes by first-use relabeling.
    pub fn new(codes: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let classes = codes
            .iter()
            .map(|&c| match map.iter().find(|(from, _)| *from == c) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len();
                    map.push((c, to));
                    to
                }
            })
            .collect();
        Self {
            classes,
            n_distinct: map.len(),
        }
    }

    pub fn null(k: usize) -> Self {
        Self::new(&vec![0; k])
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn n_groups(&self) -> usize {
        self.classes.len()
    }

    /// Number of groups that are distinct under this pattern.
    pub fn n_distinct(&self) -> usize {
        self.n_distinct
    }

    pub fn is_null(&self) -> bool {
        self.n_distinct == 1
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let codes: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        f.write_str(&codes.join(" "))
    }
}

/// Parses whitespace-separated class codes for `k` groups.
pub fn parse_pattern(text: &str, k: usize) -> Result<Pattern> {
    let codes = text
        .split_whitespace()
        .map(|tok| tok.parse::<usize>().map_err(|_| Error::NonIntegerCode(tok.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if codes.len() != k {
        return Err(Error::WrongArity {
            expected: k,
            found: codes.len(),
        });
    }
    Ok(Pattern::new(&codes))
}

/// The hypotheses under consideration. Pattern 0 is always the null.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
}

impl PatternSet {
    pub fn new(patterns: Vec<Pattern>) -> Result<Self> {
        let first = patterns.first().ok_or(Error::FirstPatternNotNull)?;
        if !first.is_null() {
            return Err(Error::FirstPatternNotNull);
        }
        let k = first.n_groups();
        for (h, p) in patterns.iter().enumerate() {
            if p.n_groups() != k {
                return Err(Error::WrongArity {
                    expected: k,
                    found: p.n_groups(),
                });
            }
            if patterns[..h].contains(p) {
                return Err(Error::DuplicatePattern(h));
            }
        }
        Ok(Self { patterns })
    }

    /// The usual two-hypothesis setup for two groups: EE vs DE.
    pub fn two_group() -> Self {
        Self {
            patterns: vec![Pattern::new(&[0, 0]), Pattern::new(&[0, 1])],
        }
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn get(&self, h: usize) -> &Pattern {
        &self.patterns[h]
    }

    /// Number of hypotheses H.
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.patterns[0].n_groups()
    }
}

/// Sums and counts of one gene's observations for the distinct classes of a
/// single pattern, indexed by canonical class code.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub sums: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Per-gene sufficient statistics: the log-product of all observations and
/// class sums/counts under every pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneSuffStats {
    pub log_product: f64,
    pub per_pattern: Vec<ClassStats>,
}

impl GeneSuffStats {
    /// Works from raw 0-based labels so that single-group data is accepted.
    pub fn from_row(row: &[f64], labels: &[usize], patterns: &PatternSet) -> Self {
        let k = patterns.n_groups();
        let mut group_sums = vec![CompensatedSum::new(); k];
        let mut group_counts = vec![0usize; k];
        let mut log_product = CompensatedSum::new();
        for (&x, &z) in row.iter().zip(labels) {
            group_sums[z].add(x);
            group_counts[z] += 1;
            log_product.add(x.ln());
        }
        let per_pattern = patterns
            .patterns()
            .iter()
            .map(|p| {
                let mut sums = vec![CompensatedSum::new(); p.n_distinct()];
                let mut counts = vec![0usize; p.n_distinct()];
                for (g, &class) in p.classes().iter().enumerate() {
                    sums[class].add(group_sums[g].value());
                    counts[class] += group_counts[g];
                }
                ClassStats {
                    sums: sums.iter().map(CompensatedSum::value).collect(),
                    counts,
                }
            })
            .collect();
        Self {
            log_product: log_product.value(),
            per_pattern,
        }
    }

    pub fn pattern(&self, h: usize) -> &ClassStats {
        &self.per_pattern[h]
    }

    pub fn n_obs(&self) -> usize {
        self.per_pattern[0].counts.iter().sum()
    }
}

pub fn compute_sufficient_stats(row: &[f64], groups: &GroupAssignment, patterns: &PatternSet) -> GeneSuffStats {
    GeneSuffStats::from_row(row, groups.labels(), patterns)
}

/// Checks that groups and patterns agree with the matrix and each other.
pub fn check_design(matrix: &ExpressionMatrix, groups: &GroupAssignment, patterns: &PatternSet) -> Result<()> {
    if groups.n_arrays() != matrix.n_arrays() {
        return Err(Error::ShapeMismatch(format!(
            "{} group labels for {} arrays",
            groups.n_arrays(),
            matrix.n_arrays()
        )));
    }
    if patterns.n_groups() != groups.n_groups() {
        return Err(Error::WrongArity {
            expected: groups.n_groups(),
            found: patterns.n_groups(),
        });
    }
    Ok(())
}

/// Sufficient statistics for every gene, in row order.
pub fn all_sufficient_stats(
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
) -> Result<Vec<GeneSuffStats>> {
    use rayon::prelude::*;
    check_design(matrix, groups, patterns)?;
    Ok((0..matrix.n_genes())
        .into_par_iter()
        .map(|i| compute_sufficient_stats(matrix.row(i), groups, patterns))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn valid_matrix_is_accepted_unchanged() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.5, 5.5, 6.5]];
        let m = ExpressionMatrix::new(rows.clone(), ids("g", 2), ids("a", 3)).unwrap();
        assert_eq!(m.row(0), &rows[0][..]);
        assert_eq!(m.row(1), &rows[1][..]);
        assert_eq!(m.n_genes(), 2);
        assert_eq!(m.n_arrays(), 3);
    }

    #[test]
    fn zero_is_rejected_with_location() {
        let err = ExpressionMatrix::new(vec![vec![1.0, 0.0]], ids("g", 1), ids("a", 2)).unwrap_err();
        match err {
            Error::NonPositiveValue { gene, array, value } => {
                assert_eq!((gene.as_str(), array.as_str(), value), ("g0", "a1", 0.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_and_duplicates_and_shape() {
        let e = ExpressionMatrix::new(vec![vec![f64::NAN, 1.0]], ids("g", 1), ids("a", 2)).unwrap_err();
        assert!(matches!(e, Error::NonFiniteValue { .. }));
        let e = ExpressionMatrix::new(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec!["x".into(), "x".into()],
            ids("a", 2),
        )
        .unwrap_err();
        assert!(matches!(e, Error::DuplicateId(id) if id == "x"));
        let e = ExpressionMatrix::new(vec![vec![1.0, 1.0, 1.0]], ids("g", 1), ids("a", 2)).unwrap_err();
        assert!(matches!(e, Error::ShapeMismatch(_)));
        let e = ExpressionMatrix::new(vec![vec![1.0]], ids("g", 1), ids("a", 1)).unwrap_err();
        assert!(matches!(e, Error::ShapeMismatch(_)));
    }

    #[test]
    fn parse_pattern_examples() {
        let p = parse_pattern("0 0 0", 3).unwrap();
        assert_eq!((p.classes(), p.n_distinct()), (&[0, 0, 0][..], 1));
        let p = parse_pattern("0 1 1", 3).unwrap();
        assert_eq!((p.classes(), p.n_distinct()), (&[0, 1, 1][..], 2));
        let p = parse_pattern("1 0 0", 3).unwrap();
        assert_eq!(p.classes(), &[0, 1, 1]);
        assert!(matches!(parse_pattern("0 1", 3), Err(Error::WrongArity { expected: 3, found: 2 })));
        assert!(matches!(parse_pattern("0 x 1", 3), Err(Error::NonIntegerCode(_))));
        assert!(matches!(parse_pattern("0 -1 1", 3), Err(Error::NonIntegerCode(_))));
    }

    #[test]
    fn pattern_set_rules() {
        let null = Pattern::null(2);
        let de = Pattern::new(&[0, 1]);
        assert!(PatternSet::new(vec![null.clone(), de.clone()]).is_ok());
        assert!(matches!(PatternSet::new(vec![de.clone(), null.clone()]), Err(Error::FirstPatternNotNull)));
        assert!(matches!(
            PatternSet::new(vec![null, de.clone(), Pattern::new(&[1, 0])]),
            Err(Error::DuplicatePattern(2))
        ));
    }

    #[test]
    fn group_assignment_rules() {
        assert!(matches!(GroupAssignment::from_labels(vec![0, 0]), Err(Error::InvalidGroups(_))));
        assert!(matches!(
            GroupAssignment::new(vec![0, 0, 2], vec!["a".into(), "b".into(), "c".into()]),
            Err(Error::GroupEmpty(1))
        ));
        let g = GroupAssignment::balanced(3, 2).unwrap();
        assert_eq!(g.labels(), &[0, 0, 1, 1, 2, 2]);
        assert_eq!(g.group_sizes(), vec![2, 2, 2]);
    }

    #[test]
    fn single_group_stats() {
        let ps = PatternSet::new(vec![Pattern::null(1)]).unwrap();
        let st = GeneSuffStats::from_row(&[2.0, 4.0, 8.0], &[0, 0, 0], &ps);
        assert_relative_eq!(st.log_product, 64f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(st.log_product, 4.158883, epsilon = 1e-6);
        assert_eq!(st.pattern(0).sums, vec![14.0]);
        assert_eq!(st.pattern(0).counts, vec![3]);
    }

    #[test]
    fn three_group_stats() {
        let ps = PatternSet::new(vec![Pattern::null(3), Pattern::new(&[0, 1, 1])]).unwrap();
        let groups = GroupAssignment::from_labels(vec![0, 0, 1, 2]).unwrap();
        let st = compute_sufficient_stats(&[1.0, 2.0, 3.0, 4.0], &groups, &ps);
        assert_eq!(st.pattern(1).sums, vec![3.0, 7.0]);
        assert_eq!(st.pattern(1).counts, vec![2, 2]);
        assert_eq!(st.pattern(0).sums, vec![10.0]);
        assert_eq!(st.pattern(0).counts, vec![4]);
    }

    fn eq8_patterns() -> PatternSet {
        let lines = ["0 0 0 0", "0 1 1 1", "0 0 1 1", "0 0 0 1", "0 1 2 3"];
        PatternSet::new(lines.iter().map(|l| parse_pattern(l, 4).unwrap()).collect()).unwrap()
    }

    proptest! {
        #[test]
        fn pattern_totals_agree(row in prop::collection::vec(0.01f64..1e5, 8)) {
            let groups = GroupAssignment::balanced(4, 2).unwrap();
            let ps = eq8_patterns();
            let st = compute_sufficient_stats(&row, &groups, &ps);
            let total: f64 = st.pattern(0).sums[0];
            for cs in &st.per_pattern {
                let s: f64 = cs.sums.iter().sum();
                prop_assert!((s - total).abs() <= 1e-12 * total);
                prop_assert_eq!(cs.counts.iter().sum::<usize>(), 8);
            }
        }

        #[test]
        fn within_group_permutation_is_harmless(row in prop::collection::vec(0.01f64..1e5, 6), swap in 0usize..3) {
            let groups = GroupAssignment::balanced(3, 2).unwrap();
            let ps = PatternSet::new(vec![Pattern::null(3), Pattern::new(&[0, 1, 1]), Pattern::new(&[0, 1, 2])]).unwrap();
            let mut permuted = row.clone();
            permuted.swap(2 * swap, 2 * swap + 1);
            let a = compute_sufficient_stats(&row, &groups, &ps);
            let b = compute_sufficient_stats(&permuted, &groups, &ps);
            prop_assert!((a.log_product - b.log_product).abs() <= 1e-13 * a.log_product.abs().max(1.0));
            for (x, y) in a.per_pattern.iter().zip(&b.per_pattern) {
                prop_assert_eq!(&x.counts, &y.counts);
                for (s, t) in x.sums.iter().zip(&y.sums) {
                    prop_assert!((s - t).abs() <= 1e-14 * s);
                }
            }
        }

        #[test]
        fn canonicalization_is_relabeling_invariant(codes in prop::collection::vec(0usize..4, 1..7), shift in 1usize..50) {
            let p = Pattern::new(&codes);
            prop_assert_eq!(Pattern::new(p.classes()), p.clone());
            // any bijective relabeling, here c -> (c * 7 + shift)
            let relabeled: Vec<usize> = codes.iter().map(|c| c * 7 + shift).collect();
            prop_assert_eq!(Pattern::new(&relabeled), p);
        }
    }
}
