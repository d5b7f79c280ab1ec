//! Tab-separated inputs and outputs, and the JSON fit file.
//!
//! Numbers are written with Rust's shortest round-trip formatting, which
//! never depends on locale.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decision::DecisionResult;
use crate::error::{Error, Result};
use crate::fitting::FitResult;
use crate::inference::{FoldChange, Hyper, PatternPosterior};
use crate::model::{parse_pattern, ExpressionMatrix, GroupAssignment, Pattern, PatternSet};
use crate::simulation::{RocCurve, SimTruth};

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Non-empty lines with their 1-based numbers, `\r` stripped.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses a matrix with a header row (`gene_id`, then array ids) and one row
/// per gene. `offset` is added to every value before validation.
pub fn parse_expression_tsv(text: &str, offset: f64) -> Result<ExpressionMatrix> {
    let mut it = lines(text);
    let (_, header) = it.next().ok_or_else(|| parse_err(1, 1, "empty file"))?;
    let array_ids: Vec<String> = header.split('\t').skip(1).map(str::to_owned).collect();
    let width = array_ids.len();
    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    for (line, row) in it {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != width + 1 {
            return Err(parse_err(
                line,
                fields.len().min(width + 1) + 1,
                format!("expected {} fields, found {}", width + 1, fields.len()),
            ));
        }
        gene_ids.push(fields[0].to_owned());
        for (col, f) in fields.iter().enumerate().skip(1) {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(line, col + 1, format!("'{f}' is not a number")))?;
            values.push(v + offset);
        }
    }
    ExpressionMatrix::from_flat(values, gene_ids, array_ids)
}

pub fn load_expression_tsv(path: &Path, offset: f64) -> Result<ExpressionMatrix> {
    parse_expression_tsv(&fs::read_to_string(path)?, offset)
}

/// Parses `array_id<TAB>label` lines (an optional `array_id` header is
/// skipped). Labels become group indices in order of first appearance, and
/// the assignment follows the order of `array_ids`.
pub fn parse_groups_tsv(text: &str, array_ids: &[String]) -> Result<GroupAssignment> {
    let position: HashMap<&str, usize> = array_ids.iter().enumerate().map(|(j, a)| (a.as_str(), j)).collect();
    let mut label_of: Vec<Option<usize>> = vec![None; array_ids.len()];
    let mut names: Vec<String> = Vec::new();
    for (n, (line, row)) in lines(text).enumerate() {
        let fields: Vec<&str> = row.split('\t').map(str::trim).collect();
        if n == 0 && fields[0] == "array_id" {
            continue;
        }
        if fields.len() != 2 {
            return Err(parse_err(line, fields.len().min(2) + 1, "expected array_id and group label"));
        }
        let j = *position
            .get(fields[0])
            .ok_or_else(|| Error::UnknownArray(fields[0].to_owned()))?;
        if label_of[j].is_some() {
            return Err(Error::DuplicateArray(fields[0].to_owned()));
        }
        let k = match names.iter().position(|g| g == fields[1]) {
            Some(k) => k,
            None => {
                names.push(fields[1].to_owned());
                names.len() - 1
            }
        };
        label_of[j] = Some(k);
    }
    let labels = label_of
        .iter()
        .zip(array_ids)
        .map(|(l, a)| l.ok_or_else(|| Error::MissingArray(a.clone())))
        .collect::<Result<Vec<_>>>()?;
    GroupAssignment::new(labels, names)
}

pub fn load_groups_tsv(path: &Path, array_ids: &[String]) -> Result<GroupAssignment> {
    parse_groups_tsv(&fs::read_to_string(path)?, array_ids)
}

/// One pattern per line as K whitespace-separated codes; `#` starts a
/// comment line.
pub fn parse_patterns(text: &str, k: usize) -> Result<PatternSet> {
    let patterns = lines(text)
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .map(|(_, l)| parse_pattern(l, k))
        .collect::<Result<Vec<_>>>()?;
    PatternSet::new(patterns)
}

pub fn load_patterns_file(path: &Path, k: usize) -> Result<PatternSet> {
    parse_patterns(&fs::read_to_string(path)?, k)
}

pub const FIT_FORMAT_VERSION: u32 = 1;

/// Persisted fit: everything `test` needs to score new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub format_version: u32,
    pub hyper: Hyper,
    /// Class code of every group, per pattern.
    pub patterns: Vec<Vec<usize>>,
    /// Group labels in index order.
    pub group_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub seed: u64,
}

impl FitFile {
    pub fn new(fit: &FitResult, patterns: &PatternSet, groups: &GroupAssignment, seed: u64) -> Self {
        Self {
            format_version: FIT_FORMAT_VERSION,
            hyper: fit.hyper.clone(),
            patterns: patterns.patterns().iter().map(|p| p.classes().to_vec()).collect(),
            group_names: groups.names().to_vec(),
            converged: fit.converged,
            iterations: fit.iterations,
            loglik_trace: fit.loglik_trace.clone(),
            seed,
        }
    }

    pub fn pattern_set(&self) -> Result<PatternSet> {
        PatternSet::new(self.patterns.iter().map(|c| Pattern::new(c)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        match probe.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FIT_FORMAT_VERSION) => {}
            Some(v) => return Err(Error::FitFormat(format!("version {v}, expected {FIT_FORMAT_VERSION}"))),
            None => return Err(Error::FitFormat("missing format_version".into())),
        }
        let f: FitFile = serde_json::from_value(probe)?;
        f.hyper.validate()?;
        if f.patterns.len() != f.hyper.pi().len() {
            return Err(Error::FitFormat("pattern count does not match pi".into()));
        }
        f.pattern_set()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Per-gene results: posterior columns, call, and posterior mean expression
/// per group with fold changes against the first group.
pub fn write_results_tsv<W: Write>(
    mut out: W,
    matrix: &ExpressionMatrix,
    groups: &GroupAssignment,
    patterns: &PatternSet,
    posterior: &PatternPosterior,
    decision: &DecisionResult,
    fold_changes: &[FoldChange],
) -> Result<()> {
    let names = groups.names();
    let mut header = vec!["gene_id".to_owned()];
    header.extend((0..posterior.n_patterns()).map(|l| format!("v{l}")));
    header.extend(["pattern".to_owned(), "declared".to_owned()]);
    header.extend(names.iter().map(|g| format!("mean_{g}")));
    header.extend(names.iter().skip(1).map(|g| format!("fc_{g}_vs_{}", names[0])));
    writeln!(out, "{}", header.join("\t"))?;
    for (i, id) in matrix.gene_ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(posterior.row(i).iter().map(|v| v.to_string()));
        let pattern = decision.assigned_pattern[i];
        row.push(pattern.to_string());
        row.push((decision.declared[i] as u8).to_string());
        let classes = patterns.get(pattern).classes();
        let means: Vec<f64> = classes.iter().map(|&c| fold_changes[i].means[c]).collect();
        row.extend(means.iter().map(|m| m.to_string()));
        row.extend(means.iter().skip(1).map(|m| (m / means[0]).to_string()));
        writeln!(out, "{}", row.join("\t"))?;
    }
    Ok(())
}

/// Reads gene ids and the `v0` column of a results file.
pub fn parse_results_v0(text: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let mut it = lines(text);
    let (_, header) = it.next().ok_or_else(|| parse_err(1, 1, "empty file"))?;
    let col = header
        .split('\t')
        .position(|h| h == "v0")
        .ok_or_else(|| parse_err(1, 1, "no v0 column"))?;
    let mut ids = Vec::new();
    let mut v0 = Vec::new();
    for (line, row) in it {
        let fields: Vec<&str> = row.split('\t').collect();
        let f = fields.get(col).ok_or_else(|| parse_err(line, fields.len() + 1, "missing v0"))?;
        ids.push(fields[0].to_owned());
        v0.push(f.parse().map_err(|_| parse_err(line, col + 1, format!("'{f}' is not a number")))?);
    }
    Ok((ids, v0))
}

pub fn write_truth_tsv<W: Write>(mut out: W, gene_ids: &[String], truth: &SimTruth) -> Result<()> {
    writeln!(out, "gene_id\tdelta\talpha\tlambda")?;
    for (i, id) in gene_ids.iter().enumerate() {
        let lambda: Vec<String> = truth.lambda[i].iter().map(|l| l.to_string()).collect();
        writeln!(out, "{id}\t{}\t{}\t{}", truth.delta[i], truth.alpha[i], lambda.join(","))?;
    }
    Ok(())
}

/// Gene ids and true patterns from a truth file; only the first two
/// columns are required.
pub fn parse_truth_tsv(text: &str) -> Result<(Vec<String>, Vec<usize>)> {
    let mut ids = Vec::new();
    let mut delta = Vec::new();
    for (line, row) in lines(text).skip(1) {
        let fields: Vec<&str> = row.split('\t').collect();
        let d = fields.get(1).ok_or_else(|| parse_err(line, 2, "missing delta"))?;
        ids.push(fields[0].to_owned());
        delta.push(d.parse().map_err(|_| parse_err(line, 2, format!("'{d}' is not a pattern index")))?);
    }
    Ok((ids, delta))
}

pub fn write_groups_tsv<W: Write>(mut out: W, array_ids: &[String], groups: &GroupAssignment) -> Result<()> {
    writeln!(out, "array_id\tgroup")?;
    for (a, &z) in array_ids.iter().zip(groups.labels()) {
        writeln!(out, "{a}\t{}", groups.names()[z])?;
    }
    Ok(())
}

pub fn write_expression_tsv<W: Write>(mut out: W, matrix: &ExpressionMatrix) -> Result<()> {
    writeln!(out, "gene_id\t{}", matrix.array_ids().join("\t"))?;
    for (id, row) in matrix.gene_ids().iter().zip(matrix.rows()) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{id}\t{}", cells.join("\t"))?;
    }
    Ok(())
}

pub fn write_roc_tsv<W: Write>(mut out: W, roc: &RocCurve) -> Result<()> {
    writeln!(out, "# auc\t{}", roc.auc)?;
    writeln!(out, "# fdr_range\t{}\t{}", roc.fdr_range.0, roc.fdr_range.1)?;
    writeln!(out, "declared\tfdr\tpower")?;
    for (k, (fdr, power)) in roc.points.iter().enumerate() {
        writeln!(out, "{k}\t{fdr}\t{power}")?;
    }
    Ok(())
}
