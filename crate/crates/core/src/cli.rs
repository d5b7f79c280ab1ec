//! The `gaga` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid data, 3 numerical
//! failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng as _;
use rayon::prelude::*;

use crate::decision::find_genes;
use crate::error::{Error, ErrorKind, Result};
use crate::fitting::{bic_select, em_fit, FitConfig, ModelKind};
use crate::gas::{check_against_oracle, microarray_sweep};
use crate::inference::{
    estimate_fold_change, gene_mean_cv_diagnostics, posterior_all, prior_predictive_sample, GaGaHyper, Hyper,
};
use crate::io::{self as gio, FitFile};
use crate::model::{all_sufficient_stats, GroupAssignment, PatternSet};
use crate::rng;
use crate::simulation::{roc_curve, simulate_bootstrap, simulate_parametric};

#[derive(Debug, Parser)]
#[command(name = "gaga", version, about = "Gamma-gamma models for differential expression")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit hyperparameters by EM and write a fit file.
    Fit(FitArgs),
    /// Posterior pattern probabilities, gene calls and fold changes.
    Test(TestArgs),
    /// Simulate data from the hierarchy.
    Sim(SimArgs),
    /// Resample arrays of an existing data set.
    BootstrapSim(BootstrapArgs),
    /// FDR/power curve of a results file against a truth file.
    Roc(RocArgs),
    /// Accuracy of the gamma-shape approximation against quadrature.
    GasCheck(GasCheckArgs),
    /// Mean/CV per gene and prior predictive draws.
    Diag(DiagArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Expression matrix (TSV, header "gene_id" + array ids).
    #[arg(long)]
    data: PathBuf,
    /// Array to group map (TSV: array_id, label).
    #[arg(long)]
    groups: PathBuf,
    /// Added to every value before validation.
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Gaga,
    Migaga,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Pattern file; default is the two-hypothesis set for two groups.
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaga")]
    model: ModelArg,
    /// Mixture components for migaga.
    #[arg(long, default_value_t = 2)]
    components: usize,
    /// Choose the number of components (1..=N) by BIC instead.
    #[arg(long)]
    select_components: Option<usize>,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    fit: PathBuf,
    /// Bayesian FDR bound.
    #[arg(long, default_value_t = 0.05)]
    fdr: f64,
    /// Posterior draws per gene for fold changes.
    #[arg(long, default_value_t = 100)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    seed: u64,
    /// Take hyperparameters and patterns from a fit file.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long, default_value_t = 25.5)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.109)]
    nu: f64,
    #[arg(long, default_value_t = 1.183)]
    beta: f64,
    #[arg(long, default_value_t = 1683.0)]
    mu: f64,
    /// Pattern probabilities for the two-group setup, comma separated.
    #[arg(long, default_value = "0.95,0.05", value_delimiter = ',')]
    pi: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    genes: usize,
    #[arg(long, default_value_t = 5)]
    per_group: usize,
    #[arg(long)]
    out_data: PathBuf,
    #[arg(long)]
    out_groups: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    seed: u64,
    /// File listing the ids of genes to treat as DE, one per line.
    #[arg(long, conflicts_with = "de_fraction")]
    de: Option<PathBuf>,
    /// Mark each gene DE independently with this probability.
    #[arg(long)]
    de_fraction: Option<f64>,
    #[arg(long)]
    out_data: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Debug, Args)]
struct RocArgs {
    /// Output of `gaga test`.
    #[arg(long)]
    results: PathBuf,
    /// Truth file from `gaga sim` or `gaga bootstrap-sim`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GasCheckArgs {
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-parameter report (TSV).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    seed: u64,
    /// Fit file for prior predictive draws.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long, default_value_t = 10000)]
    draws: usize,
    #[arg(long)]
    out_meancv: PathBuf,
    #[arg(long, requires = "fit")]
    out_predictive: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_data(a: &DataArgs) -> Result<(crate::model::ExpressionMatrix, GroupAssignment)> {
    let matrix = gio::load_expression_tsv(&a.data, a.offset)?;
    let groups = gio::load_groups_tsv(&a.groups, matrix.array_ids())?;
    Ok((matrix, groups))
}

fn fit(a: FitArgs) -> Result<()> {
    let (matrix, groups) = load_data(&a.input)?;
    let patterns = match &a.patterns {
        Some(p) => gio::load_patterns_file(p, groups.n_groups())?,
        None if groups.n_groups() == 2 => PatternSet::two_group(),
        None => {
            return Err(Error::InvalidGroups(format!(
                "{} groups need an explicit --patterns file",
                groups.n_groups()
            )))
        }
    };
    let model = match a.model {
        ModelArg::Gaga => ModelKind::GaGa,
        ModelArg::Migaga => ModelKind::MiGaGa {
            components: a.components,
        },
    };
    let config = FitConfig {
        model,
        max_iterations: a.max_iter,
        rel_loglik_tol: a.tol,
        seed: a.seed,
        ..FitConfig::default()
    };
    let result = match a.select_components {
        Some(max) => {
            let sel = bic_select(&matrix, &groups, &patterns, max, &config)?;
            for (m, _, b) in &sel.candidates {
                eprintln!("M = {m}: BIC {b}");
            }
            sel.candidates
                .into_iter()
                .find(|c| c.0 == sel.best)
                .map(|c| c.1)
                .expect("best candidate exists")
        }
        None => em_fit(&matrix, &groups, &patterns, &config)?,
    };
    if !result.converged {
        eprintln!("warning: EM stopped after {} iterations without converging", result.iterations);
    }
    FitFile::new(&result, &patterns, &groups, a.seed).save(&a.out)
}

/// Re-indexes the groups of new data to the fit's group order.
fn align_groups(groups: &GroupAssignment, names: &[String]) -> Result<GroupAssignment> {
    let map = groups
        .names()
        .iter()
        .map(|g| {
            names
                .iter()
                .position(|n| n == g)
                .ok_or_else(|| Error::InvalidGroups(format!("group '{g}' is not in the fit")))
        })
        .collect::<Result<Vec<_>>>()?;
    GroupAssignment::new(groups.labels().iter().map(|&z| map[z]).collect(), names.to_vec())
}

fn test(a: TestArgs) -> Result<()> {
    let fit = FitFile::load(&a.fit)?;
    let patterns = fit.pattern_set()?;
    let (matrix, groups) = load_data(&a.input)?;
    let groups = align_groups(&groups, &fit.group_names)?;
    let stats = all_sufficient_stats(&matrix, &groups, &patterns)?;
    let (posterior, _) = posterior_all(&stats, &fit.hyper)?;
    let decision = find_genes(&posterior, a.fdr);
    let fold = stats
        .par_iter()
        .enumerate()
        .map(|(i, st)| {
            let seed = rng::derive_seed(a.seed, i as u64);
            estimate_fold_change(st, decision.assigned_pattern[i], &fit.hyper, a.draws, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = create(&a.out)?;
    gio::write_results_tsv(&mut out, &matrix, &groups, &patterns, &posterior, &decision, &fold)?;
    out.flush()?;
    eprintln!(
        "declared {} of {} genes; BFDR {:.4}, BFNR {:.4}",
        decision.n_declared(),
        matrix.n_genes(),
        decision.bfdr_estimate,
        decision.bfnr_estimate
    );
    Ok(())
}

fn sim(a: SimArgs) -> Result<()> {
    let (hyper, patterns) = match &a.fit {
        Some(p) => {
            let f = FitFile::load(p)?;
            let ps = f.pattern_set()?;
            (f.hyper, ps)
        }
        None => (
            Hyper::from(GaGaHyper::new(a.alpha0, a.nu, a.beta, a.mu, a.pi.clone())?),
            PatternSet::two_group(),
        ),
    };
    let (matrix, groups, truth) = simulate_parametric(&hyper, a.genes, a.per_group, &patterns, a.seed)?;
    let mut out = create(&a.out_data)?;
    gio::write_expression_tsv(&mut out, &matrix)?;
    out.flush()?;
    let mut out = create(&a.out_groups)?;
    gio::write_groups_tsv(&mut out, matrix.array_ids(), &groups)?;
    out.flush()?;
    let mut out = create(&a.out_truth)?;
    gio::write_truth_tsv(&mut out, matrix.gene_ids(), &truth)?;
    out.flush()?;
    Ok(())
}

fn bootstrap(a: BootstrapArgs) -> Result<()> {
    let (matrix, groups) = load_data(&a.input)?;
    let de: Vec<bool> = match (&a.de, a.de_fraction) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            let ids: std::collections::HashSet<&str> =
                text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            matrix.gene_ids().iter().map(|g| ids.contains(g.as_str())).collect()
        }
        (None, Some(f)) if (0.0..=1.0).contains(&f) => {
            let mut r = rng::substream(a.seed, 1);
            (0..matrix.n_genes()).map(|_| r.random::<f64>() < f).collect()
        }
        (None, Some(f)) => return Err(Error::InvalidParams(format!("--de-fraction {f} outside [0, 1]"))),
        (None, None) => vec![false; matrix.n_genes()],
    };
    let out_matrix = simulate_bootstrap(&matrix, &groups, &de, a.seed)?;
    let mut out = create(&a.out_data)?;
    gio::write_expression_tsv(&mut out, &out_matrix)?;
    out.flush()?;
    let mut out = create(&a.out_truth)?;
    writeln!(out, "gene_id\tdelta")?;
    for (g, d) in matrix.gene_ids().iter().zip(&de) {
        writeln!(out, "{g}\t{}", *d as u8)?;
    }
    out.flush()?;
    Ok(())
}

fn roc(a: RocArgs) -> Result<()> {
    let (ids, v0) = gio::parse_results_v0(&std::fs::read_to_string(&a.results)?)?;
    let (truth_ids, delta) = gio::parse_truth_tsv(&std::fs::read_to_string(&a.truth)?)?;
    if ids != truth_ids {
        return Err(Error::ShapeMismatch("results and truth list different genes".into()));
    }
    let curve = roc_curve(&v0, &delta)?;
    let mut out = create(&a.out)?;
    gio::write_roc_tsv(&mut out, &curve)?;
    out.flush()?;
    println!("auc\t{}\nfdr_range\t{}\t{}", curve.auc, curve.fdr_range.0, curve.fdr_range.1);
    Ok(())
}

fn gas_check(a: GasCheckArgs) -> Result<()> {
    let sweep = microarray_sweep(a.count, a.seed)?;
    let checks = sweep
        .par_iter()
        .map(|p| check_against_oracle(p, 1e-10))
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = &a.out {
        let mut out = create(path)?;
        writeln!(out, "index\tp\tdensity_error\tdensity_error_rel_peak\tlog_c_rel_error\trefined")?;
        for (i, (p, c)) in sweep.iter().zip(&checks).enumerate() {
            writeln!(
                out,
                "{i}\t{}\t{}\t{}\t{}\t{}",
                p.p(),
                c.density_error,
                c.density_error_rel_peak,
                c.log_norm_rel_error,
                c.refined as u8
            )?;
        }
        out.flush()?;
    }
    let max = |f: fn(&crate::gas::GasCheck) -> f64| checks.iter().map(f).fold(0.0, f64::max);
    println!("count\t{}", checks.len());
    println!("max_density_error\t{}", max(|c| c.density_error));
    println!("max_density_error_rel_peak\t{}", max(|c| c.density_error_rel_peak));
    println!("max_log_c_rel_error\t{}", max(|c| c.log_norm_rel_error));
    Ok(())
}

fn diag(a: DiagArgs) -> Result<()> {
    let (matrix, groups) = load_data(&a.input)?;
    let mut out = create(&a.out_meancv)?;
    writeln!(out, "gene_id\tmean\tcv")?;
    for (g, d) in matrix.gene_ids().iter().zip(gene_mean_cv_diagnostics(&matrix, &groups)) {
        match d.cv {
            Some(cv) => writeln!(out, "{g}\t{}\t{cv}", d.mean)?,
            None => writeln!(out, "{g}\t{}\tNA", d.mean)?,
        }
    }
    out.flush()?;
    if let (Some(fit), Some(path)) = (&a.fit, &a.out_predictive) {
        let f = FitFile::load(fit)?;
        let mut out = create(path)?;
        writeln!(out, "x")?;
        for x in prior_predictive_sample(&f.hyper, a.draws, a.seed) {
            writeln!(out, "{x}")?;
        }
        out.flush()?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Test(a) => test(a),
        Command::Sim(a) => sim(a),
        Command::BootstrapSim(a) => bootstrap(a),
        Command::Roc(a) => roc(a),
        Command::GasCheck(a) => gas_check(a),
        Command::Diag(a) => diag(a),
    }
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            }
        }
    }
}
