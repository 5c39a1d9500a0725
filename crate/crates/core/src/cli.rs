//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::ecm::impute;
use crate::error::{CovMtError, Result};
use crate::io::{format_splits, load_dataset, read_splits, read_table, write_table, LoadedData, Settings, Table, WeightSetArchive};
use crate::metrics::{ld_adjusted_tpr, model_size, r2_from_predictions, MetricReport};
use crate::model::Mask;
use crate::simgen::{simulate, XSource};
use crate::tuning::{grid_search, kfold_cv, Method, SplitData};

#[derive(Debug, Parser)]
#[command(name = "covmt", version, about = "Multi-tissue expression weights with missing responses")]
pub struct Cli {
    /// Seed for every random step; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat key = value file with solver, grid and simulation settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tune on a validation split and write a weight archive.
    Fit(FitArgs),
    /// Apply an archive to genotypes.
    Predict(PredictArgs),
    /// Fill missing expression by conditional means under an archive.
    Impute(ImputeArgs),
    /// Generate a synthetic data set with its truth files.
    Simulate(SimulateArgs),
    /// Score predictions against observed expression.
    Evaluate(EvaluateArgs),
    /// Rotating k-fold evaluation with nested validation tuning.
    Cv(CvArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub genotypes: PathBuf,
    #[arg(long)]
    pub expression: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub method: Method,
    #[command(flatten)]
    pub data: DataArgs,
    /// Subject split file (`train`, `valid`, `test`); otherwise a seeded
    /// random split holds out `--valid-fraction` of subjects.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub valid_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional TSV of every grid point with its validation score.
    #[arg(long)]
    pub grid_table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub genotypes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Use these genotypes instead of a synthetic design.
    #[arg(long)]
    pub genotypes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub expression: PathBuf,
    /// True support (predictors x responses, 0/1) for the LD-adjusted TPR.
    #[arg(long, requires = "genotypes")]
    pub support: Option<PathBuf>,
    #[arg(long)]
    pub genotypes: Option<PathBuf>,
    /// Restrict scoring to subjects of one split.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long, default_value = "test", requires = "splits")]
    pub split: String,
    #[arg(long, default_value = "eval")]
    pub label: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub method: Method,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// True support for the LD-adjusted TPR.
    #[arg(long)]
    pub support: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 2 on usage errors, 1 on runtime errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            1
        }
    }
}

fn error_kind(e: &CovMtError) -> &'static str {
    match e {
        CovMtError::DegenerateCovariance(_) => "degenerate-covariance",
        CovMtError::Dimension(_) => "dimension",
        CovMtError::InvalidData(_) => "invalid-data",
        CovMtError::InvalidConfig(_) => "invalid-config",
        CovMtError::Unbounded(_) => "unbounded",
        CovMtError::GlassoNotConverged { .. } => "glasso-not-converged",
        CovMtError::BetaNotConverged { .. } => "beta-not-converged",
        CovMtError::AllGridPointsFailed(_) => "all-grid-points-failed",
        CovMtError::UndefinedMetric(_) => "undefined-metric",
        CovMtError::Parse { .. } => "parse",
        CovMtError::Io(_) => "io",
        CovMtError::Json(_) => "json",
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        s.solver.seed = seed;
        s.sim.seed = seed;
    }
    Ok(s)
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CovMtError::InvalidConfig("--threads must be >= 1".into()));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let s = settings(cli)?;
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, &s),
        Command::Predict(a) => cmd_predict(a),
        Command::Impute(a) => cmd_impute(a),
        Command::Simulate(a) => cmd_simulate(a, &s),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Cv(a) => cmd_cv(a, &s),
    }
}

fn report_unmatched(d: &LoadedData) {
    if !d.unmatched.is_empty() {
        eprintln!("warning: {} subject id(s) present in only one file: {}", d.unmatched.len(), d.unmatched.join(","));
    }
}

fn fit_split(d: &LoadedData, a: &FitArgs, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    match &a.splits {
        Some(path) => {
            let splits = read_splits(path)?;
            let (mut train, mut valid) = (Vec::new(), Vec::new());
            for (i, id) in d.ids.iter().enumerate() {
                match splits.get(id).map(String::as_str) {
                    Some("train") => train.push(i),
                    Some("valid") => valid.push(i),
                    Some(_) => {}
                    None => return Err(CovMtError::InvalidData(format!("subject '{id}' missing from split file"))),
                }
            }
            Ok((train, valid))
        }
        None => {
            if !(a.valid_fraction > 0.0 && a.valid_fraction < 1.0) {
                return Err(CovMtError::InvalidConfig("--valid-fraction must lie in (0, 1)".into()));
            }
            let n = d.ids.len();
            let n_valid = ((n as f64 * a.valid_fraction).round() as usize).clamp(1, n.saturating_sub(2).max(1));
            let folds = crate::tuning::fold_assignment(n, n, seed);
            // fold_assignment with n folds is a seeded permutation rank
            let mut valid: Vec<usize> = (0..n).filter(|&i| folds[i] < n_valid).collect();
            let mut train: Vec<usize> = (0..n).filter(|&i| folds[i] >= n_valid).collect();
            valid.sort_unstable();
            train.sort_unstable();
            Ok((train, valid))
        }
    }
}

fn grid_table_text(rows: &[crate::tuning::GridRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
    let mut out = String::from("alpha\tlambda_beta\tlambda_omega\tvalidation_r2\tmodel_size\titerations\tstatus\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.alpha,
            r.lambda_beta,
            r.lambda_omega,
            fmt(r.validation_r2),
            fmt(r.model_size),
            r.iterations,
            r.error.as_deref().map_or("ok".to_string(), |e| format!("failed: {}", e.replace(['\t', '\n'], " ")))
        ));
    }
    out
}

fn cmd_fit(a: &FitArgs, s: &Settings) -> Result<()> {
    let d = load_dataset(&a.data.genotypes, &a.data.expression)?;
    report_unmatched(&d);
    let (train, valid) = fit_split(&d, a, s.solver.seed)?;
    let split = SplitData {
        x: &d.x,
        y: &d.y,
        observed: &d.observed,
        train: &train,
        valid: &valid,
    };
    let result = grid_search(&split, a.method, &s.grid, &s.solver)?;
    let archive = WeightSetArchive::from_model(&result.best, &d.predictors, &d.responses, &s.solver, d.hash())?;
    archive.save(&a.out)?;
    if let Some(p) = &a.grid_table {
        fs::write(p, grid_table_text(&result.table))?;
    }
    Ok(())
}

fn predictions_table(ids: Vec<String>, responses: &[String], values: DMatrix<f64>) -> Table {
    Table::new(ids, responses.to_vec(), values)
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let archive = WeightSetArchive::load(&a.archive)?;
    let geno = read_table(&a.genotypes, false)?;
    let pred = archive.predict(&geno)?;
    write_table(&a.out, "subject", &predictions_table(geno.ids.clone(), &archive.responses, pred))
}

/// Expression columns reordered to the archive's responses.
fn align_responses(archive: &WeightSetArchive, expr: &Table) -> Result<Table> {
    let idx: std::collections::HashMap<&str, usize> = expr.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let cols = archive
        .responses
        .iter()
        .map(|r| idx.get(r.as_str()).copied().ok_or_else(|| CovMtError::Dimension(format!("response '{r}' missing from expression file"))))
        .collect::<Result<Vec<_>>>()?;
    if cols.len() != expr.columns.len() {
        return Err(CovMtError::Dimension(format!(
            "archive has {} responses, expression file has {}",
            cols.len(),
            expr.columns.len()
        )));
    }
    Ok(Table {
        ids: expr.ids.clone(),
        columns: archive.responses.clone(),
        values: expr.values.select_columns(cols.iter()),
        observed: Mask::from_fn(expr.ids.len(), cols.len(), |i, k| expr.observed[(i, cols[k])]),
    })
}

fn cmd_impute(a: &ImputeArgs) -> Result<()> {
    let archive = WeightSetArchive::load(&a.archive)?;
    let geno = read_table(&a.data.genotypes, false)?;
    let expr = align_responses(&archive, &read_table(&a.data.expression, true)?)?;
    let ids: Vec<String> = expr.ids.iter().filter(|id| geno.ids.contains(id)).cloned().collect();
    let geno = geno.select(&ids)?;
    let expr = expr.select(&ids)?;
    let x = archive.align_predictors(&geno)?;
    let st = &archive.normalization;
    let data = st.dataset(&x, &expr.values, &expr.observed)?;
    let imp = impute(&archive.model_fit()?, &data)?;
    let completed = st.inverse_y(&imp.completed);
    let mut out = Table::new(ids, archive.responses.clone(), completed);
    // keep observed cells bit-identical to the input
    for i in 0..out.ids.len() {
        for k in 0..out.columns.len() {
            if expr.observed[(i, k)] {
                out.values[(i, k)] = expr.values[(i, k)];
            }
        }
    }
    out.observed = Mask::from_element(out.ids.len(), out.columns.len(), true);
    write_table(&a.out, "subject", &out)
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (1..=n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

fn cmd_simulate(a: &SimulateArgs, s: &Settings) -> Result<()> {
    let mut cfg = s.sim.clone();
    let geno = match &a.genotypes {
        Some(p) => {
            let t = read_table(p, false)?;
            cfg.x_source = XSource::File;
            cfg.n = t.ids.len();
            cfg.p = t.columns.len();
            Some(t)
        }
        None => None,
    };
    let (truth, data) = simulate(&cfg, geno.as_ref().map(|t| &t.values))?;
    let ids = geno.as_ref().map_or_else(|| names("S", cfg.n), |t| t.ids.clone());
    let predictors = geno.as_ref().map_or_else(|| names("snp", cfg.p), |t| t.columns.clone());
    let responses = names("tissue", cfg.q);
    fs::create_dir_all(&a.out_dir)?;
    let dir = &a.out_dir;
    write_table(&dir.join("genotypes.tsv"), "subject", &Table::new(ids.clone(), predictors.clone(), data.x.clone()))?;
    let expr = Table {
        ids: ids.clone(),
        columns: responses.clone(),
        values: data.y.clone(),
        observed: data.observed.clone(),
    };
    write_table(&dir.join("expression.tsv"), "subject", &expr)?;
    let mut split = vec!["train"; cfg.n];
    for &i in &data.valid {
        split[i] = "valid";
    }
    for &i in &data.test {
        split[i] = "test";
    }
    fs::write(dir.join("splits.tsv"), format_splits(&ids, |i| split[i]))?;
    write_table(&dir.join("truth_beta.tsv"), "predictor", &Table::new(predictors.clone(), responses.clone(), truth.beta_star.clone()))?;
    let support = truth.support.map(|b| if b { 1.0 } else { 0.0 });
    write_table(&dir.join("truth_support.tsv"), "predictor", &Table::new(predictors, responses.clone(), support))?;
    write_table(&dir.join("truth_sigma_e.tsv"), "response", &Table::new(responses.clone(), responses.clone(), truth.sigma_e.clone()))?;
    let d_e = DMatrix::from_row_slice(1, cfg.q, &truth.d_e);
    write_table(&dir.join("truth_d_e.tsv"), "quantity", &Table::new(vec!["d_e".into()], responses, d_e))?;
    Ok(())
}

fn support_mask(path: &Path, predictors: &[String], responses: &[String]) -> Result<Mask> {
    let t = read_table(path, false)?.select(predictors)?;
    let idx: std::collections::HashMap<&str, usize> = t.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let cols = responses
        .iter()
        .map(|r| idx.get(r.as_str()).copied().ok_or_else(|| CovMtError::Dimension(format!("response '{r}' missing from support file"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Mask::from_fn(predictors.len(), responses.len(), |j, k| t.values[(j, cols[k])] != 0.0))
}

fn write_long(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let archive = WeightSetArchive::load(&a.archive)?;
    let mut pred = align_responses(&archive, &read_table(&a.predictions, false)?)?;
    if let Some(path) = &a.splits {
        let splits = read_splits(path)?;
        let keep: Vec<String> = pred.ids.iter().filter(|id| splits.get(*id) == Some(&a.split)).cloned().collect();
        if keep.is_empty() {
            return Err(CovMtError::InvalidData(format!("no predicted subjects in split '{}'", a.split)));
        }
        pred = pred.select(&keep)?;
    }
    let expr = align_responses(&archive, &read_table(&a.expression, true)?)?.select(&pred.ids)?;
    let r2 = r2_from_predictions(&pred.values, &expr.values, Some(&expr.observed), &archive.normalization.y_mean)?;
    let beta = archive.beta()?;
    let ld_tpr = match (&a.support, &a.genotypes) {
        (Some(sp), Some(gp)) => {
            let support = support_mask(sp, &archive.predictors, &archive.responses)?;
            let x = archive.align_predictors(&read_table(gp, false)?)?;
            Some(ld_adjusted_tpr(&beta, &support, &x, 0.6)?)
        }
        _ => None,
    };
    let report = MetricReport {
        label: a.label.clone(),
        r2,
        ld_tpr,
        model_size: model_size(&beta),
    };
    let rows: Vec<String> = report
        .long_rows(&archive.responses)
        .into_iter()
        .map(|(m, r, v)| format!("{}\t{}\t{m}\t{r}\t{v}", archive.metadata.method, report.label))
        .collect();
    write_long(&a.out, "method\tlabel\tmetric\tresponse\tvalue", &rows)
}

fn cmd_cv(a: &CvArgs, s: &Settings) -> Result<()> {
    let d = load_dataset(&a.data.genotypes, &a.data.expression)?;
    report_unmatched(&d);
    let support = match &a.support {
        Some(p) => Some(support_mask(p, &d.predictors, &d.responses)?),
        None => None,
    };
    let report = kfold_cv(&d.x, &d.y, &d.observed, a.method, &s.grid, a.folds, &s.solver, support.as_ref())?;
    fs::create_dir_all(&a.out_dir)?;
    let mut metrics = Vec::new();
    let mut selection = Vec::new();
    let mut pred = DMatrix::from_element(d.ids.len(), d.responses.len(), f64::NAN);
    let mut fold_of = vec![0usize; d.ids.len()];
    for f in &report.folds {
        for (m, r, v) in f.report.long_rows(&d.responses) {
            metrics.push(format!("{}\t{}\t{m}\t{r}\t{v}", report.method, f.fold + 1));
        }
        let row = &f.selected;
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
        selection.push(format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            f.fold + 1,
            f.validation_fold + 1,
            row.alpha,
            row.lambda_beta,
            row.lambda_omega,
            opt(row.validation_r2),
            opt(row.model_size)
        ));
        for (r, &i) in f.test_rows.iter().enumerate() {
            fold_of[i] = f.fold + 1;
            pred.set_row(i, &f.predictions.row(r));
        }
    }
    metrics.push(format!("{}\tall\tr2\tall\t{}", report.method, report.average_r2));
    write_long(&a.out_dir.join("cv_metrics.tsv"), "method\tfold\tmetric\tresponse\tvalue", &metrics)?;
    write_long(
        &a.out_dir.join("cv_selection.tsv"),
        "fold\tvalidation_fold\talpha\tlambda_beta\tlambda_omega\tvalidation_r2\tmodel_size",
        &selection,
    )?;
    write_table(&a.out_dir.join("cv_predictions.tsv"), "subject", &predictions_table(d.ids.clone(), &d.responses, pred))?;
    let folds: Vec<String> = d.ids.iter().zip(&fold_of).map(|(id, f)| format!("{id}\t{f}")).collect();
    write_long(&a.out_dir.join("cv_folds.tsv"), "subject\tfold", &folds)?;
    Ok(())
}
