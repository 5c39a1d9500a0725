//! TSV matrices, data loading, flat config files and the weight-set archive.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::ecm::EcmTrace;
use crate::error::{CovMtError, Result};
use crate::linalg;
use crate::metrics::is_nonzero;
use crate::model::{DataSet, Mask, ModelFit, PenaltyConfig, SolverConfig, Standardizer};
use crate::simgen::SimConfig;
use crate::tuning::{FittedModel, LambdaBetaGrid, Method, TuningGrid};

pub const NA: &str = "NA";
pub const ARCHIVE_FORMAT: &str = "covmt-weights/1";

/// A labelled matrix read from or written to TSV. `observed[(i, j)]` is false
/// where the cell was `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
    pub observed: Mask,
}

impl Table {
    pub fn new(ids: Vec<String>, columns: Vec<String>, values: DMatrix<f64>) -> Self {
        let observed = Mask::from_element(values.nrows(), values.ncols(), true);
        Self {
            ids,
            columns,
            values,
            observed,
        }
    }

    pub fn has_na(&self) -> bool {
        self.observed.iter().any(|o| !o)
    }

    /// Rows reordered to `ids`, which must all be present.
    pub fn select(&self, ids: &[String]) -> Result<Table> {
        let index: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let rows = ids
            .iter()
            .map(|id| index.get(id.as_str()).copied().ok_or_else(|| CovMtError::InvalidData(format!("subject '{id}' not found"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Table {
            ids: ids.to_vec(),
            columns: self.columns.clone(),
            values: self.values.select_rows(rows.iter()),
            observed: Mask::from_fn(rows.len(), self.values.ncols(), |i, j| self.observed[(rows[i], j)]),
        })
    }
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> CovMtError {
    CovMtError::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parses TSV text: a header whose first cell labels the id column, then one
/// row per subject. `NA` cells are allowed only when `allow_na` is set.
pub fn parse_table(text: &str, label: &str, allow_na: bool) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(label, 1, e.to_string()))?,
        None => return Err(parse_err(label, 1, "missing header row")),
    };
    if header.len() < 2 {
        return Err(parse_err(label, 1, "header needs an id column and at least one data column"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen_cols = HashSet::new();
    for c in &columns {
        if !seen_cols.insert(c.as_str()) {
            return Err(parse_err(label, 1, format!("duplicate column '{c}'")));
        }
    }
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut cells = Vec::new();
    let mut observed = Vec::new();
    for (r, rec) in records.enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| parse_err(label, line, e.to_string()))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != columns.len() + 1 {
            return Err(parse_err(label, line, format!("expected {} fields, found {}", columns.len() + 1, rec.len())));
        }
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_err(label, line, format!("duplicate subject id '{id}'")));
        }
        ids.push(id);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell == NA {
                if !allow_na {
                    return Err(parse_err(label, line, format!("NA not allowed (column '{}')", columns[j])));
                }
                cells.push(f64::NAN);
                observed.push(false);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(label, line, format!("non-numeric cell '{cell}' in column '{}'", columns[j])))?;
                if !v.is_finite() {
                    return Err(parse_err(label, line, format!("non-finite cell '{cell}' in column '{}'", columns[j])));
                }
                cells.push(v);
                observed.push(true);
            }
        }
    }
    let (n, m) = (ids.len(), columns.len());
    Ok(Table {
        ids,
        columns,
        values: DMatrix::from_row_slice(n, m, &cells),
        observed: Mask::from_row_slice(n, m, &observed),
    })
}

pub fn read_table(path: &Path, allow_na: bool) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    parse_table(&text, &path.display().to_string(), allow_na)
}

pub fn format_table(id_label: &str, table: &Table) -> String {
    let mut out = String::new();
    out.push_str(id_label);
    for c in &table.columns {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for (i, id) in table.ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..table.columns.len() {
            out.push('\t');
            if table.observed[(i, j)] {
                out.push_str(&table.values[(i, j)].to_string());
            } else {
                out.push_str(NA);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, id_label: &str, table: &Table) -> Result<()> {
    fs::write(path, format_table(id_label, table))?;
    Ok(())
}

/// Genotypes and expression matched on subject id, on the raw scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub ids: Vec<String>,
    pub predictors: Vec<String>,
    pub responses: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub observed: Mask,
    /// Subject ids present in only one of the two files.
    pub unmatched: Vec<String>,
}

impl LoadedData {
    /// Standardizes on `rows` and returns the scaling and the standardized
    /// data restricted to those rows.
    pub fn standardized(&self, rows: &[usize]) -> Result<(Standardizer, DataSet)> {
        let x = self.x.select_rows(rows.iter());
        let y = self.y.select_rows(rows.iter());
        let m = Mask::from_fn(rows.len(), self.y.ncols(), |i, k| self.observed[(rows[i], k)]);
        let st = Standardizer::fit(&x, &y, &m, Some(&self.predictors), Some(&self.responses))?;
        let data = st.dataset(&x, &y, &m)?;
        Ok((st, data))
    }

    pub fn hash(&self) -> String {
        dataset_hash(&self.ids, &self.x, &self.y, &self.observed)
    }
}

/// Matches subjects across the two tables (intersection, in genotype order)
/// and validates the result.
pub fn match_tables(geno: &Table, expr: &Table) -> Result<LoadedData> {
    if geno.has_na() {
        return Err(CovMtError::InvalidData("genotype table contains NA".into()));
    }
    let expr_ids: HashSet<&str> = expr.ids.iter().map(String::as_str).collect();
    let geno_ids: HashSet<&str> = geno.ids.iter().map(String::as_str).collect();
    let ids: Vec<String> = geno.ids.iter().filter(|id| expr_ids.contains(id.as_str())).cloned().collect();
    let mut unmatched: Vec<String> = geno
        .ids
        .iter()
        .filter(|id| !expr_ids.contains(id.as_str()))
        .chain(expr.ids.iter().filter(|id| !geno_ids.contains(id.as_str())))
        .cloned()
        .collect();
    unmatched.sort();
    if ids.is_empty() {
        return Err(CovMtError::InvalidData("genotype and expression files share no subject ids".into()));
    }
    let g = geno.select(&ids)?;
    let e = expr.select(&ids)?;
    for (i, id) in ids.iter().enumerate() {
        if !(0..e.columns.len()).any(|k| e.observed[(i, k)]) {
            return Err(CovMtError::InvalidData(format!("subject '{id}' has no observed expression")));
        }
    }
    for j in 0..g.columns.len() {
        let col = g.values.column(j);
        if col.iter().all(|v| *v == col[0]) {
            return Err(CovMtError::InvalidData(format!("predictor column '{}' is constant", g.columns[j])));
        }
    }
    Ok(LoadedData {
        ids,
        predictors: g.columns,
        responses: e.columns,
        x: g.values,
        y: e.values,
        observed: e.observed,
        unmatched,
    })
}

pub fn load_dataset(genotype_path: &Path, expression_path: &Path) -> Result<LoadedData> {
    let geno = read_table(genotype_path, false)?;
    let expr = read_table(expression_path, true)?;
    match_tables(&geno, &expr)
}

/// SHA-256 over subject ids, shapes, values and mask.
pub fn dataset_hash(ids: &[String], x: &DMatrix<f64>, y: &DMatrix<f64>, observed: &Mask) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    for m in [x, y] {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.update(observed.iter().map(|&o| o as u8).collect::<Vec<_>>());
    hex::encode(h.finalize())
}

/// Subject-to-split assignment (`train`, `valid`, `test`).
pub fn read_splits(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let label = path.display().to_string();
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(id), Some(split), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(&label, i + 1, "expected two fields"));
        };
        if !matches!(split, "train" | "valid" | "test") {
            return Err(parse_err(&label, i + 1, format!("unknown split '{split}'")));
        }
        if out.insert(id.to_string(), split.to_string()).is_some() {
            return Err(parse_err(&label, i + 1, format!("duplicate subject id '{id}'")));
        }
    }
    Ok(out)
}

pub fn format_splits(ids: &[String], split_of: impl Fn(usize) -> &'static str) -> String {
    let mut out = String::from("subject\tsplit\n");
    for (i, id) in ids.iter().enumerate() {
        out.push_str(&format!("{id}\t{}\n", split_of(i)));
    }
    out
}

/// Flat `key = value` configuration; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(parse_err("config", i + 1, format!("expected key = value, got '{line}'")));
        };
        let key = k.trim().to_string();
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(parse_err("config", i + 1, format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

fn config_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        if let Ok(v) = serde_json::from_str::<Value>(&format!("[{raw}]")) {
            return v;
        }
    }
    Value::String(raw.to_string())
}

/// Overrides fields of `base` with matching keys from `cfg`, removing the
/// keys it consumed.
fn apply_keys<T: Serialize + for<'de> Deserialize<'de>>(base: &T, cfg: &mut BTreeMap<String, String>) -> Result<T> {
    let mut obj = serde_json::to_value(base)?;
    let map = obj.as_object_mut().expect("config structs serialize to objects");
    let keys: Vec<String> = map.keys().cloned().collect();
    for key in keys {
        if let Some(raw) = cfg.remove(&key) {
            let value = match (config_value(&raw), map[&key].is_array()) {
                (v @ Value::Array(_), _) | (v, false) => v,
                (v, true) => Value::Array(vec![v]),
            };
            map.insert(key, value);
        }
    }
    serde_json::from_value(obj).map_err(|e| CovMtError::InvalidConfig(e.to_string()))
}

/// Typed configuration assembled from a flat key-value map. Keys are the
/// field names of [`SolverConfig`], [`TuningGrid`] and [`SimConfig`];
/// `lambda_beta` takes an explicit list while `lambda_beta_n` and
/// `lambda_beta_ratio` describe a log path.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub solver: SolverConfig,
    pub grid: TuningGrid,
    pub sim: SimConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            grid: TuningGrid::default(),
            sim: SimConfig::default(),
        }
    }
}

impl Settings {
    pub fn from_map(mut cfg: BTreeMap<String, String>) -> Result<Self> {
        let path_n = cfg.remove("lambda_beta_n");
        let path_ratio = cfg.remove("lambda_beta_ratio");
        let explicit = cfg.remove("lambda_beta");
        let seed = cfg.get("seed").cloned();
        let solver = apply_keys(&SolverConfig::default(), &mut cfg)?;
        let mut grid: TuningGrid = apply_keys(&TuningGrid::default(), &mut cfg)?;
        if let Some(v) = seed {
            cfg.insert("seed".into(), v);
        }
        let sim = apply_keys(&SimConfig::default(), &mut cfg)?;
        if let Some(raw) = explicit {
            let v: Vec<f64> = serde_json::from_value(match config_value(&raw) {
                Value::Array(a) => Value::Array(a),
                other => Value::Array(vec![other]),
            })
            .map_err(|e| CovMtError::InvalidConfig(format!("lambda_beta: {e}")))?;
            if path_n.is_some() || path_ratio.is_some() {
                return Err(CovMtError::InvalidConfig("lambda_beta conflicts with lambda_beta_n / lambda_beta_ratio".into()));
            }
            grid.lambda_beta = LambdaBetaGrid::Explicit(v);
        } else if path_n.is_some() || path_ratio.is_some() {
            let (mut n, mut ratio) = match grid.lambda_beta {
                LambdaBetaGrid::Path { n, ratio } => (n, ratio),
                LambdaBetaGrid::Explicit(_) => (20, 1e-3),
            };
            if let Some(v) = path_n {
                n = v.parse().map_err(|_| CovMtError::InvalidConfig(format!("lambda_beta_n: '{v}'")))?;
            }
            if let Some(v) = path_ratio {
                ratio = v.parse().map_err(|_| CovMtError::InvalidConfig(format!("lambda_beta_ratio: '{v}'")))?;
            }
            grid.lambda_beta = LambdaBetaGrid::Path { n, ratio };
        }
        if let Some(k) = cfg.keys().next() {
            return Err(CovMtError::InvalidConfig(format!("unknown config key '{k}'")));
        }
        Ok(Self { solver, grid, sim })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_map(parse_config(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTriplet {
    pub predictor: String,
    pub response: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
}

impl From<&EcmTrace> for TraceSummary {
    fn from(t: &EcmTrace) -> Self {
        Self {
            iterations: t.iterations(),
            converged: t.converged,
            initial_objective: t.initial_objective,
            final_objective: t.final_objective(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    pub method: Method,
    pub penalty: Option<PenaltyConfig>,
    /// Per-response (lambda, alpha) for the elastic net.
    pub per_response_penalty: Option<Vec<Option<(f64, f64)>>>,
    pub solver: SolverConfig,
    pub trace: Option<TraceSummary>,
    pub validation_r2: Option<f64>,
    pub version: String,
    pub dataset_hash: String,
}

/// Fitted weights on the standardized scale together with the scaling
/// needed to apply them to raw genotypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSetArchive {
    pub format: String,
    pub predictors: Vec<String>,
    pub responses: Vec<String>,
    /// Nonzero coefficients, response-major.
    pub beta: Vec<WeightTriplet>,
    /// Row-major lower triangle of the precision, diagonal included.
    /// Methods without a precision store the identity.
    pub omega_lower: Vec<f64>,
    pub normalization: Standardizer,
    pub metadata: ArchiveMetadata,
}

impl WeightSetArchive {
    pub fn from_model(model: &FittedModel, predictors: &[String], responses: &[String], solver: &SolverConfig, dataset_hash: String) -> Result<Self> {
        let (p, q) = model.beta.shape();
        if predictors.len() != p || responses.len() != q {
            return Err(CovMtError::Dimension(format!(
                "names ({}, {}) do not match coefficients ({p}, {q})",
                predictors.len(),
                responses.len()
            )));
        }
        let mut beta = Vec::new();
        for k in 0..q {
            for j in 0..p {
                let w = model.beta[(j, k)];
                if is_nonzero(w) {
                    beta.push(WeightTriplet {
                        predictor: predictors[j].clone(),
                        response: responses[k].clone(),
                        weight: w,
                    });
                }
            }
        }
        let omega = model.omega.clone().unwrap_or_else(|| DMatrix::identity(q, q));
        let mut omega_lower = Vec::with_capacity(q * (q + 1) / 2);
        for i in 0..q {
            for j in 0..=i {
                omega_lower.push(omega[(i, j)]);
            }
        }
        Ok(Self {
            format: ARCHIVE_FORMAT.to_string(),
            predictors: predictors.to_vec(),
            responses: responses.to_vec(),
            beta,
            omega_lower,
            normalization: model.standardizer.clone(),
            metadata: ArchiveMetadata {
                method: model.method,
                penalty: model.penalty,
                per_response_penalty: model.en_choices.clone(),
                solver: solver.clone(),
                trace: model.trace.as_ref().map(TraceSummary::from),
                validation_r2: Some(model.validation_r2).filter(|v| v.is_finite()),
                version: env!("CARGO_PKG_VERSION").to_string(),
                dataset_hash,
            },
        })
    }

    pub fn beta(&self) -> Result<DMatrix<f64>> {
        let pi: HashMap<&str, usize> = self.predictors.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let ri: HashMap<&str, usize> = self.responses.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut b = DMatrix::zeros(self.predictors.len(), self.responses.len());
        for t in &self.beta {
            let (Some(&j), Some(&k)) = (pi.get(t.predictor.as_str()), ri.get(t.response.as_str())) else {
                return Err(CovMtError::InvalidData(format!("unknown weight ({}, {})", t.predictor, t.response)));
            };
            b[(j, k)] = t.weight;
        }
        Ok(b)
    }

    pub fn omega(&self) -> Result<DMatrix<f64>> {
        let q = self.responses.len();
        if self.omega_lower.len() != q * (q + 1) / 2 {
            return Err(CovMtError::Dimension(format!("precision triangle has {} entries for {q} responses", self.omega_lower.len())));
        }
        let mut m = DMatrix::zeros(q, q);
        let mut it = self.omega_lower.iter();
        for i in 0..q {
            for j in 0..=i {
                let v = *it.next().expect("length checked");
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    pub fn model_fit(&self) -> Result<ModelFit> {
        ModelFit::new(self.beta()?, self.omega()?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != ARCHIVE_FORMAT {
            return Err(CovMtError::InvalidData(format!("unsupported archive format '{}'", self.format)));
        }
        let (p, q) = (self.predictors.len(), self.responses.len());
        let n = &self.normalization;
        if n.x_mean.len() != p || n.x_scale.len() != p || n.y_mean.len() != q || n.y_scale.len() != q {
            return Err(CovMtError::Dimension("normalization constants do not match names".into()));
        }
        self.beta()?;
        linalg::cholesky(self.omega()?, "archived precision")?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: Self = serde_json::from_str(text)?;
        a.validate()?;
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Raw-scale predictions for a genotype table whose columns are the
    /// archive's predictors (any order).
    pub fn predict(&self, geno: &Table) -> Result<DMatrix<f64>> {
        let x = self.align_predictors(geno)?;
        self.normalization.predict_raw(&self.beta()?, &x)
    }

    pub fn align_predictors(&self, geno: &Table) -> Result<DMatrix<f64>> {
        if geno.columns.len() != self.predictors.len() {
            return Err(CovMtError::Dimension(format!(
                "archive has {} predictors, genotype file has {}",
                self.predictors.len(),
                geno.columns.len()
            )));
        }
        let idx: HashMap<&str, usize> = geno.columns.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let cols = self
            .predictors
            .iter()
            .map(|p| idx.get(p.as_str()).copied().ok_or_else(|| CovMtError::Dimension(format!("predictor '{p}' missing from genotype file"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(geno.values.select_columns(cols.iter()))
    }
}
