//! Datasets, CSV ingestion, monomial mean bases and design matrices.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default cap on any single exponent in a basis term.
pub const DEFAULT_MAX_DEGREE: u32 = 4;

/// Relative residual norm below which a column counts as lying in a span.
pub const SPAN_TOLERANCE: f64 = 1e-8;

/// `n` records of (missingness indicator, outcome if observed, covariates).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    r: Vec<u8>,
    y: Vec<Option<f64>>,
    x: DMatrix<f64>,
    x_names: Vec<String>,
}

impl Dataset {
    pub fn new(r: Vec<u8>, y: Vec<Option<f64>>, x: DMatrix<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(r, y, x, names)
    }

    pub fn with_names(
        r: Vec<u8>,
        y: Vec<Option<f64>>,
        x: DMatrix<f64>,
        x_names: Vec<String>,
    ) -> Result<Self> {
        let n = r.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset must have at least one row".into()));
        }
        if y.len() != n || x.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "length mismatch: r={}, y={}, x rows={}",
                n,
                y.len(),
                x.nrows()
            )));
        }
        if x_names.len() != x.ncols() {
            return Err(Error::InvalidArgument(
                "one name per covariate column required".into(),
            ));
        }
        for (i, (&ri, yi)) in r.iter().zip(&y).enumerate() {
            match (ri, yi) {
                (1, Some(_)) | (0, None) => {}
                (1, None) => {
                    return Err(Error::Consistency {
                        row: i + 1,
                        message: "r=1 but y is missing".into(),
                    })
                }
                (0, Some(_)) => {
                    return Err(Error::Consistency {
                        row: i + 1,
                        message: "r=0 but y is present".into(),
                    })
                }
                (v, _) => {
                    return Err(Error::Consistency {
                        row: i + 1,
                        message: format!("indicator must be 0 or 1, got {v}"),
                    })
                }
            }
        }
        Ok(Dataset { r, y, x, x_names })
    }

    /// Builds a dataset from a fully observed outcome vector, erasing `y`
    /// wherever `r = 0`.
    pub fn from_full(r: Vec<u8>, y_full: &[f64], x: DMatrix<f64>) -> Result<Self> {
        let y = r
            .iter()
            .zip(y_full)
            .map(|(&ri, &yi)| (ri == 1).then_some(yi))
            .collect();
        Self::new(r, y, x)
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> &[u8] {
        &self.r
    }

    pub fn y(&self) -> &[Option<f64>] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn n_observed(&self) -> usize {
        self.r.iter().filter(|&&v| v == 1).count()
    }

    /// Observed outcome or zero; convenient where `r_i` multiplies `y_i`.
    pub fn y_or_zero(&self, i: usize) -> f64 {
        self.y[i].unwrap_or(0.0)
    }

    pub fn observed_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.r[i] == 1).collect()
    }

    /// Errors unless both observed and missing outcomes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        let n1 = self.n_observed();
        if n1 == 0 || n1 == self.n() {
            return Err(Error::Degenerate(format!(
                "need both observed and missing outcomes (n={}, observed={})",
                self.n(),
                n1
            )));
        }
        Ok(())
    }

    /// New dataset made of the given rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let d = self.d();
        let x = DMatrix::from_fn(rows.len(), d, |i, j| self.x[(rows[i], j)]);
        Dataset {
            r: rows.iter().map(|&i| self.r[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            x,
            x_names: self.x_names.clone(),
        }
    }
}

/// Column names used to read a dataset from CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub y: String,
    /// Explicit indicator column. When unset, a column named `r` is used if
    /// present, else the indicator is derived from `y` presence.
    pub r: Option<String>,
    /// Covariate columns; empty means every column except `y` and `r`.
    pub x: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            y: "y".into(),
            r: None,
            x: Vec::new(),
        }
    }
}

fn parse_cell(value: &str, row: usize, column: &str) -> Result<f64> {
    value.trim().parse::<f64>().map_err(|e| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("'{value}' is not a number ({e})"),
    })
}

/// Reads a comma-separated file with a header row. Missing outcomes are empty
/// cells; rows are numbered from 1 (first data row) in errors.
pub fn parse_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_dataset_from_reader(file, schema)
}

pub fn parse_dataset_from_reader<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: String::new(),
            message: format!("cannot read header: {e}"),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 0,
            column: name.to_string(),
            message: "column not found in header".into(),
        })
    };
    let y_idx = find(&schema.y)?;
    let r_idx = match &schema.r {
        Some(name) => Some(find(name)?),
        None => headers.iter().position(|h| h == "r"),
    };
    let x_idx: Vec<usize> = if schema.x.is_empty() {
        (0..headers.len())
            .filter(|&j| j != y_idx && Some(j) != r_idx)
            .collect()
    } else {
        schema.x.iter().map(|c| find(c)).collect::<Result<_>>()?
    };
    let x_names: Vec<String> = x_idx.iter().map(|&j| headers[j].clone()).collect();

    let mut r = Vec::new();
    let mut y = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let ycell = cell(y_idx);
        let yv = if ycell.is_empty() {
            None
        } else {
            Some(parse_cell(ycell, row, &headers[y_idx])?)
        };
        let rv = match r_idx {
            Some(j) => match cell(j) {
                "1" => 1u8,
                "0" => 0u8,
                "" => u8::from(yv.is_some()),
                other => match parse_cell(other, row, &headers[j])? {
                    1.0 => 1,
                    0.0 => 0,
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column: headers[j].clone(),
                            message: format!("indicator must be 0 or 1, got '{other}'"),
                        })
                    }
                },
            },
            None => u8::from(yv.is_some()),
        };
        match (rv, yv) {
            (1, None) => {
                return Err(Error::Consistency {
                    row,
                    message: "r=1 but y is missing".into(),
                })
            }
            (0, Some(_)) => {
                return Err(Error::Consistency {
                    row,
                    message: "r=0 but y is present".into(),
                })
            }
            _ => {}
        }
        for &j in &x_idx {
            xs.push(parse_cell(cell(j), row, &headers[j])?);
        }
        r.push(rv);
        y.push(yv);
    }
    let n = r.len();
    if n == 0 {
        return Err(Error::Parse {
            row: 0,
            column: String::new(),
            message: "no data rows".into(),
        });
    }
    let x = DMatrix::from_row_slice(n, x_idx.len(), &xs);
    Dataset::with_names(r, y, x, x_names)
}

/// Writes `r,y,<covariates>` with empty `y` cells for missing outcomes.
/// Floats use Rust's shortest round-trip representation.
pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_dataset_to_writer(ds, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path.display().to_string(), source),
        other => other,
    })
}

pub fn write_dataset_to_writer<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| Error::io("<csv writer>", std::io::Error::other(e));
    let mut header = vec!["r".to_string(), "y".to_string()];
    header.extend(ds.x_names.iter().cloned());
    w.write_record(&header).map_err(to_io)?;
    for i in 0..ds.n() {
        let mut rec = Vec::with_capacity(ds.d() + 2);
        rec.push(ds.r[i].to_string());
        rec.push(ds.y[i].map(|v| format!("{v:?}")).unwrap_or_default());
        for j in 0..ds.d() {
            rec.push(format!("{:?}", ds.x[(i, j)]));
        }
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Monomial `prod_j x_j^{e_j}`; the all-zero exponent vector is the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BasisTerm {
    pub exponents: Vec<u32>,
}

impl BasisTerm {
    pub fn new(exponents: Vec<u32>) -> Self {
        BasisTerm { exponents }
    }

    pub fn intercept(d: usize) -> Self {
        BasisTerm {
            exponents: vec![0; d],
        }
    }

    /// `x_col` to the first power (0-based column).
    pub fn linear(d: usize, col: usize) -> Self {
        let mut e = vec![0; d];
        e[col] = 1;
        BasisTerm { exponents: e }
    }

    pub fn power(d: usize, col: usize, k: u32) -> Self {
        let mut e = vec![0; d];
        e[col] = k;
        BasisTerm { exponents: e }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_intercept(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    /// Column of a degree-one term, if this is one.
    pub fn linear_column(&self) -> Option<usize> {
        if self.degree() != 1 {
            return None;
        }
        self.exponents.iter().position(|&e| e == 1)
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(row)
            .fold(1.0, |acc, (&e, &x)| if e == 0 { acc } else { acc * x.powi(e as i32) })
    }
}

/// All monomials of total degree `<= k` in `d` variables, ordered by degree
/// and then lexicographically with earlier variables carrying higher powers.
pub fn monomials_up_to(d: usize, k: u32) -> Vec<BasisTerm> {
    fn fill(d: usize, pos: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == d - 1 {
            cur.push(remaining);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            cur.push(e);
            fill(d, pos + 1, remaining - e, cur, out);
            cur.pop();
        }
    }
    let mut terms = Vec::new();
    if d == 0 {
        return vec![BasisTerm::new(vec![])];
    }
    for deg in 0..=k {
        let mut out = Vec::new();
        fill(d, 0, deg, &mut Vec::new(), &mut out);
        terms.extend(out.into_iter().map(BasisTerm::new));
    }
    terms
}

/// Functional form of the outcome mean and the covariates entering the
/// propensity linear term. Covariates not in `x1_columns` act as instruments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub mean_basis: Vec<BasisTerm>,
    /// 0-based covariate indices.
    pub x1_columns: Vec<usize>,
    pub max_degree: u32,
}

#[derive(Serialize, Deserialize)]
struct ModelConfigJson {
    mean_basis: Vec<Vec<u32>>,
    x1_columns: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_degree: Option<u32>,
}

impl ModelConfig {
    pub fn new(mean_basis: Vec<BasisTerm>, x1_columns: Vec<usize>) -> Result<Self> {
        let cfg = ModelConfig {
            mean_basis,
            x1_columns,
            max_degree: DEFAULT_MAX_DEGREE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean_basis.is_empty() {
            return Err(Error::Config("mean_basis is empty".into()));
        }
        let d = self.mean_basis[0].dim();
        if self.mean_basis.iter().any(|t| t.dim() != d) {
            return Err(Error::Config("basis terms have differing dimensions".into()));
        }
        if !self.mean_basis.iter().any(BasisTerm::is_intercept) {
            return Err(Error::Config("mean_basis must contain the intercept".into()));
        }
        if let Some((k, t)) = self
            .mean_basis
            .iter()
            .enumerate()
            .find(|(_, t)| t.exponents.iter().any(|&e| e > self.max_degree))
        {
            return Err(Error::Config(format!(
                "term {k} ({:?}) exceeds max degree {}",
                t.exponents, self.max_degree
            )));
        }
        let mut seen = self.x1_columns.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.x1_columns.len() {
            return Err(Error::Config("x1_columns contains duplicates".into()));
        }
        if let Some(&c) = self.x1_columns.iter().find(|&&c| c >= d) {
            return Err(Error::Config(format!(
                "x1 column {} out of range for {d} covariates",
                c + 1
            )));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.mean_basis[0].dim()
    }

    pub fn q(&self) -> usize {
        self.mean_basis.len()
    }

    /// Dimension of `theta = (alpha, beta, gamma)`.
    pub fn p(&self) -> usize {
        self.x1_columns.len() + 2
    }

    /// Parses `{"mean_basis": [[..],..], "x1_columns": [..]}` with 1-based
    /// covariate columns.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: ModelConfigJson = serde_json::from_str(s)?;
        if raw.x1_columns.contains(&0) {
            return Err(Error::Config("x1_columns are 1-based".into()));
        }
        let cfg = ModelConfig {
            mean_basis: raw.mean_basis.into_iter().map(BasisTerm::new).collect(),
            x1_columns: raw.x1_columns.iter().map(|c| c - 1).collect(),
            max_degree: raw.max_degree.unwrap_or(DEFAULT_MAX_DEGREE),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        let raw = ModelConfigJson {
            mean_basis: self.mean_basis.iter().map(|t| t.exponents.clone()).collect(),
            x1_columns: self.x1_columns.iter().map(|c| c + 1).collect(),
            max_degree: (self.max_degree != DEFAULT_MAX_DEGREE).then_some(self.max_degree),
        };
        serde_json::to_string(&raw).expect("plain data serializes")
    }
}

/// Mean-basis evaluations `M` (n x q) and propensity covariates `X1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub m: DMatrix<f64>,
    pub x1: DMatrix<f64>,
}

impl DesignMatrices {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn q(&self) -> usize {
        self.m.ncols()
    }

    pub fn p(&self) -> usize {
        self.x1.ncols() + 2
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrices {
        DesignMatrices {
            m: self.m.select_rows(rows),
            x1: self.x1.select_rows(rows),
        }
    }
}

pub fn build_design(ds: &Dataset, cfg: &ModelConfig) -> Result<DesignMatrices> {
    if cfg.d() != ds.d() {
        return Err(Error::Config(format!(
            "basis has dimension {}, data has {} covariates",
            cfg.d(),
            ds.d()
        )));
    }
    let n = ds.n();
    let mut m = DMatrix::zeros(n, cfg.q());
    let mut row = vec![0.0; ds.d()];
    for i in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = ds.x[(i, j)];
        }
        for (k, term) in cfg.mean_basis.iter().enumerate() {
            let v = term.eval(&row);
            if !v.is_finite() {
                return Err(Error::Evaluation { term: k, row: i + 1 });
            }
            m[(i, k)] = v;
        }
    }
    let x1 = ds.x.select_columns(&cfg.x1_columns);
    Ok(DesignMatrices { m, x1 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityReport {
    pub identifiable: bool,
    /// Basis columns (0-based) found inside span{1, X1}.
    pub columns_in_span: Vec<usize>,
    /// Condition number of `[1 | X1 | mu_hat]`, when fitted means are given.
    pub condition_number: Option<f64>,
}

/// The propensity parameters are identified iff the mean function is not a
/// linear function of `x1`: some basis column must leave span{1, X1}.
pub fn check_identifiability(dm: &DesignMatrices, mu_hat: Option<&[f64]>) -> IdentifiabilityReport {
    let n = dm.n();
    let k = dm.x1.ncols();
    let mut base = DMatrix::zeros(n, k + 1);
    base.column_mut(0).fill(1.0);
    for j in 0..k {
        base.set_column(j + 1, &dm.x1.column(j));
    }
    let svd = SVD::new(base, true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * smax)
        .collect();
    let basis = u.select_columns(&keep);

    let mut in_span = Vec::new();
    for c in 0..dm.q() {
        let col: DVector<f64> = dm.m.column(c).into_owned();
        let norm = col.norm();
        let proj = &basis * (basis.transpose() * &col);
        let resid = (&col - proj).norm();
        if norm == 0.0 || resid < SPAN_TOLERANCE * norm {
            in_span.push(c);
        }
    }
    let identifiable = in_span.len() < dm.q();

    let condition_number = mu_hat.map(|mu| {
        let mut z = DMatrix::zeros(n, k + 2);
        z.column_mut(0).fill(1.0);
        for j in 0..k {
            z.set_column(j + 1, &dm.x1.column(j));
        }
        for (i, &v) in mu.iter().enumerate() {
            z[(i, k + 1)] = v;
        }
        linalg::condition_number(&z)
    });

    IdentifiabilityReport {
        identifiable,
        columns_in_span: in_span,
        condition_number,
    }
}
