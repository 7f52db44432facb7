//! CSV input and output. Numbers are written with 12 significant digits so
//! repeated runs diff cleanly, and files are replaced atomically.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::metrics::{ScoreSummary, Summary, TrialScore};
use crate::model::{Design, Response};
use crate::simulate::{MethodSummary, TrialRecord};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: r,
            column: 0,
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: r,
                        column: c,
                        message: format!("not a finite number: {cell:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::Parse {
                    row: r,
                    column: row.len().min(first),
                    message: format!("expected {first} fields, found {}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Headerless numeric CSV, one observation per row.
pub fn parse_design(text: &str) -> Result<Design> {
    let rows = parse_rows(text)?;
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    Design::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Single-column headerless numeric CSV.
pub fn parse_response(text: &str) -> Result<Response> {
    let rows = parse_rows(text)?;
    if let Some(r) = rows.iter().position(|r| r.len() != 1) {
        return Err(Error::Parse {
            row: r,
            column: 1,
            message: "response file must have exactly one column".into(),
        });
    }
    Response::from_vec(rows.into_iter().map(|r| r[0]).collect())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn read_design(path: &Path) -> Result<Design> {
    parse_design(&read_text(path)?)
}

pub fn read_response(path: &Path) -> Result<Response> {
    parse_response(&read_text(path)?)
}

/// Decimal rendering rounded to 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    format!("{rounded}")
}

/// Rows of string cells under a header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        // writing into memory cannot fail
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r).expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }
}

pub fn matrix_table(m: &DMatrix<f64>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| fmt_num(*v))).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn score_cells(s: Option<&TrialScore>) -> Vec<String> {
    match s {
        Some(s) => vec![
            s.n_selected.to_string(),
            fmt_num(s.fdp),
            fmt_num(s.fdp_dir),
            fmt_num(s.mfdr_dir_summand),
            fmt_num(s.power),
            fmt_num(s.restricted_power),
        ],
        None => vec![String::new(); 6],
    }
}

/// One row per (setting, trial, method).
pub fn trials_table(records: &[TrialRecord]) -> CsvTable {
    let mut t = CsvTable::new([
        "setting",
        "rho",
        "trial",
        "method",
        "n_selected",
        "fdp",
        "fdp_dir",
        "mfdr_dir",
        "power",
        "restricted_power",
        "partial_fdp",
        "partial_fdp_dir",
        "sure_screen",
        "screen_size",
        "error",
    ]);
    for r in records {
        let mut row = vec![r.setting.to_string(), fmt_num(r.rho), r.trial.to_string(), r.method.clone()];
        row.extend(score_cells(r.full.as_ref()));
        row.push(opt_num(r.partial.map(|s| s.fdp)));
        row.push(opt_num(r.partial.map(|s| s.fdp_dir)));
        row.push(r.sure_screen.map(|b| u8::from(b).to_string()).unwrap_or_default());
        row.push(r.screen_size.map(|k| k.to_string()).unwrap_or_default());
        row.push(r.error.clone().unwrap_or_default());
        t.push(row);
    }
    t
}

fn pair(s: &Summary) -> [String; 2] {
    [fmt_num(s.mean), fmt_num(s.se)]
}

fn opt_pair(s: Option<&Summary>) -> [String; 2] {
    s.map(pair).unwrap_or_default()
}

/// Means and standard errors per (setting, method).
pub fn summary_table(summaries: &[MethodSummary]) -> CsvTable {
    let mut t = CsvTable::new([
        "setting",
        "rho",
        "method",
        "trials",
        "failures",
        "fdr",
        "fdr_se",
        "dir_fdr",
        "dir_fdr_se",
        "mfdr_dir",
        "mfdr_dir_se",
        "power",
        "power_se",
        "restr_power",
        "restr_power_se",
        "n_selected",
        "n_selected_se",
        "partial_fdr",
        "partial_fdr_se",
        "partial_dir_fdr",
        "partial_dir_fdr_se",
        "sure_screen_rate",
        "sure_screen_rate_se",
        "dir_fdr_given_sure_screen",
        "dir_fdr_given_sure_screen_se",
    ]);
    for s in summaries {
        let f: &ScoreSummary = &s.full;
        let mut row = vec![
            s.setting.to_string(),
            fmt_num(s.rho),
            s.method.clone(),
            s.trials.to_string(),
            s.failures.to_string(),
        ];
        for sum in [&f.fdr, &f.fdr_dir, &f.mfdr_dir, &f.power, &f.restricted_power, &f.n_selected] {
            row.extend(pair(sum));
        }
        row.extend(pair(&s.partial.fdr));
        row.extend(pair(&s.partial.fdr_dir));
        row.extend(opt_pair(s.sure_screen_rate.as_ref()));
        row.extend(opt_pair(s.fdr_dir_given_sure_screen.as_ref()));
        t.push(row);
    }
    t
}

/// Power and error rates against the correlation parameter, for plotting.
pub fn plot_table(summaries: &[MethodSummary]) -> CsvTable {
    let mut t = CsvTable::new(["rho", "method", "fdr", "dir_fdr", "power", "restr_power"]);
    for s in summaries {
        t.push(vec![
            fmt_num(s.rho),
            s.method.clone(),
            fmt_num(s.full.fdr.mean),
            fmt_num(s.full.fdr_dir.mean),
            fmt_num(s.full.power.mean),
            fmt_num(s.full.restricted_power.mean),
        ]);
    }
    t
}
