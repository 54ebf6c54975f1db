//! CSV rendering and parsing, and atomic file output.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::experiments::{BoundRow, RiskRow};
use crate::Result;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub trait CsvRecord {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRecord for BoundRow {
    const HEADER: &'static [&'static str] =
        &["param", "n_alpha_sq", "m_tilde", "lower_bound", "lower_argmax_a", "upper_bound"];

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.param),
            fmt_f64(self.n_alpha_sq),
            self.m_tilde.to_string(),
            fmt_f64(self.lower_bound),
            self.lower_argmax_a.to_string(),
            fmt_f64(self.upper_bound),
        ]
    }
}

impl CsvRecord for RiskRow {
    const HEADER: &'static [&'static str] =
        &["algorithm", "param_name", "param_value", "n", "alpha", "trials", "mse", "ci99"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.algorithm.clone(),
            self.param_name.clone(),
            fmt_f64(self.param_value),
            self.n.to_string(),
            fmt_f64(self.alpha),
            self.trials.to_string(),
            fmt_f64(self.mse),
            fmt_f64(self.ci99),
        ]
    }
}

/// `# {config}` followed by the header and the rows.
pub fn render_csv<R: CsvRecord>(echo: &str, rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(R::HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    let body = w.into_inner().map_err(|e| e.into_error())?;
    let mut out = format!("# {echo}\n");
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    Ok(out)
}

/// A parsed CSV document: the echoed config (if any), header and raw cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub echo: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    /// Reads CSV text, skipping `#` comment lines. The first comment line
    /// is kept as the echoed config.
    pub fn parse(text: &str) -> Result<Self> {
        let echo = text
            .lines()
            .find(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim().to_string());
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { echo, header, rows })
    }

    /// Typed rows, matched to struct fields by header name.
    pub fn deserialize<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
