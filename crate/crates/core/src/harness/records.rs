use std::path::Path;

use crate::error::{GfdmError, Result};

/// One `(method, degree, N, trial, variant)` outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: String,
    pub degree: usize,
    pub n: usize,
    pub trial: usize,
    /// Row set of the solve: `all`, `Y`, `eps<m>`, or `given`.
    pub variant: String,
    pub fe: Option<f64>,
    pub ie: Option<f64>,
    pub c_max: f64,
    pub c_mean: f64,
    pub c_nonzero_rows: usize,
    pub fallback_rows: usize,
    pub flagged: usize,
    pub eps_star: Option<f64>,
    pub inv_norm: Option<f64>,
    /// `ok`, or the error message of a failed cell.
    pub status: String,
    pub wall_time: f64,
}

pub const COLUMNS: [&str; 17] = [
    "config_hash",
    "method",
    "degree",
    "n",
    "trial",
    "variant",
    "fe",
    "ie",
    "c_max",
    "c_mean",
    "c_nonzero_rows",
    "fallback_rows",
    "flagged",
    "eps_star",
    "inv_norm",
    "status",
    "wall_time",
];

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn fields(&self) -> Vec<String> {
        vec![
            self.config_hash.clone(),
            self.method.clone(),
            self.degree.to_string(),
            self.n.to_string(),
            self.trial.to_string(),
            self.variant.clone(),
            opt(self.fe),
            opt(self.ie),
            real(self.c_max),
            real(self.c_mean),
            self.c_nonzero_rows.to_string(),
            self.fallback_rows.to_string(),
            self.flagged.to_string(),
            opt(self.eps_star),
            opt(self.inv_norm),
            self.status.clone(),
            real(self.wall_time),
        ]
    }

    fn from_fields(rec: &csv::StringRecord, line: usize) -> Result<RunRecord> {
        if rec.len() != COLUMNS.len() {
            return Err(GfdmError::RaggedRow { line, expected: COLUMNS.len(), found: rec.len() });
        }
        let err = |col: &str| GfdmError::Parse { line, msg: format!("bad `{col}`") };
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| err(COLUMNS[i]));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| err(COLUMNS[i]));
        let onum = |i: usize| if rec[i].is_empty() { Ok(None) } else { num(i).map(Some) };
        Ok(RunRecord {
            config_hash: rec[0].to_string(),
            method: rec[1].to_string(),
            degree: int(2)?,
            n: int(3)?,
            trial: int(4)?,
            variant: rec[5].to_string(),
            fe: onum(6)?,
            ie: onum(7)?,
            c_max: num(8)?,
            c_mean: num(9)?,
            c_nonzero_rows: int(10)?,
            fallback_rows: int(11)?,
            flagged: int(12)?,
            eps_star: onum(13)?,
            inv_norm: onum(14)?,
            status: rec[15].to_string(),
            wall_time: num(16)?,
        })
    }
}

/// Streaming CSV writer with the fixed header.
pub struct RecordWriter<W: std::io::Write> {
    inner: csv::Writer<W>,
}

impl RecordWriter<std::fs::File> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(std::fs::File::create(path)?)
    }
}

impl<W: std::io::Write> RecordWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(COLUMNS)?;
        Ok(RecordWriter { inner })
    }

    pub fn write(&mut self, r: &RunRecord) -> Result<()> {
        self.inner.write_record(r.fields())?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(GfdmError::Parse { line: 1, msg: "unexpected header".into() });
    }
    rdr.records()
        .enumerate()
        .map(|(i, r)| RunRecord::from_fields(&r?, i + 2))
        .collect()
}
