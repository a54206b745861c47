//! Observed regression data and its CSV representation (`x,y` with header).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations `y_i` at strictly increasing design points `x_i ∈ (0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidData(format!(
                "x has {} values but y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 3 {
            return Err(Error::InvalidData(format!("need at least 3 observations, got {}", x.len())));
        }
        if let Some(i) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value at position {i}")));
        }
        if let Some(i) = x.iter().position(|&v| v <= 0.0 || v > 1.0) {
            return Err(Error::InvalidData(format!("x[{i}] = {} lies outside (0, 1]", x[i])));
        }
        if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(format!("x is not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn mean_y(&self) -> f64 {
        mean(&self.y)
    }

    /// Unbiased sample variance of `y`.
    pub fn var_y(&self) -> f64 {
        sample_variance(&self.y)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let input = CsvInput::read(reader)?;
        let mut rdr = input.reader();
        let head = input.header_line();
        let headers = rdr.headers().map_err(|e| csv_error(head, 1, e.to_string()))?.clone();
        let names: Vec<&str> = headers.iter().collect();
        if names != ["x", "y"] {
            return Err(csv_error(head, 1, format!("expected header `x,y`, found `{}`", names.join(","))));
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for record in rdr.records() {
            let (row, record) = input.located(record)?;
            if record.len() != 2 {
                return Err(csv_error(row, record.len().min(3), format!("expected 2 fields, found {}", record.len())));
            }
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| csv_error(row, col + 1, format!("`{field}` is not a number")))?;
                if col == 0 {
                    x.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        Self::new(x, y)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["x", "y"]).map_err(io)?;
        for (x, y) in self.x.iter().zip(&self.y) {
            w.write_record([format!("{x:?}"), format!("{y:?}")]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(row: usize, column: usize, message: String) -> Error {
    Error::Csv { row, column, message }
}

/// CSV body after any leading `#` lines, with the number of lines skipped.
pub(crate) struct CsvInput {
    text: String,
    skipped: usize,
}

impl CsvInput {
    pub(crate) fn read<R: Read>(mut reader: R) -> Result<Self> {
        let mut all = String::new();
        reader.read_to_string(&mut all)?;
        let mut skipped = 0;
        let mut start = 0;
        for line in all.split_inclusive('\n') {
            if !line.trim_start().starts_with('#') {
                break;
            }
            skipped += 1;
            start += line.len();
        }
        Ok(Self {
            text: all[start..].to_string(),
            skipped,
        })
    }

    /// Header required, fields trimmed.
    pub(crate) fn reader(&self) -> csv::Reader<&[u8]> {
        csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(self.text.as_bytes())
    }

    pub(crate) fn header_line(&self) -> usize {
        self.skipped + 1
    }

    /// A record together with its 1-based line in the file.
    pub(crate) fn located(&self, record: csv::Result<csv::StringRecord>) -> Result<(usize, csv::StringRecord)> {
        let line = |p: Option<&csv::Position>| p.map_or(0, |p| p.line() as usize) + self.skipped;
        match record {
            Ok(r) => Ok((line(r.position()), r)),
            Err(e) => Err(csv_error(line(e.position()), 1, e.to_string())),
        }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64
}
