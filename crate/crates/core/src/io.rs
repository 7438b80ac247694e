//! CSV input and output for portfolios and correlation matrices.
//!
//! Portfolio files carry the header `label,default_prob,recovery,notional`
//! and one row per name. Matrix files are `N` rows of `N` numbers with no
//! header. Lines starting with `#` are ignored in both.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::CorrelationMatrix;
use crate::model::{ObligorName, ReferencePortfolio};

pub const PORTFOLIO_HEADER: [&str; 4] = ["label", "default_prob", "recovery", "notional"];

fn reader<R: Read>(source: R, headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(source)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, csv::Position::line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_number(field: &str, what: &str, line: u64) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{what}: `{field}` is not a number"),
    })
}

pub fn read_portfolio<R: Read>(source: R) -> Result<ReferencePortfolio> {
    let mut rdr = reader(source, true);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(PORTFOLIO_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                PORTFOLIO_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut names = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, csv::Position::line);
        if record.len() != PORTFOLIO_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", PORTFOLIO_HEADER.len(), record.len()),
            });
        }
        let label = record[0].to_string();
        if label.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty label".into(),
            });
        }
        let p = parse_number(&record[1], "default_prob", line)?;
        let r = parse_number(&record[2], "recovery", line)?;
        let n = parse_number(&record[3], "notional", line)?;
        let name = ObligorName::new(label, p, r, n).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        names.push(name);
    }
    if names.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "portfolio has no names".into(),
        });
    }
    ReferencePortfolio::new(names)
}

pub fn read_portfolio_path(path: impl AsRef<Path>) -> Result<ReferencePortfolio> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_portfolio(file)
}

/// Writes in portfolio order with shortest round-trip number formatting.
pub fn write_portfolio<W: Write>(sink: W, portfolio: &ReferencePortfolio) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(PORTFOLIO_HEADER).map_err(io)?;
    for o in portfolio.names() {
        w.write_record([
            o.label.clone(),
            o.default_prob.to_string(),
            o.recovery.to_string(),
            o.notional.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn read_matrix<R: Read>(source: R) -> Result<CorrelationMatrix> {
    let mut rows = Vec::new();
    for record in reader(source, false).records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, csv::Position::line);
        let row = record
            .iter()
            .enumerate()
            .map(|(j, f)| parse_number(f, &format!("column {}", j + 1), line))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, row));
    }
    let n = rows.len();
    if let Some((line, row)) = rows.iter().find(|(_, r)| r.len() != n) {
        return Err(Error::Parse {
            line: *line,
            message: format!("row has {} entries, expected {n}", row.len()),
        });
    }
    CorrelationMatrix::from_rows(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn read_matrix_path(path: impl AsRef<Path>) -> Result<CorrelationMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_matrix(file)
}

pub fn write_matrix<W: Write>(sink: W, matrix: &CorrelationMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in matrix.rows() {
        w.write_record(row.iter().map(f64::to_string))
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
