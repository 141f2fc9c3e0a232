//! Fixed-schema output tables written as CSV or JSON.

use std::io::Write;

use serde_json::{Map, Number, Value as Json};

use crate::config::{ExperimentConfig, Format};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => float_text(*v),
            Cell::Float(_) | Cell::Empty => String::new(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => (*b as u8).to_string(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Cell::Int(v) => Json::Number((*v).into()),
            Cell::Float(v) => Number::from_f64(*v).map(Json::Number).unwrap_or(Json::Null),
            Cell::Text(s) => Json::String(s.clone()),
            Cell::Bool(b) => Json::Bool(*b),
            Cell::Empty => Json::Null,
        }
    }
}

/// Shortest round-trip text; exponent form for tiny magnitudes, and no `-0`.
fn float_text(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-5 {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map(Into::into).unwrap_or(Cell::Empty)
    }
}

/// Rows under a fixed column list. Each CSV row is prefixed by the
/// resolved configuration; JSON carries it once at the top.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    /// Rows carry their own values for the config columns named in
    /// `row_overrides` (swept parameters and per-row seeds).
    pub fn write(
        &self,
        cfg: &ExperimentConfig,
        row_overrides: &[Vec<(&'static str, String)>],
        out: &mut dyn Write,
    ) -> std::io::Result<()> {
        let echo = cfg.echo();
        match cfg.format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                let header: Vec<&str> = echo
                    .iter()
                    .map(|(k, _)| *k)
                    .chain(self.columns.iter().copied())
                    .collect();
                w.write_record(&header)?;
                for (i, row) in self.rows.iter().enumerate() {
                    let over = row_overrides.get(i);
                    let mut rec: Vec<String> = echo
                        .iter()
                        .map(|(k, v)| {
                            over.and_then(|o| o.iter().find(|(ok, _)| ok == k))
                                .map(|(_, ov)| ov.clone())
                                .unwrap_or_else(|| v.clone())
                        })
                        .collect();
                    rec.extend(row.iter().map(Cell::csv));
                    w.write_record(&rec)?;
                }
                w.flush()?;
            }
            Format::Json => {
                let mut config = Map::new();
                for (k, v) in &echo {
                    config.insert((*k).to_string(), Json::String(v.clone()));
                }
                let rows: Vec<Json> = self
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let mut obj = Map::new();
                        if let Some(over) = row_overrides.get(i) {
                            for (k, v) in over {
                                obj.insert((*k).to_string(), Json::String(v.clone()));
                            }
                        }
                        for (c, cell) in self.columns.iter().zip(row) {
                            obj.insert((*c).to_string(), cell.json());
                        }
                        Json::Object(obj)
                    })
                    .collect();
                let mut doc = Map::new();
                doc.insert("config".into(), Json::Object(config));
                doc.insert(
                    "columns".into(),
                    Json::Array(
                        self.columns
                            .iter()
                            .map(|c| Json::String((*c).into()))
                            .collect(),
                    ),
                );
                doc.insert("rows".into(), Json::Array(rows));
                serde_json::to_writer_pretty(&mut *out, &Json::Object(doc))?;
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_cells() {
        assert_eq!(Cell::Float(0.25).csv(), "0.25");
        assert_eq!(Cell::Float(f64::NAN).csv(), "");
        assert_eq!(Cell::from(None::<f64>).csv(), "");
        assert_eq!(Cell::Bool(true).csv(), "1");
        assert_eq!(Cell::Float(-0.0).csv(), "0");
        assert_eq!(Cell::Float(2.5e-17).csv(), "2.5e-17");
        assert_eq!(Cell::from(u64::MAX).csv(), u64::MAX.to_string());
    }
}
