use coordmd_core::coding::CaseLabel;
use serde::Serialize;

use crate::Format;

/// One CSV/JSON cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
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

/// 17 significant digits: enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Float(x) => serde_json::Number::from_f64(*x)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Cell::Int(i) => (*i).into(),
            Cell::Bool(b) => (*b).into(),
            Cell::Text(s) => s.clone().into(),
        }
    }
}

pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn file_name(&self, stem: &str, format: Format) -> String {
        match format {
            Format::Csv => format!("{stem}.csv"),
            Format::Json => format!("{stem}.json"),
        }
    }

    /// CSV ignores `meta`; JSON nests it next to the rows.
    pub fn render(&self, format: Format, meta: Option<serde_json::Value>) -> anyhow::Result<Vec<u8>> {
        match format {
            Format::Csv => {
                let mut s = self.columns.join(",");
                s.push('\n');
                for r in &self.rows {
                    let line: Vec<String> = r.iter().map(Cell::csv).collect();
                    s.push_str(&line.join(","));
                    s.push('\n');
                }
                Ok(s.into_bytes())
            }
            Format::Json => {
                #[derive(Serialize)]
                struct Doc<'a> {
                    columns: &'a [String],
                    rows: Vec<Vec<serde_json::Value>>,
                    #[serde(skip_serializing_if = "Option::is_none")]
                    meta: Option<serde_json::Value>,
                }
                let rows = self.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect();
                json_bytes(&Doc {
                    columns: &self.columns,
                    rows,
                    meta,
                })
            }
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(v: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn case_str(c: CaseLabel) -> &'static str {
    match c {
        CaseLabel::A => "a",
        CaseLabel::B => "b",
        CaseLabel::C => "c",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::LN_2, 1e-300, 123456.789] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.row(vec![1usize.into(), 0.25.into()]);
        let s = String::from_utf8(t.render(Format::Csv, None).unwrap()).unwrap();
        assert_eq!(s, "a,b\n1,2.5000000000000000e-1\n");
    }
}
