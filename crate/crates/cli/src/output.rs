//! CSV and JSON emission with 17 significant digits, and CSV ingestion.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

use vqcs_core::experiments::SweepRow;

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i128),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// One row holding the leaves of a JSON object; nested keys are joined
    /// with `.` and numeric arrays with `;`.
    pub fn from_json(v: &Value) -> Self {
        let mut header = Vec::new();
        let mut row = Vec::new();
        flatten("", v, &mut header, &mut row);
        Self {
            header,
            rows: vec![row],
        }
    }
}

fn leaf(v: &Value) -> Cell {
    match v {
        Value::Null => Cell::Empty,
        Value::Bool(b) => Cell::Bool(*b),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => Cell::Int(i as i128),
            (_, Some(u)) => Cell::Int(u as i128),
            _ => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => Cell::Text(s.clone()),
        Value::Array(a) => Cell::Text(
            a.iter()
                .map(|x| leaf(x).render())
                .collect::<Vec<_>>()
                .join(";"),
        ),
        Value::Object(_) => Cell::Text(v.to_string()),
    }
}

fn flatten(prefix: &str, v: &Value, header: &mut Vec<String>, row: &mut Vec<Cell>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, header, row);
            }
        }
        _ => {
            header.push(if prefix.is_empty() {
                "value".into()
            } else {
                prefix.into()
            });
            row.push(leaf(v));
        }
    }
}

/// Provenance lines written as `# key: value` above the CSV header.
pub fn csv_text(provenance: &[(String, String)], table: &Table) -> io::Result<String> {
    let mut out = String::new();
    for (k, v) in provenance {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| io::Error::other(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(io::Error::other)?);
    Ok(out)
}

struct Digits17;

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with every float printed to 17 significant digits
/// (non-finite values become `null`).
pub fn json_text<T: Serialize>(value: &T) -> io::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(io::Error::other)
}

pub const SWEEP_HEADER: [&str; 11] = [
    "h",
    "p",
    "energy",
    "residual",
    "m_x",
    "m_z",
    "chi_x",
    "branch_key",
    "total_time",
    "converged",
    "status",
];

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&SWEEP_HEADER);
    for r in rows {
        t.push(vec![
            r.h.into(),
            r.p.into(),
            r.energy.into(),
            r.residual.into(),
            r.m_x.into(),
            r.m_z.into(),
            r.chi_x.into(),
            r.branch_key.into(),
            r.total_time.into(),
            r.converged.into(),
            r.status.clone().into(),
        ]);
    }
    t
}

/// Rows of a sweep CSV; `#` lines are skipped.
pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    rdr.deserialize().collect()
}
