use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

/// 16 significant digits, printed in the shortest form that reads back to the
/// rounded value. Plain notation for magnitudes in `[1e-5, 1e16)`.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let r: f64 = format!("{v:.15e}").parse().expect("formatted float parses");
    let a = r.abs();
    if (1e-5..1e16).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_num(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.clone()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
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

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    /// Column name to array of values.
    pub fn to_json_columns(&self) -> Map<String, Value> {
        let mut m = Map::new();
        for (c, name) in self.columns.iter().enumerate() {
            let col = self.rows.iter().map(|r| r[c].json()).collect();
            m.insert((*name).to_string(), Value::Array(col));
        }
        m
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub build: &'static str,
    pub subcommand: &'static str,
    pub inputs: Value,
    /// The seed actually used, after any environment override.
    pub seed: Option<u64>,
    pub seed_source: Option<&'static str>,
    pub workers: Option<u32>,
}

pub struct Sink {
    pub out: Option<PathBuf>,
    pub json: bool,
}

impl Sink {
    pub fn write_text(&self, text: &str) -> std::io::Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text),
            None => {
                let mut so = std::io::stdout().lock();
                so.write_all(text.as_bytes())?;
                so.flush()
            }
        }
    }

    /// Path next to the primary output with `suffix` appended to its name.
    pub fn sidecar(&self, suffix: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|p| {
            let mut s = p.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        })
    }

    /// Emit a table as CSV, or as a flat JSON object together with `extra`
    /// fields and the manifest.
    pub fn emit_table(&self, table: &Table, extra: Map<String, Value>, manifest: &Manifest) -> std::io::Result<()> {
        if self.json {
            let mut m = table.to_json_columns();
            m.extend(extra);
            m.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest serializes"));
            let mut s = serde_json::to_string(&Value::Object(m)).expect("json serializes");
            s.push('\n');
            self.write_text(&s)
        } else {
            self.write_text(&table.to_csv())?;
            self.write_manifest(manifest)
        }
    }

    /// The manifest goes beside `--out`, or to stderr when writing to stdout.
    pub fn write_manifest(&self, manifest: &Manifest) -> std::io::Result<()> {
        let s = serde_json::to_string(manifest).expect("manifest serializes");
        match self.sidecar(".manifest.json") {
            Some(p) => std::fs::write(p, s + "\n"),
            None => writeln!(std::io::stderr(), "manifest: {s}"),
        }
    }
}

pub fn write_json_file(path: &Path, v: &Value) -> std::io::Result<()> {
    std::fs::write(path, serde_json::to_string(v).expect("json serializes") + "\n")
}
