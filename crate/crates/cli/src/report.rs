//! JSON summaries and CSV tables written by every subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// CSV table with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }
}

/// Renders a cell value; floats go through [`Cell`] so they use the
/// shortest round-trip form with an exponent for very small or large values.
pub fn cell(v: impl Cell) -> String {
    v.render()
}

pub trait Cell {
    fn render(&self) -> String;
}

impl Cell for f64 {
    fn render(&self) -> String {
        match serde_json::Number::from_f64(*self) {
            Some(n) => n.to_string(),
            None => self.to_string(),
        }
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_cell!(i32, i64, u32, u64, usize, bool, String, &str);

impl<T: Cell + ?Sized> Cell for &T {
    fn render(&self) -> String {
        (**self).render()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub subcommand: String,
    pub params: BTreeMap<String, Value>,
    pub pass: bool,
    pub metrics: BTreeMap<String, Value>,
    pub violations: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.into(),
            params: BTreeMap::new(),
            pass: true,
            metrics: BTreeMap::new(),
            violations: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, v: impl Serialize) {
        self.params.insert(key.into(), to_value(v));
    }

    pub fn metric(&mut self, key: &str, v: impl Serialize) {
        self.metrics.insert(key.into(), to_value(v));
    }

    /// Records a violation unless `ok`.
    pub fn check(&mut self, ok: bool, message: impl FnOnce() -> String) -> bool {
        if !ok {
            self.violations.push(message());
            self.pass = false;
        }
        ok
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    /// Writes `<subcommand>.json` and `<subcommand>-<table>.csv`; returns the paths written.
    pub fn write(&self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let json = dir.join(format!("{}.json", self.subcommand));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&json, text)?;
        written.push(json);
        for t in &self.tables {
            let path = dir.join(format!("{}-{}.csv", self.subcommand, t.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&t.header)?;
            for r in &t.rows {
                w.write_record(r)?;
            }
            w.flush()?;
            written.push(path);
        }
        Ok(written)
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// `f64` for JSON, with `inf`/`nan` spelled out instead of dropped to `null`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        Value::String(x.to_string())
    }
}
