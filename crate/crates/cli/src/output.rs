//! Rendering of result files. Every file carries the tool version and the
//! resolved configuration (which includes the seed).

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;

pub const TOOL: &str = "spikedet";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// What goes at the top of every file.
#[derive(Debug, Clone)]
pub struct Provenance {
    entries: Vec<(String, String)>,
    seed: u64,
    duration: Option<f64>,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, duration: Option<f64>) -> Self {
        Self {
            entries: cfg.entries(),
            seed: cfg.seed,
            duration,
        }
    }

    fn csv_header(&self) -> String {
        let mut s = format!("# tool = {TOOL} {VERSION}\n");
        for (k, v) in &self.entries {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        if let Some(t) = self.duration {
            s.push_str(&format!("# duration_seconds = {t}\n"));
        }
        s
    }

    fn json_envelope(&self, result: Value) -> Value {
        let config: Map<String, Value> = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        let mut obj = json!({
            "tool": TOOL,
            "version": VERSION,
            "seed": self.seed,
            "config": config,
            "result": result,
        });
        if let Some(t) = self.duration {
            obj["duration_seconds"] = json!(t);
        }
        obj
    }
}

/// A CSV cell: floats get 17 significant digits.
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
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
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

pub fn csv(prov: &Provenance, name: &str, columns: &[&str], rows: Vec<Vec<Cell>>) -> Artifact {
    let mut s = prov.csv_header();
    s.push_str(&columns.join(","));
    s.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        s.push_str(&row.iter().map(Cell::render).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    Artifact {
        name: name.to_string(),
        contents: s,
    }
}

pub fn json_file<T: Serialize>(prov: &Provenance, name: &str, result: &T) -> Artifact {
    let value = serde_json::to_value(result).expect("results serialize");
    let mut contents = serde_json::to_string_pretty(&prov.json_envelope(value)).expect("json renders");
    contents.push('\n');
    Artifact {
        name: name.to_string(),
        contents,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, -7.25e12] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_has_provenance_then_header() {
        let cfg = ExperimentConfig::default();
        let a = csv(&Provenance::new(&cfg, None), "x.csv", &["a", "b"], vec![vec![1usize.into(), 0.5.into()]]);
        let lines: Vec<&str> = a.contents.lines().collect();
        assert!(lines[0].starts_with("# tool = spikedet"));
        assert!(lines.contains(&"# seed = 1"));
        assert_eq!(lines[lines.len() - 2], "a,b");
        assert_eq!(lines[lines.len() - 1], "1,5.0000000000000000e-1");
    }
}
