//! Run reports: a key/value tree with per-point tables, serialized as JSON or
//! as aligned text.

use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Structured,
}

/// A report tree. Keys are kept sorted, so serialization is deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    root: Map<String, Value>,
}

/// `{min, max, mean}` of a sample.
pub fn stats(v: &[f64]) -> Value {
    if v.is_empty() {
        return Value::Null;
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    serde_json::json!({ "min": num(min), "max": num(max), "mean": num(mean) })
}

/// A compared quantity with the threshold it was compared against.
pub fn checked(value: f64, tol: f64) -> Value {
    serde_json::json!({ "value": num(value), "tol": num(tol), "pass": value < tol })
}

/// Finite numbers as JSON numbers; non-finite values as strings.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or_else(|| Value::String(v.to_string()))
}

impl Report {
    pub fn new(command: &str, config: Value) -> Report {
        let mut r = Report { root: Map::new() };
        r.set(
            "metadata",
            serde_json::json!({
                "toolkit": "cartan-heis",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "config": config,
            }),
        );
        r
    }

    /// Inserts `value` at a dotted path, creating intermediate objects.
    pub fn set(&mut self, path: &str, value: Value) {
        let mut parts: Vec<&str> = path.split('.').collect();
        let last = parts.pop().expect("non-empty path");
        let mut node = &mut self.root;
        for p in parts {
            let entry = node.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
            if !entry.is_object() {
                *entry = Value::Object(Map::new());
            }
            node = entry.as_object_mut().expect("object");
        }
        node.insert(last.to_string(), value);
    }

    pub fn get(&self, path: &str) -> Option<&Value> {
        let mut node: Option<&Value> = None;
        for (i, p) in path.split('.').enumerate() {
            node = if i == 0 { self.root.get(p) } else { node?.get(p) };
        }
        node
    }

    pub fn tree(&self) -> &Map<String, Value> {
        &self.root
    }

    /// Every `pass` flag in the tree.
    pub fn all_pass(&self) -> bool {
        fn walk(v: &Value) -> bool {
            match v {
                Value::Object(m) => m.iter().all(|(k, v)| if k == "pass" { v != &Value::Bool(false) } else { walk(v) }),
                Value::Array(a) => a.iter().all(walk),
                _ => true,
            }
        }
        self.root.iter().all(|(_, v)| walk(v))
    }

    pub fn serialize(&self, format: Format) -> String {
        match format {
            Format::Structured => {
                let mut s = serde_json::to_string_pretty(&self.root).expect("JSON tree");
                s.push('\n');
                s
            }
            Format::Text => self.to_text(),
        }
    }

    pub fn from_structured(s: &str) -> serde_json::Result<Report> {
        Ok(Report { root: serde_json::from_str(s)? })
    }

    fn to_text(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        let mut tables: Vec<(String, &Vec<Value>)> = Vec::new();
        fn flatten<'a>(prefix: &str, v: &'a Value, rows: &mut Vec<(String, String)>, tables: &mut Vec<(String, &'a Vec<Value>)>) {
            match v {
                Value::Object(m) => {
                    for (k, v) in m {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        flatten(&key, v, rows, tables);
                    }
                }
                Value::Array(a) if a.first().is_some_and(Value::is_object) => tables.push((prefix.to_string(), a)),
                other => rows.push((prefix.to_string(), scalar_text(other))),
            }
        }
        for (k, v) in &self.root {
            flatten(k, v, &mut rows, &mut tables);
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        for (name, t) in tables {
            out.push_str(&format!("\n[{name}]\n"));
            let cols: Vec<String> = t[0].as_object().map(|m| m.keys().cloned().collect()).unwrap_or_default();
            let cells: Vec<Vec<String>> =
                t.iter().map(|row| cols.iter().map(|c| row.get(c).map(scalar_text).unwrap_or_default()).collect()).collect();
            let widths: Vec<usize> =
                (0..cols.len()).map(|i| cells.iter().map(|r| r[i].len()).chain([cols[i].len()]).max().unwrap_or(0)).collect();
            let line = |vals: &[String]| -> String {
                vals.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect::<Vec<_>>().join("  ")
            };
            out.push_str(&line(&cols));
            out.push('\n');
            for r in &cells {
                out.push_str(&line(r));
                out.push('\n');
            }
        }
        out
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.6e}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Array(a) => format!("[{}]", a.iter().map(scalar_text).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_has_metadata_only() {
        let r = Report::new("invariants", Value::Null);
        assert_eq!(r.tree().len(), 1);
        let s = r.serialize(Format::Structured);
        assert_eq!(Report::from_structured(&s).unwrap(), r);
    }

    #[test]
    fn dotted_paths_and_round_trip() {
        let mut r = Report::new("check", serde_json::json!({"grid": [3, 3, 3]}));
        r.set("nu.min", num(0.5));
        r.set("residuals.gauss", checked(1e-9, 1e-5));
        r.set("residuals.nu_recovery", checked(1e-3, 1e-5));
        assert_eq!(r.get("nu.min"), Some(&num(0.5)));
        assert!(!r.all_pass());
        let back = Report::from_structured(&r.serialize(Format::Structured)).unwrap();
        assert_eq!(back, r);
        let text = r.serialize(Format::Text);
        assert!(text.contains("residuals.gauss.value"));
    }

    #[test]
    fn tables_render_aligned() {
        let mut r = Report::new("invariants", Value::Null);
        r.set("points", serde_json::json!([{"u": [0.0, 1.0], "nu": 1.0}, {"u": [0.5, 1.0], "nu": 0.25}]));
        let text = r.serialize(Format::Text);
        assert!(text.contains("[points]"));
        assert_eq!(text.lines().filter(|l| l.contains("e-1") || l.contains("e0")).count(), 2);
    }
}
