//! Report emission: JSON with sorted keys and CSV tables, every float
//! rounded to 12 significant digits.

use serde::Serialize;
use serde_json::{Map, Number, Value};

pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().expect("formatted float parses")
}

/// Rounds every float in `v`; non-finite floats become `null`.
pub fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

pub fn to_value<T: Serialize>(t: &T) -> Value {
    normalize(serde_json::to_value(t).expect("report serializes"))
}

pub fn emit_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(&normalize(v.clone())).expect("value serializes");
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) if x.is_finite() => round_sig(*x).to_string(),
            Cell::Num(x) => x.to_string(),
            Cell::Text(t) => t.clone(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
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

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn emit_csv(t: &Table) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header).expect("in-memory write");
    for r in &t.rows {
        w.write_record(r.iter().map(Cell::render)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn twelve_digits() {
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(2.0f64.sqrt() * 1e10), 14142135623.7);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(-1.23456789012345e-7), -1.23456789012e-7);
    }

    #[test]
    fn json_is_sorted_and_idempotent() {
        let v = json!({"b": 1.0 / 7.0, "a": [2.5, f64::NAN.to_string()], "findings": []});
        let s = emit_json(&v);
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("0.142857142857"));
        assert!(s.contains("\"findings\": []"));
        let again: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(emit_json(&again), s);
    }

    #[test]
    fn csv_rows() {
        let mut t = Table::new("runs", &["id", "distance"]);
        for i in 0..3 {
            t.push(vec![i.into(), (1.0 / 3.0).into()]);
        }
        let s = emit_csv(&t);
        assert_eq!(s.lines().count(), 4);
        assert_eq!(s.lines().nth(1).unwrap(), "0,0.333333333333");
    }
}
