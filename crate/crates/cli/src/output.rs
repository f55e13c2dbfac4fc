//! JSON and CSV emission with reals at 17 significant digits.

use std::fmt::Write as _;

use serde_json::Value;

pub const SCHEMA_VERSION: &str = "1";

pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn number(n: &serde_json::Number) -> String {
    if n.is_f64() {
        match n.as_f64() {
            Some(x) if x.is_finite() => format!("{x:.16e}"),
            _ => "null".into(),
        }
    } else {
        n.to_string()
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n(' ', 2 * d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&number(n)),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            // short arrays of scalars stay on one line
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                pad(out, indent + 1);
                let _ = write!(out, "{}: ", Value::String(k.clone()));
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

pub fn render(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}
