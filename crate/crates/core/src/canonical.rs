//! Canonical text form for domain values: JSON with sorted object keys,
//! integers verbatim and every floating-point number written with exactly
//! six fractional digits. Two values are equal for determinism purposes iff
//! their canonical strings are byte-identical.

use serde::Serialize;
use serde_json::Value;
use std::fmt::Write;

/// Number of fractional digits used for floats.
pub const FLOAT_DIGITS: usize = 6;

pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> String {
    // Serialization into a Value cannot fail for the plain data types of
    // this crate (string keys only, no non-finite floats are produced).
    let v = serde_json::to_value(value).expect("canonical: value is not representable as JSON");
    let mut out = String::new();
    write_value(&mut out, &v);
    out
}

pub fn format_float(x: f64) -> String {
    let s = format!("{:.*}", FLOAT_DIGITS, x);
    // "-0.000000" and "0.000000" must compare equal.
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(0.0)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(out, &map[k]);
            }
            out.push('}');
        }
    }
}
