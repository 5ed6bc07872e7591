//! Plain-text rendering of command output.
//!
//! Scalars become aligned `key  value` rows under dotted paths, arrays of
//! objects become column tables, and nested arrays are printed as compact
//! JSON.

use serde_json::Value;

pub fn render(value: &Value) -> String {
    let mut rows = Vec::new();
    let mut tables = Vec::new();
    flatten("", value, &mut rows, &mut tables);
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in &rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    for (name, table) in tables {
        out.push('\n');
        out.push_str(&name);
        out.push('\n');
        out.push_str(&table);
    }
    out
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn flatten(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>, tables: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(prefix, k), v, rows, tables);
            }
        }
        Value::Array(items) if !items.is_empty() && items.iter().all(Value::is_object) => {
            tables.push((prefix.to_string(), columns(items)));
        }
        Value::Array(items) if items.iter().all(|v| !v.is_array() && !v.is_object()) => {
            let parts: Vec<String> = items.iter().map(scalar).collect();
            rows.push((prefix.to_string(), parts.join(", ")));
        }
        Value::Array(_) => rows.push((prefix.to_string(), value.to_string())),
        other => rows.push((prefix.to_string(), scalar(other))),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Object(_) | Value::Array(_) => v.to_string(),
        other => scalar(other),
    }
}

fn columns(items: &[Value]) -> String {
    let mut headers: Vec<String> = Vec::new();
    for item in items {
        if let Value::Object(map) = item {
            for k in map.keys() {
                if !headers.contains(k) {
                    headers.push(k.clone());
                }
            }
        }
    }
    let body: Vec<Vec<String>> = items
        .iter()
        .map(|item| headers.iter().map(|h| item.get(h).map(cell).unwrap_or_default()).collect())
        .collect();
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| body.iter().map(|r| r[i].chars().count()).chain([h.chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("{}\n", parts.join("  ").trim_end())
    };
    let mut out = line(&headers);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(&rule));
    for r in &body {
        out.push_str(&line(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn renders_scalars_and_tables() {
        let v = json!({"a": 1, "b": {"c": "x"}, "list": [{"name": "m", "value": 0.5}], "xs": [1, 2]});
        let text = render(&v);
        assert!(text.contains("a    1\n"));
        assert!(text.contains("b.c  x\n"));
        assert!(text.contains("xs   1, 2\n"));
        assert!(text.contains("name  value"));
        assert!(text.contains("m     0.5"));
    }
}
