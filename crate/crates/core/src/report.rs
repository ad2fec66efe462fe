//! Self-describing output files and report bundles.
//!
//! Tables are CSV with a first line `# {json header}`; reports are JSON
//! objects. Both carry a `schema` name and a `version`, and bundles refuse
//! to merge artifacts whose version differs from [`SCHEMA_VERSION`].

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const TABLE_SCHEMA: &str = "kpzlab.table";
pub const BUNDLE_SCHEMA: &str = "kpzlab.bundle";

/// Header line of a CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub schema: String,
    pub version: u32,
    /// What the rows hold, e.g. `rate_curve`.
    pub kind: String,
    pub columns: Vec<String>,
    /// Everything needed to reproduce the table.
    pub run: Value,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

impl TableHeader {
    pub fn new(kind: &str, columns: &[&str], run: Value) -> Self {
        Self {
            schema: TABLE_SCHEMA.into(),
            version: SCHEMA_VERSION,
            kind: kind.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            run,
            summary: Value::Null,
        }
    }

    pub fn with_summary(mut self, summary: Value) -> Self {
        self.summary = summary;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: TableHeader,
    pub rows: Vec<Vec<f64>>,
}

impl std::fmt::Display for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|_| std::fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

impl Table {
    pub fn new(header: TableHeader) -> Self {
        Self {
            header,
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Writes the header line and rows. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", serde_json::to_string(&self.header)?)?;
        writeln!(w, "{}", self.header.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| invalid("empty table"))?;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| invalid("table must start with a '#' header line"))?;
        let header: TableHeader = serde_json::from_str(json.trim())?;
        let names = lines
            .next()
            .ok_or_else(|| invalid("table has no column line"))?;
        if names
            .split(',')
            .map(str::trim)
            .ne(header.columns.iter().map(String::as_str))
        {
            return Err(invalid("column line does not match the header"));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| invalid(format!("bad cell {c:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.columns.len() {
                return Err(invalid("row width does not match the header"));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

/// One merged input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub source: String,
    pub schema: String,
    pub kind: String,
    pub status: Option<String>,
    pub content: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub source: String,
    pub kind: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub schema: String,
    pub version: u32,
    pub entries: Vec<BundleEntry>,
    pub summary: Vec<SummaryRow>,
    /// `fail` if any entry failed, else `inconclusive` if any was, else
    /// `pass`; `None` for an empty bundle.
    pub overall: Option<String>,
}

fn check_version(source: &str, v: Option<u64>) -> Result<()> {
    match v {
        Some(v) if v == SCHEMA_VERSION as u64 => Ok(()),
        other => Err(Error::Schema {
            expected: format!("version {SCHEMA_VERSION}"),
            found: format!(
                "{} in {source}",
                other.map_or("no version".to_string(), |v| format!("version {v}"))
            ),
        }),
    }
}

fn parse_artifact(source: &str, text: &str) -> Result<BundleEntry> {
    if text.trim_start().starts_with('#') {
        let first = text.trim_start().lines().next().unwrap_or("");
        let raw: Value = serde_json::from_str(first.trim_start_matches('#').trim())?;
        check_version(source, raw.get("version").and_then(Value::as_u64))?;
        let table = Table::parse(text.trim_start())?;
        let status = table
            .header
            .summary
            .get("status")
            .and_then(Value::as_str)
            .map(String::from);
        return Ok(BundleEntry {
            source: source.into(),
            schema: table.header.schema.clone(),
            kind: table.header.kind.clone(),
            status,
            content: serde_json::to_value(&table)?,
        });
    }
    let v: Value = serde_json::from_str(text)?;
    check_version(source, v.get("version").and_then(Value::as_u64))?;
    let get = |k: &str| v.get(k).and_then(Value::as_str).map(String::from);
    Ok(BundleEntry {
        source: source.into(),
        schema: get("schema").unwrap_or_default(),
        kind: get("kind").unwrap_or_else(|| "report".into()),
        status: get("status"),
        content: v,
    })
}

/// Merges `(source name, file contents)` pairs into one bundle.
pub fn merge(inputs: &[(String, String)]) -> Result<Bundle> {
    let mut entries = Vec::with_capacity(inputs.len());
    for (source, text) in inputs {
        entries.push(parse_artifact(source, text)?);
    }
    let summary: Vec<SummaryRow> = entries
        .iter()
        .map(|e| SummaryRow {
            source: e.source.clone(),
            kind: e.kind.clone(),
            status: e.status.clone().unwrap_or_else(|| "n/a".into()),
        })
        .collect();
    let has = |s: &str| summary.iter().any(|r| r.status == s);
    let overall = if entries.is_empty() {
        None
    } else if has("fail") {
        Some("fail".into())
    } else if has("inconclusive") {
        Some("inconclusive".into())
    } else {
        Some("pass".into())
    };
    Ok(Bundle {
        schema: BUNDLE_SCHEMA.into(),
        version: SCHEMA_VERSION,
        entries,
        summary,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn table() -> Table {
        let mut t = Table::new(TableHeader::new(
            "rate_curve",
            &["s", "rate"],
            json!({"family": "deterministic"}),
        ));
        t.push(vec![0.1, 0.1f64.powf(1.5) * 4.0 * 2f64.sqrt() / 3.0]);
        t.push(vec![1.0, 1.885618083164127]);
        t
    }

    #[test]
    fn table_round_trip_is_exact() {
        let t = table();
        let back = Table::parse(&t.to_string()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column("rate").unwrap()[1], 1.885618083164127);
    }

    #[test]
    fn malformed_tables() {
        assert!(Table::parse("s,rate\n1,2").is_err());
        let text = table().to_string().replace("1.0,1.885618083164127", "1.0");
        assert!(Table::parse(&text).is_err());
    }

    #[test]
    fn empty_bundle() {
        let b = merge(&[]).unwrap();
        assert!(b.entries.is_empty());
        assert_eq!(b.overall, None);
    }

    #[test]
    fn mixed_versions_are_rejected() {
        let good = ("a.csv".to_string(), table().to_string());
        let bad = (
            "b.json".to_string(),
            json!({"schema": "kpzlab.hyp", "version": 2}).to_string(),
        );
        assert!(matches!(
            merge(&[good.clone(), bad]),
            Err(Error::Schema { .. })
        ));
        let hyp = (
            "h.json".to_string(),
            json!({"schema": "kpzlab.hyp", "version": 1, "kind": "hyp_report", "status": "pass"})
                .to_string(),
        );
        let b = merge(&[good, hyp]).unwrap();
        assert_eq!(b.summary.len(), 2);
        assert_eq!(b.overall.as_deref(), Some("pass"));
    }
}
