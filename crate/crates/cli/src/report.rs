//! Run manifest and report rendering.

use std::fmt::Write as _;

use paritysim::experiments::BarRow;
use serde::Serialize;

/// Version of the CSV column layout. Bump when columns change.
pub const CSV_VERSION: u32 = 1;
pub const CSV_COLUMNS: [&str; 3] = ["label", "value", "standard_error"];

/// Environment variable that supplies the manifest timestamp (Unix seconds).
pub const TIMESTAMP_ENV: &str = "SOURCE_DATE_EPOCH";

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub engine: String,
    pub mode: Option<String>,
    pub trials: Option<usize>,
    /// Seconds since the Unix epoch, taken from `SOURCE_DATE_EPOCH`. Left
    /// empty otherwise so repeated runs stay byte-identical.
    pub timestamp: Option<u64>,
    pub version: String,
}

impl RunManifest {
    pub fn text_header(&self) -> String {
        let mut s = format!("# paritysim {} {}\n", self.version, self.command);
        let _ = writeln!(
            s,
            "# config={} sha256={}",
            self.config_path.as_deref().unwrap_or("(defaults)"),
            self.config_sha256.as_deref().unwrap_or("-")
        );
        let _ = write!(s, "# seed={} engine={}", self.seed, self.engine);
        if let Some(m) = &self.mode {
            let _ = write!(s, " mode={m}");
        }
        if let Some(n) = self.trials {
            let _ = write!(s, " trials={n}");
        }
        if let Some(t) = self.timestamp {
            let _ = write!(s, " timestamp={t}");
        }
        s.push('\n');
        s
    }
}

#[derive(Serialize)]
struct JsonReport<'a, T: Serialize> {
    manifest: &'a RunManifest,
    result: &'a T,
}

pub fn json<T: Serialize>(manifest: &RunManifest, result: &T) -> String {
    let mut s = serde_json::to_string_pretty(&JsonReport { manifest, result }).expect("reports serialize");
    s.push('\n');
    s
}

/// Bar-chart rows, preceded by `#` lines carrying the layout version and the
/// manifest.
pub fn csv(manifest: &RunManifest, rows: &[BarRow]) -> String {
    let mut s = format!("# paritysim-bars v{CSV_VERSION}\n");
    let m = serde_json::to_value(manifest).expect("manifest serializes");
    for (k, v) in m.as_object().expect("manifest is an object") {
        let v = match v {
            serde_json::Value::String(x) => x.clone(),
            serde_json::Value::Null => String::new(),
            other => other.to_string(),
        };
        let _ = writeln!(s, "# {k}={v}");
    }
    s.push_str(&CSV_COLUMNS.join(","));
    s.push('\n');
    for r in rows {
        let se = r.standard_error.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", r.label, r.value, se);
    }
    s
}

/// Aligned text: manifest header, then a column header and rows.
pub fn text(manifest: &RunManifest, header: &[&str], rows: &[Vec<String>], footer: &[String]) -> String {
    let mut s = manifest.text_header();
    let width = |i: usize| {
        rows.iter()
            .map(|r| r.get(i).map_or(0, |c| c.chars().count()))
            .chain(std::iter::once(header[i].chars().count()))
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..header.len()).map(width).collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    s.push_str(&line(header.to_vec()));
    s.push('\n');
    for r in rows {
        s.push_str(&line(r.iter().map(String::as_str).collect()));
        s.push('\n');
    }
    for f in footer {
        s.push_str(f);
        s.push('\n');
    }
    s
}

pub fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

pub fn fixed_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), fixed)
}
