//! Deterministic artifact writers: CSV, JSON, SVG and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use conj_atlas::flow::fmt_num;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Rounds to 12 significant digits, so JSON shows at most that many.
pub fn round12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    fmt_num(v).parse().unwrap_or(v)
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round12(n.as_f64().unwrap_or(f64::NAN));
            serde_json::Number::from_f64(r).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and rounded numbers.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Numerical(format!("serialization: {e}")))?;
    let mut s = serde_json::to_string_pretty(&round_value(v)).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        fmt_num(v)
    }
}

pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        Self { text: header.join(",") + "\n", width: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.width);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub fn columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Polyline through `points` plus circles at `marks`, in a viewBox of the
/// data bounds widened by 5% on every side.
pub fn svg(points: &[(f64, f64)], marks: &[(f64, f64)]) -> String {
    let all = points.iter().chain(marks);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    // A degenerate extent (e.g. a single point) still gets a visible box.
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let w = (x1 - x0).max(1e-3 * span);
    let h = (y1 - y0).max(1e-3 * span);
    let (mx, my) = (0.05 * w, 0.05 * h);
    let (bx, by, bw, bh) = (x0 - mx, -(y1 + my), w + 2.0 * mx, h + 2.0 * my);
    let stroke = 2e-3 * bw.max(bh);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">",
        num(bx),
        num(by),
        num(bw),
        num(bh)
    );
    if !points.is_empty() {
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{},{}", num(x), num(-y))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"{}\" points=\"{}\"/>",
            num(stroke),
            path.join(" ")
        );
    }
    for &(x, y) in marks {
        let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"red\"/>", num(x), num(-y), num(3.0 * stroke));
    }
    s.push_str("</svg>\n");
    s
}

pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.written
    }
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub workers: usize,
    pub versions: Versions,
    pub artifacts: Vec<String>,
    pub exit_code: i32,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
pub struct Versions {
    pub conj_atlas: &'static str,
    pub conj_atlas_cli: &'static str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
