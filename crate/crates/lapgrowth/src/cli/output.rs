//! CSV, JSON and SVG emission with provenance stamps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::{json, Map, Value};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..17).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes files into the output directory, stamping each with the config hash.
pub struct Sink {
    dir: PathBuf,
    hash: String,
    command: String,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, hash: &str, command: &str) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Sink { dir: dir.to_path_buf(), hash: hash.to_string(), command: command.to_string(), written: Vec::new() })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn put(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.written.push(path);
        Ok(())
    }

    /// CSV with a `#` provenance line and a header row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<CsvCell>]) -> std::io::Result<()> {
        let mut s = String::new();
        writeln!(s, "# lapgrowth {ARTIFACT_VERSION} command={} config_sha256={}", self.command, self.hash).unwrap();
        writeln!(s, "{}", header.join(",")).unwrap();
        for row in rows {
            let cells: Vec<String> = row.iter().map(CsvCell::render).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        self.put(name, &s)
    }

    /// JSON object with schema_version, artifact_version and config_hash first.
    pub fn json(&mut self, name: &str, body: Value) -> std::io::Result<()> {
        let mut obj = Map::new();
        obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
        obj.insert("artifact_version".into(), json!(ARTIFACT_VERSION));
        obj.insert("config_hash".into(), json!(self.hash));
        obj.insert("command".into(), json!(self.command));
        if let Value::Object(m) = body {
            obj.extend(m);
        } else {
            obj.insert("data".into(), body);
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(obj)).expect("json serializes");
        s.push('\n');
        self.put(name, &s)
    }

    pub fn svg(&mut self, name: &str, svg: &Svg) -> std::io::Result<()> {
        let body = svg.render(&format!("lapgrowth {ARTIFACT_VERSION} config_sha256={}", self.hash));
        self.put(name, &body)
    }
}

/// One CSV field.
#[derive(Debug, Clone)]
pub enum CsvCell {
    Real(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl CsvCell {
    fn render(&self) -> String {
        match self {
            CsvCell::Real(x) => fmt_g17(*x),
            CsvCell::Int(k) => k.to_string(),
            CsvCell::Bool(b) => (if *b { "1" } else { "0" }).to_string(),
            CsvCell::Text(t) => t.clone(),
        }
    }
}

impl From<f64> for CsvCell {
    fn from(x: f64) -> Self {
        CsvCell::Real(x)
    }
}

impl From<usize> for CsvCell {
    fn from(k: usize) -> Self {
        CsvCell::Int(k as i64)
    }
}

impl From<bool> for CsvCell {
    fn from(b: bool) -> Self {
        CsvCell::Bool(b)
    }
}

/// `[re, im]` pair for JSON.
pub fn cjson(z: Complex64) -> Value {
    json!([z.re, z.im])
}

/// Minimal SVG canvas in world coordinates (y up).
pub struct Svg {
    x0: f64,
    y0: f64,
    scale: f64,
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64, width: f64) -> Self {
        let scale = width / (xmax - xmin);
        Svg { x0: xmin, y0: ymax, scale, width, height: (ymax - ymin) * scale, body: String::new() }
    }

    fn px(&self, z: Complex64) -> (f64, f64) {
        ((z.re - self.x0) * self.scale, (self.y0 - z.im) * self.scale)
    }

    pub fn polyline(&mut self, pts: &[Complex64], stroke: &str, width: f64, closed: bool) {
        let coords: Vec<String> = pts
            .iter()
            .map(|z| {
                let (x, y) = self.px(*z);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let tag = if closed { "polygon" } else { "polyline" };
        writeln!(self.body, r#"<{tag} points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#, coords.join(" ")).unwrap();
    }

    pub fn dots(&mut self, pts: &[Complex64], fill: &str, radius: f64) {
        for z in pts {
            let (x, y) = self.px(*z);
            writeln!(self.body, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{radius}" fill="{fill}"/>"#).unwrap();
        }
    }

    /// Grey-scale heat map of `values[j][i]` over the canvas.
    pub fn heatmap(&mut self, values: &[Vec<f64>], xmin: f64, xmax: f64, ymin: f64, ymax: f64) {
        let ny = values.len();
        let nx = values.first().map_or(0, |r| r.len());
        let top = values.iter().flatten().copied().fold(0.0, f64::max);
        if nx == 0 || top <= 0.0 {
            return;
        }
        let (dx, dy) = ((xmax - xmin) / nx as f64, (ymax - ymin) / ny as f64);
        for (j, row) in values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let shade = 255 - (255.0 * (v / top).clamp(0.0, 1.0)).round() as u8;
                if shade == 255 {
                    continue;
                }
                let (x, y) = self.px(Complex64::new(xmin + i as f64 * dx, ymin + (j + 1) as f64 * dy));
                let (w, h) = (dx * self.scale, dy * self.scale);
                writeln!(
                    self.body,
                    r#"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="rgb({shade},{shade},{shade})"/>"#
                )
                .unwrap();
            }
        }
    }

    fn render(&self, comment: &str) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.3} {:.3}\">\n<!-- {comment} -->\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}
