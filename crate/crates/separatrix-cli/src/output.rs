//! Output plumbing: header-stamped CSV/JSON writers, the content-hash field
//! cache, and a minimal SVG line-plot backend.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Serialize};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header block stamped at the top of every artifact (as `#` comment lines
/// in CSV, as a `meta` object in JSON).
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub master_seed: u64,
}

impl Header {
    pub fn new(command: &str, config_hash: &str, master_seed: u64) -> Self {
        Header {
            tool: "separatrix".into(),
            version: VERSION.into(),
            command: command.into(),
            config_hash: config_hash.into(),
            master_seed,
        }
    }

    fn comment_block(&self) -> String {
        format!(
            "# tool: {} v{}\n# command: {}\n# config-hash: {}\n# master-seed: {}\n",
            self.tool, self.version, self.command, self.config_hash, self.master_seed
        )
    }
}

/// Write a CSV artifact: header comments, column line, then rows.
pub fn write_csv(
    path: &Path,
    header: &Header,
    columns: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(header.comment_block().as_bytes())?;
    writeln!(f, "{}", columns.join(","))?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Write a JSON artifact with the header under `meta` and the payload under
/// `data`.
pub fn write_json<T: Serialize>(path: &Path, header: &Header, data: &T) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let doc = serde_json::json!({ "meta": header, "data": data });
    fs::write(path, serde_json::to_string_pretty(&doc).expect("serializable") + "\n")
}

/// Format a float for CSV: shortest round-trip representation, so reruns are
/// byte-identical.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Content-hash cache for expensive per-cell solves. Keys are hashes of the
/// cell inputs; values are JSON files under `<out>/cache/`.
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(out_dir: &Path) -> Self {
        Cache { dir: out_dir.join("cache") }
    }

    pub fn key<K: Serialize>(&self, inputs: &K) -> String {
        let json = serde_json::to_string(inputs).expect("serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let path = self.dir.join(format!("{key}.json"));
        let text = fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("{key}.json"));
        fs::write(path, serde_json::to_string(value).expect("serializable"))
    }
}

/// One plotted series: label and (x, y) points; `None` y-values break the
/// line (data gaps).
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, Option<f64>)>,
}

const PALETTE: [&str; 6] = ["#2a7e3e", "#2060b0", "#d97818", "#a03070", "#508090", "#404040"];

/// Minimal SVG backend: autoscaled axes, polyline per series, legend.
pub fn write_svg(path: &Path, title: &str, series: &[Series]) -> std::io::Result<()> {
    let (w, h, ml, mr, mt, mb) = (720.0, 480.0, 70.0, 20.0, 40.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().filter_map(|&(x, y)| y.map(|y| (x, y))))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() || x1 <= x0 {
        (x0, x1) = (0.0, 1.0);
    }
    if y1 <= y0 {
        (y0, y1) = (y0 - 1.0, y0 + 1.0);
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        w / 2.0
    );
    svg += &format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb,
        h - mb
    );
    for k in 0..=4 {
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let yv = y0 + (y1 - y0) * k as f64 / 4.0;
        svg += &format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{xv:.4}</text>\n",
            sx(xv),
            h - mb + 18.0
        );
        svg += &format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{yv:.4}</text>\n",
            ml - 6.0,
            sy(yv) + 4.0
        );
    }
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for &(x, y) in &s.points {
            match y {
                Some(y) => segments.last_mut().unwrap().push((sx(x), sy(y))),
                None => segments.push(Vec::new()),
            }
        }
        for seg in segments.iter().filter(|s| s.len() >= 2) {
            let path: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            svg += &format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            );
        }
        svg += &format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            w - mr - 150.0,
            mt + 16.0 * si as f64 + 12.0,
            s.label
        );
    }
    svg += "</svg>\n";
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, svg)
}
