//! Hashed, atomically written artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn config_hash(canonical_json: &str) -> String {
    hex::encode(Sha256::digest(canonical_json.as_bytes()))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config_sha256: &'a str,
    command: &'a str,
    seed: u64,
    exact: bool,
    result: &'a T,
}

pub struct Writer {
    dir: PathBuf,
    hash: String,
    command: &'static str,
    seed: u64,
    exact: bool,
}

impl Writer {
    pub fn new(dir: PathBuf, hash: String, command: &'static str, seed: u64, exact: bool) -> Self {
        Writer { dir, hash, command, seed, exact }
    }

    fn header(&self) -> String {
        format!("# config_sha256={} command={} seed={} exact={}\n", self.hash, self.command, self.seed, self.exact)
    }

    pub fn csv(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write(name, &format!("{}{}", self.header(), body))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let env = Envelope {
            config_sha256: &self.hash,
            command: self.command,
            seed: self.seed,
            exact: self.exact,
            result: value,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn svg(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write(name, &format!("<!-- config_sha256={} command={} seed={} -->\n{}", self.hash, self.command, self.seed, body))
    }

    pub fn raw(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write(name, body)
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(body.as_bytes()).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &target).map_err(|e| io_err(&target, e))?;
        Ok(target)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Two polylines against a log dispersion axis.
pub fn visibility_svg(dispersions: &[f64], curves: &[(&str, &str, Vec<f64>)]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let lx: Vec<f64> = dispersions.iter().map(|d| d.max(1e-9).log10()).collect();
    let (x0, x1) = lx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let lo = curves.iter().flat_map(|c| c.2.iter().copied()).fold(1.0f64, f64::min).clamp(0.0, 0.9);
    let px = |x: f64| m + (x - x0) / span * (w - 2.0 * m);
    let py = |v: f64| h - m - (v - lo) / (1.0 - lo).max(1e-9) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        b = h - m,
        r = w - m
    );
    for &d in dispersions {
        let x = px(d.max(1e-9).log10());
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{d}</text>"#, h - m + 16.0);
    }
    for v in [lo, (lo + 1.0) / 2.0, 1.0] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v:.3}</text>"#, m - 4.0, py(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">dispersion (ns/nm)</text>"#, w / 2.0, h - 10.0);
    for (k, (label, colour, values)) in curves.iter().enumerate() {
        let pts: Vec<String> = lx.iter().zip(values).map(|(&x, &v)| format!("{:.2},{:.2}", px(x), py(v))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{colour}" fill="none" stroke-width="2"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{colour}">{label}</text>"#,
            w - m - 90.0,
            h - m - 20.0 - 16.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
