//! Plain-text generator files.
//!
//! ```text
//! # uwofdm-generator v1
//! kind OptLmmse
//! n 64
//! n_u 16
//! n_d 36
//! n_r 16
//! zero_idx 0 27 28 ...
//! red_idx 2 6 10 ...
//! sigma_d2 1
//! fs 20000000
//! s2 1
//! rows 52
//! cols 36
//! data
//! <re> <im>        one entry per line, row-major
//! ```
//!
//! Floats are written in shortest round-trip form, so a reload is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GeneratorKind, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::ofdm::SystemConfig;

const MAGIC: &str = "# uwofdm-generator v1";

fn join(v: &[usize]) -> String {
    v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_generator<W: Write>(g: &GeneratorMatrix, mut out: W) -> Result<()> {
    let c = g.config();
    let m = g.matrix();
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "kind {}", g.kind())?;
    writeln!(out, "n {}", c.n)?;
    writeln!(out, "n_u {}", c.n_u)?;
    writeln!(out, "n_d {}", c.n_d)?;
    writeln!(out, "n_r {}", c.n_r)?;
    writeln!(out, "zero_idx {}", join(&c.zero_idx))?;
    writeln!(out, "red_idx {}", join(&c.red_idx))?;
    writeln!(out, "sigma_d2 {}", c.sigma_d2)?;
    writeln!(out, "fs {}", c.fs)?;
    writeln!(out, "s2 {}", g.s2())?;
    writeln!(out, "rows {}", m.nrows())?;
    writeln!(out, "cols {}", m.ncols())?;
    writeln!(out, "data")?;
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            let z = m[(r, col)];
            writeln!(out, "{} {}", z.re, z.im)?;
        }
    }
    Ok(())
}

pub fn save_generator(g: &GeneratorMatrix, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_generator(g, &mut buf)?;
    buf.flush()?;
    Ok(())
}

pub fn load_generator(path: impl AsRef<Path>) -> Result<GeneratorMatrix> {
    parse_generator(&fs::read_to_string(path)?)
}

fn parse_num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value {s:?} for {key}")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<usize>> {
    s.split_whitespace().map(|t| parse_num(key, t)).collect()
}

pub fn parse_generator(text: &str) -> Result<GeneratorMatrix> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == MAGIC => {}
        other => return Err(Error::Parse(format!("expected header {MAGIC:?}, found {other:?}"))),
    }
    let mut header = std::collections::HashMap::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "data" {
            break;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        header.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| {
        header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Parse(format!("missing header field {key}")))
    };
    let kind: GeneratorKind = get("kind")?.trim().parse()?;
    let n: usize = parse_num("n", get("n")?)?;
    let n_u: usize = parse_num("n_u", get("n_u")?)?;
    let n_d: usize = parse_num("n_d", get("n_d")?)?;
    let n_r: usize = parse_num("n_r", get("n_r")?)?;
    let mut config = SystemConfig::new(n, n_u, parse_list("zero_idx", get("zero_idx")?)?, parse_list("red_idx", get("red_idx")?)?)?;
    if config.n_d != n_d || config.n_r != n_r {
        return Err(Error::Parse(format!(
            "n_d/n_r ({n_d}, {n_r}) disagree with index sets ({}, {})",
            config.n_d, config.n_r
        )));
    }
    config.sigma_d2 = parse_num("sigma_d2", get("sigma_d2")?)?;
    config.fs = parse_num("fs", get("fs")?)?;
    let rows: usize = parse_num("rows", get("rows")?)?;
    let cols: usize = parse_num("cols", get("cols")?)?;
    let mut values = Vec::with_capacity(rows * cols);
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(re), Some(im), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("bad data line {line:?}")));
        };
        values.push(C64::new(parse_num("re", re)?, parse_num("im", im)?));
    }
    if values.len() != rows * cols {
        return Err(Error::Parse(format!("expected {} entries, found {}", rows * cols, values.len())));
    }
    let mat = CMat::from_row_slice(rows, cols, &values);
    GeneratorMatrix::new(kind, mat, &config)
}
