use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::ber::BerRecord;

pub const RESULTS_HEADER: &str = "# uwofdm-ber v1";
pub const CURVE_HEADER: &str = "# uwofdm-curve v1";

const COLUMNS: [&str; 14] = [
    "label",
    "system",
    "estimator",
    "outer_code",
    "modulation",
    "es_n0_db",
    "bits_sent",
    "bit_errors",
    "frames",
    "stop",
    "csi",
    "corpus_id",
    "seed",
    "fingerprint",
];

fn write_rows<W: Write>(out: W, records: &[BerRecord], header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a complete results document.
pub fn write_results<W: Write>(mut out: W, records: &[BerRecord]) -> Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    write_rows(out, records, true)
}

/// Appends to a results store, creating it with a header when absent or
/// empty. Existing rows are never rewritten.
pub fn export_results(path: impl AsRef<Path>, records: &[BerRecord]) -> Result<()> {
    let path = path.as_ref();
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    if !fresh {
        let mut first = String::new();
        BufReader::new(File::open(path)?).read_line(&mut first)?;
        if first.trim_end() != RESULTS_HEADER {
            return Err(Error::Parse(format!("{} is not a results store", path.display())));
        }
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        write_results(file, records)
    } else {
        write_rows(&mut file, records, false)
    }
}

pub fn parse_results(text: &str) -> Result<Vec<BerRecord>> {
    if text.lines().next().map(str::trim_end) != Some(RESULTS_HEADER) {
        return Err(Error::Parse(format!("missing {RESULTS_HEADER:?} header")));
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let cols: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if cols != COLUMNS {
        return Err(Error::Parse(format!("unexpected columns {cols:?}")));
    }
    let records = r.deserialize().collect::<std::result::Result<Vec<BerRecord>, _>>()?;
    if let Some(bad) = records.iter().find(|r| r.bit_errors > r.bits_sent) {
        return Err(Error::Parse(format!("{} errors exceed {} bits", bad.bit_errors, bad.bits_sent)));
    }
    Ok(records)
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<BerRecord>> {
    parse_results(&fs::read_to_string(path)?)
}

fn file_stem(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "curve".into()
    } else {
        s
    }
}

/// Per-label `(E_s/N_0, BER)` curves; repeated points are pooled.
pub fn curves(records: &[BerRecord]) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut pooled: BTreeMap<String, BTreeMap<u64, (f64, u64, u64)>> = BTreeMap::new();
    for r in records {
        // order points by value; the bit pattern of a non-negative float sorts
        // like the float, so shift the range first
        let key = (r.es_n0_db + 1e4).to_bits();
        let e = pooled.entry(r.label.clone()).or_default().entry(key).or_insert((r.es_n0_db, 0, 0));
        e.1 += r.bits_sent;
        e.2 += r.bit_errors;
    }
    pooled
        .into_iter()
        .map(|(label, pts)| {
            let curve = pts
                .into_values()
                .map(|(x, bits, errs)| (x, if bits == 0 { 0.0 } else { errs as f64 / bits as f64 }))
                .collect();
            (label, curve)
        })
        .collect()
}

/// Writes one `<label>.dat` file per scenario into `dir`.
pub fn plot_data(records: &[BerRecord], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (label, curve) in curves(records) {
        let path = dir.join(format!("{}.dat", file_stem(&label)));
        let mut f = File::create(&path)?;
        writeln!(f, "{CURVE_HEADER}")?;
        writeln!(f, "# label {label}")?;
        writeln!(f, "# es_n0_db ber")?;
        for (x, ber) in curve {
            writeln!(f, "{x} {ber:e}")?;
        }
        written.push(path);
    }
    Ok(written)
}
