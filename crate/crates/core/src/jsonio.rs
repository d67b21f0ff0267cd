//! Serialization helpers: canonical JSON (round-trippable floats, sorted
//! object keys), JSONL for datasets, TSV for sweep tables, and content
//! hashes for provenance checks.
//!
//! Floats are printed with 17 significant digits (`{:.16e}`), which is
//! enough to reproduce every f64 bit-exactly on re-read. Canonicalization
//! goes through [`serde_json::Value`], whose object representation keeps
//! keys sorted, so equal values always hash equally.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Compact JSON with every float at 17 significant digits.
struct SigFigFormatter;

impl Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes with full-precision floats, keys in declaration order.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, SigFigFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Serializes canonically: object keys sorted, full-precision floats.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value)?;
    to_json_string(&tree)
}

/// SHA-256 of the canonical JSON encoding, as lowercase hex.
pub fn value_hash<T: Serialize>(value: &T) -> String {
    let canonical = to_canonical_string(value).expect("canonical JSON of an in-memory value");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        write!(out, "{b:02x}").unwrap();
    }
    out
}

/// Writes one JSON document (trailing newline included).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(to_json_string(value)?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(reader)?)
}

/// Writes items as JSON Lines, one canonical document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        w.write_all(to_json_string(item)?.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads JSON Lines, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Plain TSV: a header row, then one row per record.
pub fn write_tsv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join("\t"))?;
    for row in rows {
        writeln!(w, "{}", row.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

/// Full-precision float cell for TSV rows.
pub fn tsv_float(v: f64) -> String {
    format!("{v:.16e}")
}
