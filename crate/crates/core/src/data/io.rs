//! Dataset files.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic   8 bytes  "SCNDSET\0"
//! version u32      1
//! n       u64
//! dim     u64
//! classes u64
//! n rows of: id u64 | dim x f64 features | current u32 | clean u32 | corrupted u8
//! ```
//!
//! The CSV variant carries the same fields. Its first record is
//! `scn-dataset,1,<n>,<dim>,<classes>`, the second is the column header
//! `id,f0..f{dim-1},current_label,clean_label,corrupted`, then one row per
//! sample. Floats are written in shortest round-trip form, so both formats
//! reload bit-exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::LabeledDataset;
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Result, ScnError};
use crate::tensor::Tensor2D;

const MAGIC: &[u8; 8] = b"SCNDSET\0";
const CSV_TAG: &str = "scn-dataset";
pub const DATASET_VERSION: u32 = 1;

pub fn write_binary(ds: &LabeledDataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(DATASET_VERSION);
    w.u64(ds.len() as u64);
    w.u64(ds.dim() as u64);
    w.u64(ds.classes() as u64);
    for i in 0..ds.len() {
        w.u64(ds.ids()[i]);
        w.f64s(ds.features().row(i));
        w.u32(ds.current_labels()[i] as u32);
        w.u32(ds.clean_labels()[i] as u32);
        w.u8(u8::from(ds.corrupted()[i]));
    }
    w.buf
}

pub fn read_binary(bytes: &[u8]) -> Result<LabeledDataset> {
    let mut r = ByteReader::new(bytes);
    if r.take(8, "header")? != MAGIC {
        return Err(ScnError::parse("header", "bad magic"));
    }
    let version = r.u32("header")?;
    if version != DATASET_VERSION {
        return Err(ScnError::parse("header", format!("unsupported version {version}")));
    }
    let n = r.u64("header")? as usize;
    let dim = r.u64("header")? as usize;
    let classes = r.u64("header")? as usize;
    let row_bytes = 8 + 8 * dim + 9;
    if (bytes.len() - 36) / row_bytes.max(1) < n {
        return Err(ScnError::parse(
            "header",
            format!("declares {n} rows but payload holds {}", (bytes.len() - 36) / row_bytes),
        ));
    }
    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut current = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for i in 0..n {
        let rec = format!("row {i}");
        ids.push(r.u64(&rec)?);
        data.extend(r.f64s(dim, &rec)?);
        let cur = r.u32(&rec)? as usize;
        let cl = r.u32(&rec)? as usize;
        if cur >= classes || cl >= classes {
            return Err(ScnError::parse(rec, format!("label outside [0, {classes})")));
        }
        current.push(cur);
        clean.push(cl);
        mask.push(match r.u8(&rec)? {
            0 => false,
            1 => true,
            other => return Err(ScnError::parse(rec, format!("corrupted flag {other}"))),
        });
    }
    r.finish("trailer")?;
    let features = Tensor2D::from_vec(n, dim, data).map_err(|e| ScnError::parse("features", e.to_string()))?;
    LabeledDataset::from_parts(features, current, clean, mask, classes, ids)
        .map_err(|e| ScnError::parse("dataset", e.to_string()))
}

pub fn write_csv<W: Write>(ds: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    w.write_record([
        CSV_TAG.to_string(),
        DATASET_VERSION.to_string(),
        ds.len().to_string(),
        ds.dim().to_string(),
        ds.classes().to_string(),
    ])?;
    let mut header = vec!["id".to_string()];
    header.extend((0..ds.dim()).map(|d| format!("f{d}")));
    header.extend(["current_label", "clean_label", "corrupted"].map(String::from));
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut row = vec![ds.ids()[i].to_string()];
        row.extend(ds.features().row(i).iter().map(|v| v.to_string()));
        row.push(ds.current_labels()[i].to_string());
        row.push(ds.clean_labels()[i].to_string());
        row.push(u8::from(ds.corrupted()[i]).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, at: &str) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| ScnError::parse(at, format!("missing field {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| ScnError::parse(at, format!("bad {name}: {raw:?}")))
}

pub fn read_csv(text: &str) -> Result<LabeledDataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = r.records();
    let head = records
        .next()
        .ok_or_else(|| ScnError::parse("header", "empty file"))?
        .map_err(|e| ScnError::parse("header", e.to_string()))?;
    if head.get(0) != Some(CSV_TAG) {
        return Err(ScnError::parse("header", "missing scn-dataset tag"));
    }
    let version: u32 = field(&head, 1, "version", "header")?;
    if version != DATASET_VERSION {
        return Err(ScnError::parse("header", format!("unsupported version {version}")));
    }
    let n: usize = field(&head, 2, "n", "header")?;
    let dim: usize = field(&head, 3, "dim", "header")?;
    let classes: usize = field(&head, 4, "classes", "header")?;
    let columns = records
        .next()
        .ok_or_else(|| ScnError::parse("column header", "missing"))?
        .map_err(|e| ScnError::parse("column header", e.to_string()))?;
    if columns.len() != dim + 4 {
        return Err(ScnError::parse(
            "column header",
            format!("expected {} columns, found {}", dim + 4, columns.len()),
        ));
    }
    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut current = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for (i, rec) in records.enumerate() {
        let at = format!("row {i}");
        let rec = rec.map_err(|e| ScnError::parse(at.clone(), e.to_string()))?;
        if rec.len() != dim + 4 {
            return Err(ScnError::parse(at, format!("expected {} fields, found {}", dim + 4, rec.len())));
        }
        ids.push(field(&rec, 0, "id", &at)?);
        for d in 0..dim {
            data.push(field::<f64>(&rec, d + 1, "feature", &at)?);
        }
        let cur: usize = field(&rec, dim + 1, "current_label", &at)?;
        let cl: usize = field(&rec, dim + 2, "clean_label", &at)?;
        if cur >= classes || cl >= classes {
            return Err(ScnError::parse(at, format!("label outside [0, {classes})")));
        }
        current.push(cur);
        clean.push(cl);
        let flag: u8 = field(&rec, dim + 3, "corrupted", &at)?;
        if flag > 1 {
            return Err(ScnError::parse(at, format!("corrupted flag {flag}")));
        }
        mask.push(flag == 1);
    }
    if ids.len() != n {
        return Err(ScnError::parse("trailer", format!("header declares {n} rows, found {}", ids.len())));
    }
    let features = Tensor2D::from_vec(n, dim, data).map_err(|e| ScnError::parse("features", e.to_string()))?;
    LabeledDataset::from_parts(features, current, clean, mask, classes, ids)
        .map_err(|e| ScnError::parse("dataset", e.to_string()))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes CSV for a `.csv` extension, binary otherwise.
pub fn save_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    if is_csv(path) {
        let mut buf = Vec::new();
        write_csv(ds, &mut buf)?;
        fs::write(path, buf)?;
    } else {
        fs::write(path, write_binary(ds))?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    if is_csv(path) {
        read_csv(&fs::read_to_string(path)?)
    } else {
        read_binary(&fs::read(path)?)
    }
}
