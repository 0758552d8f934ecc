//! Embedding files and evaluation reports.
//!
//! CSV layout: header `id,label,split,f0,...,f{m-1}`, one row per embedding,
//! `split` one of `base`, `val`, `novel` or empty.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! b"EPB1"
//! u32 version (= 1)   u32 N   u32 m   u32 label-table size
//! label table: per entry u16 byte length + UTF-8 name
//! N × u16 label index
//! N × u8 split code (0 none, 1 base, 2 val, 3 novel)
//! N × m × f32 embeddings, row-major
//! ```
//!
//! The binary reader checks the declared sizes against the file length
//! before touching the embedding block.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::episodes::{EmbeddingSet, EvalReport, Split};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const BINARY_MAGIC: &[u8; 4] = b"EPB1";
pub const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingFormat {
    Csv,
    Binary,
    /// Sniff the magic bytes when reading; pick by extension when writing.
    #[default]
    Auto,
}

impl fmt::Display for EmbeddingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingFormat::Csv => "csv",
            EmbeddingFormat::Binary => "binary",
            EmbeddingFormat::Auto => "auto",
        })
    }
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EmbeddingFormat::Csv),
            "binary" | "bin" | "epb" => Ok(EmbeddingFormat::Binary),
            "auto" => Ok(EmbeddingFormat::Auto),
            other => Err(Error::InvalidConfig(format!(
                "unknown embedding format {other:?} (expected csv|binary|auto)"
            ))),
        }
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<EmbeddingSet> {
    let bytes = fs::read(path.as_ref())?;
    let binary = match format {
        EmbeddingFormat::Csv => false,
        EmbeddingFormat::Binary => true,
        EmbeddingFormat::Auto => bytes.starts_with(BINARY_MAGIC),
    };
    if binary {
        decode_binary(&bytes)
    } else {
        parse_csv(&bytes)
    }
}

pub fn save_embeddings(
    set: &EmbeddingSet,
    path: impl AsRef<Path>,
    format: EmbeddingFormat,
) -> Result<()> {
    let path = path.as_ref();
    let binary = match format {
        EmbeddingFormat::Csv => false,
        EmbeddingFormat::Binary => true,
        EmbeddingFormat::Auto => matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("epb" | "bin")
        ),
    };
    let bytes = if binary {
        encode_binary(set)?
    } else {
        write_csv(set)?
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn parse_csv(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| Error::parse("line 1", e.to_string()))?
        .clone();
    if header.len() < 4
        || &header[0] != "id"
        || &header[1] != "label"
        || &header[2] != "split"
    {
        return Err(Error::parse(
            "line 1",
            "header must start with id,label,split followed by at least one feature column",
        ));
    }
    let dim = header.len() - 3;
    for (k, name) in header.iter().skip(3).enumerate() {
        if name != format!("f{k}") {
            return Err(Error::parse(
                "line 1",
                format!("feature column {k} is named {name:?}, expected \"f{k}\""),
            ));
        }
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                pos, expected_len, len,
            } => Error::InvariantViolation(format!(
                "ragged row at line {}: {len} fields, expected {expected_len}",
                pos.as_ref().map_or(0, |p| p.line())
            )),
            _ => Error::parse(
                e.position()
                    .map_or_else(|| "unknown line".into(), |p| format!("line {}", p.line())),
                e.to_string(),
            ),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        ids.push(record[0].to_owned());
        labels.push(record[1].to_owned());
        splits.push(match &record[2] {
            "" => None,
            s => Some(
                s.parse::<Split>()
                    .map_err(|_| Error::parse(format!("line {line}"), format!("bad split {s:?}")))?,
            ),
        });
        for (k, field) in record.iter().skip(3).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(format!("line {line}, column f{k}"), format!("not a number: {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::InvariantViolation(format!(
                    "non-finite feature f{k} at line {line}"
                )));
            }
            values.push(v);
        }
    }
    if ids.is_empty() {
        return Err(Error::InvariantViolation("no embedding rows".into()));
    }
    let n = ids.len();
    let embeddings = DenseMatrix::new(n, dim, values)
        .map_err(|e| Error::InvariantViolation(e.to_string()))?;
    EmbeddingSet::with_ids(ids, embeddings, labels, splits)
}

pub fn write_csv(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_owned(), "label".into(), "split".into()];
    header.extend((0..set.dim()).map(|k| format!("f{k}")));
    writer.write_record(&header).map_err(csv_io)?;
    let z = set.embeddings();
    for i in 0..set.len() {
        let mut rec = Vec::with_capacity(3 + set.dim());
        rec.push(set.ids()[i].clone());
        rec.push(set.labels()[i].clone());
        rec.push(set.splits()[i].map_or_else(String::new, |s| s.to_string()));
        // shortest representation that parses back to the same f64
        rec.extend(z.row(i).iter().map(|v| format!("{v:?}")));
        writer.write_record(&rec).map_err(csv_io)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                format!("offset {}", self.pos),
                format!(
                    "truncated {what}: expected {n} bytes, found {}",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != BINARY_MAGIC {
        return Err(Error::parse("offset 0", "missing EPB1 magic"));
    }
    let version = cur.u32("version")?;
    if version != BINARY_VERSION {
        return Err(Error::parse(
            "offset 4",
            format!("unsupported format version {version}"),
        ));
    }
    let n = cur.u32("row count")? as usize;
    let m = cur.u32("dimension")? as usize;
    let table_size = cur.u32("label table size")? as usize;
    if n == 0 || m == 0 {
        return Err(Error::InvariantViolation(format!(
            "empty embedding block ({n} rows, dimension {m})"
        )));
    }

    let mut table = Vec::with_capacity(table_size.min(1 << 16));
    for t in 0..table_size {
        let len = cur.u16("label length")? as usize;
        let at = cur.pos;
        let raw = cur.take(len, "label name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(format!("offset {at}"), format!("label {t} is not UTF-8")))?;
        table.push(name.to_owned());
    }

    let body = n
        .checked_mul(2 + 1 + 4 * m)
        .ok_or_else(|| Error::parse("header", "declared sizes overflow"))?;
    let expected = cur.pos + body;
    if bytes.len() != expected {
        return Err(Error::parse(
            format!("offset {}", cur.pos),
            format!(
                "file length mismatch: header declares {expected} bytes, found {}",
                bytes.len()
            ),
        ));
    }

    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let idx = cur.u16("label index")? as usize;
        let name = table.get(idx).ok_or_else(|| {
            Error::InvariantViolation(format!(
                "row {i} label index {idx} outside a table of {table_size}"
            ))
        })?;
        labels.push(name.clone());
    }
    let mut splits = Vec::with_capacity(n);
    for i in 0..n {
        let at = cur.pos;
        let code = cur.take(1, "split code")?[0];
        splits.push(Split::from_code(code).ok_or_else(|| {
            Error::parse(format!("offset {at}"), format!("row {i} has split code {code}"))
        })?);
    }
    let block = cur.take(4 * n * m, "embedding block")?;
    let mut values = Vec::with_capacity(n * m);
    for (k, chunk) in block.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "non-finite value at row {}, feature {}",
                k / m,
                k % m
            )));
        }
        values.push(f64::from(v));
    }
    EmbeddingSet::new(DenseMatrix::new(n, m, values)?, labels, splits)
}

pub fn encode_binary(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let table: BTreeMap<&str, u16> = {
        let names = set.class_names();
        if names.len() > usize::from(u16::MAX) + 1 {
            return Err(Error::InvariantViolation(format!(
                "{} classes exceed the u16 label index",
                names.len()
            )));
        }
        let mut map = BTreeMap::new();
        for (i, name) in set.labels().iter().enumerate() {
            let _ = i;
            let next = map.len() as u16;
            map.entry(name.as_str()).or_insert(next);
        }
        map
    };
    let n = set.len();
    let m = set.dim();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvariantViolation(format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(20 + n * (3 + 4 * m));
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(n, "row count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(m, "dimension")?.to_le_bytes());
    out.extend_from_slice(&to_u32(table.len(), "label table size")?.to_le_bytes());

    let mut ordered: Vec<(&str, u16)> = table.iter().map(|(k, v)| (*k, *v)).collect();
    ordered.sort_by_key(|&(_, idx)| idx);
    for (name, _) in &ordered {
        let len = u16::try_from(name.len()).map_err(|_| {
            Error::InvariantViolation(format!("label {name:?} is longer than 65535 bytes"))
        })?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for label in set.labels() {
        out.extend_from_slice(&table[label.as_str()].to_le_bytes());
    }
    for split in set.splits() {
        out.push(split.map_or(0, Split::code));
    }
    for (k, &v) in set.embeddings().as_slice().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "value {v} at row {}, feature {} does not fit in f32",
                k / m,
                k % m
            )));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    Ok(serde_json::from_slice(&fs::read(path.as_ref())?)?)
}
