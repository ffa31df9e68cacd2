//! Report writers: CSV and JSON with 17 significant digits, binary checkpoints.
use crate::error::{Error, Result};
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HPCK";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const REPORT_SCHEMA: u32 = 1;

/// 17 significant digits in scientific notation; `inf`, `-inf`, `nan` otherwise.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// RFC 4180 CSV: comma separated, CRLF line ends, fields quoted when needed.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("records are UTF-8")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    std::fs::write(path, csv_string(header, rows))?;
    Ok(())
}

/// Pretty JSON formatter writing every float with 17 significant digits;
/// non-finite values become `null`.
struct Fixed17<'a>(serde_json::ser::PrettyFormatter<'a>);

fn json_f64<W: ?Sized + Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    if v.is_finite() {
        w.write_all(fmt17(v).as_bytes())
    } else {
        w.write_all(b"null")
    }
}

impl serde_json::ser::Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        json_f64(w, v)
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        json_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn json_string<T: Serialize>(v: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(serde_json::ser::PrettyFormatter::new()));
    v.serialize(&mut ser).map_err(|e| Error::Invalid(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, json_string(v)?)?;
    Ok(())
}

/// Magic, version, rank, dims (u64 each), then row-major little-endian f64.
pub fn write_checkpoint(path: &Path, dims: &[usize], data: &[f64]) -> Result<()> {
    if dims.iter().product::<usize>() != data.len() {
        return Err(Error::Invalid("checkpoint dims do not match data length".into()));
    }
    let mut out = Vec::with_capacity(16 + 8 * dims.len() + 8 * data.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Invalid(format!("checkpoint {}: {m}", path.display()));
    if buf.len() < 12 || buf[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    if u32_at(4) != CHECKPOINT_VERSION {
        return Err(bad("unsupported version"));
    }
    let rank = u32_at(8) as usize;
    let mut off = 12;
    if buf.len() < off + 8 * rank {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u64::from_le_bytes(buf[off + 8 * i..off + 8 * i + 8].try_into().unwrap()) as usize)
        .collect();
    off += 8 * rank;
    let n: usize = dims.iter().product();
    if buf.len() != off + 8 * n {
        return Err(bad("payload length mismatch"));
    }
    let data = (0..n).map(|i| f64::from_le_bytes(buf[off + 8 * i..off + 8 * i + 8].try_into().unwrap())).collect();
    Ok((dims, data))
}
