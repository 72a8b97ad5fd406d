//! Click-stream files.
//!
//! Binary: 16-byte header (`IPWTAG01`, u64 record count) followed by 16-byte
//! records (u64 time in ps, u32 channel, u32 reserved = 0), all little-endian.
//! Text: CSV with header `channel,time_ps`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ClickRecord, ClickStream, PhotonError};

pub const MAGIC: &[u8; 8] = b"IPWTAG01";
pub const CSV_HEADER: &str = "channel,time_ps";

#[derive(Debug, Error)]
pub enum StreamFormatError {
    #[error("bad magic {found:?}, expected IPWTAG01")]
    BadMagic { found: [u8; 8] },
    #[error("truncated file: header promises {expected} records, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing bytes after record {records}")]
    TrailingData { records: u64 },
    #[error("record {index}: reserved field is {value}, expected 0")]
    Reserved { index: u64, value: u32 },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Stream(#[from] PhotonError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_binary<W: Write>(stream: &ClickStream, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(stream.len() as u64).to_le_bytes())?;
    for r in stream.records() {
        w.write_all(&r.time_ps.to_le_bytes())?;
        w.write_all(&(r.channel as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
    }
    w.flush()
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => return Ok(false),
            n => filled += n,
        }
    }
    Ok(true)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<ClickStream, StreamFormatError> {
    let mut header = [0u8; 16];
    if !read_exact_or_eof(&mut r, &mut header)? {
        return Err(StreamFormatError::Truncated { expected: 0, found: 0 });
    }
    let magic: [u8; 8] = header[..8].try_into().unwrap();
    if &magic != MAGIC {
        return Err(StreamFormatError::BadMagic { found: magic });
    }
    let expected = u64::from_le_bytes(header[8..].try_into().unwrap());
    let mut records = Vec::with_capacity(expected.min(1 << 24) as usize);
    let mut buf = [0u8; 16];
    for index in 0..expected {
        if !read_exact_or_eof(&mut r, &mut buf)? {
            return Err(StreamFormatError::Truncated { expected, found: index });
        }
        let time_ps = u64::from_le_bytes(buf[..8].try_into().unwrap());
        let channel = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        let reserved = u32::from_le_bytes(buf[12..].try_into().unwrap());
        if reserved != 0 {
            return Err(StreamFormatError::Reserved { index, value: reserved });
        }
        if channel > 1 {
            return Err(PhotonError::BadChannel { index: index as usize, channel }.into());
        }
        records.push(ClickRecord { time_ps, channel: channel as u8 });
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(StreamFormatError::TrailingData { records: expected });
    }
    Ok(ClickStream::new(records)?)
}

pub fn write_csv<W: Write>(stream: &ClickStream, mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in stream.records() {
        writeln!(w, "{},{}", r.channel, r.time_ps)?;
    }
    w.flush()
}

pub fn read_csv<R: BufRead>(r: R) -> Result<ClickStream, StreamFormatError> {
    let mut records: Vec<ClickRecord> = Vec::new();
    let mut seen_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if !seen_header {
            if text.starts_with('#') {
                continue;
            }
            if text != CSV_HEADER {
                return Err(StreamFormatError::Csv { line: lineno, message: format!("expected header `{CSV_HEADER}`, got `{text}`") });
            }
            seen_header = true;
            continue;
        }
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let (ch, t) = text
            .split_once(',')
            .ok_or_else(|| StreamFormatError::Csv { line: lineno, message: "expected two fields".into() })?;
        let channel: u32 = ch
            .trim()
            .parse()
            .map_err(|e| StreamFormatError::Csv { line: lineno, message: format!("channel: {e}") })?;
        let time_ps: u64 = t
            .trim()
            .parse()
            .map_err(|e| StreamFormatError::Csv { line: lineno, message: format!("time_ps: {e}") })?;
        if channel > 1 {
            return Err(StreamFormatError::Csv { line: lineno, message: format!("channel {channel} is not 0 or 1") });
        }
        if let Some(prev) = records.last() {
            let rec = ClickRecord { time_ps, channel: channel as u8 };
            if *prev > rec {
                return Err(StreamFormatError::Csv { line: lineno, message: format!("not sorted: {time_ps} ps after {} ps", prev.time_ps) });
            }
        }
        records.push(ClickRecord { time_ps, channel: channel as u8 });
    }
    Ok(ClickStream::new(records)?)
}

/// Read either format, telling them apart by the binary magic.
pub fn read_path(path: &Path) -> Result<ClickStream, StreamFormatError> {
    let mut reader = BufReader::new(File::open(path)?);
    let head = reader.fill_buf()?;
    if head.len() >= 8 && &head[..8] == MAGIC {
        read_binary(reader)
    } else if head.starts_with(CSV_HEADER.as_bytes()) || head.starts_with(b"#") {
        read_csv(reader)
    } else {
        let mut found = [0u8; 8];
        let n = head.len().min(8);
        found[..n].copy_from_slice(&head[..n]);
        Err(StreamFormatError::BadMagic { found })
    }
}

/// Write binary unless the extension is `.csv`.
pub fn write_path(stream: &ClickStream, path: &Path) -> io::Result<()> {
    let w = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_csv(stream, w)
    } else {
        write_binary(stream, w)
    }
}
