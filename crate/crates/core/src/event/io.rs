//! EVS1 binary and CSV event files.
//!
//! EVS1 layout (little-endian):
//!
//! ```text
//! "EVS1" | u16 width | u16 height | u32 duration_us | u32 event_count
//! event_count x { u32 t_us | u16 x | u16 y | u8 polarity }
//! ```
//!
//! CSV files start with the header `t_us,x,y,p` and carry no geometry; width,
//! height and duration are supplied by the caller.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};

pub const EVS1_MAGIC: &[u8; 4] = b"EVS1";
const HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 9;
pub const CSV_HEADER: &str = "t_us,x,y,p";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Evs1,
    /// Geometry is not stored in CSV files.
    Csv {
        width: u16,
        height: u16,
        duration: u32,
    },
}

impl StreamFormat {
    /// Guesses the format from a file extension (`.csv` or anything else = EVS1).
    pub fn from_path(path: &Path, geometry: Option<(u16, u16, u32)>) -> Result<Self> {
        let is_csv = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("csv"))
            .unwrap_or(false);
        if is_csv {
            let (width, height, duration) = geometry.ok_or_else(|| {
                Error::arg("CSV streams need --width, --height and --duration-us")
            })?;
            Ok(StreamFormat::Csv {
                width,
                height,
                duration,
            })
        } else {
            Ok(StreamFormat::Evs1)
        }
    }
}

pub fn load_stream(path: impl AsRef<Path>, format: StreamFormat) -> Result<EventStream> {
    let path = path.as_ref();
    match format {
        StreamFormat::Evs1 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            read_evs1(&bytes)
        }
        StreamFormat::Csv {
            width,
            height,
            duration,
        } => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            read_csv(BufReader::new(file), width, height, duration)
        }
    }
}

pub fn save_stream(stream: &EventStream, path: impl AsRef<Path>, format: StreamFormat) -> Result<()> {
    let path = path.as_ref();
    stream.validate()?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        StreamFormat::Evs1 => write_evs1(stream).and_then(|bytes| out.write_all(&bytes)),
        StreamFormat::Csv { .. } => write_csv(stream, &mut out),
    }
    .and_then(|_| out.flush())
    .map_err(|e| Error::io(path, e))
}

/// Parses an EVS1 image. Unsorted records are stably sorted by timestamp.
pub fn read_evs1(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < 4 || &bytes[..4] != EVS1_MAGIC {
        return Err(Error::format_at_offset("bad magic", 0));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format_at_offset("truncated header", bytes.len() as u64));
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]);
    let height = u16::from_le_bytes([bytes[6], bytes[7]]);
    let duration = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(Error::format_at_offset("zero sensor dimension", 4));
    }

    let mut events = Vec::with_capacity(count.min((bytes.len() - HEADER_LEN) / RECORD_LEN));
    for i in 0..count {
        let off = HEADER_LEN + i * RECORD_LEN;
        let rec = bytes
            .get(off..off + RECORD_LEN)
            .ok_or_else(|| Error::format_at_offset("truncated record", off as u64))?;
        let t = u32::from_le_bytes(rec[0..4].try_into().unwrap());
        let x = u16::from_le_bytes([rec[4], rec[5]]);
        let y = u16::from_le_bytes([rec[6], rec[7]]);
        if x >= width || y >= height {
            return Err(Error::format_at_offset(
                format!("coordinate ({x}, {y}) outside {width}x{height} sensor"),
                off as u64 + 4,
            ));
        }
        if t >= duration {
            return Err(Error::format_at_offset(
                format!("timestamp {t} not below duration {duration}"),
                off as u64,
            ));
        }
        let polarity = Polarity::from_u8(rec[8]).ok_or_else(|| {
            Error::format_at_offset(format!("invalid polarity {}", rec[8]), off as u64 + 8)
        })?;
        events.push(Event::new(t, x, y, polarity));
    }
    let end = HEADER_LEN + count * RECORD_LEN;
    if bytes.len() != end {
        return Err(Error::format_at_offset("trailing bytes after last record", end as u64));
    }
    EventStream::from_unsorted(width, height, duration, events)
}

pub fn write_evs1(stream: &EventStream) -> std::io::Result<Vec<u8>> {
    let count = u32::try_from(stream.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "too many events"))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + stream.len() * RECORD_LEN);
    buf.extend_from_slice(EVS1_MAGIC);
    buf.extend_from_slice(&stream.width().to_le_bytes());
    buf.extend_from_slice(&stream.height().to_le_bytes());
    buf.extend_from_slice(&stream.duration().to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for e in stream.events() {
        buf.extend_from_slice(&e.t.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.push(e.polarity as u8);
    }
    Ok(buf)
}

pub fn read_csv<R: BufRead>(reader: R, width: u16, height: u16, duration: u32) -> Result<EventStream> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::format_at_line(e.to_string(), 1))?,
        None => return Err(Error::format_at_line("missing header", 1)),
    };
    if header.trim() != CSV_HEADER {
        return Err(Error::format_at_line(
            format!("expected header \"{CSV_HEADER}\", found \"{}\"", header.trim()),
            1,
        ));
    }

    fn field<T: FromStr>(part: Option<&str>, name: &str, line: usize) -> Result<T> {
        let raw = part.ok_or_else(|| Error::format_at_line(format!("missing field {name}"), line))?;
        raw.trim()
            .parse()
            .map_err(|_| Error::format_at_line(format!("invalid {name} \"{}\"", raw.trim()), line))
    }

    let mut events = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::format_at_line(e.to_string(), lineno))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t: u32 = field(parts.next(), "t_us", lineno)?;
        let x: u16 = field(parts.next(), "x", lineno)?;
        let y: u16 = field(parts.next(), "y", lineno)?;
        let p: u8 = field(parts.next(), "p", lineno)?;
        if parts.next().is_some() {
            return Err(Error::format_at_line("too many fields", lineno));
        }
        if x >= width || y >= height {
            return Err(Error::format_at_line(
                format!("coordinate ({x}, {y}) outside {width}x{height} sensor"),
                lineno,
            ));
        }
        if t >= duration {
            return Err(Error::format_at_line(
                format!("timestamp {t} not below duration {duration}"),
                lineno,
            ));
        }
        let polarity = Polarity::from_u8(p)
            .ok_or_else(|| Error::format_at_line(format!("invalid polarity {p}"), lineno))?;
        events.push(Event::new(t, x, y, polarity));
    }
    EventStream::from_unsorted(width, height, duration, events)
}

pub fn write_csv<W: Write>(stream: &EventStream, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for e in stream.events() {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity as u8)?;
    }
    Ok(())
}
