//! Bit-exact event-stream and frame I/O.
//!
//! Three formats:
//! - text events: one `t_us,x,y,p` line per event, optional leading
//!   `# width,height` comment;
//! - binary events: 20-byte header (magic `EVS1BIN\0`, width u16, height
//!   u16, count u64, all little-endian) followed by packed 16-byte records
//!   (t u64, x u16, y u16, p i8, 3 pad bytes);
//! - binary PGM (`P5`, maxval 255) for frames.
//!
//! Readers and writers round-trip bit-exactly on valid inputs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::event::{Event, EventBatch, EventError, Frame, SensorGeometry};

/// Magic prefix of the binary event format.
pub const BIN_MAGIC: [u8; 8] = *b"EVS1BIN\0";
/// Binary header size in bytes: magic + width + height + count.
pub const BIN_HEADER_LEN: usize = 8 + 2 + 2 + 8;
/// Binary record size in bytes: t + x + y + p + 3 pad (16-byte aligned).
pub const BIN_RECORD_LEN: usize = 8 + 2 + 2 + 1 + 3;

#[derive(Debug, Error)]
pub enum EvioError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamp {t} precedes previous {prev}")]
    NonMonotoneTime { line: usize, t: u64, prev: u64 },
    #[error("bad magic: file is not in the binary event format")]
    BadMagic,
    #[error("file too short for the 20-byte header, got {got} bytes")]
    ShortHeader { got: u64 },
    #[error("truncated file: header promises {expected} records, payload holds {got_bytes} bytes")]
    TruncatedFile { expected: u64, got_bytes: u64 },
    #[error("count mismatch: header promises {expected} records but {extra} extra bytes follow")]
    CountMismatch { expected: u64, extra: u64 },
    #[error("record {index}: polarity byte {p} is not +1 or -1")]
    BadRecordPolarity { index: u64, p: i8 },
    #[error("malformed PGM: {reason}")]
    MalformedPgm { reason: String },
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Result of reading a text event stream.
#[derive(Debug)]
pub struct CsvReadResult {
    /// Geometry from the leading `# width,height` comment, if present.
    pub geometry: Option<SensorGeometry>,
    pub batch: EventBatch,
    /// Events that arrived behind their predecessor (lenient mode sorts
    /// them; strict mode errors instead, so this is then always zero).
    pub out_of_order: usize,
}

fn parse_err(line: usize, msg: impl Into<String>) -> EvioError {
    EvioError::Parse { line, msg: msg.into() }
}

/// Parse `width,height` out of a comment line body, if it looks like one.
fn parse_geometry_comment(body: &str) -> Option<(u16, u16)> {
    let mut it = body.split(',');
    let w = it.next()?.trim().parse::<u16>().ok()?;
    let h = it.next()?.trim().parse::<u16>().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((w, h))
}

/// Read text events. `strict_time` turns timestamp regressions into
/// errors; otherwise they are counted and repaired with a stable sort.
pub fn read_events_csv<R: BufRead>(
    reader: R,
    strict_time: bool,
) -> Result<CsvReadResult, EvioError> {
    let mut geometry: Option<SensorGeometry> = None;
    let mut events: Vec<Event> = Vec::new();
    let mut prev_t: Option<u64> = None;
    let mut saw_data = false;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(body) = trimmed.strip_prefix('#') {
            // only the first comment, before any data, may declare geometry
            if !saw_data && geometry.is_none() {
                if let Some((w, h)) = parse_geometry_comment(body) {
                    geometry = Some(
                        SensorGeometry::new(w, h)
                            .map_err(|e| parse_err(line_no, e.to_string()))?,
                    );
                }
            }
            continue;
        }
        saw_data = true;

        let mut fields = trimmed.split(',');
        let mut next_field = |name: &str| {
            fields
                .next()
                .map(str::trim)
                .ok_or_else(|| parse_err(line_no, format!("missing field {name}")))
        };
        let t: u64 = next_field("t_us")?
            .parse()
            .map_err(|_| parse_err(line_no, "bad timestamp"))?;
        let x: u16 = next_field("x")?.parse().map_err(|_| parse_err(line_no, "bad x"))?;
        let y: u16 = next_field("y")?.parse().map_err(|_| parse_err(line_no, "bad y"))?;
        let p_str = next_field("p")?;
        let p: i8 = match p_str {
            "1" => 1,
            "-1" => -1,
            other => return Err(parse_err(line_no, format!("bad polarity {other:?}"))),
        };
        if fields.next().is_some() {
            return Err(parse_err(line_no, "trailing fields"));
        }
        if let Some(g) = &geometry {
            if !g.contains(x, y) {
                return Err(parse_err(
                    line_no,
                    format!("pixel ({x}, {y}) outside declared {}x{}", g.width, g.height),
                ));
            }
        }
        if strict_time {
            if let Some(prev) = prev_t {
                if t < prev {
                    return Err(EvioError::NonMonotoneTime { line: line_no, t, prev });
                }
            }
        }
        prev_t = Some(t);
        events.push(Event::new(t, x, y, p));
    }

    let (batch, out_of_order) = EventBatch::from_unsorted(events);
    Ok(CsvReadResult { geometry, batch, out_of_order })
}

/// Write text events, mirroring [`read_events_csv`].
pub fn write_events_csv<W: Write>(
    mut w: W,
    geometry: Option<SensorGeometry>,
    batch: &EventBatch,
) -> Result<(), EvioError> {
    if let Some(g) = geometry {
        writeln!(w, "# {},{}", g.width, g.height)?;
    }
    for e in batch.iter() {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p)?;
    }
    Ok(())
}

pub fn read_events_csv_path(
    path: impl AsRef<Path>,
    strict_time: bool,
) -> Result<CsvReadResult, EvioError> {
    read_events_csv(BufReader::new(File::open(path)?), strict_time)
}

pub fn write_events_csv_path(
    path: impl AsRef<Path>,
    geometry: Option<SensorGeometry>,
    batch: &EventBatch,
) -> Result<(), EvioError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_events_csv(&mut w, geometry, batch)?;
    w.flush()?;
    Ok(())
}

/// Write the binary header and packed records. Pad bytes are zeroed.
pub fn write_events_bin<W: Write>(
    mut w: W,
    geometry: SensorGeometry,
    batch: &EventBatch,
) -> Result<(), EvioError> {
    let mut header = [0u8; BIN_HEADER_LEN];
    header[..8].copy_from_slice(&BIN_MAGIC);
    header[8..10].copy_from_slice(&geometry.width.to_le_bytes());
    header[10..12].copy_from_slice(&geometry.height.to_le_bytes());
    header[12..20].copy_from_slice(&(batch.len() as u64).to_le_bytes());
    w.write_all(&header)?;

    let mut rec = [0u8; BIN_RECORD_LEN];
    for e in batch.iter() {
        rec[..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8..10].copy_from_slice(&e.x.to_le_bytes());
        rec[10..12].copy_from_slice(&e.y.to_le_bytes());
        rec[12] = e.p as u8;
        // rec[13..16] stay zero
        w.write_all(&rec)?;
    }
    Ok(())
}

pub fn write_events_bin_path(
    path: impl AsRef<Path>,
    geometry: SensorGeometry,
    batch: &EventBatch,
) -> Result<(), EvioError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_events_bin(&mut w, geometry, batch)?;
    w.flush()?;
    Ok(())
}

/// Streaming reader over the binary event format.
///
/// Parses the header eagerly, then hands out records in caller-sized
/// chunks, so a chunked scan sees exactly the bytes a whole-file read
/// sees. Pad byte contents are ignored on read.
pub struct BinEventReader<R: Read> {
    inner: R,
    geometry: SensorGeometry,
    total: u64,
    consumed: u64,
}

impl<R: Read> BinEventReader<R> {
    pub fn new(mut inner: R) -> Result<Self, EvioError> {
        let mut header = [0u8; BIN_HEADER_LEN];
        let mut filled = 0;
        while filled < header.len() {
            let n = inner.read(&mut header[filled..])?;
            if n == 0 {
                return Err(EvioError::ShortHeader { got: filled as u64 });
            }
            filled += n;
        }
        if header[..8] != BIN_MAGIC {
            return Err(EvioError::BadMagic);
        }
        let width = u16::from_le_bytes([header[8], header[9]]);
        let height = u16::from_le_bytes([header[10], header[11]]);
        let total = u64::from_le_bytes(header[12..20].try_into().expect("8 bytes"));
        let geometry = SensorGeometry::new(width, height)?;
        Ok(BinEventReader { inner, geometry, total, consumed: 0 })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    /// Records the header promises.
    pub fn total_records(&self) -> u64 {
        self.total
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.consumed
    }

    /// Read up to `max` records into `out`. Returns how many arrived;
    /// zero means the stream is exhausted and its trailer was verified.
    pub fn read_chunk(&mut self, max: usize, out: &mut Vec<Event>) -> Result<usize, EvioError> {
        if self.remaining() == 0 {
            self.expect_eof()?;
            return Ok(0);
        }
        let take = (self.remaining().min(max as u64)) as usize;
        let mut rec = [0u8; BIN_RECORD_LEN];
        for _ in 0..take {
            read_exact_or(
                &mut self.inner,
                &mut rec,
                self.total,
                self.consumed * BIN_RECORD_LEN as u64,
            )?;
            let t = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
            let x = u16::from_le_bytes([rec[8], rec[9]]);
            let y = u16::from_le_bytes([rec[10], rec[11]]);
            let p = rec[12] as i8;
            if p != 1 && p != -1 {
                return Err(EvioError::BadRecordPolarity { index: self.consumed, p });
            }
            out.push(Event::new(t, x, y, p));
            self.consumed += 1;
        }
        Ok(take)
    }

    /// Collect every remaining record and check the stream ends cleanly.
    pub fn read_all(mut self) -> Result<(SensorGeometry, EventBatch), EvioError> {
        // Pre-size from the header, but never trust it further than 1M
        // records: a hostile count must not drive the allocation.
        let cap = self.remaining().min(1 << 20) as usize;
        let mut events = Vec::with_capacity(cap);
        while self.read_chunk(64 * 1024, &mut events)? > 0 {}
        let batch = EventBatch::new(events)?;
        Ok((self.geometry, batch))
    }

    fn expect_eof(&mut self) -> Result<(), EvioError> {
        let mut probe = [0u8; 64];
        let mut extra = 0u64;
        loop {
            let n = self.inner.read(&mut probe)?;
            if n == 0 {
                break;
            }
            extra += n as u64;
            if extra > 1 << 20 {
                break; // enough to prove the mismatch
            }
        }
        if extra > 0 {
            return Err(EvioError::CountMismatch { expected: self.total, extra });
        }
        Ok(())
    }
}

/// `read_exact` that reports a short read as a format-level truncation.
fn read_exact_or<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    expected_records: u64,
    got_bytes: u64,
) -> Result<(), EvioError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(EvioError::TruncatedFile {
                expected: expected_records,
                got_bytes: got_bytes + filled as u64,
            });
        }
        filled += n;
    }
    Ok(())
}

/// Decode a whole binary event file held in memory.
pub fn read_events_bin(bytes: &[u8]) -> Result<(SensorGeometry, EventBatch), EvioError> {
    BinEventReader::new(bytes)?.read_all()
}

pub fn read_events_bin_path(
    path: impl AsRef<Path>,
) -> Result<(SensorGeometry, EventBatch), EvioError> {
    BinEventReader::new(BufReader::new(File::open(path)?))?.read_all()
}

/// Serialize a frame as binary PGM (`P5`, maxval 255). Byte-deterministic:
/// header is exactly `P5\n<w> <h>\n255\n`.
pub fn pgm_bytes(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.pixels().len() + 20);
    out.extend_from_slice(
        format!("P5\n{} {}\n255\n", frame.geometry.width, frame.geometry.height).as_bytes(),
    );
    out.extend_from_slice(frame.pixels());
    out
}

pub fn write_frame_pgm(frame: &Frame, path: impl AsRef<Path>) -> Result<(), EvioError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&pgm_bytes(frame))?;
    w.flush()?;
    Ok(())
}

/// Parse a binary PGM (`P5`) with maxval <= 255 into geometry + pixels.
/// Header tokens may be separated by any whitespace and `#` comments,
/// per the netpbm convention; exactly one whitespace byte separates the
/// maxval from the raster.
pub fn read_pgm(bytes: &[u8]) -> Result<(SensorGeometry, Vec<u8>), EvioError> {
    fn bad(reason: &str) -> EvioError {
        EvioError::MalformedPgm { reason: reason.to_string() }
    }

    // Next header integer after whitespace and `#` comments.
    fn next_int(bytes: &[u8], pos: &mut usize) -> Result<u64, EvioError> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if *pos == start || *pos - start > 10 {
            return Err(bad("expected integer"));
        }
        let s = std::str::from_utf8(&bytes[start..*pos]).expect("ascii digits");
        s.parse::<u64>().map_err(|_| bad("integer out of range"))
    }

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 signature"));
    }
    let mut pos = 2usize;
    let width = next_int(bytes, &mut pos)?;
    let height = next_int(bytes, &mut pos)?;
    let maxval = next_int(bytes, &mut pos)?;
    if !(1..=255).contains(&maxval) {
        return Err(bad("maxval must be 1..=255"));
    }
    if width == 0 || height == 0 || width > u16::MAX as u64 || height > u16::MAX as u64 {
        return Err(bad("dimensions out of range"));
    }
    // exactly one whitespace byte before the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing raster separator"));
    }
    pos += 1;
    let n = width as usize * height as usize;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(bad("raster shorter than width*height"));
    }
    if raster.len() > n {
        return Err(bad("trailing bytes after raster"));
    }
    let geometry = SensorGeometry::new(width as u16, height as u16)?;
    Ok((geometry, raster.to_vec()))
}

pub fn read_pgm_path(path: impl AsRef<Path>) -> Result<(SensorGeometry, Vec<u8>), EvioError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_pgm(&bytes)
}
