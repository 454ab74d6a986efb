//! Binary event files.
//!
//! ```text
//! header  (22 bytes, little-endian)
//!   magic          8  "SPADEVT1"
//!   n_x, n_y       2+2
//!   tdc_bin_ps     4
//!   bins_per_frame 2
//!   mapping_mode   1  0 far field, 1 near field, 2 unspecified
//!   checksum       3  CRC-24/OpenPGP of the preceding 19 bytes
//! frame record
//!   frame_id       4
//!   n_events       2
//!   n_events × { pixel_index 2 (1-based linear index), tdc 1 }
//! footer (14 bytes)
//!   0xFFFFFFFF     4
//!   0u16           2
//!   total frames   8
//! ```
//!
//! Frames without events may be omitted; the footer carries the total frame
//! count and stored frame ids must lie below it.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use crc::{Crc, CRC_24_OPENPGP};

use super::IoError;
use crate::geometry::SensorGeometry;
use crate::optics::MappingMode;
use crate::sensor::{EventRecord, Frame};

pub const EVENT_MAGIC: &[u8; 8] = b"SPADEVT1";
pub const HEADER_LEN: usize = 22;
pub const FOOTER_LEN: usize = 14;
const FOOTER_SENTINEL: u32 = u32::MAX;
const CRC24: Crc<u32> = Crc::<u32>::new(&CRC_24_OPENPGP);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFileHeader {
    pub geometry: SensorGeometry,
    pub tdc_bin_ps: u32,
    pub bins_per_frame: u16,
    pub mapping: Option<MappingMode>,
}

impl EventFileHeader {
    fn validate(&self) -> Result<(), IoError> {
        let g = self.geometry;
        if g.n_x == 0 || g.n_y == 0 || self.bins_per_frame == 0 || self.tdc_bin_ps == 0 {
            return Err(IoError::BadHeader("dimensions, bin width and frame length must be nonzero".into()));
        }
        if self.bins_per_frame > 256 {
            return Err(IoError::BadHeader("more than 256 bins do not fit an 8-bit tdc".into()));
        }
        if g.n_pixels() > u16::MAX as usize {
            return Err(IoError::BadHeader("pixel count exceeds the 16-bit index".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..8].copy_from_slice(EVENT_MAGIC);
        b[8..10].copy_from_slice(&self.geometry.n_x.to_le_bytes());
        b[10..12].copy_from_slice(&self.geometry.n_y.to_le_bytes());
        b[12..16].copy_from_slice(&self.tdc_bin_ps.to_le_bytes());
        b[16..18].copy_from_slice(&self.bins_per_frame.to_le_bytes());
        b[18] = match self.mapping {
            Some(MappingMode::FarField) => 0,
            Some(MappingMode::NearField) => 1,
            None => 2,
        };
        let crc = CRC24.checksum(&b[..19]);
        b[19..22].copy_from_slice(&crc.to_le_bytes()[..3]);
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self, IoError> {
        if &b[..8] != EVENT_MAGIC {
            return Err(IoError::BadMagic);
        }
        let stored = u32::from_le_bytes([b[19], b[20], b[21], 0]);
        if stored != CRC24.checksum(&b[..19]) {
            return Err(IoError::BadHeader("header checksum mismatch".into()));
        }
        let u16_at = |i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
        let mapping = match b[18] {
            0 => Some(MappingMode::FarField),
            1 => Some(MappingMode::NearField),
            2 => None,
            m => return Err(IoError::BadHeader(format!("unknown mapping mode {m}"))),
        };
        let h = Self {
            geometry: SensorGeometry::new(u16_at(8), u16_at(10)),
            tdc_bin_ps: u32::from_le_bytes([b[12], b[13], b[14], b[15]]),
            bins_per_frame: u16_at(16),
            mapping,
        };
        h.validate()?;
        Ok(h)
    }
}

fn check_frame(header: &EventFileHeader, frame: &Frame) -> Result<(), String> {
    if frame.frame_id == FOOTER_SENTINEL {
        return Err("frame id 0xFFFFFFFF is reserved".into());
    }
    if frame.events.len() > u16::MAX as usize {
        return Err(format!("{} events exceed the 16-bit count", frame.events.len()));
    }
    let g = header.geometry;
    let mut seen = vec![false; g.n_pixels()];
    for e in &frame.events {
        if !g.contains(e.pixel) {
            return Err(format!("pixel ({}, {}) outside the sensor", e.pixel.x, e.pixel.y));
        }
        if e.tdc as u16 >= header.bins_per_frame {
            return Err(format!("tdc {} beyond {} bins", e.tdc, header.bins_per_frame));
        }
        let k = g.flat(e.pixel);
        if std::mem::replace(&mut seen[k], true) {
            return Err(format!("pixel ({}, {}) appears twice", e.pixel.x, e.pixel.y));
        }
    }
    Ok(())
}

/// Streaming writer. Call [`EventWriter::finish`] to emit the footer.
pub struct EventWriter<W: Write> {
    sink: W,
    header: EventFileHeader,
    last_id: Option<u32>,
    bytes: u64,
    omit_empty: bool,
}

impl<W: Write> EventWriter<W> {
    pub fn new(mut sink: W, header: EventFileHeader) -> Result<Self, IoError> {
        header.validate()?;
        sink.write_all(&header.to_bytes())?;
        Ok(Self { sink, header, last_id: None, bytes: HEADER_LEN as u64, omit_empty: true })
    }

    /// Whether frames without events are skipped (the default).
    pub fn omit_empty_frames(mut self, omit: bool) -> Self {
        self.omit_empty = omit;
        self
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), IoError> {
        if let Some(last) = self.last_id {
            if frame.frame_id <= last {
                return Err(IoError::OrderViolation { previous: last, next: frame.frame_id });
            }
        }
        check_frame(&self.header, frame)
            .map_err(|reason| IoError::RangeViolation { frame_id: frame.frame_id, reason })?;
        self.last_id = Some(frame.frame_id);
        if self.omit_empty && frame.events.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::with_capacity(6 + 3 * frame.events.len());
        buf.write_u32::<LE>(frame.frame_id)?;
        buf.write_u16::<LE>(frame.events.len() as u16)?;
        for e in &frame.events {
            let idx = self.header.geometry.flat(e.pixel) as u16 + 1;
            buf.write_u16::<LE>(idx)?;
            buf.write_u8(e.tdc)?;
        }
        self.sink.write_all(&buf)?;
        self.bytes += buf.len() as u64;
        Ok(())
    }

    /// Write the footer and return the sink and total bytes written.
    pub fn finish(mut self, total_frames: u64) -> Result<(W, u64), IoError> {
        if let Some(last) = self.last_id {
            if last as u64 >= total_frames {
                return Err(IoError::RangeViolation {
                    frame_id: last,
                    reason: format!("frame id not below the total count {total_frames}"),
                });
            }
        }
        self.sink.write_u32::<LE>(FOOTER_SENTINEL)?;
        self.sink.write_u16::<LE>(0)?;
        self.sink.write_u64::<LE>(total_frames)?;
        self.sink.flush()?;
        Ok((self.sink, self.bytes + FOOTER_LEN as u64))
    }
}

/// Write a whole stream; returns the byte count.
pub fn write_events<'a, W, I>(frames: I, header: &EventFileHeader, total_frames: u64, sink: W) -> Result<u64, IoError>
where
    W: Write,
    I: IntoIterator<Item = &'a Frame>,
{
    let mut w = EventWriter::new(sink, *header)?;
    for f in frames {
        w.write_frame(f)?;
    }
    Ok(w.finish(total_frames)?.1)
}

/// Lazily reads frames, validating every record.
pub struct EventReader<R: Read> {
    source: R,
    header: EventFileHeader,
    last_id: Option<u32>,
    total_frames: Option<u64>,
    stored: u64,
    done: bool,
}

impl<R: Read> EventReader<R> {
    pub fn new(mut source: R) -> Result<Self, IoError> {
        let mut b = [0u8; HEADER_LEN];
        read_exact_or_truncated(&mut source, &mut b)?;
        let header = EventFileHeader::from_bytes(&b)?;
        Ok(Self { source, header, last_id: None, total_frames: None, stored: 0, done: false })
    }

    pub fn header(&self) -> &EventFileHeader {
        &self.header
    }

    /// Total frame count from the footer, known once the stream is drained.
    pub fn total_frames(&self) -> Option<u64> {
        self.total_frames
    }

    /// Number of frames stored in the file so far.
    pub fn stored_frames(&self) -> u64 {
        self.stored
    }

    fn next_frame(&mut self) -> Result<Option<Frame>, IoError> {
        if self.done {
            return Ok(None);
        }
        let mut head = [0u8; 6];
        read_exact_or_truncated(&mut self.source, &mut head)?;
        let frame_id = u32::from_le_bytes([head[0], head[1], head[2], head[3]]);
        let n_events = u16::from_le_bytes([head[4], head[5]]) as usize;
        if frame_id == FOOTER_SENTINEL {
            if n_events != 0 {
                return Err(IoError::InvariantViolation { frame_id, reason: "malformed footer".into() });
            }
            let total = self.source.read_u64::<LE>().map_err(truncated)?;
            if let Some(last) = self.last_id {
                if last as u64 >= total {
                    return Err(IoError::InvariantViolation {
                        frame_id: last,
                        reason: format!("frame id not below the total count {total}"),
                    });
                }
            }
            let mut probe = [0u8; 1];
            if self.source.read(&mut probe)? != 0 {
                return Err(IoError::InvariantViolation { frame_id, reason: "data after footer".into() });
            }
            self.total_frames = Some(total);
            self.done = true;
            return Ok(None);
        }
        if let Some(last) = self.last_id {
            if frame_id <= last {
                return Err(IoError::InvariantViolation {
                    frame_id,
                    reason: format!("frame ids not increasing (previous {last})"),
                });
            }
        }
        let mut body = vec![0u8; 3 * n_events];
        read_exact_or_truncated(&mut self.source, &mut body)?;
        let g = self.header.geometry;
        let mut events = Vec::with_capacity(n_events);
        for rec in body.chunks_exact(3) {
            let idx = u16::from_le_bytes([rec[0], rec[1]]);
            let pixel = g
                .from_linear_index(idx)
                .map_err(|e| IoError::InvariantViolation { frame_id, reason: e.to_string() })?;
            events.push(EventRecord { pixel, tdc: rec[2] });
        }
        let frame = Frame { frame_id, events };
        check_frame(&self.header, &frame).map_err(|reason| IoError::InvariantViolation { frame_id, reason })?;
        self.last_id = Some(frame_id);
        self.stored += 1;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for EventReader<R> {
    type Item = Result<Frame, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Read the header, all stored frames and the footer count.
pub fn read_events<R: Read>(source: R) -> Result<(EventFileHeader, Vec<Frame>, u64), IoError> {
    let mut reader = EventReader::new(source)?;
    let frames = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    let total = reader.total_frames().ok_or(IoError::Truncated)?;
    Ok((reader.header, frames, total))
}

/// Expand a sparse stream into frames `0..total`, inserting empty ones.
pub fn densify(frames: Vec<Frame>, total: u64) -> Vec<Frame> {
    let mut out = Vec::with_capacity(total as usize);
    let mut it = frames.into_iter().peekable();
    for id in 0..total as u32 {
        match it.peek() {
            Some(f) if f.frame_id == id => out.push(it.next().expect("peeked")),
            _ => out.push(Frame::new(id, Vec::new())),
        }
    }
    out
}

fn truncated(e: io::Error) -> IoError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        IoError::Truncated
    } else {
        IoError::Io(e.to_string())
    }
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), IoError> {
    r.read_exact(buf).map_err(truncated)
}
