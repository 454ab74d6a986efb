//! Little-endian binary snapshots of accumulators and corrected tensors.
//!
//! ```text
//! accumulator  "SPADACC1" n_x:u16 n_y:u16 bins:u16 window:u16 shift:u16 (0 = none)
//!              n_frames:u64 g1[n]:u64 dt_hist[2·bins−1]:u64 g2[n²]:u64 [g2_shifted[n²]:u64]
//! corrected    "SPADG2C1" n_x:u16 n_y:u16 provenance:u8 mask_radius:u16 (0xFFFF = none)
//!              n_frames:u64 g1[n]:f64 values[n²]:f64
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::IoError;
use crate::correlator::{CorrectedG2, CorrelationAccumulator, Provenance, WindowConfig};
use crate::geometry::SensorGeometry;

pub const ACCUMULATOR_MAGIC: &[u8; 8] = b"SPADACC1";
pub const CORRECTED_MAGIC: &[u8; 8] = b"SPADG2C1";
const NO_MASK: u16 = u16::MAX;

fn put_u64s<W: Write>(w: &mut W, v: &[u64]) -> Result<(), IoError> {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<(), IoError> {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

fn get_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, IoError> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(IoError::Truncated);
    }
    Ok(buf)
}

fn get_u64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<u64>, IoError> {
    Ok(get_bytes(r, 8 * n)?.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, IoError> {
    Ok(get_bytes(r, 8 * n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(), IoError> {
    let got = get_bytes(r, 8)?;
    if got != magic {
        return Err(IoError::BadMagic);
    }
    Ok(())
}

fn expect_end<R: Read>(r: &mut R) -> Result<(), IoError> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(IoError::BadHeader("trailing bytes after snapshot".into()));
    }
    Ok(())
}

fn u16_le<R: Read>(r: &mut R) -> Result<u16, IoError> {
    r.read_u16::<LE>().map_err(|_| IoError::Truncated)
}

pub fn write_accumulator<W: Write>(acc: &CorrelationAccumulator, mut w: W) -> Result<(), IoError> {
    let g = acc.geometry();
    let win = acc.windows();
    w.write_all(ACCUMULATOR_MAGIC)?;
    w.write_u16::<LE>(g.n_x)?;
    w.write_u16::<LE>(g.n_y)?;
    w.write_u16::<LE>(acc.bins_per_frame())?;
    w.write_u16::<LE>(win.window)?;
    w.write_u16::<LE>(win.shift.unwrap_or(0))?;
    w.write_u64::<LE>(acc.n_frames())?;
    put_u64s(&mut w, acc.g1())?;
    put_u64s(&mut w, acc.dt_hist())?;
    put_u64s(&mut w, acc.g2())?;
    if let Some(s) = acc.g2_shifted() {
        put_u64s(&mut w, s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_accumulator<R: Read>(mut r: R) -> Result<CorrelationAccumulator, IoError> {
    expect_magic(&mut r, ACCUMULATOR_MAGIC)?;
    let geometry = SensorGeometry::new(u16_le(&mut r)?, u16_le(&mut r)?);
    let bins = u16_le(&mut r)?;
    let window = u16_le(&mut r)?;
    let shift = u16_le(&mut r)?;
    let windows = WindowConfig { window, shift: (shift != 0).then_some(shift) };
    if geometry.n_x == 0 || geometry.n_y == 0 || bins == 0 || bins > 256 {
        return Err(IoError::BadHeader("invalid accumulator dimensions".into()));
    }
    let n_frames = r.read_u64::<LE>().map_err(|_| IoError::Truncated)?;
    let n = geometry.n_pixels();
    let g1 = get_u64s(&mut r, n)?;
    let dt = get_u64s(&mut r, 2 * bins as usize - 1)?;
    let g2 = get_u64s(&mut r, n * n)?;
    let shifted = match windows.shift {
        Some(_) => Some(get_u64s(&mut r, n * n)?),
        None => None,
    };
    expect_end(&mut r)?;
    CorrelationAccumulator::from_parts(geometry, bins, windows, n_frames, g1, g2, shifted, dt)
        .map_err(|e| IoError::BadHeader(e.to_string()))
}

pub fn write_corrected<W: Write>(g2: &CorrectedG2, mut w: W) -> Result<(), IoError> {
    let g = g2.geometry();
    w.write_all(CORRECTED_MAGIC)?;
    w.write_u16::<LE>(g.n_x)?;
    w.write_u16::<LE>(g.n_y)?;
    w.write_u8(g2.provenance().bits())?;
    w.write_u16::<LE>(g2.mask_radius().unwrap_or(NO_MASK))?;
    w.write_u64::<LE>(g2.n_frames())?;
    put_f64s(&mut w, g2.g1())?;
    put_f64s(&mut w, g2.values())?;
    w.flush()?;
    Ok(())
}

pub fn read_corrected<R: Read>(mut r: R) -> Result<CorrectedG2, IoError> {
    expect_magic(&mut r, CORRECTED_MAGIC)?;
    let geometry = SensorGeometry::new(u16_le(&mut r)?, u16_le(&mut r)?);
    if geometry.n_x == 0 || geometry.n_y == 0 {
        return Err(IoError::BadHeader("invalid tensor dimensions".into()));
    }
    let bits = r.read_u8().map_err(|_| IoError::Truncated)?;
    let provenance =
        Provenance::from_bits(bits).ok_or_else(|| IoError::BadHeader(format!("unknown provenance bits {bits:#x}")))?;
    let mask = u16_le(&mut r)?;
    let n_frames = r.read_u64::<LE>().map_err(|_| IoError::Truncated)?;
    let n = geometry.n_pixels();
    let g1 = get_f64s(&mut r, n)?;
    let values = get_f64s(&mut r, n * n)?;
    expect_end(&mut r)?;
    CorrectedG2::from_parts(geometry, values, g1, n_frames, provenance, (mask != NO_MASK).then_some(mask))
        .map_err(|e| IoError::BadHeader(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{mask_neighbors, normalize};
    use crate::geometry::PixelCoord;
    use crate::sensor::{EventRecord, Frame};

    fn sample() -> CorrelationAccumulator {
        let mut acc = CorrelationAccumulator::new(SensorGeometry::default(), 255, WindowConfig::default()).unwrap();
        acc.add_frame(&Frame::new(
            0,
            vec![
                EventRecord { pixel: PixelCoord::new(1, 1), tdc: 3 },
                EventRecord { pixel: PixelCoord::new(9, 4), tdc: 30 },
                EventRecord { pixel: PixelCoord::new(5, 5), tdc: 4 },
            ],
        ))
        .unwrap();
        acc.add_empty_frames(9);
        acc
    }

    #[test]
    fn accumulator_round_trip() {
        let acc = sample();
        let mut buf = Vec::new();
        write_accumulator(&acc, &mut buf).unwrap();
        let back = read_accumulator(&buf[..]).unwrap();
        assert_eq!(back, acc);
        assert!(matches!(read_accumulator(&buf[..buf.len() - 1]), Err(IoError::Truncated)));
        buf[3] = 0;
        assert!(matches!(read_accumulator(&buf[..]), Err(IoError::BadMagic)));
    }

    #[test]
    fn corrected_round_trip() {
        let g2 = mask_neighbors(&normalize(&sample()).unwrap(), 1);
        let mut buf = Vec::new();
        write_corrected(&g2, &mut buf).unwrap();
        assert_eq!(read_corrected(&buf[..]).unwrap(), g2);
    }
}
