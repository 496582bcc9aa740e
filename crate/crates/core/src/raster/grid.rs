//! RGRD single-grid binary format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "RGRD"
//! 4       4     rows, u32 little-endian
//! 8       4     cols, u32 little-endian
//! 12      1     flags (bit 0: normalized, bit 1: signed, others 0)
//! 13      4*n   values, f32 little-endian, row-major, top row first
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Delta, RainMap};
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"RGRD";
pub const GRID_HEADER_LEN: usize = 13;

const FLAG_NORMALIZED: u8 = 0x01;
/// Marks a signed grid (flow components, differences). Never valid for a
/// [`RainMap`].
const FLAG_SIGNED: u8 = 0x02;

fn encode<W: Write>(
    rows: usize,
    cols: usize,
    flags: u8,
    values: &[f32],
    mut sink: W,
) -> Result<usize> {
    let mut buf = Vec::with_capacity(GRID_HEADER_LEN + 4 * values.len());
    buf.extend_from_slice(GRID_MAGIC);
    buf.extend_from_slice(&dim_to_u32(rows)?.to_le_bytes());
    buf.extend_from_slice(&dim_to_u32(cols)?.to_le_bytes());
    buf.push(flags);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len())
}

fn dim_to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} does not fit in u32")))
}

fn decode<R: Read>(mut source: R, allowed_flags: u8) -> Result<(usize, usize, u8, Vec<f32>)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;

    if bytes.len() < 4 || &bytes[..4] != GRID_MAGIC {
        return Err(Error::Format("missing RGRD magic".into()));
    }
    if bytes.len() < GRID_HEADER_LEN {
        return Err(Error::Truncated {
            expected: GRID_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let flags = bytes[12];
    if flags & !allowed_flags != 0 {
        return Err(Error::Format(format!("unexpected flag bits: {flags:#04x}")));
    }

    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(GRID_HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("dimensions {rows}x{cols} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }

    let values = bytes[GRID_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, flags, values))
}

/// Writes `map` and returns the number of bytes emitted.
pub fn write_grid<W: Write>(map: &RainMap, sink: W) -> Result<usize> {
    let flags = if map.is_normalized() {
        FLAG_NORMALIZED
    } else {
        0
    };
    encode(map.rows(), map.cols(), flags, map.values(), sink)
}

pub fn read_grid<R: Read>(source: R) -> Result<RainMap> {
    let (rows, cols, flags, values) = decode(source, FLAG_NORMALIZED)?;
    RainMap::new(rows, cols, values, flags & FLAG_NORMALIZED != 0)
}

/// Writes a signed grid (flag bit 1). [`read_grid`] rejects these files.
pub fn write_signed_grid<W: Write>(delta: &Delta, sink: W) -> Result<usize> {
    if delta.values.len() != delta.rows * delta.cols {
        return Err(Error::shape(
            &[delta.rows * delta.cols],
            &[delta.values.len()],
        ));
    }
    encode(delta.rows, delta.cols, FLAG_SIGNED, &delta.values, sink)
}

pub fn read_signed_grid<R: Read>(source: R) -> Result<Delta> {
    let (rows, cols, flags, values) = decode(source, FLAG_SIGNED)?;
    if flags != FLAG_SIGNED {
        return Err(Error::Format("grid is not marked signed".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in signed grid".into()));
    }
    Ok(Delta { rows, cols, values })
}

pub fn write_grid_file(map: &RainMap, path: impl AsRef<Path>) -> Result<usize> {
    write_grid(map, BufWriter::new(File::create(path)?))
}

pub fn read_grid_file(path: impl AsRef<Path>) -> Result<RainMap> {
    read_grid(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Hand-encoded: "RGRD", rows=2, cols=2, flags=normalized, then
    // 0.0 / 0.5 / 1.0 / 0.25 as f32 LE.
    const GOLDEN_2X2: [u8; 29] = [
        b'R', b'G', b'R', b'D', //
        0x02, 0x00, 0x00, 0x00, //
        0x02, 0x00, 0x00, 0x00, //
        0x01, //
        0x00, 0x00, 0x00, 0x00, //
        0x00, 0x00, 0x00, 0x3F, //
        0x00, 0x00, 0x80, 0x3F, //
        0x00, 0x00, 0x80, 0x3E,
    ];

    fn golden_map() -> RainMap {
        RainMap::new(2, 2, vec![0.0, 0.5, 1.0, 0.25], true).unwrap()
    }

    #[test]
    fn writes_golden_bytes() {
        let mut out = Vec::new();
        let n = write_grid(&golden_map(), &mut out).unwrap();
        assert_eq!(n, 29);
        assert_eq!(out, GOLDEN_2X2);
    }

    #[test]
    fn reads_golden_bytes() {
        let m = read_grid(&GOLDEN_2X2[..]).unwrap();
        assert_eq!(m, golden_map());
    }

    #[test]
    fn single_zero_cell() {
        let mut out = Vec::new();
        write_grid(&RainMap::zeros(1, 1, false), &mut out).unwrap();
        assert_eq!(out.len(), 17);
        assert_eq!(&out[13..], &[0, 0, 0, 0]);
        assert_eq!(out[12], 0);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = GOLDEN_2X2.to_vec();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_grid(&bytes[..]), Err(Error::Format(_))));
        assert!(matches!(read_grid(&b"RG"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn short_payload() {
        let bytes = &GOLDEN_2X2[..GOLDEN_2X2.len() - 4];
        assert!(matches!(
            read_grid(bytes),
            Err(Error::Truncated {
                expected: 29,
                found: 25
            })
        ));
        assert!(matches!(
            read_grid(&GOLDEN_2X2[..9]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_invalid_values() {
        let mut bytes = GOLDEN_2X2.to_vec();
        bytes[13..17].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_grid(&bytes[..]), Err(Error::Domain(_))));
        bytes[13..17].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(read_grid(&bytes[..]), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_reserved_flags_and_trailing_bytes() {
        let mut bytes = GOLDEN_2X2.to_vec();
        bytes[12] = 0x02;
        assert!(matches!(read_grid(&bytes[..]), Err(Error::Format(_))));
        let mut bytes = GOLDEN_2X2.to_vec();
        bytes.push(0);
        assert!(matches!(read_grid(&bytes[..]), Err(Error::Format(_))));
    }

    fn arb_map() -> impl Strategy<Value = RainMap> {
        (1usize..12, 1usize..12, any::<bool>()).prop_flat_map(|(r, c, norm)| {
            let hi = if norm { 1.0f32 } else { 500.0 };
            proptest::collection::vec(0.0f32..=hi, r * c)
                .prop_map(move |v| RainMap::new(r, c, v, norm).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(m in arb_map()) {
            let mut out = Vec::new();
            let n = write_grid(&m, &mut out).unwrap();
            prop_assert_eq!(n, GRID_HEADER_LEN + 4 * m.len());
            let back = read_grid(&out[..]).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            prop_assert_eq!(back.is_normalized(), m.is_normalized());
            for (a, b) in back.values().iter().zip(m.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn signed_grids_are_separate() {
        let d = Delta {
            rows: 1,
            cols: 3,
            values: vec![-1.5, 0.0, 2.25],
        };
        let mut buf = Vec::new();
        write_signed_grid(&d, &mut buf).unwrap();
        assert_eq!(buf[12], 0x02);
        assert_eq!(read_signed_grid(&buf[..]).unwrap(), d);
        assert!(matches!(read_grid(&buf[..]), Err(Error::Format(_))));

        let mut plain = Vec::new();
        write_grid(&RainMap::zeros(1, 3, true), &mut plain).unwrap();
        assert!(read_signed_grid(&plain[..]).is_err());
    }
}
