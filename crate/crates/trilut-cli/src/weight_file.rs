//! On-disk packed-weight format.
//!
//! All multi-byte fields little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VLT1"
//! 4       2     version (u16, currently 1)
//! 6       4     M (u32)
//! 10      4     K (u32)
//! 14      1     mode (0 = i2, 1 = i1, 2 = mixed)
//! 15      2     m_tile (u16, rows per M-tile)
//! 17      2     k_tile (u16, groups per K-tile)
//! 19      4     weight_scale (f32 bits)
//! 23      4     schedule_len (u32)
//! 27      ...   schedule (one group size byte each)
//! ...     8     payload_len (u64)
//! ...     ...   payload (tile-permuted group indices)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use trilut::{GroupSchedule, PackedWeights, PackingMode};

use crate::CliError;

pub const MAGIC: [u8; 4] = *b"VLT1";
pub const VERSION: u16 = 1;

/// Byte offset of the schedule section; payload_len follows the schedule.
pub const HEADER_LEN: usize = 27;

pub fn write_to<W: Write>(out: &mut W, w: &PackedWeights, mode: PackingMode) -> std::io::Result<()> {
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(w.m() as u32).to_le_bytes())?;
    out.write_all(&(w.k() as u32).to_le_bytes())?;
    out.write_all(&[mode.code()])?;
    out.write_all(&(w.m_tile() as u16).to_le_bytes())?;
    out.write_all(&(w.k_tile_groups() as u16).to_le_bytes())?;
    out.write_all(&w.weight_scale().to_le_bytes())?;
    out.write_all(&(w.schedule().len() as u32).to_le_bytes())?;
    out.write_all(w.schedule().groups())?;
    out.write_all(&(w.payload().len() as u64).to_le_bytes())?;
    out.write_all(w.payload())?;
    Ok(())
}

pub fn save(path: &Path, w: &PackedWeights, mode: PackingMode) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_to(&mut f, w, mode)?;
    Ok(())
}

fn read_exact_buf<R: Read>(r: &mut R, len: usize) -> std::io::Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn take<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_from<R: Read>(r: &mut R) -> Result<(PackedWeights, PackingMode), CliError> {
    let magic = take::<4>(r)?;
    if magic != MAGIC {
        return Err(CliError::Format(format!(
            "bad magic {magic:02x?}, expected \"VLT1\""
        )));
    }
    let version = u16::from_le_bytes(take::<2>(r)?);
    if version != VERSION {
        return Err(CliError::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let m = u32::from_le_bytes(take::<4>(r)?) as usize;
    let k = u32::from_le_bytes(take::<4>(r)?) as usize;
    let mode = PackingMode::from_code(take::<1>(r)?[0])?;
    let m_tile = u16::from_le_bytes(take::<2>(r)?) as usize;
    let k_tile_groups = u16::from_le_bytes(take::<2>(r)?) as usize;
    let weight_scale = f32::from_le_bytes(take::<4>(r)?);
    let schedule_len = u32::from_le_bytes(take::<4>(r)?) as usize;
    let schedule_bytes = read_exact_buf(r, schedule_len)?;
    let schedule = GroupSchedule::new(schedule_bytes, k)?;
    let payload_len = u64::from_le_bytes(take::<8>(r)?) as usize;
    let payload = read_exact_buf(r, payload_len)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CliError::Format("trailing bytes after payload".into()));
    }
    let weights =
        PackedWeights::from_parts(m, k, schedule, k_tile_groups, m_tile, payload, weight_scale)?;
    Ok((weights, mode))
}

pub fn load(path: &Path) -> Result<(PackedWeights, PackingMode), CliError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_from(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trilut::{pack_matrix_tiled, unpack_matrix, TernaryMatrix};

    fn sample() -> (PackedWeights, TernaryMatrix) {
        let data: Vec<i8> = (0..7 * 20).map(|i| (i % 3) as i8 - 1).collect();
        let w = TernaryMatrix::new(7, 20, data, 0.125).unwrap();
        let p = pack_matrix_tiled(&w, PackingMode::Mixed, 2, 4).unwrap();
        (p, w)
    }

    #[test]
    fn roundtrip_through_bytes() {
        let (p, w) = sample();
        let mut buf = Vec::new();
        write_to(&mut buf, &p, PackingMode::Mixed).unwrap();
        let (q, mode) = read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(mode, PackingMode::Mixed);
        assert_eq!(q, p);
        assert_eq!(unpack_matrix(&q).unwrap(), w);
    }

    #[test]
    fn header_fields_are_little_endian_at_fixed_offsets() {
        let (p, _) = sample();
        let mut buf = Vec::new();
        write_to(&mut buf, &p, PackingMode::Mixed).unwrap();
        assert_eq!(&buf[0..4], b"VLT1");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(buf[10..14].try_into().unwrap()), 20);
        assert_eq!(buf[14], 2); // mixed
        assert_eq!(u16::from_le_bytes([buf[15], buf[16]]), 4); // m_tile
        assert_eq!(u16::from_le_bytes([buf[17], buf[18]]), 2); // k_tile groups
        assert_eq!(
            f32::from_le_bytes(buf[19..23].try_into().unwrap()),
            0.125
        );
        assert_eq!(u32::from_le_bytes(buf[23..27].try_into().unwrap()), 4);
        assert_eq!(buf.len(), HEADER_LEN + 4 + 8 + p.payload().len());
    }

    #[test]
    fn rejects_bad_magic_and_corrupt_payload() {
        let (p, _) = sample();
        let mut buf = Vec::new();
        write_to(&mut buf, &p, PackingMode::Mixed).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_from(&mut bad.as_slice()),
            Err(CliError::Format(_))
        ));

        // first payload byte belongs to a g=5 tile; 243 is out of range
        let payload_start = buf.len() - p.payload().len();
        let mut corrupt = buf.clone();
        corrupt[payload_start] = 243;
        assert!(matches!(
            read_from(&mut corrupt.as_slice()),
            Err(CliError::Lib(trilut::Error::CorruptPayload { byte: 243, .. }))
        ));

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(matches!(
            read_from(&mut trailing.as_slice()),
            Err(CliError::Format(_))
        ));
    }
}
