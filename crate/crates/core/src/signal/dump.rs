//! Binary signal dumps.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `SVKK`                |
//! | 4      | 4    | u32 version (= 1)           |
//! | 8      | 8    | u64 sample count `n`        |
//! | 16     | 16n  | f64 pairs `(re, im)`        |
//! | 16+16n | 8    | f64 sample rate in Hz       |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Signal, C64};
use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"SVKK";
pub const DUMP_VERSION: u32 = 1;

pub fn write_dump_to(mut w: impl Write, x: &Signal) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&(x.len() as u64).to_le_bytes())?;
    for s in x.samples() {
        w.write_all(&s.re.to_le_bytes())?;
        w.write_all(&s.im.to_le_bytes())?;
    }
    w.write_all(&x.sample_rate().to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn write_dump(path: impl AsRef<Path>, x: &Signal) -> Result<()> {
    write_dump_to(BufWriter::new(File::create(path)?), x)
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_dump_from(mut r: impl Read) -> Result<Signal> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::invalid_input("not an SVKK signal dump (bad magic)"));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != DUMP_VERSION {
        return Err(Error::invalid_input(format!(
            "unsupported dump version {version}"
        )));
    }
    let mut c = [0u8; 8];
    r.read_exact(&mut c)?;
    let n = u64::from_le_bytes(c) as usize;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        samples.push(C64::new(re, im));
    }
    let fs = read_f64(&mut r)?;
    Signal::new(samples, fs)
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<Signal> {
    read_dump_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes_are_exact() {
        let x = Signal::new(vec![C64::new(1.0, -2.0), C64::new(0.5, 0.25)], 8e9).unwrap();
        let mut buf = Vec::new();
        write_dump_to(&mut buf, &x).unwrap();
        assert_eq!(buf.len(), 16 + 32 + 8);
        assert_eq!(&buf[0..4], b"SVKK");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..16], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&buf[24..32], &(-2.0f64).to_le_bytes());
        assert_eq!(&buf[48..56], &8e9f64.to_le_bytes());
        let back = read_dump_from(&buf[..]).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_dump_from(&b"NOPE\x01\0\0\0"[..]).is_err());
        let x = Signal::new(vec![C64::new(1.0, 0.0); 3], 1.0).unwrap();
        let mut buf = Vec::new();
        write_dump_to(&mut buf, &x).unwrap();
        assert!(read_dump_from(&buf[..buf.len() - 4]).is_err());
    }
}
