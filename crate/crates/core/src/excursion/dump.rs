//! Binary path dump: `h` as a little-endian IEEE-754 double, the step count as
//! a little-endian `u64`, then one zig-zag LEB128 varint per step delta.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::sample::LatticeExcursion;

fn zigzag(d: i64) -> u64 {
    ((d << 1) ^ (d >> 63)) as u64
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

pub fn write_path<W: Write>(path: &LatticeExcursion, mut out: W) -> Result<()> {
    let values = path.values();
    out.write_all(&path.h().to_le_bytes())?;
    out.write_all(&((values.len() - 1) as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(values.len() + 16);
    for w in values.windows(2) {
        let mut v = zigzag(i64::from(w[1]) - i64::from(w[0]));
        loop {
            let byte = (v & 0x7f) as u8;
            v >>= 7;
            if v == 0 {
                buf.push(byte);
                break;
            }
            buf.push(byte | 0x80);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_path<R: Read>(mut input: R) -> Result<LatticeExcursion> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    let h = f64::from_le_bytes(header[..8].try_into().unwrap());
    let steps = u64::from_le_bytes(header[8..].try_into().unwrap());
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let mut values = Vec::with_capacity(steps.min(1 << 28) as usize + 1);
    values.push(0i32);
    let mut bytes = body.iter();
    for _ in 0..steps {
        let mut v = 0u64;
        let mut shift = 0;
        loop {
            let &byte = bytes.next().ok_or_else(|| Error::Dump("truncated step data".into()))?;
            if shift > 63 {
                return Err(Error::Dump("varint too long".into()));
            }
            v |= u64::from(byte & 0x7f) << shift;
            shift += 7;
            if byte & 0x80 == 0 {
                break;
            }
        }
        let next = i64::from(*values.last().unwrap()) + unzigzag(v);
        let next = i32::try_from(next).map_err(|_| Error::Dump(format!("site {next} out of range")))?;
        values.push(next);
    }
    if bytes.next().is_some() {
        return Err(Error::Dump("trailing bytes after the last step".into()));
    }
    LatticeExcursion::infer(h, values).map_err(|e| Error::Dump(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursion::sample::{sample_conditioned_excursion, sample_reflected_forest};
    use crate::rng::replicate_rng;
    use proptest::prelude::*;

    #[test]
    fn round_trips_sampled_paths() {
        let mut rng = replicate_rng(2, "dump-test", 0);
        for _ in 0..5 {
            let a = sample_conditioned_excursion(1.0 / 80.0, &mut rng).unwrap();
            let b = sample_reflected_forest(1.0 / 80.0, &mut rng).unwrap();
            for p in [a, b] {
                let mut buf = Vec::new();
                write_path(&p, &mut buf).unwrap();
                assert_eq!(read_path(buf.as_slice()).unwrap(), p);
            }
        }
    }

    #[test]
    fn header_layout() {
        let p = LatticeExcursion::infer(0.5, vec![0, 1, 2, 1, 0]).unwrap();
        let mut buf = Vec::new();
        write_path(&p, &mut buf).unwrap();
        assert_eq!(&buf[..8], &0.5f64.to_le_bytes());
        assert_eq!(&buf[8..16], &4u64.to_le_bytes());
        assert_eq!(&buf[16..], &[2, 2, 1, 1]);
    }

    #[test]
    fn rejects_truncation() {
        let p = LatticeExcursion::infer(0.5, vec![0, 1, 2, 1, 0]).unwrap();
        let mut buf = Vec::new();
        write_path(&p, &mut buf).unwrap();
        buf.pop();
        assert!(read_path(buf.as_slice()).is_err());
        assert!(read_path(&buf[..10]).is_err());
    }

    proptest! {
        #[test]
        fn zigzag_inverts(d in any::<i64>()) {
            prop_assert_eq!(unzigzag(zigzag(d)), d);
        }
    }
}
