//! Little-endian primitives shared by the binary file formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn put_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

pub(crate) fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f32<W: Write>(w: &mut W, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_len(w: &mut impl Write, n: usize, what: &str) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Format(format!("{what} too large: {n}")))?;
    put_u32(w, n)
}

pub(crate) fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    put_len(w, s.len(), "string")?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

pub(crate) fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    Ok(take::<1, _>(r)?[0])
}

pub(crate) fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r)?))
}

pub(crate) fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(take(r)?))
}

pub(crate) fn get_f32<R: Read>(r: &mut R) -> Result<f32> {
    Ok(f32::from_le_bytes(take(r)?))
}

pub(crate) fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(take(r)?))
}

pub(crate) fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let n = get_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated string: {e}")))?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("invalid utf-8: {e}")))
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4], version: u32) -> Result<()> {
    let got: [u8; 4] = take(r)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = get_u32(r)?;
    if v != version {
        return Err(Error::Format(format!("unsupported version {v}")));
    }
    Ok(())
}
