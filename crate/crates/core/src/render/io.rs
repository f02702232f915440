//! Binary PPM (P6) and 16-bit PGM (P5) encoding. These are the bit-exact
//! reference formats; PNG export is available behind the `png` feature.

use std::path::Path;

use crate::error::{Error, Result};

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3, "rgb buffer size");
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Depth values in `[0, 1]` stored as `round(d * 65535)`, big-endian.
pub fn encode_pgm16(width: usize, height: usize, depth: &[f64]) -> Vec<u8> {
    assert_eq!(depth.len(), width * height, "depth buffer size");
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(depth.len() * 2);
    for &d in depth {
        let v = (d.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    std::fs::write(path, encode_ppm(width, height, rgb)).map_err(|e| Error::io(path, e))
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, depth: &[f64]) -> Result<()> {
    std::fs::write(path, encode_pgm16(width, height, depth)).map_err(|e| Error::io(path, e))
}

fn parse_header<'a>(bytes: &'a [u8], magic: &str, path: &Path) -> Result<(usize, usize, u32, &'a [u8])> {
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != magic {
        return Err(bad(&format!("expected {magic}, found {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])? as u32);
    // exactly one whitespace byte separates the header from the raster
    Ok((w, h, maxval, &bytes[pos + 1..]))
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let (w, h, maxval, data) = parse_header(bytes, "P6", path)?;
    if maxval != 255 || data.len() != w * h * 3 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "unsupported maxval or wrong raster size".into(),
        });
    }
    Ok((w, h, data.to_vec()))
}

pub fn decode_pgm16(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let (w, h, maxval, data) = parse_header(bytes, "P5", path)?;
    if maxval != 65535 || data.len() != w * h * 2 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "unsupported maxval or wrong raster size".into(),
        });
    }
    Ok((
        w,
        h,
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect(),
    ))
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes, path)
}

#[cfg(feature = "png")]
pub fn write_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    image::save_buffer(path, rgb, width as u32, height as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}
