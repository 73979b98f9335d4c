use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{read_exact_or, read_path, write_path};
use crate::error::{Error, Result};
use crate::looming::DetectionMask;
use crate::raster::{ColorFrame, Frame};

/// Round half up, then clamp to a byte.
#[inline]
fn to_byte(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn write_pgm_to(f: &Frame, w: &mut dyn Write) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", f.width(), f.height())?;
    let bytes: Vec<u8> = f.pixels().iter().map(|&p| to_byte(p)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_pgm(f: &Frame, path: impl AsRef<Path>) -> Result<()> {
    write_path(path.as_ref(), |w| write_pgm_to(f, w))
}

/// Moving pixels as 255, the rest as 0.
pub fn write_mask_pgm(m: &DetectionMask, path: impl AsRef<Path>) -> Result<()> {
    let frame = Frame::new(
        m.width,
        m.height,
        m.moving.iter().map(|&b| if b { 255.0 } else { 0.0 }).collect(),
    )?;
    write_pgm(&frame, path)
}

pub fn write_ppm_to(c: &ColorFrame, w: &mut dyn Write) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", c.width(), c.height())?;
    let bytes: Vec<u8> = c.rgb().iter().map(|&p| to_byte(p)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_ppm(c: &ColorFrame, path: impl AsRef<Path>) -> Result<()> {
    write_path(path.as_ref(), |w| write_ppm_to(c, w))
}

/// Reads one header token, skipping whitespace and `#` comments.
fn header_token(r: &mut dyn Read) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::malformed("truncated PGM header"));
        }
        match byte[0] {
            b'#' if tok.is_empty() => loop {
                if r.read(&mut byte)? == 0 {
                    return Err(Error::malformed("truncated PGM header"));
                }
                if byte[0] == b'\n' {
                    break;
                }
            },
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    return Ok(tok);
                }
            }
            c => {
                tok.push(c as char);
                if tok.len() > 16 {
                    return Err(Error::malformed("PGM header token too long"));
                }
            }
        }
    }
}

fn header_number(r: &mut dyn Read, what: &str) -> Result<usize> {
    let tok = header_token(r)?;
    tok.parse()
        .map_err(|_| Error::malformed(format!("bad PGM {what} `{tok}`")))
}

pub fn read_pgm_from(r: &mut dyn Read) -> Result<Frame> {
    let magic = header_token(r)?;
    if magic != "P5" {
        return Err(Error::malformed(format!("not a binary PGM (magic `{magic}`)")));
    }
    let width = header_number(r, "width")?;
    let height = header_number(r, "height")?;
    let maxval = header_number(r, "maxval")?;
    if maxval != 255 {
        return Err(Error::malformed(format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::malformed(format!("empty image {width}x{height}")));
    }
    let mut buf = vec![0u8; width * height];
    read_exact_or(r, &mut buf, "PGM payload")?;
    Frame::new(width, height, buf.into_iter().map(f64::from).collect())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Frame> {
    read_path(path.as_ref(), read_pgm_from)
}

pub fn sequence_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

fn sequence_index(name: &str) -> Option<u64> {
    name.strip_prefix("frame_")?
        .strip_suffix(".pgm")?
        .parse()
        .ok()
}

/// `frame_NNNNNN.pgm` files in `dir`, sorted by frame number.
pub fn list_frame_sequence(dir: impl AsRef<Path>) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir.as_ref())? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(idx) = name.to_str().and_then(sequence_index) {
            out.push((idx, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_frame_sequence(dir: impl AsRef<Path>) -> Result<Vec<Frame>> {
    list_frame_sequence(dir)?
        .into_iter()
        .map(|(idx, path)| Ok(read_pgm(&path)?.with_time_index(idx)))
        .collect()
}
