use std::io::{Read, Write};
use std::path::Path;

use super::{expect_eof, read_exact_or, read_path, write_path};
use crate::error::{Error, Result};
use crate::looming::{LoomingMap, RatioMode};

const MAGIC: &str = "LOOM";
const VERSION: &str = "1";

/// ASCII header `LOOM 1 <width> <height> <mode>\n`, then `f32` ratios, then
/// one validity byte (0/1) per pixel.
pub fn write_lmap_to(m: &LoomingMap, w: &mut dyn Write) -> Result<()> {
    let n = m.width * m.height;
    if m.ratio.len() != n || m.valid.len() != n {
        return Err(Error::InvalidArgument("looming map planes do not match its size".into()));
    }
    let mut buf = format!("{MAGIC} {VERSION} {} {} {}\n", m.width, m.height, m.mode).into_bytes();
    buf.reserve(5 * n);
    for r in &m.ratio {
        buf.extend_from_slice(&r.to_le_bytes());
    }
    buf.extend(m.valid.iter().map(|&v| v as u8));
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_lmap(m: &LoomingMap, path: impl AsRef<Path>) -> Result<()> {
    write_path(path.as_ref(), |w| write_lmap_to(m, w))
}

fn read_header_line(r: &mut dyn Read) -> Result<String> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        read_exact_or(r, &mut byte, "LMAP header")?;
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 64 {
            return Err(Error::malformed("LMAP header too long"));
        }
    }
    String::from_utf8(line).map_err(|_| Error::malformed("LMAP header is not ASCII"))
}

/// Reads a map; with `expected` set, a map of another mode is an error.
pub fn read_lmap_from(r: &mut dyn Read, expected: Option<RatioMode>) -> Result<LoomingMap> {
    let header = read_header_line(r)?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(Error::malformed(format!("bad LMAP header `{header}`")));
    }
    if fields[1] != VERSION {
        return Err(Error::malformed(format!("unsupported LMAP version {}", fields[1])));
    }
    let dim = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0 && d <= 1 << 15)
            .ok_or_else(|| Error::malformed(format!("bad LMAP dimension `{s}`")))
    };
    let (width, height) = (dim(fields[2])?, dim(fields[3])?);
    let mode: RatioMode = fields[4]
        .parse()
        .map_err(|_| Error::malformed(format!("bad LMAP mode `{}`", fields[4])))?;
    if let Some(exp) = expected {
        if exp != mode {
            return Err(Error::ModeMismatch {
                found: mode.to_string(),
                expected: exp.to_string(),
            });
        }
    }
    let n = width * height;
    let mut ratios = vec![0u8; 4 * n];
    read_exact_or(r, &mut ratios, "LMAP ratios")?;
    let mut flags = vec![0u8; n];
    read_exact_or(r, &mut flags, "LMAP validity")?;
    expect_eof(r)?;
    let valid = flags
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::malformed(format!("bad validity byte {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoomingMap {
        width,
        height,
        ratio: ratios
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        valid,
        mode,
    })
}

pub fn read_lmap(path: impl AsRef<Path>, expected: Option<RatioMode>) -> Result<LoomingMap> {
    read_path(path.as_ref(), |r| read_lmap_from(r, expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(mode: RatioMode, valid: bool) -> LoomingMap {
        LoomingMap {
            width: 1,
            height: 1,
            ratio: vec![0.75],
            valid: vec![valid],
            mode,
        }
    }

    #[test]
    fn single_pixel_layout() {
        let mut out = Vec::new();
        write_lmap_to(&one(RatioMode::Pixel, true), &mut out).unwrap();
        let mut expected = b"LOOM 1 1 1 pixel\n".to_vec();
        expected.extend_from_slice(&0.75f32.to_le_bytes());
        expected.push(1);
        assert_eq!(out, expected);
    }

    #[test]
    fn invalid_map_round_trips() {
        let m = LoomingMap {
            width: 3,
            height: 2,
            ratio: vec![0.0; 6],
            valid: vec![false; 6],
            mode: RatioMode::Angular,
        };
        let mut out = Vec::new();
        write_lmap_to(&m, &mut out).unwrap();
        assert_eq!(read_lmap_from(&mut &out[..], None).unwrap(), m);
    }

    #[test]
    fn mode_mismatch_and_corruption() {
        let mut out = Vec::new();
        write_lmap_to(&one(RatioMode::Angular, true), &mut out).unwrap();
        assert!(matches!(
            read_lmap_from(&mut &out[..], Some(RatioMode::Pixel)),
            Err(Error::ModeMismatch { .. })
        ));
        assert!(read_lmap_from(&mut &out[..], Some(RatioMode::Angular)).is_ok());
        assert!(read_lmap_from(&mut &out[..out.len() - 1], None).is_err());
        let bad_magic = [b"LOOX".as_slice(), &out[4..]].concat();
        assert!(read_lmap_from(&mut &bad_magic[..], None).is_err());
        let bad_version = String::from_utf8_lossy(&out).replacen("LOOM 1", "LOOM 2", 1);
        assert!(read_lmap_from(&mut bad_version.as_bytes(), None).is_err());
    }
}
