use std::io::{Read, Write};
use std::path::Path;

use super::{expect_eof, read_exact_or, read_path, write_path};
use crate::error::{Error, Result};
use crate::flow::FlowField;

pub const FLO_SENTINEL: f32 = 202021.25;
/// Stored for invalid pixels; any component with magnitude at or above it
/// reads back as invalid.
pub const FLO_UNKNOWN: f32 = 1e9;

pub fn write_flo_to(flow: &FlowField, w: &mut dyn Write) -> Result<()> {
    let (width, height) = flow.dims();
    let dim = |d: usize| {
        i32::try_from(d).map_err(|_| Error::InvalidArgument(format!("dimension {d} too large for .flo")))
    };
    let mut buf = Vec::with_capacity(12 + 8 * width * height);
    buf.extend_from_slice(&FLO_SENTINEL.to_le_bytes());
    buf.extend_from_slice(&dim(width)?.to_le_bytes());
    buf.extend_from_slice(&dim(height)?.to_le_bytes());
    for i in 0..width * height {
        let (u, v) = if flow.valid()[i] {
            (flow.du()[i] as f32, flow.dv()[i] as f32)
        } else {
            (FLO_UNKNOWN, FLO_UNKNOWN)
        };
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    write_path(path.as_ref(), |w| write_flo_to(flow, w))
}

pub fn read_flo_from(r: &mut dyn Read) -> Result<FlowField> {
    let mut head = [0u8; 12];
    read_exact_or(r, &mut head, ".flo header")?;
    let sentinel = f32::from_le_bytes(head[0..4].try_into().unwrap());
    if sentinel != FLO_SENTINEL {
        return Err(Error::malformed(format!("bad .flo sentinel {sentinel}")));
    }
    let width = i32::from_le_bytes(head[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(head[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::malformed(format!("bad .flo size {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width
        .checked_mul(height)
        .filter(|n| *n <= 1 << 30)
        .ok_or_else(|| Error::malformed("oversized .flo"))?;
    let mut payload = vec![0u8; 8 * n];
    read_exact_or(r, &mut payload, ".flo payload")?;
    expect_eof(r)?;

    let mut du = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for px in payload.chunks_exact(8) {
        let u = f32::from_le_bytes(px[0..4].try_into().unwrap());
        let v = f32::from_le_bytes(px[4..8].try_into().unwrap());
        let ok = u.is_finite() && v.is_finite() && u.abs() < FLO_UNKNOWN && v.abs() < FLO_UNKNOWN;
        du.push(u as f64);
        dv.push(v as f64);
        valid.push(ok);
    }
    FlowField::new(width, height, du, dv, valid)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    read_path(path.as_ref(), read_flo_from)
}
