//! On-disk formats. All multi-byte numbers are little-endian.
//!
//! * PGM (binary `P5`, maxval 255) for frames and masks; a frame sequence is
//!   a directory of `frame_000123.pgm` files.
//! * `.flo` for flow fields (float sentinel 202021.25, then width, height and
//!   interleaved `f32` vectors; invalid pixels are written as `(1e9, 1e9)`).
//! * LMAP for looming maps.
//! * CSV (`t,ax,ay,az`) for accelerometer series.

mod flo;
mod imu;
mod lmap;
mod pgm;
mod viz;

pub use flo::{read_flo, read_flo_from, write_flo, write_flo_to, FLO_SENTINEL, FLO_UNKNOWN};
pub use imu::{parse_imu_csv, read_imu_csv, ImuSeries};
pub use lmap::{read_lmap, read_lmap_from, write_lmap, write_lmap_to};
pub use pgm::{
    list_frame_sequence, read_frame_sequence, read_pgm, read_pgm_from, sequence_file_name, write_mask_pgm,
    write_pgm, write_pgm_to, write_ppm, write_ppm_to,
};
pub use viz::render_viz;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_path<T>(path: &Path, f: impl FnOnce(&mut dyn Read) -> Result<T>) -> Result<T> {
    let mut reader = BufReader::new(File::open(path)?);
    f(&mut reader).map_err(|e| e.at_path(path))
}

pub(crate) fn write_path(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    f(&mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Reads exactly `buf.len()` bytes, reporting truncation as a format error.
pub(crate) fn read_exact_or(r: &mut dyn Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::malformed(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

/// Rejects trailing bytes after a complete payload.
pub(crate) fn expect_eof(r: &mut dyn Read) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(Error::malformed("payload longer than the header declares")),
    }
}
