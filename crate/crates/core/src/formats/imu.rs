use std::io::Read;
use std::path::Path;

use super::read_path;
use crate::error::{Error, Result};

/// Accelerometer samples with strictly increasing timestamps (s) and
/// accelerations in m/s^2.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSeries {
    pub timestamps: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub az: Vec<f64>,
}

impl ImuSeries {
    pub fn new(t: Vec<f64>, ax: Vec<f64>, ay: Vec<f64>, az: Vec<f64>) -> Result<Self> {
        let n = t.len();
        if ax.len() != n || ay.len() != n || az.len() != n {
            return Err(Error::InvalidArgument("IMU columns differ in length".into()));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("IMU series needs >= 2 samples, got {n}")));
        }
        if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "IMU timestamps not strictly increasing at row {}",
                i + 1
            )));
        }
        Ok(Self { timestamps: t, ax, ay, az })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Parses `t,ax,ay,az` CSV (header required, `.` as decimal separator).
pub fn parse_imu_csv(r: &mut dyn Read) -> Result<ImuSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| Error::malformed(format!("IMU header: {e}")))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["t", "ax", "ay", "az"] {
        return Err(Error::malformed(format!(
            "IMU header must be `t,ax,ay,az`, got `{}`",
            names.join(",")
        )));
    }
    let (mut t, mut ax, mut ay, mut az) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::malformed(format!("IMU row {}: {e}", row + 1)))?;
        if rec.len() != 4 {
            return Err(Error::malformed(format!(
                "IMU row {} has {} columns, expected 4",
                row + 1,
                rec.len()
            )));
        }
        let mut vals = [0.0; 4];
        for (k, cell) in rec.iter().enumerate() {
            vals[k] = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::malformed(format!("IMU row {} column {}: `{cell}` is not a number", row + 1, k + 1))
            })?;
        }
        t.push(vals[0]);
        ax.push(vals[1]);
        ay.push(vals[2]);
        az.push(vals[3]);
    }
    ImuSeries::new(t, ax, ay, az).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Malformed(m),
        other => other,
    })
}

pub fn read_imu_csv(path: impl AsRef<Path>) -> Result<ImuSeries> {
    read_path(path.as_ref(), parse_imu_csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_rows() {
        let s = parse_imu_csv(&mut "t,ax,ay,az\n0.00,0,0,9.81\n0.01,0,0,9.79".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.az, vec![9.81, 9.79]);
        let trailing =
            parse_imu_csv(&mut "t,ax,ay,az\n0.00,0,0,9.81\n0.01,0,0,9.79\n\n".as_bytes()).unwrap();
        assert_eq!(s, trailing);
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            "t,ax,ay,az\n0.01,0,0,9.8\n0.00,0,0,9.8\n",
            "t,ax,ay,az\n0.00,0,0,9.8\n0.00,0,0,9.8\n",
            "t,ax,ay,az\n0.00,0,0\n0.01,0,0,9.8\n",
            "t,ax,ay,az\n0.00,0,0,abc\n0.01,0,0,9.8\n",
            "t,ax,ay,az\n0.00,0,0,9,81\n0.01,0,0,9.8\n",
            "time,ax,ay,az\n0.00,0,0,9.8\n0.01,0,0,9.8\n",
            "t,ax,ay,az\n0.00,0,0,9.8\n",
        ];
        for c in cases {
            assert!(parse_imu_csv(&mut c.as_bytes()).is_err(), "{c:?}");
        }
    }
}
