//! Sample streams and their on-disk formats.
//!
//! Binary layout (all fields little-endian):
//!
//! | offset | size | field                                           |
//! |--------|------|-------------------------------------------------|
//! | 0      | 4    | magic `b"DSTR"`                                 |
//! | 4      | 2    | format version, currently `1`                   |
//! | 6      | 1    | kind: `0` = signed integer, `1` = f64           |
//! | 7      | 1    | word width in bits (64 for f64 streams)         |
//! | 8      | 8    | sample rate in Hz, f64                          |
//! | 16     | 8    | sample count, u64                               |
//! | 24     | ...  | samples                                         |
//!
//! Integer samples occupy the smallest of 1, 2, 4 or 8 bytes that holds the
//! width, stored as sign-extended two's complement. Real samples are f64.
//!
//! The CSV mirror starts with `#` metadata lines followed by `index,value`.

use std::io::{BufRead, Read, Write};

use crate::arith::{max_value, min_value};
use crate::error::{Error, Result};

pub const STREAM_MAGIC: [u8; 4] = *b"DSTR";
pub const STREAM_VERSION: u16 = 1;
pub const STREAM_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    /// Bit-exact integers, each representable in `width` bits.
    Int { width: u32, values: Vec<i64> },
    /// Real-valued reference samples, full scale is ±1.
    Real(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub rate_hz: f64,
    pub samples: Samples,
}

impl SampleStream {
    pub fn int(rate_hz: f64, width: u32, values: Vec<i64>) -> Result<Self> {
        if !(1..=64).contains(&width) {
            return Err(Error::InvalidWidth(width));
        }
        let (lo, hi) = (min_value(width), max_value(width));
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v < lo || **v > hi) {
            return Err(Error::InputRange {
                index,
                value,
                width,
            });
        }
        Ok(SampleStream {
            rate_hz,
            samples: Samples::Int { width, values },
        })
    }

    pub fn real(rate_hz: f64, values: Vec<f64>) -> Self {
        SampleStream {
            rate_hz,
            samples: Samples::Real(values),
        }
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            Samples::Int { values, .. } => values.len(),
            Samples::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> Option<u32> {
        match &self.samples {
            Samples::Int { width, .. } => Some(*width),
            Samples::Real(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<&[i64]> {
        match &self.samples {
            Samples::Int { values, .. } => Some(values),
            Samples::Real(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.samples {
            Samples::Real(v) => Some(v),
            Samples::Int { .. } => None,
        }
    }

    /// Samples scaled so that integer full scale 2^(width-1) maps to 1.0.
    pub fn to_full_scale(&self) -> Vec<f64> {
        match &self.samples {
            Samples::Real(v) => v.clone(),
            Samples::Int { width, values } => {
                let fs = 2f64.powi(*width as i32 - 1);
                values.iter().map(|&v| v as f64 / fs).collect()
            }
        }
    }

    /// The last `n` samples (all of them if shorter).
    pub fn tail(&self, n: usize) -> SampleStream {
        let skip = self.len().saturating_sub(n);
        let samples = match &self.samples {
            Samples::Int { width, values } => Samples::Int {
                width: *width,
                values: values[skip..].to_vec(),
            },
            Samples::Real(v) => Samples::Real(v[skip..].to_vec()),
        };
        SampleStream {
            rate_hz: self.rate_hz,
            samples,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# decim-stream v{STREAM_VERSION}")?;
        match &self.samples {
            Samples::Int { width, values } => {
                writeln!(out, "# kind=int width={width} fs_hz={} count={}", self.rate_hz, values.len())?;
                writeln!(out, "index,value")?;
                for (i, v) in values.iter().enumerate() {
                    writeln!(out, "{i},{v}")?;
                }
            }
            Samples::Real(values) => {
                writeln!(out, "# kind=real width=64 fs_hz={} count={}", self.rate_hz, values.len())?;
                writeln!(out, "index,value")?;
                for (i, v) in values.iter().enumerate() {
                    writeln!(out, "{i},{v:e}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut kind = None;
        let mut width = None;
        let mut rate = None;
        let mut ints = Vec::new();
        let mut reals = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for field in meta.split_whitespace() {
                    match field.split_once('=') {
                        Some(("kind", v)) => kind = Some(v.to_string()),
                        Some(("width", v)) => width = v.parse::<u32>().ok(),
                        Some(("fs_hz", v)) => rate = v.parse::<f64>().ok(),
                        _ => {}
                    }
                }
                continue;
            }
            if line == "index,value" {
                continue;
            }
            let value = line
                .split_once(',')
                .map(|(_, v)| v.trim())
                .ok_or_else(|| Error::Format(format!("malformed row '{line}'")))?;
            match kind.as_deref() {
                Some("int") => ints.push(
                    value
                        .parse::<i64>()
                        .map_err(|e| Error::Format(format!("bad integer '{value}': {e}")))?,
                ),
                Some("real") => reals.push(
                    value
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad real '{value}': {e}")))?,
                ),
                _ => return Err(Error::Format("missing '# kind=' header".into())),
            }
        }
        let rate = rate.ok_or_else(|| Error::Format("missing fs_hz header".into()))?;
        match kind.as_deref() {
            Some("int") => {
                let width = width.ok_or_else(|| Error::Format("missing width header".into()))?;
                SampleStream::int(rate, width, ints)
            }
            Some("real") => Ok(SampleStream::real(rate, reals)),
            _ => Err(Error::Format("missing '# kind=' header".into())),
        }
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let (kind, width) = match &self.samples {
            Samples::Int { width, .. } => (0u8, *width as u8),
            Samples::Real(_) => (1u8, 64u8),
        };
        out.write_all(&STREAM_MAGIC)?;
        out.write_all(&STREAM_VERSION.to_le_bytes())?;
        out.write_all(&[kind, width])?;
        out.write_all(&self.rate_hz.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        match &self.samples {
            Samples::Int { width, values } => {
                let bytes = int_sample_bytes(*width);
                for v in values {
                    out.write_all(&v.to_le_bytes()[..bytes])?;
                }
            }
            Samples::Real(values) => {
                for v in values {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; STREAM_HEADER_LEN];
        input.read_exact(&mut header)?;
        if header[0..4] != STREAM_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != STREAM_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let (kind, width) = (header[6], header[7] as u32);
        let rate = f64::from_le_bytes(header[8..16].try_into().unwrap());
        let count = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        match kind {
            0 => {
                let bytes = int_sample_bytes(width);
                let mut buf = vec![0u8; bytes];
                let mut values = Vec::with_capacity(count);
                for _ in 0..count {
                    input.read_exact(&mut buf)?;
                    let mut full = [0u8; 8];
                    full[..bytes].copy_from_slice(&buf);
                    let shift = 64 - 8 * bytes as u32;
                    values.push((i64::from_le_bytes(full) << shift) >> shift);
                }
                SampleStream::int(rate, width, values)
            }
            1 => {
                let mut buf = [0u8; 8];
                let mut values = Vec::with_capacity(count);
                for _ in 0..count {
                    input.read_exact(&mut buf)?;
                    values.push(f64::from_le_bytes(buf));
                }
                Ok(SampleStream::real(rate, values))
            }
            other => Err(Error::Format(format!("unknown sample kind {other}"))),
        }
    }
}

fn int_sample_bytes(width: u32) -> usize {
    match width {
        0..=8 => 1,
        9..=16 => 2,
        17..=32 => 4,
        _ => 8,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let s = SampleStream::int(48_000.0, 5, vec![-16, 15, 0]).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"DSTR");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(buf[6], 0);
        assert_eq!(buf[7], 5);
        assert_eq!(f64::from_le_bytes(buf[8..16].try_into().unwrap()), 48_000.0);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 3);
        assert_eq!(&buf[24..], &[0xF0, 0x0F, 0x00]);
    }

    #[test]
    fn rejects_out_of_range_ints() {
        assert!(matches!(
            SampleStream::int(1.0, 5, vec![0, 16]),
            Err(Error::InputRange { index: 1, value: 16, width: 5 })
        ));
    }

    #[test]
    fn bad_magic() {
        let buf = vec![0u8; STREAM_HEADER_LEN];
        assert!(SampleStream::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn csv_real_round_trip() {
        let s = SampleStream::real(96_000.0, vec![0.25, -1.0e-9, 0.1]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(SampleStream::read_csv(&buf[..]).unwrap(), s);
    }

    proptest! {
        #[test]
        fn int_round_trips(width in 1u32..=64, raw in proptest::collection::vec(any::<u64>(), 0..64)) {
            let values: Vec<i64> = raw
                .iter()
                .map(|&b| crate::arith::BitWord::from_bits(width, b).unwrap().value())
                .collect();
            let s = SampleStream::int(6.144e6, width, values).unwrap();
            let mut bin = Vec::new();
            s.write_binary(&mut bin).unwrap();
            prop_assert_eq!(bin.len(), STREAM_HEADER_LEN + s.len() * int_sample_bytes(width));
            prop_assert_eq!(&SampleStream::read_binary(&bin[..]).unwrap(), &s);
            let mut csv = Vec::new();
            s.write_csv(&mut csv).unwrap();
            prop_assert_eq!(&SampleStream::read_csv(&csv[..]).unwrap(), &s);
        }
    }
}
