//! Minimal SEG-Y: big-endian, 3200-byte text header, 400-byte binary header,
//! fixed-length traces with 240-byte headers. Sample formats 1 (IBM float)
//! and 5 (IEEE float) only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gather::Gather;

const TEXT_HEADER_LEN: usize = 3200;
const BINARY_HEADER_LEN: usize = 400;
const TRACE_HEADER_LEN: usize = 240;
const DATA_START: usize = TEXT_HEADER_LEN + BINARY_HEADER_LEN;

// Byte offsets (0-based) within the file / trace header.
const BIN_TRACES_PER_ENSEMBLE: usize = 3212;
const BIN_SAMPLE_INTERVAL: usize = 3216;
const BIN_SAMPLES_PER_TRACE: usize = 3220;
const BIN_FORMAT_CODE: usize = 3224;
const BIN_REVISION: usize = 3500;
const BIN_FIXED_LENGTH: usize = 3502;
const TR_SEQ_LINE: usize = 0;
const TR_SEQ_FILE: usize = 4;
const TR_NUM_SAMPLES: usize = 114;
const TR_SAMPLE_INTERVAL: usize = 116;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Ibm32 = 1,
    Ieee32 = 5,
}

impl SampleFormat {
    fn from_code(code: u16, offset: u64) -> Result<Self> {
        match code {
            1 => Ok(SampleFormat::Ibm32),
            5 => Ok(SampleFormat::Ieee32),
            other => Err(Error::Parse {
                offset,
                detail: format!("unsupported SEG-Y data format code {other}"),
            }),
        }
    }
}

/// Decode a big-endian IBM System/360 single-precision float.
pub fn ibm_to_f32(bits: u32) -> f32 {
    let sign = if bits >> 31 == 1 { -1.0 } else { 1.0 };
    let exponent = ((bits >> 24) & 0x7f) as i32 - 64;
    let fraction = (bits & 0x00ff_ffff) as f64 / (1u32 << 24) as f64;
    (sign * fraction * 16f64.powi(exponent)) as f32
}

/// Encode as an IBM float, rounding the fraction to nearest. Values beyond
/// the IBM range saturate; values too small flush to zero.
pub fn f32_to_ibm(v: f32) -> u32 {
    if v == 0.0 || !v.is_finite() {
        return 0;
    }
    let sign = if v.is_sign_negative() { 1u32 << 31 } else { 0 };
    let a = v.abs() as f64;
    // a = f · 16^e with f in [1/16, 1)
    let mut e = (a.log2() / 4.0).floor() as i32 + 1;
    let mut frac = (a / 16f64.powi(e) * (1u32 << 24) as f64).round() as u64;
    if frac >= 1 << 24 {
        frac >>= 4;
        e += 1;
    }
    while frac < 1 << 20 && frac != 0 {
        frac <<= 4;
        e -= 1;
    }
    let biased = e + 64;
    if biased > 127 {
        return sign | 0x7fff_ffff;
    }
    if biased < 0 {
        return 0;
    }
    sign | (biased as u32) << 24 | frac as u32
}

fn be_u16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be_i32(b: &[u8], at: usize) -> i32 {
    i32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn parse_segy(bytes: &[u8]) -> Result<Gather> {
    if bytes.len() < DATA_START {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            detail: format!(
                "file is {} bytes, shorter than the {DATA_START}-byte SEG-Y headers",
                bytes.len()
            ),
        });
    }
    let interval_us = be_u16(bytes, BIN_SAMPLE_INTERVAL);
    let mut n_samples = be_u16(bytes, BIN_SAMPLES_PER_TRACE) as usize;
    let format = SampleFormat::from_code(be_u16(bytes, BIN_FORMAT_CODE), BIN_FORMAT_CODE as u64)?;
    if n_samples == 0 && bytes.len() >= DATA_START + TRACE_HEADER_LEN {
        n_samples = be_u16(bytes, DATA_START + TR_NUM_SAMPLES) as usize;
    }
    if n_samples == 0 {
        return Err(Error::Parse {
            offset: BIN_SAMPLES_PER_TRACE as u64,
            detail: "samples per trace is zero".into(),
        });
    }
    let interval_us = if interval_us == 0 && bytes.len() >= DATA_START + TRACE_HEADER_LEN {
        be_u16(bytes, DATA_START + TR_SAMPLE_INTERVAL)
    } else {
        interval_us
    };
    if interval_us == 0 {
        return Err(Error::Parse {
            offset: BIN_SAMPLE_INTERVAL as u64,
            detail: "sample interval is zero".into(),
        });
    }

    let trace_len = TRACE_HEADER_LEN + 4 * n_samples;
    let body = bytes.len() - DATA_START;
    let n_traces = body / trace_len;
    if body % trace_len != 0 {
        let start = DATA_START + n_traces * trace_len;
        return Err(Error::Parse {
            offset: start as u64,
            detail: format!(
                "truncated trace {}: {} of {trace_len} bytes present",
                n_traces + 1,
                body % trace_len
            ),
        });
    }
    if n_traces == 0 {
        return Err(Error::Parse {
            offset: DATA_START as u64,
            detail: "no traces".into(),
        });
    }

    let mut data = vec![0.0f32; n_samples * n_traces];
    let mut numbers = Vec::with_capacity(n_traces);
    for j in 0..n_traces {
        let start = DATA_START + j * trace_len;
        numbers.push(be_i32(bytes, start + TR_SEQ_LINE));
        let samples = &bytes[start + TRACE_HEADER_LEN..start + trace_len];
        for (i, chunk) in samples.chunks_exact(4).enumerate() {
            let raw = u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            let v = match format {
                SampleFormat::Ibm32 => ibm_to_f32(raw),
                SampleFormat::Ieee32 => f32::from_bits(raw),
            };
            if !v.is_finite() {
                return Err(Error::Parse {
                    offset: (start + TRACE_HEADER_LEN + 4 * i) as u64,
                    detail: format!("non-finite sample in trace {}", j + 1),
                });
            }
            data[i * n_traces + j] = v;
        }
    }
    let mut g = Gather::new(n_samples, n_traces, interval_us as f64 * 1e-6, data)?;
    g.meta.trace_numbers = numbers;
    Ok(g)
}

pub fn read_segy(path: &Path) -> Result<Gather> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut g = parse_segy(&bytes)?;
    g.meta.line_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(g)
}

pub fn encode_segy(g: &Gather, format: SampleFormat) -> Result<Vec<u8>> {
    let (ns, nt) = g.shape();
    let interval = (g.dt * 1e6).round();
    if !(1.0..=u16::MAX as f64).contains(&interval) {
        return Err(Error::usage(format!(
            "sample interval {} s does not fit the SEG-Y header",
            g.dt
        )));
    }
    if ns > u16::MAX as usize {
        return Err(Error::usage(format!("{ns} samples per trace exceeds SEG-Y limit")));
    }
    let mut out = Vec::with_capacity(DATA_START + nt * (TRACE_HEADER_LEN + 4 * ns));

    let mut text = String::new();
    let lines = [
        "C 1 ZSCL SEG-Y".to_string(),
        format!("C 2 TRACES {nt} SAMPLES {ns} INTERVAL {interval} US"),
        "C 3 FORMAT CODE ".to_string() + &(format as u16).to_string(),
    ];
    for i in 0..40 {
        let line = lines.get(i).cloned().unwrap_or_else(|| format!("C{:>2}", i + 1));
        text.push_str(&format!("{line:<80.80}"));
    }
    out.extend_from_slice(text.as_bytes());

    let mut bin = [0u8; BINARY_HEADER_LEN];
    let put16 = |b: &mut [u8], at: usize, v: u16| {
        b[at - TEXT_HEADER_LEN..at - TEXT_HEADER_LEN + 2].copy_from_slice(&v.to_be_bytes())
    };
    put16(&mut bin, BIN_TRACES_PER_ENSEMBLE, nt.min(u16::MAX as usize) as u16);
    put16(&mut bin, BIN_SAMPLE_INTERVAL, interval as u16);
    put16(&mut bin, BIN_SAMPLES_PER_TRACE, ns as u16);
    put16(&mut bin, BIN_FORMAT_CODE, format as u16);
    put16(&mut bin, BIN_REVISION, 0x0100);
    put16(&mut bin, BIN_FIXED_LENGTH, 1);
    out.extend_from_slice(&bin);

    for j in 0..nt {
        let mut header = [0u8; TRACE_HEADER_LEN];
        let number = g
            .meta
            .trace_numbers
            .get(j)
            .copied()
            .unwrap_or(j as i32 + 1);
        header[TR_SEQ_LINE..TR_SEQ_LINE + 4].copy_from_slice(&number.to_be_bytes());
        header[TR_SEQ_FILE..TR_SEQ_FILE + 4].copy_from_slice(&(j as i32 + 1).to_be_bytes());
        header[TR_NUM_SAMPLES..TR_NUM_SAMPLES + 2].copy_from_slice(&(ns as u16).to_be_bytes());
        header[TR_SAMPLE_INTERVAL..TR_SAMPLE_INTERVAL + 2]
            .copy_from_slice(&(interval as u16).to_be_bytes());
        out.extend_from_slice(&header);
        for i in 0..ns {
            let v = g.get(i, j);
            let bits = match format {
                SampleFormat::Ibm32 => f32_to_ibm(v),
                SampleFormat::Ieee32 => v.to_bits(),
            };
            out.extend_from_slice(&bits.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_segy(g: &Gather, path: &Path, format: SampleFormat) -> Result<()> {
    let bytes = encode_segy(g, format)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Gather {
        let data = (0..6 * 5).map(|i| (i as f32 * 0.7).sin() * 100.0).collect();
        Gather::new(6, 5, 0.004, data).unwrap()
    }

    #[test]
    fn known_ibm_values() {
        // -118.625 is the textbook example: 0xC276A000
        assert_eq!(f32_to_ibm(-118.625), 0xC276_A000);
        assert_eq!(ibm_to_f32(0xC276_A000), -118.625);
        assert_eq!(f32_to_ibm(1.0), 0x4110_0000);
        assert_eq!(ibm_to_f32(0x4110_0000), 1.0);
        assert_eq!(f32_to_ibm(0.0), 0);
    }

    proptest! {
        #[test]
        fn ibm_round_trip_precision(v in -1.0e30f32..1.0e30f32) {
            let back = ibm_to_f32(f32_to_ibm(v));
            // at worst three fraction bits are lost to hex normalization
            prop_assert!((back - v).abs() <= v.abs() * 2f32.powi(-20));
        }
    }

    #[test]
    fn ieee_round_trip_is_exact() {
        let g = sample();
        let bytes = encode_segy(&g, SampleFormat::Ieee32).unwrap();
        let back = parse_segy(&bytes).unwrap();
        assert_eq!(back.data(), g.data());
        assert_eq!(back.dt, 0.004);
        assert_eq!(back.meta.trace_numbers, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn ibm_round_trip_is_close() {
        let g = sample();
        let bytes = encode_segy(&g, SampleFormat::Ibm32).unwrap();
        let back = parse_segy(&bytes).unwrap();
        for (a, b) in back.data().iter().zip(g.data()) {
            assert!((a - b).abs() <= b.abs() * 1e-6);
        }
    }

    #[test]
    fn header_fields() {
        let bytes = encode_segy(&sample(), SampleFormat::Ieee32).unwrap();
        assert_eq!(be_u16(&bytes, BIN_SAMPLE_INTERVAL), 4000);
        assert_eq!(be_u16(&bytes, BIN_SAMPLES_PER_TRACE), 6);
        assert_eq!(bytes.len(), 3600 + 5 * (240 + 24));
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(
            parse_segy(&[0u8; 3000]),
            Err(Error::Parse { offset: 3000, .. })
        ));
        let mut bytes = encode_segy(&sample(), SampleFormat::Ieee32).unwrap();
        bytes[BIN_FORMAT_CODE + 1] = 3;
        assert!(matches!(
            parse_segy(&bytes),
            Err(Error::Parse { offset, .. }) if offset == BIN_FORMAT_CODE as u64
        ));
        let mut bytes = encode_segy(&sample(), SampleFormat::Ieee32).unwrap();
        bytes.truncate(bytes.len() - 10);
        let trace_len = 240 + 24;
        assert!(matches!(
            parse_segy(&bytes),
            Err(Error::Parse { offset, .. }) if offset == (3600 + 4 * trace_len) as u64
        ));
    }
}
