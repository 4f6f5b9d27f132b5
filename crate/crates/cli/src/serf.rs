//! SERF feature files: `"SERF"`, version u32, kind u8 (0 spectrogram,
//! 1 MFCC), rows u32, cols u32, then rows×cols little-endian f32, row-major.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ser_core::dsp::FeatureKind;
use ser_core::{Result, SerError};

pub const MAGIC: &[u8; 4] = b"SERF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub kind: FeatureKind,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

fn kind_code(kind: FeatureKind) -> u8 {
    match kind {
        FeatureKind::Spectrogram => 0,
        FeatureKind::Mfcc => 1,
    }
}

impl FeatureFile {
    pub fn new(kind: FeatureKind, rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows != kind.rows() {
            return Err(SerError::Format(format!("{} features must have {} rows, got {rows}", kind.name(), kind.rows())));
        }
        if values.len() != rows * cols {
            return Err(SerError::Format(format!("{} values for a {rows}x{cols} map", values.len())));
        }
        Ok(FeatureFile { kind, rows, cols, values })
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(17 + 4 * self.values.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(kind_code(self.kind));
        buf.extend_from_slice(&(self.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 17 || &bytes[..4] != MAGIC {
            return Err(SerError::Format("not a SERF feature file".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(SerError::Format(format!("unsupported SERF version {version}")));
        }
        let kind = match bytes[8] {
            0 => FeatureKind::Spectrogram,
            1 => FeatureKind::Mfcc,
            k => return Err(SerError::Format(format!("unknown feature kind code {k}"))),
        };
        let (rows, cols) = (u32_at(9) as usize, u32_at(13) as usize);
        let payload = &bytes[17..];
        if payload.len() != rows * cols * 4 {
            return Err(SerError::Format(format!(
                "payload is {} bytes, header says {rows}x{cols}",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureFile::new(kind, rows, cols, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        FeatureFile::read_from(fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let values: Vec<f32> = (0..40 * 7).map(|i| (i as f32 * 0.37).sin() * 1e3 - f32::EPSILON).collect();
        let f = FeatureFile::new(FeatureKind::Mfcc, 40, 7, values).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 17 + 40 * 7 * 4);
        let back = FeatureFile::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.kind, f.kind);
        assert!(back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(FeatureFile::read_from(&b"SERX\x01\x00\x00\x00"[..]), Err(SerError::Format(_))));
        assert!(FeatureFile::new(FeatureKind::Spectrogram, 40, 2, vec![0.0; 80]).is_err());
        let f = FeatureFile::new(FeatureKind::Spectrogram, 128, 1, vec![0.0; 128]).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(FeatureFile::read_from(buf.as_slice()).is_err());
        buf.push(0);
        buf[8] = 7;
        assert!(FeatureFile::read_from(buf.as_slice()).is_err());
    }
}
