//! Binary parameter container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic "SERC" | version | meta_len | meta (UTF-8) | n_records |
//!   n_records × ( name_len | name (UTF-8) | ndim | dims[ndim] | f32 payload )
//! ```
//!
//! `meta` is an opaque string (the CLI stores model and normalization
//! settings as JSON there).

use std::io::{Read, Write};

use super::{Module, Scalar, Tensor};
use crate::{Result, SerError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SERC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: String,
    pub records: Vec<Record>,
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| SerError::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_string<R: Read>(r: &mut R) -> Result<String> {
    let len = get_u32(r)?;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| SerError::Format(e.to_string()))
}

impl Checkpoint {
    /// Snapshot of every parameter and buffer, in visit order.
    pub fn from_module<T: Scalar, M: Module<T> + ?Sized>(module: &mut M, meta: String) -> Self {
        let mut records = Vec::new();
        module.visit("", &mut |name, t, _| {
            records.push(Record {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
            });
        });
        Checkpoint { meta, records }
    }

    /// Copies every record into the matching parameter. Names and shapes
    /// must match one-to-one.
    pub fn load_into<T: Scalar, M: Module<T> + ?Sized>(&self, module: &mut M) -> Result<()> {
        let mut seen = 0;
        let mut err: Option<SerError> = None;
        module.visit("", &mut |name, t: &mut Tensor<T>, _| {
            if err.is_some() {
                return;
            }
            match self.records.iter().find(|r| r.name == name) {
                Some(r) if r.shape == t.shape() => {
                    let vals: Vec<T> = r.data.iter().map(|&v| T::of(v as f64)).collect();
                    if let Err(e) = t.set_data(&vals) {
                        err = Some(e);
                    }
                    seen += 1;
                }
                Some(r) => {
                    err = Some(SerError::Shape(format!(
                        "checkpoint {name}: shape {:?} vs model {:?}",
                        r.shape,
                        t.shape()
                    )))
                }
                None => err = Some(SerError::Format(format!("checkpoint is missing {name}"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen != self.records.len() {
            return Err(SerError::Format(format!(
                "checkpoint has {} records, model has {seen}",
                self.records.len()
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        put_u32(&mut w, CHECKPOINT_VERSION as usize)?;
        put_u32(&mut w, self.meta.len())?;
        w.write_all(self.meta.as_bytes())?;
        put_u32(&mut w, self.records.len())?;
        for r in &self.records {
            put_u32(&mut w, r.name.len())?;
            w.write_all(r.name.as_bytes())?;
            put_u32(&mut w, r.shape.len())?;
            for &d in &r.shape {
                put_u32(&mut w, d)?;
            }
            if r.data.len() != r.shape.iter().product::<usize>() {
                return Err(SerError::Shape(format!("record {} payload/shape mismatch", r.name)));
            }
            for v in &r.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(SerError::Format("not a checkpoint (bad magic)".into()));
        }
        let version = get_u32(&mut r)?;
        if version != CHECKPOINT_VERSION as usize {
            return Err(SerError::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta = get_string(&mut r)?;
        let n = get_u32(&mut r)?;
        let mut records = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let name = get_string(&mut r)?;
            let ndim = get_u32(&mut r)?;
            let shape = (0..ndim).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let mut bytes = vec![0u8; numel * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            records.push(Record { name, shape, data });
        }
        Ok(Checkpoint { meta, records })
    }
}
