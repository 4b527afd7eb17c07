//! Binary archive of student, teacher and optimizer state.
//!
//! Layout: the 8-byte magic `HCMTCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then every
//! tensor's values as little-endian floats in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{NetworkSpec, ParamTensor, ParameterVector};
use crate::error::{Error, Result};
use crate::tensor::Real;

const MAGIC: &[u8; 8] = b"HCMTCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub spec: NetworkSpec,
    /// Completed training iterations.
    pub iteration: usize,
    pub student: ParameterVector<T>,
    pub teacher: Option<ParameterVector<T>>,
    pub teacher_step: usize,
    /// SGD momentum buffers.
    pub momentum: Option<ParameterVector<T>>,
    /// Resolved training configuration text.
    pub config: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Section {
    name: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    spec: NetworkSpec,
    iteration: usize,
    teacher_step: usize,
    config: Option<String>,
    sections: Vec<Section>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<T: Real> Checkpoint<T> {
    fn sections(&self) -> Vec<(&'static str, &ParameterVector<T>)> {
        let mut s = vec![("student", &self.student)];
        if let Some(t) = &self.teacher {
            s.push(("teacher", t));
        }
        if let Some(m) = &self.momentum {
            s.push(("momentum", m));
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sections = self.sections();
        let header = Header {
            dtype: T::DTYPE.to_string(),
            spec: self.spec.clone(),
            iteration: self.iteration,
            teacher_step: self.teacher_step,
            config: self.config.clone(),
            sections: sections
                .iter()
                .map(|(name, p)| Section {
                    name: name.to_string(),
                    tensors: p
                        .tensors()
                        .iter()
                        .map(|t| TensorEntry {
                            name: t.name.clone(),
                            shape: t.shape.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + sections.len() * self.student.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in sections {
            for t in p.tensors() {
                for &v in &t.data {
                    T::write_le(v, &mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes
            .get(20..20usize.saturating_add(hlen))
            .ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| corrupt(format!("bad header: {e}")))?;
        if header.dtype != T::DTYPE {
            return Err(corrupt(format!(
                "checkpoint holds {} parameters, expected {}",
                header.dtype,
                T::DTYPE
            )));
        }
        let size = std::mem::size_of::<T>();
        let mut pos = 20 + hlen;
        let mut student = None;
        let mut teacher = None;
        let mut momentum = None;
        for section in header.sections {
            let mut tensors = Vec::with_capacity(section.tensors.len());
            for e in section.tensors {
                let n = e.shape.iter().product::<usize>();
                let raw = bytes
                    .get(pos..pos + n * size)
                    .ok_or_else(|| corrupt(format!("truncated data in {}.{}", section.name, e.name)))?;
                pos += n * size;
                tensors.push(ParamTensor {
                    name: e.name,
                    shape: e.shape,
                    data: raw.chunks_exact(size).map(T::read_le).collect(),
                });
            }
            let p = ParameterVector::from_tensors(tensors)?;
            match section.name.as_str() {
                "student" => student = Some(p),
                "teacher" => teacher = Some(p),
                "momentum" => momentum = Some(p),
                other => return Err(corrupt(format!("unknown section {other:?}"))),
            }
        }
        if pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - pos)));
        }
        let student = student.ok_or_else(|| corrupt("no student section"))?;
        for other in [&teacher, &momentum].into_iter().flatten() {
            if !other.same_structure(&student) {
                return Err(corrupt("teacher or momentum layout differs from the student"));
            }
        }
        Ok(Checkpoint {
            spec: header.spec,
            iteration: header.iteration,
            student,
            teacher,
            teacher_step: header.teacher_step,
            momentum,
            config: header.config,
        })
    }

    /// Writes atomically: a temporary sibling is renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
