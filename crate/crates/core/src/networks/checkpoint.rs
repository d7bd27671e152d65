//! Versioned weight archive: named, shape-tagged scalar arrays plus a JSON
//! metadata block. Loading validates shapes and fails loudly on mismatch.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::{Dtype, Scalar};
use crate::tensor::Tensor;

use super::generator::Generator;
use super::{build_generator, GeneratorSpec};

const MAGIC: &[u8; 8] = b"TCVCARC\x01";

/// In-memory archive of named tensors.
#[derive(Debug, Clone)]
pub struct Archive<T> {
    pub meta: serde_json::Value,
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Archive<T> {
    pub fn new(meta: serde_json::Value) -> Self {
        Archive {
            meta,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.entries.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fetch an entry and check its shape against the destination.
    pub fn take_into(&self, name: &str, dst: &mut Tensor<T>) -> Result<()> {
        let src = self.get(name).ok_or_else(|| {
            Error::CheckpointFormat(format!("missing archive entry {name:?}"))
        })?;
        if src.shape() != dst.shape() {
            return Err(Error::CheckpointShape {
                name: name.to_string(),
                expected: dst.shape().to_vec(),
                got: src.shape().to_vec(),
            });
        }
        dst.data_mut().copy_from_slice(src.data());
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(T::DTYPE.tag());
        let meta = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::CheckpointFormat(e.to_string()))?;
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(&meta);
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            let name_bytes = name.as_bytes();
            buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
            buf.extend_from_slice(name_bytes);
            buf.push(tensor.shape().len() as u8);
            for &d in tensor.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                v.write_le(&mut buf);
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let need = |pos: usize, n: usize| -> Result<()> {
            if pos + n > bytes.len() {
                Err(Error::CheckpointFormat("truncated archive".into()))
            } else {
                Ok(())
            }
        };
        need(pos, 8)?;
        if &bytes[..8] != MAGIC {
            return Err(Error::CheckpointFormat(
                "bad magic: not a weight archive (or unsupported version)".into(),
            ));
        }
        pos += 8;
        need(pos, 1)?;
        let dtype = Dtype::from_tag(bytes[pos])
            .ok_or_else(|| Error::CheckpointFormat(format!("unknown dtype tag {}", bytes[pos])))?;
        if dtype != T::DTYPE {
            return Err(Error::CheckpointFormat(format!(
                "archive stores {dtype:?} but {:?} was requested",
                T::DTYPE
            )));
        }
        pos += 1;
        need(pos, 4)?;
        let meta_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        need(pos, meta_len)?;
        let meta: serde_json::Value = serde_json::from_slice(&bytes[pos..pos + meta_len])
            .map_err(|e| Error::CheckpointFormat(format!("bad metadata: {e}")))?;
        pos += meta_len;
        need(pos, 4)?;
        let n_entries = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        let mut entries = Vec::with_capacity(n_entries);
        let width = T::DTYPE.byte_width();
        for _ in 0..n_entries {
            need(pos, 2)?;
            let name_len = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
            pos += 2;
            need(pos, name_len)?;
            let name = String::from_utf8(bytes[pos..pos + name_len].to_vec())
                .map_err(|e| Error::CheckpointFormat(format!("bad entry name: {e}")))?;
            pos += name_len;
            need(pos, 1)?;
            let ndim = bytes[pos] as usize;
            pos += 1;
            need(pos, 4 * ndim)?;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize);
                pos += 4;
            }
            let count: usize = shape.iter().product();
            need(pos, count * width)?;
            let mut data = Vec::with_capacity(count);
            for i in 0..count {
                data.push(T::read_le(&bytes[pos + i * width..]));
            }
            pos += count * width;
            entries.push((name, Tensor::from_vec(&shape, data)?));
        }
        Ok(Archive { meta, entries })
    }
}

/// Write generator weights plus its spec into an archive file.
pub fn save_generator<T: Scalar>(
    gen: &mut Generator<T>,
    path: &Path,
    mut extra_meta: serde_json::Value,
) -> Result<()> {
    let spec = serde_json::to_value(gen.spec()).expect("spec serializes");
    if let Some(map) = extra_meta.as_object_mut() {
        map.insert("generator_spec".into(), spec);
    } else {
        extra_meta = serde_json::json!({ "generator_spec": spec });
    }
    let mut archive = Archive::new(extra_meta);
    gen.visit_params(&mut |name, value, _| archive.push(name, value.clone()));
    archive.write(path)
}

/// Rebuild a generator from an archive written by [`save_generator`] (or a
/// training checkpoint, which uses the same entry names).
pub fn load_generator<T: Scalar>(path: &Path) -> Result<Generator<T>> {
    let archive = Archive::<T>::read(path)?;
    let spec_value = archive
        .meta
        .get("generator_spec")
        .ok_or_else(|| Error::CheckpointFormat("archive has no generator_spec".into()))?;
    let spec: GeneratorSpec = serde_json::from_value(spec_value.clone())
        .map_err(|e| Error::CheckpointFormat(format!("bad generator_spec: {e}")))?;
    let mut gen = build_generator::<T>(&spec, 0)?;
    let mut failure: Option<Error> = None;
    gen.visit_params(&mut |name, value, _| {
        if failure.is_none() {
            if let Err(e) = archive.take_into(&name, value) {
                failure = Some(e);
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(gen),
    }
}
