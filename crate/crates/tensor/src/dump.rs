//! Named tensor dump: a text header followed by raw little-endian blobs.
//!
//! ```text
//! TENSORDUMP 1
//! @epoch 3
//! stem.conv1.weight 40,3,3,3 f64 0
//! stem.conv1.bias 40 f64 8640
//! END
//! <blob bytes, concatenated in header order>
//! ```
//!
//! Metadata lines start with `@` and carry a key and a free-form value.
//! Tensor lines are `name shape dtype byte-offset`; shape is a
//! comma-separated list (`-` for rank 0), offsets are relative to the first
//! byte after the `END` line.

use std::io::{BufRead, Write};

use crate::error::{Result, TensorError};
use crate::shape::numel;
use crate::tensor::Tensor;

const MAGIC: &str = "TENSORDUMP 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(DType::F32),
            "f64" => Some(DType::F64),
            _ => None,
        }
    }
}

/// Parsed dump contents in header order.
#[derive(Debug, Default)]
pub struct Dump {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Dump {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Dump(msg.into())
}

pub fn write_dump<W: Write>(
    mut w: W,
    meta: &[(&str, &str)],
    tensors: &[(&str, &Tensor)],
    dtype: DType,
) -> Result<()> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    for (k, v) in meta {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(bad(format!("invalid metadata entry {k:?}")));
        }
        header.push_str(&format!("@{k} {v}\n"));
    }
    let mut offset = 0usize;
    for (name, t) in tensors {
        if name.is_empty() || name.contains(char::is_whitespace) || name.starts_with('@') {
            return Err(bad(format!("invalid tensor name {name:?}")));
        }
        let shape = if t.rank() == 0 {
            "-".to_string()
        } else {
            t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        header.push_str(&format!("{name} {shape} {} {offset}\n", dtype.name()));
        offset += t.numel() * dtype.width();
    }
    header.push_str("END\n");
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(offset);
    for (_, t) in tensors {
        match dtype {
            DType::F64 => t.data().iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
            DType::F32 => t
                .data()
                .iter()
                .for_each(|&v| buf.extend_from_slice(&(v as f32).to_le_bytes())),
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_dump<R: BufRead>(mut r: R) -> Result<Dump> {
    let mut line = String::new();
    let mut read_line = |line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(bad("unexpected end of header"));
        }
        if line.ends_with('\n') {
            line.pop();
        }
        Ok(())
    };
    read_line(&mut line)?;
    if line != MAGIC {
        return Err(bad(format!("bad magic line {line:?}")));
    }
    let mut dump = Dump::default();
    let mut specs: Vec<(String, Vec<usize>, DType, usize)> = Vec::new();
    loop {
        read_line(&mut line)?;
        if line == "END" {
            break;
        }
        if let Some(rest) = line.strip_prefix('@') {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            dump.meta.push((k.to_string(), v.to_string()));
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        let [name, shape, dtype, off] = fields[..] else {
            return Err(bad(format!("malformed tensor line {line:?}")));
        };
        let shape: Vec<usize> = if shape == "-" {
            Vec::new()
        } else {
            shape
                .split(',')
                .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad shape in {line:?}"))))
                .collect::<Result<_>>()?
        };
        let dtype = DType::parse(dtype).ok_or_else(|| bad(format!("unknown dtype in {line:?}")))?;
        let off: usize = off.parse().map_err(|_| bad(format!("bad offset in {line:?}")))?;
        if specs.iter().any(|s| s.0 == name) {
            return Err(bad(format!("duplicate tensor {name}")));
        }
        specs.push((name.to_string(), shape, dtype, off));
    }
    drop(read_line);
    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    for (name, shape, dtype, off) in specs {
        let n = numel(&shape);
        let end = off + n * dtype.width();
        if end > blob.len() {
            return Err(bad(format!(
                "truncated data for {name}: need bytes {off}..{end}, have {}",
                blob.len()
            )));
        }
        let bytes = &blob[off..end];
        let data: Vec<f64> = match dtype {
            DType::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            DType::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
        };
        let t = if shape.is_empty() {
            Tensor::scalar(data[0])
        } else {
            Tensor::new(data, &shape)?
        };
        dump.tensors.push((name, t));
    }
    Ok(dump)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        let b = Tensor::scalar(0.5);
        let mut out = Vec::new();
        write_dump(&mut out, &[("epoch", "3")], &[("a", &a), ("b", &b)], DType::F64).unwrap();
        let text = String::from_utf8_lossy(&out[..60]).to_string();
        assert!(text.starts_with("TENSORDUMP 1\n@epoch 3\na 2,3 f64 0\nb - f64 48\nEND\n"), "{text}");
        assert_eq!(out.len(), "TENSORDUMP 1\n@epoch 3\na 2,3 f64 0\nb - f64 48\nEND\n".len() + 56);
    }

    #[test]
    fn truncated_blob_is_an_error() {
        let a = Tensor::new(vec![1.0; 4], &[4]).unwrap();
        let mut out = Vec::new();
        write_dump(&mut out, &[], &[("a", &a)], DType::F64).unwrap();
        out.truncate(out.len() - 3);
        let err = read_dump(out.as_slice()).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn f32_roundtrip_rounds() {
        let a = Tensor::new(vec![0.1, 1.0 / 3.0], &[2]).unwrap();
        let mut out = Vec::new();
        write_dump(&mut out, &[], &[("a", &a)], DType::F32).unwrap();
        let d = read_dump(out.as_slice()).unwrap();
        let got = d.tensor("a").unwrap().data().to_vec();
        assert_eq!(got, vec![0.1f32 as f64, (1.0f32 / 3.0) as f64]);
    }
}
