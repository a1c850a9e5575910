//! Binary weight archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CTRW"                      magic
//! u16                         format version (1)
//! u32                         metadata length in bytes
//! metadata:
//!   u32                       num_classes
//!   u8 + bytes                conv activation name (registry key)
//!   u32 x 3                   input shape (height, width, channels)
//!   f64                       dropout rate
//!   (u8 + bytes) x num_classes class names
//!   u32                       parameterized node count
//!   per node:
//!     u8 + bytes              node id
//!     u8 + u32 x rank         weight dims
//!     u32                     bias length
//! payload: per node, weights then bias, as f32
//! u32                         CRC-32 of the payload
//! ```

use std::fs;
use std::io::{self, ErrorKind};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::model::{ModelConfig, ModelGraph, NodeParams};
use crate::ops::activation_by_name;

pub const MAGIC: &[u8; 4] = b"CTRW";
pub const FORMAT_VERSION: u16 = 1;
pub const CHECKSUM_BYTES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
struct NodeEntry {
    id: String,
    weight_dims: Vec<usize>,
    bias_len: usize,
}

/// Byte accounting of an encoded archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchiveLayout {
    /// Magic, version, length prefix and metadata.
    pub header_bytes: usize,
    pub payload_bytes: usize,
    pub checksum_bytes: usize,
}

impl ArchiveLayout {
    pub fn total(&self) -> usize {
        self.header_bytes + self.payload_bytes + self.checksum_bytes
    }
}

fn entries(model: &ModelGraph<f32>) -> Vec<NodeEntry> {
    model
        .nodes()
        .iter()
        .filter_map(|n| match model.params(&n.id)? {
            NodeParams::None => None,
            NodeParams::Conv(p) => Some(NodeEntry {
                id: n.id.clone(),
                weight_dims: vec![p.kernel_h, p.kernel_w, p.in_channels, p.out_channels],
                bias_len: p.out_channels,
            }),
            NodeParams::Dense(p) => Some(NodeEntry {
                id: n.id.clone(),
                weight_dims: vec![p.in_features, p.out_features],
                bias_len: p.out_features,
            }),
        })
        .collect()
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u8::try_from(s.len()).map_err(|_| Error::Format(format!("name `{s}` too long")))?;
    buf.push(len);
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

fn metadata(model: &ModelGraph<f32>) -> Result<Vec<u8>> {
    let mut m = Vec::new();
    put_u32(&mut m, model.num_classes())?;
    put_str(&mut m, model.conv_activation().name())?;
    for d in model.input_shape() {
        put_u32(&mut m, d)?;
    }
    m.extend_from_slice(&model.dropout_rate().to_le_bytes());
    for name in model.class_names() {
        put_str(&mut m, name)?;
    }
    let entries = entries(model);
    put_u32(&mut m, entries.len())?;
    for e in &entries {
        put_str(&mut m, &e.id)?;
        m.push(e.weight_dims.len() as u8);
        for &d in &e.weight_dims {
            put_u32(&mut m, d)?;
        }
        put_u32(&mut m, e.bias_len)?;
    }
    Ok(m)
}

/// Serializes the model into archive bytes.
pub fn encode(model: &ModelGraph<f32>) -> Result<(Vec<u8>, ArchiveLayout)> {
    let meta = metadata(model)?;
    let mut out = Vec::with_capacity(10 + meta.len() + model.param_count() * 4 + CHECKSUM_BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, meta.len())?;
    out.extend_from_slice(&meta);
    let header_bytes = out.len();
    for (_, w, b) in model.param_blocks() {
        for v in w.iter().chain(b) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let payload_bytes = out.len() - header_bytes;
    let crc = crc32fast::hash(&out[header_bytes..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok((
        out,
        ArchiveLayout {
            header_bytes,
            payload_bytes,
            checksum_bytes: CHECKSUM_BYTES,
        },
    ))
}

pub fn save_weights(model: &ModelGraph<f32>, path: impl AsRef<Path>) -> Result<ArchiveLayout> {
    let (bytes, layout) = encode(model)?;
    fs::write(path, bytes)?;
    Ok(layout)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Io(io::Error::new(
                ErrorKind::UnexpectedEof,
                "weight archive is truncated",
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u8()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("name is not valid UTF-8".into()))
    }
}

/// Parses archive bytes. If `requested_activation` disagrees with the
/// archive, the archive wins and a warning is logged.
pub fn decode(bytes: &[u8], requested_activation: Option<&str>) -> Result<ModelGraph<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a weight archive (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported archive version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let meta_len = r.u32()?;
    let meta = r.take(meta_len)?;
    let mut m = Reader { buf: meta, pos: 0 };
    let num_classes = m.u32()?;
    let act_name = m.string()?;
    let input_shape = [m.u32()?, m.u32()?, m.u32()?];
    let dropout_rate = m.f64()?;
    if num_classes > 1 << 16 {
        return Err(Error::Format(format!("implausible class count {num_classes}")));
    }
    let class_names = (0..num_classes).map(|_| m.string()).collect::<Result<Vec<_>>>()?;
    let count = m.u32()?;
    let mut stored = Vec::with_capacity(count);
    for _ in 0..count {
        let id = m.string()?;
        let rank = m.u8()? as usize;
        let weight_dims = (0..rank).map(|_| m.u32()).collect::<Result<Vec<_>>>()?;
        let bias_len = m.u32()?;
        stored.push(NodeEntry {
            id,
            weight_dims,
            bias_len,
        });
    }
    if m.pos != meta.len() {
        return Err(Error::Format("trailing bytes in archive metadata".into()));
    }

    let activation = activation_by_name(&act_name)
        .map_err(|_| Error::Format(format!("archive names unknown activation `{act_name}`")))?;
    if let Some(req) = requested_activation {
        if !req.eq_ignore_ascii_case(&act_name) {
            log::warn!(
                "archive was trained with `{act_name}` activations; ignoring requested `{req}`"
            );
        }
    }
    let cfg = ModelConfig {
        input_shape,
        num_classes,
        conv_activation: activation,
        dropout_rate,
        seed: 0,
    };
    let mut model = ModelGraph::<f32>::build(&cfg)
        .map_err(|e| Error::Format(format!("archive metadata describes no valid model: {e}")))?;
    model.set_class_names(class_names)?;
    if entries(&model) != stored {
        return Err(Error::Format(
            "archive node list does not match the network topology".into(),
        ));
    }

    let payload_start = r.pos;
    let total: usize = model.param_count();
    let payload = r.take(total * 4)?;
    let crc_stored = r.u32()? as u32;
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checksum".into()));
    }
    let crc = crc32fast::hash(&bytes[payload_start..payload_start + total * 4]);
    if crc != crc_stored {
        return Err(Error::Corrupt(format!(
            "payload checksum {crc:08x} does not match stored {crc_stored:08x}"
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for slice in model.param_slices_mut() {
        for v in slice.iter_mut() {
            *v = values.next().expect("payload sized from parameter count");
        }
    }
    Ok(model)
}

pub fn load_weights(path: impl AsRef<Path>, requested_activation: Option<&str>) -> Result<ModelGraph<f32>> {
    let bytes = fs::read(path)?;
    decode(&bytes, requested_activation)
}
