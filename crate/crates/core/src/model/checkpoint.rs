//! Binary checkpoint container.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! magic  "RBFPNET\0"
//! u32    format version
//! u64    byte length, then UTF-8 `key = value` model spec
//! u64    byte length, then UTF-8 `key = value` metadata
//! u32    tensor count
//! per tensor:
//!   u32 name length, name bytes
//!   u8  trainable flag (buffers are 0)
//!   u32 ndim, ndim × u64 dims
//!   product(dims) × f64
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::model::network::Network;
use crate::model::spec::ModelSpec;
use crate::rbf::InitScheme;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RBFPNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Record {
    trainable: bool,
    value: Tensor,
}

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> Result<()> {
    w.write_all(&(b.len() as u64).to_le_bytes())?;
    w.write_all(b)?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(net: &Network, meta: &KvMap, mut w: W) -> Result<()> {
    let mut spec = KvMap::default();
    net.spec.write_kv(&mut spec);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_bytes(&mut w, spec.to_text().as_bytes())?;
    write_bytes(&mut w, meta.to_text().as_bytes())?;

    let mut records: Vec<(String, bool, Tensor)> = net
        .params()
        .into_iter()
        .map(|p| (p.name.clone(), p.trainable, p.value.clone()))
        .collect();
    records.extend(net.buffers().into_iter().map(|(n, t)| (n, false, t.clone())));
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for (name, trainable, t) in &records {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[*trainable as u8])?;
        w.write_all(&(t.ndim() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.exact::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact()?))
    }

    fn bytes(&mut self, len: u64, limit: u64) -> Result<Vec<u8>> {
        if len > limit {
            return Err(Error::Format(format!("implausible field length {len}")));
        }
        let mut b = vec![0u8; len as usize];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }

    fn text(&mut self, len: u64) -> Result<String> {
        String::from_utf8(self.bytes(len, 1 << 24)?)
            .map_err(|_| Error::Format("checkpoint text is not UTF-8".into()))
    }
}

/// Returns the network and the metadata stored alongside it.
pub fn read_checkpoint<R: Read>(r: R) -> Result<(Network, KvMap)> {
    let mut r = Reader { inner: r };
    if &r.exact::<8>()? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u64()?;
    let spec_kv = KvMap::parse(&r.text(len)?)?;
    let len = r.u64()?;
    let meta = KvMap::parse(&r.text(len)?)?;
    let spec = ModelSpec::from_kv(&spec_kv, 0, 0, 0)?;

    let count = r.u32()?;
    let mut records = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as u64;
        let name = r.text(len)?;
        let trainable = r.u8()? != 0;
        let ndim = r.u32()?;
        if ndim > 8 {
            return Err(Error::Format(format!("tensor `{name}` has {ndim} dimensions")));
        }
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        if numel > 1 << 28 {
            return Err(Error::Format(format!("tensor `{name}` is implausibly large")));
        }
        let data = (0..numel).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let value = Tensor::new(shape, data)?;
        if records.insert(name.clone(), Record { trainable, value }).is_some() {
            return Err(Error::Format(format!("duplicate tensor `{name}`")));
        }
    }

    let mut net = Network::build(&spec, 0, InitScheme::Uniform, None)?;
    let mut take = |name: &str, shape: &[usize]| -> Result<Record> {
        let rec = records
            .remove(name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor `{name}`")))?;
        rec.value.expect_shape("read_checkpoint", shape)?;
        Ok(rec)
    };
    for p in net.params_mut() {
        let rec = take(&p.name, p.value.shape())?;
        p.value = rec.value;
        p.trainable = rec.trainable;
        p.zero_grad();
    }
    for (name, t) in net.buffers_mut() {
        *t = take(&name, t.shape())?.value;
    }
    if let Some(extra) = records.keys().next() {
        return Err(Error::Format(format!("unexpected tensor `{extra}`")));
    }
    Ok((net, meta))
}

pub fn save_checkpoint(net: &Network, meta: &KvMap, path: &Path) -> Result<()> {
    write_checkpoint(net, meta, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, KvMap)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
