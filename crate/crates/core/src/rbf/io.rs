//! Kernel CSV: header `channel,c0,...,c{d-1},sigma`, one row per kernel.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rbf::MultiChannelRbf;
use crate::tensor::Tensor;

/// Centers and sizes of one channel as read back from a dump.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub centers: Tensor,
    pub sigmas: Tensor,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_kernels<W: Write>(mc: &MultiChannelRbf, mut w: W) -> Result<()> {
    let d = match mc.channels.first() {
        Some(c) => c.dim(),
        None => return Err(Error::Format("no kernel channels to dump".into())),
    };
    if mc.channels.iter().any(|c| c.dim() != d) {
        return Err(Error::Format(
            "channels of different dimensionality cannot share one kernel file".into(),
        ));
    }
    let mut header = String::from("channel");
    for i in 0..d {
        header.push_str(&format!(",c{i}"));
    }
    header.push_str(",sigma\n");
    w.write_all(header.as_bytes())?;
    for (ci, ch) in mc.channels.iter().enumerate() {
        let c = ch.centers.value.data();
        for (k, s) in ch.sigmas.value.data().iter().enumerate() {
            let mut line = ci.to_string();
            for v in &c[k * d..(k + 1) * d] {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            line.push(',');
            line.push_str(&fmt_f64(*s));
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_kernels<R: BufRead>(r: R) -> Result<Vec<KernelTable>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::parse(1, "missing header"))??;
    let fields: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    let d = fields.len().checked_sub(2).filter(|&d| d > 0).ok_or_else(|| {
        Error::parse(1, "header must be `channel,c0,...,sigma`")
    })?;
    let expected: Vec<String> = std::iter::once("channel".to_string())
        .chain((0..d).map(|i| format!("c{i}")))
        .chain(std::iter::once("sigma".to_string()))
        .collect();
    if fields != expected {
        return Err(Error::parse(1, format!("unexpected header `{header}`")));
    }

    let mut tables: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != d + 2 {
            return Err(Error::parse(
                lineno,
                format!("expected {} fields, got {}", d + 2, cols.len()),
            ));
        }
        let ch: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad channel index `{}`", cols[0])))?;
        if ch > tables.len() {
            return Err(Error::parse(lineno, format!("channel {ch} out of order")));
        }
        if ch == tables.len() {
            tables.push((Vec::new(), Vec::new()));
        }
        if ch + 1 != tables.len() {
            return Err(Error::parse(lineno, format!("channel {ch} out of order")));
        }
        let mut nums = Vec::with_capacity(d + 1);
        for c in &cols[1..] {
            nums.push(
                c.parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("bad number `{c}`")))?,
            );
        }
        let (centers, sigmas) = &mut tables[ch];
        centers.extend_from_slice(&nums[..d]);
        sigmas.push(nums[d]);
    }
    tables
        .into_iter()
        .map(|(c, s)| {
            let m = s.len();
            Ok(KernelTable {
                centers: Tensor::new(vec![m, d], c)?,
                sigmas: Tensor::new(vec![m], s)?,
            })
        })
        .collect()
}

pub fn dump_kernels(mc: &MultiChannelRbf, path: &Path) -> Result<()> {
    write_kernels(mc, BufWriter::new(File::create(path)?))
}

pub fn load_kernels(path: &Path) -> Result<Vec<KernelTable>> {
    read_kernels(BufReader::new(File::open(path)?))
}

impl MultiChannelRbf {
    /// Replaces centers and sizes channel by channel; shapes must match.
    pub fn set_kernels(&mut self, tables: &[KernelTable]) -> Result<()> {
        if tables.len() != self.channels.len() {
            return Err(Error::Format(format!(
                "kernel file has {} channels, model has {}",
                tables.len(),
                self.channels.len()
            )));
        }
        for (ch, t) in self.channels.iter_mut().zip(tables) {
            t.centers.expect_shape("set_kernels", ch.centers.value.shape())?;
            t.sigmas.expect_shape("set_kernels", ch.sigmas.value.shape())?;
            ch.centers.value = t.centers.clone();
            ch.sigmas.value = t.sigmas.clone();
        }
        Ok(())
    }
}
