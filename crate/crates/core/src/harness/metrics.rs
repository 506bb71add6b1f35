use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,lr,train_loss,train_acc,test_acc,test_acc_class,seconds";

/// One epoch. Accuracies are fractions in `[0, 1]`; `seconds` is wall time
/// of the epoch including evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub test_acc_class: f64,
    pub seconds: f64,
}

impl MetricsRow {
    /// Every field but wall time, which no seed can pin.
    pub fn same_outcome(&self, other: &Self) -> bool {
        (self.epoch, self.lr, self.train_loss, self.train_acc, self.test_acc, self.test_acc_class)
            == (other.epoch, other.lr, other.train_loss, other.train_acc, other.test_acc, other.test_acc_class)
    }

    /// Shortest round-trip float formatting, so parsing is lossless.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.test_acc, self.test_acc_class, self.seconds
        )
    }

    pub fn from_csv(line: &str, line_no: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(Error::parse(line_no, format!("expected 7 metrics fields, got {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse().map_err(|_| Error::parse(line_no, format!("bad number `{}`", f[i])))
        };
        Ok(Self {
            epoch: f[0]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad epoch `{}`", f[0])))?,
            lr: num(1)?,
            train_loss: num(2)?,
            train_acc: num(3)?,
            test_acc: num(4)?,
            test_acc_class: num(5)?,
            seconds: num(6)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == METRICS_HEADER => {}
            _ => return Err(Error::parse(1, format!("metrics header must be `{METRICS_HEADER}`"))),
        }
        let rows = lines.map(|(i, l)| MetricsRow::from_csv(l, i + 1)).collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    /// The row with the highest test accuracy; the earliest wins ties.
    pub fn best(&self) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&MetricsRow>, r| match best {
                Some(b) if b.test_acc >= r.test_acc => Some(b),
                _ => Some(r),
            })
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn same_outcome(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| a.same_outcome(b))
    }
}

/// Appends rows to a metrics file, flushing each one so a crashed run keeps
/// every finished epoch.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    /// Starts a fresh file with the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    /// Continues an existing file after checking its header.
    pub fn append(path: &Path) -> Result<Self> {
        RunMetrics::load(path)?;
        let out = BufWriter::new(OpenOptions::new().append(true).open(path)?);
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_csv())?;
        self.out.flush()?;
        Ok(())
    }
}
