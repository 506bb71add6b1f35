use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::KernelFn;
use crate::kv::{join, KvMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// RBF layer, max pool, classifier.
    Vanilla,
    /// Adds a shared per-point MLP between the RBF layer and the pool.
    Enhanced,
    /// Control without an RBF layer: raw input columns are pooled directly.
    Raw,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Enhanced => "enhanced",
            Variant::Raw => "raw",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "enhanced" => Ok(Variant::Enhanced),
            "raw" => Ok(Variant::Raw),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

/// One kernel channel: `kernel:M@start..end` in text form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelSpec {
    pub kernel: KernelFn,
    pub kernels: usize,
    pub slice: Range<usize>,
}

impl ChannelSpec {
    pub fn new(kernel: KernelFn, kernels: usize, slice: Range<usize>) -> Self {
        Self {
            kernel,
            kernels,
            slice,
        }
    }

    /// Parses `kernel:M[@start..end]`, defaulting the slice to `default_slice`.
    pub fn parse(s: &str, default_slice: Range<usize>) -> Result<Self> {
        let bad = || Error::Config(format!("bad channel `{s}`, expected kernel:M[@start..end]"));
        let (head, slice) = match s.split_once('@') {
            Some((h, r)) => {
                let (a, b) = r.split_once("..").ok_or_else(bad)?;
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                (h, a..b)
            }
            None => (s, default_slice),
        };
        let (k, m) = head.split_once(':').ok_or_else(bad)?;
        Ok(Self {
            kernel: k.trim().parse()?,
            kernels: m.trim().parse().map_err(|_| bad())?,
            slice,
        })
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}@{}..{}",
            self.kernel, self.kernels, self.slice.start, self.slice.end
        )
    }
}

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if !s.contains('@') {
            return Err(Error::Config(format!("channel `{s}` needs an explicit @start..end slice")));
        }
        ChannelSpec::parse(s, 0..0)
    }
}

pub const DEFAULT_SHARED_MLP: [usize; 3] = [16, 128, 1024];
pub const DEFAULT_CLASSIFIER: [usize; 2] = [512, 256];
pub const DEFAULT_TNET_POINT: [usize; 3] = [64, 128, 1024];
pub const DEFAULT_TNET_FC: [usize; 2] = [512, 256];
pub const DEFAULT_KEEP_PROB: f64 = 0.7;

/// Declarative description of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Leading coordinate columns seen by the spatial transform.
    pub coord_dim: usize,
    /// Total input columns (coordinates followed by any extra attributes).
    pub input_dim: usize,
    pub use_transform: bool,
    /// Rotate the normal columns `coord_dim..2·coord_dim` with the predicted transform.
    pub transform_normals: bool,
    pub channels: Vec<ChannelSpec>,
    pub shared_mlp_widths: Vec<usize>,
    pub classifier_widths: Vec<usize>,
    pub num_classes: usize,
    pub keep_prob: f64,
    pub tnet_point_widths: Vec<usize>,
    pub tnet_fc_widths: Vec<usize>,
}

impl ModelSpec {
    /// RBF → max pool → classifier over coordinates only.
    pub fn vanilla(coord_dim: usize, num_classes: usize, kernels: usize) -> Self {
        Self {
            variant: Variant::Vanilla,
            coord_dim,
            input_dim: coord_dim,
            use_transform: true,
            transform_normals: false,
            channels: vec![ChannelSpec::new(KernelFn::Gaussian, kernels, 0..coord_dim)],
            shared_mlp_widths: Vec::new(),
            classifier_widths: DEFAULT_CLASSIFIER.to_vec(),
            num_classes,
            keep_prob: DEFAULT_KEEP_PROB,
            tnet_point_widths: DEFAULT_TNET_POINT.to_vec(),
            tnet_fc_widths: DEFAULT_TNET_FC.to_vec(),
        }
    }

    /// Vanilla plus the shared 16/128/1024 per-point MLP.
    pub fn enhanced(coord_dim: usize, num_classes: usize, kernels: usize) -> Self {
        Self {
            variant: Variant::Enhanced,
            shared_mlp_widths: DEFAULT_SHARED_MLP.to_vec(),
            ..Self::vanilla(coord_dim, num_classes, kernels)
        }
    }

    /// Classifier on pooled raw input columns (no RBF layer).
    pub fn raw(coord_dim: usize, num_classes: usize) -> Self {
        Self {
            variant: Variant::Raw,
            channels: Vec::new(),
            ..Self::vanilla(coord_dim, num_classes, 1)
        }
    }

    pub fn rbf_width(&self) -> usize {
        self.channels.iter().map(|c| c.kernels).sum()
    }

    /// Width of the pooled per-point feature.
    pub fn global_feature_width(&self) -> usize {
        match self.variant {
            Variant::Raw => self.input_dim,
            _ => self
                .shared_mlp_widths
                .last()
                .copied()
                .unwrap_or_else(|| self.rbf_width()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.coord_dim == 0 {
            errs.push("coord_dim must be at least 1".to_string());
        }
        if self.coord_dim > self.input_dim {
            errs.push(format!(
                "coord_dim {} exceeds input_dim {}",
                self.coord_dim, self.input_dim
            ));
        }
        if self.num_classes < 2 {
            errs.push(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            errs.push(format!("keep_prob {} not in (0, 1]", self.keep_prob));
        }
        match self.variant {
            Variant::Vanilla | Variant::Raw if !self.shared_mlp_widths.is_empty() => {
                errs.push(format!("{} variant must have no shared MLP", self.variant));
            }
            _ => {}
        }
        match self.variant {
            Variant::Raw if !self.channels.is_empty() => {
                errs.push("raw variant has no kernel channels".to_string());
            }
            Variant::Vanilla | Variant::Enhanced if self.channels.is_empty() => {
                errs.push("at least one kernel channel is required".to_string());
            }
            _ => {}
        }
        for (i, c) in self.channels.iter().enumerate() {
            if c.kernels == 0 {
                errs.push(format!("channel {i} has no kernels"));
            }
            if c.slice.is_empty() || c.slice.end > self.input_dim {
                errs.push(format!(
                    "channel {i} slice {:?} invalid for {} input columns",
                    c.slice, self.input_dim
                ));
            }
        }
        // Kernels of different channels act on disjoint attributes, except that
        // several kernel types may share one identical slice (mixed kernels).
        for (i, a) in self.channels.iter().enumerate() {
            for b in &self.channels[i + 1..] {
                let overlap = a.slice.start < b.slice.end && b.slice.start < a.slice.end;
                if overlap && a.slice != b.slice {
                    errs.push(format!(
                        "channel slices {:?} and {:?} partially overlap",
                        a.slice, b.slice
                    ));
                }
            }
        }
        let widths = self
            .shared_mlp_widths
            .iter()
            .chain(&self.classifier_widths)
            .chain(&self.tnet_point_widths)
            .chain(&self.tnet_fc_widths);
        if widths.into_iter().any(|&w| w == 0) {
            errs.push("layer widths must be positive".to_string());
        }
        if self.use_transform && self.tnet_point_widths.is_empty() {
            errs.push("transform network needs at least one per-point layer".to_string());
        }
        if self.transform_normals && self.input_dim < 2 * self.coord_dim {
            errs.push("transform_normals needs normal columns after the coordinates".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(errs))
        }
    }

    pub const KEYS: [&'static str; 13] = [
        "variant",
        "coord_dim",
        "input_dim",
        "transform",
        "transform_normals",
        "channels",
        "shared_mlp",
        "classifier",
        "classes",
        "keep_prob",
        "tnet_point",
        "tnet_fc",
        "kernels",
    ];

    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.set("variant", self.variant);
        kv.set("coord_dim", self.coord_dim);
        kv.set("input_dim", self.input_dim);
        kv.set("transform", self.use_transform);
        kv.set("transform_normals", self.transform_normals);
        kv.set("channels", join(&self.channels));
        kv.set("shared_mlp", join(&self.shared_mlp_widths));
        kv.set("classifier", join(&self.classifier_widths));
        kv.set("classes", self.num_classes);
        kv.set("keep_prob", self.keep_prob);
        kv.set("tnet_point", join(&self.tnet_point_widths));
        kv.set("tnet_fc", join(&self.tnet_fc_widths));
    }

    /// Reads the model keys, filling gaps from the variant's defaults.
    ///
    /// `kernels = gaussian:300` (for example) is shorthand for a single channel
    /// over the coordinate columns; mixed kernels such as
    /// `gaussian+markov:300` split `M` equally across the kernel types.
    pub fn from_kv(kv: &KvMap, coord_dim: usize, input_dim: usize, classes: usize) -> Result<Self> {
        let variant: Variant = kv.get_or("variant", Variant::Vanilla)?;
        let coord_dim = kv.get_or("coord_dim", coord_dim)?;
        let input_dim = kv.get_or("input_dim", input_dim)?;
        let classes = kv.get_or("classes", classes)?;
        let mut spec = match variant {
            Variant::Vanilla => ModelSpec::vanilla(coord_dim, classes, 300),
            Variant::Enhanced => ModelSpec::enhanced(coord_dim, classes, 300),
            Variant::Raw => ModelSpec::raw(coord_dim, classes),
        };
        spec.input_dim = input_dim;
        if let Some(v) = kv.get("transform")? {
            spec.use_transform = v;
        }
        if let Some(v) = kv.get("transform_normals")? {
            spec.transform_normals = v;
        }
        if kv.contains("channels") && kv.contains("kernels") {
            return Err(Error::Config("give either `channels` or `kernels`, not both".into()));
        }
        if let Some(raw) = kv.raw("channels") {
            spec.channels = raw
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| ChannelSpec::parse(s.trim(), 0..coord_dim))
                .collect::<Result<_>>()?;
        }
        if let Some(raw) = kv.raw("kernels") {
            spec.channels = parse_kernel_mix(raw, 0..coord_dim)?;
        }
        if let Some(v) = kv.get_list("shared_mlp")? {
            spec.shared_mlp_widths = v;
        }
        if let Some(v) = kv.get_list("classifier")? {
            spec.classifier_widths = v;
        }
        if let Some(v) = kv.get("keep_prob")? {
            spec.keep_prob = v;
        }
        if let Some(v) = kv.get_list("tnet_point")? {
            spec.tnet_point_widths = v;
        }
        if let Some(v) = kv.get_list("tnet_fc")? {
            spec.tnet_fc_widths = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `gaussian+markov:300` → two channels of 150 kernels on the same slice.
/// The remainder of an uneven split goes to the first kernel types.
pub fn parse_kernel_mix(s: &str, slice: Range<usize>) -> Result<Vec<ChannelSpec>> {
    let (kinds, m) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("bad kernel mix `{s}`, expected k1+k2:M")))?;
    let m: usize = m
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad kernel count in `{s}`")))?;
    let kinds: Vec<KernelFn> = kinds
        .split('+')
        .map(|k| k.trim().parse())
        .collect::<Result<_>>()?;
    let n = kinds.len();
    Ok(kinds
        .into_iter()
        .enumerate()
        .map(|(i, k)| ChannelSpec::new(k, m / n + usize::from(i < m % n), slice.clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_satisfy_invariants() {
        let v = ModelSpec::vanilla(3, 40, 300);
        v.validate().unwrap();
        assert!(v.shared_mlp_widths.is_empty());
        assert_eq!(v.global_feature_width(), 300);
        let e = ModelSpec::enhanced(3, 40, 300);
        e.validate().unwrap();
        assert_eq!(e.global_feature_width(), 1024);
        ModelSpec::raw(2, 10).validate().unwrap();
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut s = ModelSpec::vanilla(3, 1, 0);
        s.shared_mlp_widths = vec![4];
        s.keep_prob = 0.0;
        match s.validate() {
            Err(Error::InvalidSpec(v)) => assert_eq!(v.len(), 4, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn channel_text_round_trip() {
        let c = ChannelSpec::new(KernelFn::InverseMultiquadratic, 64, 3..6);
        assert_eq!(c.to_string(), "imq:64@3..6");
        assert_eq!(c.to_string().parse::<ChannelSpec>().unwrap(), c);
        assert_eq!(ChannelSpec::parse("markov:5", 0..2).unwrap().slice, 0..2);
    }

    #[test]
    fn kernel_mix_splits_equally() {
        let chans = parse_kernel_mix("gaussian+imq:300", 0..3).unwrap();
        assert_eq!(chans.len(), 2);
        assert_eq!(chans[0].kernels + chans[1].kernels, 300);
        assert_eq!(chans[1].kernel, KernelFn::InverseMultiquadratic);
        let odd = parse_kernel_mix("gaussian+markov:5", 0..3).unwrap();
        assert_eq!((odd[0].kernels, odd[1].kernels), (3, 2));
    }

    #[test]
    fn kv_round_trip() {
        let mut s = ModelSpec::enhanced(3, 40, 64);
        s.input_dim = 6;
        s.channels.push(ChannelSpec::new(KernelFn::Gaussian, 32, 3..6));
        let mut kv = KvMap::default();
        s.write_kv(&mut kv);
        let back = ModelSpec::from_kv(&KvMap::parse(&kv.to_text()).unwrap(), 0, 0, 0).unwrap();
        assert_eq!(back, s);
    }
}
