//! Canned experiment matrices. Each preset expands deterministically into
//! named configs under one output root.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::RunMetrics;
use crate::optim::FreezeRegime;
use crate::rbf::InitScheme;

pub const KERNEL_COUNTS: [usize; 8] = [1, 2, 5, 10, 50, 100, 300, 1000];
pub const KERNEL_MIXES: [&str; 5] = ["gaussian", "markov", "imq", "gaussian+markov", "gaussian+imq"];

pub const PRESETS: [(&str, &str); 8] = [
    ("kernel-count", "vanilla Gaussian network, M from 1 to 1000"),
    ("kernel-type", "single and mixed kernel types, vanilla and enhanced"),
    ("freeze", "fix center, fix size, fix both, optimize both"),
    ("init", "uniform, random, k-means, overlap and local initialization"),
    ("overfit32", "32 clouds, enhanced, M=64: must reach 100% train accuracy"),
    ("mnist-small", "10 000 MNIST digits, enhanced, M=300, 50 epochs"),
    ("mnist-raw", "mnist-small without the RBF layer (pooled raw points)"),
    ("smoke", "tiny synthetic run for checking an installation"),
];

/// Desk-scale stand-in for the 3-D ablations: procedural shapes, 1024 points.
fn ablation_base() -> Result<ExperimentConfig> {
    ExperimentConfig::parse("dataset = synthetic\nvariant = vanilla\nkernels = gaussian:300\nepochs = 50\n")
}

/// `model` holds the model keys.
fn mnist_base(model: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::parse(&format!(
        "dataset = mnist\ntrain_limit = 10000\ntest_limit = 2000\npoints = 256\n{model}\
         transform = false\nrotate = false\ntest_augment = false\nepochs = 50\n"
    ))
}

fn named(base: &ExperimentConfig, name: &str, root: &Path, sets: &[(&str, String)]) -> Result<ExperimentConfig> {
    let mut kv = base.to_kv();
    kv.set("name", name);
    kv.set("out_dir", root.join(name).display());
    for (k, v) in sets {
        kv.set(k, v);
    }
    ExperimentConfig::from_kv(&kv)
}

/// The configs of preset `name`, each writing to `root/<config name>`.
pub fn expand_preset(name: &str, root: &Path, seed: u64) -> Result<Vec<ExperimentConfig>> {
    let seed_kv = ("seed", seed.to_string());
    let mut out = Vec::new();
    match name {
        "kernel-count" => {
            let base = ablation_base()?;
            for m in KERNEL_COUNTS {
                out.push(named(&base, &format!("m{m}"), root, &[("kernels", format!("gaussian:{m}")), seed_kv.clone()])?);
            }
        }
        "kernel-type" => {
            let base = ablation_base()?;
            for variant in ["vanilla", "enhanced"] {
                for mix in KERNEL_MIXES {
                    out.push(named(
                        &base,
                        &format!("{variant}-{mix}"),
                        root,
                        &[("variant", variant.into()), ("kernels", format!("{mix}:300")), seed_kv.clone()],
                    )?);
                }
            }
        }
        "freeze" => {
            let base = ablation_base()?;
            for r in FreezeRegime::ALL {
                out.push(named(&base, r.tag(), root, &[("freeze", r.tag().into()), seed_kv.clone()])?);
            }
        }
        "init" => {
            let base = ablation_base()?;
            for s in InitScheme::ALL {
                out.push(named(&base, s.tag(), root, &[("init", s.tag().into()), seed_kv.clone()])?);
            }
        }
        "overfit32" => {
            let base = ExperimentConfig::parse(
                "dataset = synthetic\ntrain_limit = 32\ntest_limit = 32\npoints = 256\nvariant = enhanced\n\
                 kernels = gaussian:64\nrotate = false\njitter_std = 0\ntest_augment = false\nepochs = 200\n",
            )?;
            out.push(named(&base, "overfit32", root, &[seed_kv])?);
        }
        "mnist-small" => {
            let base = mnist_base("variant = enhanced\nkernels = gaussian:300\n")?;
            out.push(named(&base, "mnist-small", root, &[seed_kv])?);
        }
        "mnist-raw" => out.push(named(&mnist_base("variant = raw\n")?, "mnist-raw", root, &[seed_kv])?),
        "smoke" => {
            let base = ExperimentConfig::parse(
                "dataset = synthetic\ntrain_limit = 32\ntest_limit = 16\npoints = 64\nvariant = vanilla\n\
                 kernels = gaussian:16\nclassifier = 16\ntnet_point = 8\ntnet_fc = 8\nepochs = 3\n",
            )?;
            out.push(named(&base, "smoke", root, &[seed_kv])?);
        }
        _ => {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            return Err(Error::Config(format!("unknown preset `{name}`; known: {}", known.join(", "))));
        }
    }
    Ok(out)
}

/// Every config of the preset as text, separated by `[name]` headers.
pub fn render_expansion(configs: &[ExperimentConfig]) -> String {
    let mut s = String::new();
    for c in configs {
        let _ = writeln!(s, "[{}]", c.name);
        s.push_str(&c.to_text());
        s.push('\n');
    }
    s
}

pub const SUMMARY_HEADER: &str =
    "name,epochs,best_epoch,best_test_acc,best_test_acc_class,final_train_loss,final_train_acc,final_test_acc";

/// One CSV row per finished run.
pub fn summary_table(runs: &[(ExperimentConfig, RunMetrics)]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for (cfg, m) in runs {
        match (m.best(), m.last()) {
            (Some(b), Some(l)) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    cfg.name,
                    m.rows.len(),
                    b.epoch,
                    b.test_acc,
                    b.test_acc_class,
                    l.train_loss,
                    l.train_acc,
                    l.test_acc
                );
            }
            _ => {
                let _ = writeln!(s, "{},0,,,,,,", cfg.name);
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_have_the_documented_shape() {
        let root = Path::new("runs");
        let counts = expand_preset("kernel-count", root, 0).unwrap();
        let ms: Vec<usize> = counts.iter().map(|c| c.model_spec(8).unwrap().rbf_width()).collect();
        assert_eq!(ms, KERNEL_COUNTS);
        assert_eq!(expand_preset("kernel-type", root, 0).unwrap().len(), 10);
        assert_eq!(expand_preset("freeze", root, 0).unwrap().len(), 4);
        assert_eq!(expand_preset("init", root, 0).unwrap().len(), 5);
        let mixed = &expand_preset("kernel-type", root, 0).unwrap()[3];
        let spec = mixed.model_spec(8).unwrap();
        assert_eq!(spec.channels.iter().map(|c| c.kernels).collect::<Vec<_>>(), vec![150, 150]);
        assert!(expand_preset("nope", root, 0).is_err());
    }

    #[test]
    fn every_preset_expands_and_resolves() {
        for (name, _) in PRESETS {
            let configs = expand_preset(name, Path::new("r"), 3).unwrap();
            assert!(!configs.is_empty());
            for c in &configs {
                assert_eq!(c.seed, 3);
                assert!(c.out_dir.starts_with("r"));
                let classes = if c.dataset == crate::harness::DatasetKind::Mnist { 10 } else { 8 };
                c.model_spec(classes).unwrap();
            }
        }
    }

    #[test]
    fn raw_control_has_no_kernels() {
        let c = &expand_preset("mnist-raw", Path::new("r"), 0).unwrap()[0];
        assert_eq!(c.model_spec(10).unwrap().rbf_width(), 0);
    }
}
