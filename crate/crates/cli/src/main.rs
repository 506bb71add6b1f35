use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbfpoint::data::Corruption;
use rbfpoint::harness::{
    cmd_benchmark, cmd_eval, cmd_kernels, cmd_train, expand_preset, render_expansion, summary_table,
    ExperimentConfig, MetricsRow, CONFIG_KEYS, DATA_ENV, PRESETS,
};
use rbfpoint::{Error, Result};

#[derive(Parser)]
#[command(name = "rbfpoint", version, about = "RBF point-cloud classifier experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config source shared by every verb that builds one.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file; omitted keys keep their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn given(&self) -> bool {
        self.config.is_some() || self.seed.is_some() || !self.sets.is_empty()
    }

    fn build(&self, out: Option<&Path>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let sets: Vec<&str> = self.sets.iter().map(String::as_str).collect();
        cfg = cfg.with_overrides(&sets)?;
        if let Some(seed) = self.seed {
            cfg = cfg.with("seed", seed)?;
        }
        if let Some(out) = out {
            cfg = cfg.with("out_dir", out.display())?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a network, writing config.txt, metrics.csv and model.ckpt.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Suppress the per-epoch progress lines.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Evaluate a checkpoint, clean and under an optional corruption sweep.
    Eval {
        checkpoint: PathBuf,
        /// Dataset and augmentation settings; defaults to the config saved
        /// in the checkpoint.
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "dropout:F|noise:STD")]
        corrupt: Option<Corruption>,
    },
    /// Count parameters and FLOPs and time single-sample inference.
    Benchmark {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1024)]
        points: usize,
        #[arg(long, default_value_t = 40)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        warmup: usize,
        #[arg(long, default_value_t = 1000)]
        passes: usize,
    },
    /// Dump the RBF kernels of a checkpoint as CSV.
    Kernels {
        checkpoint: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print a preset's configs, or run them all with `--run`.
    Preset {
        /// Preset name; lists the presets when omitted.
        name: Option<String>,
        /// Root directory; each config writes to a subdirectory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "U64", default_value_t = 0)]
        seed: u64,
        /// Train every config, then write summary.csv under the root.
        #[arg(long)]
        run: bool,
    },
    /// List the config keys.
    Keys,
}

fn progress_line(name: &str, r: &MetricsRow) {
    eprintln!(
        "[{name}] epoch {:>3}  lr {:.2e}  loss {:.4}  train {:.2}%  test {:.2}% / {:.2}%  {:.1}s",
        r.epoch,
        r.lr,
        r.train_loss,
        100.0 * r.train_acc,
        100.0 * r.test_acc,
        100.0 * r.test_acc_class,
        r.seconds
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, out, quiet } => {
            let cfg = cfg.build(out.as_deref())?;
            let outcome = cmd_train(&cfg, &mut |r| {
                if !quiet {
                    progress_line(&cfg.name, r);
                }
            })?;
            if let Some(b) = outcome.best() {
                println!(
                    "best epoch {}: test instance {:.2}%, class {:.2}%",
                    b.epoch,
                    100.0 * b.test_acc,
                    100.0 * b.test_acc_class
                );
            }
            println!("checkpoint {}", outcome.checkpoint.display());
        }
        Command::Eval { checkpoint, cfg, corrupt } => {
            let cfg = if cfg.given() { Some(cfg.build(None)?) } else { None };
            println!("{}", cmd_eval(&checkpoint, cfg.as_ref(), corrupt.as_ref())?);
        }
        Command::Benchmark { cfg, points, classes, warmup, passes } => {
            let c = cfg.build(None)?;
            let spec = c.model_spec(classes)?;
            println!("{}", cmd_benchmark(&spec, points, warmup, passes, c.seed)?);
        }
        Command::Kernels { checkpoint, out } => cmd_kernels(&checkpoint, out.as_deref(), io::stdout().lock())?,
        Command::Preset { name: None, .. } => {
            for (name, about) in PRESETS {
                println!("{name:<14} {about}");
            }
        }
        Command::Preset { name: Some(name), out, seed, run } => {
            let root = out.unwrap_or_else(|| Path::new("runs").join(&name));
            let configs = expand_preset(&name, &root, seed)?;
            if !run {
                print!("{}", render_expansion(&configs));
                return Ok(());
            }
            let mut done = Vec::new();
            for cfg in configs {
                let outcome = cmd_train(&cfg, &mut |r| progress_line(&cfg.name, r))?;
                done.push((cfg, outcome.metrics));
            }
            let table = summary_table(&done);
            fs::create_dir_all(&root)?;
            fs::write(root.join("summary.csv"), &table)?;
            print!("{table}");
        }
        Command::Keys => {
            for (key, about) in CONFIG_KEYS {
                println!("{key:<18} {about}");
            }
            println!("\ndataset root fallback: ${DATA_ENV}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    rbfpoint::alloc::retain_large_allocations();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (`rbfpoint kernels ... | head`) is the reader's choice.
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::MissingDataset(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
