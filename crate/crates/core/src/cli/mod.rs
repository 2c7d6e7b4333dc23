//! Command-line front end. Flags override the config file, which overrides
//! the built-in defaults.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use commands::Layout;
use config::{EvalView, Experiment, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "crossview", version, about = "Dual-view detection with cross-view RoI attention")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Drop the fusion blocks (single-view baseline).
    #[arg(long)]
    pub single_view: bool,
    /// Disable the positional encoding of RoI centers.
    #[arg(long)]
    pub no_positional: bool,
}

#[derive(Debug, Default, Args)]
pub struct IoFlags {
    /// Dataset directory (default `<out>/data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory of this command (default `<out>/<command>`).
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train/val/test studies.
    GenData {
        #[arg(long)]
        studies: Option<usize>,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Train a detector on the train split.
    Train {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        io: IoFlags,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// FROC of a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        view: Option<EvalView>,
        #[command(flatten)]
        io: IoFlags,
    },
    /// CC-view recall with and without the MLO masses.
    MaskExperiment {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        io: IoFlags,
    },
    /// Relevance-based registration of one-mass studies.
    Registration {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// IoU the argmax RoI needs with the partner mass.
        #[arg(long)]
        iou: Option<f64>,
        #[command(flatten)]
        io: IoFlags,
    },
    /// Train with and without positional encoding and compare.
    AblatePos {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        io: IoFlags,
    },
    /// Run the experiment selected in the config (everything by default).
    Run {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
    },
}

fn apply_model(cfg: &mut RunConfig, f: &ModelFlags) {
    if let Some(e) = f.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = f.lr {
        cfg.train.adam.lr = lr;
    }
    if f.single_view {
        cfg.detector.fusion.n_blocks = 0;
    }
    if f.no_positional {
        cfg.detector.fusion.use_positional = false;
    }
}

/// Effective configuration: defaults, then the file, then the flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    match &cli.command {
        Command::GenData { studies: Some(n), .. } => cfg.data.studies = *n,
        Command::Train { model, .. } | Command::AblatePos { model, .. } | Command::Run { model, .. } => {
            apply_model(&mut cfg, model)
        }
        Command::Eval { view: Some(v), .. } => cfg.eval.view = *v,
        Command::Registration { iou: Some(t), .. } => cfg.eval.registration_iou = *t,
        _ => {}
    }
    if let Command::Run { experiment: Some(e), .. } = &cli.command {
        cfg.experiment = *e;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    let layout = Layout { root: cfg.out_dir.clone() };
    let data = |io: &IoFlags| io.data.clone().unwrap_or_else(|| layout.data());
    let dir = |io: &IoFlags, name: &str| io.dir.clone().unwrap_or_else(|| layout.dir(name));
    let ckpt = |c: &Option<PathBuf>| c.clone().unwrap_or_else(|| layout.checkpoint());
    match &cli.command {
        Command::GenData { dir: d, .. } => commands::gen_data(&cfg, &d.clone().unwrap_or_else(|| layout.data())),
        Command::Train { io, resume, .. } => commands::train(&cfg, &data(io), &dir(io, "train"), *resume),
        Command::Eval { checkpoint, io, .. } => commands::eval(&cfg, &ckpt(checkpoint), &data(io), &dir(io, "eval")),
        Command::MaskExperiment { checkpoint, io } => {
            commands::mask_experiment(&cfg, &ckpt(checkpoint), &data(io), &dir(io, "mask-experiment"))
        }
        Command::Registration { checkpoint, io, .. } => {
            commands::registration(&cfg, &ckpt(checkpoint), &data(io), &dir(io, "registration"))
        }
        Command::AblatePos { io, .. } => commands::ablate_pos(&cfg, &data(io), &dir(io, "ablate-pos")),
        Command::Run { .. } => run_experiment(&cfg, &layout),
    }
}

/// Runs one selector of `run`; `All` chains every stage on the default layout.
pub fn run_experiment(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let (data, ckpt) = (layout.data(), layout.checkpoint());
    let stage = |e: Experiment| -> Result<()> {
        match e {
            Experiment::All => unreachable!("expanded below"),
            Experiment::GenData => commands::gen_data(cfg, &data),
            Experiment::Train => commands::train(cfg, &data, &layout.train(), false),
            Experiment::Eval => commands::eval(cfg, &ckpt, &data, &layout.dir("eval")),
            Experiment::MaskExperiment => commands::mask_experiment(cfg, &ckpt, &data, &layout.dir("mask-experiment")),
            Experiment::Registration => commands::registration(cfg, &ckpt, &data, &layout.dir("registration")),
            Experiment::AblatePos => commands::ablate_pos(cfg, &data, &layout.dir("ablate-pos")),
        }
    };
    match cfg.experiment {
        Experiment::All => {
            let single = cfg.detector.fusion.n_blocks == 0;
            for e in [
                Experiment::GenData,
                Experiment::Train,
                Experiment::Eval,
                Experiment::MaskExperiment,
                Experiment::Registration,
                Experiment::AblatePos,
            ] {
                // Fusion-only stages are skipped for the single-view baseline.
                if single && matches!(e, Experiment::Registration | Experiment::AblatePos) {
                    continue;
                }
                eprintln!("== {e:?}");
                stage(e)?;
            }
            Ok(())
        }
        e => stage(e),
    }
}
