//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use autolabel_core::guided_filter::GuidedFilterParams;
use autolabel_core::threshold::Polarity;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{self, GenMode};
use crate::config::{parse_override, Settings, Strategy};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "autolabel", version, about = "Automatic pixel-level mask generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Simple,
    Complex,
    Cluttered,
    TwoClass,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolarityArg {
    Auto,
    Bright,
    Dark,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Transfer,
    Simple2complex,
    Cam,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Transfer => Strategy::Transfer,
            StrategyArg::Simple2complex => Strategy::SimpleToComplex,
            StrategyArg::Cam => Strategy::Cam,
        }
    }
}

/// Options shared by the pipeline commands.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    pub set: Vec<(String, String)>,
    /// Training seed; falls back to AUTOLABEL_SEED, then the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
}

impl PipelineArgs {
    /// Settings with dedicated flags applied after `--set` overrides.
    pub fn settings(&self, env_seed: Option<&str>, rounds: Option<usize>) -> Result<Settings> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(("seed".into(), seed.to_string()));
        }
        if let Some(s) = self.strategy {
            overrides.push(("strategy".into(), Strategy::from(s).to_string()));
        }
        if let Some(r) = rounds {
            overrides.push(("rounds".into(), r.to_string()));
        }
        Settings::resolve(self.config.as_deref(), env_seed, &overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground-truth masks.
    Gen {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        n: usize,
        /// Falls back to AUTOLABEL_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Image side in pixels.
        #[arg(long)]
        side: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Otsu-threshold an image into a 0/1 mask.
    Otsu {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        polarity: PolarityArg,
    },
    /// Boundary response (max pool minus min pool) per channel.
    Boundary {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        kernel: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Guided-filter a plane stack with an image's grayscale as guide.
    Guide {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        prob: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce initial masks for the target set.
    Bootstrap {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap, then refine masks by self-training.
    Iterate {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class IoU and mIoU of predicted masks against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 2)]
        classes: usize,
    },
    /// Grid search over guided-filter radius and epsilon on the validation split.
    Sweep {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long = "r-list", value_delimiter = ',', required = true)]
        r_list: Vec<usize>,
        #[arg(long = "eps-list", value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        /// Score this model instead of bootstrapping one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Alpha-blend a mask over its image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn env_seed_value(env_seed: Option<&str>) -> Result<Option<u64>> {
    env_seed
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Usage(format!("{} is not an unsigned integer: {s:?}", crate::config::SEED_ENV)))
        })
        .transpose()
}

pub fn execute(cli: Cli, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen {
            mode,
            n,
            seed,
            side,
            out: dir,
        } => {
            let seed = match seed {
                Some(s) => s,
                None => env_seed_value(env_seed)?.unwrap_or(0),
            };
            let mode = match mode {
                ModeArg::Simple => GenMode::Simple,
                ModeArg::Complex => GenMode::Complex,
                ModeArg::Cluttered => GenMode::Cluttered,
                ModeArg::TwoClass => GenMode::TwoClass,
            };
            commands::gen(mode, n, seed, side, &dir)
        }
        Command::Otsu {
            input,
            out: path,
            polarity,
        } => {
            let polarity = match polarity {
                PolarityArg::Auto => Polarity::Auto,
                PolarityArg::Bright => Polarity::Bright,
                PolarityArg::Dark => Polarity::Dark,
            };
            commands::otsu(&input, &path, polarity)
        }
        Command::Boundary {
            input,
            kernel,
            out: path,
        } => commands::boundary(&input, kernel, &path),
        Command::Guide {
            image,
            prob,
            r,
            eps,
            out: path,
        } => commands::guide(&image, &prob, GuidedFilterParams::new(r, eps)?, &path),
        Command::Bootstrap { pipeline, out: dir } => {
            commands::bootstrap(&pipeline.settings(env_seed, None)?, &dir, out).map(drop)
        }
        Command::Iterate {
            pipeline,
            rounds,
            out: dir,
        } => commands::iterate_cmd(&pipeline.settings(env_seed, rounds)?, &dir, out).map(drop),
        Command::Eval { pred, gt, classes } => commands::eval(&pred, &gt, classes, out).map(drop),
        Command::Sweep {
            pipeline,
            r_list,
            eps_list,
            model,
        } => commands::sweep(
            &pipeline.settings(env_seed, None)?,
            &r_list,
            &eps_list,
            model.as_deref(),
            out,
        )
        .map(drop),
        Command::Overlay {
            image,
            mask,
            alpha,
            out: path,
        } => commands::overlay(&image, &mask, alpha, &path),
    }
}

/// Parse and execute. Help and version requests come back as `Ok` with the
/// text written to `out`.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, env_seed, out),
        Err(e) if !e.use_stderr() => write!(out, "{e}").map_err(|io| Error::io(std::path::Path::new("<stdout>"), io)),
        Err(e) => Err(Error::Usage(
            e.render()
                .to_string()
                .lines()
                .next()
                .unwrap_or("usage error")
                .to_string(),
        )),
    }
}
