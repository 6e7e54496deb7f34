mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use srelu::activation::ActivationKind;
use srelu::data::SyntheticTarget;
use srelu::train::CapacityOptions;
use srelu::verify::{Fault, SuiteOptions};

use commands::{CmdResult, EvalSplit, GradcheckPreset};
use config::{DatasetKind, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "srelu",
    version,
    about = "Train and verify networks with S-shaped rectified linear units"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by commands that read a run configuration.
#[derive(clap::Args, Debug)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// mnist, cifar10 or synthetic.
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// relu, lrelu [slope], prelu, apl [hinges], srelu or srelu-shared.
    #[arg(long)]
    activation: Option<ActivationKind>,
    /// mlp-small, cnn-small or cnn-cifar.
    #[arg(long)]
    preset: Option<String>,
}

impl RunArgs {
    fn resolve(self, out: Option<PathBuf>) -> srelu::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(d) = self.dataset {
            cfg.dataset = d;
        }
        if let Some(d) = self.data_dir {
            cfg.data_dir = Some(d);
        }
        if let Some(a) = self.activation {
            cfg.activation = a;
        }
        if let Some(p) = self.preset {
            cfg.preset = Some(p);
            cfg.network = None;
        }
        if let Some(o) = out {
            cfg.out = o;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GradcheckArg {
    Default,
    Activations,
    Network,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write metrics, checkpoint and parameter tables.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top-1 error of a checkpoint; the result is appended to a metrics CSV.
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Metrics CSV to append to [default: metrics.csv beside the checkpoint]
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Compare analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, value_enum, default_value = "default")]
        preset: GradcheckArg,
        /// Random samples per activation kind.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = SuiteOptions::default().seed)]
        seed: u64,
        /// Negate the SReLU left-slope gradient to exercise failure reporting.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Fit a one-dimensional target through a single activation unit.
    Capacity {
        /// clamp_s_curve, convex_hinge or identity.
        target: SyntheticTarget,
        /// Activation under test, e.g. `srelu` or `relu`.
        #[arg(default_value = "srelu")]
        activation: ActivationKind,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print channel-averaged SReLU parameters of a checkpoint.
    InspectParams {
        checkpoint: PathBuf,
        /// Also write them as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded train/validation index split.
    Split {
        /// Number of examples [default: size of the configured training set]
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Train { run, out } => commands::cmd_train(&run.resolve(out)?),
        Command::Eval {
            checkpoint,
            run,
            split,
            metrics,
        } => {
            let split = match split {
                SplitArg::Train => EvalSplit::Train,
                SplitArg::Test => EvalSplit::Test,
            };
            commands::cmd_eval(&checkpoint, &run.resolve(None)?, split, metrics)
        }
        Command::Gradcheck {
            preset,
            samples,
            seed,
            inject_fault,
        } => {
            let preset = match preset {
                GradcheckArg::Default => GradcheckPreset::Default,
                GradcheckArg::Activations => GradcheckPreset::Activations,
                GradcheckArg::Network => GradcheckPreset::Network,
            };
            let opts = SuiteOptions {
                samples,
                seed,
                fault: if inject_fault {
                    Fault::FlipSreluLeftSlope
                } else {
                    Fault::None
                },
            };
            commands::cmd_gradcheck(preset, &opts)
        }
        Command::Capacity {
            target,
            activation,
            steps,
            seed,
        } => {
            let mut opts = CapacityOptions::new(target, activation);
            if let Some(s) = steps {
                opts.steps = s;
            }
            if let Some(s) = seed {
                opts.seed = s;
            }
            commands::cmd_capacity(&opts)
        }
        Command::InspectParams { checkpoint, out } => commands::cmd_inspect(&checkpoint, out.as_deref()),
        Command::Split {
            count,
            fraction,
            run,
            out,
        } => {
            let cfg = run.resolve(None)?;
            let n = match count {
                Some(n) => n,
                None => commands::dataset_len(&cfg)?,
            };
            commands::cmd_split(n, fraction, cfg.train.seed, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
