use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pla::config::{parse_alphas, RunConfig};
use pla::synth::{write_dataset, DatasetSpec};
use pla::{pipeline, Error, Result};

#[derive(Parser)]
#[command(name = "pla", version, about = "Point-language association: pairs, training and open-vocabulary evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (scenes, frames, captions, embeddings, config)
    Synth {
        /// JSON dataset spec; the built-in fixture when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build scene, view and entity point-caption pairs
    Associate(RunArgs),
    /// Train the adapter, encoder and binary head
    Train(RunArgs),
    /// Evaluate a checkpoint on the evaluation scenes
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Skip binary-head calibration
        #[arg(long)]
        no_calibration: bool,
    },
    /// Pretty-print any binary artifact
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    captions: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Caption weights for the scene, view and entity levels
    #[arg(long, value_name = "F,F,F")]
    alphas: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    /// Loads the config file, then applies flags on top.
    fn resolve(&self, eval: bool) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let here = Path::new("");
        let mut set = |key: &str, value: Option<String>| -> Result<()> {
            match value {
                Some(v) => cfg.set(key, &v, here),
                None => Ok(()),
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set(if eval { "eval_scenes" } else { "scenes" }, path(&self.scenes))?;
        set("frames", path(&self.frames))?;
        set("captions", path(&self.captions))?;
        set("embeddings", path(&self.embeddings))?;
        set("partition", path(&self.partition))?;
        set("lexicon", path(&self.lexicon))?;
        set("checkpoint", path(&self.checkpoint))?;
        set("out", path(&self.out))?;
        set("voxel_size", self.voxel_size.map(|v| v.to_string()))?;
        set("radius", self.radius.map(|v| v.to_string()))?;
        set("gamma", self.gamma.map(|v| v.to_string()))?;
        set("delta", self.delta.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("iterations", self.iters.map(|v| v.to_string()))?;
        if let Some(a) = &self.alphas {
            cfg.train.weights = parse_alphas(a)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, seed, out } => {
            let mut spec = match spec {
                Some(p) => DatasetSpec::load(&p)?,
                None => DatasetSpec::default_fixture(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let scenes = write_dataset(&spec, &out)?;
            let points: usize = scenes.iter().map(|s| s.cloud.len()).sum();
            println!("wrote {} scenes ({points} points) to {}", scenes.len(), out.display());
        }
        Command::Associate(args) => {
            let stats = pipeline::associate(&args.resolve(false)?)?;
            print!("{}", stats.to_json());
        }
        Command::Train(args) => {
            let cfg = args.resolve(false)?;
            let summary = pipeline::train_model(&cfg)?;
            match summary.final_loss {
                Some(l) => println!("{} iterations, final loss {l:.5}", summary.iterations),
                None => println!("0 iterations"),
            }
            println!("checkpoint: {}", pipeline::checkpoint_path(&cfg).display());
        }
        Command::Eval { run, no_calibration } => {
            let report = pipeline::eval_model(&run.resolve(true)?, !no_calibration)?;
            print!("{}", report.to_table());
        }
        Command::Inspect { path } => print!("{}", pipeline::inspect(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLA_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; help and version succeed
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
