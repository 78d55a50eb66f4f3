//! Command-line front end: `noisemod <train|eval|vii|sweep-beta|sweep-noise|visualize|bench>`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data or I/O error,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisemod::data::Split;
use noisemod::harness::{
    self, evaluate, prepare_data, ExperimentConfig, Overrides, Profile, Regime, BETA_SWEEP,
};
use noisemod::interpretability::vii;
use noisemod::models::{Architecture, Checkpoint};
use noisemod::{Error, NoiseKind, Result};

#[derive(Parser)]
#[command(name = "noisemod", version, about = "Noise-modulation training laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Train(Common),
    /// Accuracy and loss of a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// VII report of a checkpoint on the test split.
    Vii {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write gradient grids for this many test examples.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Noise modulation across carrier constant ratios.
    SweepBeta {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = BETA_SWEEP.to_vec())]
        betas: Vec<f64>,
    },
    /// Noise modulation with each noise family, plus a standard baseline.
    SweepNoise {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = NoiseKind::ALL.to_vec())]
        kinds: Vec<NoiseKind>,
    },
    /// Gradient grids for inputs and checkpoints given as `label=path`.
    Visualize {
        #[command(flatten)]
        common: Common,
        #[arg(long = "checkpoint", value_parser = parse_labelled, required = true)]
        checkpoints: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = 80)]
        count: usize,
    },
    /// Epoch time and backward passes per step for each regime.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "paper")]
    profile: Profile,
    #[arg(long, value_enum)]
    regime: Option<Regime>,
    #[arg(long, value_enum)]
    arch: Option<Architecture>,
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    dataset: Option<harness::DatasetKind>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Overrides `NOISEMOD_SEED` and the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    noise: Option<NoiseKind>,
    #[arg(long)]
    fixed_carriers: bool,
    #[arg(long)]
    mult_alpha: Option<f64>,
    #[arg(long, value_enum)]
    space: Option<harness::ModulationSpace>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    no_box_clamp: bool,
    #[arg(long)]
    no_random_init: bool,
    #[arg(long)]
    vii_every_epoch: bool,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    outdir: Option<PathBuf>,
}

fn parse_labelled(s: &str) -> std::result::Result<(String, PathBuf), String> {
    s.split_once('=')
        .map(|(l, p)| (l.to_string(), PathBuf::from(p)))
        .ok_or_else(|| format!("expected label=path, got {s:?}"))
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let overrides = Overrides {
            regime: self.regime,
            arch: self.arch,
            widths: self.widths.clone(),
            dataset: self.dataset,
            data_path: self.data_dir.clone(),
            train_limit: self.train_limit,
            test_limit: self.test_limit,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            beta: self.beta,
            noise: self.noise,
            fixed_carriers: self.fixed_carriers,
            mult_alpha: self.mult_alpha,
            space: self.space,
            epsilon: self.epsilon,
            alpha: self.alpha,
            steps: self.steps,
            no_box_clamp: self.no_box_clamp,
            no_random_init: self.no_random_init,
            vii_every_epoch: self.vii_every_epoch,
            name: self.name.clone(),
            outdir: self.outdir.clone(),
        };
        let env_seed = std::env::var(harness::SEED_ENV).ok();
        ExperimentConfig::resolve(self.config.as_deref(), self.profile, env_seed.as_deref(), &overrides)
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_for(cfg: &ExperimentConfig, path: &PathBuf) -> Result<(Checkpoint, harness::PreparedData)> {
    let model = Checkpoint::load(path)?;
    let data = prepare_data(cfg)?;
    if model.spec.input_shape != data.test.image_shape() {
        return Err(Error::ShapeMismatch {
            op: "checkpoint vs dataset",
            left: model.spec.input_shape.to_vec(),
            right: data.test.image_shape().to_vec(),
        });
    }
    Ok((model, data))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.resolve()?;
            let data = prepare_data(&cfg)?;
            eprintln!("training {} -> {}", cfg.experiment_id(), cfg.run_dir().display());
            let report = harness::run_experiment(&cfg, &data)?;
            print_json(&report.summary)
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.resolve()?;
            let (model, data) = load_for(&cfg, &checkpoint)?;
            let r = evaluate(&model, &data.test)?;
            print_json(&serde_json::json!({
                "split": Split::Test,
                "accuracy": r.accuracy,
                "loss": r.loss,
                "count": data.test.len(),
            }))
        }
        Command::Vii {
            common,
            checkpoint,
            grid,
        } => {
            let cfg = common.resolve()?;
            let (model, data) = load_for(&cfg, &checkpoint)?;
            let stem = checkpoint
                .file_stem()
                .map_or("checkpoint".into(), |s| s.to_string_lossy().into_owned());
            let dir = cfg.output.outdir.join(format!("vii-{stem}-{}", &cfg.hash()[..8]));
            std::fs::create_dir_all(&dir)?;
            let report = vii(&model, &data.test)?;
            report.write_csv(dir.join("vii.csv"))?;
            let acc = evaluate(&model, &data.test)?;
            let summary = serde_json::json!({
                "mean_vii": report.mean,
                "count": report.count,
                "loss": report.loss,
                "accuracy": acc.accuracy,
                "config_hash": cfg.hash(),
            });
            std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            if let Some(count) = grid {
                harness::visualize(&[(stem, model)], &data.test, count, &dir)?;
            }
            eprintln!("wrote {}", dir.display());
            print_json(&summary)
        }
        Command::SweepBeta { common, betas } => {
            let cfg = common.resolve()?;
            let data = prepare_data(&cfg)?;
            let (rows, path) = harness::sweep_beta(&cfg, &data, &betas, &mut |r| {
                eprintln!("{}: acc {:.4} vii {:.4}", r.summary.id, r.summary.test_accuracy, r.summary.mean_vii)
            })?;
            eprintln!("wrote {}", path.display());
            print_json(&rows)
        }
        Command::SweepNoise { common, kinds } => {
            let cfg = common.resolve()?;
            let data = prepare_data(&cfg)?;
            let (rows, path) = harness::sweep_noise(&cfg, &data, &kinds, &mut |r| {
                eprintln!("{}: acc {:.4} vii {:.4}", r.summary.id, r.summary.test_accuracy, r.summary.mean_vii)
            })?;
            eprintln!("wrote {}", path.display());
            print_json(&rows)
        }
        Command::Visualize {
            common,
            checkpoints,
            count,
        } => {
            let cfg = common.resolve()?;
            let data = prepare_data(&cfg)?;
            let models = checkpoints
                .into_iter()
                .map(|(label, path)| Checkpoint::load(path).map(|m| (label, m)))
                .collect::<Result<Vec<_>>>()?;
            let dir = cfg.output.outdir.join("visualize");
            let report = harness::visualize(&models, &data.test, count, &dir)?;
            for (path, _) in &report.grids {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Bench { common, repeats } => {
            let cfg = common.resolve()?;
            let data = prepare_data(&cfg)?;
            let (report, dir) = harness::bench(&cfg, &data, repeats)?;
            eprintln!("wrote {}", dir.display());
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
