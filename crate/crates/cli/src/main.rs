use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurodiv::checkpoint::Champion;
use neurodiv::config::{ExperimentConfig, PRESETS};
use neurodiv::experiment::{self, RunOptions, RunStatus, EVAL_FILE};
use neurodiv::harness::{self, compare_orderings, probe_activations, write_traces_csv};
use neurodiv::optim::Workers;
use neurodiv::seeds::HELD_OUT_BASE;

#[derive(Parser)]
#[command(name = "neurodiv", version, about = "Evolve neural units inside frozen random networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file or a preset.
    Train {
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Use a built-in preset instead of a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long, default_value = "runs/latest")]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Replace the master training seed.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Checkpoint and exit after this many generations.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Score a champion on held-out episodes.
    Eval {
        #[arg(long)]
        champion: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// First episode seed; defaults to the held-out range.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write per-neuron response traces for one layer (0 is the input layer).
    Probe {
        #[arg(long)]
        champion: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Continue an interrupted run.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Refuse to resume unless this config describes the same experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Print a preset as an editable config file.
    Preset { name: Option<String> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.downcast_ref::<neurodiv::Error>().is_some_and(|e| e.is_config());
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Train { config, preset, out_dir, workers, seed_override, stop_after } => {
            let mut cfg = match (config, preset) {
                (Some(path), _) => ExperimentConfig::load(&path)?,
                (None, Some(name)) => ExperimentConfig::preset(&name)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            if let Some(seed) = seed_override {
                cfg.optimizer.seed = seed;
            }
            cfg.validate()?;
            let status = experiment::train(&cfg, &out_dir, &RunOptions { workers, stop_after })?;
            report(status);
        }
        Command::Eval { champion, episodes, seed, out_dir, workers } => {
            let c = Champion::load(&champion)?;
            let workers = Workers::new(workers.unwrap_or(1))?;
            let report = harness::evaluate(&c.arch, &c.genome, &c.env, episodes, seed.unwrap_or(HELD_OUT_BASE), &workers)?;
            println!("{} episodes: mean {:.2} std {:.2}", report.n_episodes, report.mean, report.std);
            let dir = out_dir.unwrap_or_else(|| parent_of(&champion));
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(EVAL_FILE);
            std::fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
            println!("wrote {}", path.display());
        }
        Command::Probe { champion, layer, out_dir } => {
            let c = Champion::load(&champion)?;
            let traces = probe_activations(&c.arch, &c.genome, layer)?;
            let ordering = compare_orderings(&c.arch, &c.genome, layer)?;
            std::fs::create_dir_all(&out_dir)?;
            let csv = out_dir.join(format!("traces_layer{layer}.csv"));
            write_traces_csv(&csv, &traces)?;
            let json = out_dir.join(format!("ordering_layer{layer}.json"));
            std::fs::write(&json, serde_json::to_vec_pretty(&ordering)?)?;
            println!(
                "layer {layer}: {} neurons, max ordering divergence {:.4} (neuron {})",
                traces.len(),
                ordering.max_divergence,
                ordering.argmax
            );
            println!("wrote {} and {}", csv.display(), json.display());
        }
        Command::Resume { checkpoint, config, out_dir, workers, stop_after } => {
            let expected = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let status =
                experiment::resume(&checkpoint, out_dir.as_deref(), expected.as_ref(), &RunOptions { workers, stop_after })?;
            report(status);
        }
        Command::Preset { name: None } => {
            for p in PRESETS {
                println!("{p}");
            }
        }
        Command::Preset { name: Some(name) } => {
            print!("{}", ExperimentConfig::preset(&name)?.to_toml_string()?);
        }
    }
    Ok(())
}

fn parent_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn report(status: RunStatus) {
    match status {
        RunStatus::Finished { champion, held_out } => {
            println!("champion written to {}", champion.display());
            if let Some(r) = held_out {
                println!("held-out: {} episodes, mean {:.2} std {:.2}", r.n_episodes, r.mean, r.std);
            }
        }
        RunStatus::Stopped { generation, checkpoint } => {
            println!("stopped after generation {generation}; resume from {}", checkpoint.display());
        }
        RunStatus::AlreadyFinished { generation } => {
            println!("run already finished ({generation} generations); nothing to do");
        }
    }
}
