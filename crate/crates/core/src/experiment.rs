//! Training runs on disk: history log, periodic checkpoints, champion file
//! and held-out evaluation.

use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::checkpoint::{Champion, TrainingScore, TrainingState};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::genome::initial_genome;
use crate::harness::{evaluate, CartPoleFitness, EvalReport};
use crate::optim::{HistoryRow, Pipeline, Workers};
use crate::seeds::HELD_OUT_BASE;

pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CHAMPION_FILE: &str = "champion.json";
pub const EVAL_FILE: &str = "eval.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `run.workers`.
    pub workers: Option<usize>,
    /// Checkpoint and stop once this many generations are complete.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Finished { champion: PathBuf, held_out: Option<EvalReport> },
    Stopped { generation: usize, checkpoint: PathBuf },
    AlreadyFinished { generation: usize },
}

const HEADER: [&str; 9] = [
    "generation",
    "stage",
    "best_fitness",
    "best_so_far",
    "mean_fitness",
    "std_fitness",
    "periodic_eval_mean",
    "periodic_eval_std",
    "wallclock",
];

struct HistoryWriter(csv::Writer<BufWriter<File>>);

impl HistoryWriter {
    /// Starts `path` afresh with the rows already recorded.
    fn create(path: &Path, rows: &[HistoryRow]) -> Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
        w.write_record(HEADER)?;
        let mut hw = HistoryWriter(w);
        for r in rows {
            hw.push(r)?;
        }
        Ok(hw)
    }

    fn push(&mut self, r: &HistoryRow) -> Result<()> {
        self.0.serialize(r)?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.0.flush()?;
        Ok(())
    }
}

/// Reads a history CSV back.
pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn fitness_for(cfg: &ExperimentConfig) -> CartPoleFitness {
    CartPoleFitness {
        arch: cfg.arch.clone(),
        env: cfg.env.clone(),
        episodes_per_candidate: cfg.optimizer.episodes_per_candidate,
        master_seed: cfg.optimizer.seed,
    }
}

/// Starts a new run in `out_dir`, replacing any earlier run there.
pub fn train(cfg: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunStatus> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(CONFIG_FILE), cfg.to_toml_string()?)?;
    for stale in [CHAMPION_FILE, EVAL_FILE, CHECKPOINT_FILE] {
        let p = out_dir.join(stale);
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }
    let start = initial_genome(&cfg.arch, cfg.init).values;
    let pipeline = Pipeline::new(cfg.optimizer.clone(), &start)?;
    drive(cfg, pipeline, out_dir, opts)
}

/// Continues the run stored in `checkpoint`. When `expected` is given it must
/// describe the same experiment as the stored config.
pub fn resume(
    checkpoint: &Path,
    out_dir: Option<&Path>,
    expected: Option<&ExperimentConfig>,
    opts: &RunOptions,
) -> Result<RunStatus> {
    let state = TrainingState::load(checkpoint)?;
    let cfg = state.config()?;
    if let Some(e) = expected {
        if !e.same_experiment(&cfg) {
            let field = if e.arch != cfg.arch {
                "arch"
            } else if e.env != cfg.env {
                "env"
            } else if e.init != cfg.init {
                "init"
            } else {
                "optimizer"
            };
            return Err(Error::Config(format!(
                "config differs from the checkpoint in [{field}]; resume needs the original experiment"
            )));
        }
    }
    if state.pipeline.is_finished() {
        return Ok(RunStatus::AlreadyFinished { generation: state.pipeline.generation() });
    }
    let out_dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => checkpoint.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&out_dir)?;
    drive(&cfg, state.pipeline, &out_dir, opts)
}

fn drive(cfg: &ExperimentConfig, mut pipeline: Pipeline, out_dir: &Path, opts: &RunOptions) -> Result<RunStatus> {
    let workers = Workers::new(opts.workers.unwrap_or(cfg.run.workers))?;
    let fitness = fitness_for(cfg);
    pipeline.set_dump_dir(out_dir.to_path_buf());
    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    let mut history = HistoryWriter::create(&out_dir.join(HISTORY_FILE), pipeline.history())?;
    let save = |p: &mut Pipeline, h: &mut HistoryWriter| -> Result<()> {
        h.flush()?;
        p.checkpoint_clock();
        TrainingState::new(cfg, p.clone())?.save(&ckpt_path)
    };

    while !pipeline.is_finished() {
        if opts.stop_after.is_some_and(|s| pipeline.generation() >= s) {
            save(&mut pipeline, &mut history)?;
            return Ok(RunStatus::Stopped { generation: pipeline.generation(), checkpoint: ckpt_path });
        }
        let row = pipeline.step(&fitness, &workers)?;
        history.push(row)?;
        log_row(row);
        if pipeline.generation().is_multiple_of(cfg.run.checkpoint_every) {
            save(&mut pipeline, &mut history)?;
        }
    }
    save(&mut pipeline, &mut history)?;

    let champ = pipeline
        .champion()
        .ok_or_else(|| Error::Protocol("run finished without a periodic evaluation".into()))?
        .clone();
    let mut champion = Champion::new(cfg.arch.clone(), cfg.env.clone(), champ.genome)?;
    champion.training = Some(TrainingScore { generation: champ.generation, mean: champ.mean, std: champ.std });
    if cfg.run.final_eval_episodes > 0 {
        let report = evaluate(
            &cfg.arch,
            &champion.genome,
            &cfg.env,
            cfg.run.final_eval_episodes,
            HELD_OUT_BASE,
            &workers,
        )?;
        std::fs::write(out_dir.join(EVAL_FILE), serde_json::to_vec_pretty(&report)?)?;
        log::info!("held-out score over {} episodes: {:.1} ± {:.1}", report.n_episodes, report.mean, report.std);
        champion.held_out = Some(report);
    }
    let path = out_dir.join(CHAMPION_FILE);
    champion.save(&path)?;
    Ok(RunStatus::Finished { champion: path, held_out: champion.held_out })
}

fn log_row(r: &HistoryRow) {
    match r.periodic_eval_mean {
        Some(m) => log::info!(
            "gen {:>5} {:<6} best {:8.2} mean {:8.2} eval {:8.2} ± {:.2}",
            r.generation,
            r.stage,
            r.best_fitness,
            r.mean_fitness,
            m,
            r.periodic_eval_std.unwrap_or(0.0)
        ),
        None => log::debug!("gen {:>5} {:<6} best {:8.2} mean {:8.2}", r.generation, r.stage, r.best_fitness, r.mean_fitness),
    }
}
