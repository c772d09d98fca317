use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, ExperimentConfig};
use crate::agent::{AgentLayout, AgentParams, HeadToggles};
use crate::algo::{collect_rollout, compute_gae, compute_returns, update, Actor, Learner, UpdateStats};
use crate::envs::make_env;
use crate::merl::{build_merl_targets, segment_rollout, vex_stats, VexStats};
use crate::{Error, Result};

/// Episodes in the rolling return window.
pub const RETURN_WINDOW: usize = 100;
pub const CHECKPOINT_VERSION: u32 = 1;

const STREAM_INIT: u64 = 0;
const STREAM_HEADS: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_ACTOR_BASE: u64 = 100;

/// Independent random stream `stream` of run `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Single,
    Pre,
    Post,
}

/// One line of a metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Environment steps consumed so far (all actors).
    pub step: u64,
    pub update: u64,
    pub phase: Phase,
    /// Mean undiscounted return over the last [`RETURN_WINDOW`] episodes.
    pub mean_return: Option<f64>,
    /// Episodes finished since the run (or phase) started.
    pub episodes: u64,
    #[serde(flatten)]
    pub stats: UpdateStats,
    pub vex: VexStats,
    /// Kept out of the metrics file; see [`TimingRecord`].
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Line of the `.timing.jsonl` sidecar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub update: u64,
    pub wall_ms: f64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    update: u64,
    step: u64,
    learner: Learner,
}

/// Training state of one seeded run.
pub struct Trainer {
    pub learner: Learner,
    actors: Vec<Actor>,
    shuffle_rng: ChaCha8Rng,
    hyper: crate::algo::HyperParams,
    features: crate::algo::Features,
    heads: HeadToggles,
    window: VecDeque<f64>,
    pub step: u64,
    pub update: u64,
    pub episodes: u64,
    pub phase: Phase,
}

impl Trainer {
    pub fn new(config: &ExperimentConfig, env: &EnvConfig, seed: u64, heads: HeadToggles) -> Result<Self> {
        config.hyper.validate()?;
        let spec = env.spec()?;
        let layout = AgentLayout {
            obs_dim: spec.observation.dim,
            action: spec.action.clone(),
            hidden: config.hidden_sizes.clone(),
            architecture: config.architecture,
        };
        let params = AgentParams::init(
            &layout,
            &mut rng_stream(seed, STREAM_INIT),
            &mut rng_stream(seed, STREAM_HEADS),
        )?;
        let actors = (0..config.hyper.num_actors)
            .map(|i| {
                Ok(Actor::new(
                    make_env(&env.id, &env.params)?,
                    rng_stream(seed, STREAM_ACTOR_BASE + i as u64),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            learner: Learner::new(params),
            actors,
            shuffle_rng: rng_stream(seed, STREAM_SHUFFLE),
            hyper: config.hyper.clone(),
            features: config.features.clone(),
            heads,
            window: VecDeque::with_capacity(RETURN_WINDOW),
            step: 0,
            update: 0,
            episodes: 0,
            phase: Phase::Single,
        })
    }

    pub fn heads(&self) -> HeadToggles {
        self.heads
    }

    pub fn mean_return(&self) -> Option<f64> {
        (!self.window.is_empty()).then(|| self.window.iter().sum::<f64>() / self.window.len() as f64)
    }

    /// Collect, estimate, update. Returns this update's record.
    pub fn iterate(&mut self) -> Result<MetricsRecord> {
        let start = Instant::now();
        let mut batch = collect_rollout(&mut self.actors, &self.learner.params, self.hyper.horizon)?;
        batch.advantages = compute_gae(&batch, self.hyper.gamma, self.hyper.lambda);
        batch.returns = compute_returns(&batch);
        let segments = segment_rollout(&batch);
        let targets = build_merl_targets(&batch, &segments);
        let stats = update(
            &batch,
            &targets,
            &mut self.learner,
            &self.hyper,
            self.heads,
            &self.features,
            &mut self.shuffle_rng,
        )?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        for r in &batch.episode_returns {
            if self.window.len() == RETURN_WINDOW {
                self.window.pop_front();
            }
            self.window.push_back(*r);
        }
        self.episodes += batch.episode_returns.len() as u64;
        self.step += batch.len() as u64;
        self.update += 1;
        Ok(MetricsRecord {
            step: self.step,
            update: self.update,
            phase: self.phase,
            mean_return: self.mean_return(),
            episodes: self.episodes,
            stats,
            vex: vex_stats(&batch.returns, &batch.values, &segments),
            wall_ms,
        })
    }

    /// Swaps every actor onto `env` without touching parameters or
    /// optimiser state. The return window restarts.
    pub fn swap_env(&mut self, env: &EnvConfig) -> Result<()> {
        let current = self.actors[0].spec();
        let next = env.spec()?;
        check_compatible(&current, &next)?;
        for actor in &mut self.actors {
            actor.swap_env(make_env(&env.id, &env.params)?);
        }
        self.window.clear();
        self.episodes = 0;
        self.phase = Phase::Post;
        Ok(())
    }

    /// Hash of parameters and optimiser state.
    pub fn param_hash(&self) -> String {
        format!(
            "{}:{}",
            self.learner.params.fingerprint(),
            self.learner.optim.fingerprint()
        )
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            update: self.update,
            step: self.step,
            learner: self.learner.clone(),
        };
        let text = serde_json::to_string(&ck)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Loads the learner from a checkpoint written by a [`Trainer`].
pub fn load_checkpoint(path: &Path) -> Result<Learner> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} is not supported",
            ck.version
        )));
    }
    ck.learner.params.validate()?;
    Ok(ck.learner)
}

fn check_compatible(a: &crate::envs::EnvSpec, b: &crate::envs::EnvSpec) -> Result<()> {
    if a.observation != b.observation || a.action != b.action {
        return Err(Error::Config(format!(
            "environments differ in observation or action spec: {:?}/{:?} vs {:?}/{:?}",
            a.observation, a.action, b.observation, b.action
        )));
    }
    Ok(())
}

/// `{task}__{variant}__seed{seed}`.
pub fn run_stem(task: &str, heads: HeadToggles, seed: u64) -> String {
    format!("{task}__{}__seed{seed}", heads.name())
}

/// Writes metrics lines and the timing sidecar for one run.
struct RunWriter {
    metrics_path: PathBuf,
    metrics: BufWriter<File>,
    timing_path: PathBuf,
    timing: BufWriter<File>,
}

impl RunWriter {
    fn create(dir: &Path, stem: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let metrics_path = dir.join(format!("{stem}.metrics.jsonl"));
        let timing_path = dir.join(format!("{stem}.timing.jsonl"));
        let _ = std::fs::remove_file(dir.join(format!("{stem}.FAILED")));
        let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
        Ok(Self {
            metrics: open(&metrics_path)?,
            timing: open(&timing_path)?,
            metrics_path,
            timing_path,
        })
    }

    fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(rec)?;
        writeln!(self.metrics, "{line}").map_err(|e| Error::io(&self.metrics_path, e))?;
        let t = serde_json::to_string(&TimingRecord {
            update: rec.update,
            wall_ms: rec.wall_ms,
        })?;
        writeln!(self.timing, "{t}").map_err(|e| Error::io(&self.timing_path, e))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.metrics.flush().map_err(|e| Error::io(&self.metrics_path, e))?;
        self.timing.flush().map_err(|e| Error::io(&self.timing_path, e))?;
        Ok(self.metrics_path)
    }
}

fn write_failure(dir: &Path, stem: &str, err: &Error) {
    let path = dir.join(format!("{stem}.FAILED"));
    if let Err(e) = std::fs::write(&path, format!("{err}\n")) {
        log::error!("could not write failure marker {}: {e}", path.display());
    }
}

/// Where one run ended up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub stem: String,
    pub metrics_path: PathBuf,
    pub updates: u64,
    pub final_mean_return: Option<f64>,
}

/// Drives `trainer` for `updates` iterations, streaming records to `dir`.
/// On error the metrics written so far stay valid and a `.FAILED` marker
/// holds the message.
fn drive(
    trainer: &mut Trainer,
    config: &ExperimentConfig,
    dir: &Path,
    stem: &str,
    updates: u64,
    step_offset: u64,
    mut at_update: impl FnMut(&mut Trainer) -> Result<()>,
) -> Result<RunOutcome> {
    let mut w = RunWriter::create(dir, stem)?;
    let mut last = None;
    let result = (|| {
        for _ in 0..updates {
            at_update(trainer)?;
            let mut rec = trainer.iterate()?;
            rec.step += step_offset;
            w.write(&rec)?;
            last = rec.mean_return;
            if let Some(k) = config.checkpoint_every {
                if trainer.update.is_multiple_of(k) {
                    trainer.save_checkpoint(&dir.join(format!("{stem}.update{}.ckpt.json", trainer.update)))?;
                }
            }
        }
        Ok(())
    })();
    let path = w.finish()?;
    match result {
        Ok(()) => Ok(RunOutcome {
            stem: stem.to_string(),
            metrics_path: path,
            updates: trainer.update,
            final_mean_return: last,
        }),
        Err(e) => {
            write_failure(dir, stem, &e);
            Err(e)
        }
    }
}

/// One seeded single-task run with the given heads.
pub fn run_experiment(config: &ExperimentConfig, seed: u64, heads: HeadToggles) -> Result<RunOutcome> {
    config.validate()?;
    let stem = run_stem(&config.env.id, heads, seed);
    let mut trainer = Trainer::new(config, &config.env, seed, heads)?;
    log::info!("run {stem}: {} updates", config.hyper.num_updates());
    drive(
        &mut trainer,
        config,
        &config.out_dir,
        &stem,
        config.hyper.num_updates(),
        0,
        |_| Ok(()),
    )
}

/// Result of one cell of a run grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub variant: String,
    pub seed: u64,
    pub outcome: Option<RunOutcome>,
    pub error: Option<String>,
}

fn isolated<F: FnOnce() -> Result<RunOutcome>>(f: F) -> std::result::Result<RunOutcome, String> {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(Ok(o)) => Ok(o),
        Ok(Err(e)) => Err(e.to_string()),
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

/// All four head combinations for every seed. A failing run is recorded and
/// the grid continues.
pub fn run_ablation(config: &ExperimentConfig) -> Result<Vec<GridEntry>> {
    config.validate()?;
    let mut entries = Vec::new();
    for heads in HeadToggles::VARIANTS {
        for &seed in &config.seeds {
            let res = isolated(|| run_experiment(config, seed, heads));
            if let Err(e) = &res {
                log::error!("{}: {e}", run_stem(&config.env.id, heads, seed));
            }
            entries.push(GridEntry {
                variant: heads.name().to_string(),
                seed,
                error: res.as_ref().err().cloned(),
                outcome: res.ok(),
            });
        }
    }
    Ok(entries)
}

/// Continuity evidence for one transfer arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub variant: String,
    pub seed: u64,
    pub switch_step: u64,
    pub switch_update: u64,
    pub hash_before: String,
    pub hash_after: String,
    pub continuous: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source: String,
    pub target: String,
    pub switches: Vec<SwitchRecord>,
    pub runs: Vec<GridEntry>,
    pub controls: Vec<GridEntry>,
}

/// Trains on `env`, silently swaps to `transfer_env` at the switch step,
/// and trains from scratch on the second task over the post-switch budget.
/// Runs the configured heads and the `none` arm for every seed.
pub fn run_transfer(config: &ExperimentConfig) -> Result<TransferReport> {
    config.validate()?;
    let target = config
        .transfer_env
        .clone()
        .ok_or_else(|| Error::Config("transfer needs `transfer_env`".into()))?;
    check_compatible(&config.env.spec()?, &target.spec()?)?;

    let total = config.hyper.num_updates();
    let switch_step = config.effective_switch_step();
    let switch_update = switch_step / config.hyper.batch_size() as u64;
    let mut arms = vec![config.heads];
    if config.heads != HeadToggles::NONE {
        arms.push(HeadToggles::NONE);
    }
    let task = format!("{}_to_{}", config.env.id, target.id);
    let control_task = format!("{}_control", target.id);
    let mut report = TransferReport {
        source: config.env.id.clone(),
        target: target.id.clone(),
        ..TransferReport::default()
    };

    for &heads in &arms {
        for &seed in &config.seeds {
            let stem = run_stem(&task, heads, seed);
            let mut switch = None;
            let res = isolated(|| {
                let mut trainer = Trainer::new(config, &config.env, seed, heads)?;
                trainer.phase = Phase::Pre;
                drive(&mut trainer, config, &config.out_dir, &stem, total, 0, |tr| {
                    if tr.update == switch_update && tr.phase == Phase::Pre {
                        let before = tr.param_hash();
                        tr.swap_env(&target)?;
                        let after = tr.param_hash();
                        switch = Some(SwitchRecord {
                            variant: heads.name().into(),
                            seed,
                            switch_step: tr.step,
                            switch_update: tr.update,
                            continuous: before == after,
                            hash_before: before,
                            hash_after: after,
                        });
                    }
                    Ok(())
                })
            });
            report.switches.extend(switch);
            report.runs.push(GridEntry {
                variant: heads.name().into(),
                seed,
                error: res.as_ref().err().cloned(),
                outcome: res.ok(),
            });

            let stem = run_stem(&control_task, heads, seed);
            let res = isolated(|| {
                let mut trainer = Trainer::new(config, &target, seed, heads)?;
                trainer.phase = Phase::Post;
                drive(
                    &mut trainer,
                    config,
                    &config.out_dir,
                    &stem,
                    total - switch_update,
                    switch_step,
                    |_| Ok(()),
                )
            });
            report.controls.push(GridEntry {
                variant: heads.name().into(),
                seed,
                error: res.as_ref().err().cloned(),
                outcome: res.ok(),
            });
        }
    }
    let path = config.out_dir.join("transfer_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Reads a metrics file.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
