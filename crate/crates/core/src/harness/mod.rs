//! Configs, seeded runs, the ablation grid, the transfer protocol, seed
//! aggregation and the gradient-check suite.
//!
//! # Config file
//!
//! JSON with these keys (see [`ExperimentConfig::profile`] for defaults):
//!
//! | key | meaning |
//! |---|---|
//! | `env.id`, `env.params` | environment id and constant overrides |
//! | `transfer_env` | second task for `transfer` |
//! | `hyper.gamma`, `hyper.lambda` | discount, GAE parameter |
//! | `hyper.clip_eps` | clip range |
//! | `hyper.horizon`, `hyper.num_actors` | steps per actor per update, actor count |
//! | `hyper.epochs`, `hyper.minibatch_size`, `hyper.lr` | optimisation |
//! | `hyper.value_coef`, `hyper.c_ve`, `hyper.c_fs` | loss weights |
//! | `hyper.total_steps` | environment steps per run |
//! | `heads.ve`, `heads.fs` | auxiliary heads on/off |
//! | `seeds` | run seeds |
//! | `switch_step` | transfer switch (default `total_steps / 2`) |
//! | `out_dir` | output directory |
//! | `architecture` | `separate` or `shared_trunk` |
//! | `features.normalize_advantages`, `features.max_grad_norm`, `features.entropy_coef` | extras |
//! | `hidden_sizes` | trunk widths |
//! | `checkpoint_every` | checkpoint period in updates |
//!
//! # Outputs
//!
//! Each run writes `{task}__{variant}__seed{k}.metrics.jsonl`, one
//! [`MetricsRecord`] per update, and `{...}.timing.jsonl` with the wall time
//! of each update. Wall times live in the sidecar so that metrics files are
//! byte-identical across repeated runs. A run that aborts leaves the lines
//! written so far plus a `{...}.FAILED` file with the error.

mod aggregate;
mod config;
mod gradcheck;
mod run;

pub use aggregate::{aggregate_seeds, mean_std, parse_stem, write_summary, CurvePoint, GroupSummary, Summary};
pub use config::{EnvConfig, ExperimentConfig, PROFILES};
pub use gradcheck::{
    check_names, random_instance, run_gradcheck, GradcheckConfig, GradcheckReport, Instance, LossCheck,
};
pub use run::{
    load_checkpoint, read_metrics, rng_stream, run_ablation, run_experiment, run_stem, run_transfer, GridEntry,
    MetricsRecord, Phase, RunOutcome, SwitchRecord, TimingRecord, Trainer, TransferReport, RETURN_WINDOW,
};
