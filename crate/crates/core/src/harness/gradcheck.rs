//! Finite-difference verification of every analytic gradient.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::run::rng_stream;
use crate::agent::{AgentLayout, AgentParams, Architecture, HeadToggles, ParamGroup};
use crate::algo::{combined_loss, combined_loss_grad, Features, HyperParams, RolloutBatch};
use crate::diffcore::{finite_difference_flat, max_relative_error, Activation, MlpParams};
use crate::envs::ActionSpec;
use crate::merl::MerlTargets;
use crate::Result;

/// Ratios closer than this to `1 ± ε` are redrawn.
const KINK_MARGIN: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub instances: usize,
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub minibatch: usize,
    /// Central-difference step.
    pub h: f64,
    pub tolerance: f64,
    /// Lower bound of the relative-error denominator.
    pub floor: f64,
    /// Test fixture: adds a bias to the analytic gradient of this check.
    pub corrupt: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 50,
            obs_dim: 3,
            hidden: vec![6, 5],
            minibatch: 6,
            h: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossCheck {
    pub name: String,
    pub instances: usize,
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub checks: Vec<LossCheck>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<24} {:>4} instances  max rel err {:.3e}  {}",
                c.name,
                c.instances,
                c.max_rel_error,
                if c.passed { "ok" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            out,
            "{} (tolerance {:e})",
            if self.passed {
                "all checks passed"
            } else {
                "gradient check FAILED"
            },
            self.tolerance
        );
        out
    }
}

/// One named loss of the suite.
struct Case {
    name: &'static str,
    architecture: Architecture,
    discrete: bool,
    group: ParamGroup,
    heads: HeadToggles,
    value_coef: f64,
    c_ve: f64,
    c_fs: f64,
    entropy_coef: f64,
}

const CASES: [Case; 7] = [
    Case {
        name: "policy_clip_continuous",
        architecture: Architecture::Separate,
        discrete: false,
        group: ParamGroup::Policy,
        heads: HeadToggles::NONE,
        value_coef: 0.0,
        c_ve: 0.0,
        c_fs: 0.0,
        entropy_coef: 0.0,
    },
    Case {
        name: "policy_clip_discrete",
        architecture: Architecture::Separate,
        discrete: true,
        group: ParamGroup::Policy,
        heads: HeadToggles::NONE,
        value_coef: 0.0,
        c_ve: 0.0,
        c_fs: 0.0,
        entropy_coef: 0.0,
    },
    Case {
        name: "value_mse",
        architecture: Architecture::Separate,
        discrete: false,
        group: ParamGroup::Value,
        heads: HeadToggles::NONE,
        value_coef: 0.5,
        c_ve: 0.0,
        c_fs: 0.0,
        entropy_coef: 0.0,
    },
    Case {
        name: "ve_loss",
        architecture: Architecture::Separate,
        discrete: false,
        group: ParamGroup::Value,
        heads: HeadToggles { ve: true, fs: false },
        value_coef: 0.0,
        c_ve: 1.0,
        c_fs: 0.0,
        entropy_coef: 0.0,
    },
    Case {
        name: "fs_loss",
        architecture: Architecture::Separate,
        discrete: false,
        group: ParamGroup::Value,
        heads: HeadToggles { ve: false, fs: true },
        value_coef: 0.0,
        c_ve: 0.0,
        c_fs: 1.0,
        entropy_coef: 0.0,
    },
    Case {
        name: "combined_separate",
        architecture: Architecture::Separate,
        discrete: false,
        group: ParamGroup::All,
        heads: HeadToggles::ALL,
        value_coef: 0.5,
        c_ve: 0.5,
        c_fs: 0.01,
        entropy_coef: 0.01,
    },
    Case {
        name: "combined_shared",
        architecture: Architecture::SharedTrunk,
        discrete: true,
        group: ParamGroup::All,
        heads: HeadToggles::ALL,
        value_coef: 0.5,
        c_ve: 0.5,
        c_fs: 0.01,
        entropy_coef: 0.01,
    },
];

/// A random agent with a matching minibatch and targets.
pub struct Instance {
    pub params: AgentParams,
    pub batch: RolloutBatch,
    pub targets: MerlTargets,
    pub advantages: Vec<f64>,
    pub hyper: HyperParams,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws an instance whose ratios stay at least [`KINK_MARGIN`] away from
/// the clip boundaries and whose advantages are bounded away from 0.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    architecture: Architecture,
    discrete: bool,
    obs_dim: usize,
    hidden: &[usize],
    m: usize,
) -> Result<Instance> {
    let action = if discrete {
        ActionSpec::Discrete { n: 4 }
    } else {
        ActionSpec::Continuous {
            low: vec![-1.0; 2],
            high: vec![1.0; 2],
        }
    };
    let layout = AgentLayout {
        obs_dim,
        action,
        hidden: hidden.to_vec(),
        architecture,
    };
    let mut head_rng = rng.clone();
    head_rng.set_stream(rng.get_stream() + 1);
    let mut params = AgentParams::init(&layout, rng, &mut head_rng)?;
    params.policy_head.values_mut().for_each(|v| *v = 0.5 * normal(rng));
    params.log_std.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));

    let mut hyper = HyperParams::control();
    hyper.horizon = m;
    hyper.minibatch_size = m;
    let eps = hyper.clip_eps;

    let observations: Vec<f64> = (0..m * obs_dim).map(|_| normal(rng)).collect();
    let mut actions = Vec::with_capacity(m);
    let mut old_log_probs = Vec::with_capacity(m);
    for t in 0..m {
        let dist = params.policy_distribution(&observations[t * obs_dim..(t + 1) * obs_dim])?;
        let (a, lp) = dist.sample(rng);
        let ratio = loop {
            let r: f64 = rng.random_range(0.5..1.5);
            if (r - 1.0 - eps).abs() > KINK_MARGIN && (r - 1.0 + eps).abs() > KINK_MARGIN {
                break r;
            }
        };
        actions.push(a);
        old_log_probs.push(lp - ratio.ln());
    }
    let advantages: Vec<f64> = (0..m)
        .map(|_| {
            let a: f64 = normal(rng);
            a.signum() * (a.abs() + 0.05)
        })
        .collect();
    let next_observations: Vec<f64> = (0..m * obs_dim).map(|_| normal(rng)).collect();
    let returns: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
    let terminal: Vec<bool> = (0..m).map(|_| rng.random_bool(0.2)).collect();
    let batch = RolloutBatch {
        obs_dim,
        horizon: m,
        num_actors: 1,
        observations,
        actions,
        old_log_probs,
        rewards: vec![0.0; m],
        values: vec![0.0; m],
        terminal: terminal.clone(),
        truncated: vec![false; m],
        next_observations: next_observations.clone(),
        bootstrap_values: vec![0.0; m],
        advantages: advantages.clone(),
        returns,
        episode_returns: Vec::new(),
    };
    let targets = MerlTargets {
        obs_dim,
        vex: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        vex_valid: (0..m).map(|_| rng.random_bool(0.7)).collect(),
        next_obs: next_observations,
        fs_valid: terminal.iter().map(|t| !t).collect(),
    };
    Ok(Instance {
        params,
        batch,
        targets,
        advantages,
        hyper,
    })
}

fn check_case(case: &Case, cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<LossCheck> {
    let mut max_err: f64 = 0.0;
    let mut checked = 0;
    let corrupt = cfg.corrupt.as_deref() == Some(case.name);
    for _ in 0..cfg.instances {
        let mut inst = random_instance(
            rng,
            case.architecture,
            case.discrete,
            cfg.obs_dim,
            &cfg.hidden,
            cfg.minibatch,
        )?;
        inst.hyper.value_coef = case.value_coef;
        inst.hyper.c_ve = case.c_ve;
        inst.hyper.c_fs = case.c_fs;
        let features = Features {
            normalize_advantages: false,
            max_grad_norm: None,
            entropy_coef: case.entropy_coef,
        };
        let idx: Vec<usize> = (0..cfg.minibatch).collect();
        let (_, grads) = combined_loss_grad(
            &inst.batch,
            &inst.targets,
            &inst.params,
            &idx,
            &inst.advantages,
            &inst.hyper,
            case.heads,
            &features,
        )?;
        let mut analytic = grads.to_flat(case.group);
        if corrupt {
            analytic[0] += 1e-3;
        }
        let x0 = inst.params.to_flat(case.group);
        let mut probe = inst.params.clone();
        let numeric = finite_difference_flat(
            |x| {
                probe.set_flat(case.group, x).expect("same group layout");
                combined_loss(
                    &inst.batch,
                    &inst.targets,
                    &probe,
                    &idx,
                    &inst.advantages,
                    &inst.hyper,
                    case.heads,
                    &features,
                )
                .map(|b| b.total)
                .unwrap_or(f64::NAN)
            },
            &x0,
            cfg.h,
        )?;
        max_err = max_err.max(max_relative_error(&analytic, &numeric, cfg.floor));
        checked += x0.len();
    }
    Ok(LossCheck {
        name: case.name.to_string(),
        instances: cfg.instances,
        params_checked: checked,
        max_rel_error: max_err,
        passed: max_err <= cfg.tolerance,
    })
}

fn check_mlp(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<LossCheck> {
    let name = "mlp_mse";
    let mut max_err: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..cfg.instances {
        let net = MlpParams::init(&[3, 4, 2], Activation::Tanh, Activation::Identity, 1.0, rng)?;
        let x: Vec<f64> = (0..3).map(|_| normal(rng)).collect();
        let y: Vec<f64> = (0..2).map(|_| normal(rng)).collect();
        let loss = |p: &MlpParams| {
            let out = p.predict(&x).expect("fixed shapes");
            out.iter().zip(&y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / 2.0
        };
        let (out, cache) = net.forward(&x)?;
        let g: Vec<f64> = out.iter().zip(&y).map(|(o, t)| o - t).collect();
        let (grads, _) = net.backward(&cache, &g)?;
        let mut analytic = grads.to_flat();
        if cfg.corrupt.as_deref() == Some(name) {
            analytic[0] += 1e-3;
        }
        let numeric = crate::diffcore::finite_difference_gradient(loss, &net, cfg.h)?.to_flat();
        max_err = max_err.max(max_relative_error(&analytic, &numeric, cfg.floor));
        checked += analytic.len();
    }
    Ok(LossCheck {
        name: name.to_string(),
        instances: cfg.instances,
        params_checked: checked,
        max_rel_error: max_err,
        passed: max_err <= cfg.tolerance,
    })
}

/// Names of every check, in report order.
pub fn check_names() -> Vec<&'static str> {
    std::iter::once("mlp_mse").chain(CASES.iter().map(|c| c.name)).collect()
}

/// Runs the whole suite. Each check draws from its own random stream.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut checks = vec![check_mlp(cfg, &mut rng_stream(cfg.seed, 0))?];
    for (i, case) in CASES.iter().enumerate() {
        checks.push(check_case(case, cfg, &mut rng_stream(cfg.seed, 10 * (i as u64 + 1)))?);
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        checks,
        passed,
    })
}
