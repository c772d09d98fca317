//! Policy and value networks with the auxiliary heads.
//!
//! In the `separate` architecture the policy has its own trunk and the value
//! trunk ends in an embedding of width `hidden.last()`. The value head, the
//! variance-explained head (`ve_head`, one output) and the next-state head
//! (`fs_head`, `S` outputs) are each a single linear layer reading that
//! embedding. In the `shared_trunk` architecture one trunk feeds the policy
//! head as well, so head gradients also shape the policy's features.
//!
//! Heads are read-only taps: attaching or removing them never changes the
//! value or the policy output.

mod distribution;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use distribution::PolicyDistribution;

use crate::diffcore::{Activation, ForwardCache, MlpParams, ParamGrads};
use crate::envs::ActionSpec;
use crate::{Error, Result};

/// Bound scale of the policy output layer at initialisation, so the initial
/// policy is close to zero-mean / uniform.
pub const POLICY_HEAD_GAIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[default]
    Separate,
    SharedTrunk,
}

/// Which auxiliary heads take part in training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeadToggles {
    pub ve: bool,
    pub fs: bool,
}

impl HeadToggles {
    pub const NONE: Self = Self { ve: false, fs: false };
    pub const ALL: Self = Self { ve: true, fs: true };
    /// The four ablation arms.
    pub const VARIANTS: [Self; 4] = [
        Self::NONE,
        Self { ve: true, fs: false },
        Self { ve: false, fs: true },
        Self::ALL,
    ];

    pub fn any(self) -> bool {
        self.ve || self.fs
    }

    pub fn name(self) -> &'static str {
        match (self.ve, self.fs) {
            (false, false) => "none",
            (true, false) => "ve",
            (false, true) => "fs",
            (true, true) => "ve_fs",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::VARIANTS.into_iter().find(|v| v.name() == name)
    }
}

/// Shape of an agent: observation width, action space, trunk widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentLayout {
    pub obs_dim: usize,
    pub action: ActionSpec,
    pub hidden: Vec<usize>,
    pub architecture: Architecture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub architecture: Architecture,
    pub action: ActionSpec,
    /// Present only in the separate architecture.
    pub policy_trunk: Option<MlpParams>,
    pub policy_head: MlpParams,
    /// Per-dimension log standard deviation; empty for discrete actions.
    pub log_std: Vec<f64>,
    /// The value trunk, or the shared trunk.
    pub value_trunk: MlpParams,
    pub value_head: MlpParams,
    pub ve_head: MlpParams,
    pub fs_head: MlpParams,
}

/// Parameter groups, one per optimiser.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// Policy trunk, policy head, `log_std`.
    Policy,
    /// Value trunk, value head, VE head, FS head.
    Value,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    PolicyTrunk,
    PolicyHead,
    LogStd,
    ValueTrunk,
    ValueHead,
    VeHead,
    FsHead,
}

const PARTS: [Part; 7] = [
    Part::PolicyTrunk,
    Part::PolicyHead,
    Part::LogStd,
    Part::ValueTrunk,
    Part::ValueHead,
    Part::VeHead,
    Part::FsHead,
];

impl Part {
    fn name(self) -> &'static str {
        match self {
            Part::PolicyTrunk => "policy_trunk",
            Part::PolicyHead => "policy_head",
            Part::LogStd => "log_std",
            Part::ValueTrunk => "value_trunk",
            Part::ValueHead => "value_head",
            Part::VeHead => "ve_head",
            Part::FsHead => "fs_head",
        }
    }

    fn in_group(self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::All => true,
            ParamGroup::Policy => matches!(self, Part::PolicyTrunk | Part::PolicyHead | Part::LogStd),
            ParamGroup::Value => !matches!(self, Part::PolicyTrunk | Part::PolicyHead | Part::LogStd),
        }
    }
}

/// Outputs of a single value-trunk evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutputs {
    pub value: f64,
    pub ve_pred: f64,
    pub fs_pred: Vec<f64>,
    pub embedding: Vec<f64>,
}

/// Everything recorded by [`AgentParams::forward_train`].
#[derive(Clone, Debug)]
pub struct AgentForward {
    policy_trunk: Option<ForwardCache>,
    policy_head: ForwardCache,
    value_trunk: ForwardCache,
    value_head: ForwardCache,
    ve_head: Option<ForwardCache>,
    fs_head: Option<ForwardCache>,
    pub dist: PolicyDistribution,
    pub value: f64,
    pub ve_pred: Option<f64>,
    pub fs_pred: Option<Vec<f64>>,
}

/// Loss derivatives with respect to each network output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputGrads {
    pub policy_out: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
    pub ve: f64,
    pub fs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentGrads {
    pub policy_trunk: Option<ParamGrads>,
    pub policy_head: ParamGrads,
    pub log_std: Vec<f64>,
    pub value_trunk: ParamGrads,
    pub value_head: ParamGrads,
    pub ve_head: ParamGrads,
    pub fs_head: ParamGrads,
}

impl AgentParams {
    /// Initialises trunks and the value/policy heads from `rng`, and the
    /// auxiliary heads from `head_rng`, so the main stream is consumed the
    /// same way whatever heads are later trained.
    pub fn init<R: Rng + ?Sized, H: Rng + ?Sized>(layout: &AgentLayout, rng: &mut R, head_rng: &mut H) -> Result<Self> {
        layout.action.validate()?;
        if layout.obs_dim == 0 || layout.hidden.is_empty() || layout.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "agent needs obs_dim > 0 and non-empty non-zero hidden widths, got {} / {:?}",
                layout.obs_dim, layout.hidden
            )));
        }
        let mut trunk_sizes = vec![layout.obs_dim];
        trunk_sizes.extend(&layout.hidden);
        let embed = *layout.hidden.last().unwrap();
        let n_out = layout.action.policy_outputs();
        let trunk = |rng: &mut R| MlpParams::init(&trunk_sizes, Activation::Tanh, Activation::Tanh, 1.0, rng);
        let linear = |n_in: usize, n_out: usize, gain: f64, rng: &mut dyn rand::RngCore| {
            MlpParams::init(&[n_in, n_out], Activation::Tanh, Activation::Identity, gain, rng)
        };

        let policy_trunk = match layout.architecture {
            Architecture::Separate => Some(trunk(rng)?),
            Architecture::SharedTrunk => None,
        };
        let policy_head = linear(embed, n_out, POLICY_HEAD_GAIN, &mut RngRef(rng))?;
        let value_trunk = trunk(rng)?;
        let value_head = linear(embed, 1, 1.0, &mut RngRef(rng))?;
        let ve_head = linear(embed, 1, 1.0, &mut RngRef(head_rng))?;
        let fs_head = linear(embed, layout.obs_dim, 1.0, &mut RngRef(head_rng))?;
        let log_std = match &layout.action {
            ActionSpec::Continuous { low, .. } => vec![0.0; low.len()],
            ActionSpec::Discrete { .. } => Vec::new(),
        };
        Ok(Self {
            architecture: layout.architecture,
            action: layout.action.clone(),
            policy_trunk,
            policy_head,
            log_std,
            value_trunk,
            value_head,
            ve_head,
            fs_head,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.value_trunk.input_dim()
    }

    /// Checks that the sub-networks fit together.
    pub fn validate(&self) -> Result<()> {
        for (name, net) in self.networks() {
            net.validate().map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        self.action.validate()?;
        let embed = self.value_trunk.output_dim();
        let s = self.obs_dim();
        let policy_in = match (&self.policy_trunk, self.architecture) {
            (Some(t), Architecture::Separate) => {
                if t.input_dim() != s {
                    return Err(Error::Config("policy trunk input width differs from obs_dim".into()));
                }
                t.output_dim()
            }
            (None, Architecture::SharedTrunk) => embed,
            _ => {
                return Err(Error::Config(
                    "policy trunk presence does not match the architecture".into(),
                ))
            }
        };
        let heads_ok = self.policy_head.layers.len() == 1
            && self.policy_head.input_dim() == policy_in
            && self.policy_head.output_dim() == self.action.policy_outputs()
            && [&self.value_head, &self.ve_head, &self.fs_head]
                .iter()
                .all(|h| h.layers.len() == 1 && h.input_dim() == embed)
            && self.value_head.output_dim() == 1
            && self.ve_head.output_dim() == 1
            && self.fs_head.output_dim() == s;
        if !heads_ok {
            return Err(Error::Config(
                "head shapes do not match the trunk and observation width".into(),
            ));
        }
        let want_std = if self.action.is_continuous() {
            self.action.policy_outputs()
        } else {
            0
        };
        if self.log_std.len() != want_std || self.log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("log_std does not match the action space".into()));
        }
        Ok(())
    }

    fn networks(&self) -> Vec<(&'static str, &MlpParams)> {
        let mut nets = Vec::with_capacity(6);
        if let Some(t) = &self.policy_trunk {
            nets.push(("policy_trunk", t));
        }
        nets.extend([
            ("policy_head", &self.policy_head),
            ("value_trunk", &self.value_trunk),
            ("value_head", &self.value_head),
            ("ve_head", &self.ve_head),
            ("fs_head", &self.fs_head),
        ]);
        nets
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim() {
            return Err(Error::Config(format!(
                "observation has length {} but the agent expects {}",
                obs.len(),
                self.obs_dim()
            )));
        }
        Ok(())
    }

    fn distribution_from(&self, out: Vec<f64>) -> PolicyDistribution {
        match self.action {
            ActionSpec::Continuous { .. } => PolicyDistribution::Gaussian {
                mean: out,
                log_std: self.log_std.clone(),
            },
            ActionSpec::Discrete { .. } => PolicyDistribution::Categorical { logits: out },
        }
    }

    pub fn policy_distribution(&self, obs: &[f64]) -> Result<PolicyDistribution> {
        self.check_obs(obs)?;
        let features = match &self.policy_trunk {
            Some(t) => t.predict(obs)?,
            None => self.value_trunk.predict(obs)?,
        };
        Ok(self.distribution_from(self.policy_head.predict(&features)?))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        self.check_obs(obs)?;
        let e = self.value_trunk.predict(obs)?;
        Ok(self.value_head.predict(&e)?[0])
    }

    /// One trunk evaluation; value and both heads read the same embedding.
    pub fn value_and_heads(&self, obs: &[f64]) -> Result<HeadOutputs> {
        self.check_obs(obs)?;
        let embedding = self.value_trunk.predict(obs)?;
        Ok(HeadOutputs {
            value: self.value_head.predict(&embedding)?[0],
            ve_pred: self.ve_head.predict(&embedding)?[0],
            fs_pred: self.fs_head.predict(&embedding)?,
            embedding,
        })
    }

    /// Policy distribution and value, sharing the trunk pass when possible.
    pub fn act_and_value(&self, obs: &[f64]) -> Result<(PolicyDistribution, f64)> {
        self.check_obs(obs)?;
        let e = self.value_trunk.predict(obs)?;
        let value = self.value_head.predict(&e)?[0];
        let policy_features = match &self.policy_trunk {
            Some(t) => t.predict(obs)?,
            None => e,
        };
        let dist = self.distribution_from(self.policy_head.predict(&policy_features)?);
        Ok((dist, value))
    }

    /// Forward pass keeping every cache needed by [`Self::backward_train`].
    /// Disabled heads are not evaluated at all.
    pub fn forward_train(&self, obs: &[f64], heads: HeadToggles) -> Result<AgentForward> {
        self.check_obs(obs)?;
        let (embedding, value_trunk) = self.value_trunk.forward(obs)?;
        let (value, value_head) = self.value_head.forward(&embedding)?;
        let (policy_features, policy_trunk) = match &self.policy_trunk {
            Some(t) => {
                let (f, c) = t.forward(obs)?;
                (f, Some(c))
            }
            None => (embedding.clone(), None),
        };
        let (policy_out, policy_head) = self.policy_head.forward(&policy_features)?;
        let (ve_pred, ve_head) = if heads.ve {
            let (o, c) = self.ve_head.forward(&embedding)?;
            (Some(o[0]), Some(c))
        } else {
            (None, None)
        };
        let (fs_pred, fs_head) = if heads.fs {
            let (o, c) = self.fs_head.forward(&embedding)?;
            (Some(o), Some(c))
        } else {
            (None, None)
        };
        Ok(AgentForward {
            policy_trunk,
            policy_head,
            value_trunk,
            value_head,
            ve_head,
            fs_head,
            dist: self.distribution_from(policy_out),
            value: value[0],
            ve_pred,
            fs_pred,
        })
    }

    /// Accumulates parameter gradients for the output derivatives `g`.
    pub fn backward_train(&self, fwd: &AgentForward, g: &OutputGrads, grads: &mut AgentGrads) -> Result<()> {
        let d_policy_features =
            self.policy_head
                .backward_accumulate(&fwd.policy_head, &g.policy_out, &mut grads.policy_head)?;
        if let (Some(trunk), Some(cache), Some(tg)) =
            (&self.policy_trunk, &fwd.policy_trunk, grads.policy_trunk.as_mut())
        {
            trunk.backward_accumulate(cache, &d_policy_features, tg)?;
        }
        if !g.log_std.is_empty() {
            if g.log_std.len() != grads.log_std.len() {
                return Err(Error::Usage("log_std gradient has the wrong length".into()));
            }
            grads.log_std.iter_mut().zip(&g.log_std).for_each(|(a, b)| *a += b);
        }

        let mut d_embedding =
            self.value_head
                .backward_accumulate(&fwd.value_head, &[g.value], &mut grads.value_head)?;
        if self.policy_trunk.is_none() {
            d_embedding
                .iter_mut()
                .zip(&d_policy_features)
                .for_each(|(a, b)| *a += b);
        }
        if let Some(cache) = &fwd.ve_head {
            let d = self.ve_head.backward_accumulate(cache, &[g.ve], &mut grads.ve_head)?;
            d_embedding.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        }
        if let Some(cache) = &fwd.fs_head {
            let d = self.fs_head.backward_accumulate(cache, &g.fs, &mut grads.fs_head)?;
            d_embedding.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        }
        self.value_trunk
            .backward_accumulate(&fwd.value_trunk, &d_embedding, &mut grads.value_trunk)?;
        Ok(())
    }

    fn part_len(&self, part: Part) -> usize {
        match part {
            Part::PolicyTrunk => self.policy_trunk.as_ref().map_or(0, MlpParams::num_params),
            Part::PolicyHead => self.policy_head.num_params(),
            Part::LogStd => self.log_std.len(),
            Part::ValueTrunk => self.value_trunk.num_params(),
            Part::ValueHead => self.value_head.num_params(),
            Part::VeHead => self.ve_head.num_params(),
            Part::FsHead => self.fs_head.num_params(),
        }
    }

    fn part_net(&self, part: Part) -> Option<&MlpParams> {
        match part {
            Part::PolicyTrunk => self.policy_trunk.as_ref(),
            Part::PolicyHead => Some(&self.policy_head),
            Part::LogStd => None,
            Part::ValueTrunk => Some(&self.value_trunk),
            Part::ValueHead => Some(&self.value_head),
            Part::VeHead => Some(&self.ve_head),
            Part::FsHead => Some(&self.fs_head),
        }
    }

    fn part_net_mut(&mut self, part: Part) -> Option<&mut MlpParams> {
        match part {
            Part::PolicyTrunk => self.policy_trunk.as_mut(),
            Part::PolicyHead => Some(&mut self.policy_head),
            Part::LogStd => None,
            Part::ValueTrunk => Some(&mut self.value_trunk),
            Part::ValueHead => Some(&mut self.value_head),
            Part::VeHead => Some(&mut self.ve_head),
            Part::FsHead => Some(&mut self.fs_head),
        }
    }

    pub fn num_params(&self, group: ParamGroup) -> usize {
        PARTS
            .iter()
            .filter(|p| p.in_group(group))
            .map(|p| self.part_len(*p))
            .sum()
    }

    /// Flat parameter vector of `group`, in a fixed part order.
    pub fn to_flat(&self, group: ParamGroup) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params(group));
        for part in PARTS.into_iter().filter(|p| p.in_group(group)) {
            match self.part_net(part) {
                Some(net) => flat.extend(net.values()),
                None if part == Part::LogStd => flat.extend(&self.log_std),
                None => {}
            }
        }
        flat
    }

    pub fn set_flat(&mut self, group: ParamGroup, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params(group) {
            return Err(Error::Usage(format!(
                "flat vector has {} entries, group {group:?} has {}",
                flat.len(),
                self.num_params(group)
            )));
        }
        let mut offset = 0;
        for part in PARTS.into_iter().filter(|p| p.in_group(group)) {
            let n = self.part_len(part);
            let chunk = &flat[offset..offset + n];
            match self.part_net_mut(part) {
                Some(net) => net.set_flat(chunk)?,
                None if part == Part::LogStd => self.log_std.copy_from_slice(chunk),
                None => {}
            }
            offset += n;
        }
        Ok(())
    }

    /// Names flat index `idx` of `group`, e.g. `value_trunk layer 1 bias[3]`.
    pub fn locate(&self, group: ParamGroup, mut idx: usize) -> String {
        for part in PARTS.into_iter().filter(|p| p.in_group(group)) {
            let n = self.part_len(part);
            if idx < n {
                return match self.part_net(part) {
                    Some(net) => format!("{} {}", part.name(), net.locate(idx)),
                    None => format!("{}[{idx}]", part.name()),
                };
            }
            idx -= n;
        }
        format!("out of range (+{idx})")
    }

    /// SHA-256 over the architecture tag and every parameter's bit pattern.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}", self.architecture).as_bytes());
        for v in self.to_flat(ParamGroup::All) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

impl AgentGrads {
    pub fn zeros_like(params: &AgentParams) -> Self {
        Self {
            policy_trunk: params.policy_trunk.as_ref().map(ParamGrads::zeros_like),
            policy_head: ParamGrads::zeros_like(&params.policy_head),
            log_std: vec![0.0; params.log_std.len()],
            value_trunk: ParamGrads::zeros_like(&params.value_trunk),
            value_head: ParamGrads::zeros_like(&params.value_head),
            ve_head: ParamGrads::zeros_like(&params.ve_head),
            fs_head: ParamGrads::zeros_like(&params.fs_head),
        }
    }

    /// Flat gradient vector in the same order as [`AgentParams::to_flat`].
    pub fn to_flat(&self, group: ParamGroup) -> Vec<f64> {
        let mut flat = Vec::new();
        for part in PARTS.into_iter().filter(|p| p.in_group(group)) {
            match part {
                Part::PolicyTrunk => {
                    if let Some(t) = &self.policy_trunk {
                        flat.extend(t.values());
                    }
                }
                Part::PolicyHead => flat.extend(self.policy_head.values()),
                Part::LogStd => flat.extend(&self.log_std),
                Part::ValueTrunk => flat.extend(self.value_trunk.values()),
                Part::ValueHead => flat.extend(self.value_head.values()),
                Part::VeHead => flat.extend(self.ve_head.values()),
                Part::FsHead => flat.extend(self.fs_head.values()),
            }
        }
        flat
    }
}

/// Adapts a `?Sized` generic RNG to `&mut dyn RngCore`.
struct RngRef<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> rand::RngCore for RngRef<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn layout(arch: Architecture, action: ActionSpec) -> AgentLayout {
        AgentLayout {
            obs_dim: 3,
            action,
            hidden: vec![5, 4],
            architecture: arch,
        }
    }

    fn continuous() -> ActionSpec {
        ActionSpec::Continuous {
            low: vec![-1.0; 2],
            high: vec![1.0; 2],
        }
    }

    fn agent(arch: Architecture, action: ActionSpec, seed: u64) -> AgentParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hrng = ChaCha8Rng::seed_from_u64(seed + 1000);
        AgentParams::init(&layout(arch, action), &mut rng, &mut hrng).unwrap()
    }

    #[test]
    fn zero_policy_head_gives_uniform_logits() {
        let mut a = agent(Architecture::Separate, ActionSpec::Discrete { n: 5 }, 0);
        a.policy_head.values_mut().for_each(|v| *v = 0.0);
        let d = a.policy_distribution(&[0.3, -0.2, 0.9]).unwrap();
        assert_eq!(d, PolicyDistribution::Categorical { logits: vec![0.0; 5] });
    }

    #[test]
    fn zero_log_std_is_unit_std() {
        let a = agent(Architecture::Separate, continuous(), 0);
        let PolicyDistribution::Gaussian { log_std, .. } = a.policy_distribution(&[0.0; 3]).unwrap() else {
            panic!()
        };
        assert!(log_std.iter().all(|l| l.exp() == 1.0));
    }

    #[test]
    fn zero_heads_predict_zero() {
        let mut a = agent(Architecture::Separate, continuous(), 1);
        a.ve_head.values_mut().for_each(|v| *v = 0.0);
        a.fs_head.values_mut().for_each(|v| *v = 0.0);
        for obs in [[0.0; 3], [1.0, -2.0, 0.5]] {
            let out = a.value_and_heads(&obs).unwrap();
            assert_eq!(out.ve_pred, 0.0);
            assert_eq!(out.fs_pred, vec![0.0; 3]);
            assert_eq!(out.embedding.len(), 4);
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let a = agent(Architecture::SharedTrunk, continuous(), 2);
        assert!(matches!(a.policy_distribution(&[0.0; 2]), Err(Error::Config(_))));
        assert!(matches!(a.value_and_heads(&[0.0; 4]), Err(Error::Config(_))));
    }

    #[test]
    fn flat_round_trip_and_locate() {
        for arch in [Architecture::Separate, Architecture::SharedTrunk] {
            let mut a = agent(arch, continuous(), 3);
            a.validate().unwrap();
            let all = a.to_flat(ParamGroup::All);
            assert_eq!(
                all.len(),
                a.num_params(ParamGroup::Policy) + a.num_params(ParamGroup::Value)
            );
            let shifted: Vec<f64> = all.iter().map(|v| v + 1.0).collect();
            a.set_flat(ParamGroup::All, &shifted).unwrap();
            assert_eq!(a.to_flat(ParamGroup::All), shifted);
        }
        let a = agent(Architecture::Separate, continuous(), 3);
        assert_eq!(a.locate(ParamGroup::Value, 0), "value_trunk layer 0 weight[0, 0]");
        let n = a.num_params(ParamGroup::Policy);
        assert_eq!(a.locate(ParamGroup::Policy, n - 1), "log_std[1]");
    }

    #[test]
    fn fingerprint_tracks_every_parameter() {
        let a = agent(Architecture::Separate, continuous(), 4);
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.fs_head.layers[0].bias[2] += 1e-12;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn forward_train_matches_inference_paths() {
        for arch in [Architecture::Separate, Architecture::SharedTrunk] {
            let a = agent(arch, continuous(), 5);
            let obs = [0.2, -0.4, 0.7];
            let fwd = a.forward_train(&obs, HeadToggles::ALL).unwrap();
            let heads = a.value_and_heads(&obs).unwrap();
            assert_eq!(fwd.value, heads.value);
            assert_eq!(fwd.ve_pred, Some(heads.ve_pred));
            assert_eq!(fwd.fs_pred.as_deref(), Some(heads.fs_pred.as_slice()));
            assert_eq!(fwd.dist, a.policy_distribution(&obs).unwrap());
            let (d, v) = a.act_and_value(&obs).unwrap();
            assert_eq!((d, v), (fwd.dist.clone(), fwd.value));
            let bare = a.forward_train(&obs, HeadToggles::NONE).unwrap();
            assert_eq!(bare.value, fwd.value);
            assert!(bare.ve_pred.is_none() && bare.fs_pred.is_none());
        }
    }
}
