use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::Action;
use crate::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Action distribution produced by the policy for one observation.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicyDistribution {
    /// Diagonal Gaussian with a state-independent `log_std`.
    Gaussian {
        mean: Vec<f64>,
        log_std: Vec<f64>,
    },
    Categorical {
        logits: Vec<f64>,
    },
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl PolicyDistribution {
    pub fn num_outputs(&self) -> usize {
        match self {
            PolicyDistribution::Gaussian { mean, .. } => mean.len(),
            PolicyDistribution::Categorical { logits } => logits.len(),
        }
    }

    /// Category probabilities; empty for the Gaussian case.
    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            PolicyDistribution::Gaussian { .. } => Vec::new(),
            PolicyDistribution::Categorical { logits } => log_softmax(logits).into_iter().map(f64::exp).collect(),
        }
    }

    /// Draws an action and returns it with its log-probability. Gaussian
    /// samples are not clipped; environments clip at their boundary.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Action, f64) {
        let action = match self {
            PolicyDistribution::Gaussian { mean, log_std } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, ls)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + ls.exp() * z
                    })
                    .collect(),
            ),
            PolicyDistribution::Categorical { .. } => {
                let probs = self.probabilities();
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                Action::Discrete(chosen)
            }
        };
        let lp = self.log_prob(&action).expect("sampled action matches its distribution");
        (action, lp)
    }

    fn check(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (PolicyDistribution::Gaussian { mean, .. }, Action::Continuous(a)) if a.len() == mean.len() => Ok(()),
            (PolicyDistribution::Categorical { logits }, Action::Discrete(a)) if *a < logits.len() => Ok(()),
            _ => Err(Error::Usage(format!(
                "action {action:?} does not fit a distribution with {} outputs",
                self.num_outputs()
            ))),
        }
    }

    /// Exact log density (Gaussian) or log mass (categorical).
    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        self.check(action)?;
        Ok(match (self, action) {
            (PolicyDistribution::Gaussian { mean, log_std }, Action::Continuous(a)) => a
                .iter()
                .zip(mean)
                .zip(log_std)
                .map(|((x, m), ls)| {
                    let z = (x - m) / ls.exp();
                    -0.5 * z * z - ls - HALF_LN_2PI
                })
                .sum(),
            (PolicyDistribution::Categorical { logits }, Action::Discrete(a)) => log_softmax(logits)[*a],
            _ => unreachable!(),
        })
    }

    /// Gradient of [`log_prob`](Self::log_prob) with respect to the policy
    /// outputs (means or logits) and to `log_std` (empty when categorical).
    pub fn log_prob_grad(&self, action: &Action) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(action)?;
        Ok(match (self, action) {
            (PolicyDistribution::Gaussian { mean, log_std }, Action::Continuous(a)) => {
                let mut d_mean = Vec::with_capacity(mean.len());
                let mut d_log_std = Vec::with_capacity(mean.len());
                for ((x, m), ls) in a.iter().zip(mean).zip(log_std) {
                    let inv_var = (-2.0 * ls).exp();
                    let diff = x - m;
                    d_mean.push(diff * inv_var);
                    d_log_std.push(diff * diff * inv_var - 1.0);
                }
                (d_mean, d_log_std)
            }
            (PolicyDistribution::Categorical { .. }, Action::Discrete(a)) => {
                let mut d = self.probabilities();
                d.iter_mut().for_each(|p| *p = -*p);
                d[*a] += 1.0;
                (d, Vec::new())
            }
            _ => unreachable!(),
        })
    }

    pub fn entropy(&self) -> f64 {
        match self {
            PolicyDistribution::Gaussian { log_std, .. } => log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum(),
            PolicyDistribution::Categorical { logits } => {
                let lp = log_softmax(logits);
                -lp.iter().map(|l| l.exp() * l).sum::<f64>()
            }
        }
    }

    /// Gradient of [`entropy`](Self::entropy) with respect to the policy
    /// outputs and `log_std`.
    pub fn entropy_grad(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            PolicyDistribution::Gaussian { mean, log_std } => (vec![0.0; mean.len()], vec![1.0; log_std.len()]),
            PolicyDistribution::Categorical { logits } => {
                let lp = log_softmax(logits);
                let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                (lp.iter().map(|l| -l.exp() * (l + h)).collect(), Vec::new())
            }
        }
    }
}
