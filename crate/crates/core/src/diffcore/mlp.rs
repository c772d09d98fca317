use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's *output*.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// One fully-connected layer. `weight` is row-major `[out_dim x in_dim]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Weights drawn from `U(-gain/sqrt(fan_in), gain/sqrt(fan_in))`, zero bias.
    pub fn uniform_fan_in<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain / (in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn is_well_formed(&self) -> bool {
        self.weight.len() == self.in_dim * self.out_dim && self.bias.len() == self.out_dim
    }

    #[inline]
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weight.chunks_exact(self.in_dim).zip(&self.bias) {
            let mut acc = *b;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// A dense feed-forward network: `hidden_activation` after every layer but
/// the last, `output_activation` after the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Activations recorded by [`MlpParams::forward`]. `activations[0]` is the
/// input and `activations[l + 1]` the (post-activation) output of layer `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        self.activations.first().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients with the exact layout of the [`MlpParams`] they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// Validates the layer chain and that every entry is finite.
    pub fn new(layers: Vec<Dense>, hidden_activation: Activation, output_activation: Activation) -> Result<Self> {
        let params = Self {
            layers,
            hidden_activation,
            output_activation,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds a network with layer widths `sizes` (`sizes[0]` is the input
    /// width) using uniform fan-in initialisation. `output_gain` scales the
    /// last layer's bound.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!(
                "network needs at least two non-zero widths, got {sizes:?}"
            )));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i + 1 == n { output_gain } else { 1.0 };
                Dense::uniform_fan_in(w[0], w[1], gain, rng)
            })
            .collect();
        Self::new(layers, hidden_activation, output_activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.is_well_formed() {
                return Err(Error::Config(format!(
                    "layer {i}: buffers do not match {}x{}",
                    layer.out_dim, layer.in_dim
                )));
            }
            if i > 0 && self.layers[i - 1].out_dim != layer.in_dim {
                return Err(Error::Config(format!(
                    "layer {i}: input width {} does not chain with previous output width {}",
                    layer.in_dim,
                    self.layers[i - 1].out_dim
                )));
            }
        }
        if let Some(idx) = self.values().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite parameter at {}",
                self.locate(idx)
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "input has length {} but the network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Evaluates the network and records what [`MlpParams::backward`] needs.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let act = self.activation_for(l);
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.affine(&activations[l], &mut out);
            if act != Activation::Identity {
                out.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            activations.push(out);
        }
        let output = activations[activations.len() - 1].clone();
        Ok((output, ForwardCache { activations }))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let act = self.activation_for(l);
            layer.affine(&cur, &mut next);
            if act != Activation::Identity {
                next.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let acts = &cache.activations;
        let matches = acts.len() == self.layers.len() + 1
            && acts[0].len() == self.input_dim()
            && self
                .layers
                .iter()
                .zip(&acts[1..])
                .all(|(layer, a)| a.len() == layer.out_dim);
        if matches {
            Ok(())
        } else {
            Err(Error::Usage("forward cache was not produced by this network".into()))
        }
    }

    /// Exact gradients of the scalar whose derivative w.r.t. the output is
    /// `output_grad`. Returns the parameter gradients and the input gradient.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(ParamGrads, Vec<f64>)> {
        let mut grads = ParamGrads::zeros_like(self);
        let input_grad = self.backward_accumulate(cache, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`MlpParams::backward`] but adds into an existing gradient buffer.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut ParamGrads,
    ) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::Usage(format!(
                "output gradient has length {} but the network outputs {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if !grads.is_congruent(self) {
            return Err(Error::Usage("gradient buffer does not match the network layout".into()));
        }
        let acts = &cache.activations;
        let last = self.layers.len() - 1;
        let out_act = self.output_activation;
        let mut delta: Vec<f64> = output_grad
            .iter()
            .zip(&acts[last + 1])
            .map(|(g, y)| g * out_act.derivative_from_output(*y))
            .collect();
        let mut input_grad = Vec::new();
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let x = &acts[l];
            let g = &mut grads.layers[l];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if *d != 0.0 {
                    let row = &mut g.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += d * xi;
                    }
                }
            }
            input_grad.clear();
            input_grad.resize(layer.in_dim, 0.0);
            for (row, d) in layer.weight.chunks_exact(layer.in_dim).zip(&delta) {
                for (ig, w) in input_grad.iter_mut().zip(row) {
                    *ig += w * d;
                }
            }
            if l > 0 {
                let act = self.hidden_activation;
                delta = input_grad
                    .iter()
                    .zip(x)
                    .map(|(g, y)| g * act.derivative_from_output(*y))
                    .collect();
            }
        }
        Ok(input_grad)
    }

    /// Parameters in flat order: for each layer, row-major weights then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Usage(format!(
                "flat vector has {} entries, network has {}",
                flat.len(),
                self.num_params()
            )));
        }
        self.values_mut().zip(flat).for_each(|(p, v)| *p = *v);
        Ok(())
    }

    /// Human-readable location of flat index `idx`, e.g. `layer 1 weight[2, 0]`.
    pub fn locate(&self, mut idx: usize) -> String {
        for (l, layer) in self.layers.iter().enumerate() {
            if idx < layer.weight.len() {
                return format!("layer {l} weight[{}, {}]", idx / layer.in_dim, idx % layer.in_dim);
            }
            idx -= layer.weight.len();
            if idx < layer.bias.len() {
                return format!("layer {l} bias[{idx}]");
            }
            idx -= layer.bias.len();
        }
        format!("out of range (+{idx})")
    }
}

impl ParamGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn is_congruent(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.in_dim == p.in_dim && g.out_dim == p.out_dim && g.is_well_formed())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn scale(&mut self, k: f64) {
        self.values_mut().for_each(|g| *g *= k);
    }

    pub fn norm_sq(&self) -> f64 {
        self.values().map(|g| g * g).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(weight: Vec<f64>, bias: Vec<f64>, in_dim: usize, act: Activation) -> MlpParams {
        let out_dim = bias.len();
        MlpParams::new(
            vec![Dense {
                in_dim,
                out_dim,
                weight,
                bias,
            }],
            Activation::Tanh,
            act,
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, Activation::Identity);
        let (out, _) = net.forward(&[1.0, -2.0]).unwrap();
        assert_eq!(out, vec![1.0, -2.0]);
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = MlpParams::init(&[3, 2], Activation::Tanh, Activation::Identity, 1.0, &mut rng).unwrap();
        net.layers[0].bias = vec![0.25, -1.5];
        assert_eq!(net.predict(&[0.0; 3]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn two_two_one_matches_hand_evaluation() {
        // h = tanh(W1 x + b1), y = w2 . h + b2, evaluated term by term.
        let net = MlpParams::new(
            vec![
                Dense {
                    in_dim: 2,
                    out_dim: 2,
                    weight: vec![0.5, -0.25, 0.1, 0.3],
                    bias: vec![0.05, -0.1],
                },
                Dense {
                    in_dim: 2,
                    out_dim: 1,
                    weight: vec![0.7, -1.2],
                    bias: vec![0.2],
                },
            ],
            Activation::Tanh,
            Activation::Identity,
        )
        .unwrap();
        let x = [0.8, -0.6];
        let h0 = (0.5f64 * 0.8 + -0.25 * -0.6 + 0.05).tanh();
        let h1 = (0.1f64 * 0.8 + 0.3 * -0.6 - 0.1).tanh();
        let expected = 0.7 * h0 - 1.2 * h1 + 0.2;
        let (out, _) = net.forward(&x).unwrap();
        assert!((out[0] - expected).abs() < 1e-15);
        assert!((expected - 0.8127850811685096).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = single(vec![1.0, 1.0], vec![0.0], 2, Activation::Identity);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn new_rejects_broken_chain_and_non_finite() {
        let a = Dense::zeros(2, 3);
        let b = Dense::zeros(4, 1);
        assert!(MlpParams::new(vec![a.clone(), b], Activation::Tanh, Activation::Identity).is_err());
        let mut bad = Dense::zeros(2, 1);
        bad.bias[0] = f64::NAN;
        assert!(MlpParams::new(vec![bad], Activation::Tanh, Activation::Identity).is_err());
    }

    #[test]
    fn linear_backward() {
        let net = single(vec![2.0], vec![0.5], 1, Activation::Identity);
        let (_, cache) = net.forward(&[3.0]).unwrap();
        let (g, dx) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.layers[0].weight, vec![3.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert_eq!(dx, vec![2.0]);
    }

    #[test]
    fn tanh_backward_at_origin() {
        let net = single(vec![1.0], vec![0.0], 1, Activation::Tanh);
        let (_, cache) = net.forward(&[0.0]).unwrap();
        let (g, _) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.layers[0].weight, vec![0.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let a = single(vec![1.0, 1.0], vec![0.0], 2, Activation::Identity);
        let b = single(vec![1.0, 1.0, 1.0], vec![0.0], 3, Activation::Identity);
        let (_, cache) = a.forward(&[1.0, 2.0]).unwrap();
        assert!(matches!(b.backward(&cache, &[1.0]), Err(Error::Usage(_))));
        assert!(matches!(a.backward(&cache, &[1.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn flat_round_trip_and_locate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = MlpParams::init(&[3, 4, 2], Activation::Tanh, Activation::Identity, 1.0, &mut rng).unwrap();
        let flat = net.to_flat();
        assert_eq!(flat.len(), 3 * 4 + 4 + 4 * 2 + 2);
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        net.set_flat(&doubled).unwrap();
        assert_eq!(net.to_flat(), doubled);
        assert_eq!(net.locate(0), "layer 0 weight[0, 0]");
        assert_eq!(net.locate(5), "layer 0 weight[1, 2]");
        assert_eq!(net.locate(12), "layer 0 bias[0]");
        assert_eq!(net.locate(16), "layer 1 weight[0, 0]");
    }
}
