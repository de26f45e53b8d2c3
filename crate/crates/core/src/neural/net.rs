use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math::{exp, sqrt};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
    /// Only valid on the output layer.
    Softmax,
}

impl Activation {
    fn apply(self, z: &[f64], out: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = if v > 0.0 { v } else { 0.0 };
                }
            }
            Activation::Sigmoid => {
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = sigmoid(v);
                }
            }
            Activation::Identity => out.copy_from_slice(z),
            Activation::Softmax => softmax_into(z, out),
        }
    }

    /// Turn `dL/da` (in `grad`) into `dL/dz` in place, given `z` and `a`.
    pub(crate) fn backprop(self, z: &[f64], a: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (g, &v) in grad.iter_mut().zip(z) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &p) in grad.iter_mut().zip(a) {
                    *g *= p * (1.0 - p);
                }
            }
            Activation::Identity => {}
            Activation::Softmax => {
                let inner: f64 = grad.iter().zip(a).map(|(g, p)| g * p).sum();
                for (g, &p) in grad.iter_mut().zip(a) {
                    *g = p * (*g - inner);
                }
            }
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + exp(-v))
    } else {
        let e = exp(v);
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = exp(v - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// One fully connected layer; `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn pre_activation(&self, input: &[f64], z: &mut [f64]) {
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *zo = acc;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

/// Per-sample forward record: `inputs[l]` feeds layer `l`, `pre[l]` and
/// `post[l]` are its pre- and post-activation values.
#[derive(Debug, Clone)]
pub struct Trace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    pub fn logits(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    pub(crate) fn layer_input(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }
}

/// Batch forward result: `activations[l]` is the `B x out_l` post-activation
/// matrix of layer `l`; `outputs` is the last of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub activations: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub n_rows: usize,
    pub output_dim: usize,
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Config(format!("layer {i} parameter shapes are inconsistent")));
            }
            if l.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::Config("softmax is only allowed on the output layer".into()));
            }
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(Error::Config(format!(
                    "layer {i} expects {} inputs but the previous layer emits {}",
                    l.in_dim,
                    layers[i - 1].out_dim
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|w| !w.is_finite()) {
                return Err(Error::Numeric(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { layers })
    }

    /// Rebuild a network from dims, activations and a flat parameter vector
    /// (layer by layer, weights row-major then bias).
    pub fn from_params(dims: &[usize], activations: &[Activation], params: &[f64]) -> Result<Self> {
        check_dims(dims, activations)?;
        let mut layers = Vec::with_capacity(activations.len());
        let mut off = 0;
        for (i, &act) in activations.iter().enumerate() {
            let (n_in, n_out) = (dims[i], dims[i + 1]);
            let need = n_in * n_out + n_out;
            let chunk = params.get(off..off + need).ok_or(Error::Shape {
                expected: off + need,
                got: params.len(),
            })?;
            layers.push(Dense {
                in_dim: n_in,
                out_dim: n_out,
                weights: chunk[..n_in * n_out].to_vec(),
                bias: chunk[n_in * n_out..].to_vec(),
                activation: act,
            });
            off += need;
        }
        if off != params.len() {
            return Err(Error::Shape {
                expected: off,
                got: params.len(),
            });
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Flat parameter vector, layer by layer, weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub(crate) fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                f(i, w);
                i += 1;
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward one sample, keeping every intermediate value.
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let input = post.last().map(Vec::as_slice).unwrap_or(x);
            let mut z = vec![0.0; l.out_dim];
            l.pre_activation(input, &mut z);
            let mut a = vec![0.0; l.out_dim];
            l.activation.apply(&z, &mut a);
            pre.push(z);
            post.push(a);
        }
        Ok(Trace {
            input: x.to_vec(),
            pre,
            post,
        })
    }

    /// Output of one sample.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut z = vec![0.0; l.out_dim];
            l.pre_activation(&cur, &mut z);
            let mut a = vec![0.0; l.out_dim];
            l.activation.apply(&z, &mut a);
            cur = a;
        }
        Ok(cur)
    }

    /// Pre-activation values of the output layer for one sample.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; l.out_dim];
            l.pre_activation(&cur, &mut z);
            if i == last {
                return Ok(z);
            }
            let mut a = vec![0.0; l.out_dim];
            l.activation.apply(&z, &mut a);
            cur = a;
        }
        unreachable!("network has at least one layer")
    }

    /// Forward a row-major batch (`batch.len()` must be a multiple of the
    /// input dimension).
    pub fn forward(&self, batch: &[f64]) -> Result<Forward> {
        let d = self.input_dim();
        if d == 0 || batch.len() % d != 0 {
            return Err(Error::Shape {
                expected: d,
                got: batch.len(),
            });
        }
        let n = batch.len() / d;
        let mut activations: Vec<Vec<f64>> = self
            .layers
            .iter()
            .map(|l| Vec::with_capacity(n * l.out_dim))
            .collect();
        for x in batch.chunks_exact(d) {
            let t = self.trace(x)?;
            for (acc, a) in activations.iter_mut().zip(t.post) {
                acc.extend(a);
            }
        }
        let outputs = activations.last().cloned().unwrap_or_default();
        Ok(Forward {
            activations,
            outputs,
            n_rows: n,
            output_dim: self.output_dim(),
        })
    }

    /// Index of the largest output for one sample.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_dims(dims: &[usize], activations: &[Activation]) -> Result<()> {
    if dims.len() < 2 || dims.len() != activations.len() + 1 {
        return Err(Error::Config(format!(
            "{} layer dims need {} activations, got {}",
            dims.len(),
            dims.len().saturating_sub(1),
            activations.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Config("layer dims must be positive".into()));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases.
pub fn init_net(layer_dims: &[usize], activations: &[Activation], seed: u64) -> Result<DenseNet> {
    check_dims(layer_dims, activations)?;
    let mut rng = rng_from_seed(seed);
    let layers = activations
        .iter()
        .enumerate()
        .map(|(i, &activation)| {
            let (n_in, n_out) = (layer_dims[i], layer_dims[i + 1]);
            let limit = sqrt(6.0 / (n_in + n_out) as f64);
            let weights = (0..n_in * n_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            Dense {
                in_dim: n_in,
                out_dim: n_out,
                weights,
                bias: vec![0.0; n_out],
                activation,
            }
        })
        .collect();
    DenseNet::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity2() -> DenseNet {
        DenseNet::new(vec![Dense {
            in_dim: 2,
            out_dim: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn identity_network_passes_input() {
        let f = identity2().forward(&[0.3, -1.5, 2.0, 4.0]).unwrap();
        assert_eq!(f.outputs, vec![0.3, -1.5, 2.0, 4.0]);
        assert_eq!(f.n_rows, 2);
    }

    #[test]
    fn softmax_of_equal_logits() {
        let mut net = identity2();
        net.layers_mut()[0].activation = Activation::Softmax;
        assert_eq!(net.predict(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn relu_definition() {
        let mut net = identity2();
        net.layers_mut()[0].activation = Activation::Relu;
        assert_eq!(net.predict(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(identity2().forward(&[1.0, 2.0, 3.0]), Err(Error::Shape { .. })));
        assert!(identity2().predict(&[1.0]).is_err());
    }

    #[test]
    fn softmax_must_be_last() {
        assert!(init_net(&[2, 3, 2], &[Activation::Softmax, Activation::Identity], 0).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let acts = [Activation::Relu, Activation::Softmax];
        let a = init_net(&[5, 7, 3], &acts, 11).unwrap();
        let b = init_net(&[5, 7, 3], &acts, 11).unwrap();
        assert_eq!(a, b);
        for l in a.layers() {
            assert!(l.bias.iter().all(|&b| b == 0.0));
            let limit = sqrt(6.0 / (l.in_dim + l.out_dim) as f64);
            assert!(l.weights.iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn params_round_trip() {
        let acts = [Activation::Sigmoid, Activation::Identity];
        let net = init_net(&[3, 4, 2], &acts, 2).unwrap();
        let back = DenseNet::from_params(&net.layer_dims(), &acts, &net.params()).unwrap();
        assert_eq!(net, back);
        assert!(DenseNet::from_params(&[3, 4, 2], &acts, &[0.0; 5]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(z in proptest::collection::vec(-700.0f64..700.0, 1..12)) {
            let mut out = vec![0.0; z.len()];
            softmax_into(&z, &mut out);
            let s: f64 = out.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }
}
