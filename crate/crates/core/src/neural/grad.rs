use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::loss::{check_finite, LossSpec, Target, Targets};
use super::net::{DenseNet, Trace};
use crate::math::l2_norm;
use crate::{Error, Result};

/// Gradients for every parameter of a [`DenseNet`], stored flat in the
/// network's parameter order (layer by layer, weights row-major then bias).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    shapes: Vec<(usize, usize)>,
    data: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNet) -> Self {
        let shapes: Vec<_> = net.layers().iter().map(|l| (l.out_dim, l.in_dim)).collect();
        Self {
            data: vec![0.0; net.n_params()],
            shapes,
        }
    }

    /// Wrap a flat vector as gradients shaped like `net`.
    pub fn from_flat(net: &DenseNet, data: Vec<f64>) -> Result<Self> {
        if data.len() != net.n_params() {
            return Err(Error::Shape {
                expected: net.n_params(),
                got: data.len(),
            });
        }
        let mut g = Self::zeros_like(net);
        g.data = data;
        Ok(g)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(weight, bias)` gradients of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off: usize = self.shapes[..l].iter().map(|(o, i)| o * i + o).sum();
        let (o, i) = self.shapes[l];
        (
            &self.data[off..off + o * i],
            &self.data[off + o * i..off + o * i + o],
        )
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.data)
    }

    pub fn is_congruent(&self, other: &GradientSet) -> bool {
        self.shapes == other.shapes
    }

    pub(crate) fn matches_net(&self, net: &DenseNet) -> bool {
        self.shapes.len() == net.layers().len()
            && self
                .shapes
                .iter()
                .zip(net.layers())
                .all(|(&(o, i), l)| o == l.out_dim && i == l.in_dim)
    }

    pub(crate) fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn divide(&mut self, denom: f64) {
        for a in &mut self.data {
            *a /= denom;
        }
    }
}

/// Backpropagate `grad_out = dL/d(output)` through `net` for one traced
/// sample, adding parameter gradients into `acc`. Returns `dL/d(input)`.
pub(crate) fn backward_into(
    net: &DenseNet,
    trace: &Trace,
    mut grad_out: Vec<f64>,
    acc: &mut [f64],
) -> Vec<f64> {
    let layers = net.layers();
    let mut offsets = Vec::with_capacity(layers.len());
    let mut off = 0;
    for l in layers {
        offsets.push(off);
        off += l.n_params();
    }
    for (li, layer) in layers.iter().enumerate().rev() {
        layer
            .activation
            .backprop(&trace.pre[li], &trace.post[li], &mut grad_out);
        let delta = grad_out;
        let input = trace.layer_input(li);
        let base = offsets[li];
        let (n_in, n_out) = (layer.in_dim, layer.out_dim);
        let (gw, rest) = acc[base..base + n_in * n_out + n_out].split_at_mut(n_in * n_out);
        for o in 0..n_out {
            let d = delta[o];
            rest[o] += d;
            if d != 0.0 {
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
        }
        let mut prev = vec![0.0; n_in];
        for o in 0..n_out {
            let d = delta[o];
            if d != 0.0 {
                let row = &layer.weights[o * n_in..(o + 1) * n_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
        }
        grad_out = prev;
    }
    grad_out
}

/// Gradient of the unaveraged loss of one sample, plus that loss.
pub fn sample_gradient(
    net: &DenseNet,
    x: &[f64],
    target: Target<'_>,
    spec: &LossSpec,
) -> Result<(GradientSet, f64)> {
    let trace = net.trace(x)?;
    let loss = spec.sample_loss(trace.output(), target)?;
    let grad_out = spec.output_grad(trace.output(), target)?;
    let mut g = GradientSet::zeros_like(net);
    backward_into(net, &trace, grad_out, &mut g.data);
    check_finite(&g.data)?;
    Ok((g, loss))
}

fn batch_rows(net: &DenseNet, batch: &[f64], targets: Targets<'_>) -> Result<usize> {
    let d = net.input_dim();
    if batch.len() % d != 0 {
        return Err(Error::Shape {
            expected: d,
            got: batch.len(),
        });
    }
    let n = batch.len() / d;
    let t = targets.len(net.output_dim());
    if t != n {
        return Err(Error::Shape { expected: n, got: t });
    }
    if n == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    Ok(n)
}

/// One [`GradientSet`] per row of `batch`.
pub fn per_sample_gradients(
    net: &DenseNet,
    batch: &[f64],
    targets: Targets<'_>,
    spec: &LossSpec,
) -> Result<Vec<GradientSet>> {
    let n = batch_rows(net, batch, targets)?;
    let d = net.input_dim();
    (0..n)
        .map(|i| {
            sample_gradient(net, &batch[i * d..(i + 1) * d], targets.get(i, net.output_dim()), spec)
                .map(|(g, _)| g)
        })
        .collect()
}

/// Gradient of the mean loss, summed over samples in row order and then
/// divided by the batch size. Also returns the mean loss.
pub fn mean_gradient(
    net: &DenseNet,
    batch: &[f64],
    targets: Targets<'_>,
    spec: &LossSpec,
) -> Result<(GradientSet, f64)> {
    let n = batch_rows(net, batch, targets)?;
    let d = net.input_dim();
    let mut sum = GradientSet::zeros_like(net);
    let mut loss = 0.0;
    for i in 0..n {
        let (g, l) = sample_gradient(
            net,
            &batch[i * d..(i + 1) * d],
            targets.get(i, net.output_dim()),
            spec,
        )?;
        sum.add_assign(&g);
        loss += l;
    }
    sum.divide(n as f64);
    Ok((sum, loss / n as f64))
}

/// `theta <- theta - lr * grad`, elementwise.
pub fn sgd_step(net: &mut DenseNet, grad: &GradientSet, lr: f64) -> Result<()> {
    if !grad.matches_net(net) {
        return Err(Error::Shape {
            expected: net.n_params(),
            got: grad.len(),
        });
    }
    let g = grad.as_slice();
    net.for_each_param_mut(|i, w| *w -= lr * g[i]);
    Ok(())
}
