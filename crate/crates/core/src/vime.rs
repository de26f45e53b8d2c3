//! Self-supervised pretraining on zero-masked inputs: an encoder shared by a
//! reconstruction decoder and a mask predictor. Only the encoder is kept.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::neural::{
    backward_into, bce, init_net, sgd_step, train_epochs, Activation, DenseNet, GradientSet,
    LossKind, LossSpec, Target, TrainConfig,
};
use crate::rng::{derive_seed, rng_from_seed, stream, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VimeConfig {
    /// Probability that a feature is masked out.
    pub mask_prob: f64,
    /// Weight of the reconstruction term.
    pub alpha: f64,
    /// Encoder layer widths after the input; the last is the latent size.
    pub encoder_dims: Vec<usize>,
    /// Hidden widths between latent and the `d`-wide decoder output.
    pub decoder_dims: Vec<usize>,
    /// Hidden widths between latent and the `d`-wide mask head output.
    pub mask_head_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VimeConfig {
    fn default() -> Self {
        Self {
            mask_prob: 0.3,
            alpha: 2.0,
            encoder_dims: vec![128, 64],
            decoder_dims: Vec::new(),
            mask_head_dims: Vec::new(),
            epochs: 100,
            batch_size: 64,
            lr: 0.1,
            seed: 0,
        }
    }
}

impl VimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::Config("mask probability must lie in [0, 1]".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if self.encoder_dims.is_empty() {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder_dims.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimeModel {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub mask_head: DenseNet,
}

impl VimeModel {
    /// Randomly initialized model for `d` input features.
    pub fn init(d: usize, cfg: &VimeConfig) -> Result<Self> {
        cfg.validate()?;
        let latent = cfg.latent_dim();
        let stack = |hidden: &[usize], out: Activation| {
            let mut dims = vec![latent];
            dims.extend_from_slice(hidden);
            dims.push(d);
            let mut acts = vec![Activation::Relu; hidden.len()];
            acts.push(out);
            (dims, acts)
        };
        let mut enc_dims = vec![d];
        enc_dims.extend_from_slice(&cfg.encoder_dims);
        let enc_acts = vec![Activation::Relu; cfg.encoder_dims.len()];
        let (dec_dims, dec_acts) = stack(&cfg.decoder_dims, Activation::Sigmoid);
        let (head_dims, head_acts) = stack(&cfg.mask_head_dims, Activation::Sigmoid);
        let seed = derive_seed(cfg.seed, stream::INIT);
        Ok(Self {
            encoder: init_net(&enc_dims, &enc_acts, derive_seed(seed, 0))?,
            decoder: init_net(&dec_dims, &dec_acts, derive_seed(seed, 1))?,
            mask_head: init_net(&head_dims, &head_acts, derive_seed(seed, 2))?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Drop both pretext heads.
    pub fn into_encoder(self) -> DenseNet {
        self.encoder
    }
}

/// Bernoulli(1 - p) keep-mask of length `d`.
pub fn sample_mask(d: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    (0..d)
        .map(|_| if rng.random::<f64>() < 1.0 - p { 1.0 } else { 0.0 })
        .collect()
}

/// `m * x`, elementwise.
pub fn corrupt(x: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    if x.len() != m.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: m.len(),
        });
    }
    Ok(x.iter().zip(m).map(|(a, b)| a * b).collect())
}

/// `alpha * mean((x - x_hat)^2) + mean(BCE(m, m_hat))`.
pub fn vime_loss(x: &[f64], x_hat: &[f64], m: &[f64], m_hat: &[f64], alpha: f64) -> Result<f64> {
    let d = x.len();
    for v in [x_hat, m, m_hat] {
        if v.len() != d {
            return Err(Error::Shape { expected: d, got: v.len() });
        }
    }
    if d == 0 {
        return Err(Error::Contract("empty feature vector".into()));
    }
    let mse = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d as f64;
    let l = alpha * mse + bce(m, m_hat);
    if !l.is_finite() {
        return Err(Error::Numeric("VIME loss is not finite".into()));
    }
    Ok(l)
}

struct Grads {
    enc: GradientSet,
    dec: GradientSet,
    head: GradientSet,
}

fn sample_grads(model: &VimeModel, x: &[f64], m: &[f64], alpha: f64, acc: &mut Grads) -> Result<f64> {
    let x_tilde = corrupt(x, m)?;
    let enc_t = model.encoder.trace(&x_tilde)?;
    let z = enc_t.output();
    let dec_t = model.decoder.trace(z)?;
    let head_t = model.mask_head.trace(z)?;
    let loss = vime_loss(x, dec_t.output(), m, head_t.output(), alpha)?;

    let mut g_dec = LossSpec::new(LossKind::Mse).output_grad(dec_t.output(), Target::Values(x))?;
    for g in &mut g_dec {
        *g *= alpha;
    }
    let g_head = LossSpec::new(LossKind::Bce).output_grad(head_t.output(), Target::Values(m))?;
    let mut dz = backward_into(&model.decoder, &dec_t, g_dec, acc.dec.as_mut_slice());
    let dz_head = backward_into(&model.mask_head, &head_t, g_head, acc.head.as_mut_slice());
    for (a, b) in dz.iter_mut().zip(&dz_head) {
        *a += b;
    }
    backward_into(&model.encoder, &enc_t, dz, acc.enc.as_mut_slice());
    Ok(loss)
}

/// Train `model` in place by minibatch SGD on the VIME loss. Each sample
/// draws a fresh mask every epoch. Returns the mean loss per epoch.
pub fn pretrain_model(model: &mut VimeModel, x: &FeatureMatrix, cfg: &VimeConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.n_rows() == 0 {
        return Err(Error::Contract("cannot pretrain on an empty matrix".into()));
    }
    if x.n_cols() != model.input_dim() {
        return Err(Error::Shape {
            expected: model.input_dim(),
            got: x.n_cols(),
        });
    }
    let train = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: derive_seed(cfg.seed, stream::SHUFFLE),
    };
    let mut mask_rng = rng_from_seed(derive_seed(cfg.seed, stream::AUGMENT));
    let d = x.n_cols();
    train_epochs(x.n_rows(), &train, |batch| {
        let mut acc = Grads {
            enc: GradientSet::zeros_like(&model.encoder),
            dec: GradientSet::zeros_like(&model.decoder),
            head: GradientSet::zeros_like(&model.mask_head),
        };
        let mut total = 0.0;
        for &i in batch {
            let m = sample_mask(d, cfg.mask_prob, &mut mask_rng);
            total += sample_grads(model, x.row(i), &m, cfg.alpha, &mut acc)?;
        }
        let n = batch.len() as f64;
        for (net, g) in [
            (&mut model.encoder, &mut acc.enc),
            (&mut model.decoder, &mut acc.dec),
            (&mut model.mask_head, &mut acc.head),
        ] {
            for v in g.as_mut_slice() {
                *v /= n;
            }
            sgd_step(net, g, cfg.lr)?;
        }
        Ok(total / n)
    })
}

/// Initialize and pretrain; returns the model and its per-epoch loss.
pub fn pretrain(x: &FeatureMatrix, cfg: &VimeConfig) -> Result<(VimeModel, Vec<f64>)> {
    let mut model = VimeModel::init(x.n_cols(), cfg)?;
    let history = pretrain_model(&mut model, x, cfg)?;
    Ok((model, history))
}

/// Latent representation of every row, through the encoder alone.
pub fn encode(encoder: &DenseNet, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.n_cols() != encoder.input_dim() {
        return Err(Error::Shape {
            expected: encoder.input_dim(),
            got: x.n_cols(),
        });
    }
    let k = encoder.output_dim();
    let mut data = Vec::with_capacity(x.n_rows() * k);
    for row in x.rows() {
        data.extend(encoder.predict(row)?);
    }
    let names = (0..k).map(|j| alloc::format!("z{j}")).collect();
    let layout = (0..k).map(|column| crate::dataset::FeatureBlock::Numeric { column }).collect();
    FeatureMatrix::new(data, x.n_rows(), names, layout)
}
