//! Adversarial training of the LSTM generator and discriminator.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nets::{
    discriminator_cached, discriminator_forward, generator_forward, last_step_gradient, Activation,
    Adam, LossFunctional, LstmStack,
};
use crate::rng::RunRng;
use crate::types::{LatentSequence, Matrix, WindowMatrix};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanEpoch {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub generator: LstmStack,
    pub discriminator: LstmStack,
    pub window_len: usize,
    pub history: Vec<GanEpoch>,
}

impl GanModel {
    /// Freshly initialised pair for `n_series`-wide windows.
    pub fn new(n_series: usize, config: &ExperimentConfig, rng: &mut RunRng) -> Self {
        let generator = LstmStack::new(
            config.latent_dim,
            config.gen_hidden,
            config.gen_layers,
            n_series,
            Activation::Sigmoid,
            rng,
        );
        let discriminator = LstmStack::new(
            n_series,
            config.disc_hidden,
            config.disc_layers,
            1,
            Activation::Sigmoid,
            rng,
        );
        GanModel {
            generator,
            discriminator,
            window_len: config.window_len,
            history: Vec::new(),
        }
    }

    pub fn n_series(&self) -> usize {
        self.discriminator.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.input_dim()
    }

    pub fn sample_latent(&self, rng: &mut RunRng) -> LatentSequence {
        LatentSequence::sample(self.latent_dim(), self.window_len, rng)
    }

    pub fn generate(&self, z: &LatentSequence) -> Result<WindowMatrix> {
        generator_forward(&self.generator, z)
    }

    pub fn discriminate(&self, x: &WindowMatrix) -> Result<f64> {
        discriminator_forward(&self.discriminator, x)
    }

    /// One `epoch,d_loss,g_loss` record per line, with a header.
    pub fn training_log(&self) -> String {
        let mut out = String::from("epoch,d_loss,g_loss\n");
        for e in &self.history {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.d_loss, e.g_loss));
        }
        out
    }
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `-log p` under the clamp, and its derivative w.r.t. `p`.
#[inline]
fn neg_log(p: f64) -> (f64, f64) {
    let c = clamp_prob(p);
    let slope = if c == p { -1.0 / p } else { 0.0 };
    (-c.ln(), slope)
}

/// Discriminator loss from already-evaluated probabilities.
pub fn d_loss_from_probs(real: &[f64], fake: &[f64]) -> Result<f64> {
    check_batches(real.len(), fake.len())?;
    let sum: f64 = real
        .iter()
        .zip(fake)
        .map(|(&r, &f)| neg_log(r).0 + neg_log(1.0 - f).0)
        .sum();
    Ok(sum / real.len() as f64)
}

/// Non-saturating generator loss from already-evaluated probabilities.
pub fn g_loss_from_probs(fake: &[f64]) -> Result<f64> {
    if fake.is_empty() {
        return Err(Error::Empty(
            "generator loss needs a non-empty batch".into(),
        ));
    }
    Ok(fake.iter().map(|&p| neg_log(p).0).sum::<f64>() / fake.len() as f64)
}

fn check_batches(real: usize, fake: usize) -> Result<()> {
    if real == 0 {
        return Err(Error::Empty(
            "discriminator loss needs a non-empty batch".into(),
        ));
    }
    if real != fake {
        return Err(Error::ShapeMismatch(format!(
            "real batch of {real} vs fake batch of {fake}"
        )));
    }
    Ok(())
}

/// Mean over the batch of `-log D(real) - log(1 - D(fake))`.
pub fn d_loss(
    discriminator: &LstmStack,
    real: &[WindowMatrix],
    fake: &[WindowMatrix],
) -> Result<f64> {
    check_batches(real.len(), fake.len())?;
    let probs = |batch: &[WindowMatrix]| -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|x| discriminator_forward(discriminator, x))
            .collect()
    };
    d_loss_from_probs(&probs(real)?, &probs(fake)?)
}

/// Mean over the batch of `-log D(fake)`.
pub fn g_loss(discriminator: &LstmStack, fake: &[WindowMatrix]) -> Result<f64> {
    let probs: Vec<f64> = fake
        .iter()
        .map(|x| discriminator_forward(discriminator, x))
        .collect::<Result<_>>()?;
    g_loss_from_probs(&probs)
}

/// Discriminator loss and its gradient w.r.t. the parameters in `d_params`
/// (laid out as `discriminator.params()`).
pub fn d_loss_grad(
    discriminator: &LstmStack,
    d_params: &[f64],
    real: &[Matrix],
    fake: &[Matrix],
) -> Result<(f64, Vec<f64>)> {
    check_batches(real.len(), fake.len())?;
    let scale = 1.0 / real.len() as f64;
    let items: Vec<(&Matrix, bool)> = real
        .iter()
        .map(|x| (x, true))
        .chain(fake.iter().map(|x| (x, false)))
        .collect();
    let parts: Vec<(f64, Vec<f64>)> = items
        .par_iter()
        .map(|&(x, is_real)| {
            let cache = discriminator.forward_with(d_params, x)?;
            let p = cache.last_output()[0];
            let (loss, dp) = if is_real {
                neg_log(p)
            } else {
                let (l, s) = neg_log(1.0 - p);
                (l, -s)
            };
            let mut grad = vec![0.0; d_params.len()];
            let d_out = last_step_gradient(x.cols(), dp * scale);
            discriminator.backward_with(d_params, &cache, &d_out, &mut grad);
            Ok((loss * scale, grad))
        })
        .collect::<Result<_>>()?;
    Ok(reduce(parts, d_params.len()))
}

/// Generator loss for the latent batch `z` and its gradient w.r.t. `g_params`,
/// backpropagated through the frozen discriminator.
pub fn g_loss_grad(
    generator: &LstmStack,
    g_params: &[f64],
    discriminator: &LstmStack,
    z: &[LatentSequence],
) -> Result<(f64, Vec<f64>)> {
    if z.is_empty() {
        return Err(Error::Empty(
            "generator loss needs a non-empty batch".into(),
        ));
    }
    let scale = 1.0 / z.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = z
        .par_iter()
        .map(|z| {
            let g_cache = generator.forward_with(g_params, &z.values)?;
            let fake = g_cache.output();
            let d_cache = discriminator_cached(discriminator, &fake)?;
            let (loss, dp) = neg_log(d_cache.last_output()[0]);
            let mut scratch = vec![0.0; discriminator.params().len()];
            let d_out = last_step_gradient(fake.cols(), dp * scale);
            let d_fake = discriminator.backward(&d_cache, &d_out, &mut scratch);
            let mut grad = vec![0.0; g_params.len()];
            generator.backward_with(g_params, &g_cache, &d_fake, &mut grad);
            Ok((loss * scale, grad))
        })
        .collect::<Result<_>>()?;
    Ok(reduce(parts, g_params.len()))
}

/// Sums per-item contributions in item order so the result does not depend
/// on thread scheduling.
fn reduce(parts: Vec<(f64, Vec<f64>)>, len: usize) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut grad = vec![0.0; len];
    for (l, g) in parts {
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (total, grad)
}

/// [`d_loss`] as a function of the discriminator parameters.
pub struct DiscriminatorLoss<'a> {
    pub discriminator: &'a LstmStack,
    pub real: &'a [Matrix],
    pub fake: &'a [Matrix],
}

impl LossFunctional for DiscriminatorLoss<'_> {
    fn loss(&mut self, p: &[f64]) -> f64 {
        self.loss_and_grad(p).0
    }

    fn loss_and_grad(&mut self, p: &[f64]) -> (f64, Vec<f64>) {
        d_loss_grad(self.discriminator, p, self.real, self.fake).expect("batches checked by caller")
    }

    fn max_preactivation(&mut self, p: &[f64]) -> f64 {
        self.real
            .iter()
            .chain(self.fake)
            .map(|x| {
                self.discriminator
                    .forward_with(p, x)
                    .map_or(f64::INFINITY, |c| c.max_preactivation())
            })
            .fold(0.0, f64::max)
    }
}

/// [`g_loss`] on generated windows as a function of the generator parameters.
pub struct GeneratorLoss<'a> {
    pub generator: &'a LstmStack,
    pub discriminator: &'a LstmStack,
    pub latents: &'a [LatentSequence],
}

impl LossFunctional for GeneratorLoss<'_> {
    fn loss(&mut self, p: &[f64]) -> f64 {
        self.loss_and_grad(p).0
    }

    fn loss_and_grad(&mut self, p: &[f64]) -> (f64, Vec<f64>) {
        g_loss_grad(self.generator, p, self.discriminator, self.latents)
            .expect("batch checked by caller")
    }

    fn max_preactivation(&mut self, p: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for z in self.latents {
            let Ok(g) = self.generator.forward_with(p, &z.values) else {
                return f64::INFINITY;
            };
            worst = worst.max(g.max_preactivation());
            if let Ok(d) = self.discriminator.forward_cached(&g.output()) {
                worst = worst.max(d.max_preactivation());
            }
        }
        worst
    }
}

/// Owns a model and its two optimizers for the duration of training.
pub struct GanTrainer {
    model: GanModel,
    d_opt: Adam,
    g_opt: Adam,
}

impl GanTrainer {
    pub fn new(model: GanModel, config: &ExperimentConfig) -> Self {
        let d_opt = Adam::new(
            model.discriminator.params().len(),
            config.gan_lr,
            config.adam_beta1,
            config.adam_beta2,
        );
        let g_opt = Adam::new(
            model.generator.params().len(),
            config.gan_lr,
            config.adam_beta1,
            config.adam_beta2,
        );
        GanTrainer {
            model,
            d_opt,
            g_opt,
        }
    }

    pub fn model(&self) -> &GanModel {
        &self.model
    }

    pub fn into_model(self) -> GanModel {
        self.model
    }

    /// One discriminator update against `real` and as many fresh fakes.
    /// Only discriminator parameters change.
    pub fn d_step(&mut self, real: &[&WindowMatrix], rng: &mut RunRng) -> Result<f64> {
        let fakes: Vec<Matrix> = (0..real.len())
            .map(|_| {
                let z = self.model.sample_latent(rng);
                self.model.generator.forward(&z.values)
            })
            .collect::<Result<_>>()?;
        let real: Vec<Matrix> = real.iter().map(|w| w.values.clone()).collect();
        let d = &self.model.discriminator;
        let (loss, grad) = d_loss_grad(d, d.params().as_slice(), &real, &fakes)?;
        if loss.is_finite() {
            self.d_opt
                .step(self.model.discriminator.params_mut().as_mut_slice(), &grad);
        }
        Ok(loss)
    }

    /// One generator update on `batch` fresh latent draws. Only generator
    /// parameters change.
    pub fn g_step(&mut self, batch: usize, rng: &mut RunRng) -> Result<f64> {
        let z: Vec<LatentSequence> = (0..batch).map(|_| self.model.sample_latent(rng)).collect();
        let g = &self.model.generator;
        let (loss, grad) = g_loss_grad(g, g.params().as_slice(), &self.model.discriminator, &z)?;
        if loss.is_finite() {
            self.g_opt
                .step(self.model.generator.params_mut().as_mut_slice(), &grad);
        }
        Ok(loss)
    }
}

/// Trains on baseline windows: per epoch, shuffle, then per batch one
/// discriminator step followed by one generator step.
pub fn gan_train(
    windows: &[WindowMatrix],
    config: &ExperimentConfig,
    rng: &mut RunRng,
) -> Result<GanModel> {
    config.validate()?;
    let (n, t) = check_windows(windows, config)?;
    let model = GanModel::new(n, config, rng);
    debug_assert_eq!(model.window_len, t);
    let mut trainer = GanTrainer::new(model, config);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..config.gan_epochs {
        order.shuffle(rng);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let real: Vec<&WindowMatrix> = chunk.iter().map(|&i| &windows[i]).collect();
            let d = trainer.d_step(&real, rng)?;
            let g = trainer.g_step(real.len(), rng)?;
            if !(d.is_finite() && g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    detail: format!("d_loss {d}, g_loss {g}"),
                });
            }
            d_sum += d;
            g_sum += g;
            batches += 1;
        }
        trainer.model.history.push(GanEpoch {
            epoch,
            d_loss: d_sum / batches as f64,
            g_loss: g_sum / batches as f64,
        });
    }
    Ok(trainer.into_model())
}

pub(crate) fn check_windows(
    windows: &[WindowMatrix],
    config: &ExperimentConfig,
) -> Result<(usize, usize)> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Empty("training needs at least one window".into()))?;
    let shape = first.values.shape();
    if shape.1 != config.window_len {
        return Err(Error::ShapeMismatch(format!(
            "windows have T = {}, config has T = {}",
            shape.1, config.window_len
        )));
    }
    if let Some(w) = windows.iter().find(|w| w.values.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "window at {} is {:?}, expected {shape:?}",
            w.start_index,
            w.values.shape()
        )));
    }
    Ok(shape)
}
