//! Variational auto-encoder over flattened windows.
//!
//! The alignment layer flattens an `n x T` window series-major (all of
//! series 0, then series 1, ...), which is exactly the row-major layout of
//! [`Matrix`]; the reconstruction layer reverses it.

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gan::check_windows;
use crate::nets::{Activation, Adam, FeedForwardStack, LossFunctional};
use crate::rng::{fill_gaussian, RunRng};
use crate::types::{Matrix, WindowMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub total: f64,
    pub recon_term: f64,
    pub kl_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    /// Flattened window to `(mu, logvar)`, width `2 d_z`.
    pub encoder: FeedForwardStack,
    /// `d_z` to flattened reconstruction in (0, 1).
    pub decoder: FeedForwardStack,
    pub n_series: usize,
    pub window_len: usize,
    pub kl_weight: f64,
    pub history: Vec<VaeEpoch>,
}

/// How the latent code is chosen when reconstructing.
pub enum Sampling<'a> {
    /// Decode the posterior mean.
    Mean,
    /// Decode `mu + exp(logvar / 2) * eps` with `eps` drawn from the source.
    Random(&'a mut RunRng),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elbo {
    pub total: f64,
    pub recon_term: f64,
    pub kl_term: f64,
}

/// `½ Σ (exp(logvar) + mu² − 1 − logvar)`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| lv.exp_m1() - lv + m * m)
        .sum::<f64>()
}

impl VaeModel {
    pub fn new(n_series: usize, config: &ExperimentConfig, rng: &mut RunRng) -> Result<Self> {
        let flat = n_series * config.window_len;
        let dz = config.latent_dim;
        if dz >= flat {
            return Err(Error::Config(format!(
                "latent width {dz} must be smaller than n * T = {flat}"
            )));
        }
        let encoder = FeedForwardStack::new(
            [flat, config.enc_hidden1, config.enc_hidden2, 2 * dz],
            [Activation::Tanh, Activation::Tanh, Activation::Identity],
            rng,
        );
        let decoder = FeedForwardStack::new(
            [dz, config.dec_hidden1, config.dec_hidden2, flat],
            [Activation::Tanh, Activation::Tanh, Activation::Sigmoid],
            rng,
        );
        Ok(VaeModel {
            encoder,
            decoder,
            n_series,
            window_len: config.window_len,
            kl_weight: config.kl_weight,
            history: Vec::new(),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.params().len() + self.decoder.params().len()
    }

    /// Encoder then decoder parameters in one buffer.
    pub fn flat_params(&self) -> Vec<f64> {
        [
            self.encoder.params().as_slice(),
            self.decoder.params().as_slice(),
        ]
        .concat()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let split = self.encoder.params().len();
        self.encoder
            .params_mut()
            .as_mut_slice()
            .copy_from_slice(&p[..split]);
        self.decoder
            .params_mut()
            .as_mut_slice()
            .copy_from_slice(&p[split..]);
    }

    fn check_window(&self, x: &Matrix) -> Result<()> {
        if x.shape() != (self.n_series, self.window_len) {
            return Err(Error::ShapeMismatch(format!(
                "VAE expects {} x {} windows, got {} x {}",
                self.n_series,
                self.window_len,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: &WindowMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_window(&x.values)?;
        let out = self.encoder.forward(x.values.as_slice())?;
        let dz = self.latent_dim();
        let (mu, logvar) = out.split_at(dz);
        if !mu.iter().chain(logvar).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("encoder output".into()));
        }
        Ok((mu.to_vec(), logvar.to_vec()))
    }

    pub fn reconstruct(&self, x: &WindowMatrix, sampling: Sampling<'_>) -> Result<WindowMatrix> {
        let (mu, logvar) = self.encode(x)?;
        let z = match sampling {
            Sampling::Mean => mu,
            Sampling::Random(rng) => {
                let mut eps = vec![0.0; mu.len()];
                fill_gaussian(rng, &mut eps);
                reparameterize(&mu, &logvar, &eps)
            }
        };
        let flat = self.decoder.forward(&z)?;
        WindowMatrix::new(
            Matrix::from_vec(self.n_series, self.window_len, flat)?,
            x.start_index,
        )
    }

    /// ELBO terms with noise `eps` held fixed.
    pub fn elbo_with_noise(&self, x: &WindowMatrix, eps: &[f64]) -> Result<Elbo> {
        self.check_window(&x.values)?;
        let (elbo, _) = elbo_grad_with(self, &self.flat_params(), &x.values, eps, false)?;
        Ok(elbo)
    }

    /// One `epoch,total,recon_term,kl_term` record per line, with a header.
    pub fn training_log(&self) -> String {
        let mut out = String::from("epoch,total,recon_term,kl_term\n");
        for e in &self.history {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.total, e.recon_term, e.kl_term
            ));
        }
        out
    }
}

fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

pub fn vae_encode(m: &VaeModel, x: &WindowMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    m.encode(x)
}

pub fn vae_reconstruct(
    m: &VaeModel,
    x: &WindowMatrix,
    sampling: Sampling<'_>,
) -> Result<WindowMatrix> {
    m.reconstruct(x, sampling)
}

/// Reconstruction MSE against a reparameterized sample, plus the weighted KL term.
pub fn elbo_loss(m: &VaeModel, x: &WindowMatrix, rng: &mut RunRng) -> Result<Elbo> {
    let mut eps = vec![0.0; m.latent_dim()];
    fill_gaussian(rng, &mut eps);
    m.elbo_with_noise(x, &eps)
}

/// ELBO and, when `want_grad`, its gradient w.r.t. the flat parameters
/// `p` (encoder then decoder) for fixed noise `eps`.
pub fn elbo_grad_with(
    m: &VaeModel,
    p: &[f64],
    x: &Matrix,
    eps: &[f64],
    want_grad: bool,
) -> Result<(Elbo, Vec<f64>)> {
    let split = m.encoder.params().len();
    let (pe, pd) = p.split_at(split);
    let dz = m.latent_dim();
    let enc = m.encoder.forward_with(pe, x.as_slice())?;
    let (mu, logvar) = enc.output().split_at(dz);
    let z = reparameterize(mu, logvar, eps);
    let dec = m.decoder.forward_with(pd, &z)?;
    let target = x.as_slice();
    let count = target.len() as f64;
    let recon_term = dec
        .output()
        .iter()
        .zip(target)
        .map(|(y, t)| (y - t) * (y - t))
        .sum::<f64>()
        / count;
    let kl_term = kl_divergence(mu, logvar);
    let total = recon_term + m.kl_weight * kl_term;
    let elbo = Elbo {
        total,
        recon_term,
        kl_term,
    };
    if !(recon_term.is_finite() && kl_term.is_finite()) {
        return Err(Error::NonFinite(format!(
            "ELBO terms recon {recon_term}, kl {kl_term}"
        )));
    }
    if !want_grad {
        return Ok((elbo, Vec::new()));
    }

    let mut grad = vec![0.0; p.len()];
    let d_recon: Vec<f64> = dec
        .output()
        .iter()
        .zip(target)
        .map(|(y, t)| 2.0 * (y - t) / count)
        .collect();
    let (ge, gd) = grad.split_at_mut(split);
    let dz_grad = m.decoder.backward_with(pd, &dec, &d_recon, gd);
    let beta = m.kl_weight;
    let mut d_enc = vec![0.0; 2 * dz];
    for k in 0..dz {
        let sd = (0.5 * logvar[k]).exp();
        d_enc[k] = dz_grad[k] + beta * mu[k];
        d_enc[dz + k] = dz_grad[k] * eps[k] * 0.5 * sd + beta * 0.5 * (logvar[k].exp() - 1.0);
    }
    m.encoder.backward_with(pe, &enc, &d_enc, ge);
    Ok((elbo, grad))
}

/// ELBO total as a function of the flat VAE parameters, with frozen noise.
pub struct ElboLoss<'a> {
    pub model: &'a VaeModel,
    pub window: &'a Matrix,
    pub noise: &'a [f64],
}

impl LossFunctional for ElboLoss<'_> {
    fn loss(&mut self, p: &[f64]) -> f64 {
        elbo_grad_with(self.model, p, self.window, self.noise, false)
            .map_or(f64::NAN, |(e, _)| e.total)
    }

    fn loss_and_grad(&mut self, p: &[f64]) -> (f64, Vec<f64>) {
        elbo_grad_with(self.model, p, self.window, self.noise, true)
            .map_or_else(|_| (f64::NAN, vec![0.0; p.len()]), |(e, g)| (e.total, g))
    }

    fn max_preactivation(&mut self, p: &[f64]) -> f64 {
        let split = self.model.encoder.params().len();
        let Ok(enc) = self
            .model
            .encoder
            .forward_with(&p[..split], self.window.as_slice())
        else {
            return f64::INFINITY;
        };
        let dz = self.model.latent_dim();
        let (mu, logvar) = enc.output().split_at(dz);
        let z = reparameterize(mu, logvar, self.noise);
        let dec = self.model.decoder.forward_with(&p[split..], &z);
        enc.max_preactivation()
            .max(dec.map_or(f64::INFINITY, |d| d.max_preactivation()))
    }
}

/// Minibatch training on the ELBO with reparameterized sampling.
pub fn vae_train(
    windows: &[WindowMatrix],
    config: &ExperimentConfig,
    rng: &mut RunRng,
) -> Result<VaeModel> {
    use rand::seq::SliceRandom;

    config.validate()?;
    let (n, _) = check_windows(windows, config)?;
    let mut model = VaeModel::new(n, config, rng)?;
    let mut params = model.flat_params();
    let mut opt = Adam::new(
        params.len(),
        config.vae_lr,
        config.adam_beta1,
        config.adam_beta2,
    );
    let dz = model.latent_dim();
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..config.vae_epochs {
        order.shuffle(rng);
        let mut sums = [0.0f64; 3];
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let noise: Vec<Vec<f64>> = chunk
                .iter()
                .map(|_| {
                    let mut e = vec![0.0; dz];
                    fill_gaussian(rng, &mut e);
                    e
                })
                .collect();
            let parts: Vec<(Elbo, Vec<f64>)> = chunk
                .par_iter()
                .zip(noise.par_iter())
                .map(|(&i, eps)| elbo_grad_with(&model, &params, &windows[i].values, eps, true))
                .collect::<Result<_>>()
                .map_err(|e| Error::NonFiniteLoss {
                    epoch,
                    batch,
                    detail: e.to_string(),
                })?;
            let scale = 1.0 / chunk.len() as f64;
            let mut grad = vec![0.0; params.len()];
            for (elbo, g) in &parts {
                sums[0] += elbo.total;
                sums[1] += elbo.recon_term;
                sums[2] += elbo.kl_term;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b * scale;
                }
            }
            opt.step(&mut params, &grad);
        }
        let count = windows.len() as f64;
        model.history.push(VaeEpoch {
            epoch,
            total: sums[0] / count,
            recon_term: sums[1] / count,
            kl_term: sums[2] / count,
        });
    }
    model.set_flat_params(&params);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use proptest::prelude::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig {
            window_len: 4,
            latent_dim: 2,
            enc_hidden1: 6,
            enc_hidden2: 5,
            dec_hidden1: 5,
            dec_hidden2: 6,
            batch_size: 4,
            ..ExperimentConfig::default()
        }
    }

    fn window(seed: u64) -> WindowMatrix {
        let mut m = Matrix::zeros(2, 4);
        crate::rng::fill_gaussian(&mut seeded_rng(seed), m.as_mut_slice());
        for v in m.as_mut_slice() {
            *v = crate::nets::sigmoid(*v);
        }
        WindowMatrix::new(m, 0).unwrap()
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&[0.0; 3], &[0.0; 3]), 0.0);
        assert!((kl_divergence(&[1.0, 0.0, 0.0], &[0.0; 3]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_direct_formula() {
        let mu = [0.3, -1.2, 0.05];
        let lv = [-0.4, 0.7, 1.5];
        let mut direct = 0.0;
        for k in 0..3 {
            let var: f64 = f64::exp(lv[k]);
            direct += 0.5 * (var + mu[k] * mu[k] - 1.0 - lv[k]);
        }
        assert!((kl_divergence(&mu, &lv) - direct).abs() < 1e-14);
    }

    #[test]
    fn encode_shapes_and_zero_encoder() {
        let mut m = VaeModel::new(2, &config(), &mut seeded_rng(0)).unwrap();
        let x = window(1);
        let (mu, lv) = m.encode(&x).unwrap();
        assert_eq!((mu.len(), lv.len()), (2, 2));
        assert_eq!(m.encode(&x).unwrap(), (mu, lv));
        m.encoder.params_mut().as_mut_slice().fill(0.0);
        assert_eq!(m.encode(&x).unwrap(), (vec![0.0; 2], vec![0.0; 2]));
    }

    #[test]
    fn reconstruction_contract() {
        let m = VaeModel::new(2, &config(), &mut seeded_rng(0)).unwrap();
        let x = window(2);
        let a = m.reconstruct(&x, Sampling::Mean).unwrap();
        assert_eq!(a, m.reconstruct(&x, Sampling::Mean).unwrap());
        assert_eq!(a.values.shape(), (2, 4));
        assert!(a.values.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        let wrong = WindowMatrix::new(Matrix::zeros(3, 4), 0).unwrap();
        assert!(m.reconstruct(&wrong, Sampling::Mean).is_err());
    }

    #[test]
    fn vanishing_variance_matches_mean_decoding() {
        let mut m = VaeModel::new(2, &config(), &mut seeded_rng(0)).unwrap();
        // Last encoder layer: rows 2..4 produce logvar. Pin them to -1000.
        let p = m.encoder.params_mut();
        let (w, b) = (p.layout()[4].clone(), p.layout()[5].clone());
        let data = p.as_mut_slice();
        data[w.offset + 2 * 5..w.offset + 4 * 5].fill(0.0);
        data[b.offset + 2..b.offset + 4].fill(-1000.0);
        let x = window(3);
        let mean = m.reconstruct(&x, Sampling::Mean).unwrap();
        let sampled = m
            .reconstruct(&x, Sampling::Random(&mut seeded_rng(8)))
            .unwrap();
        assert_eq!(mean, sampled);
    }

    #[test]
    fn compression_required() {
        let cfg = ExperimentConfig {
            latent_dim: 8,
            ..config()
        };
        assert!(VaeModel::new(2, &cfg, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn zero_epochs_is_initialisation() {
        let windows: Vec<_> = (0..6).map(window).collect();
        let cfg = ExperimentConfig {
            vae_epochs: 0,
            ..config()
        };
        let trained = vae_train(&windows, &cfg, &mut seeded_rng(4)).unwrap();
        let init = VaeModel::new(2, &cfg, &mut seeded_rng(4)).unwrap();
        assert_eq!(trained, init);
    }

    #[test]
    fn training_history_and_determinism() {
        let windows: Vec<_> = (0..6).map(window).collect();
        let cfg = ExperimentConfig {
            vae_epochs: 5,
            ..config()
        };
        let a = vae_train(&windows, &cfg, &mut seeded_rng(4)).unwrap();
        let b = vae_train(&windows, &cfg, &mut seeded_rng(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 5);
        assert_eq!(a.training_log().lines().count(), 6);
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..16)
        ) {
            let (mu, lv): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(kl_divergence(&mu, &lv) >= 0.0);
        }
    }
}
