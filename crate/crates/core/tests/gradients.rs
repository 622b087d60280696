//! Analytic gradients against central finite differences.

use netgan_core::gan::{DiscriminatorLoss, GeneratorLoss};
use netgan_core::nets::{
    gradient_check, Activation, FeedForwardStack, LstmStack, SequenceRegression, VectorRegression,
    Verdict,
};
use netgan_core::rng::{fill_gaussian, seeded_rng};
use netgan_core::vae::{ElboLoss, VaeModel};
use netgan_core::{ExperimentConfig, LatentSequence, Matrix};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    fill_gaussian(&mut seeded_rng(seed), m.as_mut_slice());
    m
}

fn unit_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut m = gaussian_matrix(rows, cols, seed);
    for v in m.as_mut_slice() {
        *v = netgan_core::nets::sigmoid(*v);
    }
    m
}

#[test]
fn linear_net_squared_loss_is_exact() {
    let net = FeedForwardStack::new([4, 5, 3, 2], [Activation::Identity; 3], &mut seeded_rng(0));
    let input = [0.5, -1.0, 0.25, 2.0];
    let target = [0.1, -0.3];
    let mut f = VectorRegression {
        net: &net,
        input: &input,
        target: &target,
    };
    let check = gradient_check(&mut f, net.params().as_slice(), 1e-4).unwrap();
    assert!(check.max_rel_error < 1e-6, "{check:?}");
}

#[test]
fn lstm_one_layer_eight_units() {
    for seed in 0..20 {
        let net = LstmStack::new(3, 8, 1, 2, Activation::Identity, &mut seeded_rng(seed));
        let input = gaussian_matrix(3, 4, seed + 100);
        let target = gaussian_matrix(2, 4, seed + 200);
        let mut f = SequenceRegression {
            net: &net,
            input: &input,
            target: &target,
        };
        let check = gradient_check(&mut f, net.params().as_slice(), EPS).unwrap();
        assert_eq!(check.verdict(TOL), Verdict::Pass, "seed {seed}: {check:?}");
    }
}

#[test]
fn lstm_two_layers_sigmoid_output() {
    for seed in 0..20 {
        let net = LstmStack::new(2, 5, 2, 2, Activation::Sigmoid, &mut seeded_rng(seed));
        let input = gaussian_matrix(2, 5, seed + 1);
        let target = unit_matrix(2, 5, seed + 2);
        let mut f = SequenceRegression {
            net: &net,
            input: &input,
            target: &target,
        };
        let check = gradient_check(&mut f, net.params().as_slice(), EPS).unwrap();
        assert_eq!(check.verdict(TOL), Verdict::Pass, "seed {seed}: {check:?}");
    }
}

#[test]
fn saturated_sigmoid_is_unreliable_not_failed() {
    let mut net = LstmStack::new(1, 2, 1, 1, Activation::Sigmoid, &mut seeded_rng(0));
    for v in net.params_mut().as_mut_slice() {
        *v *= 50.0;
    }
    let input = Matrix::from_vec(1, 3, vec![40.0, -40.0, 40.0]).unwrap();
    let target = Matrix::from_vec(1, 3, vec![0.5; 3]).unwrap();
    let mut f = SequenceRegression {
        net: &net,
        input: &input,
        target: &target,
    };
    let check = gradient_check(&mut f, net.params().as_slice(), EPS).unwrap();
    assert!(check.unreliable);
    assert_eq!(check.verdict(TOL), Verdict::Unreliable);
}

#[test]
fn discriminator_loss() {
    for seed in 0..20 {
        let d = LstmStack::new(2, 6, 1, 1, Activation::Sigmoid, &mut seeded_rng(seed));
        let real: Vec<Matrix> = (0..3).map(|i| unit_matrix(2, 5, seed * 10 + i)).collect();
        let fake: Vec<Matrix> = (0..3)
            .map(|i| unit_matrix(2, 5, seed * 10 + 5 + i))
            .collect();
        let mut f = DiscriminatorLoss {
            discriminator: &d,
            real: &real,
            fake: &fake,
        };
        let check = gradient_check(&mut f, d.params().as_slice(), EPS).unwrap();
        assert_eq!(check.verdict(TOL), Verdict::Pass, "seed {seed}: {check:?}");
    }
}

#[test]
fn generator_loss_through_frozen_discriminator() {
    for seed in 0..20 {
        let mut rng = seeded_rng(seed);
        let g = LstmStack::new(2, 6, 1, 2, Activation::Sigmoid, &mut rng);
        let d = LstmStack::new(2, 5, 1, 1, Activation::Sigmoid, &mut rng);
        let z: Vec<LatentSequence> = (0..3)
            .map(|_| LatentSequence::sample(2, 5, &mut rng))
            .collect();
        let mut f = GeneratorLoss {
            generator: &g,
            discriminator: &d,
            latents: &z,
        };
        let check = gradient_check(&mut f, g.params().as_slice(), EPS).unwrap();
        assert_eq!(check.verdict(TOL), Verdict::Pass, "seed {seed}: {check:?}");
    }
}

#[test]
fn elbo_with_frozen_noise() {
    let cfg = ExperimentConfig {
        window_len: 4,
        latent_dim: 2,
        enc_hidden1: 8,
        enc_hidden2: 6,
        dec_hidden1: 6,
        dec_hidden2: 8,
        kl_weight: 0.7,
        ..ExperimentConfig::default()
    };
    for seed in 0..20 {
        let mut rng = seeded_rng(seed);
        let model = VaeModel::new(2, &cfg, &mut rng).unwrap();
        assert!(model.param_count() <= 1000);
        let window = unit_matrix(2, 4, seed + 50);
        let mut noise = vec![0.0; 2];
        fill_gaussian(&mut rng, &mut noise);
        let mut f = ElboLoss {
            model: &model,
            window: &window,
            noise: &noise,
        };
        let check = gradient_check(&mut f, &model.flat_params(), EPS).unwrap();
        assert_eq!(check.verdict(TOL), Verdict::Pass, "seed {seed}: {check:?}");
    }
}
