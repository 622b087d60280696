//! Fixtures shared by the benchmarks under `benches/`.

use netgan_core::data::{minmax_apply, minmax_fit, sliding_windows, synth_generate};
use netgan_core::{ExperimentConfig, SynthSpec, WindowMatrix};

/// Normalized unit-step windows of a seeded synthetic baseline.
pub fn baseline_windows(n: usize, len: usize, window_len: usize) -> Vec<WindowMatrix> {
    let spec = SynthSpec {
        n,
        length: len,
        sample_period: 1.0,
        seed: 1,
        series: vec![],
        injections: vec![],
    };
    let ds = synth_generate(&spec).expect("valid spec");
    let norm = minmax_apply(&ds, &minmax_fit(&ds)).expect("matching stats");
    sliding_windows(&norm, window_len).expect("len >= window_len")
}

pub fn one_epoch_config(window_len: usize) -> ExperimentConfig {
    ExperimentConfig {
        window_len,
        gan_epochs: 1,
        vae_epochs: 1,
        ..ExperimentConfig::default()
    }
}
