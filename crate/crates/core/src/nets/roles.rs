//! The two roles an LSTM stack plays in the adversarial pair.

use super::{LstmCache, LstmStack};
use crate::error::{Error, Result};
use crate::types::{LatentSequence, Matrix, WindowMatrix};

/// `G(z)`: a `d_z x T` latent sequence to an `n x T` window.
pub fn generator_forward(generator: &LstmStack, z: &LatentSequence) -> Result<WindowMatrix> {
    if z.latent_dim() != generator.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "generator expects latent width {}, got {}",
            generator.input_dim(),
            z.latent_dim()
        )));
    }
    WindowMatrix::new(generator.forward(&z.values)?, 0)
}

/// `D(x)`: probability that `x` came from real data, read from the last step.
pub fn discriminator_forward(discriminator: &LstmStack, x: &WindowMatrix) -> Result<f64> {
    Ok(discriminator_cached(discriminator, &x.values)?.last_output()[0])
}

pub(crate) fn discriminator_cached(discriminator: &LstmStack, x: &Matrix) -> Result<LstmCache> {
    if discriminator.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "discriminator must emit one value, has {}",
            discriminator.output_dim()
        )));
    }
    discriminator.forward_cached(x)
}

/// Output-gradient matrix that is zero except for `grad` at the last step.
pub(crate) fn last_step_gradient(steps: usize, grad: f64) -> Matrix {
    let mut m = Matrix::zeros(1, steps);
    m.set(0, steps - 1, grad);
    m
}
