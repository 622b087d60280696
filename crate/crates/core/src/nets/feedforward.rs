use rand::Rng;

use super::{affine, matvec_t_add, outer_add, Activation, Params};
use crate::error::{Error, Result};

/// Exactly three affine layers, each followed by its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardStack {
    widths: [usize; 4],
    activations: [Activation; 3],
    params: Params,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    /// Layer inputs followed by the final output: `acts[0]` is the input,
    /// `acts[3]` the network output.
    acts: [Vec<f64>; 4],
    max_preactivation: f64,
}

impl FeedForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.acts[3]
    }

    pub fn max_preactivation(&self) -> f64 {
        self.max_preactivation
    }
}

impl FeedForwardStack {
    pub fn zeros(widths: [usize; 4], activations: [Activation; 3]) -> Self {
        assert!(widths.iter().all(|&w| w > 0));
        let mut b = Params::builder();
        for l in 0..3 {
            b.add(format!("fc{l}.weight"), &[widths[l + 1], widths[l]]);
            b.add(format!("fc{l}.bias"), &[widths[l + 1]]);
        }
        FeedForwardStack {
            widths,
            activations,
            params: b.build(),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(
        widths: [usize; 4],
        activations: [Activation; 3],
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(widths, activations);
        for (l, &fan_in) in widths[..3].iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            net.params.fill_uniform(2 * l, bound, rng);
            net.params.fill_uniform(2 * l + 1, bound, rng);
        }
        net
    }

    pub fn widths(&self) -> [usize; 4] {
        self.widths
    }

    pub fn activations(&self) -> [Activation; 3] {
        self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[3]
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.acts[3].clone())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<FeedForwardCache> {
        self.forward_with(self.params.as_slice(), x)
    }

    pub fn forward_with(&self, p: &[f64], x: &[f64]) -> Result<FeedForwardCache> {
        if x.len() != self.widths[0] {
            return Err(Error::ShapeMismatch(format!(
                "feed-forward stack expects width {}, got {}",
                self.widths[0],
                x.len()
            )));
        }
        let mut acts: [Vec<f64>; 4] = Default::default();
        acts[0] = x.to_vec();
        let mut max_pre = 0.0f64;
        for l in 0..3 {
            let mut out = vec![0.0; self.widths[l + 1]];
            affine(
                self.slice(p, 2 * l),
                self.slice(p, 2 * l + 1),
                &acts[l],
                &mut out,
            );
            let act = self.activations[l];
            if act != Activation::Identity {
                max_pre = out.iter().fold(max_pre, |m, v| m.max(v.abs()));
            }
            for v in &mut out {
                *v = act.apply(*v);
            }
            acts[l + 1] = out;
        }
        Ok(FeedForwardCache {
            acts,
            max_preactivation: max_pre,
        })
    }

    /// Accumulates parameter gradients for `d_output` into `grad`, returns the
    /// gradient w.r.t. the input.
    pub fn backward(
        &self,
        cache: &FeedForwardCache,
        d_output: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        self.backward_with(self.params.as_slice(), cache, d_output, grad)
    }

    pub fn backward_with(
        &self,
        p: &[f64],
        cache: &FeedForwardCache,
        d_output: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        assert_eq!(d_output.len(), self.widths[3]);
        let mut d = d_output.to_vec();
        for l in (0..3).rev() {
            let act = self.activations[l];
            for (dv, &y) in d.iter_mut().zip(&cache.acts[l + 1]) {
                *dv *= act.derivative_from_output(y);
            }
            let (w, b) = (
                &self.params.layout()[2 * l],
                &self.params.layout()[2 * l + 1],
            );
            outer_add(&mut grad[w.offset..w.offset + w.len()], &d, &cache.acts[l]);
            for (g, v) in grad[b.offset..b.offset + b.len()].iter_mut().zip(&d) {
                *g += v;
            }
            let mut d_in = vec![0.0; self.widths[l]];
            matvec_t_add(self.slice(p, 2 * l), &d, &mut d_in);
            d = d_in;
        }
        d
    }

    fn slice<'a>(&self, p: &'a [f64], index: usize) -> &'a [f64] {
        let e = &self.params.layout()[index];
        &p[e.offset..e.offset + e.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn zero_parameters() {
        let net = FeedForwardStack::zeros(
            [4, 3, 3, 2],
            [Activation::Tanh, Activation::Tanh, Activation::Identity],
        );
        assert_eq!(net.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_stack_is_linear() {
        let lin = [Activation::Identity; 3];
        let net = FeedForwardStack::new([3, 4, 4, 2], lin, &mut seeded_rng(5));
        let a = [0.5, -1.0, 2.0];
        let b = [1.5, 0.25, -0.5];
        let zero = net.forward(&[0.0; 3]).unwrap();
        let fa = net.forward(&a).unwrap();
        let fb = net.forward(&b).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let fsum = net.forward(&sum).unwrap();
        for k in 0..2 {
            assert!((fsum[k] - (fa[k] + fb[k] - zero[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch() {
        let net = FeedForwardStack::zeros([2, 2, 2, 2], [Activation::Identity; 3]);
        assert!(net.forward(&[1.0]).is_err());
    }
}
