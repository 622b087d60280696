//! Squared-error regression losses over the two network kinds, for
//! verifying their backward passes.

use super::{FeedForwardStack, LossFunctional, LstmStack};
use crate::types::Matrix;

/// `½ Σ (net(input) − target)²` over every output element and step.
pub struct SequenceRegression<'a> {
    pub net: &'a LstmStack,
    pub input: &'a Matrix,
    pub target: &'a Matrix,
}

impl SequenceRegression<'_> {
    fn eval(&self, p: &[f64], grad: Option<&mut Vec<f64>>) -> (f64, f64) {
        let cache = self
            .net
            .forward_with(p, self.input)
            .expect("input shape checked by caller");
        let out = cache.output();
        let mut d = out.clone();
        let mut loss = 0.0;
        for (dv, t) in d.as_mut_slice().iter_mut().zip(self.target.as_slice()) {
            let r = *dv - t;
            loss += 0.5 * r * r;
            *dv = r;
        }
        if let Some(g) = grad {
            *g = vec![0.0; p.len()];
            self.net.backward_with(p, &cache, &d, g);
        }
        (loss, cache.max_preactivation())
    }
}

impl LossFunctional for SequenceRegression<'_> {
    fn loss(&mut self, p: &[f64]) -> f64 {
        self.eval(p, None).0
    }

    fn loss_and_grad(&mut self, p: &[f64]) -> (f64, Vec<f64>) {
        let mut g = Vec::new();
        let (l, _) = self.eval(p, Some(&mut g));
        (l, g)
    }

    fn max_preactivation(&mut self, p: &[f64]) -> f64 {
        self.eval(p, None).1
    }
}

/// `½ |net(input) − target|²`.
pub struct VectorRegression<'a> {
    pub net: &'a FeedForwardStack,
    pub input: &'a [f64],
    pub target: &'a [f64],
}

impl VectorRegression<'_> {
    fn eval(&self, p: &[f64], grad: Option<&mut Vec<f64>>) -> (f64, f64) {
        let cache = self
            .net
            .forward_with(p, self.input)
            .expect("input width checked by caller");
        let d: Vec<f64> = cache
            .output()
            .iter()
            .zip(self.target)
            .map(|(y, t)| y - t)
            .collect();
        let loss = d.iter().map(|r| 0.5 * r * r).sum();
        if let Some(g) = grad {
            *g = vec![0.0; p.len()];
            self.net.backward_with(p, &cache, &d, g);
        }
        (loss, cache.max_preactivation())
    }
}

impl LossFunctional for VectorRegression<'_> {
    fn loss(&mut self, p: &[f64]) -> f64 {
        self.eval(p, None).0
    }

    fn loss_and_grad(&mut self, p: &[f64]) -> (f64, Vec<f64>) {
        let mut g = Vec::new();
        let (l, _) = self.eval(p, Some(&mut g));
        (l, g)
    }

    fn max_preactivation(&mut self, p: &[f64]) -> f64 {
        self.eval(p, None).1
    }
}
