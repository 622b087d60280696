//! Stacked LSTM with a per-step linear output projection.
//!
//! Gate rows in each layer's weight matrices are ordered input, forget,
//! cell candidate, output. Gates use sigmoids and the candidate uses tanh.

use rand::Rng;

use super::{affine, matvec_add, matvec_t_add, outer_add, Activation, Params};
use crate::error::{Error, Result};
use crate::types::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerIdx {
    w_ih: usize,
    w_hh: usize,
    bias: usize,
    in_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    output_activation: Activation,
    layers: Vec<LayerIdx>,
    proj_w: usize,
    proj_b: usize,
    params: Params,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    /// Input sequence, step-major (`steps x input_dim`).
    input: Vec<f64>,
    /// Per layer, step-major post-activation gates (`steps x 4h`).
    gates: Vec<Vec<f64>>,
    /// Per layer, cell states (`steps x h`).
    cells: Vec<Vec<f64>>,
    /// Per layer, hidden states (`steps x h`).
    hidden: Vec<Vec<f64>>,
    /// Projection outputs after activation (`steps x output_dim`).
    output: Vec<f64>,
    max_preactivation: f64,
}

impl LstmCache {
    pub fn output(&self) -> Matrix {
        step_major_to_matrix(
            &self.output,
            self.steps,
            self.output.len() / self.steps.max(1),
        )
    }

    /// Output vector at the final step.
    pub fn last_output(&self) -> &[f64] {
        let d = self.output.len() / self.steps;
        &self.output[(self.steps - 1) * d..]
    }

    /// Largest |pre-activation| fed to any sigmoid or tanh.
    pub fn max_preactivation(&self) -> f64 {
        self.max_preactivation
    }
}

fn step_major_to_matrix(data: &[f64], steps: usize, width: usize) -> Matrix {
    let mut m = Matrix::zeros(width, steps);
    for t in 0..steps {
        for r in 0..width {
            m.set(r, t, data[t * width + r]);
        }
    }
    m
}

impl LstmStack {
    /// All parameters zero.
    pub fn zeros(
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        output_dim: usize,
        output_activation: Activation,
    ) -> Self {
        assert!(input_dim > 0 && hidden_dim > 0 && num_layers > 0 && output_dim > 0);
        let mut b = Params::builder();
        let h4 = 4 * hidden_dim;
        let layers = (0..num_layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { hidden_dim };
                LayerIdx {
                    w_ih: b.add(format!("lstm{l}.w_ih"), &[h4, in_dim]),
                    w_hh: b.add(format!("lstm{l}.w_hh"), &[h4, hidden_dim]),
                    bias: b.add(format!("lstm{l}.bias"), &[h4]),
                    in_dim,
                }
            })
            .collect();
        let proj_w = b.add("proj.weight", &[output_dim, hidden_dim]);
        let proj_b = b.add("proj.bias", &[output_dim]);
        LstmStack {
            input_dim,
            hidden_dim,
            output_dim,
            output_activation,
            layers,
            proj_w,
            proj_b,
            params: b.build(),
        }
    }

    /// Uniform in `[-1/sqrt(h), 1/sqrt(h)]`, forget-gate bias 1.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        output_dim: usize,
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(
            input_dim,
            hidden_dim,
            num_layers,
            output_dim,
            output_activation,
        );
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        for i in 0..net.params.layout().len() {
            net.params.fill_uniform(i, bound, rng);
        }
        let h = hidden_dim;
        for layer in net.layers.clone() {
            net.params.tensor_mut(layer.bias)[h..2 * h].fill(1.0);
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// `d_in x T` in, `d_out x T` out, from zero initial states.
    pub fn forward(&self, seq: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(seq)?.output())
    }

    pub fn forward_cached(&self, seq: &Matrix) -> Result<LstmCache> {
        self.forward_with(self.params.as_slice(), seq)
    }

    /// Forward pass using an external parameter buffer with this network's layout.
    pub fn forward_with(&self, p: &[f64], seq: &Matrix) -> Result<LstmCache> {
        if seq.rows() != self.input_dim || seq.cols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "LSTM expects {} x T input, got {} x {}",
                self.input_dim,
                seq.rows(),
                seq.cols()
            )));
        }
        debug_assert_eq!(p.len(), self.params.len());
        let steps = seq.cols();
        let h = self.hidden_dim;
        let mut input = vec![0.0; steps * self.input_dim];
        for t in 0..steps {
            for r in 0..self.input_dim {
                input[t * self.input_dim + r] = seq.get(r, t);
            }
        }
        let mut max_pre = 0.0f64;
        let mut gates_all = Vec::with_capacity(self.layers.len());
        let mut cells_all = Vec::with_capacity(self.layers.len());
        let mut hidden_all: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut z = vec![0.0; 4 * h];
        for (l, layer) in self.layers.iter().enumerate() {
            let w_ih = self.slice(p, layer.w_ih);
            let w_hh = self.slice(p, layer.w_hh);
            let bias = self.slice(p, layer.bias);
            let mut gates = vec![0.0; steps * 4 * h];
            let mut cells = vec![0.0; steps * h];
            let mut hidden = vec![0.0; steps * h];
            for t in 0..steps {
                let x = if l == 0 {
                    &input[t * self.input_dim..(t + 1) * self.input_dim]
                } else {
                    &hidden_all[l - 1][t * h..(t + 1) * h]
                };
                affine(w_ih, bias, x, &mut z);
                if t > 0 {
                    matvec_add(w_hh, &hidden[(t - 1) * h..t * h], &mut z);
                }
                max_pre = z.iter().fold(max_pre, |m, v| m.max(v.abs()));
                let g = &mut gates[t * 4 * h..(t + 1) * 4 * h];
                for j in 0..h {
                    g[j] = super::sigmoid(z[j]);
                    g[h + j] = super::sigmoid(z[h + j]);
                    g[2 * h + j] = z[2 * h + j].tanh();
                    g[3 * h + j] = super::sigmoid(z[3 * h + j]);
                }
                for j in 0..h {
                    let c_prev = if t > 0 { cells[(t - 1) * h + j] } else { 0.0 };
                    let c = g[h + j] * c_prev + g[j] * g[2 * h + j];
                    cells[t * h + j] = c;
                    hidden[t * h + j] = g[3 * h + j] * c.tanh();
                }
            }
            gates_all.push(gates);
            cells_all.push(cells);
            hidden_all.push(hidden);
        }

        let top = hidden_all.last().unwrap();
        let w = self.slice(p, self.proj_w);
        let b = self.slice(p, self.proj_b);
        let d = self.output_dim;
        let mut output = vec![0.0; steps * d];
        for t in 0..steps {
            let out = &mut output[t * d..(t + 1) * d];
            affine(w, b, &top[t * h..(t + 1) * h], out);
            if self.output_activation != Activation::Identity {
                max_pre = out.iter().fold(max_pre, |m, v| m.max(v.abs()));
            }
            for v in out.iter_mut() {
                *v = self.output_activation.apply(*v);
            }
        }
        Ok(LstmCache {
            steps,
            input,
            gates: gates_all,
            cells: cells_all,
            hidden: hidden_all,
            output,
            max_preactivation: max_pre,
        })
    }

    /// Backpropagates `d_output` (gradient w.r.t. the activated outputs,
    /// `d_out x T`) through time. Parameter gradients are accumulated into
    /// `grad`; the gradient w.r.t. the input sequence is returned.
    pub fn backward(&self, cache: &LstmCache, d_output: &Matrix, grad: &mut [f64]) -> Matrix {
        self.backward_with(self.params.as_slice(), cache, d_output, grad)
    }

    pub fn backward_with(
        &self,
        p: &[f64],
        cache: &LstmCache,
        d_output: &Matrix,
        grad: &mut [f64],
    ) -> Matrix {
        let steps = cache.steps;
        let h = self.hidden_dim;
        let d = self.output_dim;
        assert_eq!(d_output.shape(), (d, steps));
        assert_eq!(grad.len(), self.params.len());

        // Output projection.
        let mut d_hidden = vec![0.0; steps * h];
        let w = self.slice(p, self.proj_w);
        let top = cache.hidden.last().unwrap();
        let mut da = vec![0.0; d];
        for t in 0..steps {
            let y = &cache.output[t * d..(t + 1) * d];
            for r in 0..d {
                da[r] = d_output.get(r, t) * self.output_activation.derivative_from_output(y[r]);
            }
            let e = &self.params.layout()[self.proj_w];
            outer_add(
                &mut grad[e.offset..e.offset + e.len()],
                &da,
                &top[t * h..(t + 1) * h],
            );
            let e = &self.params.layout()[self.proj_b];
            for (g, v) in grad[e.offset..e.offset + e.len()].iter_mut().zip(&da) {
                *g += v;
            }
            matvec_t_add(w, &da, &mut d_hidden[t * h..(t + 1) * h]);
        }

        let mut dz = vec![0.0; 4 * h];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let gates = &cache.gates[l];
            let cells = &cache.cells[l];
            let hidden = &cache.hidden[l];
            let w_ih = self.slice(p, layer.w_ih);
            let w_hh = self.slice(p, layer.w_hh);
            let (o_ih, o_hh, o_b) = (
                self.params.layout()[layer.w_ih].offset,
                self.params.layout()[layer.w_hh].offset,
                self.params.layout()[layer.bias].offset,
            );
            let in_dim = layer.in_dim;
            let mut d_input = vec![0.0; steps * in_dim];
            dh_next.fill(0.0);
            dc_next.fill(0.0);
            for t in (0..steps).rev() {
                let g = &gates[t * 4 * h..(t + 1) * 4 * h];
                for j in 0..h {
                    let (i, f, cand, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let c = cells[t * h + j];
                    let c_prev = if t > 0 { cells[(t - 1) * h + j] } else { 0.0 };
                    let tc = c.tanh();
                    let dh = d_hidden[t * h + j] + dh_next[j];
                    let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                    dz[j] = dc * cand * i * (1.0 - i);
                    dz[h + j] = dc * c_prev * f * (1.0 - f);
                    dz[2 * h + j] = dc * i * (1.0 - cand * cand);
                    dz[3 * h + j] = dh * tc * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                let x = if l == 0 {
                    &cache.input[t * in_dim..(t + 1) * in_dim]
                } else {
                    &cache.hidden[l - 1][t * h..(t + 1) * h]
                };
                outer_add(&mut grad[o_ih..o_ih + 4 * h * in_dim], &dz, x);
                for (gb, v) in grad[o_b..o_b + 4 * h].iter_mut().zip(&dz) {
                    *gb += v;
                }
                dh_next.fill(0.0);
                if t > 0 {
                    outer_add(
                        &mut grad[o_hh..o_hh + 4 * h * h],
                        &dz,
                        &hidden[(t - 1) * h..t * h],
                    );
                    matvec_t_add(w_hh, &dz, &mut dh_next);
                }
                matvec_t_add(w_ih, &dz, &mut d_input[t * in_dim..(t + 1) * in_dim]);
            }
            if l == 0 {
                return step_major_to_matrix(&d_input, steps, in_dim);
            }
            d_hidden = d_input;
        }
        unreachable!("stack has at least one layer")
    }

    fn slice<'a>(&self, p: &'a [f64], index: usize) -> &'a [f64] {
        let e = &self.params.layout()[index];
        &p[e.offset..e.offset + e.len()]
    }
}
