use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{sigmoid, Matrix};

/// Uniform access to every trainable tensor of a model, in a fixed order.
///
/// Optimizers, gradient checks and serialization all walk parameters
/// through this trait, so the visit order is part of the model file format.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |p| out.extend_from_slice(p));
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(&mut |p| {
            p.copy_from_slice(&flat[offset..offset + p.len()]);
            offset += p.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length");
    }

    fn add_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(&mut |p| {
            let n = p.len();
            for (x, g) in p.iter_mut().zip(&flat[offset..offset + n]) {
                *x += g;
            }
            offset += n;
        });
    }

    fn fill_zero(&mut self) {
        self.visit_mut(&mut |p| p.fill(0.0));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |p| ok &= p.iter().all(|x| x.is_finite()));
        ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected layer `y = act(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            weights: Matrix::glorot(output, input, rng),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        self.weights.mul_vec_acc(x, &mut y);
        y.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        y
    }

    /// Accumulates parameter gradients into `grad`; adds the input gradient to `dx`.
    pub fn backward(&self, x: &[f64], y: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        let da: Vec<f64> = dy
            .iter()
            .zip(y)
            .map(|(&g, &out)| g * self.activation.derivative_from_output(out))
            .collect();
        grad.weights.add_outer(&da, x);
        for (b, d) in grad.bias.iter_mut().zip(&da) {
            *b += d;
        }
        if let Some(dx) = dx {
            self.weights.mul_t_vec_acc(&da, dx);
        }
    }
}

impl Parameters for Dense {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.weights.data());
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.weights.data_mut());
        f(&mut self.bias);
    }
}

/// Gated recurrent unit layer.
///
/// ```text
/// z  = σ(Wz x + Uz h + bz)
/// r  = σ(Wr x + Ur h + br)
/// c  = tanh(Wh x + Uh (r ⊙ h) + bh)
/// h' = (1 − z) ⊙ h + z ⊙ c
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Gru {
    pub wz: Matrix,
    pub wr: Matrix,
    pub wh: Matrix,
    pub uz: Matrix,
    pub ur: Matrix,
    pub uh: Matrix,
    pub bz: Vec<f64>,
    pub br: Vec<f64>,
    pub bh: Vec<f64>,
}

/// Intermediate values of one GRU pass, kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct GruTrace {
    pub inputs: Vec<Vec<f64>>,
    /// `h_0 … h_T`; `states[t + 1]` is the output at step `t`.
    pub states: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

impl GruTrace {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.states[1..]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trace holds h_0")
    }
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            wz: Matrix::glorot(hidden, input, rng),
            wr: Matrix::glorot(hidden, input, rng),
            wh: Matrix::glorot(hidden, input, rng),
            uz: Matrix::glorot(hidden, hidden, rng),
            ur: Matrix::glorot(hidden, hidden, rng),
            uh: Matrix::glorot(hidden, hidden, rng),
            bz: vec![0.0; hidden],
            br: vec![0.0; hidden],
            bh: vec![0.0; hidden],
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            wz: Matrix::zeros(hidden, input),
            wr: Matrix::zeros(hidden, input),
            wh: Matrix::zeros(hidden, input),
            uz: Matrix::zeros(hidden, hidden),
            ur: Matrix::zeros(hidden, hidden),
            uh: Matrix::zeros(hidden, hidden),
            bz: vec![0.0; hidden],
            br: vec![0.0; hidden],
            bh: vec![0.0; hidden],
        }
    }

    pub fn input_size(&self) -> usize {
        self.wz.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.uz.rows()
    }

    pub fn forward(&self, inputs: Vec<Vec<f64>>, h0: &[f64]) -> GruTrace {
        let n = self.hidden_size();
        let steps = inputs.len();
        let mut trace = GruTrace {
            states: Vec::with_capacity(steps + 1),
            z: Vec::with_capacity(steps),
            r: Vec::with_capacity(steps),
            c: Vec::with_capacity(steps),
            inputs: Vec::new(),
        };
        trace.states.push(h0.to_vec());
        for x in &inputs {
            let h = trace.states.last().unwrap();
            let mut z = self.bz.clone();
            self.wz.mul_vec_acc(x, &mut z);
            self.uz.mul_vec_acc(h, &mut z);
            z.iter_mut().for_each(|v| *v = sigmoid(*v));

            let mut r = self.br.clone();
            self.wr.mul_vec_acc(x, &mut r);
            self.ur.mul_vec_acc(h, &mut r);
            r.iter_mut().for_each(|v| *v = sigmoid(*v));

            let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
            let mut c = self.bh.clone();
            self.wh.mul_vec_acc(x, &mut c);
            self.uh.mul_vec_acc(&rh, &mut c);
            c.iter_mut().for_each(|v| *v = v.tanh());

            let next: Vec<f64> = (0..n).map(|i| (1.0 - z[i]) * h[i] + z[i] * c[i]).collect();
            trace.z.push(z);
            trace.r.push(r);
            trace.c.push(c);
            trace.states.push(next);
        }
        trace.inputs = inputs;
        trace
    }

    /// Backpropagation through time.
    ///
    /// `d_outputs[t]` is the loss gradient w.r.t. the output at step `t`
    /// (including any gradient on the final state). Returns the input
    /// gradients per step and the gradient w.r.t. `h_0`.
    pub fn backward(
        &self,
        trace: &GruTrace,
        d_outputs: &[Vec<f64>],
        grad: &mut Gru,
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.hidden_size();
        let steps = trace.inputs.len();
        debug_assert_eq!(d_outputs.len(), steps);
        let mut dxs = vec![vec![0.0; self.input_size()]; steps];
        let mut dh_next = vec![0.0; n];
        let mut dac = vec![0.0; n];
        let mut daz = vec![0.0; n];
        let mut dar = vec![0.0; n];

        for t in (0..steps).rev() {
            let x = &trace.inputs[t];
            let h = &trace.states[t];
            let (z, r, c) = (&trace.z[t], &trace.r[t], &trace.c[t]);
            let dh: Vec<f64> = dh_next.iter().zip(&d_outputs[t]).map(|(a, b)| a + b).collect();

            let mut dh_prev = vec![0.0; n];
            for i in 0..n {
                dac[i] = dh[i] * z[i] * (1.0 - c[i] * c[i]);
                daz[i] = dh[i] * (c[i] - h[i]) * z[i] * (1.0 - z[i]);
                dh_prev[i] = dh[i] * (1.0 - z[i]);
            }
            let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
            grad.wh.add_outer(&dac, x);
            grad.uh.add_outer(&dac, &rh);
            add_into(&mut grad.bh, &dac);

            let mut drh = vec![0.0; n];
            self.uh.mul_t_vec_acc(&dac, &mut drh);
            for i in 0..n {
                dar[i] = drh[i] * h[i] * r[i] * (1.0 - r[i]);
                dh_prev[i] += drh[i] * r[i];
            }
            grad.wz.add_outer(&daz, x);
            grad.uz.add_outer(&daz, h);
            add_into(&mut grad.bz, &daz);
            grad.wr.add_outer(&dar, x);
            grad.ur.add_outer(&dar, h);
            add_into(&mut grad.br, &dar);

            let dx = &mut dxs[t];
            self.wz.mul_t_vec_acc(&daz, dx);
            self.wr.mul_t_vec_acc(&dar, dx);
            self.wh.mul_t_vec_acc(&dac, dx);
            self.uz.mul_t_vec_acc(&daz, &mut dh_prev);
            self.ur.mul_t_vec_acc(&dar, &mut dh_prev);
            dh_next = dh_prev;
        }
        (dxs, dh_next)
    }
}

impl Parameters for Gru {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for m in [&self.wz, &self.wr, &self.wh, &self.uz, &self.ur, &self.uh] {
            f(m.data());
        }
        f(&self.bz);
        f(&self.br);
        f(&self.bh);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for m in [
            &mut self.wz,
            &mut self.wr,
            &mut self.wh,
            &mut self.uz,
            &mut self.ur,
            &mut self.uh,
        ] {
            f(m.data_mut());
        }
        f(&mut self.bz);
        f(&mut self.br);
        f(&mut self.bh);
    }
}

/// Forward and backward GRU over the same sequence; outputs are `[h_fwd; h_bwd]` per step.
#[derive(Clone, Debug, PartialEq)]
pub struct BiGru {
    pub forward: Gru,
    pub backward: Gru,
}

pub struct BiGruTrace {
    pub fwd: GruTrace,
    /// Runs over the time-reversed sequence.
    pub bwd: GruTrace,
}

impl BiGruTrace {
    pub fn outputs(&self) -> Vec<Vec<f64>> {
        let steps = self.fwd.inputs.len();
        (0..steps)
            .map(|t| {
                let mut o = self.fwd.states[t + 1].clone();
                o.extend_from_slice(&self.bwd.states[steps - t]);
                o
            })
            .collect()
    }
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            forward: Gru::new(input, hidden, rng),
            backward: Gru::new(input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            forward: Gru::zeros(input, hidden),
            backward: Gru::zeros(input, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn run(&self, inputs: Vec<Vec<f64>>, h0_fwd: &[f64], h0_bwd: &[f64]) -> BiGruTrace {
        let reversed: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
        BiGruTrace {
            fwd: self.forward.forward(inputs, h0_fwd),
            bwd: self.backward.forward(reversed, h0_bwd),
        }
    }

    /// Returns per-step input gradients and the gradients of both initial states.
    pub fn backprop(
        &self,
        trace: &BiGruTrace,
        d_outputs: &[Vec<f64>],
        grad: &mut BiGru,
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let n = self.hidden_size();
        let steps = d_outputs.len();
        let d_fwd: Vec<Vec<f64>> = d_outputs.iter().map(|d| d[..n].to_vec()).collect();
        let d_bwd: Vec<Vec<f64>> = d_outputs.iter().rev().map(|d| d[n..].to_vec()).collect();
        let (mut dx, dh0_f) = self.forward.backward(&trace.fwd, &d_fwd, &mut grad.forward);
        let (dx_rev, dh0_b) = self.backward.backward(&trace.bwd, &d_bwd, &mut grad.backward);
        for t in 0..steps {
            add_into(&mut dx[t], &dx_rev[steps - 1 - t]);
        }
        (dx, dh0_f, dh0_b)
    }
}

impl Parameters for BiGru {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.forward.visit(f);
        self.backward.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.forward.visit_mut(f);
        self.backward.visit_mut(f);
    }
}

/// Inverted-dropout mask: kept units are scaled by `1 / (1 − rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

#[inline]
pub(crate) fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
pub(crate) fn mul_into(dst: &mut [f64], mask: &[f64]) {
    for (d, m) in dst.iter_mut().zip(mask) {
        *d *= m;
    }
}
