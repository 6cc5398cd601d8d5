//! A single-direction LSTM layer with explicit forward trace and
//! backpropagation through time.
//!
//! Gate pre-activations are stacked as `[input; forget; cell; output]`, each
//! block `hidden` wide.

use rand::Rng;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `4H × D` input weights.
    pub w: Matrix,
    /// `4H × H` recurrent weights.
    pub u: Matrix,
    pub b: Vec<f64>,
}

/// Everything the backward pass needs from one forward run.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub xs: Vec<Vec<f64>>,
    /// `hs[t + 1]` is the output at step `t`; `hs[0]` is the zero state.
    pub hs: Vec<Vec<f64>>,
    pub cs: Vec<Vec<f64>>,
    /// Post-activation gates per step.
    gates: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.hs[1..]
    }

    pub fn last(&self) -> &[f64] {
        self.hs.last().expect("initial state present")
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            w: Matrix::zeros(4 * hidden, input),
            u: Matrix::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform in ±√(3 / fan_in), with fan_in the column count for the
    /// matrices and `input + hidden` for the bias.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut l = Lstm::zeros(input, hidden);
        fill_uniform(&mut l.w.data, input, rng);
        fill_uniform(&mut l.u.data, hidden, rng);
        fill_uniform(&mut l.b, input + hidden, rng);
        l
    }

    pub fn hidden(&self) -> usize {
        self.u.cols
    }

    pub fn input(&self) -> usize {
        self.w.cols
    }

    pub fn forward(&self, xs: Vec<Vec<f64>>) -> LstmTrace {
        let h = self.hidden();
        let mut hs = Vec::with_capacity(xs.len() + 1);
        let mut cs = Vec::with_capacity(xs.len() + 1);
        let mut gates = Vec::with_capacity(xs.len());
        hs.push(vec![0.0; h]);
        cs.push(vec![0.0; h]);
        for x in &xs {
            let mut z = self.b.clone();
            self.w.matvec_add(x, &mut z);
            self.u.matvec_add(hs.last().unwrap(), &mut z);
            let c_prev = cs.last().unwrap();
            let mut c = vec![0.0; h];
            let mut out = vec![0.0; h];
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                z[k] = i;
                z[h + k] = f;
                z[2 * h + k] = g;
                z[3 * h + k] = o;
                c[k] = f * c_prev[k] + i * g;
                out[k] = o * c[k].tanh();
            }
            gates.push(z);
            cs.push(c);
            hs.push(out);
        }
        LstmTrace { xs, hs, cs, gates }
    }

    /// Accumulates parameter gradients into `grad` given the loss gradient
    /// with respect to every output, and returns the input gradients.
    pub fn backward(
        &self,
        trace: &LstmTrace,
        d_out: &[Vec<f64>],
        grad: &mut Lstm,
    ) -> Vec<Vec<f64>> {
        let h = self.hidden();
        let steps = trace.xs.len();
        let mut dxs = vec![vec![0.0; self.input()]; steps];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gates = &trace.gates[t];
            let c = &trace.cs[t + 1];
            let c_prev = &trace.cs[t];
            for k in 0..h {
                let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
                let dh = d_out[t][k] + dh_next[k];
                let tc = c[k].tanh();
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev[k];
                dc_next[k] = dc * f;
                dz[k] = d_i * i * (1.0 - i);
                dz[h + k] = d_f * f * (1.0 - f);
                dz[2 * h + k] = d_g * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
            }
            grad.w.add_outer(&dz, &trace.xs[t]);
            grad.u.add_outer(&dz, &trace.hs[t]);
            for (gb, d) in grad.b.iter_mut().zip(&dz) {
                *gb += d;
            }
            self.w.matvec_t_add(&dz, &mut dxs[t]);
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            self.u.matvec_t_add(&dz, &mut dh_next);
        }
        dxs
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 3] {
        [&self.w.data, &self.u.data, &self.b]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w.data, &mut self.u.data, &mut self.b]
    }

    pub(crate) fn shapes(&self) -> [Vec<usize>; 3] {
        [
            vec![self.w.rows, self.w.cols],
            vec![self.u.rows, self.u.cols],
            vec![self.b.len()],
        ]
    }
}

pub(crate) fn fill_uniform<R: Rng + ?Sized>(data: &mut [f64], fan_in: usize, rng: &mut R) {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    for x in data {
        *x = rng.random_range(-bound..bound);
    }
}
