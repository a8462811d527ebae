//! Layer building blocks. Each layer owns parameter handles into a shared
//! `ParamSet` and offers two drivers over the same kernels: a tape path that
//! records operations for backprop and a value path for plain inference.

use rand::Rng;

use crate::nn::math::{self, Mat};
use crate::nn::tape::{NodeId, ParamId, ParamSet, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply_tape(self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }

    fn apply_value(self, mut x: Vec<f64>) -> Vec<f64> {
        match self {
            Activation::Identity => x,
            Activation::Tanh => {
                x.iter_mut().for_each(|v| *v = v.tanh());
                x
            }
            Activation::Sigmoid => {
                x.iter_mut().for_each(|v| *v = math::sigmoid(*v));
                x
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w = params.add(format!("{name}.w"), Mat::glorot(out_dim, in_dim, rng));
        let b = params.add(format!("{name}.b"), Mat::zeros(out_dim, 1));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward<'a>(&self, tape: &mut Tape<'a>, params: &'a ParamSet, x: NodeId) -> NodeId {
        let y = tape.matvec(params, self.w, x);
        tape.add_bias(params, self.b, y)
    }

    pub fn eval(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut y = math::matvec(params.get(self.w), x);
        for (v, b) in y.iter_mut().zip(&params.get(self.b).data) {
            *v += b;
        }
        y
    }
}

/// Fully connected stack with one activation per layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<(Linear, Activation)>,
}

impl Mlp {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2);
        assert_eq!(activations.len(), dims.len() - 1);
        let layers = dims
            .windows(2)
            .zip(activations)
            .enumerate()
            .map(|(i, (pair, &act))| {
                (Linear::new(params, &format!("{name}.{i}"), pair[0], pair[1], rng), act)
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].0.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().0.out_dim
    }

    pub fn forward<'a>(&self, tape: &mut Tape<'a>, params: &'a ParamSet, x: NodeId) -> NodeId {
        let mut h = x;
        for (linear, act) in &self.layers {
            h = linear.forward(tape, params, h);
            h = act.apply_tape(tape, h);
        }
        h
    }

    pub fn eval(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (linear, act) in &self.layers {
            h = act.apply_value(linear.eval(params, &h));
        }
        h
    }
}

/// LSTM cell with stacked gates in i, f, o, g order. The forget-gate bias
/// starts at 1 so early training does not wash out the cell state.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let wx = params.add(format!("{name}.wx"), Mat::glorot(4 * hidden, input_dim, rng));
        let wh = params.add(format!("{name}.wh"), Mat::glorot(4 * hidden, hidden, rng));
        let mut bias = Mat::zeros(4 * hidden, 1);
        bias.data[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = params.add(format!("{name}.b"), bias);
        Lstm { wx, wh, b, input_dim, hidden }
    }

    pub fn step<'a>(
        &self,
        tape: &mut Tape<'a>,
        params: &'a ParamSet,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> (NodeId, NodeId) {
        let n = self.hidden;
        let gx = tape.matvec(params, self.wx, x);
        let gh = tape.matvec(params, self.wh, h);
        let pre = tape.add(gx, gh);
        let pre = tape.add_bias(params, self.b, pre);
        let i_pre = tape.slice(pre, 0, n);
        let i = tape.sigmoid(i_pre);
        let f_pre = tape.slice(pre, n, n);
        let f = tape.sigmoid(f_pre);
        let o_pre = tape.slice(pre, 2 * n, n);
        let o = tape.sigmoid(o_pre);
        let g_pre = tape.slice(pre, 3 * n, n);
        let g = tape.tanh(g_pre);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c2 = tape.add(fc, ig);
        let c2_tanh = tape.tanh(c2);
        let h2 = tape.mul(o, c2_tanh);
        (h2, c2)
    }

    pub fn step_value(
        &self,
        params: &ParamSet,
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.hidden;
        let mut pre = math::matvec(params.get(self.wx), x);
        let ph = math::matvec(params.get(self.wh), h);
        for ((v, a), b) in pre.iter_mut().zip(&ph).zip(&params.get(self.b).data) {
            *v += a + b;
        }
        let mut c2 = vec![0.0; n];
        let mut h2 = vec![0.0; n];
        for k in 0..n {
            let i = math::sigmoid(pre[k]);
            let f = math::sigmoid(pre[n + k]);
            let o = math::sigmoid(pre[2 * n + k]);
            let g = pre[3 * n + k].tanh();
            c2[k] = f * c[k] + i * g;
            h2[k] = o * c2[k].tanh();
        }
        (h2, c2)
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        vocab_size: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let table = params.add(name.to_string(), Mat::glorot(vocab_size, dim, rng));
        Embedding { table, vocab_size, dim }
    }

    pub fn lookup<'a>(&self, tape: &mut Tape<'a>, params: &'a ParamSet, token: u32) -> NodeId {
        tape.embed_row(params, self.table, token as usize)
    }

    pub fn eval(&self, params: &ParamSet, token: u32) -> Vec<f64> {
        params.get(self.table).row(token as usize).to_vec()
    }
}
