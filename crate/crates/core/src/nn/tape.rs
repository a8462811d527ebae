//! Minimal reverse-mode autodiff over a flat operation list.
//!
//! Forward passes are recorded eagerly; `backward` walks the list in reverse
//! and accumulates gradients with respect to any node (inputs included, which
//! is how loss gradients reach the latent vector and image pixels through
//! frozen models). Parameter gradients are optional so inference-time
//! gradient queries skip the rank-1 accumulation entirely.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::nn::math::{self, Mat};

static NEXT_SET_UID: AtomicU64 = AtomicU64::new(1);

/// Named parameter tensors of one trainable unit.
#[derive(Debug)]
pub struct ParamSet {
    uid: u64,
    entries: Vec<(String, Mat)>,
}

/// Handle to one tensor inside a specific `ParamSet`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId {
    set_uid: u64,
    index: usize,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { uid: NEXT_SET_UID.fetch_add(1, Ordering::Relaxed), entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, mat: Mat) -> ParamId {
        let id = ParamId { set_uid: self.uid, index: self.entries.len() };
        self.entries.push((name.into(), mat));
        id
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        assert_eq!(id.set_uid, self.uid, "parameter used with a foreign set");
        &self.entries[id.index].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        assert_eq!(id.set_uid, self.uid, "parameter used with a foreign set");
        &mut self.entries[id.index].1
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = (&str, &mut Mat)> {
        self.entries.iter_mut().map(|(n, m)| (n.as_str(), m))
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.len()).sum()
    }

    /// Ids in declaration order, for rebuilding wiring after a load.
    pub fn id(&self, index: usize) -> ParamId {
        ParamId { set_uid: self.uid, index }
    }
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        // a clone owns distinct buffers, so it gets a fresh identity
        ParamSet {
            uid: NEXT_SET_UID.fetch_add(1, Ordering::Relaxed),
            entries: self.entries.clone(),
        }
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Matvec { w: ParamId, x: NodeId },
    AddBias { b: ParamId, x: NodeId },
    EmbedRow { table: ParamId, row: usize },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Slice { x: NodeId, offset: usize, len: usize },
    LogSoftmax(NodeId),
    PickNegLog { logp: NodeId, index: usize },
    SquaredDiff(NodeId, NodeId),
    SumList(Vec<NodeId>),
    Scale { x: NodeId, c: f64 },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape<'a> {
    sets: HashMap<u64, &'a ParamSet>,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { sets: HashMap::new(), nodes: Vec::new() }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    fn use_param(&mut self, set: &'a ParamSet, id: ParamId) -> &'a Mat {
        self.sets.insert(set.uid(), set);
        set.get(id)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, values: Vec<f64>) -> NodeId {
        self.push(values, Op::Input)
    }

    pub fn matvec(&mut self, set: &'a ParamSet, w: ParamId, x: NodeId) -> NodeId {
        let m = self.use_param(set, w);
        let y = math::matvec(m, &self.nodes[x].value);
        self.push(y, Op::Matvec { w, x })
    }

    pub fn add_bias(&mut self, set: &'a ParamSet, b: ParamId, x: NodeId) -> NodeId {
        let m = self.use_param(set, b);
        debug_assert_eq!(m.cols, 1);
        let y = math::add(&self.nodes[x].value, &m.data);
        self.push(y, Op::AddBias { b, x })
    }

    pub fn embed_row(&mut self, set: &'a ParamSet, table: ParamId, row: usize) -> NodeId {
        let m = self.use_param(set, table);
        let y = m.row(row).to_vec();
        self.push(y, Op::EmbedRow { table, row })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = math::add(&self.nodes[a].value, &self.nodes[b].value);
        self.push(y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y: Vec<f64> =
            self.nodes[a].value.iter().zip(&self.nodes[b].value).map(|(x, z)| x - z).collect();
        self.push(y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = math::hadamard(&self.nodes[a].value, &self.nodes[b].value);
        self.push(y, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = math::tanh_vec(&self.nodes[x].value);
        self.push(y, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = math::sigmoid_vec(&self.nodes[x].value);
        self.push(y, Op::Sigmoid(x))
    }

    pub fn slice(&mut self, x: NodeId, offset: usize, len: usize) -> NodeId {
        let y = self.nodes[x].value[offset..offset + len].to_vec();
        self.push(y, Op::Slice { x, offset, len })
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let y = math::log_softmax(&self.nodes[x].value);
        self.push(y, Op::LogSoftmax(x))
    }

    /// Scalar: negative log-probability of one index.
    pub fn pick_neg_log(&mut self, logp: NodeId, index: usize) -> NodeId {
        let y = vec![-self.nodes[logp].value[index]];
        self.push(y, Op::PickNegLog { logp, index })
    }

    /// Scalar: squared Euclidean distance between two equal-length vectors.
    pub fn squared_diff(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = vec![math::squared_distance(&self.nodes[a].value, &self.nodes[b].value)];
        self.push(y, Op::SquaredDiff(a, b))
    }

    /// Scalar: sum of scalar nodes.
    pub fn sum_scalars(&mut self, xs: Vec<NodeId>) -> NodeId {
        let y = vec![xs.iter().map(|&id| self.nodes[id].value[0]).sum()];
        self.push(y, Op::SumList(xs))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let y: Vec<f64> = self.nodes[x].value.iter().map(|v| v * c).collect();
        self.push(y, Op::Scale { x, c })
    }

    /// Reverse pass from a scalar output: node gradients only. This is the
    /// inference-time path (gradients with respect to h or pixels); the
    /// rank-1 parameter accumulations are skipped entirely.
    pub fn backward(&self, output: NodeId) -> Gradients {
        self.backward_impl(output, None)
    }

    /// Reverse pass that also accumulates parameter gradients into a
    /// caller-owned store, which the caller resets between samples. Reusing
    /// the store avoids re-allocating every gradient tensor per sample.
    pub fn backward_train(&self, output: NodeId, store: &mut GradStore) -> Gradients {
        self.backward_impl(output, Some(store))
    }

    fn backward_impl(&self, output: NodeId, mut store: Option<&mut GradStore>) -> Gradients {
        debug_assert_eq!(self.nodes[output].value.len(), 1, "backward needs a scalar output");
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        node_grads[output] = Some(vec![1.0]);

        for id in (0..=output).rev() {
            let Some(gy) = node_grads[id].clone() else { continue };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Matvec { w, x } => {
                    let set = self.sets[&w.set_uid];
                    let m = set.get(*w);
                    let gx = grad_slot(&mut node_grads, *x, m.cols);
                    math::matvec_transpose_accum(m, &gy, gx);
                    if let Some(store) = store.as_deref_mut() {
                        let gw = store.slot(set, *w);
                        math::outer_accum(gw, &gy, &self.nodes[*x].value);
                    }
                }
                Op::AddBias { b, x } => {
                    accum(grad_slot(&mut node_grads, *x, gy.len()), &gy);
                    if let Some(store) = store.as_deref_mut() {
                        let set = self.sets[&b.set_uid];
                        let gb = store.slot(set, *b);
                        accum(&mut gb.data, &gy);
                    }
                }
                Op::EmbedRow { table, row } => {
                    if let Some(store) = store.as_deref_mut() {
                        let set = self.sets[&table.set_uid];
                        let gt = store.slot(set, *table);
                        accum(gt.row_mut(*row), &gy);
                    }
                }
                Op::Add(a, b) => {
                    accum(grad_slot(&mut node_grads, *a, gy.len()), &gy);
                    accum(grad_slot(&mut node_grads, *b, gy.len()), &gy);
                }
                Op::Sub(a, b) => {
                    accum(grad_slot(&mut node_grads, *a, gy.len()), &gy);
                    let gb = grad_slot(&mut node_grads, *b, gy.len());
                    for (out, g) in gb.iter_mut().zip(&gy) {
                        *out -= g;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[*a].value.clone();
                    let bv = &self.nodes[*b].value;
                    let ga = grad_slot(&mut node_grads, *a, gy.len());
                    for ((out, g), v) in ga.iter_mut().zip(&gy).zip(bv) {
                        *out += g * v;
                    }
                    let gb = grad_slot(&mut node_grads, *b, gy.len());
                    for ((out, g), v) in gb.iter_mut().zip(&gy).zip(&av) {
                        *out += g * v;
                    }
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[id].value;
                    let gx = grad_slot(&mut node_grads, *x, gy.len());
                    for ((out, g), v) in gx.iter_mut().zip(&gy).zip(y) {
                        *out += g * (1.0 - v * v);
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[id].value;
                    let gx = grad_slot(&mut node_grads, *x, gy.len());
                    for ((out, g), v) in gx.iter_mut().zip(&gy).zip(y) {
                        *out += g * v * (1.0 - v);
                    }
                }
                Op::Slice { x, offset, len } => {
                    let parent_len = self.nodes[*x].value.len();
                    let gx = grad_slot(&mut node_grads, *x, parent_len);
                    accum(&mut gx[*offset..*offset + *len], &gy);
                }
                Op::LogSoftmax(x) => {
                    let y = &self.nodes[id].value;
                    let gsum: f64 = gy.iter().sum();
                    let gx = grad_slot(&mut node_grads, *x, gy.len());
                    for ((out, g), v) in gx.iter_mut().zip(&gy).zip(y) {
                        *out += g - v.exp() * gsum;
                    }
                }
                Op::PickNegLog { logp, index } => {
                    let parent_len = self.nodes[*logp].value.len();
                    let gx = grad_slot(&mut node_grads, *logp, parent_len);
                    gx[*index] -= gy[0];
                }
                Op::SquaredDiff(a, b) => {
                    let av = self.nodes[*a].value.clone();
                    let bv = self.nodes[*b].value.clone();
                    let ga = grad_slot(&mut node_grads, *a, av.len());
                    for ((out, x), z) in ga.iter_mut().zip(&av).zip(&bv) {
                        *out += gy[0] * 2.0 * (x - z);
                    }
                    let gb = grad_slot(&mut node_grads, *b, av.len());
                    for ((out, x), z) in gb.iter_mut().zip(&av).zip(&bv) {
                        *out -= gy[0] * 2.0 * (x - z);
                    }
                }
                Op::SumList(xs) => {
                    for &x in xs {
                        grad_slot(&mut node_grads, x, 1)[0] += gy[0];
                    }
                }
                Op::Scale { x, c } => {
                    let gx = grad_slot(&mut node_grads, *x, gy.len());
                    for (out, g) in gx.iter_mut().zip(&gy) {
                        *out += g * c;
                    }
                }
            }
        }

        Gradients { node_grads }
    }
}

fn grad_slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    grads[id].get_or_insert_with(|| vec![0.0; len])
}

fn accum(out: &mut [f64], g: &[f64]) {
    debug_assert_eq!(out.len(), g.len());
    for (o, v) in out.iter_mut().zip(g) {
        *o += v;
    }
}

#[derive(Debug)]
pub struct Gradients {
    node_grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the backward output with respect to a node; returns None
    /// when the node never influenced the output.
    pub fn wrt(&self, node: NodeId) -> Option<&[f64]> {
        self.node_grads.get(node).and_then(|g| g.as_deref())
    }
}

/// Reusable parameter-gradient buffers, keyed by parameter set.
#[derive(Debug, Default)]
pub struct GradStore {
    per_set: HashMap<u64, Vec<Option<Mat>>>,
}

impl GradStore {
    pub fn new() -> Self {
        GradStore::default()
    }

    /// Zeroes every buffer in place, keeping the allocations.
    pub fn reset(&mut self) {
        for slots in self.per_set.values_mut() {
            for m in slots.iter_mut().flatten() {
                m.fill(0.0);
            }
        }
    }

    fn slot(&mut self, set: &ParamSet, id: ParamId) -> &mut Mat {
        let per_set = self
            .per_set
            .entry(set.uid())
            .or_insert_with(|| std::iter::repeat_with(|| None).take(set.len()).collect());
        per_set[id.index].get_or_insert_with(|| {
            let m = set.get(id);
            Mat::zeros(m.rows, m.cols)
        })
    }

    pub fn param(&self, set: &ParamSet, id: ParamId) -> Option<&Mat> {
        self.per_set.get(&set.uid()).and_then(|v| v[id.index].as_ref())
    }

    /// Gradients for a set, indexed like its declaration order.
    pub fn params_for(&self, set: &ParamSet) -> Option<&[Option<Mat>]> {
        self.per_set.get(&set.uid()).map(|v| v.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Builds a small two-layer net with every op in play and checks both
    /// input and parameter gradients against central finite differences.
    fn build_loss(set: &ParamSet, ids: &[ParamId], x: &[f64], target: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let xin = tape.input(x.to_vec());
        let t = tape.input(target.to_vec());
        let h = tape.matvec(set, ids[0], xin);
        let h = tape.add_bias(set, ids[1], h);
        let h = tape.tanh(h);
        let e = tape.embed_row(set, ids[2], 1);
        let h = tape.mul(h, e);
        let y = tape.matvec(set, ids[3], h);
        let y = tape.sigmoid(y);
        let part = tape.slice(y, 0, 2);
        let lp = tape.log_softmax(part);
        let nll = tape.pick_neg_log(lp, 0);
        let sq = tape.squared_diff(y, t);
        let sq = tape.scale(sq, 0.5);
        let loss = tape.sum_scalars(vec![nll, sq]);
        tape.scalar(loss)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut set = ParamSet::new();
        let ids = vec![
            set.add("w1", Mat::glorot(4, 3, &mut rng)),
            set.add("b1", Mat::glorot(4, 1, &mut rng)),
            set.add("emb", Mat::glorot(3, 4, &mut rng)),
            set.add("w2", Mat::glorot(3, 4, &mut rng)),
        ];
        let x = vec![0.3, -0.7, 0.9];
        let target = vec![0.2, 0.8, 0.5];

        // analytic
        let mut tape = Tape::new();
        let xin = tape.input(x.clone());
        let t = tape.input(target.clone());
        let h = tape.matvec(&set, ids[0], xin);
        let h = tape.add_bias(&set, ids[1], h);
        let h = tape.tanh(h);
        let e = tape.embed_row(&set, ids[2], 1);
        let h = tape.mul(h, e);
        let y = tape.matvec(&set, ids[3], h);
        let y = tape.sigmoid(y);
        let part = tape.slice(y, 0, 2);
        let lp = tape.log_softmax(part);
        let nll = tape.pick_neg_log(lp, 0);
        let sq = tape.squared_diff(y, t);
        let sq = tape.scale(sq, 0.5);
        let loss = tape.sum_scalars(vec![nll, sq]);
        let mut store = GradStore::new();
        let grads = tape.backward_train(loss, &mut store);

        let eps = 1e-6;
        // input gradient
        let gx = grads.wrt(xin).unwrap();
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (build_loss(&set, &ids, &xp, &target) - build_loss(&set, &ids, &xm, &target))
                / (2.0 * eps);
            let rel = (gx[i] - fd).abs() / gx[i].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-6, "input {i}: analytic {} vs fd {fd}", gx[i]);
        }
        // parameter gradients, a few coordinates per tensor
        for (pi, &pid) in ids.iter().enumerate() {
            let mat = set.get(pid).clone();
            let gp = store.param(&set, pid).expect("param grad");
            for k in [0usize, mat.len() / 2, mat.len() - 1] {
                let mut sp = set.clone();
                let mut sm = set.clone();
                // rebuilt ids for the clones share indices
                sp.get_mut(sp.id(pi)).data[k] += eps;
                sm.get_mut(sm.id(pi)).data[k] -= eps;
                let ids_p: Vec<ParamId> = (0..4).map(|i| sp.id(i)).collect();
                let ids_m: Vec<ParamId> = (0..4).map(|i| sm.id(i)).collect();
                let fd = (build_loss(&sp, &ids_p, &x, &target)
                    - build_loss(&sm, &ids_m, &x, &target))
                    / (2.0 * eps);
                let rel = (gp.data[k] - fd).abs() / gp.data[k].abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-6, "param {pi}[{k}]: analytic {} vs fd {fd}", gp.data[k]);
            }
        }
    }

    #[test]
    fn unreached_nodes_have_no_gradient() {
        let mut set = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = set.add("w", Mat::glorot(2, 2, &mut rng));
        let mut tape = Tape::new();
        let a = tape.input(vec![1.0, 2.0]);
        let unused = tape.input(vec![3.0]);
        let y = tape.matvec(&set, w, a);
        let t = tape.input(vec![0.0, 0.0]);
        let loss = tape.squared_diff(y, t);
        let grads = tape.backward(loss, false);
        assert!(grads.wrt(unused).is_none());
        assert!(grads.wrt(a).is_some());
        assert!(grads.param(&set, w).is_none(), "param grads disabled");
    }
}
