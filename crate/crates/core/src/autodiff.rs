//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a tape: every op appends a node whose inputs are earlier
//! nodes, so node ids are already a topological order and [`Graph::backward`]
//! walks them in reverse exactly once. A graph built with
//! [`Graph::inference`] evaluates ops without recording any backward rule.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::tensor::{numel, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

type BackwardFn = Box<dyn Fn(&Tensor, &Tensor, &Tensor) -> Tensor>;

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    ScaleRows(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Concat { parts: Vec<usize>, axis: usize },
    Slice { src: usize, axis: usize, start: usize },
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Square(usize),
    Softmax { src: usize, axis: usize },
    Norm(usize),
    Squash(usize),
    Sum(usize),
    SumRows(usize),
    Transpose(usize),
    Reshape(usize),
    GatherRows { table: usize, ids: Vec<usize> },
    Dropout { src: usize, mask: Vec<f64> },
    CapsuleVotes { u: usize, w: usize, b: usize },
    WeightedVoteSum { c: usize, votes: usize },
    VoteAgreement { votes: usize, v: usize },
    Custom { src: usize, backward: BackwardFn },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// The tape. Single-writer; values are immutable once pushed.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    record: bool,
    dropout_rng: Option<RefCell<SplitMix64>>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.borrow().len())
            .field("record", &self.record)
            .field("dropout", &self.dropout_rng.is_some())
            .finish()
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(axis < shape.len(), "axis {axis} out of range for shape {shape:?}");
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_axis(shape: &[usize]) -> (usize, usize) {
    let d = *shape.last().expect("op needs rank >= 1");
    (numel(shape) / d.max(1), d)
}

impl Graph {
    /// Recording graph, dropout disabled.
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()), record: true, dropout_rng: None }
    }

    /// Evaluation-only graph: values are computed, nothing is recorded.
    pub fn inference() -> Self {
        Graph { nodes: RefCell::new(Vec::new()), record: false, dropout_rng: None }
    }

    /// Enables train-mode dropout masks drawn from a seeded stream.
    pub fn with_dropout(mut self, seed: u64) -> Self {
        self.dropout_rng = Some(RefCell::new(SplitMix64::seed_from_u64(seed)));
        self
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// Scalar value of a single-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn push(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = self.record && inputs.iter().any(|&i| nodes[i].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node { value: Rc::new(value), op, requires_grad });
        Var(nodes.len() - 1)
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op: Op::Leaf, requires_grad: requires_grad && self.record });
        Var(nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert!(
            va.rank() == 2 && vb.rank() == 2 && va.shape()[1] == vb.shape()[0],
            "matmul shape mismatch: {:?} x {:?}",
            va.shape(),
            vb.shape()
        );
        self.push(va.matmul(&vb), Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    fn same_shape(&self, what: &str, a: &Tensor, b: &Tensor) {
        assert_eq!(a.shape(), b.shape(), "{what} shape mismatch: {:?} vs {:?}", a.shape(), b.shape());
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.same_shape("add", &va, &vb);
        self.push(va.zip_map(&vb, |x, y| x + y), Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.same_shape("sub", &va, &vb);
        self.push(va.zip_map(&vb, |x, y| x - y), Op::Sub(a.0, b.0), &[a.0, b.0])
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.same_shape("mul", &va, &vb);
        self.push(va.zip_map(&vb, |x, y| x * y), Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    /// `m[i, :] + row` for every row of an `n x k` matrix (or a 1-D `k` vector).
    pub fn add_row(&self, m: Var, row: Var) -> Var {
        let (vm, vr) = (self.value(m), self.value(row));
        let k = *vm.shape().last().unwrap_or(&0);
        assert!(vr.rank() == 1 && vr.len() == k && vm.rank() >= 1, "add_row shape mismatch: {:?} + {:?}", vm.shape(), vr.shape());
        let mut out = (*vm).clone();
        for chunk in out.data_mut().chunks_mut(k) {
            for (o, b) in chunk.iter_mut().zip(vr.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(m.0, row.0), &[m.0, row.0])
    }

    /// Scales row `i` of an `n x k` matrix by `s[i]`.
    pub fn scale_rows(&self, m: Var, s: Var) -> Var {
        let (vm, vs) = (self.value(m), self.value(s));
        assert!(
            vm.rank() == 2 && vs.rank() == 1 && vs.len() == vm.shape()[0],
            "scale_rows shape mismatch: {:?} by {:?}",
            vm.shape(),
            vs.shape()
        );
        let k = vm.shape()[1];
        let mut out = (*vm).clone();
        for (chunk, &f) in out.data_mut().chunks_mut(k.max(1)).zip(vs.data()) {
            for o in chunk {
                *o *= f;
            }
        }
        self.push(out, Op::ScaleRows(m.0, s.0), &[m.0, s.0])
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a.0, s), &[a.0])
    }

    pub fn add_scalar(&self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        self.push(out, Op::AddScalar(a.0), &[a.0])
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let values: Vec<Rc<Tensor>> = parts.iter().map(|&p| self.value(p)).collect();
        let first = values[0].shape().to_vec();
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for v in &values {
            let s = v.shape();
            let ok = s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            assert!(ok, "concat shape mismatch on axis {axis}: {:?} vs {:?}", first, s);
            out_shape[axis] += s[axis];
        }
        let (outer, _, inner) = split_axis(&out_shape, axis);
        let mut out = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for v in &values {
                let block = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(Tensor::from_vec(&out_shape, out), Op::Concat { parts: ids.clone(), axis }, &ids)
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let va = self.value(a);
        let (outer, dim, inner) = split_axis(va.shape(), axis);
        assert!(start + len <= dim, "slice [{start}, {}) out of range for axis {axis} of shape {:?}", start + len, va.shape());
        let mut shape = va.shape().to_vec();
        shape[axis] = len;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            out.extend_from_slice(&va.data()[base..base + len * inner]);
        }
        self.push(Tensor::from_vec(&shape, out), Op::Slice { src: a.0, axis, start }, &[a.0])
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(out, Op::Sigmoid(a.0), &[a.0])
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a.0), &[a.0])
    }

    pub fn relu(&self, a: Var) -> Var {
        // NaN passes through so a poisoned forward pass is visible in the loss.
        let out = self.value(a).map(|x| if x < 0.0 { 0.0 } else { x });
        self.push(out, Op::Relu(a.0), &[a.0])
    }

    pub fn square(&self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a.0), &[a.0])
    }

    /// Softmax along `axis`.
    pub fn softmax(&self, a: Var, axis: usize) -> Var {
        let va = self.value(a);
        let out = softmax_along(&va, axis, None);
        self.push(out, Op::Softmax { src: a.0, axis }, &[a.0])
    }

    /// Softmax of a 1-D vector restricted to positions where `mask` is true.
    /// Masked positions get exactly zero weight.
    pub fn masked_softmax(&self, a: Var, mask: &[bool]) -> Var {
        let va = self.value(a);
        assert!(
            va.rank() == 1 && va.len() == mask.len(),
            "masked_softmax shape mismatch: {:?} vs mask of length {}",
            va.shape(),
            mask.len()
        );
        assert!(mask.iter().any(|&m| m), "masked_softmax with every position masked");
        let out = softmax_along(&va, 0, Some(mask));
        self.push(out, Op::Softmax { src: a.0, axis: 0 }, &[a.0])
    }

    /// Euclidean norm over the last axis: `[n, d] -> [n]`, `[d] -> []`.
    pub fn norm(&self, a: Var) -> Var {
        let va = self.value(a);
        let (n, d) = last_axis(va.shape());
        let out: Vec<f64> = (0..n).map(|i| va.data()[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let shape = &va.shape()[..va.rank() - 1];
        self.push(Tensor::from_vec(shape, out), Op::Norm(a.0), &[a.0])
    }

    /// `squash(x) = |x|^2 / (0.5 + |x|^2) * x / |x|` over the last axis.
    pub fn squash(&self, a: Var) -> Var {
        let va = self.value(a);
        let (n, d) = last_axis(va.shape());
        let mut out = (*va).clone();
        for i in 0..n {
            let row = &mut out.data_mut()[i * d..(i + 1) * d];
            let f = squash_factor(row.iter().map(|x| x * x).sum::<f64>().sqrt());
            for x in row {
                *x *= f;
            }
        }
        self.push(out, Op::Squash(a.0), &[a.0])
    }

    pub fn sum(&self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a.0), &[a.0])
    }

    /// Column sums of an `n x k` matrix as a `1 x k` row.
    pub fn sum_rows(&self, a: Var) -> Var {
        let va = self.value(a);
        let k = va.cols();
        let mut out = vec![0.0; k];
        for chunk in va.data().chunks(k.max(1)) {
            for (o, x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
        self.push(Tensor::from_vec(&[1, k], out), Op::SumRows(a.0), &[a.0])
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn transpose(&self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a.0), &[a.0])
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Var {
        let out = self.value(a).reshaped(shape);
        self.push(out, Op::Reshape(a.0), &[a.0])
    }

    /// Stacks `table[ids[i], :]` into an `ids.len() x k` matrix.
    pub fn gather_rows(&self, table: Var, ids: &[usize]) -> Var {
        let vt = self.value(table);
        let (rows, k) = (vt.rows(), vt.cols());
        let mut out = Vec::with_capacity(ids.len() * k);
        for &id in ids {
            assert!(id < rows, "gather_rows index {id} out of range for table {:?}", vt.shape());
            out.extend_from_slice(vt.row(id));
        }
        self.push(Tensor::from_vec(&[ids.len(), k], out), Op::GatherRows { table: table.0, ids: ids.to_vec() }, &[table.0])
    }

    /// Inverted dropout: in train mode each entry survives with probability
    /// `keep` and is scaled by `1 / keep`; otherwise identity.
    pub fn dropout(&self, a: Var, keep: f64) -> Var {
        assert!(keep > 0.0 && keep <= 1.0, "dropout keep probability {keep} not in (0, 1]");
        let Some(rng) = &self.dropout_rng else { return a };
        if keep == 1.0 {
            return a;
        }
        let va = self.value(a);
        let mask: Vec<f64> = {
            let mut rng = rng.borrow_mut();
            (0..va.len()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
        };
        let data = va.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(va.shape(), data);
        self.push(out, Op::Dropout { src: a.0, mask }, &[a.0])
    }

    /// Capsule votes `out[h, e, :] = w[e] · u[h] + b[e]` for `u: [H, d]`,
    /// `w: [E, d, d]`, `b: [E, d]`.
    pub fn capsule_votes(&self, u: Var, w: Var, b: Var) -> Var {
        let (vu, vw, vb) = (self.value(u), self.value(w), self.value(b));
        let ok = vu.rank() == 2
            && vw.rank() == 3
            && vb.rank() == 2
            && vw.shape()[1] == vu.shape()[1]
            && vw.shape()[2] == vu.shape()[1]
            && vb.shape() == &vw.shape()[..2];
        assert!(ok, "capsule_votes shape mismatch: u {:?}, w {:?}, b {:?}", vu.shape(), vw.shape(), vb.shape());
        let (h, d) = (vu.shape()[0], vu.shape()[1]);
        let e = vw.shape()[0];
        let mut out = vec![0.0; h * e * d];
        for hi in 0..h {
            let uh = vu.row(hi);
            for ej in 0..e {
                for r in 0..d {
                    let wrow = &vw.data()[(ej * d + r) * d..(ej * d + r + 1) * d];
                    let dot: f64 = wrow.iter().zip(uh).map(|(a, b)| a * b).sum();
                    out[(hi * e + ej) * d + r] = dot + vb.data()[ej * d + r];
                }
            }
        }
        self.push(Tensor::from_vec(&[h, e, d], out), Op::CapsuleVotes { u: u.0, w: w.0, b: b.0 }, &[u.0, w.0, b.0])
    }

    /// `s[e, :] = sum_h c[h, e] * votes[h, e, :]` for `c: [H, E]`, `votes: [H, E, d]`.
    pub fn weighted_vote_sum(&self, c: Var, votes: Var) -> Var {
        let (vc, vv) = (self.value(c), self.value(votes));
        assert!(
            vc.rank() == 2 && vv.rank() == 3 && vv.shape()[..2] == *vc.shape(),
            "weighted_vote_sum shape mismatch: c {:?}, votes {:?}",
            vc.shape(),
            vv.shape()
        );
        let (h, e, d) = (vv.shape()[0], vv.shape()[1], vv.shape()[2]);
        let mut out = vec![0.0; e * d];
        for hi in 0..h {
            for ej in 0..e {
                let w = vc.data()[hi * e + ej];
                let base = (hi * e + ej) * d;
                for r in 0..d {
                    out[ej * d + r] += w * vv.data()[base + r];
                }
            }
        }
        self.push(Tensor::from_vec(&[e, d], out), Op::WeightedVoteSum { c: c.0, votes: votes.0 }, &[c.0, votes.0])
    }

    /// Agreement `out[h, e] = <votes[h, e, :], v[e, :]>` for `votes: [H, E, d]`, `v: [E, d]`.
    pub fn vote_agreement(&self, votes: Var, v: Var) -> Var {
        let (vv, vp) = (self.value(votes), self.value(v));
        assert!(
            vv.rank() == 3 && vp.rank() == 2 && vv.shape()[1..] == *vp.shape(),
            "vote_agreement shape mismatch: votes {:?}, v {:?}",
            vv.shape(),
            vp.shape()
        );
        let (h, e, d) = (vv.shape()[0], vv.shape()[1], vv.shape()[2]);
        let mut out = vec![0.0; h * e];
        for hi in 0..h {
            for ej in 0..e {
                let base = (hi * e + ej) * d;
                out[hi * e + ej] = (0..d).map(|r| vv.data()[base + r] * vp.data()[ej * d + r]).sum();
            }
        }
        self.push(Tensor::from_vec(&[h, e], out), Op::VoteAgreement { votes: votes.0, v: v.0 }, &[votes.0, v.0])
    }

    /// Unary op with caller-supplied forward and backward rules.
    /// `backward(x, y, dy)` returns `dx`.
    pub fn custom(
        &self,
        a: Var,
        forward: impl Fn(&Tensor) -> Tensor,
        backward: impl Fn(&Tensor, &Tensor, &Tensor) -> Tensor + 'static,
    ) -> Var {
        let out = forward(&self.value(a));
        self.push(out, Op::Custom { src: a.0, backward: Box::new(backward) }, &[a.0])
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every leaf created with [`Graph::param`] gets a gradient (zeros when
    /// disconnected from `loss`); constants get none.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert!(self.record, "backward on a graph that does not record");
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.0].value.shape().to_vec();
        assert!(numel(&loss_shape) == 1, "backward from non-scalar loss of shape {loss_shape:?}");

        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(&loss_shape, 1.0));

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[id].take() else { continue };
            for (input, g) in input_grads(&nodes, node, &gy) {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[id] = Some(gy);
        }

        for (id, node) in nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
            if !node.requires_grad {
                grads[id] = None;
            }
        }
        Gradients { grads }
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

pub(crate) fn squash_factor(norm: f64) -> f64 {
    norm / (0.5 + norm * norm)
}

fn softmax_along(x: &Tensor, axis: usize, mask: Option<&[bool]>) -> Tensor {
    let (outer, dim, inner) = split_axis(x.shape(), axis);
    let mut out = vec![0.0; x.len()];
    let keep = |k: usize| mask.is_none_or(|m| m[k]);
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * dim + k) * inner + i;
            let max = (0..dim).filter(|&k| keep(k)).map(|k| x.data()[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in (0..dim).filter(|&k| keep(k)) {
                let e = (x.data()[idx(k)] - max).exp();
                out[idx(k)] = e;
                total += e;
            }
            for k in (0..dim).filter(|&k| keep(k)) {
                out[idx(k)] /= total;
            }
        }
    }
    Tensor::from_vec(x.shape(), out)
}

fn input_grads(nodes: &[Node], node: &Node, gy: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    let y = &*node.value;
    match &node.op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => vec![(*a, gy.matmul(&val(*b).transpose())), (*b, val(*a).transpose().matmul(gy))],
        Op::Add(a, b) => vec![(*a, gy.clone()), (*b, gy.clone())],
        Op::Sub(a, b) => vec![(*a, gy.clone()), (*b, gy.map(|g| -g))],
        Op::Mul(a, b) => vec![(*a, gy.zip_map(val(*b), |g, x| g * x)), (*b, gy.zip_map(val(*a), |g, x| g * x))],
        Op::AddRow(m, row) => {
            let k = val(*row).len();
            let mut gr = vec![0.0; k];
            for chunk in gy.data().chunks(k) {
                for (acc, g) in gr.iter_mut().zip(chunk) {
                    *acc += g;
                }
            }
            vec![(*m, gy.clone()), (*row, Tensor::vector(gr))]
        }
        Op::ScaleRows(m, s) => {
            let (vm, vs) = (val(*m), val(*s));
            let k = vm.shape()[1].max(1);
            let mut gm = gy.clone();
            let mut gs = vec![0.0; vs.len()];
            for (i, (gchunk, mchunk)) in gm.data_mut().chunks_mut(k).zip(vm.data().chunks(k)).enumerate() {
                gs[i] = gchunk.iter().zip(mchunk).map(|(g, x)| g * x).sum();
                for g in gchunk {
                    *g *= vs.data()[i];
                }
            }
            vec![(*m, gm), (*s, Tensor::vector(gs))]
        }
        Op::Scale(a, s) => vec![(*a, gy.map(|g| g * s))],
        Op::AddScalar(a) => vec![(*a, gy.clone())],
        Op::Concat { parts, axis } => {
            let (outer, _, inner) = split_axis(y.shape(), *axis);
            let mut out: Vec<Vec<f64>> = parts.iter().map(|&p| Vec::with_capacity(val(p).len())).collect();
            let mut offset = 0;
            for _ in 0..outer {
                for (pi, &p) in parts.iter().enumerate() {
                    let block = val(p).shape()[*axis] * inner;
                    out[pi].extend_from_slice(&gy.data()[offset..offset + block]);
                    offset += block;
                }
            }
            parts.iter().zip(out).map(|(&p, data)| (p, Tensor::from_vec(val(p).shape(), data))).collect()
        }
        Op::Slice { src, axis, start } => {
            let x = val(*src);
            let (outer, dim, inner) = split_axis(x.shape(), *axis);
            let len = y.shape()[*axis];
            let mut g = Tensor::zeros(x.shape());
            for o in 0..outer {
                let base = o * dim * inner + start * inner;
                let from = o * len * inner;
                g.data_mut()[base..base + len * inner].copy_from_slice(&gy.data()[from..from + len * inner]);
            }
            vec![(*src, g)]
        }
        Op::Sigmoid(a) => vec![(*a, gy.zip_map(y, |g, s| g * s * (1.0 - s)))],
        Op::Tanh(a) => vec![(*a, gy.zip_map(y, |g, t| g * (1.0 - t * t)))],
        Op::Relu(a) => vec![(*a, gy.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 }))],
        Op::Square(a) => vec![(*a, gy.zip_map(val(*a), |g, x| 2.0 * g * x))],
        Op::Softmax { src, axis } => {
            let (outer, dim, inner) = split_axis(y.shape(), *axis);
            let mut g = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * dim + k) * inner + i;
                    let dot: f64 = (0..dim).map(|k| y.data()[idx(k)] * gy.data()[idx(k)]).sum();
                    for k in 0..dim {
                        g[idx(k)] = y.data()[idx(k)] * (gy.data()[idx(k)] - dot);
                    }
                }
            }
            vec![(*src, Tensor::from_vec(y.shape(), g))]
        }
        Op::Norm(a) => {
            let x = val(*a);
            let (n, d) = last_axis(x.shape());
            let mut g = Tensor::zeros(x.shape());
            for i in 0..n {
                let norm = y.data()[i];
                if norm == 0.0 {
                    continue;
                }
                let scale = gy.data()[i] / norm;
                for r in 0..d {
                    g.data_mut()[i * d + r] = scale * x.data()[i * d + r];
                }
            }
            vec![(*a, g)]
        }
        Op::Squash(a) => {
            let x = val(*a);
            let (n, d) = last_axis(x.shape());
            let mut g = Tensor::zeros(x.shape());
            for i in 0..n {
                let xs = &x.data()[i * d..(i + 1) * d];
                let gs = &gy.data()[i * d..(i + 1) * d];
                let sq: f64 = xs.iter().map(|v| v * v).sum();
                let norm = sq.sqrt();
                if norm == 0.0 {
                    continue;
                }
                let f = squash_factor(norm);
                // d f / d|x|, divided by |x| so it multiplies x directly.
                let df = (0.5 - sq) / ((0.5 + sq) * (0.5 + sq)) / norm;
                let dot: f64 = xs.iter().zip(gs).map(|(a, b)| a * b).sum();
                for r in 0..d {
                    g.data_mut()[i * d + r] = f * gs[r] + df * dot * xs[r];
                }
            }
            vec![(*a, g)]
        }
        Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), gy.item()))],
        Op::SumRows(a) => {
            let x = val(*a);
            let mut g = Tensor::zeros(x.shape());
            let k = x.cols().max(1);
            for chunk in g.data_mut().chunks_mut(k) {
                chunk.copy_from_slice(gy.data());
            }
            vec![(*a, g)]
        }
        Op::Transpose(a) => vec![(*a, gy.transpose())],
        Op::Reshape(a) => vec![(*a, gy.reshaped(val(*a).shape()))],
        Op::GatherRows { table, ids } => {
            let t = val(*table);
            let k = t.cols();
            let mut g = Tensor::zeros(t.shape());
            for (row, &id) in ids.iter().enumerate() {
                for c in 0..k {
                    g.data_mut()[id * k + c] += gy.data()[row * k + c];
                }
            }
            vec![(*table, g)]
        }
        Op::Dropout { src, mask } => {
            let data = gy.data().iter().zip(mask).map(|(g, m)| g * m).collect();
            vec![(*src, Tensor::from_vec(gy.shape(), data))]
        }
        Op::CapsuleVotes { u, w, b } => {
            let (vu, vw) = (val(*u), val(*w));
            let (h, d) = (vu.shape()[0], vu.shape()[1]);
            let e = vw.shape()[0];
            let mut gu = Tensor::zeros(vu.shape());
            let mut gw = Tensor::zeros(vw.shape());
            let mut gb = Tensor::zeros(&[e, d]);
            for hi in 0..h {
                for ej in 0..e {
                    for r in 0..d {
                        let g = gy.data()[(hi * e + ej) * d + r];
                        if g == 0.0 {
                            continue;
                        }
                        gb.data_mut()[ej * d + r] += g;
                        let wbase = (ej * d + r) * d;
                        for k in 0..d {
                            gu.data_mut()[hi * d + k] += g * vw.data()[wbase + k];
                            gw.data_mut()[wbase + k] += g * vu.data()[hi * d + k];
                        }
                    }
                }
            }
            vec![(*u, gu), (*w, gw), (*b, gb)]
        }
        Op::WeightedVoteSum { c, votes } => {
            let (vc, vv) = (val(*c), val(*votes));
            let (h, e, d) = (vv.shape()[0], vv.shape()[1], vv.shape()[2]);
            let mut gc = Tensor::zeros(vc.shape());
            let mut gv = Tensor::zeros(vv.shape());
            for hi in 0..h {
                for ej in 0..e {
                    let base = (hi * e + ej) * d;
                    let cw = vc.data()[hi * e + ej];
                    let mut acc = 0.0;
                    for r in 0..d {
                        let g = gy.data()[ej * d + r];
                        acc += g * vv.data()[base + r];
                        gv.data_mut()[base + r] = g * cw;
                    }
                    gc.data_mut()[hi * e + ej] = acc;
                }
            }
            vec![(*c, gc), (*votes, gv)]
        }
        Op::VoteAgreement { votes, v } => {
            let (vv, vp) = (val(*votes), val(*v));
            let (h, e, d) = (vv.shape()[0], vv.shape()[1], vv.shape()[2]);
            let mut gvotes = Tensor::zeros(vv.shape());
            let mut gp = Tensor::zeros(vp.shape());
            for hi in 0..h {
                for ej in 0..e {
                    let g = gy.data()[hi * e + ej];
                    let base = (hi * e + ej) * d;
                    for r in 0..d {
                        gvotes.data_mut()[base + r] = g * vp.data()[ej * d + r];
                        gp.data_mut()[ej * d + r] += g * vv.data()[base + r];
                    }
                }
            }
            vec![(*votes, gvotes), (*v, gp)]
        }
        Op::Custom { src, backward } => vec![(*src, backward(val(*src), y, gy))],
    }
}
