//! Primary capsules over 2-gram windows, vote transforms and dynamic routing.

use crate::autodiff::{squash_factor, Graph, Var};
use crate::tensor::Tensor;

/// `squash(x) = |x|^2 / (0.5 + |x|^2) * x / |x|`, with `squash(0) = 0`.
pub fn squash(x: &[f64]) -> Vec<f64> {
    let f = squash_factor(x.iter().map(|v| v * v).sum::<f64>().sqrt());
    x.iter().map(|v| v * f).collect()
}

/// Child capsules `u` (`H x d`) and their activations `|u_i|` (`H`).
#[derive(Clone, Copy, Debug)]
pub struct CapsuleSet {
    pub u: Var,
    pub activations: Var,
}

/// Primary capsules from an `L x 2B` sequence.
///
/// The sequence is zero-padded by one row at each end, giving `L + 1`
/// stride-1 windows of two rows. Each of the `C * d` filters (rows of
/// `filters`, each a flattened `2 x 2B` window) yields one scalar per window;
/// per window the scalars form `C` capsules of dimension `d`, each squashed as
/// a vector. Capsule `j * C + c` is channel `c` of window `j`.
pub fn primary_capsules(g: &Graph, seq: Var, filters: Var, bias: Var, channels: usize, dim: usize) -> CapsuleSet {
    let shape = g.shape(seq);
    let (len, width) = (shape[0], shape[1]);
    let fshape = g.shape(filters);
    assert!(
        fshape == [channels * dim, 2 * width] && g.shape(bias) == [channels * dim],
        "primary capsule shape mismatch: sequence {shape:?}, filters {fshape:?}, bias {:?}, C = {channels}, d = {dim}",
        g.shape(bias)
    );
    let pad = g.constant(Tensor::zeros(&[1, width]));
    let padded = g.concat(&[pad, seq, pad], 0);
    let windows = g.concat(&[g.slice(padded, 0, 0, len + 1), g.slice(padded, 0, 1, len + 1)], 1);
    let responses = g.add_row(g.matmul(windows, g.transpose(filters)), bias);
    let grouped = g.reshape(responses, &[(len + 1) * channels, dim]);
    let u = g.squash(grouped);
    let activations = g.norm(u);
    CapsuleSet { u, activations }
}

/// Votes `u^_{j|i} = W_j u_i + b^_j` as an `H x E x d` tensor.
pub fn votes(g: &Graph, caps: &CapsuleSet, transforms: Var, bias: Var) -> Var {
    g.capsule_votes(caps.u, transforms, bias)
}

/// Routing quantities for one iteration.
#[derive(Clone, Copy, Debug)]
pub struct RoutingState {
    /// Logits `b` (`H x E`) the iteration started from.
    pub logits: Var,
    /// `c_{j|i} = a^_i softmax_j(b_i)`, `H x E`.
    pub couplings: Var,
    /// Parent capsules `v`, `E x d`.
    pub parents: Var,
    /// `a_j = |v_j|`, `E`.
    pub activations: Var,
}

#[derive(Clone, Debug)]
pub struct RoutingOutput {
    pub parents: Var,
    pub activations: Var,
    pub iterations: Vec<RoutingState>,
    /// Logits after the last agreement update.
    pub final_logits: Var,
}

/// Routing by agreement from `H` children to `E` parents.
///
/// Logits start at zero. Each iteration normalises them over parents, weights
/// each child's row by its activation, squashes the weighted vote sums into
/// parents and adds the vote/parent agreement back onto the logits. The whole
/// loop stays on the tape, so gradients flow through every iteration.
pub fn dynamic_routing(g: &Graph, votes: Var, child_activations: Var, iters: usize) -> RoutingOutput {
    assert!(iters >= 1, "dynamic routing needs at least one iteration, got {iters}");
    let vs = g.shape(votes);
    assert!(
        vs.len() == 3 && g.shape(child_activations) == [vs[0]],
        "routing shape mismatch: votes {vs:?}, activations {:?}",
        g.shape(child_activations)
    );
    let mut logits = g.constant(Tensor::zeros(&[vs[0], vs[1]]));
    let mut iterations = Vec::with_capacity(iters);
    for _ in 0..iters {
        let couplings = g.scale_rows(g.softmax(logits, 1), child_activations);
        let parents = g.squash(g.weighted_vote_sum(couplings, votes));
        let activations = g.norm(parents);
        iterations.push(RoutingState { logits, couplings, parents, activations });
        logits = g.add(logits, g.vote_agreement(votes, parents));
    }
    let last = *iterations.last().expect("iters >= 1");
    RoutingOutput { parents: last.parents, activations: last.activations, iterations, final_logits: logits }
}
