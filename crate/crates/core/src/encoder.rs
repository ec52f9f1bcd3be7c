//! Sentence encoder: word and position embeddings, Bi-LSTM, word attention.

use crate::autodiff::{Graph, Var};
use crate::data::SentenceInstance;
use crate::tensor::Tensor;

/// Handles for one LSTM direction. Gate columns are ordered input, forget,
/// cell, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    /// `V x 4B`
    pub wx: Var,
    /// `B x 4B`
    pub wh: Var,
    /// `4B`
    pub bias: Var,
}

/// Attention-weighted encoding of one sentence.
#[derive(Clone, Debug)]
pub struct EncodedSentence {
    /// Bi-LSTM states, `L x 2B` (after dropout when training).
    pub hidden: Var,
    /// `x~_t = alpha_t h_t`, `L x 2B`; equals `hidden` when attention is off.
    pub attended: Var,
    /// Attention weights over `L` positions, absent when attention is off.
    pub attn_weights: Option<Var>,
    pub mask: Vec<bool>,
}

/// Row `t` is `[word(w_t), pos_1(p_t1), ..., pos_M(p_tM)]`; rows past the
/// sentence end are zero and masked out. Word ids beyond the table map to
/// its last row (UNK).
pub fn embed(g: &Graph, word_table: Var, pos_tables: &[Var], inst: &SentenceInstance, max_len: usize) -> (Var, Vec<bool>) {
    let n = inst.len();
    assert!(n <= max_len, "sentence of {n} tokens exceeds L = {max_len}");
    let word_shape = g.shape(word_table);
    let unk = word_shape[0] - 1;
    let mut width = word_shape[1];
    for &t in pos_tables {
        width += g.shape(t)[1];
    }
    let mut mask = vec![false; max_len];
    mask[..n].fill(true);
    if n == 0 {
        return (g.constant(Tensor::zeros(&[max_len, width])), mask);
    }

    let ids: Vec<usize> = inst.token_ids.iter().map(|&id| id.min(unk)).collect();
    let mut parts = vec![g.gather_rows(word_table, &ids)];
    for (slot, &table) in pos_tables.iter().enumerate() {
        let buckets: Vec<usize> = inst.position_ids.iter().map(|row| row[slot]).collect();
        parts.push(g.gather_rows(table, &buckets));
    }
    let rows = g.concat(&parts, 1);
    (pad_rows(g, rows, max_len), mask)
}

fn pad_rows(g: &Graph, rows: Var, total: usize) -> Var {
    let shape = g.shape(rows);
    if shape[0] == total {
        return rows;
    }
    let pad = g.constant(Tensor::zeros(&[total - shape[0], shape[1]]));
    g.concat(&[rows, pad], 0)
}

fn lstm_direction(
    g: &Graph,
    x_proj: Var,
    lstm: LstmVars,
    order: impl Iterator<Item = usize>,
    hidden: usize,
    len: usize,
) -> Vec<Option<Var>> {
    let mut out = vec![None; len];
    let mut state: Option<(Var, Var)> = None;
    for t in order {
        let mut pre = g.slice(x_proj, 0, t, 1);
        if let Some((h, _)) = state {
            pre = g.add(pre, g.matmul(h, lstm.wh));
        }
        let i = g.sigmoid(g.slice(pre, 1, 0, hidden));
        let f = g.sigmoid(g.slice(pre, 1, hidden, hidden));
        let cand = g.tanh(g.slice(pre, 1, 2 * hidden, hidden));
        let o = g.sigmoid(g.slice(pre, 1, 3 * hidden, hidden));
        let c = match state {
            Some((_, c_prev)) => g.add(g.mul(f, c_prev), g.mul(i, cand)),
            None => g.mul(i, cand),
        };
        let h = g.mul(o, g.tanh(c));
        out[t] = Some(h);
        state = Some((h, c));
    }
    out
}

/// Bidirectional LSTM over the unmasked rows of `x` (`L x V`).
///
/// Masked steps are skipped in both directions, so the recurrent state is
/// carried across them unchanged; their output rows are zero. Returns
/// `L x 2B` with row `t = [fwd_h_t, bwd_h_t]`.
pub fn bilstm(g: &Graph, x: Var, mask: &[bool], fwd: LstmVars, bwd: LstmVars) -> Var {
    let len = g.shape(x)[0];
    assert_eq!(mask.len(), len, "mask length {} does not match {len} rows", mask.len());
    let hidden = g.shape(fwd.wh)[0];
    let zero_row = g.constant(Tensor::zeros(&[1, 2 * hidden]));
    if !mask.iter().any(|&m| m) {
        return g.constant(Tensor::zeros(&[len, 2 * hidden]));
    }

    let steps: Vec<usize> = (0..len).filter(|&t| mask[t]).collect();
    let fwd_proj = g.add_row(g.matmul(x, fwd.wx), fwd.bias);
    let bwd_proj = g.add_row(g.matmul(x, bwd.wx), bwd.bias);
    let fwd_h = lstm_direction(g, fwd_proj, fwd, steps.iter().copied(), hidden, len);
    let bwd_h = lstm_direction(g, bwd_proj, bwd, steps.iter().rev().copied(), hidden, len);

    let rows: Vec<Var> = (0..len)
        .map(|t| match (fwd_h[t], bwd_h[t]) {
            (Some(f), Some(b)) => g.concat(&[f, b], 1),
            _ => zero_row,
        })
        .collect();
    g.concat(&rows, 0)
}

/// Bilinear word attention: `g_t = h_t^T A r`, `alpha = softmax(g)` over
/// unmasked positions, `x~_t = alpha_t h_t`.
pub fn word_attention(g: &Graph, hidden: Var, attn_matrix: Var, query: Var, mask: &[bool]) -> (Var, Var) {
    let (hs, a_shape, r_shape) = (g.shape(hidden), g.shape(attn_matrix), g.shape(query));
    let width = hs[1];
    assert!(a_shape == [width, width] && r_shape == [width], "attention shape mismatch: hidden {hs:?}, A {a_shape:?}, r {r_shape:?}");
    assert_eq!(mask.len(), hs[0], "mask length {} does not match {} rows", mask.len(), hs[0]);
    assert!(mask.iter().any(|&m| m), "word attention over a fully masked sentence");
    let ar = g.matmul(attn_matrix, g.reshape(query, &[width, 1]));
    let scores = g.reshape(g.matmul(hidden, ar), &[hs[0]]);
    let alpha = g.masked_softmax(scores, mask);
    (g.scale_rows(hidden, alpha), alpha)
}
