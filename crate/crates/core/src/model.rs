//! Full relation model: encoder, capsule layers (or the dense ablation head)
//! and per-relation activations.

use crate::autodiff::{Graph, Var};
use crate::capsule::{dynamic_routing, primary_capsules, votes};
use crate::config::{DropoutSite, TrainConfig};
use crate::data::{bucket_count, SentenceInstance};
use crate::encoder::{bilstm, embed, word_attention, LstmVars};
use crate::error::{Error, Result};
use crate::params::{ParamSet, ParamVars};
use crate::rng::Rng64;
use crate::tensor::Tensor;

pub const WORD_TABLE: &str = "embed.word";
pub const ATTN_MATRIX: &str = "attn.matrix";
pub const ATTN_QUERY: &str = "attn.query";
pub const CAPS_FILTERS: &str = "caps.filters";
pub const CAPS_BIAS: &str = "caps.bias";
pub const CAPS_TRANSFORMS: &str = "caps.transforms";
pub const CAPS_VOTE_BIAS: &str = "caps.vote_bias";
pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

pub fn position_table(slot: usize) -> String {
    format!("embed.pos{slot}")
}

fn lstm_names(dir: &str) -> [String; 3] {
    [format!("lstm.{dir}.wx"), format!("lstm.{dir}.wh"), format!("lstm.{dir}.bias")]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub num_relations: usize,
    pub params: ParamSet,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Relation activations, `E`.
    pub activations: Var,
    pub attn_weights: Option<Var>,
    pub parents: Option<Var>,
}

/// Allocates every parameter implied by `config` and the relation count.
///
/// `word_table` is the pretrained `(|V| + 1) x d_w` matrix with UNK last.
/// Weight matrices get Xavier-uniform values from a stream seeded by
/// `config.seed`; biases start at zero.
pub fn build_model(config: &TrainConfig, num_relations: usize, word_table: Tensor) -> Result<Model> {
    config.validate()?;
    if num_relations == 0 {
        return Err(Error::Config("the relation set must contain at least NA".into()));
    }
    if word_table.rank() != 2 || word_table.shape()[1] != config.word_dim {
        return Err(Error::Config(format!(
            "word table shape {:?} must have d_w = word_dim = {} columns",
            word_table.shape(),
            config.word_dim
        )));
    }
    let mut rng = Rng64::new(config.seed);
    let mut p = ParamSet::new();
    let (v, b, width) = (config.input_width(), config.lstm_hidden, config.state_width());
    let (c, d, e) = (config.capsule_channels, config.capsule_dim, num_relations);

    p.insert(WORD_TABLE, word_table, config.tune_word_embeddings);
    let buckets = bucket_count(config.max_len);
    for slot in 0..config.entity_slots {
        p.insert_xavier(&position_table(slot), &[buckets, config.position_dim], buckets, config.position_dim, &mut rng);
    }
    for dir in ["fwd", "bwd"] {
        let [wx, wh, bias] = lstm_names(dir);
        p.insert_xavier(&wx, &[v, 4 * b], v, 4 * b, &mut rng);
        p.insert_xavier(&wh, &[b, 4 * b], b, 4 * b, &mut rng);
        p.insert_zeros(&bias, &[4 * b]);
    }
    if config.ablations.word_att {
        p.insert_xavier(ATTN_MATRIX, &[width, width], width, width, &mut rng);
        p.insert_xavier(ATTN_QUERY, &[width], width, 1, &mut rng);
    }
    if config.ablations.capsule {
        p.insert_xavier(CAPS_FILTERS, &[c * d, 2 * width], 2 * width, c * d, &mut rng);
        p.insert_zeros(CAPS_BIAS, &[c * d]);
        p.insert_xavier(CAPS_TRANSFORMS, &[e, d, d], d, d, &mut rng);
        p.insert_zeros(CAPS_VOTE_BIAS, &[e, d]);
    } else {
        p.insert_xavier(HEAD_WEIGHT, &[width, e], width, e, &mut rng);
        p.insert_zeros(HEAD_BIAS, &[e]);
    }
    Ok(Model { config: config.clone(), num_relations, params: p })
}

impl Model {
    /// Checks that stored parameters have the shapes this config implies.
    pub fn check_shapes(&self) -> Result<()> {
        let word = self.params.get(WORD_TABLE).ok_or_else(|| Error::Checkpoint("missing word table".into()))?;
        let expected = build_model(&self.config, self.num_relations, word.clone())?;
        for (name, param) in expected.params.iter() {
            let found = self.params.get(name).ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if found.shape() != param.value.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{name}`: checkpoint has {:?}, config implies {:?}",
                    found.shape(),
                    param.value.shape()
                )));
            }
        }
        if let Some(extra) = self.params.names().find(|n| !expected.params.contains(n)) {
            return Err(Error::Checkpoint(format!("unexpected parameter `{extra}` for this config")));
        }
        Ok(())
    }

    /// Forward pass for one sentence on `g`. Dropout fires only when `g` is
    /// in training mode.
    pub fn forward(&self, g: &Graph, vars: &ParamVars, inst: &SentenceInstance) -> Forward {
        let cfg = &self.config;
        let pos: Vec<Var> = (0..cfg.entity_slots).map(|s| vars.var(&position_table(s))).collect();
        let (mut x, mask) = embed(g, vars.var(WORD_TABLE), &pos, inst, cfg.max_len);
        if cfg.dropout_site == DropoutSite::Embeddings {
            x = g.dropout(x, cfg.keep_prob());
        }
        let dir = |d: &str| {
            let [wx, wh, bias] = lstm_names(d);
            LstmVars { wx: vars.var(&wx), wh: vars.var(&wh), bias: vars.var(&bias) }
        };
        let mut hidden = bilstm(g, x, &mask, dir("fwd"), dir("bwd"));
        if cfg.dropout_site == DropoutSite::LstmOutput {
            hidden = g.dropout(hidden, cfg.keep_prob());
        }
        let (seq, attn_weights) = if cfg.ablations.word_att {
            let (xt, alpha) = word_attention(g, hidden, vars.var(ATTN_MATRIX), vars.var(ATTN_QUERY), &mask);
            (xt, Some(alpha))
        } else {
            (hidden, None)
        };

        if cfg.ablations.capsule {
            let caps = primary_capsules(g, seq, vars.var(CAPS_FILTERS), vars.var(CAPS_BIAS), cfg.capsule_channels, cfg.capsule_dim);
            let v = votes(g, &caps, vars.var(CAPS_TRANSFORMS), vars.var(CAPS_VOTE_BIAS));
            let routed = dynamic_routing(g, v, caps.activations, cfg.routing_iters);
            Forward { activations: routed.activations, attn_weights, parents: Some(routed.parents) }
        } else {
            // Attention rows already carry weights summing to one; without
            // attention take the mean over real tokens.
            let n = mask.iter().filter(|&&m| m).count().max(1);
            let pooled = if cfg.ablations.word_att { g.sum_rows(seq) } else { g.scale(g.sum_rows(seq), 1.0 / n as f64) };
            let logits = g.add_row(g.matmul(pooled, vars.var(HEAD_WEIGHT)), vars.var(HEAD_BIAS));
            let activations = g.reshape(g.sigmoid(logits), &[self.num_relations]);
            Forward { activations, attn_weights, parents: None }
        }
    }

    /// Relation activations for one sentence in evaluation mode.
    pub fn activations(&self, inst: &SentenceInstance) -> Vec<f64> {
        let g = Graph::inference();
        let vars = self.params.register(&g);
        let out = self.forward(&g, &vars, inst);
        g.value(out.activations).data().to_vec()
    }
}
