//! Decoding relation activations: ranked single-pair output, top-2 multi-pair
//! output and nearest-difference pair assignment.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{Bag, KgEmbeddings, PairKey, RelationIndex};
use crate::error::{Error, Result};
use crate::model::Model;

pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// Which entity difference is compared with the relation vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairDirection {
    /// `emb(e2) - emb(e1)`, the usual head + relation = tail reading.
    #[default]
    TailMinusHead,
    /// `emb(e1) - emb(e2)`.
    HeadMinusTail,
}

/// All relations as `(id, score)`, highest score first; equal scores keep id order.
pub fn predict_single(scores: &[f64]) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
    ranked
}

/// The two best relations, keeping only scores strictly above `threshold`.
pub fn predict_multi(scores: &[f64], threshold: f64) -> Vec<(usize, f64)> {
    assert!(threshold > 0.0 && threshold < 1.0, "threshold {threshold} outside (0, 1)");
    predict_single(scores).into_iter().take(2).filter(|&(_, s)| s > threshold).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assignment {
    /// Index into the candidate pair list.
    pub pair: usize,
    pub distance: f64,
}

fn distance(pair: &PairKey, rel: &[f64], kg: &KgEmbeddings, direction: PairDirection) -> Option<f64> {
    let (h, t) = (kg.entity(&pair.0)?, kg.entity(&pair.1)?);
    let d = h.iter().zip(t).zip(rel).map(|((h, t), r)| {
        let delta = match direction {
            PairDirection::TailMinusHead => t - h,
            PairDirection::HeadMinusTail => h - t,
        };
        (delta - r).powi(2)
    });
    Some(d.sum::<f64>().sqrt())
}

fn nearest(
    candidates: impl Iterator<Item = usize>,
    pairs: &[PairKey],
    rel: usize,
    kg: &KgEmbeddings,
    direction: PairDirection,
) -> Option<Assignment> {
    let rel = kg.relation(rel);
    let mut best: Option<Assignment> = None;
    for i in candidates {
        match distance(&pairs[i], rel, kg, direction) {
            Some(d) if best.is_none_or(|b| d < b.distance) => best = Some(Assignment { pair: i, distance: d }),
            Some(_) => {}
            None => log::debug!("pair ({}, {}) lacks an entity embedding; skipped", pairs[i].0, pairs[i].1),
        }
    }
    best
}

/// Pair whose entity difference lies closest (L2) to the relation vector;
/// ties go to the earlier pair. Pairs missing an entity vector are skipped.
pub fn assign_relation(pairs: &[PairKey], rel: usize, kg: &KgEmbeddings, direction: PairDirection) -> Result<Assignment> {
    nearest(0..pairs.len(), pairs, rel, kg, direction).ok_or(Error::NoAssignablePair)
}

/// Assigns relations in the given (score) order, each pair used at most
/// once while unused assignable pairs remain.
pub fn assign_greedy(relations: &[usize], pairs: &[PairKey], kg: &KgEmbeddings, direction: PairDirection) -> Result<Vec<Assignment>> {
    let mut used = vec![false; pairs.len()];
    let mut out = Vec::with_capacity(relations.len());
    for &rel in relations {
        let fresh = nearest((0..pairs.len()).filter(|&i| !used[i]), pairs, rel, kg, direction);
        let chosen = match fresh {
            Some(a) => a,
            None => assign_relation(pairs, rel, kg, direction)?,
        };
        used[chosen.pair] = true;
        out.push(chosen);
    }
    Ok(out)
}

/// Per-relation bag score: the best activation over the bag's sentences.
pub fn bag_scores(model: &Model, bag: &Bag) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; model.num_relations];
    for inst in &bag.instances {
        for (b, a) in best.iter_mut().zip(model.activations(inst)) {
            *b = b.max(a);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationPrediction {
    pub id: usize,
    pub name: String,
    pub score: f64,
    pub pair: Option<[String; 2]>,
}

/// One line of prediction output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagPrediction {
    pub key: String,
    pub relations: Vec<RelationPrediction>,
}

#[derive(Clone, Copy, Debug)]
pub enum DecodeMode<'a> {
    Single,
    Multi { threshold: f64, kg: &'a KgEmbeddings, direction: PairDirection },
}

pub fn decode(key: String, pairs: &[PairKey], scores: &[f64], relations: &RelationIndex, mode: DecodeMode) -> Result<BagPrediction> {
    let entry = |id: usize, score: f64, pair: Option<&PairKey>| RelationPrediction {
        id,
        name: relations.name(id).to_string(),
        score,
        pair: pair.map(|(a, b)| [a.clone(), b.clone()]),
    };
    let relations = match mode {
        DecodeMode::Single => predict_single(scores).into_iter().map(|(id, s)| entry(id, s, None)).collect(),
        DecodeMode::Multi { threshold, kg, direction } => {
            let chosen = predict_multi(scores, threshold);
            let ids: Vec<usize> = chosen.iter().map(|&(id, _)| id).collect();
            let assigned = assign_greedy(&ids, pairs, kg, direction)?;
            chosen.iter().zip(assigned).map(|(&(id, s), a)| entry(id, s, Some(&pairs[a.pair]))).collect()
        }
    };
    Ok(BagPrediction { key, relations })
}

pub fn predict_bag(model: &Model, bag: &Bag, relations: &RelationIndex, mode: DecodeMode) -> Result<BagPrediction> {
    decode(bag.key_string(), &bag.key, &bag_scores(model, bag), relations, mode)
}
