//! Held-out evaluation: ranked decisions, precision-recall staircase,
//! precision at fixed recall, trapezoidal AUC and configuration sweeps.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Bag, NA_RELATION};
use crate::error::{Error, Result};
use crate::model::{build_model, Model};
use crate::prediction::bag_scores;
use crate::tensor::Tensor;
use crate::training::Trainer;
use crate::TrainConfig;

/// Recall levels reported alongside AUC.
pub const RECALL_TARGETS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

/// Relation id 0 is NA and never enters the ranking.
pub const NA_ID: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDecision {
    pub key: String,
    pub relation: usize,
    pub score: f64,
    pub gold: bool,
}

/// One decision per non-NA relation of a bag.
pub fn bag_decisions(key: &str, scores: &[f64], labels: &BTreeSet<usize>) -> Vec<ScoredDecision> {
    scores
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != NA_ID)
        .map(|(k, &score)| ScoredDecision { key: key.to_string(), relation: k, score, gold: labels.contains(&k) })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Staircase over decisions sorted by descending score. Decisions sharing a
/// score enter together, giving one point per distinct score.
pub fn pr_curve(decisions: &[ScoredDecision]) -> Result<Vec<PrPoint>> {
    let positives = decisions.iter().filter(|d| d.gold).count();
    if positives == 0 {
        return Err(Error::NoGoldPositives);
    }
    let mut sorted: Vec<&ScoredDecision> = decisions.iter().collect();
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
    let mut curve = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    for (i, d) in sorted.iter().enumerate() {
        seen += 1;
        tp += d.gold as usize;
        if sorted.get(i + 1).is_none_or(|next| next.score != d.score) {
            curve.push(PrPoint { recall: tp as f64 / positives as f64, precision: tp as f64 / seen as f64 });
        }
    }
    Ok(curve)
}

/// Precision at the first point whose recall reaches each target.
pub fn precision_at(curve: &[PrPoint], targets: &[f64]) -> Vec<Option<f64>> {
    targets.iter().map(|&t| curve.iter().find(|p| p.recall >= t).map(|p| p.precision)).collect()
}

/// Trapezoidal area under the staircase from recall 0 (taking the first
/// point's precision there) to the last point's recall.
pub fn auc(curve: &[PrPoint]) -> f64 {
    let Some(first) = curve.first() else { return 0.0 };
    let mut area = 0.0;
    let mut prev = PrPoint { recall: 0.0, precision: first.precision };
    for p in curve {
        area += (p.recall - prev.recall) * (p.precision + prev.precision) / 2.0;
        prev = *p;
    }
    area
}

/// Headline numbers; undefined precisions serialize as `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    #[serde(rename = "p@0.1")]
    pub p10: Option<f64>,
    #[serde(rename = "p@0.2")]
    pub p20: Option<f64>,
    #[serde(rename = "p@0.3")]
    pub p30: Option<f64>,
    #[serde(rename = "p@0.4")]
    pub p40: Option<f64>,
}

impl Metrics {
    pub fn from_curve(curve: &[PrPoint]) -> Self {
        let p = precision_at(curve, &RECALL_TARGETS);
        Metrics { auc: auc(curve), p10: p[0], p20: p[1], p30: p[2], p40: p[3] }
    }

    pub fn precisions(&self) -> [Option<f64>; 4] {
        [self.p10, self.p20, self.p30, self.p40]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub decisions: Vec<ScoredDecision>,
    pub curve: Vec<PrPoint>,
    pub metrics: Metrics,
}

/// Scores every bag (best sentence per relation) and ranks the non-NA decisions.
pub fn evaluate(model: &Model, bags: &[Bag]) -> Result<Evaluation> {
    let decisions: Vec<ScoredDecision> =
        bags.iter().flat_map(|bag| bag_decisions(&bag.key_string(), &bag_scores(model, bag), &bag.labels)).collect();
    let curve = pr_curve(&decisions)?;
    let metrics = Metrics::from_curve(&curve);
    Ok(Evaluation { decisions, curve, metrics })
}

pub fn curve_csv(curve: &[PrPoint]) -> String {
    let mut out = String::from("recall,precision\n");
    for p in curve {
        writeln!(out, "{:.6},{:.6}", p.recall, p.precision).unwrap();
    }
    out
}

/// One configuration of a sweep and its outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub capsule_dim: usize,
    pub routing_iters: usize,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
    pub seconds: f64,
}

/// Trains and evaluates each grid point from the same data, recording
/// failures instead of stopping. Rows follow grid order.
pub fn experiment_sweep(grid: &[TrainConfig], word_table: &Tensor, num_relations: usize, train: &[Bag], eval: &[Bag]) -> Vec<SweepRow> {
    grid.iter()
        .map(|config| {
            let start = Instant::now();
            let outcome = build_model(config, num_relations, word_table.clone()).and_then(|model| {
                let mut trainer = Trainer::new(model);
                trainer.fit(train, config.epochs)?;
                evaluate(&trainer.model, eval)
            });
            let seconds = start.elapsed().as_secs_f64();
            let (metrics, error) = match outcome {
                Ok(ev) => (Some(ev.metrics), None),
                Err(e) => {
                    log::warn!("sweep point d={} iters={} failed: {e}", config.capsule_dim, config.routing_iters);
                    (None, Some(e.to_string()))
                }
            };
            SweepRow { capsule_dim: config.capsule_dim, routing_iters: config.routing_iters, metrics, error, seconds }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Markdown table with one row per sweep point.
pub fn sweep_markdown(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    writeln!(out, "AUC is the trapezoidal area over the full precision-recall curve; {NA_RELATION} is excluded.\n").unwrap();
    writeln!(out, "| d | iterations | AUC | P@0.1 | P@0.2 | P@0.3 | P@0.4 | seconds | status |").unwrap();
    writeln!(out, "|---|---|---|---|---|---|---|---|---|").unwrap();
    for r in rows {
        let (auc, ps) = match &r.metrics {
            Some(m) => (cell(Some(m.auc)), m.precisions().map(cell)),
            None => ("-".to_string(), ["-".to_string(), "-".to_string(), "-".to_string(), "-".to_string()]),
        };
        let status = r.error.as_deref().map_or_else(|| "ok".to_string(), |e| format!("failed: {}", e.replace('|', "/")));
        writeln!(
            out,
            "| {} | {} | {auc} | {} | {} | {} | {} | {:.1} | {status} |",
            r.capsule_dim, r.routing_iters, ps[0], ps[1], ps[2], ps[3], r.seconds
        )
        .unwrap();
    }
    out
}
