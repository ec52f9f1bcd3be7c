//! Multi-instance training: per-bag sentence selection, margin loss and Adam.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::{batch_iter, Bag};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::AdamState;
use crate::rng::Rng64;
use crate::tensor::Tensor;

/// Present relations are pushed above this length.
pub const MARGIN_POSITIVE: f64 = 0.9;
/// Absent relations are pushed below this length.
pub const MARGIN_NEGATIVE: f64 = 0.1;
/// Down-weighting of the absent-relation term.
pub const ABSENT_WEIGHT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub per_relation: Vec<f64>,
    /// Selected sentence per bag, in batch order.
    pub selected_instance: Vec<usize>,
}

/// `L_k = Y_k max(0, 0.9 - a_k)^2 + 0.5 (1 - Y_k) max(0, a_k - 0.1)^2`.
pub fn margin_loss(activations: &[f64], labels: &[f64]) -> LossReport {
    assert_eq!(activations.len(), labels.len(), "{} activations for {} labels", activations.len(), labels.len());
    let per_relation: Vec<f64> = activations
        .iter()
        .zip(labels)
        .map(|(&a, &y)| {
            let present = (MARGIN_POSITIVE - a).max(0.0);
            let absent = (a - MARGIN_NEGATIVE).max(0.0);
            y * present * present + ABSENT_WEIGHT * (1.0 - y) * absent * absent
        })
        .collect();
    LossReport { total: per_relation.iter().sum(), per_relation, selected_instance: Vec::new() }
}

/// Per-relation margin loss on the tape, shape `E`.
pub fn margin_loss_terms(g: &Graph, activations: Var, labels: &[f64]) -> Var {
    let y = g.constant(Tensor::vector(labels.to_vec()));
    let not_y = g.constant(Tensor::vector(labels.iter().map(|l| ABSENT_WEIGHT * (1.0 - l)).collect()));
    let present = g.square(g.relu(g.add_scalar(g.neg(activations), MARGIN_POSITIVE)));
    let absent = g.square(g.relu(g.add_scalar(activations, -MARGIN_NEGATIVE)));
    g.add(g.mul(y, present), g.mul(not_y, absent))
}

/// Index of the row whose best gold-relation score is highest; ties go to
/// the lowest index.
pub fn select_by_scores(scores: &[Vec<f64>], gold: &[usize]) -> usize {
    assert!(!scores.is_empty(), "selection over an empty bag");
    let best = |row: &Vec<f64>| gold.iter().map(|&k| row[k]).fold(f64::NEG_INFINITY, f64::max);
    let mut chosen = 0;
    let mut chosen_score = best(&scores[0]);
    for (i, row) in scores.iter().enumerate().skip(1) {
        let s = best(row);
        if s > chosen_score {
            chosen = i;
            chosen_score = s;
        }
    }
    chosen
}

/// Sentence of `bag` most confidently expressing one of its gold relations,
/// scored without dropout.
pub fn select_instance(model: &Model, bag: &Bag) -> usize {
    let scores: Vec<Vec<f64>> = bag.instances.iter().map(|inst| model.activations(inst)).collect();
    let gold: Vec<usize> = bag.labels.iter().copied().collect();
    select_by_scores(&scores, &gold)
}

/// Loss and parameter gradients contributed by one bag.
#[derive(Clone, Debug)]
pub struct BagStep {
    pub selected: usize,
    pub loss: LossReport,
    pub grads: BTreeMap<String, Tensor>,
}

/// Selects the bag's sentence, then runs it forward (with dropout when
/// `dropout_seed` is set) and back through the margin loss. Only the
/// selected sentence is placed on the tape.
pub fn bag_step(model: &Model, bag: &Bag, dropout_seed: Option<u64>) -> BagStep {
    let selected = select_instance(model, bag);
    let g = match dropout_seed {
        Some(seed) => Graph::new().with_dropout(seed),
        None => Graph::new(),
    };
    let vars = model.params.register(&g);
    let out = model.forward(&g, &vars, &bag.instances[selected]);
    let labels = bag.label_vector(model.num_relations);
    let terms = margin_loss_terms(&g, out.activations, &labels);
    let total = g.sum(terms);
    let grads = vars.collect_grads(&g.backward(total));
    let per_relation = g.value(terms).data().to_vec();
    BagStep { selected, loss: LossReport { total: g.item(total), per_relation, selected_instance: vec![selected] }, grads }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// `selection_histogram[i]` counts bags whose `i`-th sentence was selected.
    pub selection_histogram: Vec<usize>,
    pub steps: usize,
}

/// Model, optimizer state and the seeded stream driving shuffles and dropout.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub adam: AdamState,
    pub rng: Rng64,
    pub epochs_done: usize,
}

const TRAIN_STREAM: u64 = 0x7261_696e_5f73_6571;

impl Trainer {
    pub fn new(model: Model) -> Self {
        let adam = AdamState::new(model.config.learning_rate);
        let rng = Rng64::new(model.config.seed ^ TRAIN_STREAM);
        Trainer { model, adam, rng, epochs_done: 0 }
    }

    /// One pass over `bags` in a seeded shuffled order, one Adam step per
    /// batch on the batch-mean loss. Gradients are accumulated in batch order.
    pub fn train_epoch(&mut self, bags: &[Bag]) -> Result<EpochStats> {
        let shuffle_seed = self.rng.next_u64();
        let batches = batch_iter(bags.len(), self.model.config.batch_size, shuffle_seed);
        let mut histogram = Vec::new();
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for batch in &batches {
            let scale = 1.0 / batch.len() as f64;
            let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
            for &idx in batch {
                let bag = &bags[idx];
                let step = bag_step(&self.model, bag, Some(self.rng.next_u64()));
                if !step.loss.total.is_finite() {
                    return Err(Error::NonFiniteLoss(bag.key_string()));
                }
                loss_sum += step.loss.total;
                if histogram.len() <= step.selected {
                    histogram.resize(step.selected + 1, 0);
                }
                histogram[step.selected] += 1;
                for (name, mut grad) in step.grads {
                    grad.scale_assign(scale);
                    match acc.get_mut(&name) {
                        Some(sum) => sum.add_assign(&grad),
                        None => {
                            acc.insert(name, grad);
                        }
                    }
                }
            }
            self.adam.step(&mut self.model.params, &acc)?;
            steps += 1;
        }
        self.epochs_done += 1;
        Ok(EpochStats {
            epoch: self.epochs_done,
            mean_loss: if bags.is_empty() { 0.0 } else { loss_sum / bags.len() as f64 },
            selection_histogram: histogram,
            steps,
        })
    }

    /// Runs `epochs` epochs, stopping at the first error.
    pub fn fit(&mut self, bags: &[Bag], epochs: usize) -> Result<Vec<EpochStats>> {
        (0..epochs).map(|_| self.train_epoch(bags)).collect()
    }
}
