//! Named parameter storage and its registration on a [`Graph`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph, Var};
use crate::rng::Rng64;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
}

/// All model parameters keyed by name, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    params: BTreeMap<String, Param>,
}

/// Xavier/Glorot uniform bound for a weight with the given fan-in and fan-out.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor, trainable: bool) {
        self.params.insert(name.to_string(), Param { value, trainable });
    }

    /// Weight drawn from `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
    pub fn insert_xavier(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng64) {
        let bound = xavier_bound(fan_in, fan_out);
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
        self.insert(name, Tensor::from_vec(shape, data), true);
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape), true);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.params.get(name).is_some_and(|p| p.trainable)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries across trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params.values().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Puts every parameter on `g`: trainable ones as params, the rest as constants.
    pub fn register(&self, g: &Graph) -> ParamVars {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| {
                let v = if p.trainable { g.param(p.value.clone()) } else { g.constant(p.value.clone()) };
                (name.clone(), v)
            })
            .collect();
        ParamVars { vars }
    }
}

/// Graph handles for a registered [`ParamSet`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Panics when `name` was never registered.
    pub fn var(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("parameter `{name}` is not part of this model"))
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    /// Gradients of the registered trainable parameters, by name.
    pub fn collect_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars.iter().filter_map(|(name, &v)| grads.get(v).map(|g| (name.clone(), g.clone()))).collect()
    }
}
