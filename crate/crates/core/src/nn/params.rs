//! Named parameter store with gradient accumulation and RMSprop updates.
//!
//! Every trainable tensor lives here under a stable string name. Each tensor
//! is initialized from its own derived random stream keyed by the name, so
//! adding or removing a tensor never shifts the draws of any other.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor2;
use crate::rng::{stream_rng, tag};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

const RMS_DECAY: f64 = 0.9;
const RMS_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
struct ParamEntry {
    value: Tensor2,
    grad: Tensor2,
    sq_avg: Tensor2,
}

impl ParamEntry {
    fn new(value: Tensor2) -> Self {
        let (r, c) = (value.rows(), value.cols());
        ParamEntry {
            value,
            grad: Tensor2::zeros(r, c),
            sq_avg: Tensor2::zeros(r, c),
        }
    }
}

/// Map from tensor name to value, gradient, and RMSprop state.
#[derive(Clone, Debug)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step_count: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            entries: BTreeMap::new(),
            step_count: 0,
        }
    }

    fn insert(&mut self, name: &str, value: Tensor2) {
        let prior = self.entries.insert(name.to_string(), ParamEntry::new(value));
        assert!(prior.is_none(), "duplicate parameter {name}");
    }

    /// Embedding table: uniform in `[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]`.
    pub fn insert_embedding(&mut self, name: &str, rows: usize, cols: usize, seed: u64) {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = stream_rng(seed, &[tag(name)]);
        let values = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        self.insert(name, Tensor2::from_values(rows, cols, values));
    }

    /// Dense layer weight: Normal(0, 0.01).
    pub fn insert_linear(&mut self, name: &str, rows: usize, cols: usize, seed: u64) {
        let normal = Normal::new(0.0, 0.01).unwrap();
        let mut rng = stream_rng(seed, &[tag(name)]);
        let values = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        self.insert(name, Tensor2::from_values(rows, cols, values));
    }

    /// Bias or other zero-initialized tensor.
    pub fn insert_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Tensor2::zeros(rows, cols));
    }

    /// Install a tensor with explicit values, e.g. from a checkpoint.
    pub fn insert_values(&mut self, name: &str, value: Tensor2) {
        self.insert(name, value);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn value(&self, name: &str) -> &Tensor2 {
        &self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor2 {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .value
    }

    pub fn grad(&self, name: &str) -> &Tensor2 {
        &self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).grad
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut Tensor2 {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .grad
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(0.0);
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn set_step_count(&mut self, steps: u64) {
        self.step_count = steps;
    }

    /// One RMSprop update over every tensor:
    /// `s <- 0.9 s + 0.1 g^2`, `theta <- theta - lr * g / (sqrt(s) + 1e-8)`.
    /// Gradients are zeroed afterwards. Fails on non-finite gradients or
    /// parameters without touching `step_count`.
    pub fn rmsprop_step(&mut self, lr: f64) -> Result<()> {
        for (name, e) in self.entries.iter_mut() {
            for i in 0..e.value.len() {
                let g = e.grad.values()[i];
                if !g.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient in {name} at flat index {i}"
                    )));
                }
                let s = RMS_DECAY * e.sq_avg.values()[i] + (1.0 - RMS_DECAY) * g * g;
                e.sq_avg.values_mut()[i] = s;
                let v = e.value.values()[i] - lr * g / (s.sqrt() + RMS_EPS);
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite parameter in {name} at flat index {i}"
                    )));
                }
                e.value.values_mut()[i] = v;
            }
            e.grad.fill(0.0);
        }
        self.step_count += 1;
        Ok(())
    }
}
