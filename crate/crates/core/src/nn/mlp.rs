//! Multi-layer perceptron with explicit forward caches and hand-written
//! backward passes.

use crate::nn::params::ParamStore;
use crate::nn::tensor::{accumulate_outer, matvec, matvec_t};

/// Layer sizes plus the output activation choice. Hidden layers are always
/// ReLU; prediction heads keep a linear output, representation towers apply
/// ReLU there too.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    relu_output: bool,
}

/// Post-activation values per layer, including the input at index 0.
#[derive(Clone, Debug)]
pub struct MlpCache {
    activations: Vec<Vec<f64>>,
}

impl MlpSpec {
    /// Prediction head: ReLU hidden layers, linear output.
    pub fn head(layer_sizes: Vec<usize>) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        assert!(layer_sizes.iter().all(|&s| s > 0), "zero-width layer");
        MlpSpec {
            layer_sizes,
            relu_output: false,
        }
    }

    /// Representation tower: ReLU on every layer including the last.
    pub fn tower(layer_sizes: Vec<usize>) -> Self {
        let mut spec = Self::head(layer_sizes);
        spec.relu_output = true;
        spec
    }

    /// The shared scoring head over `concat(profile, item, profile * item)`.
    pub fn standard_head(d: usize) -> Self {
        Self::head(vec![3 * d, d, 1])
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    fn weight_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.w{layer}")
    }

    fn bias_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.b{layer}")
    }

    /// Register this MLP's weights and biases under `prefix`.
    pub fn register(&self, store: &mut ParamStore, prefix: &str, seed: u64) {
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            store.insert_linear(&Self::weight_name(prefix, l), w[1], w[0], seed);
            store.insert_zeros(&Self::bias_name(prefix, l), 1, w[1]);
        }
    }

    pub fn forward(&self, store: &ParamStore, prefix: &str, input: &[f64]) -> (Vec<f64>, MlpCache) {
        assert_eq!(input.len(), self.input_size(), "mlp input size mismatch");
        let n_layers = self.layer_sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        for l in 0..n_layers {
            let w = store.value(&Self::weight_name(prefix, l));
            let b = store.value(&Self::bias_name(prefix, l));
            let mut z = matvec(w, activations.last().unwrap());
            for (zi, bi) in z.iter_mut().zip(b.row(0)) {
                *zi += bi;
            }
            if l + 1 < n_layers || self.relu_output {
                for zi in z.iter_mut() {
                    *zi = zi.max(0.0);
                }
            }
            activations.push(z);
        }
        let out = activations.last().unwrap().clone();
        (out, MlpCache { activations })
    }

    /// Scalar convenience for heads whose output layer has width 1.
    pub fn forward_scalar(&self, store: &ParamStore, prefix: &str, input: &[f64]) -> (f64, MlpCache) {
        assert_eq!(self.output_size(), 1, "scalar forward on vector head");
        let (out, cache) = self.forward(store, prefix, input);
        (out[0], cache)
    }

    /// Accumulate parameter gradients for `d loss / d output = upstream` and
    /// return `d loss / d input`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        prefix: &str,
        cache: &MlpCache,
        upstream: &[f64],
    ) -> Vec<f64> {
        let n_layers = self.layer_sizes.len() - 1;
        assert_eq!(upstream.len(), self.output_size(), "mlp upstream size mismatch");
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let relu_here = l + 1 < n_layers || self.relu_output;
            if relu_here {
                // ReLU derivative recovered from the post-activation sign.
                for (d, &a) in delta.iter_mut().zip(&cache.activations[l + 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.activations[l];
            accumulate_outer(store.grad_mut(&Self::weight_name(prefix, l)), &delta, input);
            for (g, &d) in store
                .grad_mut(&Self::bias_name(prefix, l))
                .row_mut(0)
                .iter_mut()
                .zip(&delta)
            {
                *g += d;
            }
            delta = matvec_t(store.value(&Self::weight_name(prefix, l)), &delta);
        }
        delta
    }

    pub fn backward_scalar(
        &self,
        store: &mut ParamStore,
        prefix: &str,
        cache: &MlpCache,
        upstream: f64,
    ) -> Vec<f64> {
        self.backward(store, prefix, cache, &[upstream])
    }
}
