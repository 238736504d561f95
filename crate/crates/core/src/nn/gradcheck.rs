//! Finite-difference verification of analytic gradients.
//!
//! The loss closure both returns the loss and accumulates gradients into the
//! store; the checker snapshots those analytic gradients, then re-evaluates
//! the loss under central-difference perturbations of every scalar parameter
//! (gradients accumulated during perturbed calls are discarded).

use crate::nn::params::ParamStore;
use std::collections::BTreeMap;

/// Worst relative error per tensor, plus the overall worst offender.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// (tensor name, worst relative error in that tensor), sorted by name.
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_err: f64,
    /// (tensor name, flat index) of the worst scalar.
    pub worst: Option<(String, usize)>,
    /// Number of scalar parameters checked.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compare analytic gradients against central differences with the given
/// `step`. Relative error uses `|a - fd| / max(|a| + |fd|, 1e-5)` so that
/// near-zero gradients are compared absolutely. Non-finite values count as
/// infinite error.
pub fn grad_check<F>(store: &mut ParamStore, mut loss: F, step: f64) -> GradCheckReport
where
    F: FnMut(&mut ParamStore) -> f64,
{
    store.zero_grads();
    loss(store);
    let names: Vec<String> = store.names().cloned().collect();
    let analytic: BTreeMap<String, Vec<f64>> = names
        .iter()
        .map(|n| (n.clone(), store.grad(n).values().to_vec()))
        .collect();

    let mut per_tensor = Vec::with_capacity(names.len());
    let mut max_rel_err = 0.0_f64;
    let mut worst = None;
    let mut checked = 0;
    for name in &names {
        let len = store.value(name).len();
        let mut tensor_worst = 0.0_f64;
        for i in 0..len {
            let orig = store.value(name).values()[i];
            store.value_mut(name).values_mut()[i] = orig + step;
            store.zero_grads();
            let up = loss(store);
            store.value_mut(name).values_mut()[i] = orig - step;
            store.zero_grads();
            let down = loss(store);
            store.value_mut(name).values_mut()[i] = orig;

            let fd = (up - down) / (2.0 * step);
            let a = analytic[name][i];
            let rel = if a.is_finite() && fd.is_finite() {
                (a - fd).abs() / (a.abs() + fd.abs()).max(1e-5)
            } else {
                f64::INFINITY
            };
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((name.clone(), i));
            }
            tensor_worst = tensor_worst.max(rel);
            checked += 1;
        }
        per_tensor.push((name.clone(), tensor_worst));
    }
    store.zero_grads();
    GradCheckReport {
        per_tensor,
        max_rel_err,
        worst,
        checked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::MlpSpec;

    fn quadratic_loss(store: &mut ParamStore) -> f64 {
        // loss = sum w_i^2, so d loss / d w_i = 2 w_i.
        let loss: f64 = store.value("w").values().iter().map(|v| v * v).sum();
        for i in 0..store.value("w").len() {
            let v = store.value("w").values()[i];
            store.grad_mut("w").values_mut()[i] += 2.0 * v;
        }
        loss
    }

    #[test]
    fn exact_gradient_passes() {
        let mut store = ParamStore::new();
        store.insert_embedding("w", 2, 3, 5);
        let report = grad_check(&mut store, quadratic_loss, 1e-4);
        assert_eq!(report.checked, 6);
        assert!(report.passes(1e-6), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_backward_fails() {
        let mut store = ParamStore::new();
        store.insert_embedding("w", 2, 3, 5);
        // Sign-flip the gradient of the largest parameter.
        let corrupted = |store: &mut ParamStore| -> f64 {
            let loss = quadratic_loss(store);
            let idx = (0..store.value("w").len())
                .max_by(|&a, &b| {
                    let va = store.value("w").values()[a].abs();
                    let vb = store.value("w").values()[b].abs();
                    va.partial_cmp(&vb).unwrap()
                })
                .unwrap();
            store.grad_mut("w").values_mut()[idx] *= -1.0;
            loss
        };
        let report = grad_check(&mut store, corrupted, 1e-4);
        assert!(!report.passes(1e-3), "corruption went undetected");
        assert_eq!(report.worst.as_ref().unwrap().0, "w");
    }

    #[test]
    fn mlp_head_gradients_verify() {
        let spec = MlpSpec::head(vec![4, 3, 1]);
        let mut store = ParamStore::new();
        spec.register(&mut store, "h", 11);
        // Nudge biases off zero so no ReLU unit sits exactly at its kink.
        for i in 0..store.value("h.b0").len() {
            store.value_mut("h.b0").values_mut()[i] = 0.05 * (i as f64 + 1.0);
        }
        let x = [0.3, -0.7, 1.1, 0.4];
        let report = grad_check(
            &mut store,
            |store| {
                let (y, cache) = spec.forward_scalar(store, "h", &x);
                // loss = y^2 for a curvature-bearing scalar objective.
                spec.backward_scalar(store, "h", &cache, 2.0 * y);
                y * y
            },
            1e-4,
        );
        assert!(report.passes(1e-3), "max rel err {}", report.max_rel_err);
        assert_eq!(report.per_tensor.len(), 4);
    }

    #[test]
    fn report_lists_every_tensor() {
        let mut store = ParamStore::new();
        store.insert_zeros("a", 1, 1);
        store.insert_zeros("b", 2, 2);
        let report = grad_check(&mut store, |_| 0.0, 1e-4);
        let names: Vec<&str> = report.per_tensor.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(report.checked, 5);
        assert_eq!(report.max_rel_err, 0.0);
    }
}
