//! Adam optimizer over a named parameter set.

use super::params::ParamSet;
use ndarray::Array2;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Standard Adam with bias correction. A step with any non-finite gradient
/// is skipped entirely and counted, leaving parameters and moments intact.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: HashMap<String, Array2<f64>>,
    v: HashMap<String, Array2<f64>>,
    skipped: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
            skipped: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn skipped_steps(&self) -> u64 {
        self.skipped
    }

    /// Apply one update. Parameters without a gradient entry are left alone.
    pub fn step(&mut self, params: &mut ParamSet, grads: &HashMap<String, Array2<f64>>) {
        if grads
            .values()
            .any(|g| g.iter().any(|x| !x.is_finite()))
        {
            self.skipped += 1;
            log::warn!("adam: non-finite gradient, step skipped ({} so far)", self.skipped);
            return;
        }
        self.t += 1;
        let t = self.t as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for name in params.names().to_vec() {
            let Some(g) = grads.get(&name) else { continue };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(g.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(g.dim()));
            *m = &*m * c.beta1 + g * (1.0 - c.beta1);
            *v = &*v * c.beta2 + &g.mapv(|x| x * x) * (1.0 - c.beta2);
            let p = params.get_mut(&name);
            ndarray::Zip::from(&mut *p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    *p -= c.lr * (m / bc1) / ((v / bc2).sqrt() + c.eps);
                });
        }
    }

    /// Moment tensors for checkpointing, in parameter order.
    pub fn export_state(&self, params: &ParamSet) -> Vec<(String, Array2<f64>, Array2<f64>)> {
        params
            .names()
            .iter()
            .filter_map(|n| {
                match (self.m.get(n), self.v.get(n)) {
                    (Some(m), Some(v)) => Some((n.clone(), m.clone(), v.clone())),
                    _ => None,
                }
            })
            .collect()
    }

    pub fn import_state(
        &mut self,
        t: u64,
        moments: impl IntoIterator<Item = (String, Array2<f64>, Array2<f64>)>,
    ) {
        self.t = t;
        for (name, m, v) in moments {
            self.m.insert(name.clone(), m);
            self.v.insert(name, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: Array2<f64>) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", value);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = single_param(Array2::from_elem((2, 2), 3.5));
        let before = params.get("w").clone();
        let mut adam = Adam::new(AdamConfig::default());
        let grads = HashMap::from([("w".to_string(), Array2::zeros((2, 2)))]);
        for _ in 0..5 {
            adam.step(&mut params, &grads);
        }
        assert_eq!(params.get("w"), &before);
    }

    #[test]
    fn quadratic_bowl_descends_monotonically() {
        // f(w) = |w|^2, grad = 2w, lr 1e-2, 100 steps from (1, 1)
        let mut params = single_param(Array2::from_elem((1, 2), 1.0));
        let mut adam = Adam::new(AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        });
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let w = params.get("w").clone();
            let loss: f64 = w.iter().map(|x| x * x).sum();
            assert!(loss < last, "loss must strictly decrease: {loss} vs {last}");
            last = loss;
            let grads = HashMap::from([("w".to_string(), &w * 2.0)]);
            adam.step(&mut params, &grads);
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut params = single_param(Array2::from_shape_fn((3, 3), |(r, c)| {
                (r as f64 - c as f64) * 0.3
            }));
            let mut adam = Adam::new(AdamConfig::default());
            let mut trace = Vec::new();
            for _ in 0..50 {
                let g = params.get("w").mapv(|x| 2.0 * x + 0.1);
                adam.step(&mut params, &HashMap::from([("w".to_string(), g)]));
                trace.extend(params.get("w").iter().copied().map(f64::to_bits));
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_skips_and_counts() {
        let mut params = single_param(Array2::from_elem((1, 1), 1.0));
        let before = params.get("w").clone();
        let mut adam = Adam::new(AdamConfig::default());
        let bad = HashMap::from([("w".to_string(), Array2::from_elem((1, 1), f64::NAN))]);
        adam.step(&mut params, &bad);
        assert_eq!(params.get("w"), &before);
        assert_eq!(adam.skipped_steps(), 1);
        assert_eq!(adam.step_count(), 0);
    }
}
