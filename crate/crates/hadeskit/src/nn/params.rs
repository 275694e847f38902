//! Named parameter collection shared by the optimizer and checkpointing.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// All learnable tensors of a model, keyed by a dotted name.
///
/// Keys are kept in sorted order so that gradient accumulation, optimizer
/// sweeps, and checkpoint layout are all byte-deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    entries: BTreeMap<String, Array2<f64>>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) {
        let prev = self.entries.insert(name.to_string(), value);
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array2<f64>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Array2<f64>)> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|v| v.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, v) in &self.entries {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("parameter {name} is non-finite")));
            }
        }
        Ok(())
    }
}

/// Xavier-uniform weight of the given shape.
pub fn xavier(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

pub fn zeros(rows: usize, cols: usize) -> Array2<f64> {
    Array2::zeros((rows, cols))
}

pub fn ones(rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_elem((rows, cols), 1.0)
}

/// Gradient buffers keyed like [`Params`].
#[derive(Debug, Clone, Default)]
pub struct GradStore {
    entries: BTreeMap<String, Array2<f64>>,
}

impl GradStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `delta * scale` into the slot for `name`.
    pub fn accumulate(&mut self, name: &str, delta: &Array2<f64>, scale: f64) {
        match self.entries.get_mut(name) {
            Some(g) => g.zip_mut_with(delta, |a, b| *a += b * scale),
            None => {
                self.entries.insert(name.to_string(), delta * scale);
            }
        }
    }

    pub fn merge(&mut self, other: &GradStore, scale: f64) {
        for (name, g) in &other.entries {
            self.accumulate(name, g, scale);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.get(name)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Adam with the standard bias correction. Step order over parameters is the
/// sorted name order, which pins the floating-point trajectory.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &GradStore) {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let g = match grads.get(name) {
                Some(g) => g,
                None => continue,
            };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(p.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(p.raw_dim()));
            azip_update(m, v, p, g, self.beta1, self.beta2, self.lr, self.eps, b1c, b2c);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    p: &mut Array2<f64>,
    g: &Array2<f64>,
    beta1: f64,
    beta2: f64,
    lr: f64,
    eps: f64,
    b1c: f64,
    b2c: f64,
) {
    ndarray::Zip::from(m)
        .and(v)
        .and(p)
        .and(g)
        .for_each(|m, v, p, &g| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mhat = *m / b1c;
            let vhat = *v / b2c;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        });
}
