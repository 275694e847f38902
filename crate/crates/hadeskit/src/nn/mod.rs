//! Minimal neural-network substrate: a reverse-mode tape over `Array2<f64>`,
//! a named parameter store, and Adam.

pub mod params;
pub mod tape;

pub use params::{Adam, GradStore, Params};
pub use tape::{Gradients, Tape, Var};

use std::collections::BTreeMap;

/// Per-tape handles for every parameter, created once per forward pass.
pub struct ParamLeaves {
    vars: BTreeMap<String, Var>,
}

impl ParamLeaves {
    /// Register every parameter as a trainable leaf on `tape`.
    pub fn register(tape: &mut Tape, params: &Params) -> Self {
        let mut vars = BTreeMap::new();
        for (name, value) in params.iter() {
            vars.insert(name.clone(), tape.leaf(value.clone()));
        }
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("no leaf registered for parameter {name}"))
    }

    /// Pull the gradients of all parameters out of `grads`, scaled by `scale`.
    pub fn collect_grads(&self, grads: &mut Gradients, sink: &mut GradStore, scale: f64) {
        for (name, var) in &self.vars {
            if let Some(g) = grads.get(*var) {
                sink.accumulate(name, g, scale);
            }
        }
    }
}
