//! Minimal deterministic network engine.
//!
//! Networks are ordered stacks of [`LayerSpec`]s evaluated one sample at a
//! time. A train-mode [`Network::forward`] records a [`Tape`] holding what
//! each layer needs for its exact reverse pass; [`Network::backward`] walks
//! the tape in reverse and returns parameter gradients in the same order as
//! [`Parameterized::params`].

mod adam;
mod checkpoint;
mod gradcheck;
mod layer;
mod network;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_param_table, write_param_table};
pub use gradcheck::{check_params, gradient_check, GradCheckOptions, GradCheckReport};
pub use layer::{film_modulate, silu, silu_grad, Layer, LayerSpec};
pub use network::{Backward, Network, NetworkSpec, Tape};
pub use tensor::Tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("malformed weight file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// A named, shaped array of trainable values.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        Param { name: name.into(), shape, value }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param::new(name, shape, vec![0.0; n])
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        Param::new(name, shape, vec![v; n])
    }

    /// Uniform fan-in scaled initialization, bound `sqrt(3 / fan_in)`.
    pub fn fan_in_uniform<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (3.0 / fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let value = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Param::new(name, shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Rounds every value to the nearest `f32`, so that a 32-bit
    /// serialization reproduces it exactly.
    pub fn snap_to_f32(&mut self) {
        for v in &mut self.value {
            *v = *v as f32 as f64;
        }
    }
}

/// Anything holding trainable parameters in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn snap_to_f32(&mut self) {
        for p in self.params_mut() {
            p.snap_to_f32();
        }
    }
}

/// Gradients aligned with a [`Parameterized`] parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zeros_like(params: &[&Param]) -> Self {
        Grads(params.iter().map(|p| vec![0.0; p.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Grads) {
        debug_assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales to `max_norm` if the global norm exceeds it. Returns the
    /// pre-clip norm when clipping happened.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> Option<f64> {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(max_norm / norm);
            Some(norm)
        } else {
            None
        }
    }

    pub fn concat(parts: Vec<Grads>) -> Grads {
        Grads(parts.into_iter().flat_map(|g| g.0).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}
