use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Handle to one parameter matrix inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Every trainable matrix of a model, in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a weight matrix initialised uniformly in
    /// `±sqrt(6 / (fan_in + fan_out))`.
    pub(crate) fn weight<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let w = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit));
        self.push(name, w)
    }

    /// Registers a zero bias row.
    pub(crate) fn bias(&mut self, name: &str, len: usize) -> ParamId {
        self.push(name, Array2::zeros((1, len)))
    }

    fn push(&mut self, name: &str, value: Array2<f64>) -> ParamId {
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.values
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Replaces the values, checking names and shapes.
    pub fn load(&mut self, entries: Vec<(String, Array2<f64>)>) -> Result<()> {
        if entries.len() != self.values.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameter blocks, model expects {}",
                entries.len(),
                self.values.len()
            )));
        }
        for ((name, value), (expected, slot)) in entries
            .into_iter()
            .zip(self.names.iter().zip(self.values.iter_mut()))
        {
            if &name != expected || value.dim() != slot.dim() {
                return Err(Error::Config(format!(
                    "parameter {name} {:?} does not match model parameter {expected} {:?}",
                    value.dim(),
                    slot.dim()
                )));
            }
            *slot = value;
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Grads {
        Grads(self.values.iter().map(|v| Array2::zeros(v.dim())).collect())
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads(pub(crate) Vec<Array2<f64>>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.0[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.0[id.0]
    }

    pub fn blocks(&self) -> &[Array2<f64>] {
        &self.0
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            a.mapv_inplace(|v| v * s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|a| a.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
