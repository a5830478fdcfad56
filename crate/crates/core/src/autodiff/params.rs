//! Flat container for all learnable parameters.
//!
//! Models register arrays once at init and keep [`ParamId`] handles; the
//! optimizer and checkpoint code iterate the container in registration order,
//! which fixes both update order and on-disk layout.

use ndarray::ArrayD;

use super::{Gradients, Tape, Var};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

pub struct Params<F: Real> {
    names: Vec<String>,
    values: Vec<ArrayD<F>>,
}

impl<F: Real> Params<F> {
    pub fn new() -> Self {
        Params {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<F>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<F> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<F> {
        &mut self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<F>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ArrayD<F>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter_mut())
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn total_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Pushes every parameter onto `tape` as a leaf, in registration order.
    pub fn stage(&self, tape: &mut Tape<F>) -> StagedParams {
        StagedParams {
            vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect(),
        }
    }
}

impl<F: Real> Default for Params<F> {
    fn default() -> Self {
        Params::new()
    }
}

/// Tape leaves for one staging of a [`Params`] container.
pub struct StagedParams {
    vars: Vec<Var>,
}

impl StagedParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Collects the gradient of every staged parameter (zeros where the loss
    /// did not touch a parameter), aligned with registration order.
    pub fn collect<F: Real>(&self, params: &Params<F>, grads: &mut Gradients<F>) -> Vec<ArrayD<F>> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| ArrayD::zeros(params.values[i].raw_dim()))
            })
            .collect()
    }
}
