//! Reverse-mode automatic differentiation over dense multi-dimensional arrays.
//!
//! A [`Tape`] records primitive operations during the forward pass and replays
//! them in reverse to accumulate gradients. The tape is rebuilt every training
//! step; nodes are appended in topological order, so a single reverse sweep
//! visits each node exactly once.
//!
//! Forward evaluation is identical whether tracing is enabled or not — the
//! same kernels run either way, tracing only keeps the op metadata needed for
//! the backward sweep.

mod adam;
mod checkpoint;
mod ops;
mod params;

pub use adam::{adam_step, AdamHyper, AdamState, DivergedError};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta, CHECKPOINT_MAGIC,
};
pub use params::{ParamId, Params, StagedParams};

use std::fmt;
use std::sync::Arc;

use ndarray::ArrayD;

use crate::num::Real;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Recorded primitive; parents are always earlier tape indices.
pub(crate) enum Op<F: Real> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Sigmoid(Var),
    /// a*x + b, elementwise with scalar constants.
    Affine {
        x: Var,
        a: F,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    GatherRows {
        src: Var,
        indices: Arc<Vec<u32>>,
    },
    SumAxis {
        x: Var,
        axis: usize,
        keep: bool,
    },
    MeanAxis {
        x: Var,
        axis: usize,
        keep: bool,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Mse(Var, Var),
    CrossEntropy {
        logits: Var,
        labels: Arc<Vec<u32>>,
    },
    BilinearSample {
        map: Var,
        height: usize,
        width: usize,
        uv: Arc<Vec<[F; 2]>>,
    },
    Reshape(Var),
    CumsumExclusive {
        x: Var,
        axis: usize,
    },
}

pub(crate) struct Node<F: Real> {
    pub(crate) value: ArrayD<F>,
    pub(crate) op: Op<F>,
}

/// Wengert tape: append-only list of nodes in topological order.
pub struct Tape<F: Real> {
    pub(crate) nodes: Vec<Node<F>>,
    trace: bool,
}

/// Per-node gradient buffers produced by [`Tape::backward`].
pub struct Gradients<F: Real> {
    pub(crate) slots: Vec<Option<ArrayD<F>>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient of the loss w.r.t. `v`, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&ArrayD<F>> {
        self.slots.get(v.0).and_then(|s| s.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<ArrayD<F>> {
        self.slots.get_mut(v.0).and_then(|s| s.take())
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            trace: true,
        }
    }

    /// Tape that evaluates forward passes without recording backward metadata.
    pub fn inference() -> Self {
        Tape {
            nodes: Vec::new(),
            trace: false,
        }
    }

    pub fn is_tracing(&self) -> bool {
        self.trace
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input value (parameter or constant) on the tape.
    pub fn leaf(&mut self, value: ArrayD<F>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &ArrayD<F> {
        &self.nodes[v.0].value
    }

    pub(crate) fn push(&mut self, value: ArrayD<F>, op: Op<F>) -> Var {
        let op = if self.trace { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar loss node; returns per-node gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>, AdError> {
        if !self.trace {
            return Err(AdError::NotTracing);
        }
        let loss_shape = self.nodes[loss.0].value.shape();
        if self.nodes[loss.0].value.len() != 1 {
            return Err(AdError::NonScalarLoss {
                shape: loss_shape.to_vec(),
            });
        }
        let mut slots: Vec<Option<ArrayD<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        slots[loss.0] = Some(ArrayD::from_elem(loss_shape, F::one()));
        for i in (0..=loss.0).rev() {
            // Parents have strictly smaller indices, so the split borrows are disjoint.
            let (earlier, rest) = slots.split_at_mut(i);
            let Some(grad) = rest[0].as_ref() else {
                continue;
            };
            self.backprop_node(i, grad, earlier);
        }
        Ok(Gradients { slots })
    }
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Tape::new()
    }
}

/// Rejected input or malformed graph.
#[derive(Debug, Clone, PartialEq)]
pub enum AdError {
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    BadAxis {
        op: &'static str,
        axis: usize,
        ndim: usize,
    },
    BadReshape {
        from: Vec<usize>,
        to: Vec<usize>,
    },
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    UvOutOfRange {
        point: usize,
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    NegativeInput {
        op: &'static str,
        what: &'static str,
    },
    NonScalarLoss {
        shape: Vec<usize>,
    },
    NotTracing,
    EmptyInput {
        op: &'static str,
    },
}

impl fmt::Display for AdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            AdError::BadAxis { op, axis, ndim } => {
                write!(f, "{op}: axis {axis} out of range for {ndim}-d array")
            }
            AdError::BadReshape { from, to } => {
                write!(f, "reshape: cannot view {from:?} as {to:?}")
            }
            AdError::IndexOutOfRange { op, index, len } => {
                write!(f, "{op}: index {index} out of range for length {len}")
            }
            AdError::UvOutOfRange {
                point,
                u,
                v,
                width,
                height,
            } => write!(
                f,
                "bilinear_sample_2d: uv ({u}, {v}) at point {point} outside \
                 [0, {}] x [0, {}]",
                width - 1,
                height - 1
            ),
            AdError::LabelOutOfRange {
                row,
                label,
                classes,
            } => write!(
                f,
                "cross_entropy_with_logits: label {label} at row {row} exceeds {classes} classes"
            ),
            AdError::NegativeInput { op, what } => {
                write!(f, "{op}: {what} must be nonnegative")
            }
            AdError::NonScalarLoss { shape } => {
                write!(f, "backward: loss must be scalar, got shape {shape:?}")
            }
            AdError::NotTracing => write!(f, "backward: tape was built in inference mode"),
            AdError::EmptyInput { op } => write!(f, "{op}: empty input"),
        }
    }
}

impl std::error::Error for AdError {}
