//! Forward primitives and their backward rules.
//!
//! Binary elementwise ops broadcast with NumPy-style right-aligned rules;
//! the backward pass sums gradient contributions over broadcast axes.
//! Matrix products route through `ndarray::linalg` (matrixmultiply kernels)
//! and split large outputs into fixed-size row chunks, so results do not
//! depend on how many worker threads are available.

use std::sync::Arc;

use ndarray::parallel::prelude::*;
use ndarray::{Array2, ArrayD, ArrayViewD, Axis, Ix2, IxDyn, Zip};

use super::{AdError, Op, Tape, Var};
use crate::num::Real;

/// Row-chunk size for parallel matmul. Fixed (not thread-count dependent) so
/// output bytes are identical regardless of the rayon pool size.
const MATMUL_CHUNK_ROWS: usize = 1024;

pub(crate) fn broadcast_shape(
    op: &'static str,
    lhs: &[usize],
    rhs: &[usize],
) -> Result<Vec<usize>, AdError> {
    let ndim = lhs.len().max(rhs.len());
    let mut out = vec![0usize; ndim];
    for i in 0..ndim {
        let l = if i < ndim - lhs.len() {
            1
        } else {
            lhs[i - (ndim - lhs.len())]
        };
        let r = if i < ndim - rhs.len() {
            1
        } else {
            rhs[i - (ndim - rhs.len())]
        };
        if l == r || l == 1 || r == 1 {
            out[i] = l.max(r);
        } else {
            return Err(AdError::ShapeMismatch {
                op,
                lhs: lhs.to_vec(),
                rhs: rhs.to_vec(),
            });
        }
    }
    Ok(out)
}

fn broadcast_bin<F: Real>(
    op: &'static str,
    a: &ArrayD<F>,
    b: &ArrayD<F>,
    f: impl Fn(F, F) -> F,
) -> Result<ArrayD<F>, AdError> {
    let shape = broadcast_shape(op, a.shape(), b.shape())?;
    let av = a.broadcast(IxDyn(&shape)).unwrap();
    let bv = b.broadcast(IxDyn(&shape)).unwrap();
    let mut out = ArrayD::zeros(IxDyn(&shape));
    Zip::from(&mut out)
        .and(&av)
        .and(&bv)
        .for_each(|o, &x, &y| *o = f(x, y));
    Ok(out)
}

/// Sums `g` down to `target` shape, undoing broadcast expansion.
fn reduce_to_shape<F: Real>(mut g: ArrayD<F>, target: &[usize]) -> ArrayD<F> {
    while g.ndim() > target.len() {
        g = g.sum_axis(Axis(0));
    }
    for ax in 0..target.len() {
        if target[ax] == 1 && g.shape()[ax] != 1 {
            g = g.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    g
}

fn accum<F: Real>(slot: &mut Option<ArrayD<F>>, contribution: ArrayD<F>) {
    match slot {
        Some(acc) => *acc += &contribution,
        None => *slot = Some(contribution),
    }
}

/// `a @ b` for 2-D views, chunked over output rows.
pub(crate) fn matmul_views<F: Real>(
    a: &ndarray::ArrayView2<F>,
    b: &ndarray::ArrayView2<F>,
) -> Array2<F> {
    let (m, _k) = a.dim();
    let n = b.dim().1;
    let mut out = Array2::<F>::zeros((m, n));
    if m >= 2 * MATMUL_CHUNK_ROWS {
        out.axis_chunks_iter_mut(Axis(0), MATMUL_CHUNK_ROWS)
            .into_par_iter()
            .zip(a.axis_chunks_iter(Axis(0), MATMUL_CHUNK_ROWS).into_par_iter())
            .for_each(|(mut oc, ac)| {
                ndarray::linalg::general_mat_mul(F::one(), &ac, b, F::zero(), &mut oc);
            });
    } else {
        ndarray::linalg::general_mat_mul(F::one(), a, b, F::zero(), &mut out);
    }
    out
}

fn as_2d<F: Real>(v: &ArrayD<F>) -> ndarray::ArrayView2<'_, F> {
    v.view().into_dimensionality::<Ix2>().unwrap()
}

fn stable_sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn stable_softplus<F: Real>(x: F) -> F {
    // max(x, 0) + ln(1 + exp(-|x|))
    x.max(F::zero()) + x.abs().neg().exp().ln_1p()
}

impl<F: Real> Tape<F> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let out = broadcast_bin("add", self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let out = broadcast_bin("sub", self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let out = broadcast_bin("mul", self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ndim() != 2 || bv.ndim() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(AdError::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let out = matmul_views(&as_2d(av), &as_2d(bv)).into_dyn();
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(F::zero()));
        self.push(out, Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.exp());
        self.push(out, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.ln());
        self.push(out, Op::Log(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(stable_softplus);
        self.push(out, Op::Softplus(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(stable_sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    /// Elementwise `a*x + b` with scalar constants.
    pub fn affine(&mut self, x: Var, a: F, b: F) -> Var {
        let out = self.value(x).mapv(|v| a * v + b);
        self.push(out, Op::Affine { x, a })
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AdError> {
        if parts.is_empty() {
            return Err(AdError::EmptyInput { op: "concat" });
        }
        let ndim = self.value(parts[0]).ndim();
        if axis >= ndim {
            return Err(AdError::BadAxis {
                op: "concat",
                axis,
                ndim,
            });
        }
        for &p in &parts[1..] {
            let (a, b) = (self.value(parts[0]).shape(), self.value(p).shape());
            let compatible = a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(AdError::ShapeMismatch {
                    op: "concat",
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                });
            }
        }
        let views: Vec<ArrayViewD<F>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views).expect("validated concat");
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Selects rows of a 2-D array; duplicates allowed.
    pub fn gather_rows(&mut self, src: Var, indices: Arc<Vec<u32>>) -> Result<Var, AdError> {
        let sv = self.value(src);
        if sv.ndim() != 2 {
            return Err(AdError::ShapeMismatch {
                op: "gather_rows",
                lhs: sv.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (rows, cols) = (sv.shape()[0], sv.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= rows) {
            return Err(AdError::IndexOutOfRange {
                op: "gather_rows",
                index: bad as usize,
                len: rows,
            });
        }
        let sv2 = as_2d(sv);
        let mut out = Array2::<F>::zeros((indices.len(), cols));
        for (mut orow, &idx) in out.axis_iter_mut(Axis(0)).zip(indices.iter()) {
            orow.assign(&sv2.row(idx as usize));
        }
        Ok(self.push(out.into_dyn(), Op::GatherRows { src, indices }))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize, keep: bool) -> Result<Var, AdError> {
        let xv = self.value(x);
        if axis >= xv.ndim() {
            return Err(AdError::BadAxis {
                op: "sum_axis",
                axis,
                ndim: xv.ndim(),
            });
        }
        let mut out = xv.sum_axis(Axis(axis));
        if keep {
            out = out.insert_axis(Axis(axis));
        }
        Ok(self.push(out, Op::SumAxis { x, axis, keep }))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize, keep: bool) -> Result<Var, AdError> {
        let xv = self.value(x);
        if axis >= xv.ndim() {
            return Err(AdError::BadAxis {
                op: "mean_axis",
                axis,
                ndim: xv.ndim(),
            });
        }
        let inv = F::one() / F::from_f64(xv.shape()[axis] as f64);
        let mut out = xv.sum_axis(Axis(axis)).mapv(|v| v * inv);
        if keep {
            out = out.insert_axis(Axis(axis));
        }
        Ok(self.push(out, Op::MeanAxis { x, axis, keep }))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, AdError> {
        let xv = self.value(x);
        if axis >= xv.ndim() {
            return Err(AdError::BadAxis {
                op: "softmax",
                axis,
                ndim: xv.ndim(),
            });
        }
        let mut out = ArrayD::zeros(xv.raw_dim());
        Zip::from(out.lanes_mut(Axis(axis)))
            .and(xv.lanes(Axis(axis)))
            .for_each(|mut o, l| {
                let m = l.iter().cloned().fold(F::neg_infinity(), F::max);
                let mut total = F::zero();
                for (oi, &xi) in o.iter_mut().zip(l.iter()) {
                    let e = (xi - m).exp();
                    *oi = e;
                    total = total + e;
                }
                for oi in o.iter_mut() {
                    *oi = *oi / total;
                }
            });
        Ok(self.push(out, Op::Softmax { x, axis }))
    }

    /// Mean squared error over all elements; scalar output.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(AdError::ShapeMismatch {
                op: "mse",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        if av.is_empty() {
            return Err(AdError::EmptyInput { op: "mse" });
        }
        let inv = F::one() / F::from_f64(av.len() as f64);
        let mut total = F::zero();
        Zip::from(av).and(bv).for_each(|&x, &y| {
            let d = x - y;
            total = total + d * d * inv;
        });
        let out = ArrayD::from_elem(IxDyn(&[]), total);
        Ok(self.push(out, Op::Mse(a, b)))
    }

    /// Softmax cross-entropy against integer labels, averaged over rows.
    pub fn cross_entropy_with_logits(
        &mut self,
        logits: Var,
        labels: Arc<Vec<u32>>,
    ) -> Result<Var, AdError> {
        let lv = self.value(logits);
        if lv.ndim() != 2 || lv.shape()[0] != labels.len() {
            return Err(AdError::ShapeMismatch {
                op: "cross_entropy_with_logits",
                lhs: lv.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let classes = lv.shape()[1];
        if let Some((row, &bad)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= classes)
        {
            return Err(AdError::LabelOutOfRange {
                row,
                label: bad as usize,
                classes,
            });
        }
        let lv2 = as_2d(lv);
        let inv = F::one() / F::from_f64(labels.len() as f64);
        let mut total = F::zero();
        for (row, &label) in lv2.axis_iter(Axis(0)).zip(labels.iter()) {
            let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for &x in row.iter() {
                sum = sum + (x - m).exp();
            }
            let lse = m + sum.ln();
            total = total + (lse - row[label as usize]) * inv;
        }
        let out = ArrayD::from_elem(IxDyn(&[]), total);
        Ok(self.push(out, Op::CrossEntropy { logits, labels }))
    }

    /// Bilinear lookup into a `[height*width, channels]` feature map at
    /// continuous grid coordinates `uv = (u, v)`, u along width.
    pub fn bilinear_sample_2d(
        &mut self,
        map: Var,
        height: usize,
        width: usize,
        uv: Arc<Vec<[F; 2]>>,
    ) -> Result<Var, AdError> {
        let mv = self.value(map);
        if mv.ndim() != 2 || mv.shape()[0] != height * width {
            return Err(AdError::ShapeMismatch {
                op: "bilinear_sample_2d",
                lhs: mv.shape().to_vec(),
                rhs: vec![height * width],
            });
        }
        for (i, p) in uv.iter().enumerate() {
            let (u, v) = (p[0].as_f64(), p[1].as_f64());
            if !(0.0..=(width - 1) as f64).contains(&u) || !(0.0..=(height - 1) as f64).contains(&v)
            {
                return Err(AdError::UvOutOfRange {
                    point: i,
                    u,
                    v,
                    width,
                    height,
                });
            }
        }
        let channels = mv.shape()[1];
        let mv2 = as_2d(mv);
        let mut out = Array2::<F>::zeros((uv.len(), channels));
        for (mut orow, p) in out.axis_iter_mut(Axis(0)).zip(uv.iter()) {
            for (corner, weight) in bilinear_corners(p[0], p[1], width, height) {
                let texel = mv2.row(corner);
                for (o, &t) in orow.iter_mut().zip(texel.iter()) {
                    *o = *o + weight * t;
                }
            }
        }
        Ok(self.push(
            out.into_dyn(),
            Op::BilinearSample {
                map,
                height,
                width,
                uv,
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AdError> {
        let xv = self.value(x);
        if shape.iter().product::<usize>() != xv.len() {
            return Err(AdError::BadReshape {
                from: xv.shape().to_vec(),
                to: shape.to_vec(),
            });
        }
        let out = xv
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("validated reshape");
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Exclusive prefix sum along `axis`: out[i] = sum of inputs before i.
    pub fn cumsum_exclusive(&mut self, x: Var, axis: usize) -> Result<Var, AdError> {
        let xv = self.value(x);
        if axis >= xv.ndim() {
            return Err(AdError::BadAxis {
                op: "cumsum_exclusive",
                axis,
                ndim: xv.ndim(),
            });
        }
        let mut out = ArrayD::zeros(xv.raw_dim());
        Zip::from(out.lanes_mut(Axis(axis)))
            .and(xv.lanes(Axis(axis)))
            .for_each(|mut o, l| {
                let mut run = F::zero();
                for (oi, &xi) in o.iter_mut().zip(l.iter()) {
                    *oi = run;
                    run = run + xi;
                }
            });
        Ok(self.push(out, Op::CumsumExclusive { x, axis }))
    }

    /// Scalar constant leaf.
    pub fn scalar(&mut self, v: F) -> Var {
        self.leaf(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub(crate) fn backprop_node(
        &self,
        i: usize,
        grad: &ArrayD<F>,
        slots: &mut [Option<ArrayD<F>>],
    ) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accum(
                    &mut slots[a.0],
                    reduce_to_shape(grad.clone(), self.value(*a).shape()),
                );
                accum(
                    &mut slots[b.0],
                    reduce_to_shape(grad.clone(), self.value(*b).shape()),
                );
            }
            Op::Sub(a, b) => {
                accum(
                    &mut slots[a.0],
                    reduce_to_shape(grad.clone(), self.value(*a).shape()),
                );
                accum(
                    &mut slots[b.0],
                    reduce_to_shape(grad.mapv(|g| -g), self.value(*b).shape()),
                );
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let shape = grad.shape().to_vec();
                let bb = bv.broadcast(IxDyn(&shape)).unwrap();
                let ab = av.broadcast(IxDyn(&shape)).unwrap();
                let mut ga = grad.clone();
                ga.zip_mut_with(&bb, |g, &y| *g = *g * y);
                let mut gb = grad.clone();
                gb.zip_mut_with(&ab, |g, &x| *g = *g * x);
                accum(&mut slots[a.0], reduce_to_shape(ga, av.shape()));
                accum(&mut slots[b.0], reduce_to_shape(gb, bv.shape()));
            }
            Op::MatMul(a, b) => {
                let g2 = as_2d(grad);
                let (av, bv) = (as_2d(self.value(*a)), as_2d(self.value(*b)));
                let ga = matmul_views(&g2, &bv.t()).into_dyn();
                let gb = matmul_views(&av.t(), &g2).into_dyn();
                accum(&mut slots[a.0], ga);
                accum(&mut slots[b.0], gb);
            }
            Op::Relu(x) => {
                let mut gx = grad.clone();
                gx.zip_mut_with(self.value(*x), |g, &v| {
                    if v <= F::zero() {
                        *g = F::zero();
                    }
                });
                accum(&mut slots[x.0], gx);
            }
            Op::Exp(x) => {
                let mut gx = grad.clone();
                gx.zip_mut_with(&node.value, |g, &y| *g = *g * y);
                accum(&mut slots[x.0], gx);
            }
            Op::Log(x) => {
                let mut gx = grad.clone();
                gx.zip_mut_with(self.value(*x), |g, &v| *g = *g / v);
                accum(&mut slots[x.0], gx);
            }
            Op::Softplus(x) => {
                let mut gx = grad.clone();
                gx.zip_mut_with(self.value(*x), |g, &v| *g = *g * stable_sigmoid(v));
                accum(&mut slots[x.0], gx);
            }
            Op::Sigmoid(x) => {
                let mut gx = grad.clone();
                gx.zip_mut_with(&node.value, |g, &y| *g = *g * y * (F::one() - y));
                accum(&mut slots[x.0], gx);
            }
            Op::Affine { x, a } => {
                accum(&mut slots[x.0], grad.mapv(|g| g * *a));
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0usize;
                for &p in parts {
                    let extent = self.value(p).shape()[*axis];
                    let piece = grad
                        .slice_axis(Axis(*axis), ndarray::Slice::from(offset..offset + extent))
                        .to_owned();
                    accum(&mut slots[p.0], piece);
                    offset += extent;
                }
            }
            Op::GatherRows { src, indices } => {
                let mut gs = Array2::<F>::zeros(as_2d(self.value(*src)).raw_dim());
                let g2 = as_2d(grad);
                for (grow, &idx) in g2.axis_iter(Axis(0)).zip(indices.iter()) {
                    let mut srow = gs.row_mut(idx as usize);
                    srow += &grow;
                }
                accum(&mut slots[src.0], gs.into_dyn());
            }
            Op::SumAxis { x, axis, keep } => {
                let xshape = self.value(*x).shape().to_vec();
                let g = if *keep {
                    grad.clone()
                } else {
                    grad.clone().insert_axis(Axis(*axis))
                };
                let gx = g.broadcast(IxDyn(&xshape)).unwrap().to_owned();
                accum(&mut slots[x.0], gx);
            }
            Op::MeanAxis { x, axis, keep } => {
                let xshape = self.value(*x).shape().to_vec();
                let inv = F::one() / F::from_f64(xshape[*axis] as f64);
                let g = if *keep {
                    grad.clone()
                } else {
                    grad.clone().insert_axis(Axis(*axis))
                };
                let gx = g.broadcast(IxDyn(&xshape)).unwrap().mapv(|v| v * inv);
                accum(&mut slots[x.0], gx);
            }
            Op::Softmax { x, axis } => {
                let y = &node.value;
                let mut gx = ArrayD::zeros(y.raw_dim());
                Zip::from(gx.lanes_mut(Axis(*axis)))
                    .and(grad.lanes(Axis(*axis)))
                    .and(y.lanes(Axis(*axis)))
                    .for_each(|mut o, g, yl| {
                        let mut dot = F::zero();
                        for (&gi, &yi) in g.iter().zip(yl.iter()) {
                            dot = dot + gi * yi;
                        }
                        for ((oi, &gi), &yi) in o.iter_mut().zip(g.iter()).zip(yl.iter()) {
                            *oi = yi * (gi - dot);
                        }
                    });
                accum(&mut slots[x.0], gx);
            }
            Op::Mse(a, b) => {
                let g = *grad.first().expect("scalar grad");
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = g * F::from_f64(2.0 / av.len() as f64);
                let mut d = av.clone();
                d.zip_mut_with(bv, |x, &y| *x = (*x - y) * scale);
                accum(&mut slots[b.0], d.mapv(|v| -v));
                accum(&mut slots[a.0], d);
            }
            Op::CrossEntropy { logits, labels } => {
                let g = *grad.first().expect("scalar grad");
                let lv = as_2d(self.value(*logits));
                let inv = g * F::from_f64(1.0 / labels.len() as f64);
                let mut gl = Array2::<F>::zeros(lv.raw_dim());
                for ((row, mut grow), &label) in lv
                    .axis_iter(Axis(0))
                    .zip(gl.axis_iter_mut(Axis(0)))
                    .zip(labels.iter())
                {
                    let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
                    let mut sum = F::zero();
                    for &x in row.iter() {
                        sum = sum + (x - m).exp();
                    }
                    for (j, (gj, &xj)) in grow.iter_mut().zip(row.iter()).enumerate() {
                        let p = (xj - m).exp() / sum;
                        let target = if j == label as usize {
                            F::one()
                        } else {
                            F::zero()
                        };
                        *gj = (p - target) * inv;
                    }
                }
                accum(&mut slots[logits.0], gl.into_dyn());
            }
            Op::BilinearSample {
                map,
                height,
                width,
                uv,
            } => {
                let mut gm = Array2::<F>::zeros(as_2d(self.value(*map)).raw_dim());
                let g2 = as_2d(grad);
                for (grow, p) in g2.axis_iter(Axis(0)).zip(uv.iter()) {
                    for (corner, weight) in bilinear_corners(p[0], p[1], *width, *height) {
                        let mut trow = gm.row_mut(corner);
                        for (t, &g) in trow.iter_mut().zip(grow.iter()) {
                            *t = *t + weight * g;
                        }
                    }
                }
                accum(&mut slots[map.0], gm.into_dyn());
            }
            Op::Reshape(x) => {
                let xshape = self.value(*x).shape().to_vec();
                let gx = grad
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(IxDyn(&xshape))
                    .expect("reshape grad");
                accum(&mut slots[x.0], gx);
            }
            Op::CumsumExclusive { x, axis } => {
                let mut gx = ArrayD::zeros(grad.raw_dim());
                Zip::from(gx.lanes_mut(Axis(*axis)))
                    .and(grad.lanes(Axis(*axis)))
                    .for_each(|mut o, g| {
                        // dx[j] = sum of upstream grads strictly after j
                        let mut run = F::zero();
                        for (oi, &gi) in o.iter_mut().rev().zip(g.iter().rev()) {
                            *oi = run;
                            run = run + gi;
                        }
                    });
                accum(&mut slots[x.0], gx);
            }
        }
    }
}

/// Four (row_index, weight) pairs for bilinear interpolation at (u, v).
fn bilinear_corners<F: Real>(u: F, v: F, width: usize, height: usize) -> [(usize, F); 4] {
    let u0 = (u.as_f64().floor() as usize).min(width - 1);
    let v0 = (v.as_f64().floor() as usize).min(height - 1);
    let u1 = (u0 + 1).min(width - 1);
    let v1 = (v0 + 1).min(height - 1);
    let fu = u - F::from_f64(u0 as f64);
    let fv = v - F::from_f64(v0 as f64);
    let one = F::one();
    [
        (v0 * width + u0, (one - fu) * (one - fv)),
        (v0 * width + u1, fu * (one - fv)),
        (v1 * width + u0, (one - fu) * fv),
        (v1 * width + u1, fu * fv),
    ]
}
