//! Reverse-mode differentiation over a recorded forward pass.
//!
//! A [`Tape`] is built per forward pass. Parameters enter as deduplicated
//! leaf nodes, so a parameter used many times (e.g. across an unrolled
//! multi-step loss) accumulates gradient from every use. `backward` then
//! adds leaf gradients into the [`ParamStore`], summing with whatever was
//! already there.

use std::collections::HashMap;
use std::rc::Rc;

use super::kernels;
use super::layers::{Activation, ConvSpec};
use super::tensor::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub usize);

/// Row-gather topology used by neighbor fusion: output row `r` is the
/// concatenation of the listed source rows, with `None` standing for the
/// all-zero sentinel of a missing neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub members: usize,
    pub rows: Vec<Vec<Option<usize>>>,
}

enum Op {
    Leaf,
    Dense {
        x: usize,
        w: usize,
        b: usize,
    },
    Conv {
        x: usize,
        w: usize,
        b: usize,
        spec: ConvSpec,
    },
    ConvTranspose {
        x: usize,
        w: usize,
        b: usize,
        spec: ConvSpec,
    },
    Activation {
        x: usize,
        kind: Activation,
    },
    Reshape {
        x: usize,
    },
    ConcatCols {
        parts: Vec<usize>,
    },
    SliceCols {
        x: usize,
        start: usize,
        len: usize,
    },
    GatherRows {
        x: usize,
        table: Rc<NeighborTable>,
    },
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        c: f64,
    },
    Sum {
        x: usize,
    },
    MseVsConst {
        x: usize,
        target: Vec<f64>,
    },
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, usize>, // ParamId.0 -> node index
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: VarId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn values(&self, id: VarId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn to_tensor(&self, id: VarId) -> Tensor {
        Tensor::new(self.nodes[id.0].shape.clone(), self.nodes[id.0].data.clone())
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> VarId {
        self.nodes.push(Node { shape, data, op });
        VarId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: &Tensor) -> VarId {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf)
    }

    pub fn input_owned(&mut self, t: Tensor) -> VarId {
        self.push(t.shape, t.data, Op::Leaf)
    }

    /// Leaf node for a parameter; one node per parameter per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> VarId {
        if let Some(&n) = self.param_nodes.get(&id.0) {
            return VarId(n);
        }
        let t = store.value(id);
        let v = self.push(t.shape.clone(), t.data.clone(), Op::Leaf);
        self.nodes[v.0].op = Op::Leaf; // leaf data, tracked below
        self.param_nodes.insert(id.0, v.0);
        v
    }

    fn rows_cols(&self, id: VarId, context: &str) -> Result<(usize, usize)> {
        let s = &self.nodes[id.0].shape;
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                context: context.into(),
                expected: vec![0, 0],
                actual: s.clone(),
            });
        }
        Ok((s[0], s[1]))
    }

    /// y = x · w + b with x: [rows, in], w: [in, out], b: [out].
    pub fn dense(&mut self, x: VarId, w: VarId, b: VarId) -> Result<VarId> {
        let (rows, in_w) = self.rows_cols(x, "dense input")?;
        let (w_in, out_w) = self.rows_cols(w, "dense weight")?;
        if w_in != in_w {
            return Err(Error::ShapeMismatch {
                context: "dense".into(),
                expected: vec![rows, w_in],
                actual: vec![rows, in_w],
            });
        }
        if self.nodes[b.0].shape != [out_w] {
            return Err(Error::ShapeMismatch {
                context: "dense bias".into(),
                expected: vec![out_w],
                actual: self.nodes[b.0].shape.clone(),
            });
        }
        let mut y = vec![0.0; rows * out_w];
        kernels::dense_forward(
            &self.nodes[x.0].data,
            rows,
            in_w,
            &self.nodes[w.0].data,
            &self.nodes[b.0].data,
            out_w,
            &mut y,
        );
        Ok(self.push(vec![rows, out_w], y, Op::Dense { x: x.0, w: w.0, b: b.0 }))
    }

    fn check_conv_input(&self, x: VarId, spec: &ConvSpec, what: &str) -> Result<(usize, Vec<usize>)> {
        let s = &self.nodes[x.0].shape;
        if s.len() != spec.dims + 2 || s[1] != spec.c_in {
            return Err(Error::ShapeMismatch {
                context: what.into(),
                expected: vec![0, spec.c_in],
                actual: s.clone(),
            });
        }
        Ok((s[0], s[2..].to_vec()))
    }

    pub fn conv(&mut self, x: VarId, w: VarId, b: VarId, spec: &ConvSpec) -> Result<VarId> {
        let (batch, ext) = self.check_conv_input(x, spec, "conv input")?;
        let oext: Vec<usize> = ext
            .iter()
            .map(|&e| kernels::conv_out_extent(e, spec.kernel, spec.stride))
            .collect();
        let mut shape = vec![batch, spec.c_out];
        shape.extend_from_slice(&oext);
        let mut y = vec![0.0; shape.iter().product()];
        kernels::conv_forward(
            &self.nodes[x.0].data,
            batch,
            spec.c_in,
            &ext,
            &self.nodes[w.0].data,
            &self.nodes[b.0].data,
            spec.c_out,
            spec.kernel,
            spec.stride,
            &mut y,
        );
        Ok(self.push(shape, y, Op::Conv { x: x.0, w: w.0, b: b.0, spec: *spec }))
    }

    pub fn conv_transpose(&mut self, x: VarId, w: VarId, b: VarId, spec: &ConvSpec) -> Result<VarId> {
        let (batch, ext) = self.check_conv_input(x, spec, "conv_transpose input")?;
        let mut shape = vec![batch, spec.c_out];
        shape.extend(ext.iter().map(|&e| e * spec.stride));
        let mut y = vec![0.0; shape.iter().product()];
        kernels::conv_transpose_forward(
            &self.nodes[x.0].data,
            batch,
            spec.c_in,
            &ext,
            &self.nodes[w.0].data,
            &self.nodes[b.0].data,
            spec.c_out,
            spec.kernel,
            spec.stride,
            &mut y,
        );
        Ok(self.push(shape, y, Op::ConvTranspose { x: x.0, w: w.0, b: b.0, spec: *spec }))
    }

    pub fn activation(&mut self, x: VarId, kind: Activation) -> VarId {
        let data: Vec<f64> = match kind {
            Activation::Relu => self.nodes[x.0].data.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => self.nodes[x.0].data.iter().map(|&v| v.tanh()).collect(),
            Activation::Identity => self.nodes[x.0].data.clone(),
        };
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, data, Op::Activation { x: x.0, kind })
    }

    pub fn reshape(&mut self, x: VarId, shape: Vec<usize>) -> Result<VarId> {
        let n: usize = shape.iter().product();
        if n != self.nodes[x.0].data.len() {
            return Err(Error::ShapeMismatch {
                context: "reshape".into(),
                expected: shape,
                actual: self.nodes[x.0].shape.clone(),
            });
        }
        let data = self.nodes[x.0].data.clone();
        Ok(self.push(shape, data, Op::Reshape { x: x.0 }))
    }

    /// Concatenate [rows, w_i] matrices along columns.
    pub fn concat_cols(&mut self, parts: &[VarId]) -> Result<VarId> {
        assert!(!parts.is_empty());
        let (rows, _) = self.rows_cols(parts[0], "concat")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.rows_cols(p, "concat")?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    context: "concat rows".into(),
                    expected: vec![rows],
                    actual: vec![r],
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = &self.nodes[p.0].data;
            for r in 0..rows {
                data[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        Ok(self.push(
            vec![rows, total],
            data,
            Op::ConcatCols { parts: parts.iter().map(|p| p.0).collect() },
        ))
    }

    pub fn slice_cols(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        let (rows, cols) = self.rows_cols(x, "slice_cols")?;
        if start + len > cols {
            return Err(Error::WidthMismatch {
                context: "slice_cols".into(),
                expected: cols,
                actual: start + len,
            });
        }
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; rows * len];
        for r in 0..rows {
            data[r * len..(r + 1) * len].copy_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        Ok(self.push(vec![rows, len], data, Op::SliceCols { x: x.0, start, len }))
    }

    /// Output row r = concat of table.rows[r] source rows (None -> zeros).
    pub fn gather_rows(&mut self, x: VarId, table: Rc<NeighborTable>) -> Result<VarId> {
        let (rows, cols) = self.rows_cols(x, "gather_rows")?;
        let out_rows = table.rows.len();
        let out_cols = table.members * cols;
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; out_rows * out_cols];
        for (r, refs) in table.rows.iter().enumerate() {
            debug_assert_eq!(refs.len(), table.members);
            for (m, &src_row) in refs.iter().enumerate() {
                if let Some(sr) = src_row {
                    debug_assert!(sr < rows);
                    data[r * out_cols + m * cols..r * out_cols + (m + 1) * cols]
                        .copy_from_slice(&src[sr * cols..(sr + 1) * cols]);
                }
            }
        }
        Ok(self.push(vec![out_rows, out_cols], data, Op::GatherRows { x: x.0, table }))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::ShapeMismatch {
                context: "add".into(),
                expected: self.nodes[a.0].shape.clone(),
                actual: self.nodes[b.0].shape.clone(),
            });
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, data, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> VarId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v * c).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, data, Op::Scale { x: x.0, c })
    }

    pub fn sum(&mut self, x: VarId) -> VarId {
        let s: f64 = self.nodes[x.0].data.iter().sum();
        self.push(vec![1], vec![s], Op::Sum { x: x.0 })
    }

    /// Mean squared difference against constant targets; scalar output.
    pub fn mse_vs(&mut self, x: VarId, target: &[f64]) -> Result<VarId> {
        if target.len() != self.nodes[x.0].data.len() {
            return Err(Error::WidthMismatch {
                context: "mse target".into(),
                expected: self.nodes[x.0].data.len(),
                actual: target.len(),
            });
        }
        let n = target.len() as f64;
        let s: f64 = self.nodes[x.0]
            .data
            .iter()
            .zip(target)
            .map(|(a, t)| (a - t) * (a - t))
            .sum();
        Ok(self.push(
            vec![1],
            vec![s / n],
            Op::MseVsConst { x: x.0, target: target.to_vec() },
        ))
    }

    /// Reverse sweep from `loss` (shape [1]); accumulates parameter
    /// gradients into `store`.
    pub fn backward(&self, loss: VarId, store: &mut ParamStore) -> Result<()> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::invalid("backward called without a recorded forward pass"));
        }
        if self.nodes[loss.0].shape != [1] {
            return Err(Error::ShapeMismatch {
                context: "backward loss".into(),
                expected: vec![1],
                actual: self.nodes[loss.0].shape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(g); // keep for parameter accumulation below
                    continue;
                }
                Op::Dense { x, w, b } => {
                    let (rows, in_w) = (self.nodes[*x].shape[0], self.nodes[*x].shape[1]);
                    let out_w = self.nodes[i].shape[1];
                    let (gx, gw, gb) = alloc3(&mut grads, *x, *w, *b, &self.nodes);
                    let mut gx = gx;
                    let mut gw = gw;
                    let mut gb = gb;
                    kernels::dense_backward(
                        &self.nodes[*x].data,
                        rows,
                        in_w,
                        &self.nodes[*w].data,
                        out_w,
                        &g,
                        &mut gx,
                        &mut gw,
                        &mut gb,
                    );
                    grads[*x] = Some(gx);
                    grads[*w] = Some(gw);
                    grads[*b] = Some(gb);
                }
                Op::Conv { x, w, b, spec } => {
                    let batch = self.nodes[*x].shape[0];
                    let ext = self.nodes[*x].shape[2..].to_vec();
                    let (gx, gw, gb) = alloc3(&mut grads, *x, *w, *b, &self.nodes);
                    let mut gx = gx;
                    let mut gw = gw;
                    let mut gb = gb;
                    kernels::conv_backward(
                        &self.nodes[*x].data,
                        batch,
                        spec.c_in,
                        &ext,
                        &self.nodes[*w].data,
                        spec.c_out,
                        spec.kernel,
                        spec.stride,
                        &g,
                        &mut gx,
                        &mut gw,
                        &mut gb,
                    );
                    grads[*x] = Some(gx);
                    grads[*w] = Some(gw);
                    grads[*b] = Some(gb);
                }
                Op::ConvTranspose { x, w, b, spec } => {
                    let batch = self.nodes[*x].shape[0];
                    let ext = self.nodes[*x].shape[2..].to_vec();
                    let (gx, gw, gb) = alloc3(&mut grads, *x, *w, *b, &self.nodes);
                    let mut gx = gx;
                    let mut gw = gw;
                    let mut gb = gb;
                    kernels::conv_transpose_backward(
                        &self.nodes[*x].data,
                        batch,
                        spec.c_in,
                        &ext,
                        &self.nodes[*w].data,
                        spec.c_out,
                        spec.kernel,
                        spec.stride,
                        &g,
                        &mut gx,
                        &mut gw,
                        &mut gb,
                    );
                    grads[*x] = Some(gx);
                    grads[*w] = Some(gw);
                    grads[*b] = Some(gb);
                }
                Op::Activation { x, kind } => {
                    let mut gx = take_or_zeros(&mut grads, *x, &self.nodes);
                    match kind {
                        Activation::Relu => {
                            for ((gxv, &gv), &xv) in
                                gx.iter_mut().zip(&g).zip(&self.nodes[*x].data)
                            {
                                if xv > 0.0 {
                                    *gxv += gv;
                                }
                            }
                        }
                        Activation::Tanh => {
                            for ((gxv, &gv), &yv) in gx.iter_mut().zip(&g).zip(&self.nodes[i].data)
                            {
                                *gxv += gv * (1.0 - yv * yv);
                            }
                        }
                        Activation::Identity => {
                            for (gxv, &gv) in gx.iter_mut().zip(&g) {
                                *gxv += gv;
                            }
                        }
                    }
                    grads[*x] = Some(gx);
                }
                Op::Reshape { x } => {
                    let mut gx = take_or_zeros(&mut grads, *x, &self.nodes);
                    for (gxv, &gv) in gx.iter_mut().zip(&g) {
                        *gxv += gv;
                    }
                    grads[*x] = Some(gx);
                }
                Op::ConcatCols { parts } => {
                    let rows = self.nodes[i].shape[0];
                    let total = self.nodes[i].shape[1];
                    let mut off = 0;
                    for &p in parts {
                        let w = self.nodes[p].shape[1];
                        let mut gp = take_or_zeros(&mut grads, p, &self.nodes);
                        for r in 0..rows {
                            let src = &g[r * total + off..r * total + off + w];
                            for (gv, &sv) in gp[r * w..(r + 1) * w].iter_mut().zip(src) {
                                *gv += sv;
                            }
                        }
                        grads[p] = Some(gp);
                        off += w;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let rows = self.nodes[i].shape[0];
                    let cols = self.nodes[*x].shape[1];
                    let mut gx = take_or_zeros(&mut grads, *x, &self.nodes);
                    for r in 0..rows {
                        let src = &g[r * len..(r + 1) * len];
                        for (gv, &sv) in gx[r * cols + start..r * cols + start + len]
                            .iter_mut()
                            .zip(src)
                        {
                            *gv += sv;
                        }
                    }
                    grads[*x] = Some(gx);
                }
                Op::GatherRows { x, table } => {
                    let cols = self.nodes[*x].shape[1];
                    let out_cols = self.nodes[i].shape[1];
                    let mut gx = take_or_zeros(&mut grads, *x, &self.nodes);
                    for (r, refs) in table.rows.iter().enumerate() {
                        for (m, &src_row) in refs.iter().enumerate() {
                            if let Some(sr) = src_row {
                                let src = &g[r * out_cols + m * cols..r * out_cols + (m + 1) * cols];
                                for (gv, &sv) in
                                    gx[sr * cols..(sr + 1) * cols].iter_mut().zip(src)
                                {
                                    *gv += sv;
                                }
                            }
                        }
                    }
                    grads[*x] = Some(gx);
                }
                Op::Add { a, b } => {
                    let mut ga = take_or_zeros(&mut grads, *a, &self.nodes);
                    for (gv, &sv) in ga.iter_mut().zip(&g) {
                        *gv += sv;
                    }
                    grads[*a] = Some(ga);
                    let mut gb = take_or_zeros(&mut grads, *b, &self.nodes);
                    for (gv, &sv) in gb.iter_mut().zip(&g) {
                        *gv += sv;
                    }
                    grads[*b] = Some(gb);
                }
                Op::Scale { x, c } => {
                    let mut gx = take_or_zeros(&mut grads, *x, &self.nodes);
                    for (gv, &sv) in gx.iter_mut().zip(&g) {
                        *gv += sv * c;
                    }
                    grads[*x] = Some(gx);
                }
                Op::Sum { x } => {
                    let mut gx = take_or_zeros(&mut grads, *x, &self.nodes);
                    for gv in gx.iter_mut() {
                        *gv += g[0];
                    }
                    grads[*x] = Some(gx);
                }
                Op::MseVsConst { x, target } => {
                    let n = target.len() as f64;
                    let scale = 2.0 * g[0] / n;
                    let mut gx = take_or_zeros(&mut grads, *x, &self.nodes);
                    for ((gv, &xv), &tv) in gx.iter_mut().zip(&self.nodes[*x].data).zip(target) {
                        *gv += scale * (xv - tv);
                    }
                    grads[*x] = Some(gx);
                }
            }
        }

        for (&pid, &node) in &self.param_nodes {
            if let Some(g) = &grads[node] {
                store.accumulate_grad(ParamId(pid), g);
            }
        }
        Ok(())
    }
}

fn take_or_zeros(grads: &mut [Option<Vec<f64>>], idx: usize, nodes: &[Node]) -> Vec<f64> {
    grads[idx]
        .take()
        .unwrap_or_else(|| vec![0.0; nodes[idx].data.len()])
}

fn alloc3(
    grads: &mut [Option<Vec<f64>>],
    x: usize,
    w: usize,
    b: usize,
    nodes: &[Node],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let gx = take_or_zeros(grads, x, nodes);
    let gw = take_or_zeros(grads, w, nodes);
    let gb = take_or_zeros(grads, b, nodes);
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity_weight_gradient_is_all_ones() {
        // loss = sum(dense(I, b=0) @ [1,1]) -> dW[i][j] = x[j] = 1
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let b = store.add("b", Tensor::zeros(vec![2]));
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::new(vec![1, 2], vec![1.0, 1.0]));
        let wn = tape.param(&store, w);
        let bn = tape.param(&store, b);
        let y = tape.dense(x, wn, bn).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad.data, vec![1.0; 4]);
        assert_eq!(store.get(b).grad.data, vec![1.0; 2]);
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![2, 2], vec![0.3, -0.1, 0.7, 0.2]));
        let b = store.add("b", Tensor::zeros(vec![2]));
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::new(vec![1, 2], vec![1.0, 2.0]));
        let wn = tape.param(&store, w);
        let bn = tape.param(&store, b);
        let y = tape.dense(x, wn, bn).unwrap();
        let s = tape.sum(y);
        let loss = tape.scale(s, 0.0);
        tape.backward(loss, &mut store).unwrap();
        assert!(store.get(w).grad.data.iter().all(|&g| g == 0.0));
        assert!(store.get(b).grad.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_requires_recorded_forward() {
        let tape = Tape::new();
        let mut store = ParamStore::new();
        assert!(tape.backward(VarId(0), &mut store).is_err());
    }

    #[test]
    fn gradient_accumulates_across_backward_calls() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![1, 1], vec![2.0]));
        let b = store.add("b", Tensor::zeros(vec![1]));
        for _ in 0..2 {
            let mut tape = Tape::new();
            let x = tape.input(&Tensor::new(vec![1, 1], vec![3.0]));
            let wn = tape.param(&store, w);
            let bn = tape.param(&store, b);
            let y = tape.dense(x, wn, bn).unwrap();
            let loss = tape.sum(y);
            tape.backward(loss, &mut store).unwrap();
        }
        assert_eq!(store.get(w).grad.data, vec![6.0]); // 3.0 twice
        store.zero_grad();
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::new(vec![1, 1], vec![3.0]));
        let wn = tape.param(&store, w);
        let bn = tape.param(&store, b);
        let y = tape.dense(x, wn, bn).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad.data, vec![3.0]);
    }

    #[test]
    fn gather_rows_concatenates_and_zero_fills() {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let table = Rc::new(NeighborTable {
            members: 2,
            rows: vec![vec![Some(1), None], vec![Some(0), Some(1)]],
        });
        let y = tape.gather_rows(x, table).unwrap();
        assert_eq!(tape.values(y), &[3.0, 4.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn mse_matches_hand_value() {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::new(vec![1, 2], vec![1.0, 3.0]));
        let loss = tape.mse_vs(x, &[0.0, 0.0]).unwrap();
        assert_eq!(tape.values(loss), &[5.0]); // (1 + 9) / 2
    }
}
