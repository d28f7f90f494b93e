use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::gemm::gemm;
use super::{Graph, NodeId, Op, ParamSet, Tensor};
use crate::{Error, Result};

/// Values recorded by [`forward`]; enough to run [`Tape::backward`].
///
/// Parameter values are not copied; the tape instead remembers which
/// [`ParamSet`] (and which version of it) it was recorded against.
#[derive(Debug)]
pub struct Tape<'g> {
    graph: &'g Graph,
    values: Vec<Option<Tensor>>,
    stamp: (u64, u64),
}

fn value<'a>(
    graph: &Graph,
    values: &'a [Option<Tensor>],
    params: &'a ParamSet,
    node: NodeId,
) -> &'a Tensor {
    match graph.nodes[node.0] {
        Op::Param { index } => params.get(index),
        _ => values[node.0].as_ref().expect("operand evaluated before use"),
    }
}

fn embedding_rows(index: &Tensor, rows: usize) -> Result<Vec<usize>> {
    index
        .data()
        .iter()
        .map(|&v| {
            let i = v as usize;
            if v < 0.0 || libm::trunc(v) != v || i >= rows {
                Err(Error::Index {
                    what: "embedding row",
                    index: if v < 0.0 { usize::MAX } else { i },
                    bound: rows,
                })
            } else {
                Ok(i)
            }
        })
        .collect()
}

/// Evaluate `graph` on `params` and `inputs`.
///
/// Returns the output tensors (in the order passed to
/// [`super::GraphBuilder::finish`]) and the tape for a later backward pass.
pub fn forward<'g>(
    graph: &'g Graph,
    params: &ParamSet,
    inputs: &[Tensor],
) -> Result<(Vec<Tensor>, Tape<'g>)> {
    if inputs.len() != graph.inputs.len() {
        return Err(Error::config(format!(
            "graph declares {} inputs, got {}",
            graph.inputs.len(),
            inputs.len()
        )));
    }
    for (slot, (t, declared)) in inputs.iter().zip(&graph.inputs).enumerate() {
        if t.shape() != declared.as_slice() {
            return Err(Error::config(format!(
                "input {slot} has shape {:?}, graph declares {declared:?}",
                t.shape()
            )));
        }
    }
    for (index, declared) in &graph.params {
        let found = params.tensors().get(*index).ok_or(Error::Index {
            what: "parameter",
            index: *index,
            bound: params.len(),
        })?;
        if found.shape() != declared.as_slice() {
            return Err(Error::config(format!(
                "parameter {index} has shape {:?}, graph declares {declared:?}",
                found.shape()
            )));
        }
    }

    let mut values: Vec<Option<Tensor>> = Vec::with_capacity(graph.nodes.len());
    for (i, op) in graph.nodes.iter().enumerate() {
        let v = |n: NodeId| value(graph, &values, params, n);
        let out = match *op {
            Op::Param { index } => {
                if !params.get(index).is_finite() {
                    return Err(Error::NonFinite { node: i });
                }
                None
            }
            Op::Input { slot } => Some(inputs[slot].clone()),
            Op::Affine { x, w, b } => {
                let (xv, wv) = (v(x), v(w));
                let (n, k, m) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
                let mut out = Tensor::zeros(&[n, m]);
                let beta = match b {
                    Some(b) => {
                        let bv = v(b).data();
                        for row in out.data_mut().chunks_exact_mut(m) {
                            row.copy_from_slice(bv);
                        }
                        1.0
                    }
                    None => 0.0,
                };
                gemm(n, k, m, xv.data(), false, wv.data(), true, beta, out.data_mut());
                Some(out)
            }
            Op::Relu(x) => {
                let mut out = v(x).clone();
                for e in out.data_mut() {
                    if *e <= 0.0 {
                        *e = 0.0;
                    }
                }
                Some(out)
            }
            Op::Embedding { table, index } => {
                let tv = v(table);
                let rows = embedding_rows(v(index), tv.shape()[0])?;
                let e = tv.shape()[1];
                let mut data = Vec::with_capacity(rows.len() * e);
                for r in rows {
                    data.extend_from_slice(tv.row(r));
                }
                Some(Tensor::new(graph.shapes[i].clone(), data)?)
            }
            Op::Softmax(x) => {
                let mut out = v(x).clone();
                let c = out.cols();
                for row in out.data_mut().chunks_exact_mut(c) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for e in row.iter_mut() {
                        *e = libm::exp(*e - max);
                        total += *e;
                    }
                    for e in row.iter_mut() {
                        *e /= total;
                    }
                }
                Some(out)
            }
            Op::Add(a, b) => {
                let mut out = v(a).clone();
                out.add_assign(v(b));
                Some(out)
            }
            Op::Scale(x, f) => {
                let mut out = v(x).clone();
                out.data_mut().iter_mut().for_each(|e| *e *= f);
                Some(out)
            }
            Op::ReduceSum(x) => Some(Tensor::vector(vec![v(x).data().iter().sum()])),
            Op::Square(x) => {
                let mut out = v(x).clone();
                out.data_mut().iter_mut().for_each(|e| *e *= *e);
                Some(out)
            }
        };
        if let Some(t) = &out {
            if !t.is_finite() {
                return Err(Error::NonFinite { node: i });
            }
        }
        values.push(out);
    }

    let outputs = graph
        .outputs
        .iter()
        .map(|&o| value(graph, &values, params, o).clone())
        .collect();
    Ok((
        outputs,
        Tape {
            graph,
            values,
            stamp: params.stamp(),
        },
    ))
}

fn accumulate(grads: &mut [Option<Tensor>], n: NodeId, g: Tensor) {
    match &mut grads[n.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl<'g> Tape<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Recorded value of a non-parameter node.
    pub fn value(&self, node: NodeId) -> Option<&Tensor> {
        self.values.get(node.0).and_then(Option::as_ref)
    }

    /// Propagate `seeds` (one per graph output, shaped like it) back to the
    /// parameters. Returns one gradient per tensor of `params`; parameters the
    /// graph never touches get zeros.
    pub fn backward(&self, params: &ParamSet, seeds: &[Tensor]) -> Result<Vec<Tensor>> {
        if params.stamp() != self.stamp {
            return Err(Error::StaleTape);
        }
        let graph = self.graph;
        if seeds.len() != graph.outputs.len() {
            return Err(Error::shape(format!(
                "{} seeds for {} outputs",
                seeds.len(),
                graph.outputs.len()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; graph.nodes.len()];
        for (&o, seed) in graph.outputs.iter().zip(seeds) {
            if seed.shape() != graph.shapes[o.0].as_slice() {
                return Err(Error::shape(format!(
                    "seed {:?} for output {:?}",
                    seed.shape(),
                    graph.shapes[o.0]
                )));
            }
            accumulate(&mut grads, o, seed.clone());
        }

        let mut param_grads: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        let needs = |n: NodeId| graph.on_param_path[n.0];
        let val = |n: NodeId| value(graph, &self.values, params, n);

        for i in (0..graph.nodes.len()).rev() {
            if !graph.on_param_path[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match graph.nodes[i] {
                Op::Input { .. } => {}
                Op::Param { index } => param_grads[index].add_assign(&g),
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (val(x), val(w));
                    let (n, k, m) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
                    if needs(x) {
                        let mut dx = Tensor::zeros(&[n, k]);
                        gemm(n, m, k, g.data(), false, wv.data(), false, 0.0, dx.data_mut());
                        accumulate(&mut grads, x, dx);
                    }
                    if needs(w) {
                        let mut dw = Tensor::zeros(&[m, k]);
                        gemm(m, n, k, g.data(), true, xv.data(), false, 0.0, dw.data_mut());
                        accumulate(&mut grads, w, dw);
                    }
                    if let Some(b) = b.filter(|&b| needs(b)) {
                        let mut db = Tensor::zeros(&[m]);
                        for row in g.data().chunks_exact(m) {
                            for (d, r) in db.data_mut().iter_mut().zip(row) {
                                *d += r;
                            }
                        }
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::Relu(x) => {
                    let mut dx = g;
                    // derivative at exactly 0 is 0
                    for (d, &xv) in dx.data_mut().iter_mut().zip(val(x).data()) {
                        if xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, x, dx);
                }
                Op::Embedding { table, index } => {
                    let tv = val(table);
                    let rows = embedding_rows(val(index), tv.shape()[0])?;
                    let e = tv.shape()[1];
                    let mut dt = Tensor::zeros(tv.shape());
                    for (r, grow) in rows.into_iter().zip(g.data().chunks_exact(e)) {
                        for (d, v) in dt.data_mut()[r * e..(r + 1) * e].iter_mut().zip(grow) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, table, dt);
                }
                Op::Softmax(x) => {
                    let y = self.values[i].as_ref().unwrap();
                    let c = y.cols();
                    let mut dx = g;
                    for (drow, yrow) in dx.data_mut().chunks_exact_mut(c).zip(y.data().chunks_exact(c)) {
                        let dot: f64 = drow.iter().zip(yrow).map(|(d, y)| d * y).sum();
                        for (d, y) in drow.iter_mut().zip(yrow) {
                            *d = y * (*d - dot);
                        }
                    }
                    accumulate(&mut grads, x, dx);
                }
                Op::Add(a, b) => {
                    match (needs(a), needs(b)) {
                        (true, true) => {
                            accumulate(&mut grads, a, g.clone());
                            accumulate(&mut grads, b, g);
                        }
                        (true, false) => accumulate(&mut grads, a, g),
                        (false, true) => accumulate(&mut grads, b, g),
                        (false, false) => {}
                    }
                }
                Op::Scale(x, f) => {
                    let mut dx = g;
                    dx.data_mut().iter_mut().for_each(|d| *d *= f);
                    accumulate(&mut grads, x, dx);
                }
                Op::ReduceSum(x) => {
                    let shape = &graph.shapes[x.0];
                    accumulate(&mut grads, x, Tensor::full(shape, g.data()[0]));
                }
                Op::Square(x) => {
                    let mut dx = g;
                    for (d, &xv) in dx.data_mut().iter_mut().zip(val(x).data()) {
                        *d *= 2.0 * xv;
                    }
                    accumulate(&mut grads, x, dx);
                }
            }
        }
        Ok(param_grads)
    }
}
