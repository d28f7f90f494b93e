use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Index of a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The closed set of primitives.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Caller-supplied tensor number `slot`.
    Input { slot: usize },
    /// Parameter tensor number `index` of the [`super::ParamSet`].
    Param { index: usize },
    /// `x [n, k] * w^T + b` with `w [m, k]` and optional `b [m]`.
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Relu(NodeId),
    /// Rows of `table [r, e]` picked by the integer-valued `index [n]`.
    Embedding { table: NodeId, index: NodeId },
    /// Softmax along the last axis.
    Softmax(NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Sum of every entry, shape `[1]`.
    ReduceSum(NodeId),
    Square(NodeId),
}

impl Op {
    pub(crate) fn operands(&self) -> ([Option<NodeId>; 3], usize) {
        match *self {
            Op::Input { .. } | Op::Param { .. } => ([None, None, None], 0),
            Op::Affine { x, w, b } => ([Some(x), Some(w), b], if b.is_some() { 3 } else { 2 }),
            Op::Embedding { table, index } => ([Some(table), Some(index), None], 2),
            Op::Add(a, b) => ([Some(a), Some(b), None], 2),
            Op::Relu(a) | Op::Softmax(a) | Op::Scale(a, _) | Op::ReduceSum(a) | Op::Square(a) => {
                ([Some(a), None, None], 1)
            }
        }
    }
}

/// Acyclic computation graph; storage order is a topological order.
#[derive(Clone, Debug)]
pub struct Graph {
    pub(crate) nodes: Vec<Op>,
    pub(crate) shapes: Vec<Vec<usize>>,
    pub(crate) inputs: Vec<Vec<usize>>,
    pub(crate) params: Vec<(usize, Vec<usize>)>,
    pub(crate) outputs: Vec<NodeId>,
    /// Whether a node depends on any parameter.
    pub(crate) on_param_path: Vec<bool>,
}

impl Graph {
    pub fn nodes(&self) -> &[Op] {
        &self.nodes
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn shape(&self, node: NodeId) -> &[usize] {
        &self.shapes[node.0]
    }

    /// Declared shapes of the inputs, by slot.
    pub fn input_shapes(&self) -> &[Vec<usize>] {
        &self.inputs
    }
}

/// Builds a [`Graph`], inferring and checking shapes as nodes are added.
#[derive(Default)]
pub struct GraphBuilder {
    nodes: Vec<Op>,
    shapes: Vec<Vec<usize>>,
    inputs: Vec<Vec<usize>>,
    params: Vec<(usize, Vec<usize>)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.nodes.push(op);
        self.shapes.push(shape);
        NodeId(self.nodes.len() - 1)
    }

    fn shape_of(&self, n: NodeId) -> Result<&[usize]> {
        self.shapes
            .get(n.0)
            .map(Vec::as_slice)
            .ok_or(Error::Index {
                what: "node",
                index: n.0,
                bound: self.nodes.len(),
            })
    }

    /// Declare the next input slot.
    pub fn input(&mut self, shape: &[usize]) -> NodeId {
        let slot = self.inputs.len();
        self.inputs.push(shape.to_vec());
        self.push(Op::Input { slot }, shape.to_vec())
    }

    /// Reference parameter `index` with its expected shape.
    pub fn param(&mut self, index: usize, shape: &[usize]) -> NodeId {
        self.params.push((index, shape.to_vec()));
        self.push(Op::Param { index }, shape.to_vec())
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.shape_of(x)?.to_vec();
        let ws = self.shape_of(w)?.to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape(format!("affine: x {xs:?} against w {ws:?}")));
        }
        if let Some(b) = b {
            let bs = self.shape_of(b)?;
            if bs != [ws[0]] {
                return Err(Error::shape(format!("affine: bias {bs:?} against w {ws:?}")));
            }
        }
        Ok(self.push(Op::Affine { x, w, b }, vec![xs[0], ws[0]]))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape_of(x)?.to_vec();
        Ok(self.push(Op::Relu(x), s))
    }

    pub fn embedding(&mut self, table: NodeId, index: NodeId) -> Result<NodeId> {
        let ts = self.shape_of(table)?.to_vec();
        let is = self.shape_of(index)?.to_vec();
        if ts.len() != 2 || is.len() != 1 {
            return Err(Error::shape(format!("embedding: table {ts:?}, index {is:?}")));
        }
        Ok(self.push(Op::Embedding { table, index }, vec![is[0], ts[1]]))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape_of(x)?.to_vec();
        Ok(self.push(Op::Softmax(x), s))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape_of(a)?.to_vec();
        let sb = self.shape_of(b)?;
        if sa != sb {
            return Err(Error::shape(format!("add: {sa:?} against {sb:?}")));
        }
        Ok(self.push(Op::Add(a, b), sa))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        let s = self.shape_of(x)?.to_vec();
        Ok(self.push(Op::Scale(x, factor), s))
    }

    pub fn reduce_sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.shape_of(x)?;
        Ok(self.push(Op::ReduceSum(x), vec![1]))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape_of(x)?.to_vec();
        Ok(self.push(Op::Square(x), s))
    }

    pub fn finish(self, outputs: &[NodeId]) -> Graph {
        let mut on_param_path = vec![false; self.nodes.len()];
        for (i, op) in self.nodes.iter().enumerate() {
            on_param_path[i] = match op {
                Op::Param { .. } => true,
                // The index operand carries no gradient.
                Op::Embedding { table, .. } => on_param_path[table.0],
                _ => {
                    let (ops, n) = op.operands();
                    ops[..n].iter().flatten().any(|o| on_param_path[o.0])
                }
            };
        }
        Graph {
            nodes: self.nodes,
            shapes: self.shapes,
            inputs: self.inputs,
            params: self.params,
            outputs: outputs.to_vec(),
            on_param_path,
        }
    }
}
