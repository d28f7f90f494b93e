//! Multilayer perceptrons assembled from [`crate::grad`] primitives.
//!
//! An MLP may take several input parts; its first layer holds one weight
//! block per part and a single bias, which is the same map as one affine
//! layer over the concatenated parts. Parameter layout, starting at the
//! offset given to [`Mlp::build`]:
//!
//! ```text
//! W0_part0 [h0, p0], ..., W0_partK [h0, pK], b0 [h0],
//! W1 [h1, h0], b1 [h1], ..., W_last [out, h_last], b_last [out]
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::grad::{GraphBuilder, NodeId, Tensor};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub input_parts: Vec<usize>,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Mlp {
    pub fn new(input_parts: Vec<usize>, hidden: Vec<usize>, output: usize) -> Result<Self> {
        if input_parts.is_empty() || input_parts.contains(&0) || hidden.contains(&0) || output == 0 {
            return Err(Error::config("MLP widths must be positive"));
        }
        Ok(Mlp {
            input_parts,
            hidden,
            output,
        })
    }

    /// Widths of every layer output, ending with `output`.
    fn widths(&self) -> Vec<usize> {
        let mut w = self.hidden.clone();
        w.push(self.output);
        w
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let widths = self.widths();
        let mut shapes = Vec::new();
        for &p in &self.input_parts {
            shapes.push(vec![widths[0], p]);
        }
        shapes.push(vec![widths[0]]);
        for pair in widths.windows(2) {
            shapes.push(vec![pair[1], pair[0]]);
            shapes.push(vec![pair[1]]);
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Uniform fan-in initialisation `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
    /// weights and biases; the last layer is all zeros when `zero_last` is set.
    pub fn init(&self, rng: &mut Rng, zero_last: bool) -> Vec<Tensor> {
        let shapes = self.param_shapes();
        let first_fan_in: usize = self.input_parts.iter().sum();
        let last_layer_start = shapes.len() - 2;
        let mut out = Vec::with_capacity(shapes.len());
        let mut fan_in = first_fan_in;
        for (i, shape) in shapes.iter().enumerate() {
            if i >= last_layer_start && zero_last {
                out.push(Tensor::zeros(shape));
                continue;
            }
            // First-layer blocks and bias share the concatenated fan-in.
            if i > self.input_parts.len() && shape.len() == 2 {
                fan_in = shape[1];
            }
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng::uniform_in(rng, -bound, bound)).collect();
            out.push(Tensor::new(shape.clone(), data).expect("shape from param_shapes"));
        }
        out
    }

    /// Add the MLP to `g`, reading parameters starting at `offset`. `parts`
    /// must be `[n, p_i]` nodes matching `input_parts`. Returns the `[n, out]`
    /// pre-activation output.
    pub fn build(&self, g: &mut GraphBuilder, parts: &[NodeId], offset: usize) -> Result<NodeId> {
        if parts.len() != self.input_parts.len() {
            return Err(Error::config("MLP input part count mismatch"));
        }
        let shapes = self.param_shapes();
        let mut idx = offset;
        let mut acc: Option<NodeId> = None;
        let bias = g.param(offset + parts.len(), &shapes[parts.len()]);
        for (k, &part) in parts.iter().enumerate() {
            let w = g.param(idx, &shapes[k]);
            idx += 1;
            let b = if k == 0 { Some(bias) } else { None };
            let y = g.affine(part, w, b)?;
            acc = Some(match acc {
                None => y,
                Some(a) => g.add(a, y)?,
            });
        }
        idx += 1;
        let mut h = acc.expect("at least one part");
        let mut s = parts.len() + 1;
        for _ in 0..self.hidden.len() {
            h = g.relu(h)?;
            let w = g.param(idx, &shapes[s]);
            let b = g.param(idx + 1, &shapes[s + 1]);
            h = g.affine(h, w, Some(b))?;
            idx += 2;
            s += 2;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{forward, ParamSet};

    #[test]
    fn split_first_layer_equals_concatenated_affine() {
        let mlp = Mlp::new(vec![2, 1], vec![], 2).unwrap();
        // W = [[1, 2, 3], [4, 5, 6]] split as [[1,2],[4,5]] and [[3],[6]]; b = [0.5, -1]
        let params = ParamSet::new(vec![
            Tensor::matrix(2, 2, vec![1.0, 2.0, 4.0, 5.0]).unwrap(),
            Tensor::matrix(2, 1, vec![3.0, 6.0]).unwrap(),
            Tensor::vector(vec![0.5, -1.0]),
        ]);
        let mut g = GraphBuilder::new();
        let x = g.input(&[1, 2]);
        let e = g.input(&[1, 1]);
        let y = mlp.build(&mut g, &[x, e], 0).unwrap();
        let graph = g.finish(&[y]);
        let (out, _) = forward(
            &graph,
            &params,
            &[
                Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap(),
                Tensor::matrix(1, 1, vec![2.0]).unwrap(),
            ],
        )
        .unwrap();
        // [1*1 + 2*-1 + 3*2 + 0.5, 4*1 + 5*-1 + 6*2 - 1]
        assert_eq!(out[0].data(), &[5.5, 10.0]);
    }

    #[test]
    fn zero_last_layer_gives_zero_output() {
        let mlp = Mlp::new(vec![3], vec![4, 4], 2).unwrap();
        let mut rng = rng::seeded(0, 0);
        let params = ParamSet::new(mlp.init(&mut rng, true));
        assert_eq!(params.count(), mlp.param_count());
        let mut g = GraphBuilder::new();
        let x = g.input(&[1, 3]);
        let y = mlp.build(&mut g, &[x], 0).unwrap();
        let graph = g.finish(&[y]);
        let (out, _) = forward(&graph, &params, &[Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap()]).unwrap();
        assert_eq!(out[0].data(), &[0.0, 0.0]);
    }
}
