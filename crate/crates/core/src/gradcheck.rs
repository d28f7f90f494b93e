//! Finite-difference verification of every differentiable path: each graph
//! primitive, small random MLPs, and the three agent losses including the
//! full `H`-step unfolded proposal loss.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::agents::{NetConfig, ProposalNet, QNet, SelectionNet};
use crate::env::EnvConfig;
use crate::grad::{finite_diff, forward, max_relative_error, Graph, GraphBuilder, NodeId, ParamSet, Tensor};
use crate::nn::Mlp;
use crate::replay::TransitionRecord;
use crate::rng::{self, Rng};
use crate::training::q_regression;
use crate::Result;

pub const GRADCHECK_EPSILON: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;
pub const GRADCHECK_CASES: usize = 20;
pub const MAX_CASE_PARAMS: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCase {
    pub name: String,
    pub params: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub cases: Vec<GradCase>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.cases.iter().map(|c| c.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.cases
            .iter()
            .all(|c| c.max_relative_error < self.tolerance && c.params <= MAX_CASE_PARAMS)
    }
}

fn randomize(params: &mut ParamSet, rng: &mut Rng, scale: f64) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = rng::uniform_in(rng, -scale, scale);
        }
    }
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng::uniform_in(rng, -1.0, 1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn size(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng::index(rng, hi - lo + 1)
}

/// Compare backward against central differences for a graph whose single
/// output is a scalar loss.
fn check_graph(name: String, graph: &Graph, params: &ParamSet, inputs: &[Tensor]) -> Result<GradCase> {
    let (_, tape) = forward(graph, params, inputs)?;
    let analytic = tape.backward(params, &[Tensor::vector(vec![1.0])])?;
    let numeric = finite_diff(
        |p| Ok(forward(graph, p, inputs)?.0[0].data()[0]),
        params,
        GRADCHECK_EPSILON,
    )?;
    Ok(GradCase {
        name,
        params: params.count(),
        max_relative_error: max_relative_error(&analytic, &numeric),
    })
}

/// `0.5 * sum(out^2)` appended to `out`.
fn half_square_sum(g: &mut GraphBuilder, out: NodeId) -> Result<NodeId> {
    let sq = g.square(out)?;
    let total = g.reduce_sum(sq)?;
    g.scale(total, 0.5)
}

/// A random MLP over one or two input parts; exercises affine, relu, add,
/// square, reduce_sum and scale.
fn mlp_case(rng: &mut Rng, k: usize) -> Result<GradCase> {
    let n = size(rng, 1, 4);
    let parts: Vec<usize> = (0..size(rng, 1, 2)).map(|_| size(rng, 1, 5)).collect();
    let hidden: Vec<usize> = (0..size(rng, 0, 2)).map(|_| size(rng, 2, 12)).collect();
    let mlp = Mlp::new(parts.clone(), hidden, size(rng, 1, 4))?;
    let params = ParamSet::new(mlp.init(rng, false));
    let mut g = GraphBuilder::new();
    let nodes: Vec<NodeId> = parts.iter().map(|&p| g.input(&[n, p])).collect();
    let out = mlp.build(&mut g, &nodes, 0)?;
    let loss = half_square_sum(&mut g, out)?;
    let graph = g.finish(&[loss]);
    let inputs: Vec<Tensor> = parts.iter().map(|&p| random_matrix(rng, n, p)).collect();
    check_graph(format!("mlp #{k}"), &graph, &params, &inputs)
}

/// Affine without bias feeding a softmax, regressed onto a target
/// distribution.
fn softmax_case(rng: &mut Rng, k: usize) -> Result<GradCase> {
    let (n, d, c) = (size(rng, 1, 4), size(rng, 2, 6), size(rng, 2, 6));
    let params = ParamSet::new(vec![random_matrix(rng, c, d)]);
    let mut g = GraphBuilder::new();
    let x = g.input(&[n, d]);
    let target = g.input(&[n, c]);
    let w = g.param(0, &[c, d]);
    let z = g.affine(x, w, None)?;
    let p = g.softmax(z)?;
    let neg = g.scale(target, -1.0)?;
    let diff = g.add(p, neg)?;
    let loss = half_square_sum(&mut g, diff)?;
    let graph = g.finish(&[loss]);
    let mut t = random_matrix(rng, n, c);
    for v in t.data_mut() {
        *v = v.abs();
    }
    let inputs = vec![random_matrix(rng, n, d), t];
    check_graph(format!("softmax #{k}"), &graph, &params, &inputs)
}

/// Embedding lookups with repeated rows, added to an input and passed
/// through a relu layer.
fn embedding_case(rng: &mut Rng, k: usize) -> Result<GradCase> {
    let (n, rows, e) = (size(rng, 2, 6), size(rng, 2, 8), size(rng, 2, 6));
    let params = ParamSet::new(vec![
        random_matrix(rng, rows, e),
        random_matrix(rng, 3, e),
        Tensor::vector((0..3).map(|_| rng::uniform_in(rng, -0.5, 0.5)).collect()),
    ]);
    let mut g = GraphBuilder::new();
    let x = g.input(&[n, e]);
    let idx = g.input(&[n]);
    let table = g.param(0, &[rows, e]);
    let w = g.param(1, &[3, e]);
    let b = g.param(2, &[3]);
    let emb = g.embedding(table, idx)?;
    let sum = g.add(x, emb)?;
    let h = g.affine(sum, w, Some(b))?;
    let r = g.relu(h)?;
    let loss = half_square_sum(&mut g, r)?;
    let graph = g.finish(&[loss]);
    let index = Tensor::vector((0..n).map(|i| (if i == 0 { 0 } else { rng::index(rng, rows) }) as f64).collect());
    let inputs = vec![random_matrix(rng, n, e), index];
    check_graph(format!("embedding #{k}"), &graph, &params, &inputs)
}

fn small_env(rng: &mut Rng) -> Result<EnvConfig> {
    EnvConfig::new(size(rng, 2, 4), size(rng, 2, 3), size(rng, 1, 3))
}

fn small_net(rng: &mut Rng) -> NetConfig {
    NetConfig {
        hidden: vec![size(rng, 3, 8); size(rng, 1, 2)],
        embed_dim: size(rng, 2, 4),
    }
}

fn random_point(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng::uniform_in(rng, -2.0, 2.0)).collect()
}

fn compare_net(
    name: String,
    params: &ParamSet,
    analytic: &[Tensor],
    mut loss: impl FnMut(&ParamSet) -> Result<f64>,
) -> Result<GradCase> {
    let numeric = finite_diff(&mut loss, params, GRADCHECK_EPSILON)?;
    Ok(GradCase {
        name,
        params: params.count(),
        max_relative_error: max_relative_error(analytic, &numeric),
    })
}

/// The proposal regression through all `H` transitions.
fn unfolded_case(rng: &mut Rng, k: usize) -> Result<GradCase> {
    let env = small_env(rng)?;
    let mut net = ProposalNet::new(&env, &small_net(rng), rng)?;
    randomize(&mut net.params, rng, 0.5);
    let batch: Vec<(Vec<usize>, Vec<f64>)> = (0..size(rng, 1, 4))
        .map(|_| {
            let code = (0..env.horizon).map(|_| rng::index(rng, env.selections)).collect();
            (code, random_point(rng, env.dim))
        })
        .collect();
    let pairs: Vec<(&[usize], &[f64])> = batch.iter().map(|(c, g)| (c.as_slice(), g.as_slice())).collect();
    let (_, analytic) = net.unfolded_loss(&env, &pairs)?;
    let mut probe = net.clone();
    compare_net(format!("unfolded proposal H={} #{k}", env.horizon), &net.params, &analytic, |p| {
        probe.params = p.clone();
        Ok(probe.unfolded_loss(&env, &pairs)?.0)
    })
}

fn selection_case(rng: &mut Rng, k: usize) -> Result<GradCase> {
    let env = small_env(rng)?;
    let net = SelectionNet::new(&env, &small_net(rng), rng)?;
    let batch: Vec<(Vec<f64>, usize, usize)> = (0..size(rng, 1, 5))
        .map(|_| {
            (
                random_point(rng, env.dim),
                size(rng, 1, env.horizon),
                rng::index(rng, env.selections),
            )
        })
        .collect();
    let triples: Vec<(&[f64], usize, usize)> = batch.iter().map(|(x, h, a)| (x.as_slice(), *h, *a)).collect();
    let (_, analytic) = net.cross_entropy(&triples)?;
    let mut probe = net.clone();
    compare_net(format!("selection cross-entropy #{k}"), &net.params, &analytic, |p| {
        probe.params = p.clone();
        Ok(probe.cross_entropy(&triples)?.0)
    })
}

/// Q regression through the dueling head; targets come from the lagged
/// copy, which finite differences leave untouched.
fn q_case(rng: &mut Rng, k: usize) -> Result<GradCase> {
    let env = small_env(rng)?;
    let mut net = QNet::new(&env, &small_net(rng), rng)?;
    randomize(&mut net.target, rng, 0.5);
    let records: Vec<TransitionRecord> = (0..size(rng, 2, 5))
        .map(|_| TransitionRecord {
            x: random_point(rng, env.dim),
            step: size(rng, 1, env.horizon),
            selection: rng::index(rng, env.selections),
            x_next: random_point(rng, env.dim),
            loss: rng::uniform_in(rng, 0.0, 2.0),
            goal: random_point(rng, env.dim),
        })
        .collect();
    let batch: Vec<&TransitionRecord> = records.iter().collect();
    let (_, analytic) = q_regression(&net, &batch, &env, false)?;
    let mut probe = net.clone();
    compare_net(format!("Q regression #{k}"), &net.params, &analytic, |p| {
        probe.params = p.clone();
        Ok(q_regression(&probe, &batch, &env, false)?.0)
    })
}

/// Run the fixed suite of [`GRADCHECK_CASES`] cases.
pub fn run_gradcheck(seed: u64) -> Result<GradReport> {
    let mut rng = rng::seeded(seed, rng::STREAM_INIT);
    let makers: [fn(&mut Rng, usize) -> Result<GradCase>; 6] =
        [mlp_case, softmax_case, embedding_case, unfolded_case, selection_case, q_case];
    let plan = [0, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5, 0, 2, 3, 5, 0, 3, 3, 1];
    let cases = plan
        .iter()
        .enumerate()
        .map(|(k, &m)| makers[m](&mut rng, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradReport {
        cases,
        tolerance: GRADCHECK_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_several_seeds() {
        for seed in 0..3 {
            let report = run_gradcheck(seed).unwrap();
            assert_eq!(report.cases.len(), GRADCHECK_CASES);
            assert!(report.passed(), "seed {seed}: {report:#?}");
        }
    }
}
