//! Sampling with the S-agent, reconstruction with the GC-agent, and
//! enumeration of the finite support of the model.

use alloc::vec;
use alloc::vec::Vec;

use crate::agents::{embed_index, penalized_argmin, ProposalNet, QNet, SelectionNet};
use crate::env::EnvConfig;
use crate::grad::Tensor;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// A generated point and the selection code that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub value: Vec<f64>,
    pub selections: Vec<usize>,
}

fn check_nets(proposal: &ProposalNet, env: &EnvConfig) -> Result<()> {
    if proposal.horizon != env.horizon || proposal.selections != env.selections || proposal.dim != env.dim {
        return Err(Error::config("network does not match the environment"));
    }
    Ok(())
}

/// Roll out `n` S-agent trajectories together. At each step the selection of
/// every row is drawn in row order.
pub fn sample_many(
    proposal: &ProposalNet,
    selection: &SelectionNet,
    env: &EnvConfig,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Sample>> {
    check_nets(proposal, env)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut xs = Tensor::from_rows(&vec![env.x1.as_slice(); n])?;
    let mut codes = vec![Vec::with_capacity(env.horizon); n];
    for h in 0..env.horizon {
        let rows: Vec<&[f64]> = (0..n).map(|i| xs.row(i)).collect();
        let probs = selection.probs_batch(&rows, &vec![h; n])?;
        let mut table_rows = Vec::with_capacity(n);
        for (i, code) in codes.iter_mut().enumerate() {
            let a = rng::categorical(rng, probs.row(i));
            code.push(a);
            table_rows.push(embed_index(h, a, env.selections, env.horizon)?);
        }
        advance(proposal, env, h, &mut xs, &table_rows)?;
    }
    Ok(codes
        .into_iter()
        .enumerate()
        .map(|(i, selections)| Sample {
            value: xs.row(i).to_vec(),
            selections,
        })
        .collect())
}

fn advance(proposal: &ProposalNet, env: &EnvConfig, h: usize, xs: &mut Tensor, rows: &[usize]) -> Result<()> {
    let ys = proposal.propose_rows(xs, rows)?;
    let a = env.alphas[h];
    for (x, y) in xs.data_mut().iter_mut().zip(ys.data()) {
        *x += a * y;
    }
    Ok(())
}

/// One S-agent sample: selections drawn from `sigma_phi`, actions from the
/// proposal network, returning the terminal mean `x_{H+1}`. Neither a goal
/// nor the Q-network is involved.
pub fn sample(proposal: &ProposalNet, selection: &SelectionNet, env: &EnvConfig, rng: &mut Rng) -> Result<Sample> {
    Ok(sample_many(proposal, selection, env, 1, rng)?.pop().unwrap())
}

/// Greedy GC-agent rollouts (no exploration penalty) toward each goal.
pub fn reconstruct_many(proposal: &ProposalNet, q: &QNet, env: &EnvConfig, goals: &[&[f64]]) -> Result<Vec<Sample>> {
    check_nets(proposal, env)?;
    let n = goals.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut xs = Tensor::from_rows(&vec![env.x1.as_slice(); n])?;
    let mut codes = vec![Vec::with_capacity(env.horizon); n];
    for h in 0..env.horizon {
        let rows: Vec<&[f64]> = (0..n).map(|i| xs.row(i)).collect();
        let qs = q.eval_batch(&rows, goals, &vec![h; n], false)?.q;
        let mut table_rows = Vec::with_capacity(n);
        for (i, code) in codes.iter_mut().enumerate() {
            let a = penalized_argmin(qs.row(i), &[], 0.0);
            code.push(a);
            table_rows.push(embed_index(h, a, env.selections, env.horizon)?);
        }
        advance(proposal, env, h, &mut xs, &table_rows)?;
    }
    Ok(codes
        .into_iter()
        .enumerate()
        .map(|(i, selections)| Sample {
            value: xs.row(i).to_vec(),
            selections,
        })
        .collect())
}

pub fn reconstruct(proposal: &ProposalNet, q: &QNet, env: &EnvConfig, goal: &[f64]) -> Result<Sample> {
    Ok(reconstruct_many(proposal, q, env, &[goal])?.pop().unwrap())
}

/// `A^H`, saturating at `u128::MAX`.
pub fn code_count(env: &EnvConfig) -> u128 {
    (env.selections as u128)
        .checked_pow(env.horizon as u32)
        .unwrap_or(u128::MAX)
}

/// Every selection code in lexicographic order.
pub fn all_codes(env: &EnvConfig) -> Vec<Vec<usize>> {
    let mut codes = vec![Vec::new()];
    for _ in 0..env.horizon {
        codes = codes
            .into_iter()
            .flat_map(|c| {
                (0..env.selections).map(move |a| {
                    let mut c = c.clone();
                    c.push(a);
                    c
                })
            })
            .collect();
    }
    codes
}

/// Distinct terminal values over all `A^H` selection codes, sorted by bit
/// pattern. Refuses when `A^H > limit`.
pub fn enumerate_support(proposal: &ProposalNet, env: &EnvConfig, limit: u128) -> Result<Vec<Vec<f64>>> {
    check_nets(proposal, env)?;
    let codes = code_count(env);
    if codes > limit {
        return Err(Error::SupportTooLarge { codes, limit });
    }
    // Expand the prefix tree one step at a time.
    let mut xs = Tensor::from_rows(&[env.x1.as_slice()])?;
    for h in 0..env.horizon {
        let prefixes = xs.rows();
        let mut expanded = Vec::with_capacity(prefixes * env.selections * env.dim);
        let mut rows = Vec::with_capacity(prefixes * env.selections);
        for p in 0..prefixes {
            for a in 0..env.selections {
                expanded.extend_from_slice(xs.row(p));
                rows.push(embed_index(h, a, env.selections, env.horizon)?);
            }
        }
        xs = Tensor::matrix(rows.len(), env.dim, expanded)?;
        advance(proposal, env, h, &mut xs, &rows)?;
    }
    let mut values: Vec<Vec<f64>> = (0..xs.rows())
        .map(|i| xs.row(i).iter().map(|v| v + 0.0).collect())
        .collect();
    let key = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    values.sort_by_key(key);
    values.dedup_by(|a, b| key(a) == key(b));
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{gc_select, Agents, NetConfig};
    use crate::env::transition;

    fn randomized(h: usize, a: usize, d: usize, seed: u64) -> (EnvConfig, Agents) {
        let env = EnvConfig::new(h, a, d).unwrap();
        let net = NetConfig {
            hidden: vec![6],
            embed_dim: 3,
        };
        let mut r = rng::seeded(seed, 0);
        let mut agents = Agents::new(&env, &net, &mut r).unwrap();
        for t in agents.proposal.params.tensors_mut() {
            for v in t.data_mut() {
                *v = rng::uniform_in(&mut r, -1.0, 1.0);
            }
        }
        (env, agents)
    }

    #[test]
    fn samples_follow_their_codes() {
        let (env, agents) = randomized(3, 4, 2, 1);
        let mut r = rng::seeded(7, rng::STREAM_SAMPLE);
        let samples = sample_many(&agents.proposal, &agents.selection, &env, 10, &mut r).unwrap();
        for s in &samples {
            assert_eq!(s.selections.len(), 3);
            let unrolled = agents.proposal.unroll(&env, &[s.selections.as_slice()]).unwrap();
            assert_eq!(unrolled[0], s.value);
        }
        let mut r2 = rng::seeded(7, rng::STREAM_SAMPLE);
        let again = sample_many(&agents.proposal, &agents.selection, &env, 10, &mut r2).unwrap();
        assert_eq!(samples, again);
    }

    #[test]
    fn reconstruction_is_the_greedy_rollout() {
        let (env, agents) = randomized(3, 3, 2, 2);
        let goal = [0.7, -0.2];
        let rec = reconstruct(&agents.proposal, &agents.q, &env, &goal).unwrap();
        let mut x = env.x1.clone();
        for step in 1..=3 {
            let a = gc_select(&agents.q, &agents.selection, &x, &goal, step, 0.0).unwrap();
            assert_eq!(a, rec.selections[step - 1]);
            let y = agents.proposal.propose(&x, step, a).unwrap();
            x = transition(&x, &y, step, &env).unwrap();
        }
        assert_eq!(x, rec.value);
    }

    #[test]
    fn support_matches_brute_force() {
        let (env, agents) = randomized(2, 3, 2, 3);
        let support = enumerate_support(&agents.proposal, &env, 1 << 20).unwrap();
        assert!(support.len() <= 9);
        let codes = all_codes(&env);
        assert_eq!(codes.len(), 9);
        let refs: Vec<&[usize]> = codes.iter().map(|c| c.as_slice()).collect();
        let mut brute = agents.proposal.unroll(&env, &refs).unwrap();
        let key = |v: &Vec<f64>| v.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<u64>>();
        brute.sort_by_key(key);
        brute.dedup_by(|a, b| key(a) == key(b));
        assert_eq!(support, brute);
    }

    #[test]
    fn fresh_proposals_collapse_the_support() {
        let env = EnvConfig::new(2, 3, 2).unwrap();
        let mut r = rng::seeded(0, 0);
        let agents = Agents::new(&env, &NetConfig { hidden: vec![4], embed_dim: 2 }, &mut r).unwrap();
        assert_eq!(enumerate_support(&agents.proposal, &env, 100).unwrap(), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn oversized_support_is_refused() {
        let (env, agents) = randomized(4, 3, 1, 4);
        assert_eq!(code_count(&env), 81);
        assert!(matches!(
            enumerate_support(&agents.proposal, &env, 80),
            Err(Error::SupportTooLarge { codes: 81, limit: 80 })
        ));
        let huge = EnvConfig::new(200, 16, 1).unwrap();
        assert_eq!(code_count(&huge), u128::MAX);
    }
}
