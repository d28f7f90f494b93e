//! Exact computations on small finite MDPs: reach probabilities, trajectory
//! KL divergences, the variational upper bound on `-log` reach probability,
//! and the posterior policy that attains it.
//!
//! A trajectory starts in `x1`, takes actions `y_1..y_H` and moves through
//! `trans[h]` between steps; after `y_H` a goal index is emitted from
//! `emit[x_H][y_H]`. Every quantity is available both by dynamic programming
//! and by brute-force enumeration of all `Y^H S^(H-1)` trajectories.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Add;

use crate::rng::{self, Rng};
use crate::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-12;

/// A nonnegative extended real: finite or `+inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInfinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == ExtReal::PosInfinity
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInfinity,
        }
    }
}

fn check_simplex(p: &[f64], len: usize, what: &str) -> Result<()> {
    if p.len() != len {
        return Err(Error::shape(format!("{what}: expected {len} entries, got {}", p.len())));
    }
    if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::config(format!("{what}: entries must be finite and nonnegative")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::config(format!("{what}: sums to {sum}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMdp {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    /// `[H-1][S][Y][S]`: `trans[h][s][y][s']` moves from step `h + 1` to `h + 2`.
    pub trans: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[S][Y][G]`: emission of each goal after the last action.
    pub emit: Vec<Vec<Vec<f64>>>,
    pub x1: usize,
}

/// One trajectory: `H` states and `H` actions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl DiscreteMdp {
    pub fn goals(&self) -> usize {
        self.emit[0][0].len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 || self.horizon == 0 {
            return Err(Error::config("S, Y and H must be positive"));
        }
        if self.x1 >= self.states {
            return Err(Error::Index {
                what: "initial state",
                index: self.x1,
                bound: self.states,
            });
        }
        if self.trans.len() != self.horizon - 1 {
            return Err(Error::shape("trans must have H - 1 steps"));
        }
        for step in &self.trans {
            if step.len() != self.states {
                return Err(Error::shape("trans step must have S rows"));
            }
            for row in step {
                if row.len() != self.actions {
                    return Err(Error::shape("trans row must have Y entries"));
                }
                for p in row {
                    check_simplex(p, self.states, "transition")?;
                }
            }
        }
        if self.emit.len() != self.states || self.emit.iter().any(|r| r.len() != self.actions) {
            return Err(Error::shape("emit must be [S][Y][G]"));
        }
        let g = self.emit[0][0].len();
        if g == 0 {
            return Err(Error::config("need at least one goal"));
        }
        for p in self.emit.iter().flatten() {
            check_simplex(p, g, "emission")?;
        }
        Ok(())
    }

    fn check_goal(&self, goal: usize) -> Result<()> {
        if goal >= self.goals() {
            return Err(Error::Index {
                what: "goal",
                index: goal,
                bound: self.goals(),
            });
        }
        Ok(())
    }

    /// Every trajectory from `x1`, including those of probability zero.
    pub fn paths(&self) -> Vec<Path> {
        let mut paths = vec![Path {
            states: vec![self.x1],
            actions: Vec::new(),
        }];
        for h in 0..self.horizon {
            let mut next = Vec::with_capacity(paths.len() * self.actions * self.states);
            for p in &paths {
                for y in 0..self.actions {
                    if h + 1 == self.horizon {
                        let mut q = p.clone();
                        q.actions.push(y);
                        next.push(q);
                    } else {
                        for s in 0..self.states {
                            let mut q = p.clone();
                            q.actions.push(y);
                            q.states.push(s);
                            next.push(q);
                        }
                    }
                }
            }
            paths = next;
        }
        paths
    }

    /// Probability of `path` under `policy`, excluding the emission.
    pub fn path_prob(&self, policy: &TabularPolicy, path: &Path) -> f64 {
        let mut p = 1.0;
        for h in 0..self.horizon {
            let (s, y) = (path.states[h], path.actions[h]);
            p *= policy.probs[h][s][y];
            if h + 1 < self.horizon {
                p *= self.trans[h][s][y][path.states[h + 1]];
            }
        }
        p
    }

    fn last(&self, path: &Path) -> (usize, usize) {
        (path.states[self.horizon - 1], path.actions[self.horizon - 1])
    }

    /// State distribution at each step `1..=H` under `policy`.
    pub fn state_marginals(&self, policy: &TabularPolicy) -> Vec<Vec<f64>> {
        let mut d = vec![0.0; self.states];
        d[self.x1] = 1.0;
        let mut out = Vec::with_capacity(self.horizon);
        for h in 0..self.horizon {
            if h + 1 < self.horizon {
                let mut next = vec![0.0; self.states];
                for s in 0..self.states {
                    for y in 0..self.actions {
                        let w = d[s] * policy.probs[h][s][y];
                        for (n, t) in next.iter_mut().zip(&self.trans[h][s][y]) {
                            *n += w * t;
                        }
                    }
                }
                out.push(d);
                d = next;
            } else {
                out.push(core::mem::take(&mut d));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    /// `[H][S][Y]`.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl TabularPolicy {
    pub fn uniform(mdp: &DiscreteMdp) -> Self {
        let row = vec![1.0 / mdp.actions as f64; mdp.actions];
        TabularPolicy {
            probs: vec![vec![row; mdp.states]; mdp.horizon],
        }
    }

    pub fn validate(&self, mdp: &DiscreteMdp) -> Result<()> {
        if self.probs.len() != mdp.horizon || self.probs.iter().any(|s| s.len() != mdp.states) {
            return Err(Error::shape("policy must be [H][S][Y]"));
        }
        for p in self.probs.iter().flatten() {
            check_simplex(p, mdp.actions, "policy")?;
        }
        Ok(())
    }
}

fn validate_all(mdp: &DiscreteMdp, policies: &[&TabularPolicy]) -> Result<()> {
    mdp.validate()?;
    policies.iter().try_for_each(|p| p.validate(mdp))
}

/// `P_pi(goal emitted)`, by forward dynamic programming.
pub fn reach_prob(mdp: &DiscreteMdp, policy: &TabularPolicy, goal: usize) -> Result<f64> {
    validate_all(mdp, &[policy])?;
    mdp.check_goal(goal)?;
    let d = mdp.state_marginals(policy);
    let last = &d[mdp.horizon - 1];
    let mut total = 0.0;
    for s in 0..mdp.states {
        for y in 0..mdp.actions {
            total += last[s] * policy.probs[mdp.horizon - 1][s][y] * mdp.emit[s][y][goal];
        }
    }
    Ok(total)
}

/// `P_pi(goal emitted)`, by summing over every trajectory.
pub fn reach_prob_enumerated(mdp: &DiscreteMdp, policy: &TabularPolicy, goal: usize) -> Result<f64> {
    validate_all(mdp, &[policy])?;
    mdp.check_goal(goal)?;
    Ok(mdp
        .paths()
        .iter()
        .map(|path| {
            let (s, y) = mdp.last(path);
            mdp.path_prob(policy, path) * mdp.emit[s][y][goal]
        })
        .sum())
}

fn step_kl(p: &[f64], q: &[f64]) -> ExtReal {
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi == 0.0 {
                return ExtReal::PosInfinity;
            }
            kl += pi * libm::log(pi / qi);
        }
    }
    ExtReal::Finite(kl)
}

/// KL between trajectory laws via the chain rule:
/// `E_p[sum_h KL(p_h(.|x_h), q_h(.|x_h))]`.
pub fn traj_kl_chain(mdp: &DiscreteMdp, p: &TabularPolicy, q: &TabularPolicy) -> Result<ExtReal> {
    validate_all(mdp, &[p, q])?;
    let d = mdp.state_marginals(p);
    let mut total = ExtReal::Finite(0.0);
    for h in 0..mdp.horizon {
        for s in 0..mdp.states {
            if d[h][s] > 0.0 {
                total = total
                    + match step_kl(&p.probs[h][s], &q.probs[h][s]) {
                        ExtReal::Finite(k) => ExtReal::Finite(d[h][s] * k),
                        inf => inf,
                    };
            }
        }
    }
    Ok(total)
}

/// KL between trajectory laws as `sum_tau p(tau) log(p(tau) / q(tau))`.
pub fn traj_kl_enumerated(mdp: &DiscreteMdp, p: &TabularPolicy, q: &TabularPolicy) -> Result<ExtReal> {
    validate_all(mdp, &[p, q])?;
    let mut total = 0.0;
    for path in mdp.paths() {
        let pp = mdp.path_prob(p, &path);
        if pp > 0.0 {
            let qp = mdp.path_prob(q, &path);
            if qp == 0.0 {
                return Ok(ExtReal::PosInfinity);
            }
            total += pp * libm::log(pp / qp);
        }
    }
    Ok(ExtReal::Finite(total))
}

/// Chain-rule trajectory KL, cross-checked against enumeration. A
/// disagreement beyond `1e-9` is reported as a self-check error.
pub fn traj_kl(mdp: &DiscreteMdp, p: &TabularPolicy, q: &TabularPolicy) -> Result<ExtReal> {
    let chain = traj_kl_chain(mdp, p, q)?;
    let direct = traj_kl_enumerated(mdp, p, q)?;
    let agree = match (chain, direct) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs() <= 1e-9,
        (a, b) => a == b,
    };
    if !agree {
        return Err(Error::SelfCheck(format!("chain rule {chain:?} vs enumeration {direct:?}")));
    }
    Ok(chain)
}

/// `E_pi[loss(x_H, y_H)]` for a loss table `[S][Y]` charged at the last step.
pub fn gc_value(mdp: &DiscreteMdp, loss: &[Vec<f64>], policy: &TabularPolicy) -> Result<f64> {
    validate_all(mdp, &[policy])?;
    if loss.len() != mdp.states || loss.iter().any(|r| r.len() != mdp.actions) {
        return Err(Error::shape("loss table must be [S][Y]"));
    }
    let d = mdp.state_marginals(policy);
    let h = mdp.horizon - 1;
    let mut total = 0.0;
    for s in 0..mdp.states {
        for y in 0..mdp.actions {
            let w = d[h][s] * policy.probs[h][s][y];
            if w > 0.0 {
                total += w * loss[s][y];
            }
        }
    }
    Ok(total)
}

/// `E_pi'[-log emit(goal | x_H, y_H)]` by enumeration.
pub fn expected_emission_loss(mdp: &DiscreteMdp, policy: &TabularPolicy, goal: usize) -> Result<ExtReal> {
    validate_all(mdp, &[policy])?;
    mdp.check_goal(goal)?;
    let mut total = 0.0;
    for path in mdp.paths() {
        let w = mdp.path_prob(policy, &path);
        if w > 0.0 {
            let (s, y) = mdp.last(&path);
            let e = mdp.emit[s][y][goal];
            if e == 0.0 {
                return Ok(ExtReal::PosInfinity);
            }
            total -= w * libm::log(e);
        }
    }
    Ok(ExtReal::Finite(total))
}

/// Right-hand side of the variational bound on `-log P_pi(goal)`:
/// `E_pi'[-log emit] + KL(p^pi', p^pi)`, both by enumeration.
pub fn surrogate_rhs(mdp: &DiscreteMdp, pi: &TabularPolicy, pi_prime: &TabularPolicy, goal: usize) -> Result<ExtReal> {
    Ok(expected_emission_loss(mdp, pi_prime, goal)? + traj_kl_enumerated(mdp, pi_prime, pi)?)
}

/// `pi` conditioned on emitting `goal`: `pi'_h(y|s) ∝ pi_h(y|s) W_h(s, y)`
/// with `W_h` the probability of eventually emitting the goal after taking
/// `y` in `s` at step `h`. States the conditioned process never visits keep
/// `pi`.
pub fn posterior_policy(mdp: &DiscreteMdp, pi: &TabularPolicy, goal: usize) -> Result<TabularPolicy> {
    validate_all(mdp, &[pi])?;
    mdp.check_goal(goal)?;
    let (n_s, n_y) = (mdp.states, mdp.actions);
    let mut probs = pi.probs.clone();
    let mut w: Vec<Vec<f64>> = (0..n_s).map(|s| (0..n_y).map(|y| mdp.emit[s][y][goal]).collect()).collect();
    let mut v = Vec::new();
    for h in (0..mdp.horizon).rev() {
        if h + 1 < mdp.horizon {
            w = (0..n_s)
                .map(|s| {
                    (0..n_y)
                        .map(|y| mdp.trans[h][s][y].iter().zip(&v).map(|(t, vv)| t * vv).sum())
                        .collect()
                })
                .collect();
        }
        v = vec![0.0; n_s];
        for s in 0..n_s {
            v[s] = (0..n_y).map(|y| pi.probs[h][s][y] * w[s][y]).sum();
            if v[s] > 0.0 {
                for y in 0..n_y {
                    probs[h][s][y] = pi.probs[h][s][y] * w[s][y] / v[s];
                }
            }
        }
    }
    if v[mdp.x1] == 0.0 {
        return Err(Error::UndefinedPosterior);
    }
    Ok(TabularPolicy { probs })
}

/// The tabular policy closest on average to a family of goal-conditioned
/// policies: `pi_h(y|s) ∝ sum_g w_g d^g_h(s) pi^g_h(y|s)`, the minimizer of
/// `sum_g w_g KL(p^{pi^g}, p^pi)`. Unvisited states get the uniform policy.
pub fn mixture_policy(mdp: &DiscreteMdp, goal_policies: &[TabularPolicy], weights: &[f64]) -> Result<TabularPolicy> {
    if goal_policies.len() != weights.len() || weights.is_empty() {
        return Err(Error::shape("one weight per goal policy"));
    }
    let refs: Vec<&TabularPolicy> = goal_policies.iter().collect();
    validate_all(mdp, &refs)?;
    let mut out = TabularPolicy::uniform(mdp);
    let marginals: Vec<Vec<Vec<f64>>> = goal_policies.iter().map(|p| mdp.state_marginals(p)).collect();
    for h in 0..mdp.horizon {
        for s in 0..mdp.states {
            let mut row = vec![0.0; mdp.actions];
            for ((p, d), &wg) in goal_policies.iter().zip(&marginals).zip(weights) {
                for (r, &py) in row.iter_mut().zip(&p.probs[h][s]) {
                    *r += wg * d[h][s] * py;
                }
            }
            let z: f64 = row.iter().sum();
            if z > 0.0 {
                out.probs[h][s] = row.into_iter().map(|r| r / z).collect();
            }
        }
    }
    Ok(out)
}

/// `sum_g w_g [E_{pi^g}[-log emit(g)] + KL(p^{pi^g}, p^pi)]`, the surrogate
/// objective of `pi` given goal-conditioned policies, by enumeration.
pub fn surrogate_objective(
    mdp: &DiscreteMdp,
    pi: &TabularPolicy,
    goal_policies: &[TabularPolicy],
    weights: &[f64],
) -> Result<ExtReal> {
    if goal_policies.len() != weights.len() || goal_policies.len() > mdp.goals() {
        return Err(Error::shape("one weight per goal policy, at most G"));
    }
    let mut total = ExtReal::Finite(0.0);
    for (g, (p, &w)) in goal_policies.iter().zip(weights).enumerate() {
        if w > 0.0 {
            total = total
                + match surrogate_rhs(mdp, pi, p, g)? {
                    ExtReal::Finite(v) => ExtReal::Finite(w * v),
                    inf => inf,
                };
        }
    }
    Ok(total)
}

fn random_simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    // Exponential spacings give a uniform point on the simplex.
    let raw: Vec<f64> = (0..n).map(|_| -libm::log(1.0 - rng::uniform(rng))).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / z).collect()
}

/// Transition structure of [`random_mdp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transitions {
    /// Each `(h, s, y)` moves to one uniformly drawn state.
    Deterministic,
    /// Each `(h, s, y)` row drawn uniformly from the simplex.
    Stochastic,
}

/// A random MDP; emission rows are drawn uniformly from the simplex.
pub fn random_mdp(
    rng: &mut Rng,
    states: usize,
    actions: usize,
    horizon: usize,
    goals: usize,
    transitions: Transitions,
) -> DiscreteMdp {
    let row = |rng: &mut Rng| match transitions {
        Transitions::Stochastic => random_simplex(rng, states),
        Transitions::Deterministic => {
            let mut v = vec![0.0; states];
            v[rng::index(rng, states)] = 1.0;
            v
        }
    };
    let trans = (0..horizon.saturating_sub(1))
        .map(|_| {
            (0..states)
                .map(|_| (0..actions).map(|_| row(rng)).collect())
                .collect()
        })
        .collect();
    let emit = (0..states)
        .map(|_| (0..actions).map(|_| random_simplex(rng, goals)).collect())
        .collect();
    DiscreteMdp {
        states,
        actions,
        horizon,
        trans,
        emit,
        x1: rng::index(rng, states),
    }
}

pub fn random_policy(rng: &mut Rng, mdp: &DiscreteMdp) -> TabularPolicy {
    TabularPolicy {
        probs: (0..mdp.horizon)
            .map(|_| (0..mdp.states).map(|_| random_simplex(rng, mdp.actions)).collect())
            .collect(),
    }
}

/// Outcome of [`check_bound_suite`]. Gaps are `surrogate_rhs + log reach`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub instances: usize,
    /// Instances whose random-`pi'` gap fell below `-tolerance`.
    pub bound_violations: usize,
    /// Instances whose posterior gap exceeded `tolerance` in magnitude.
    pub attainment_violations: usize,
    /// Instances where chain-rule and enumerated KL disagree.
    pub chain_rule_violations: usize,
    /// Most negative random-`pi'` gap (0 if none was negative).
    pub worst_bound_gap: f64,
    pub worst_attainment_gap: f64,
    pub worst_chain_rule_gap: f64,
    /// Instances failing at least one check.
    pub failed_instances: usize,
    pub tolerance: f64,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.bound_violations + self.attainment_violations + self.chain_rule_violations == 0
    }

    pub fn ok_count(&self) -> usize {
        self.instances - self.failed_instances
    }
}

/// Check the variational bound, its attainment by the posterior policy and
/// the KL chain rule on `instances` random instances with `S = 3, Y = 2,
/// H = 3, G = 2`.
///
/// Each instance draws one MDP with deterministic transitions, where the
/// posterior policy reproduces the conditioned trajectory law and must close
/// the bound, and one with stochastic transitions, where conditioning also
/// reweights the transitions and only the inequality is checked.
pub fn check_bound_suite(instances: usize, seed: u64) -> Result<BoundReport> {
    let tolerance = 1e-9;
    let mut rng = rng::seeded(seed, rng::STREAM_DATA);
    let mut report = BoundReport {
        instances,
        bound_violations: 0,
        attainment_violations: 0,
        chain_rule_violations: 0,
        worst_bound_gap: 0.0,
        worst_attainment_gap: 0.0,
        worst_chain_rule_gap: 0.0,
        failed_instances: 0,
        tolerance,
    };
    for _ in 0..instances {
        let mut failed = false;
        for transitions in [Transitions::Deterministic, Transitions::Stochastic] {
            let mdp = random_mdp(&mut rng, 3, 2, 3, 2, transitions);
            let pi = random_policy(&mut rng, &mdp);
            let pi_prime = random_policy(&mut rng, &mdp);
            let goal = rng::index(&mut rng, 2);
            let target = -libm::log(reach_prob(&mdp, &pi, goal)?);

            if let Some(v) = surrogate_rhs(&mdp, &pi, &pi_prime, goal)?.finite() {
                let gap = v - target;
                report.worst_bound_gap = report.worst_bound_gap.min(gap);
                if gap < -tolerance {
                    report.bound_violations += 1;
                    failed = true;
                }
            }

            let post = posterior_policy(&mdp, &pi, goal)?;
            let post_gap = match surrogate_rhs(&mdp, &pi, &post, goal)?.finite() {
                Some(v) => v - target,
                None => f64::INFINITY,
            };
            report.worst_bound_gap = report.worst_bound_gap.min(post_gap);
            if post_gap < -tolerance {
                report.bound_violations += 1;
                failed = true;
            }
            if transitions == Transitions::Deterministic {
                report.worst_attainment_gap = report.worst_attainment_gap.max(post_gap.abs());
                if post_gap.abs() > tolerance {
                    report.attainment_violations += 1;
                    failed = true;
                }
            }

            let chain = traj_kl_chain(&mdp, &pi_prime, &pi)?;
            let direct = traj_kl_enumerated(&mdp, &pi_prime, &pi)?;
            let gap = match (chain, direct) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs(),
                (a, b) if a == b => 0.0,
                _ => f64::INFINITY,
            };
            report.worst_chain_rule_gap = report.worst_chain_rule_gap.max(gap);
            if gap > tolerance {
                report.chain_rule_violations += 1;
                failed = true;
            }
        }
        if failed {
            report.failed_instances += 1;
        }
    }
    Ok(report)
}
