//! Two-step deterministic toy with hand-computed backward-induction Q-values.
//!
//! d = 1, H = 2, A = 2, alpha = (1, 1/2), sigma^2 = 1/2, goal 1.5. Selection
//! 0 always proposes -1 and selection 1 proposes +1, so the reachable
//! terminal points are -1.5, -0.5, 0.5, 1.5 with losses 9, 4, 1, 0 and
//!
//!   Q_2(-1, .) = (9, 4),  Q_2(1, .) = (1, 0),  Q_1(0, .) = (4, 0).

use vagent_core::agents::{gc_select, Agents, NetConfig};
use vagent_core::data::Dataset;
use vagent_core::env::EnvConfig;
use vagent_core::replay::{ReplayBuffers, ReplayCapacities, TransitionRecord};
use vagent_core::rng;
use vagent_core::training::{q_regression, q_targets, sample_trajectory};

fn toy() -> (EnvConfig, Agents) {
    let env = EnvConfig::new(2, 2, 1).unwrap();
    let net = NetConfig {
        hidden: vec![],
        embed_dim: 2,
    };
    let mut agents = Agents::new(&env, &net, &mut rng::seeded(0, 0)).unwrap();

    // Proposal: y = W_e e with table rows (h, a) -> (-1 or +1, 0), W_x = b = 0.
    let p = &mut agents.proposal.params;
    p.get_mut(0).data_mut().fill(0.0);
    p.get_mut(1).data_mut().copy_from_slice(&[1.0, 0.0]);
    p.get_mut(2).data_mut().fill(0.0);
    p.get_mut(3).data_mut().copy_from_slice(&[-1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0]);

    // Q head (V, adv_0, adv_1) = W_x x + W_e onehot(h), dueling Q = V + adv - mean(adv).
    let q = &mut agents.q.params;
    q.get_mut(0).data_mut().copy_from_slice(&[-3.0, -4.0, -2.0]);
    q.get_mut(1).data_mut().fill(0.0);
    q.get_mut(2).data_mut().copy_from_slice(&[2.0, 3.5, 4.0, 5.0, 0.0, 2.0]);
    q.get_mut(3).data_mut().fill(0.0);
    q.get_mut(4).data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    agents.q.target = agents.q.params.clone();
    (env, agents)
}

#[test]
fn hand_built_q_reproduces_backward_induction() {
    let (_, agents) = toy();
    let close = |a: Vec<f64>, b: [f64; 2]| a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-12);
    assert!(close(agents.q.q_values(&[0.0], &[1.5], 1, false).unwrap(), [4.0, 0.0]));
    assert!(close(agents.q.q_values(&[-1.0], &[1.5], 2, false).unwrap(), [9.0, 4.0]));
    assert!(close(agents.q.q_values(&[1.0], &[1.5], 2, false).unwrap(), [1.0, 0.0]));
    assert_eq!(agents.proposal.propose(&[0.3], 2, 0).unwrap(), vec![-1.0]);
}

#[test]
fn bellman_error_vanishes_at_the_fixed_point() {
    let (env, agents) = toy();
    let goal = vec![1.5];
    let mut records = Vec::new();
    for (x, step) in [(0.0, 1), (-1.0, 2), (1.0, 2)] {
        for a in 0..2 {
            let y = if a == 0 { -1.0 } else { 1.0 };
            let x_next = x + env.alpha(step) * y;
            let loss = if step == 2 { (x_next - 1.5f64).powi(2) / (2.0 * env.sigma2) } else { 0.0 };
            records.push(TransitionRecord {
                x: vec![x],
                step,
                selection: a,
                x_next: vec![x_next],
                loss,
                goal: goal.clone(),
            });
        }
    }
    let batch: Vec<&TransitionRecord> = records.iter().collect();
    assert_eq!(q_targets(&agents.q, &batch, &env, false).unwrap(), vec![4.0, 0.0, 9.0, 4.0, 1.0, 0.0]);
    let (loss, _) = q_regression(&agents.q, &batch, &env, false).unwrap();
    assert!(loss < 1e-12, "loss {loss}");
    let (loss, _) = q_regression(&agents.q, &batch, &env, true).unwrap();
    assert!(loss < 1e-12, "double-DQN loss {loss}");
}

#[test]
fn greedy_agent_reaches_the_goal() {
    let (env, agents) = toy();
    let ds = Dataset::new("goal", vec![vec![1.5]]).unwrap();
    let mut buffers = ReplayBuffers::new(ReplayCapacities::default()).unwrap();
    let traj = sample_trajectory(&agents, &env, &ds, &mut buffers, 0.0, &mut rng::seeded(0, 1)).unwrap();
    assert_eq!(traj.selections, vec![1, 1]);
    assert_eq!(traj.terminal_loss(), 0.0);
    assert_eq!(gc_select(&agents.q, &agents.selection, &[1.0], &[1.5], 2, 0.0).unwrap(), 1);
    let (loss, _) = q_regression(&agents.q, &buffers.transitions.iter().collect::<Vec<_>>(), &env, false).unwrap();
    assert!(loss < 1e-12);
}
