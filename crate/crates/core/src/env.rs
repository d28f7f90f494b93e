//! The additive-dynamics MDP.
//!
//! States and actions live in `R^d`. For steps `h = 1..H` the state moves by
//! `x_{h+1} = x_h + alpha_h * y_h`; the last transition is Gaussian with
//! mean `x_H + alpha_H * y_H` and variance `sigma2`, which only shows up
//! through the goal-conditioned loss. Step indices are 1-based here.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Terminal variance giving a loss of exactly `||x - goal||^2`.
pub const DEFAULT_SIGMA2: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    /// Horizon `H`.
    pub horizon: usize,
    /// Number of selections `A`.
    pub selections: usize,
    /// State dimension `d`.
    pub dim: usize,
    /// Rates `alpha_1..alpha_H`.
    pub alphas: Vec<f64>,
    /// Terminal variance `sigma^2`.
    pub sigma2: f64,
    /// Fixed initial state `x_1`.
    pub x1: Vec<f64>,
}

/// A training point the goal-conditioned agent must reach.
#[derive(Clone, Debug, PartialEq)]
pub struct Goal(pub Vec<f64>);

impl Goal {
    pub fn new(value: Vec<f64>) -> Result<Self> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("goal has non-finite entries"));
        }
        Ok(Goal(value))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `(1, 1/2, ..., 1/H)`.
pub fn default_rates(horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::config("horizon H must be at least 1"));
    }
    Ok((1..=horizon).map(|h| 1.0 / h as f64).collect())
}

impl EnvConfig {
    /// Default rates `1/h`, `sigma2 = 0.5` and a zero initial state.
    pub fn new(horizon: usize, selections: usize, dim: usize) -> Result<Self> {
        let cfg = EnvConfig {
            horizon,
            selections,
            dim,
            alphas: default_rates(horizon)?,
            sigma2: DEFAULT_SIGMA2,
            x1: vec![0.0; dim],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon H must be at least 1"));
        }
        if self.selections == 0 {
            return Err(Error::config("selection count A must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("dimension d must be at least 1"));
        }
        if self.alphas.len() != self.horizon {
            return Err(Error::config(format!(
                "{} rates given for horizon {}",
                self.alphas.len(),
                self.horizon
            )));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::config("rates must be positive and finite"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("sigma2 must be positive"));
        }
        if self.x1.len() != self.dim || self.x1.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("initial state must be finite with length d"));
        }
        Ok(())
    }

    /// Rate for 1-based step `h`.
    pub fn alpha(&self, step: usize) -> f64 {
        self.alphas[step - 1]
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if step == 0 || step > self.horizon {
            return Err(Error::Index {
                what: "step",
                index: step,
                bound: self.horizon,
            });
        }
        Ok(())
    }
}

/// `x + alpha_h * y`.
pub fn transition(x: &[f64], y: &[f64], step: usize, cfg: &EnvConfig) -> Result<Vec<f64>> {
    cfg.check_step(step)?;
    if x.len() != cfg.dim || y.len() != cfg.dim {
        return Err(Error::shape(format!(
            "state {} / action {} against d = {}",
            x.len(),
            y.len(),
            cfg.dim
        )));
    }
    let a = cfg.alpha(step);
    Ok(x.iter().zip(y).map(|(x, y)| x + a * y).collect())
}

/// Goal-conditioned loss: zero before the horizon, and
/// `||x + alpha_H y - goal||^2 / (2 sigma^2)` at `h = H`.
pub fn step_loss(x: &[f64], y: &[f64], step: usize, goal: &Goal, cfg: &EnvConfig) -> Result<f64> {
    let next = transition(x, y, step, cfg)?;
    if step < cfg.horizon {
        return Ok(0.0);
    }
    terminal_loss(&next, goal.as_slice(), cfg)
}

/// `||x - goal||^2 / (2 sigma^2)` for a terminal mean `x`.
pub fn terminal_loss(x: &[f64], goal: &[f64], cfg: &EnvConfig) -> Result<f64> {
    if goal.len() != x.len() {
        return Err(Error::shape("goal dimension mismatch"));
    }
    Ok(squared_distance(x, goal) / (2.0 * cfg.sigma2))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Draw from the terminal Gaussian `N(mean, sigma2 I)`.
pub fn sample_terminal(mean: &[f64], cfg: &EnvConfig, rng: &mut Rng) -> Vec<f64> {
    let sd = libm::sqrt(cfg.sigma2);
    mean.iter().map(|m| m + sd * rng::normal(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg2(alphas: Vec<f64>) -> EnvConfig {
        let mut c = EnvConfig::new(alphas.len(), 2, 2).unwrap();
        c.alphas = alphas;
        c
    }

    #[test]
    fn default_rates_are_reciprocals() {
        let r = default_rates(16).unwrap();
        assert_eq!(r[0], 1.0);
        assert_eq!(r[1], 0.5);
        assert_eq!(r[15], 0.0625);
        assert_eq!(default_rates(1).unwrap(), vec![1.0]);
        let r4 = default_rates(4).unwrap();
        assert_eq!(r4, vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
        assert!(default_rates(0).is_err());
    }

    #[test]
    fn transition_examples() {
        let mut c = cfg2(vec![0.5]);
        assert_eq!(transition(&[0.0, 0.0], &[2.0, 4.0], 1, &c).unwrap(), vec![1.0, 2.0]);
        assert_eq!(transition(&[3.0, -1.0], &[0.0, 0.0], 1, &c).unwrap(), vec![3.0, -1.0]);
        c = cfg2(vec![1.0, 0.5]);
        let x2 = transition(&[0.0, 0.0], &[1.0, 1.0], 1, &c).unwrap();
        let x3 = transition(&x2, &[1.0, 1.0], 2, &c).unwrap();
        assert_eq!(x3, vec![1.5, 1.5]);
        assert!(transition(&[0.0], &[1.0, 1.0], 1, &c).is_err());
        assert!(transition(&[0.0, 0.0], &[1.0, 1.0], 3, &c).is_err());
        assert!(transition(&[0.0, 0.0], &[1.0, 1.0], 0, &c).is_err());
    }

    #[test]
    fn step_loss_examples() {
        let c = cfg2(vec![1.0, 0.5]);
        let g = Goal::new(vec![9.0, 9.0]).unwrap();
        assert_eq!(step_loss(&[1.0, 2.0], &[3.0, 4.0], 1, &g, &c).unwrap(), 0.0);
        // x + 0.5 y = goal
        let g = Goal::new(vec![2.0, 3.0]).unwrap();
        assert_eq!(step_loss(&[1.0, 2.0], &[2.0, 2.0], 2, &g, &c).unwrap(), 0.0);
        // residual (1, 1), sigma2 = 0.5
        let g = Goal::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(step_loss(&[1.0, 2.0], &[2.0, 2.0], 2, &g, &c).unwrap(), 2.0);
    }

    #[test]
    fn degenerate_sizes_work() {
        let c = EnvConfig::new(1, 1, 1).unwrap();
        let g = Goal::new(vec![2.0]).unwrap();
        assert_eq!(step_loss(&[0.0], &[1.0], 1, &g, &c).unwrap(), 1.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = EnvConfig::new(2, 2, 2).unwrap();
        c.sigma2 = 0.0;
        assert!(c.validate().is_err());
        let mut c = EnvConfig::new(2, 2, 2).unwrap();
        c.alphas = vec![1.0];
        assert!(c.validate().is_err());
        let mut c = EnvConfig::new(2, 2, 2).unwrap();
        c.alphas[1] = -1.0;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative_and_zero_before_horizon(
            x in prop::collection::vec(-5.0..5.0f64, 3),
            y in prop::collection::vec(-5.0..5.0f64, 3),
            g in prop::collection::vec(-5.0..5.0f64, 3),
            h in 1usize..=4,
        ) {
            let c = EnvConfig::new(4, 3, 3).unwrap();
            let goal = Goal::new(g).unwrap();
            let l = step_loss(&x, &y, h, &goal, &c).unwrap();
            prop_assert!(l >= 0.0);
            if h < 4 {
                prop_assert_eq!(l, 0.0);
            }
        }

        #[test]
        fn transition_is_linear_in_action(
            x in prop::collection::vec(-5.0..5.0f64, 2),
            y1 in prop::collection::vec(-5.0..5.0f64, 2),
            y2 in prop::collection::vec(-5.0..5.0f64, 2),
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
        ) {
            let c = cfg2(vec![0.7]);
            let mix: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
            let got = transition(&x, &mix, 1, &c).unwrap();
            for i in 0..2 {
                let want = x[i] + 0.7 * (a * y1[i] + b * y2[i]);
                prop_assert!((got[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn rollout_telescopes(
            ys in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 5),
        ) {
            let c = EnvConfig::new(5, 2, 2).unwrap();
            let mut x = c.x1.clone();
            for (h, y) in ys.iter().enumerate() {
                x = transition(&x, y, h + 1, &c).unwrap();
            }
            for i in 0..2 {
                let want: f64 = c.x1[i] + ys.iter().enumerate().map(|(h, y)| c.alphas[h] * y[i]).sum::<f64>();
                prop_assert!((x[i] - want).abs() < 1e-12);
            }
        }
    }
}
