use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, softplus, sigmoid, Adam, Allocator, Dense};
use super::policy::Normalizer;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Gradient steps per training iteration.
    pub updates: usize,
    /// Samples drawn from each side per gradient step.
    pub minibatch: usize,
    pub reward_ceiling: f64,
    pub max_grad_norm: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 3e-4,
            updates: 20,
            minibatch: 256,
            reward_ceiling: 10.0,
            max_grad_norm: 1.0,
        }
    }
}

/// Two tanh hidden layers mapping a concatenated (observation, action) to a logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub obs_dim: usize,
    pub act_dim: usize,
    l1: Dense,
    l2: Dense,
    out: Dense,
    pub params: Vec<f64>,
    pub normalizer: Normalizer,
}

struct Cache {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
}

impl Discriminator {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut alloc = Allocator::default();
        let l1 = Dense::new(&mut alloc, obs_dim + act_dim, hidden);
        let l2 = Dense::new(&mut alloc, hidden, hidden);
        let out = Dense::new(&mut alloc, hidden, 1);
        let mut params = vec![0.0; alloc.len];
        l1.init(&mut params, 1.0, rng);
        l2.init(&mut params, 1.0, rng);
        out.init(&mut params, 0.1, rng);
        Self {
            obs_dim,
            act_dim,
            l1,
            l2,
            out,
            params,
            normalizer: Normalizer::identity(obs_dim + act_dim),
        }
    }

    fn run(&self, input: &[f64]) -> (f64, Cache) {
        let p = &self.params;
        let x = self.normalizer.apply(input);
        let mut a1 = vec![0.0; self.l1.out];
        self.l1.forward(p, &x, &mut a1);
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let mut a2 = vec![0.0; self.l2.out];
        self.l2.forward(p, &a1, &mut a2);
        a2.iter_mut().for_each(|v| *v = v.tanh());
        let mut y = [0.0];
        self.out.forward(p, &a2, &mut y);
        (y[0], Cache { x, a1, a2 })
    }

    fn backprop(&self, c: &Cache, dy: f64, g: &mut [f64]) {
        let p = &self.params;
        let mut d2 = vec![0.0; self.l2.out];
        self.out.backward(p, g, &c.a2, &[dy], Some(&mut d2));
        for (d, a) in d2.iter_mut().zip(&c.a2) {
            *d *= 1.0 - a * a;
        }
        let mut d1 = vec![0.0; self.l1.out];
        self.l2.backward(p, g, &c.a1, &d2, Some(&mut d1));
        for (d, a) in d1.iter_mut().zip(&c.a1) {
            *d *= 1.0 - a * a;
        }
        self.l1.backward(p, g, &c.x, &d1, None);
    }

    /// Logit for a concatenated `[observation, action]` input.
    pub fn logit_of(&self, input: &[f64]) -> f64 {
        self.run(input).0
    }

    pub fn logit(&self, obs: &[f64], action: &[f64]) -> f64 {
        self.logit_of(&concat(obs, action))
    }
}

pub fn concat(obs: &[f64], action: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(obs.len() + action.len());
    v.extend_from_slice(obs);
    v.extend_from_slice(action);
    v
}

/// Binary cross-entropy with demonstration pairs labeled 1 and policy pairs 0,
/// averaged over both sets together.
pub fn bce_loss(disc: &Discriminator, demo: &[&[f64]], policy: &[&[f64]], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let inv = 1.0 / (demo.len() + policy.len()).max(1) as f64;
    let mut loss = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; disc.params.len()]);
    for (set, label) in [(demo, 1.0), (policy, 0.0)] {
        for x in set.iter() {
            let (l, cache) = disc.run(x);
            loss += inv * if label == 1.0 { softplus(-l) } else { softplus(l) };
            if let Some(g) = grad.as_mut() {
                disc.backprop(&cache, inv * (sigmoid(l) - label), g);
            }
        }
    }
    (loss, grad)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorDiagnostics {
    pub loss_before: f64,
    pub loss_after: f64,
    pub accuracy: f64,
}

/// Fraction of samples on the correct side of logit 0.
pub fn accuracy(disc: &Discriminator, demo: &[&[f64]], policy: &[&[f64]]) -> f64 {
    let right = demo.iter().filter(|x| disc.logit_of(x) > 0.0).count()
        + policy.iter().filter(|x| disc.logit_of(x) < 0.0).count();
    right as f64 / (demo.len() + policy.len()).max(1) as f64
}

/// Minibatch Adam steps on the cross-entropy. Inputs are concatenated pairs.
/// A non-finite loss restores the parameters and optimizer and fails.
pub fn discriminator_update(
    disc: &mut Discriminator,
    opt: &mut Adam,
    demo: &[Vec<f64>],
    policy: &[Vec<f64>],
    cfg: &DiscriminatorConfig,
    rng: &mut impl Rng,
) -> Result<DiscriminatorDiagnostics> {
    if demo.is_empty() || policy.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let all_d: Vec<&[f64]> = demo.iter().map(|v| v.as_slice()).collect();
    let all_p: Vec<&[f64]> = policy.iter().map(|v| v.as_slice()).collect();
    let (loss_before, _) = bce_loss(disc, &all_d, &all_p, false);
    let saved = (disc.params.clone(), opt.clone());
    for _ in 0..cfg.updates {
        let d: Vec<&[f64]> = all_d.choose_multiple(rng, cfg.minibatch.min(demo.len())).copied().collect();
        let p: Vec<&[f64]> = all_p.choose_multiple(rng, cfg.minibatch.min(policy.len())).copied().collect();
        let (loss, grad) = bce_loss(disc, &d, &p, true);
        let mut grad = grad.expect("gradient requested");
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            disc.params = saved.0;
            *opt = saved.1;
            return Err(Error::NonFinite(format!("discriminator loss {loss}")));
        }
        clip_grad_norm(&mut grad, cfg.max_grad_norm);
        opt.step(&mut disc.params, &grad);
    }
    let (loss_after, _) = bce_loss(disc, &all_d, &all_p, false);
    Ok(DiscriminatorDiagnostics {
        loss_before,
        loss_after,
        accuracy: accuracy(disc, &all_d, &all_p),
    })
}

/// `-ln(1 - sigmoid(logit))`, capped at `ceiling`.
pub fn gail_reward_from_logit(logit: f64, ceiling: f64) -> f64 {
    softplus(logit).min(ceiling)
}

pub fn gail_reward(disc: &Discriminator, obs: &[f64], action: &[f64], ceiling: f64) -> f64 {
    gail_reward_from_logit(disc.logit(obs, action), ceiling)
}
