use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, Adam};
use super::policy::{entropy, log_prob, Hidden, OutputGrad, PolicyNetwork};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    /// Steps per minibatch (whole sequences are kept together).
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub learning_rate: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Truncation length for backpropagation through time.
    pub seq_len: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 4,
            minibatch: 256,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            learning_rate: 3e-4,
            gamma: 0.99,
            lambda: 0.95,
            seq_len: 32,
        }
    }
}

/// A stretch of one episode, trained with the hidden state it started from.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub h0: Hidden,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [self.policy, self.value, self.entropy, self.total, self.approx_kl]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Clipped-surrogate loss (to be minimized) averaged over all steps in `seqs`,
/// with its gradient when `want_grad` is set.
pub fn ppo_loss(
    net: &PolicyNetwork,
    seqs: &[&Sequence],
    cfg: &PpoConfig,
    want_grad: bool,
) -> (LossParts, Option<Vec<f64>>) {
    let n: usize = seqs.iter().map(|s| s.len()).sum();
    let inv = 1.0 / n.max(1) as f64;
    let mut parts = LossParts::default();
    let mut grad = want_grad.then(|| vec![0.0; net.params.len()]);
    for s in seqs {
        let cache = net.forward_seq(&s.observations, &s.h0);
        let mut grads = Vec::with_capacity(s.len());
        for t in 0..s.len() {
            let out = &cache.outputs[t];
            let a = &s.actions[t];
            let adv = s.advantages[t];
            let lp = log_prob(&out.mean, &out.log_std, a);
            let ratio = (lp - s.old_log_probs[t]).exp();
            let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
            let unclipped_active = ratio * adv <= clipped * adv;
            parts.policy -= inv * (ratio * adv).min(clipped * adv);
            let verr = out.value - s.returns[t];
            parts.value += inv * 0.5 * verr * verr;
            parts.entropy += inv * entropy(&out.log_std);
            parts.approx_kl += inv * (s.old_log_probs[t] - lp);
            if (ratio - 1.0).abs() > cfg.clip {
                parts.clip_fraction += inv;
            }
            if want_grad {
                let dlp = if unclipped_active { -inv * adv * ratio } else { 0.0 };
                let mut dm = Vec::with_capacity(a.len());
                let mut ds = Vec::with_capacity(a.len());
                for j in 0..a.len() {
                    let var = (2.0 * out.log_std[j]).exp();
                    let diff = a[j] - out.mean[j];
                    dm.push(dlp * diff / var);
                    ds.push(dlp * (diff * diff / var - 1.0) - cfg.entropy_coef * inv);
                }
                grads.push(OutputGrad {
                    mean: dm,
                    log_std: ds,
                    value: cfg.value_coef * inv * verr,
                });
            }
        }
        if let Some(g) = grad.as_mut() {
            net.backward_seq(&cache, &grads, g);
        }
    }
    parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    (parts, grad)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub loss: LossParts,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Rescales advantages across all sequences to mean 0, std 1.
pub fn normalize_advantages(seqs: &mut [Sequence]) {
    let n: usize = seqs.iter().map(|s| s.len()).sum();
    if n == 0 {
        return;
    }
    let all = || seqs.iter().flat_map(|s| s.advantages.iter());
    let mean = all().sum::<f64>() / n as f64;
    let var = all().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt() + 1e-8;
    for s in seqs.iter_mut() {
        for a in &mut s.advantages {
            *a = (*a - mean) / std;
        }
    }
}

/// Runs the configured PPO epochs over `seqs`. Advantages are normalized here.
/// A non-finite loss or gradient restores the parameters and optimizer and fails.
pub fn policy_update(
    net: &mut PolicyNetwork,
    opt: &mut Adam,
    mut seqs: Vec<Sequence>,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<PpoDiagnostics> {
    seqs.retain(|s| !s.is_empty());
    if seqs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    normalize_advantages(&mut seqs);
    let saved = (net.params.clone(), opt.clone());
    let mut diag = PpoDiagnostics::default();
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            let mut steps = 0;
            while end < order.len() && (steps < cfg.minibatch || end == start) {
                steps += seqs[order[end]].len();
                end += 1;
            }
            let mb: Vec<&Sequence> = order[start..end].iter().map(|&i| &seqs[i]).collect();
            start = end;
            let (parts, grad) = ppo_loss(net, &mb, cfg, true);
            let mut grad = grad.expect("gradient requested");
            if !parts.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                net.params = saved.0;
                *opt = saved.1;
                return Err(Error::NonFinite(format!("policy loss {parts:?}")));
            }
            diag.grad_norm = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(&mut net.params, &grad);
            diag.loss = parts;
            diag.minibatches += 1;
        }
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::policy::PolicyConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(rng: &mut ChaCha8Rng) -> (PolicyNetwork, Sequence) {
        let net = PolicyNetwork::new(
            4,
            2,
            PolicyConfig {
                layers: 1,
                hidden: 8,
                init_log_std: -0.3,
                ..Default::default()
            },
            rng,
        );
        let mut seq = Sequence {
            observations: vec![],
            actions: vec![],
            old_log_probs: vec![],
            advantages: vec![],
            returns: vec![],
            h0: net.initial_hidden(),
        };
        for _ in 0..5 {
            seq.observations.push((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
            seq.actions.push((0..2).map(|_| rng.gen_range(-1.0..1.0)).collect());
            seq.old_log_probs.push(rng.gen_range(-3.0..-1.0));
            seq.advantages.push(0.0);
            seq.returns.push(rng.gen_range(-1.0..1.0));
        }
        (net, seq)
    }

    #[test]
    fn zero_advantage_leaves_only_value_and_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (net, seq) = tiny(&mut rng);
        let cfg = PpoConfig::default();
        let (parts, grad) = ppo_loss(&net, &[&seq], &cfg, true);
        assert_eq!(parts.policy, 0.0);
        let cfg_no = PpoConfig {
            value_coef: 0.0,
            entropy_coef: 0.0,
            ..cfg
        };
        let (_, g0) = ppo_loss(&net, &[&seq], &cfg_no, true);
        assert!(g0.unwrap().iter().all(|g| *g == 0.0));
        assert!(grad.unwrap().iter().any(|g| *g != 0.0));
    }

    #[test]
    fn non_finite_loss_leaves_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut net, mut seq) = tiny(&mut rng);
        seq.returns[0] = f64::NAN;
        seq.advantages = vec![1.0, -1.0, 0.5, 0.2, 0.0];
        let before = net.params.clone();
        let mut opt = Adam::new(net.params.len(), 1e-3);
        let err = policy_update(&mut net, &mut opt, vec![seq], &PpoConfig::default(), &mut rng);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(net.params, before);
        assert_eq!(opt.t, 0);
    }

    #[test]
    fn empty_batch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut net, _) = tiny(&mut rng);
        let mut opt = Adam::new(net.params.len(), 1e-3);
        assert!(matches!(
            policy_update(&mut net, &mut opt, vec![], &PpoConfig::default(), &mut rng),
            Err(Error::EmptyBatch)
        ));
    }
}
