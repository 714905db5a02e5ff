use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::{Allocator, Dense, Lstm, LstmCache};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub layers: usize,
    pub hidden: usize,
    pub init_log_std: f64,
    pub min_log_std: f64,
    pub max_log_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 256,
            init_log_std: -0.5,
            min_log_std: -5.0,
            max_log_std: 1.0,
        }
    }
}

impl PolicyConfig {
    pub fn toy() -> Self {
        Self {
            layers: 1,
            hidden: 64,
            ..Self::default()
        }
    }
}

/// Normalized features are clipped to this many standard deviations.
pub const NORMALIZED_CLIP: f64 = 5.0;

/// Fixed per-feature affine normalization, clipped to `NORMALIZED_CLIP`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Mean and standard deviation of `samples`, with each std raised to `min_std`.
    pub fn fit<'a>(n: usize, samples: impl IntoIterator<Item = &'a [f64]>, min_std: f64) -> Self {
        let mut count = 0.0;
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for s in samples {
            count += 1.0;
            for i in 0..n {
                sum[i] += s[i];
                sq[i] += s[i] * s[i];
            }
        }
        if count == 0.0 {
            return Self::identity(n);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = (0..n)
            .map(|i| (sq[i] / count - mean[i] * mean[i]).max(0.0).sqrt().max(min_std))
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| ((v - m) / s).clamp(-NORMALIZED_CLIP, NORMALIZED_CLIP))
            .collect()
    }
}

/// Recurrent state, one `(h, c)` pair per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hidden {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Gradient of a loss with respect to one step's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputGrad {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Per-step intermediate values from [`PolicyNetwork::forward_seq`].
pub struct SeqCache {
    lstm: Vec<Vec<LstmCache>>,
    tops: Vec<Vec<f64>>,
    raw_log_std: Vec<Vec<f64>>,
    pub outputs: Vec<PolicyOutput>,
}

/// Recurrent actor-critic: stacked LSTM core, diagonal Gaussian action head and a
/// scalar value head sharing the core.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetwork {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub config: PolicyConfig,
    lstm: Vec<Lstm>,
    mean: Dense,
    log_std: Dense,
    value: Dense,
    pub params: Vec<f64>,
    pub normalizer: Normalizer,
}

impl PolicyNetwork {
    pub fn new(obs_dim: usize, act_dim: usize, config: PolicyConfig, rng: &mut impl Rng) -> Self {
        let mut alloc = Allocator::default();
        let mut lstm = Vec::new();
        let mut inp = obs_dim;
        for _ in 0..config.layers.max(1) {
            lstm.push(Lstm::new(&mut alloc, inp, config.hidden));
            inp = config.hidden;
        }
        let mean = Dense::new(&mut alloc, inp, act_dim);
        let log_std = Dense::new(&mut alloc, inp, act_dim);
        let value = Dense::new(&mut alloc, inp, 1);
        let mut params = vec![0.0; alloc.len];
        for l in &lstm {
            l.init(&mut params, rng);
        }
        mean.init(&mut params, 0.01, rng);
        log_std.init(&mut params, 0.0, rng);
        log_std.bias_mut(&mut params).fill(config.init_log_std);
        value.init(&mut params, 1.0, rng);
        Self {
            obs_dim,
            act_dim,
            config,
            lstm,
            mean,
            log_std,
            value,
            params,
            normalizer: Normalizer::identity(obs_dim),
        }
    }

    /// Bias of the action-mean head.
    pub fn mean_bias_mut(&mut self) -> &mut [f64] {
        let d = self.mean;
        d.bias_mut(&mut self.params)
    }

    pub fn initial_hidden(&self) -> Hidden {
        let z = vec![vec![0.0; self.config.hidden]; self.lstm.len()];
        Hidden { h: z.clone(), c: z }
    }

    fn heads(&self, top: &[f64]) -> (PolicyOutput, Vec<f64>) {
        let p = &self.params;
        let mut mean = vec![0.0; self.act_dim];
        let mut raw = vec![0.0; self.act_dim];
        let mut v = [0.0];
        self.mean.forward(p, top, &mut mean);
        self.log_std.forward(p, top, &mut raw);
        self.value.forward(p, top, &mut v);
        let log_std = raw
            .iter()
            .map(|s| s.clamp(self.config.min_log_std, self.config.max_log_std))
            .collect();
        (PolicyOutput { mean, log_std, value: v[0] }, raw)
    }

    /// One inference step; advances `hidden`.
    pub fn step(&self, obs: &[f64], hidden: &mut Hidden) -> PolicyOutput {
        let mut x = self.normalizer.apply(obs);
        for (l, layer) in self.lstm.iter().enumerate() {
            layer.step(&self.params, &x, &mut hidden.h[l], &mut hidden.c[l], false);
            x = hidden.h[l].clone();
        }
        self.heads(&x).0
    }

    pub fn forward_seq(&self, obs: &[Vec<f64>], h0: &Hidden) -> SeqCache {
        let mut hidden = h0.clone();
        let mut cache = SeqCache {
            lstm: Vec::with_capacity(obs.len()),
            tops: Vec::with_capacity(obs.len()),
            raw_log_std: Vec::with_capacity(obs.len()),
            outputs: Vec::with_capacity(obs.len()),
        };
        for o in obs {
            let mut x = self.normalizer.apply(o);
            let mut layers = Vec::with_capacity(self.lstm.len());
            for (l, layer) in self.lstm.iter().enumerate() {
                let c = layer.step(&self.params, &x, &mut hidden.h[l], &mut hidden.c[l], true);
                layers.push(c.expect("cache requested"));
                x = hidden.h[l].clone();
            }
            let (out, raw) = self.heads(&x);
            cache.lstm.push(layers);
            cache.tops.push(x);
            cache.raw_log_std.push(raw);
            cache.outputs.push(out);
        }
        cache
    }

    /// Backpropagates per-step output gradients through the sequence, adding into `g`.
    pub fn backward_seq(&self, cache: &SeqCache, grads: &[OutputGrad], g: &mut [f64]) {
        let p = &self.params;
        let n = self.config.hidden;
        let layers = self.lstm.len();
        let mut dh = vec![vec![0.0; n]; layers];
        let mut dc = vec![vec![0.0; n]; layers];
        for t in (0..grads.len()).rev() {
            let d = &grads[t];
            let top = &cache.tops[t];
            let mut dtop = vec![0.0; n];
            self.mean.backward(p, g, top, &d.mean, Some(&mut dtop));
            let dls: Vec<f64> = d
                .log_std
                .iter()
                .zip(&cache.raw_log_std[t])
                .map(|(g, r)| {
                    if *r >= self.config.min_log_std && *r <= self.config.max_log_std {
                        *g
                    } else {
                        0.0
                    }
                })
                .collect();
            self.log_std.backward(p, g, top, &dls, Some(&mut dtop));
            self.value.backward(p, g, top, &[d.value], Some(&mut dtop));
            let mut dx = dtop;
            for l in (0..layers).rev() {
                for (a, b) in dh[l].iter_mut().zip(&dx) {
                    *a += b;
                }
                let inp = self.lstm[l].inp;
                let mut dnext = vec![0.0; inp];
                let want = l > 0;
                self.lstm[l].backward(
                    p,
                    g,
                    &cache.lstm[t][l],
                    &mut dh[l],
                    &mut dc[l],
                    want.then_some(dnext.as_mut_slice()),
                );
                dx = dnext;
            }
        }
    }

    pub fn sample(&self, out: &PolicyOutput, rng: &mut impl Rng) -> Vec<f64> {
        out.mean
            .iter()
            .zip(&out.log_std)
            .map(|(m, s)| m + s.exp() * { let z: f64 = StandardNormal.sample(rng); z })
            .collect()
    }
}

pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - 0.5 * LN_2PI
        })
        .sum()
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (LN_2PI + 1.0)).sum()
}
