//! Dense and LSTM layers over a shared flat parameter vector, with hand-written
//! backward passes, plus Adam.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Hands out consecutive parameter ranges while a network is being built.
#[derive(Default)]
pub struct Allocator {
    pub len: usize,
}

impl Allocator {
    pub fn take(&mut self, n: usize) -> usize {
        let at = self.len;
        self.len += n;
        at
    }
}

/// `y = W x + b`, W row-major `out x inp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
    w: usize,
    b: usize,
}

impl Dense {
    pub fn new(alloc: &mut Allocator, inp: usize, out: usize) -> Self {
        let w = alloc.take(inp * out);
        let b = alloc.take(out);
        Self { inp, out, w, b }
    }

    /// Gaussian weights with std `gain / sqrt(inp)`, zero bias.
    pub fn init(&self, p: &mut [f64], gain: f64, rng: &mut impl Rng) {
        let s = gain / (self.inp as f64).sqrt();
        for v in &mut p[self.w..self.w + self.inp * self.out] {
            *v = s * { let z: f64 = StandardNormal.sample(rng); z };
        }
        p[self.b..self.b + self.out].fill(0.0);
    }

    pub fn bias_mut<'a>(&self, p: &'a mut [f64]) -> &'a mut [f64] {
        &mut p[self.b..self.b + self.out]
    }

    pub fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        let w = &p[self.w..self.w + self.inp * self.out];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.inp..(o + 1) * self.inp];
            *yo = p[self.b + o] + dot(row, x);
        }
    }

    /// Accumulates parameter gradients into `g` and, if given, adds `W^T dy` to `dx`.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g[self.b + o] += d;
            let gw = &mut g[self.w + o * self.inp..self.w + (o + 1) * self.inp];
            axpy(d, x, gw);
        }
        if let Some(dx) = dx {
            let w = &p[self.w..self.w + self.inp * self.out];
            for (o, &d) in dy.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &w[o * self.inp..(o + 1) * self.inp], dx);
                }
            }
        }
    }
}

/// One LSTM layer. Gate order in the stacked pre-activation: input, forget, cell, output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub inp: usize,
    pub hidden: usize,
    wx: usize,
    wh: usize,
    b: usize,
}

/// Values kept from one LSTM step for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates, `4 * hidden`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn new(alloc: &mut Allocator, inp: usize, hidden: usize) -> Self {
        let wx = alloc.take(4 * hidden * inp);
        let wh = alloc.take(4 * hidden * hidden);
        let b = alloc.take(4 * hidden);
        Self { inp, hidden, wx, wh, b }
    }

    pub fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        let h = self.hidden;
        let sx = 1.0 / (self.inp as f64).sqrt();
        let sh = 1.0 / (h as f64).sqrt();
        for v in &mut p[self.wx..self.wx + 4 * h * self.inp] {
            *v = sx * { let z: f64 = StandardNormal.sample(rng); z };
        }
        for v in &mut p[self.wh..self.wh + 4 * h * h] {
            *v = sh * { let z: f64 = StandardNormal.sample(rng); z };
        }
        let b = &mut p[self.b..self.b + 4 * h];
        b.fill(0.0);
        b[h..2 * h].fill(1.0);
    }

    /// Advances `(h, c)` by one input. Returns the cache when `keep` is set.
    pub fn step(&self, p: &[f64], x: &[f64], h: &mut [f64], c: &mut [f64], keep: bool) -> Option<LstmCache> {
        let n = self.hidden;
        let mut z = p[self.b..self.b + 4 * n].to_vec();
        let wx = &p[self.wx..self.wx + 4 * n * self.inp];
        let wh = &p[self.wh..self.wh + 4 * n * n];
        for (r, zr) in z.iter_mut().enumerate() {
            *zr += dot(&wx[r * self.inp..(r + 1) * self.inp], x) + dot(&wh[r * n..(r + 1) * n], h);
        }
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = if (2 * n..3 * n).contains(&r) { zr.tanh() } else { sigmoid(*zr) };
        }
        let cache = keep.then(|| LstmCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            ..Default::default()
        });
        let mut tanh_c = vec![0.0; n];
        for k in 0..n {
            let (i, f, g, o) = (z[k], z[n + k], z[2 * n + k], z[3 * n + k]);
            c[k] = f * c[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
        cache.map(|mut cache| {
            cache.gates = z;
            cache.c = c.to_vec();
            cache.tanh_c = tanh_c;
            cache
        })
    }

    /// Backward through one step. `dh`/`dc` carry the gradient w.r.t. this step's
    /// outputs in and the gradient w.r.t. the previous step's state out.
    pub fn backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        cache: &LstmCache,
        dh: &mut [f64],
        dc: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let n = self.hidden;
        let z = &cache.gates;
        let mut dz = vec![0.0; 4 * n];
        for k in 0..n {
            let (i, f, gg, o) = (z[k], z[n + k], z[2 * n + k], z[3 * n + k]);
            let tc = cache.tanh_c[k];
            let do_ = dh[k] * tc;
            let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dz[k] = dck * gg * i * (1.0 - i);
            dz[n + k] = dck * cache.c_prev[k] * f * (1.0 - f);
            dz[2 * n + k] = dck * i * (1.0 - gg * gg);
            dz[3 * n + k] = do_ * o * (1.0 - o);
            dc[k] = dck * f;
        }
        dh.fill(0.0);
        let wx = &p[self.wx..self.wx + 4 * n * self.inp];
        let wh = &p[self.wh..self.wh + 4 * n * n];
        let mut dx = dx;
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g[self.b + r] += d;
            axpy(d, &cache.x, &mut g[self.wx + r * self.inp..self.wx + (r + 1) * self.inp]);
            axpy(d, &cache.h_prev, &mut g[self.wh + r * n..self.wh + (r + 1) * n]);
            axpy(d, &wh[r * n..(r + 1) * n], dh);
            if let Some(dx) = dx.as_deref_mut() {
                axpy(d, &wx[r * self.inp..(r + 1) * self.inp], dx);
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Rescales `g` so its Euclidean norm is at most `max`. Returns the norm before.
pub fn clip_grad_norm(g: &mut [f64], max: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max && norm > 0.0 {
        let s = max / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One descent step on `params` along gradient `g`.
    pub fn step(&mut self, params: &mut [f64], g: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softplus_and_sigmoid_extremes() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn lstm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut alloc = Allocator::default();
        let l = Lstm::new(&mut alloc, 3, 4);
        let mut p = vec![0.0; alloc.len];
        l.init(&mut p, &mut rng);
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let wts: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // loss = sum_t sum_k wts[k] * h_t[k]
        let loss = |p: &[f64]| {
            let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
            let mut s = 0.0;
            for x in &xs {
                l.step(p, x, &mut h, &mut c, false);
                s += dot(&wts, &h);
            }
            s
        };
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        let caches: Vec<_> = xs.iter().map(|x| l.step(&p, x, &mut h, &mut c, true).unwrap()).collect();
        let mut g = vec![0.0; p.len()];
        let (mut dh, mut dc) = (vec![0.0; 4], vec![0.0; 4]);
        for cache in caches.iter().rev() {
            axpy(1.0, &wts, &mut dh);
            l.backward(&p, &mut g, cache, &mut dh, &mut dc, None);
        }
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i] += 1e-6;
            let up = loss(&q);
            q[i] -= 2e-6;
            let fd = (up - loss(&q)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g = vec![2.0 * x[0], 2.0 * x[1]];
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn clip_keeps_direction() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] - 0.4).abs() < 1e-15);
    }
}
