use grasp_cascade::learning::gail::concat;
use grasp_cascade::learning::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest relative error over components with magnitude above `floor`, and the
/// relative error of the whole vector.
fn compare(analytic: &[f64], numeric: &[f64], floor: f64) -> (f64, f64) {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale > floor {
            worst = worst.max((a - n).abs() / scale);
        }
    }
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    (worst, diff / norm)
}

fn central_difference(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let x = p[i];
            p[i] = x + h;
            let up = f(&p);
            p[i] = x - h;
            let down = f(&p);
            p[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn tiny_batch(rng: &mut ChaCha8Rng, net: &PolicyNetwork, advantages: bool) -> Sequence {
    let mut seq = Sequence {
        observations: vec![],
        actions: vec![],
        old_log_probs: vec![],
        advantages: vec![],
        returns: vec![],
        h0: net.initial_hidden(),
    };
    let mut h = net.initial_hidden();
    for _ in 0..5 {
        let o: Vec<f64> = (0..net.obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = net.step(&o, &mut h);
        let a = net.sample(&out, rng);
        let lp = grasp_cascade::learning::policy::log_prob(&out.mean, &out.log_std, &a);
        seq.observations.push(o);
        seq.actions.push(a);
        seq.old_log_probs.push(lp + rng.gen_range(-0.4..0.4));
        seq.advantages.push(if advantages { rng.gen_range(-2.0..2.0) } else { 0.0 });
        seq.returns.push(rng.gen_range(-1.0..1.0));
    }
    seq
}

fn tiny_policy(rng: &mut ChaCha8Rng) -> PolicyNetwork {
    let cfg = PolicyConfig {
        layers: 1,
        hidden: 8,
        init_log_std: -0.4,
        ..Default::default()
    };
    let mut net = PolicyNetwork::new(6, 3, cfg, rng);
    // move the heads away from their near-zero initialization
    for p in net.params.iter_mut() {
        *p += rng.gen_range(-0.2..0.2);
    }
    net
}

#[test]
fn ppo_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..3 {
        let net = tiny_policy(&mut rng);
        let seq = tiny_batch(&mut rng, &net, true);
        let cfg = PpoConfig::default();
        let (_, g) = ppo_loss(&net, &[&seq], &cfg, true);
        let g = g.unwrap();
        let mut probe = net.clone();
        let fd = central_difference(&net.params, 1e-5, |p| {
            probe.params.copy_from_slice(p);
            ppo_loss(&probe, &[&seq], &cfg, false).0.total
        });
        let (worst, whole) = compare(&g, &fd, 1e-6);
        assert!(worst < 1e-4 && whole < 1e-4, "case {case}: worst {worst:e}, whole {whole:e}");
    }
}

#[test]
fn value_and_entropy_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let net = tiny_policy(&mut rng);
    let seq = tiny_batch(&mut rng, &net, false);
    for (vc, ec) in [(1.0, 0.0), (0.0, 1.0)] {
        let cfg = PpoConfig {
            value_coef: vc,
            entropy_coef: ec,
            ..Default::default()
        };
        let (_, g) = ppo_loss(&net, &[&seq], &cfg, true);
        let g = g.unwrap();
        let mut probe = net.clone();
        let fd = central_difference(&net.params, 1e-5, |p| {
            probe.params.copy_from_slice(p);
            ppo_loss(&probe, &[&seq], &cfg, false).0.total
        });
        let (worst, whole) = compare(&g, &fd, 1e-6);
        assert!(worst < 1e-4 && whole < 1e-4, "value {vc} entropy {ec}: {worst:e} {whole:e}");
    }
}

#[test]
fn stacked_recurrent_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = PolicyConfig {
        layers: 2,
        hidden: 5,
        ..Default::default()
    };
    let net = PolicyNetwork::new(4, 2, cfg, &mut rng);
    let mut seq = tiny_batch(&mut rng, &net, true);
    // start from a non-zero hidden state as a truncated chunk would
    for l in 0..2 {
        for k in 0..5 {
            seq.h0.h[l][k] = rng.gen_range(-0.5..0.5);
            seq.h0.c[l][k] = rng.gen_range(-0.5..0.5);
        }
    }
    let ppo = PpoConfig::default();
    let (_, g) = ppo_loss(&net, &[&seq], &ppo, true);
    let mut probe = net.clone();
    let fd = central_difference(&net.params, 1e-5, |p| {
        probe.params.copy_from_slice(p);
        ppo_loss(&probe, &[&seq], &ppo, false).0.total
    });
    let (worst, whole) = compare(&g.unwrap(), &fd, 1e-6);
    assert!(worst < 1e-4 && whole < 1e-4, "{worst:e} {whole:e}");
}

#[test]
fn discriminator_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut disc = Discriminator::new(5, 2, 8, &mut rng);
    for p in disc.params.iter_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    let sample = |rng: &mut ChaCha8Rng, shift: f64| -> Vec<f64> { (0..7).map(|_| rng.gen_range(-1.0..1.0) + shift).collect() };
    let demo: Vec<Vec<f64>> = (0..6).map(|_| sample(&mut rng, 0.3)).collect();
    let pol: Vec<Vec<f64>> = (0..4).map(|_| sample(&mut rng, -0.3)).collect();
    let d: Vec<&[f64]> = demo.iter().map(|v| v.as_slice()).collect();
    let p: Vec<&[f64]> = pol.iter().map(|v| v.as_slice()).collect();
    let (_, g) = bce_loss(&disc, &d, &p, true);
    let mut probe = disc.clone();
    let fd = central_difference(&disc.params, 1e-5, |q| {
        probe.params.copy_from_slice(q);
        bce_loss(&probe, &d, &p, false).0
    });
    let (worst, whole) = compare(&g.unwrap(), &fd, 1e-6);
    assert!(worst < 1e-4 && whole < 1e-4, "{worst:e} {whole:e}");
}

#[test]
fn discriminator_separates_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut disc = Discriminator::new(3, 1, 16, &mut rng);
    let point = |rng: &mut ChaCha8Rng, side: f64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        v[0] = side * rng.gen_range(0.2..1.0);
        v
    };
    let demo: Vec<Vec<f64>> = (0..200).map(|_| point(&mut rng, 1.0)).collect();
    let pol: Vec<Vec<f64>> = (0..200).map(|_| point(&mut rng, -1.0)).collect();
    let cfg = DiscriminatorConfig {
        updates: 100,
        minibatch: 64,
        learning_rate: 1e-2,
        ..Default::default()
    };
    let mut opt = Adam::new(disc.params.len(), cfg.learning_rate);
    let diag = discriminator_update(&mut disc, &mut opt, &demo, &pol, &cfg, &mut rng).unwrap();
    assert!(diag.accuracy > 0.95, "{diag:?}");
    assert!(diag.loss_after < diag.loss_before);
}

#[test]
fn discriminator_reward_tracks_demo_likeness() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut disc = Discriminator::new(1, 1, 8, &mut rng);
    let demo: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.gen_range(0.5..1.0), 0.0]).collect();
    let pol: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.gen_range(-1.0..-0.5), 0.0]).collect();
    let cfg = DiscriminatorConfig { updates: 200, minibatch: 50, learning_rate: 1e-2, ..Default::default() };
    let mut opt = Adam::new(disc.params.len(), cfg.learning_rate);
    discriminator_update(&mut disc, &mut opt, &demo, &pol, &cfg, &mut rng).unwrap();
    let hi = gail_reward(&disc, &[0.8], &[0.0], 10.0);
    let lo = gail_reward(&disc, &[-0.8], &[0.0], 10.0);
    assert!(hi > lo && hi > 2f64.ln() && lo < 2f64.ln(), "{hi} {lo}");
    assert_eq!(concat(&[1.0], &[2.0]), vec![1.0, 2.0]);
}

fn brute_force_gae(r: &[f64], v: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| r[t] + gamma * if t + 1 < n { v[t + 1] } else { 0.0 } - v[t])
        .collect();
    (0..n)
        .map(|t| (t..n).map(|k| (lambda * gamma).powi((k - t) as i32) * delta[k]).sum())
        .collect()
}

#[test]
fn gae_matches_double_loop_on_random_episodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let episodes: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| 10).collect();
        let (mut r, mut v, mut d) = (vec![], vec![], vec![]);
        for &len in &episodes {
            for t in 0..len {
                r.push(rng.gen_range(-5.0..5.0));
                v.push(rng.gen_range(-5.0..5.0));
                d.push(t + 1 == len);
            }
        }
        let out = gae(&r, &v, &d, 0.99, 0.95).unwrap();
        let mut start = 0;
        for &len in &episodes {
            let want = brute_force_gae(&r[start..start + len], &v[start..start + len], 0.99, 0.95);
            for t in 0..len {
                assert!((out.advantages[start + t] - want[t]).abs() < 1e-10);
                assert!((out.returns[start + t] - (want[t] + v[start + t])).abs() < 1e-10);
            }
            start += len;
        }
    }
}

fn one_step_sequences(net: &PolicyNetwork, rng: &mut ChaCha8Rng, reward: impl Fn(f64) -> f64) -> (Vec<Sequence>, f64) {
    let mut seqs = Vec::new();
    let mut mean = 0.0;
    for _ in 0..64 {
        let obs = vec![1.0];
        let mut h = net.initial_hidden();
        let out = net.step(&obs, &mut h);
        mean = out.mean[0];
        let a = net.sample(&out, rng);
        let lp = grasp_cascade::learning::policy::log_prob(&out.mean, &out.log_std, &a);
        let r = reward(a[0]);
        seqs.push(Sequence {
            observations: vec![obs],
            actions: vec![a],
            old_log_probs: vec![lp],
            advantages: vec![r - out.value],
            returns: vec![r],
            h0: net.initial_hidden(),
        });
    }
    (seqs, mean)
}

#[test]
fn ppo_drives_bandit_mean_to_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut net = PolicyNetwork::new(1, 1, PolicyConfig { layers: 1, hidden: 8, ..Default::default() }, &mut rng);
    net.mean_bias_mut()[0] = 1.0;
    let cfg = PpoConfig {
        learning_rate: 3e-3,
        minibatch: 32,
        ..Default::default()
    };
    let mut opt = Adam::new(net.params.len(), cfg.learning_rate);
    let mut mean = 1.0;
    for _ in 0..200 {
        let (seqs, m) = one_step_sequences(&net, &mut rng, |a| -a * a);
        mean = m;
        policy_update(&mut net, &mut opt, seqs, &cfg, &mut rng).unwrap();
    }
    assert!(mean.abs() < 0.05, "mean action {mean}");
}

#[test]
fn value_head_converges_to_monte_carlo_return() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let n = 10;
    let gamma: f64 = 0.9;
    let mut net = PolicyNetwork::new(n, 1, PolicyConfig { layers: 1, hidden: 16, ..Default::default() }, &mut rng);
    let cfg = PpoConfig {
        learning_rate: 1e-2,
        entropy_coef: 0.0,
        max_grad_norm: 10.0,
        ..Default::default()
    };
    let mut opt = Adam::new(net.params.len(), cfg.learning_rate);
    // deterministic chain: state t is one-hot t, reward 1 per step, n steps
    let obs: Vec<Vec<f64>> = (0..n).map(|t| (0..n).map(|k| if k == t { 1.0 } else { 0.0 }).collect()).collect();
    let mc: Vec<f64> = (0..n).map(|t| (0..n - t).map(|k| gamma.powi(k as i32)).sum()).collect();
    for _ in 0..300 {
        let seq = Sequence {
            observations: obs.clone(),
            actions: vec![vec![0.0]; n],
            old_log_probs: vec![0.0; n],
            advantages: vec![0.0; n],
            returns: mc.clone(),
            h0: net.initial_hidden(),
        };
        policy_update(&mut net, &mut opt, vec![seq], &cfg, &mut rng).unwrap();
    }
    let mut h = net.initial_hidden();
    for t in 0..n {
        let v = net.step(&obs[t], &mut h).value;
        assert!((v - mc[t]).abs() < 0.05 * mc[t], "t {t}: {v} vs {}", mc[t]);
    }
}
