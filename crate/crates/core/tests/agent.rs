use codev_core::agent::{Actor, Agent, AgentConfig, CriticPair, Transitions};
use codev_core::fe::IntrinsicConfig;
use codev_core::graph::Graph;
use codev_core::rng::{fill_normal, stream_rng};
use codev_core::tensor::Tensor;
use rand::Rng;

fn transitions(seed: u64, done_every: usize) -> Transitions {
    let mut rng = stream_rng(seed, 0);
    let rows = 60;
    let mut t = |cols: usize, lo: f64, hi: f64| Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect());
    let state = t(6, -1.0, 1.0);
    let next_state = t(6, -1.0, 1.0);
    let action = t(4, -0.9, 0.9);
    let reward = t(1, 0.0, 1.0);
    let curiosity = t(1, 0.0, 0.5);
    let done = Tensor::from_vec(rows, 1, (0..rows).map(|r| if r % done_every == 0 { 1.0 } else { 0.0 }).collect());
    Transitions { state, next_state, action, reward, curiosity, done, mask: Tensor::filled(rows, 1, 1.0) }
}

fn agent(seed: u64, intrinsic: IntrinsicConfig) -> Agent {
    Agent::new(AgentConfig::new(6, 16, intrinsic), &mut stream_rng(seed, 0)).unwrap()
}

#[test]
fn deterministic_mode_ignores_noise_streams() {
    let a = agent(1, IntrinsicConfig::default());
    let h = [0.2, -0.4, 0.1, 0.9, -1.0, 0.0];
    let (x, lp) = a.actor.act(&h, None);
    assert!(lp.is_none());
    assert_eq!(x, a.actor.act(&h, None).0);
    let mut g = Graph::new();
    let p = a.actor.params.bind(&mut g, false);
    let hv = g.constant(Tensor::row_vector(&h));
    let (mean, _) = a.actor.distribution(&mut g, &p, hv);
    let expect: Vec<f64> = g.value(mean).data().iter().map(|m| m.tanh()).collect();
    assert_eq!(x.to_vec(), expect);
}

#[test]
fn sampled_log_probabilities_match_a_density_estimate() {
    let actor = Actor::new(6, 16, &mut stream_rng(2, 0));
    let n = 100_000;
    let h = Tensor::from_vec(n, 6, [0.5, -0.3, 0.8, 0.0, -0.6, 0.2].repeat(n));
    let mut eps = Tensor::zeros(n, 4);
    fill_normal(&mut stream_rng(2, 1), eps.data_mut());
    let mut g = Graph::new();
    let p = actor.params.bind(&mut g, false);
    let hv = g.constant(h);
    let s = actor.sample(&mut g, &p, hv, &eps);
    let (acts, lps) = (g.value(s.action), g.value(s.log_prob));
    let analytic = lps.data().iter().sum::<f64>() / n as f64;

    // independent per-dimension histograms of the squashed actions
    let bins = 400;
    let width = 2.0 / bins as f64;
    let bin = |a: f64| (((a + 1.0) / width) as usize).min(bins - 1);
    let mut counts = vec![vec![0usize; bins]; 4];
    for r in 0..n {
        for d in 0..4 {
            counts[d][bin(acts.get(r, d))] += 1;
        }
    }
    let estimate = (0..n)
        .map(|r| (0..4).map(|d| (counts[d][bin(acts.get(r, d))] as f64 / (n as f64 * width)).ln()).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    assert!(analytic.abs() > 0.3, "degenerate fixture {analytic}");
    assert!((analytic - estimate).abs() < 0.01 * analytic.abs(), "analytic {analytic} vs histogram {estimate}");
}

#[test]
fn done_steps_drop_the_bootstrap() {
    let a = agent(3, IntrinsicConfig::new(IntrinsicConfig::ALL));
    let mut b = a.clone();
    // different target critics change only bootstrapped rows
    let id = b.critics.targets.find("critic1.2.bias").unwrap();
    b.critics.targets.get_mut(id).data_mut()[0] += 5.0;
    let id = b.critics.targets.find("critic2.2.bias").unwrap();
    b.critics.targets.get_mut(id).data_mut()[0] += 5.0;
    let tr = transitions(4, 3);
    let eps = tr.draw_noise(&mut stream_rng(4, 1));
    let (ya, yb) = (a.td_targets(&tr, &eps), b.td_targets(&tr, &eps));
    for r in 0..tr.rows() {
        if tr.done.get(r, 0) == 1.0 {
            assert_eq!(ya.get(r, 0), yb.get(r, 0));
        } else {
            assert!((yb.get(r, 0) - ya.get(r, 0) - 0.99 * 5.0).abs() < 1e-9);
        }
    }
}

#[test]
fn without_curiosity_targets_are_the_entropy_regularised_bootstrap() {
    let a = agent(5, IntrinsicConfig::default());
    let mut tr = transitions(6, 4);
    tr.curiosity = Tensor::zeros(tr.rows(), 1);
    let eps = tr.draw_noise(&mut stream_rng(6, 1));
    let y = a.td_targets(&tr, &eps);
    let mut g = Graph::new();
    let pa = a.actor.params.bind(&mut g, false);
    let pt = a.critics.targets.bind(&mut g, false);
    let next = g.constant(tr.next_state.clone());
    let s = a.actor.sample(&mut g, &pa, next, &eps);
    let (q1, q2) = a.critics.q(&mut g, &pt, next, s.action);
    for r in 0..tr.rows() {
        let q = g.value(q1).get(r, 0).min(g.value(q2).get(r, 0));
        let h = -g.value(s.log_prob).get(r, 0);
        let boot = if tr.done.get(r, 0) == 1.0 { 0.0 } else { 0.99 * q };
        let expect = tr.reward.get(r, 0) + 0.05 * h + boot;
        assert!((y.get(r, 0) - expect).abs() < 1e-12);
    }
}

#[test]
fn actor_step_leaves_critics_alone_and_descends() {
    let mut a = agent(7, IntrinsicConfig::default());
    let tr = transitions(8, 5);
    let eps = tr.draw_noise(&mut stream_rng(8, 1));
    let critics = a.critics.params.checksum();
    let targets = a.critics.targets.checksum();
    let first = a.actor_loss(&tr, &eps).0;
    let mut opt = codev_core::nn::Adam::new(&a.actor.params, 1e-3);
    for _ in 0..50 {
        let (_, _, grads) = a.actor_loss(&tr, &eps);
        opt.step(&mut a.actor.params, &grads);
    }
    assert!(a.actor_loss(&tr, &eps).0 < first);
    let mut rng = stream_rng(8, 2);
    a.actor_update(&tr, &mut rng, 1).unwrap();
    assert_eq!(a.critics.params.checksum(), critics);
    assert_eq!(a.critics.targets.checksum(), targets);
}

#[test]
fn zero_alpha_drops_the_entropy_term() {
    let mut ic = IntrinsicConfig::default();
    ic.alpha = 0.0;
    let a = agent(9, ic);
    let tr = transitions(10, 6);
    let eps = tr.draw_noise(&mut stream_rng(10, 1));
    let (loss, _, _) = a.actor_loss(&tr, &eps);
    let mut g = Graph::new();
    let pa = a.actor.params.bind(&mut g, false);
    let pc = a.critics.params.bind(&mut g, false);
    let h = g.constant(tr.state.clone());
    let s = a.actor.sample(&mut g, &pa, h, &eps);
    let (q1, q2) = a.critics.q(&mut g, &pc, h, s.action);
    let q = g.min(q1, q2);
    let neg = g.scale(q, -1.0);
    let m = g.constant(tr.mask.clone());
    let masked = g.mul(neg, m);
    let total = g.sum(masked);
    let mean = g.scale(total, 1.0 / tr.rows() as f64);
    assert_eq!(loss.to_bits(), g.scalar(mean).to_bits());
}

#[test]
fn polyak_blend_is_elementwise_convex() {
    let mut c = CriticPair::new(6, 8, &mut stream_rng(11, 0));
    let mut rng = stream_rng(11, 1);
    for id in c.params.ids().collect::<Vec<_>>() {
        c.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x += rng.gen_range(-1.0..1.0));
    }
    let before = c.targets.clone();
    c.polyak_update(0.005);
    for id in c.params.ids() {
        for ((t, b), p) in c.targets.get(id).data().iter().zip(before.get(id).data()).zip(c.params.get(id).data()) {
            assert!((t - (0.005 * p + 0.995 * b)).abs() < 1e-15);
        }
    }
}

#[test]
fn target_lag_shrinks_geometrically() {
    let mut c = CriticPair::new(6, 8, &mut stream_rng(12, 0));
    let mut rng = stream_rng(12, 1);
    for id in c.params.ids().collect::<Vec<_>>() {
        c.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x += rng.gen_range(-1.0..1.0));
    }
    let d0 = c.targets.distance(&c.params);
    let k = 200;
    for _ in 0..k {
        c.polyak_update(0.005);
    }
    let ratio = c.targets.distance(&c.params) / d0;
    assert!((ratio - 0.995f64.powi(k)).abs() < 1e-9, "{ratio}");
}

#[test]
fn fixed_alpha_is_constant() {
    let mut a = agent(13, IntrinsicConfig::default());
    for h in [-10.0, 0.0, 10.0] {
        assert_eq!(a.alpha_update(h).to_bits(), 0.05f64.to_bits());
    }
    let mut cfg = a.config;
    cfg.target_entropy = Some(-4.0);
    let mut dynamic = Agent::new(cfg, &mut stream_rng(13, 1)).unwrap();
    let start = dynamic.alpha();
    let up = dynamic.alpha_update(-6.0);
    assert!(up > start);
    let down = dynamic.alpha_update(0.0);
    assert!(down < up);
}
