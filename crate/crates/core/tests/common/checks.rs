//! Oracle checks shared by the unit-level suites and the acceptance gate.
//! Each returns a measured error (or a verdict) instead of asserting.

use codev_core::agent::{Agent, AgentConfig, CuriosityIndex, Transitions};
use codev_core::analysis::{dream_from_episode, pca};
use codev_core::fe::{kld_diag, DiagonalGaussian, IntrinsicConfig, Modality};
use codev_core::fm::{FmConfig, ForwardModel};
use codev_core::graph::Graph;
use codev_core::harness::{run_episode, LearnedController};
use codev_core::language::{generate_split, ScaleConfig};
use codev_core::nn::ParamSet;
use codev_core::replay::EpisodeRecord;
use codev_core::rng::{fill_normal, stream_rng};
use codev_core::tensor::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use super::*;

/// Coordinates per finite-difference check.
pub const FD_CHECKS: usize = 200;

fn log_normal(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// ∫ q (log q − log p) by composite Simpson over ±14σ_q.
pub fn kld_quadrature(mq: f64, sq: f64, mp: f64, sp: f64, intervals: usize) -> f64 {
    let (lo, hi) = (mq - 14.0 * sq, mq + 14.0 * sq);
    let h = (hi - lo) / intervals as f64;
    let f = |x: f64| {
        let lq = log_normal(x, mq, sq);
        lq.exp() * (lq - log_normal(x, mp, sp))
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..intervals {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

pub fn gauss1(m: f64, s: f64) -> DiagonalGaussian {
    DiagonalGaussian::new(vec![m], vec![s]).unwrap()
}

/// Worst |closed form − quadrature| over 100 random 1-D pairs.
pub fn kld_random_pairs_error() -> f64 {
    let mut rng = stream_rng(11, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (mq, mp) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let (sq, sp) = (rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
        let closed = kld_diag(&gauss1(mq, sq), &gauss1(mp, sp)).unwrap();
        worst = worst.max((closed - kld_quadrature(mq, sq, mp, sp, 20_000)).abs());
    }
    worst
}

/// Errors of the closed form on the unit shift (0.5) and the doubled scale
/// (1.5 − ln 2 ≈ 0.80685).
pub fn kld_analytic_errors() -> [f64; 2] {
    let shift = kld_diag(&gauss1(0.0, 1.0), &gauss1(1.0, 1.0)).unwrap();
    let wide = kld_diag(&gauss1(0.0, 2.0), &gauss1(0.0, 1.0)).unwrap();
    [(shift - 0.5).abs(), (wide - (1.5 - 2f64.ln())).abs()]
}

/// Worst relative error of ∂F/∂θ on the micro forward model.
pub fn free_energy_fd() -> f64 {
    let mut rng = stream_rng(1, 0);
    let mut model = ForwardModel::new(FmConfig::micro(), &mut rng).unwrap();
    let lay = model.layout();
    let batch = batch_of(&[random_episode(&lay, 30, 2), random_episode(&lay, 6, 3), random_episode(&lay, 1, 4)]);
    let noise = model.draw_noise(batch.size(), &mut rng);
    let (_, grads) = model.free_energy_and_grads(&batch, Some(&noise));
    let probe = model.clone();
    finite_difference_check(&mut model.params, &grads, FD_CHECKS, 5, &mut |p: &ParamSet| {
        let mut m = probe.clone();
        m.params = p.clone();
        m.free_energy_and_grads(&batch, Some(&noise)).0.free_energy
    })
}

/// Worst relative error of the summed posterior-prior KLD with respect to
/// the posterior heads.
pub fn posterior_kld_fd() -> f64 {
    let mut rng = stream_rng(2, 0);
    let model = ForwardModel::new(FmConfig::micro(), &mut rng).unwrap();
    let lay = model.layout();
    let c = model.config;
    let obs = Tensor::from_rows(&[random_observation(&lay, &mut rng), random_observation(&lay, &mut rng)]);
    let mut h = Tensor::zeros(2, c.hidden);
    fill_normal(&mut rng, h.data_mut());
    let a = Tensor::from_vec(2, 4, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let kld = |m: &ForwardModel, trainable: bool| {
        let mut g = Graph::new();
        let p = m.params.bind(&mut g, trainable);
        let (hv, av, ov) = (g.constant(h.clone()), g.constant(a.clone()), g.constant(obs.clone()));
        let a_enc = m.encode_action(&mut g, &p, av);
        let enc = m.encode(&mut g, &p, ov);
        let prior = m.compute_prior(&mut g, &p, hv, a_enc);
        let mut total = None;
        for mo in Modality::ALL {
            let q = m.compute_posterior(&mut g, &p, mo, hv, a_enc, enc.0[mo.index()]);
            let pr = prior[mo.index()];
            let k = g.kld_diag(q.mean, q.std, pr.mean, pr.std);
            let s = g.sum(k);
            total = Some(match total {
                None => s,
                Some(t) => g.add(t, s),
            });
        }
        let total = total.unwrap();
        let v = g.scalar(total);
        (v, trainable.then(|| p.grads(&g.backward(total), &m.params)))
    };
    let grads = kld(&model, true).1.unwrap();
    let mut heads = ParamSet::new();
    let mut head_grads = Vec::new();
    let mut map = Vec::new();
    for (id, (name, t)) in model.params.ids().zip(model.params.iter()) {
        if name.starts_with("fm.posterior.") {
            heads.add(name, t.clone());
            head_grads.push(grads[id.index()].clone());
            map.push(id);
        }
    }
    let probe = model.clone();
    finite_difference_check(&mut heads, &head_grads, FD_CHECKS, 6, &mut |p: &ParamSet| {
        let mut m = probe.clone();
        for (local, &id) in p.ids().zip(&map) {
            *m.params.get_mut(id) = p.get(local).clone();
        }
        kld(&m, false).0
    })
}

/// Random transitions for a 5-dim state with a ragged mask.
pub fn toy_transitions(seed: u64) -> Transitions {
    let mut rng = stream_rng(seed, 0);
    let b = 3;
    let rows = 30 * b;
    let mut t = |cols: usize, lo: f64, hi: f64| Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect());
    let state = t(5, -1.0, 1.0);
    let next_state = t(5, -1.0, 1.0);
    let action = t(4, -0.9, 0.9);
    let reward = t(1, 0.0, 1.0);
    let curiosity = t(1, 0.0, 0.5);
    let lens = [30, 9, 2];
    let mut mask = Tensor::zeros(rows, 1);
    let mut done = Tensor::zeros(rows, 1);
    for step in 0..30 {
        for (e, &len) in lens.iter().enumerate() {
            let r = step * b + e;
            mask.set(r, 0, if step < len { 1.0 } else { 0.0 });
            done.set(r, 0, if step + 1 == len { 1.0 } else { 0.0 });
        }
    }
    Transitions { state, next_state, action, reward, curiosity, done, mask }
}

/// Actor and critics small enough to check every coordinate.
pub fn toy_agent(seed: u64) -> Agent {
    Agent::new(AgentConfig::new(5, 3, IntrinsicConfig::new(IntrinsicConfig::ALL)), &mut stream_rng(seed, 0)).unwrap()
}

pub fn critic_loss_fd() -> f64 {
    let mut agent = toy_agent(3);
    let tr = toy_transitions(4);
    let y = agent.td_targets(&tr, &tr.draw_noise(&mut stream_rng(5, 0)));
    let (_, grads) = agent.critic_loss(&tr, &y);
    let probe = agent.clone();
    finite_difference_check(&mut agent.critics.params, &grads, FD_CHECKS, 7, &mut |p: &ParamSet| {
        let mut a = probe.clone();
        a.critics.params = p.clone();
        a.critic_loss(&tr, &y).0
    })
}

pub fn actor_loss_fd() -> f64 {
    let mut agent = toy_agent(8);
    let tr = toy_transitions(9);
    let eps = tr.draw_noise(&mut stream_rng(10, 0));
    let (_, _, grads) = agent.actor_loss(&tr, &eps);
    let probe = agent.clone();
    finite_difference_check(&mut agent.actor.params, &grads, FD_CHECKS, 11, &mut |p: &ParamSet| {
        let mut a = probe.clone();
        a.actor.params = p.clone();
        a.actor_loss(&tr, &eps).0
    })
}

/// Everything a batch feeds into: F, the three losses and their gradients.
#[derive(Debug, PartialEq)]
pub struct Losses {
    pub free_energy: f64,
    pub fm_grads: Vec<Tensor>,
    pub critic: f64,
    pub critic_grads: Vec<Tensor>,
    pub actor: f64,
    pub actor_grads: Vec<Tensor>,
}

fn losses(model: &ForwardModel, agent: &Agent, episodes: &[EpisodeRecord]) -> Losses {
    let batch = batch_of(episodes);
    let mut rng = stream_rng(42, 0);
    let noise = model.draw_noise(batch.size(), &mut rng);
    let (pass, fm_grads) = model.free_energy_and_grads(&batch, Some(&noise));
    let tr = agent.transitions(&pass, &batch);
    let eps = tr.draw_noise(&mut rng);
    let y = agent.td_targets(&tr, &eps);
    let (critic, critic_grads) = agent.critic_loss(&tr, &y);
    let (actor, _, actor_grads) = agent.actor_loss(&tr, &eps);
    Losses { free_energy: pass.free_energy, fm_grads, critic, critic_grads, actor, actor_grads }
}

/// Losses of a ragged batch before and after overwriting every padded field.
pub fn mask_pair(index: CuriosityIndex) -> (Losses, Losses) {
    let mut rng = stream_rng(1, 0);
    let model = ForwardModel::new(FmConfig::micro(), &mut rng).unwrap();
    let mut cfg = AgentConfig::new(model.config.hidden, 4, IntrinsicConfig::new(IntrinsicConfig::ALL));
    cfg.curiosity_index = index;
    let agent = Agent::new(cfg, &mut rng).unwrap();
    let lay = model.layout();
    let clean: Vec<_> = [(30, 1), (12, 2), (1, 3), (5, 4)].iter().map(|&(len, s)| random_episode(&lay, len, s)).collect();
    let mut dirty = clean.clone();
    for (i, ep) in dirty.iter_mut().enumerate() {
        perturb_padding(ep, i as u64);
    }
    assert_ne!(clean, dirty);
    (losses(&model, &agent, &clean), losses(&model, &agent, &dirty))
}

pub fn random_matrix(n: usize, d: usize, seed: u64) -> Tensor {
    let mut t = Tensor::zeros(n, d);
    fill_normal(&mut stream_rng(seed, 0), t.data_mut());
    // spread the spectrum
    for r in 0..n {
        for c in 0..d {
            let v = t.get(r, c) * (1.0 + c as f64);
            t.set(r, c, v);
        }
    }
    t
}

/// Top-`k` eigenpairs of the sample covariance from nalgebra, sign-normalised
/// so the largest-magnitude loading is positive.
pub fn reference_components(data: &Tensor, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (n, d) = data.shape();
    let m = DMatrix::from_row_slice(n, d, data.data());
    let mean = m.row_mean();
    let centred = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let comps = idx[..k]
        .iter()
        .map(|&c| {
            let col: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let big = col.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            col.iter().map(|x| x * big.signum()).collect()
        })
        .collect();
    (comps, idx[..k].iter().map(|&c| eig.eigenvalues[c]).collect())
}

/// Worst component difference between `pca` and the dense solver over `seeds`
/// random `n × d` matrices.
pub fn pca_oracle_error(seeds: std::ops::Range<u64>, n: usize, d: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let data = random_matrix(n, d, seed);
        let p = pca(&data, 2).unwrap();
        let (comps, vals) = reference_components(&data, 2);
        for k in 0..2 {
            for j in 0..d {
                worst = worst.max((p.components.get(k, j) - comps[k][j]).abs());
            }
            worst = worst.max((p.explained_variance[k] - vals[k]).abs() / vals[k].max(1.0));
        }
    }
    worst
}

/// Dream wiring verdicts: frame 0 equals the genuine frame bitwise, tainting
/// later genuine frames changes nothing, and every later input is the
/// previous prediction.
pub fn dream_wiring() -> (bool, bool, bool) {
    let mut rng = stream_rng(31, 0);
    let cfg = FmConfig::micro();
    let model = ForwardModel::new(cfg, &mut rng).unwrap();
    let agent = Agent::new(AgentConfig::new(cfg.hidden, 4, IntrinsicConfig::default()), &mut rng).unwrap();
    let scale = ScaleConfig::new(2, 2, 2).unwrap();
    let sentence = generate_split(scale, 2).train[0];
    let env = codev_core::env::EnvConfig { vision_size: cfg.vision_size };
    let layout = model.layout();
    let mut ctrl = LearnedController::deterministic(&model, &agent);
    let ep = run_episode(&mut ctrl, sentence, scale, env, &layout, 17).unwrap();
    let mut genuine = ep.observations.clone();
    let clean = dream_from_episode(&model, &agent.actor, &genuine, 12).unwrap();
    for obs in genuine.iter_mut().skip(1) {
        obs.iter_mut().for_each(|x| *x = 1.0 - *x);
    }
    let tainted = dream_from_episode(&model, &agent.actor, &genuine, 12).unwrap();
    let bits = |xs: &[f64]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let frame0 = bits(layout.slice(&clean[0].input, Modality::Vision)) == bits(layout.slice(&ep.observations[0], Modality::Vision));
    let chained = (1..clean.len()).all(|t| clean[t].input == clean[t - 1].prediction.to_observation());
    (frame0, clean == tainted, chained)
}
