//! Twin-critic soft actor-critic acting on the forward model's hidden state.
//!
//! Critics regress onto
//! `r + curiosity + α·H(π(·|h_{t+1})) + γ(1 − done)·min Q̄(h_{t+1}, a')`
//! and the actor minimises `α·log π − min(Q₁, Q₂)`. Every loss averages over
//! real (unmasked) steps only.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::fe::{self, IntrinsicConfig, Modality};
use crate::fm::{Policy, ReplayPass};
use crate::graph::{Graph, Var};
use crate::nn::{Adam, Bound, Dense, Linear, ParamSet};
use crate::replay::{Batch, ACTION_DIM};
use crate::rng::fill_normal;
use crate::tensor::Tensor;
use crate::EPISODE_STEPS;

const STD_FLOOR: f64 = 1e-4;
/// Exploration std of a freshly built actor.
pub const INITIAL_STD: f64 = 0.05;

/// Which KLD pays the curiosity reward of step `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CuriosityIndex {
    /// The KLD of the filtering step that produced `h_t`.
    #[default]
    Current,
    /// The KLD of the following step, i.e. the surprise caused by `a_t`.
    Next,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentConfig {
    /// Width of the hidden state fed to actor and critics.
    pub state_dim: usize,
    pub width: usize,
    pub lr: f64,
    pub intrinsic: IntrinsicConfig,
    pub curiosity_index: CuriosityIndex,
    /// `Some(target)` enables the learned entropy weight.
    pub target_entropy: Option<f64>,
    pub alpha_lr: f64,
}

impl AgentConfig {
    pub fn new(state_dim: usize, width: usize, intrinsic: IntrinsicConfig) -> Self {
        Self {
            state_dim,
            width,
            lr: 3e-4,
            intrinsic,
            curiosity_index: CuriosityIndex::Current,
            target_entropy: None,
            alpha_lr: 3e-4,
        }
    }
}

/// Gaussian policy over `u`, squashed by `tanh`.
#[derive(Debug, Clone)]
pub struct Actor {
    pub params: ParamSet,
    l1: Dense,
    l2: Dense,
    out: Linear,
}

/// Graph nodes of a reparameterised policy sample.
#[derive(Clone, Copy, Debug)]
pub struct PolicySample {
    pub action: Var,
    /// `rows × 1`.
    pub log_prob: Var,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, width: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let l1 = Dense::new(&mut params, "actor.0", state_dim, width, rng);
        let l2 = Dense::new(&mut params, "actor.1", width, width, rng);
        let out = Linear::new(&mut params, "actor.2", width, 2 * ACTION_DIM, rng);
        // start near the zero command with narrow noise; wide tanh noise
        // almost never completes a goal within 30 steps
        params.get_mut(out.w).data_mut().iter_mut().for_each(|w| *w *= 1e-2);
        let raw_std = libm::log(libm::expm1(INITIAL_STD - STD_FLOOR));
        for (i, b) in params.get_mut(out.b).data_mut().iter_mut().enumerate() {
            *b = if i < ACTION_DIM { 0.0 } else { raw_std };
        }
        Self { params, l1, l2, out }
    }

    /// `(mean, std)` of the pre-squash Gaussian.
    pub fn distribution(&self, g: &mut Graph, p: &Bound, h: Var) -> (Var, Var) {
        let y = self.l1.forward(g, p, h);
        let y = self.l2.forward(g, p, y);
        let y = self.out.forward(g, p, y);
        let mean = g.slice(y, 0, ACTION_DIM);
        let raw = g.slice(y, ACTION_DIM, ACTION_DIM);
        let sp = g.softplus(raw);
        (mean, g.add_scalar(sp, STD_FLOOR))
    }

    /// `a = tanh(μ + σ ε)` and its log-density with the squash correction.
    pub fn sample(&self, g: &mut Graph, p: &Bound, h: Var, eps: &Tensor) -> PolicySample {
        let (mean, std) = self.distribution(g, p, h);
        let e = g.constant(eps.clone());
        let se = g.mul(std, e);
        let u = g.add(mean, se);
        let action = g.tanh(u);
        // log N(u; μ, σ) = −ε²/2 − ln σ − ln(2π)/2
        let e2 = g.constant(eps.map(|x| -0.5 * x * x));
        let ln_std = g.ln(std);
        let gauss = g.sub(e2, ln_std);
        // log(1 − tanh²u) = 2(ln 2 − u − softplus(−2u))
        let m2u = g.scale(u, -2.0);
        let sp = g.softplus(m2u);
        let t = g.add(u, sp);
        let t = g.scale(t, -2.0);
        let corr = g.add_scalar(t, 2.0 * core::f64::consts::LN_2);
        let per = g.sub(gauss, corr);
        let lp = g.sum_cols(per);
        let log_prob = g.add_scalar(lp, -0.5 * ACTION_DIM as f64 * libm::log(core::f64::consts::TAU));
        PolicySample { action, log_prob }
    }

    /// Acts on one hidden state. `eps = None` gives the deterministic `tanh(μ)`.
    pub fn act(&self, h: &[f64], eps: Option<&[f64; ACTION_DIM]>) -> ([f64; ACTION_DIM], Option<f64>) {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let hv = g.constant(Tensor::row_vector(h));
        match eps {
            None => {
                let (mean, _) = self.distribution(&mut g, &p, hv);
                let m = g.value(mean).data();
                (core::array::from_fn(|i| libm::tanh(m[i])), None)
            }
            Some(e) => {
                let s = self.sample(&mut g, &p, hv, &Tensor::row_vector(e));
                let a = g.value(s.action).data();
                (core::array::from_fn(|i| a[i]), Some(g.scalar(s.log_prob)))
            }
        }
    }
}

impl Policy for Actor {
    fn act(&self, h: &[f64]) -> [f64; ACTION_DIM] {
        Actor::act(self, h, None).0
    }
}

#[derive(Debug, Clone)]
struct Critic {
    l1: Dense,
    l2: Dense,
    out: Linear,
}

impl Critic {
    fn new<R: Rng + ?Sized>(ps: &mut ParamSet, name: &str, inputs: usize, width: usize, rng: &mut R) -> Self {
        Self {
            l1: Dense::new(ps, &alloc::format!("{name}.0"), inputs, width, rng),
            l2: Dense::new(ps, &alloc::format!("{name}.1"), width, width, rng),
            out: Linear::new(ps, &alloc::format!("{name}.2"), width, 1, rng),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = self.l1.forward(g, p, x);
        let y = self.l2.forward(g, p, y);
        self.out.forward(g, p, y)
    }
}

/// Two critics and their slowly tracking targets.
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub params: ParamSet,
    pub targets: ParamSet,
    q1: Critic,
    q2: Critic,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, width: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let q1 = Critic::new(&mut params, "critic1", state_dim + ACTION_DIM, width, rng);
        let q2 = Critic::new(&mut params, "critic2", state_dim + ACTION_DIM, width, rng);
        let targets = params.clone();
        Self { params, targets, q1, q2 }
    }

    /// Both critics on `(h, a)`, `rows × 1` each.
    pub fn q(&self, g: &mut Graph, p: &Bound, h: Var, a: Var) -> (Var, Var) {
        let x = g.concat(&[h, a]);
        (self.q1.forward(g, p, x), self.q2.forward(g, p, x))
    }

    /// `θ̄ ← τ θ + (1 − τ) θ̄`.
    pub fn polyak_update(&mut self, tau: f64) {
        self.targets.blend_from(&self.params, tau);
    }
}

/// Every step of a batch flattened to `30·B` rows, step-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    pub state: Tensor,
    pub next_state: Tensor,
    pub action: Tensor,
    pub reward: Tensor,
    pub curiosity: Tensor,
    pub done: Tensor,
    pub mask: Tensor,
}

fn stack(parts: &[Tensor]) -> Tensor {
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_rows(&refs)
}

/// `Σ η_i KLD_i` per row of a `B × 5` KLD matrix.
pub fn curiosity_column(klds: &Tensor, eta: &[f64; 4]) -> Tensor {
    let mut out = Tensor::zeros(klds.rows(), 1);
    for r in 0..klds.rows() {
        let row = klds.row(r);
        let k: [f64; 5] = core::array::from_fn(|i| row[i]);
        out.set(r, 0, fe::curiosity(&k, eta));
    }
    out
}

impl Transitions {
    pub fn new(pass: &ReplayPass, batch: &Batch, eta: &[f64; 4], index: CuriosityIndex) -> Self {
        let steps = 0..EPISODE_STEPS;
        let cur: Vec<Tensor> = steps
            .clone()
            .map(|t| {
                let k = match index {
                    CuriosityIndex::Current => &pass.klds[t],
                    CuriosityIndex::Next => &pass.klds[t + 1],
                };
                // padded rows stay exactly zero
                curiosity_column(k, eta).zip_map(&batch.mask[t], |c, m| if m > 0.0 { c } else { 0.0 })
            })
            .collect();
        Self {
            state: stack(&pass.hidden[..EPISODE_STEPS]),
            next_state: stack(&pass.hidden[1..]),
            action: stack(&batch.actions),
            reward: stack(&batch.rewards),
            curiosity: stack(&cur),
            done: stack(&batch.done),
            mask: stack(&batch.mask),
        }
    }

    pub fn rows(&self) -> usize {
        self.state.rows()
    }

    pub fn real_steps(&self) -> f64 {
        self.mask.sum()
    }

    /// Mean curiosity over real steps.
    pub fn mean_curiosity(&self) -> f64 {
        self.curiosity.sum() / self.real_steps().max(1.0)
    }

    pub fn mean_reward(&self) -> f64 {
        let r = self.reward.zip_map(&self.mask, |r, m| r * m);
        r.sum() / self.real_steps().max(1.0)
    }

    /// Standard normal noise for one policy sample per row.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Tensor {
        let mut t = Tensor::zeros(self.rows(), ACTION_DIM);
        fill_normal(rng, t.data_mut());
        t
    }
}

/// Losses and diagnostics of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Mean `−log π` over real steps at the actor update.
    pub entropy: f64,
    pub alpha: f64,
}

/// Actor, critics, optimisers and entropy weight.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub actor: Actor,
    pub critics: CriticPair,
    actor_opt: Adam,
    critic_opt: Adam,
    log_alpha: f64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.intrinsic.validate()?;
        let actor = Actor::new(config.state_dim, config.width, rng);
        let critics = CriticPair::new(config.state_dim, config.width, rng);
        let actor_opt = Adam::new(&actor.params, config.lr);
        let critic_opt = Adam::new(&critics.params, config.lr);
        let log_alpha = libm::log(config.intrinsic.alpha);
        Ok(Self { config, actor, critics, actor_opt, critic_opt, log_alpha })
    }

    pub fn alpha(&self) -> f64 {
        if self.config.target_entropy.is_some() {
            libm::exp(self.log_alpha)
        } else {
            self.config.intrinsic.alpha
        }
    }

    /// TD targets `30·B × 1`, built without gradient.
    pub fn td_targets(&self, tr: &Transitions, next_eps: &Tensor) -> Tensor {
        let ic = &self.config.intrinsic;
        let alpha = self.alpha();
        let mut g = Graph::new();
        let pa = self.actor.params.bind(&mut g, false);
        let pt = self.critics.targets.bind(&mut g, false);
        let next = g.constant(tr.next_state.clone());
        let s = self.actor.sample(&mut g, &pa, next, next_eps);
        let (q1, q2) = self.critics.q(&mut g, &pt, next, s.action);
        let q = g.min(q1, q2);
        let (q, lp) = (g.value(q), g.value(s.log_prob));
        let mut y = Tensor::zeros(tr.rows(), 1);
        for r in 0..tr.rows() {
            let v = fe::q_target(
                tr.reward.get(r, 0),
                tr.curiosity.get(r, 0),
                -lp.get(r, 0),
                q.get(r, 0),
                tr.done.get(r, 0) > 0.5,
                ic.gamma,
                alpha,
            );
            y.set(r, 0, v);
        }
        y
    }

    /// Masked mean of `½(Q₁ − y)² + ½(Q₂ − y)²` and its critic gradients.
    pub fn critic_loss(&self, tr: &Transitions, targets: &Tensor) -> (f64, Vec<Tensor>) {
        let mut g = Graph::new();
        let p = self.critics.params.bind(&mut g, true);
        let h = g.constant(tr.state.clone());
        let a = g.constant(tr.action.clone());
        let (q1, q2) = self.critics.q(&mut g, &p, h, a);
        let y = g.constant(targets.clone());
        let mask = g.constant(tr.mask.clone());
        let mut total = None;
        for q in [q1, q2] {
            let d = g.sub(q, y);
            let d2 = g.square(d);
            let d2 = g.mul(d2, mask);
            let s = g.sum(d2);
            total = Some(match total {
                None => s,
                Some(acc) => g.add(acc, s),
            });
        }
        let loss = g.scale(total.unwrap(), 0.5 / tr.real_steps().max(1.0));
        let grads = g.backward(loss);
        (g.scalar(loss), p.grads(&grads, &self.critics.params))
    }

    /// Masked mean of `α log π − min(Q₁, Q₂)`; gradients reach the actor only.
    /// Also returns the mean entropy.
    pub fn actor_loss(&self, tr: &Transitions, eps: &Tensor) -> (f64, f64, Vec<Tensor>) {
        let alpha = self.alpha();
        let mut g = Graph::new();
        let pa = self.actor.params.bind(&mut g, true);
        let pc = self.critics.params.bind(&mut g, false);
        let h = g.constant(tr.state.clone());
        let s = self.actor.sample(&mut g, &pa, h, eps);
        let (q1, q2) = self.critics.q(&mut g, &pc, h, s.action);
        let q = g.min(q1, q2);
        let mask = g.constant(tr.mask.clone());
        let per = if alpha == 0.0 {
            g.scale(q, -1.0)
        } else {
            let lp = g.scale(s.log_prob, alpha);
            g.sub(lp, q)
        };
        let per = g.mul(per, mask);
        let s_sum = g.sum(per);
        let n = tr.real_steps().max(1.0);
        let loss = g.scale(s_sum, 1.0 / n);
        let grads = g.backward(loss);
        let lp = g.value(s.log_prob);
        let entropy = -(0..tr.rows()).map(|r| lp.get(r, 0) * tr.mask.get(r, 0)).sum::<f64>() / n;
        (g.scalar(loss), entropy, pa.grads(&grads, &self.actor.params))
    }

    pub fn critic_update<R: Rng + ?Sized>(&mut self, tr: &Transitions, rng: &mut R, epoch: usize) -> Result<f64> {
        let eps = tr.draw_noise(rng);
        let y = self.td_targets(tr, &eps);
        let (loss, grads) = self.critic_loss(tr, &y);
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(CoreError::NonFinite { what: "critic loss", epoch });
        }
        self.critic_opt.step(&mut self.critics.params, &grads);
        Ok(loss)
    }

    /// Returns `(loss, entropy)`.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, tr: &Transitions, rng: &mut R, epoch: usize) -> Result<(f64, f64)> {
        let eps = tr.draw_noise(rng);
        let (loss, entropy, grads) = self.actor_loss(tr, &eps);
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(CoreError::NonFinite { what: "actor loss", epoch });
        }
        self.actor_opt.step(&mut self.actor.params, &grads);
        Ok((loss, entropy))
    }

    /// One gradient step on `log α` with loss `log α · (H − H̄)`.
    /// A no-op unless a target entropy is configured.
    pub fn alpha_update(&mut self, entropy: f64) -> f64 {
        if let Some(target) = self.config.target_entropy {
            self.log_alpha -= self.config.alpha_lr * (entropy - target);
        }
        self.alpha()
    }

    /// Critic step, actor step, entropy weight, then Polyak averaging.
    pub fn update<R: Rng + ?Sized>(&mut self, tr: &Transitions, rng: &mut R, epoch: usize) -> Result<UpdateStats> {
        let critic_loss = self.critic_update(tr, rng, epoch)?;
        let (actor_loss, entropy) = self.actor_update(tr, rng, epoch)?;
        let alpha = self.alpha_update(entropy);
        self.critics.polyak_update(self.config.intrinsic.tau);
        Ok(UpdateStats { critic_loss, actor_loss, entropy, alpha })
    }

    /// Builds transitions from a forward-model replay pass.
    pub fn transitions(&self, pass: &ReplayPass, batch: &Batch) -> Transitions {
        Transitions::new(pass, batch, &self.config.intrinsic.eta, self.config.curiosity_index)
    }
}

/// KLD column of `modality` from a replay pass step.
pub fn kld_of(pass: &ReplayPass, t: usize, modality: Modality) -> Tensor {
    pass.klds[t].slice_cols(modality.index(), 1)
}
