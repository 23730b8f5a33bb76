//! Whole-episode replay with zero padding to 30 steps.
//!
//! An episode keeps 31 flattened observations `o_0..o_30` and 30 actions,
//! rewards, done flags and masks. Transition `t` is `(o_t, a_t, r_t, o_{t+1})`.
//! Everything past the real prefix is zero except that `mask` is zero too.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::rng::{stream, stream_rng};
use crate::tensor::Tensor;
use crate::EPISODE_STEPS;

pub const CAPACITY: usize = 256;
pub const BATCH_SIZE: usize = 32;
pub const ACTION_DIM: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    obs_dim: usize,
    /// `(EPISODE_STEPS + 1) × obs_dim`.
    observations: Tensor,
    /// `EPISODE_STEPS × 4`.
    actions: Tensor,
    rewards: [f64; EPISODE_STEPS],
    done: [f64; EPISODE_STEPS],
    mask: [f64; EPISODE_STEPS],
    len: usize,
}

impl EpisodeRecord {
    /// Pads a real episode of `actions.len()` transitions.
    ///
    /// `observations` holds one more entry than `actions`. The last real
    /// transition is marked done.
    pub fn new(observations: &[Vec<f64>], actions: &[[f64; ACTION_DIM]], rewards: &[f64]) -> Result<Self> {
        let len = actions.len();
        if len == 0 || len > EPISODE_STEPS {
            return Err(CoreError::Dimension { what: "episode length", expected: EPISODE_STEPS, got: len });
        }
        if observations.len() != len + 1 {
            return Err(CoreError::Dimension { what: "episode observations", expected: len + 1, got: observations.len() });
        }
        if rewards.len() != len {
            return Err(CoreError::Dimension { what: "episode rewards", expected: len, got: rewards.len() });
        }
        let obs_dim = observations[0].len();
        let mut obs = Tensor::zeros(EPISODE_STEPS + 1, obs_dim);
        for (t, o) in observations.iter().enumerate() {
            if o.len() != obs_dim {
                return Err(CoreError::Dimension { what: "observation width", expected: obs_dim, got: o.len() });
            }
            obs.row_mut(t).copy_from_slice(o);
        }
        let mut act = Tensor::zeros(EPISODE_STEPS, ACTION_DIM);
        for (t, a) in actions.iter().enumerate() {
            act.row_mut(t).copy_from_slice(a);
        }
        let mut r = [0.0; EPISODE_STEPS];
        r[..len].copy_from_slice(rewards);
        let mut done = [0.0; EPISODE_STEPS];
        done[len - 1] = 1.0;
        let mut mask = [0.0; EPISODE_STEPS];
        mask[..len].iter_mut().for_each(|m| *m = 1.0);
        Ok(Self { obs_dim, observations: obs, actions: act, rewards: r, done, mask, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        self.observations.row(t)
    }

    pub fn action(&self, t: usize) -> &[f64] {
        self.actions.row(t)
    }

    pub fn rewards(&self) -> &[f64; EPISODE_STEPS] {
        &self.rewards
    }

    pub fn done(&self) -> &[f64; EPISODE_STEPS] {
        &self.done
    }

    pub fn mask(&self) -> &[f64; EPISODE_STEPS] {
        &self.mask
    }

    /// Mutable access to every stored field, for padding-perturbation tests.
    pub fn raw_mut(&mut self) -> (&mut Tensor, &mut Tensor, &mut [f64; EPISODE_STEPS], &mut [f64; EPISODE_STEPS]) {
        (&mut self.observations, &mut self.actions, &mut self.rewards, &mut self.done)
    }

    /// Mask is a prefix of ones, done only at the last real step, padding zero.
    pub fn is_consistent(&self) -> bool {
        (0..EPISODE_STEPS).all(|t| {
            let real = t < self.len;
            self.mask[t] == f64::from(u8::from(real))
                && self.done[t] == f64::from(u8::from(t + 1 == self.len))
                && (real || (self.rewards[t] == 0.0 && self.actions.row(t).iter().all(|&x| x == 0.0)))
        }) && (self.len + 1..=EPISODE_STEPS).all(|t| self.observations.row(t).iter().all(|&x| x == 0.0))
    }
}

/// Time-major stack of sampled episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `EPISODE_STEPS + 1` tensors of `batch × obs_dim`.
    pub observations: Vec<Tensor>,
    /// `EPISODE_STEPS` tensors of `batch × 4`.
    pub actions: Vec<Tensor>,
    /// `EPISODE_STEPS` columns of `batch × 1`.
    pub rewards: Vec<Tensor>,
    pub done: Vec<Tensor>,
    pub mask: Vec<Tensor>,
    /// Buffer positions the rows came from.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_episodes(episodes: &[&EpisodeRecord]) -> Self {
        let b = episodes.len();
        let obs_dim = episodes.first().map_or(0, |e| e.obs_dim);
        let observations = (0..=EPISODE_STEPS)
            .map(|t| {
                let mut m = Tensor::zeros(b, obs_dim);
                for (i, e) in episodes.iter().enumerate() {
                    m.row_mut(i).copy_from_slice(e.observations.row(t));
                }
                m
            })
            .collect();
        let actions = (0..EPISODE_STEPS)
            .map(|t| {
                let mut m = Tensor::zeros(b, ACTION_DIM);
                for (i, e) in episodes.iter().enumerate() {
                    m.row_mut(i).copy_from_slice(e.actions.row(t));
                }
                m
            })
            .collect();
        let column = |f: &dyn Fn(&EpisodeRecord) -> &[f64; EPISODE_STEPS]| -> Vec<Tensor> {
            (0..EPISODE_STEPS).map(|t| Tensor::from_vec(b, 1, episodes.iter().map(|e| f(e)[t]).collect())).collect()
        };
        Batch {
            observations,
            actions,
            rewards: column(&|e| &e.rewards),
            done: column(&|e| &e.done),
            mask: column(&|e| &e.mask),
            indices: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.mask.first().map_or(0, Tensor::rows)
    }

    /// Number of real transitions.
    pub fn real_steps(&self) -> f64 {
        self.mask.iter().map(Tensor::sum).sum()
    }
}

/// FIFO store of the most recent [`CAPACITY`] episodes.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    episodes: VecDeque<EpisodeRecord>,
    capacity: usize,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { episodes: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores an episode, discarding the oldest when full.
    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    /// Oldest first.
    pub fn get(&self, i: usize) -> Option<&EpisodeRecord> {
        self.episodes.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    /// Draws indices: with replacement while under-filled, without otherwise.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        let n = self.episodes.len();
        if n == 0 {
            return Err(CoreError::EmptyBuffer);
        }
        Ok(if n < batch_size {
            (0..batch_size).map(|_| rng.gen_range(0..n)).collect()
        } else {
            index::sample(rng, n, batch_size).into_vec()
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        let eps: Vec<&EpisodeRecord> = idx.iter().map(|&i| &self.episodes[i]).collect();
        let mut batch = Batch::from_episodes(&eps);
        batch.indices = idx;
        Ok(batch)
    }

    /// [`ReplayBuffer::sample`] from a fresh generator for `seed`.
    pub fn sample_seeded(&self, batch_size: usize, seed: u64) -> Result<Batch> {
        self.sample(batch_size, &mut stream_rng(seed, stream::REPLAY))
    }
}
