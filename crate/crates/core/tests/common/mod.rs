#![allow(dead_code)]

pub mod checks;
pub mod fixtures;

use codev_core::fe::Modality;
use codev_core::fm::ObsLayout;
use codev_core::language::VOCAB_SIZE;
use codev_core::nn::ParamSet;
use codev_core::replay::{Batch, EpisodeRecord};
use codev_core::rng::stream_rng;
use codev_core::tensor::Tensor;
use rand::Rng;

/// A flat observation with valid ranges: continuous parts in [0, 1], voices one-hot.
pub fn random_observation<R: Rng>(layout: &ObsLayout, rng: &mut R) -> Vec<f64> {
    let mut o = vec![0.0; layout.dim()];
    for m in [Modality::Vision, Modality::Touch, Modality::Proprio] {
        let (s, n) = layout.range(m);
        o[s..s + n].iter_mut().for_each(|x| *x = rng.gen());
    }
    for m in [Modality::Command, Modality::Feedback] {
        let (s, _) = layout.range(m);
        for row in 0..3 {
            o[s + row * VOCAB_SIZE + rng.gen_range(0..VOCAB_SIZE)] = 1.0;
        }
    }
    o
}

pub fn random_episode(layout: &ObsLayout, len: usize, seed: u64) -> EpisodeRecord {
    let mut rng = stream_rng(seed, 0);
    let obs: Vec<Vec<f64>> = (0..=len).map(|_| random_observation(layout, &mut rng)).collect();
    let actions: Vec<[f64; 4]> = (0..len).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
    let mut rewards = vec![0.0; len];
    if seed % 2 == 0 {
        rewards[len - 1] = 1.0;
    }
    EpisodeRecord::new(&obs, &actions, &rewards).unwrap()
}

pub fn batch_of(episodes: &[EpisodeRecord]) -> Batch {
    let refs: Vec<&EpisodeRecord> = episodes.iter().collect();
    Batch::from_episodes(&refs)
}

/// Overwrites every padded-step field with noise in [-3, 3].
pub fn perturb_padding(ep: &mut EpisodeRecord, seed: u64) {
    let len = ep.len();
    let mut rng = stream_rng(seed, 99);
    let (obs, actions, rewards, done) = ep.raw_mut();
    for t in len + 1..obs.rows() {
        obs.row_mut(t).iter_mut().for_each(|x| *x = rng.gen_range(-3.0..3.0));
    }
    for t in len..actions.rows() {
        actions.row_mut(t).iter_mut().for_each(|x| *x = rng.gen_range(-3.0..3.0));
        rewards[t] = rng.gen_range(-3.0..3.0);
        done[t] = rng.gen_range(-3.0..3.0);
    }
}

/// Compares analytic gradients against central differences on up to `max_checks`
/// coordinates (every coordinate when the set is small enough), covering every tensor.
/// Returns the worst relative error.
pub fn finite_difference_check(
    params: &mut ParamSet,
    analytic: &[Tensor],
    max_checks: usize,
    seed: u64,
    loss: &mut dyn FnMut(&ParamSet) -> f64,
) -> f64 {
    let ids: Vec<_> = params.ids().collect();
    let total: usize = ids.iter().map(|&id| params.get(id).len()).sum();
    let mut picks: Vec<(usize, usize)> = Vec::new();
    if total <= max_checks {
        for (i, &id) in ids.iter().enumerate() {
            picks.extend((0..params.get(id).len()).map(|k| (i, k)));
        }
    } else {
        let mut rng = stream_rng(seed, 0);
        for (i, &id) in ids.iter().enumerate() {
            picks.push((i, rng.gen_range(0..params.get(id).len())));
        }
        while picks.len() < max_checks {
            let i = rng.gen_range(0..ids.len());
            picks.push((i, rng.gen_range(0..params.get(ids[i]).len())));
        }
    }
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, k) in picks {
        let id = ids[i];
        let x0 = params.get(id).data()[k];
        params.get_mut(id).data_mut()[k] = x0 + h;
        let up = loss(params);
        params.get_mut(id).data_mut()[k] = x0 - h;
        let down = loss(params);
        params.get_mut(id).data_mut()[k] = x0;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i].data()[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel >= 1e-4 {
            eprintln!("{}[{k}]: analytic {a} numeric {numeric} rel {rel}", params.name(id));
        }
        worst = worst.max(rel);
    }
    worst
}
