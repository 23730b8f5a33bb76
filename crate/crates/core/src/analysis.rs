//! Post-hoc analyses: PCA of command-voice latents and dream rollouts.
//!
//! Nothing here mutates model parameters.

use alloc::vec::Vec;

use crate::agent::{Actor, Agent};
use crate::env::{self, ArenaState, EnvConfig, ObservationBundle};
use crate::error::{CoreError, Result};
use crate::fe::Modality;
use crate::fm::{DreamStep, ForwardModel, ObsLayout};
use crate::harness::{eval_scene_seed, run_episode, Controller, Episode};
use crate::language::{ScaleConfig, Sentence};
use crate::replay::ACTION_DIM;
use crate::tensor::Tensor;

/// Command posterior means, one row per filtered step.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMatrix {
    pub data: Tensor,
    /// Sentence and step of each row.
    pub labels: Vec<(Sentence, usize)>,
}

/// Deterministic learned controller that records command posterior means.
struct Recorder<'a> {
    model: &'a ForwardModel,
    actor: &'a Actor,
    belief: crate::fm::Belief,
    rows: Vec<Vec<f64>>,
}

impl Controller for Recorder<'_> {
    fn begin(&mut self) {
        self.belief = self.model.initial_belief();
    }

    fn act(&mut self, _: &ArenaState, _: &ObservationBundle, flat: &[f64]) -> [f64; ACTION_DIM] {
        let info = self.model.observe(&mut self.belief, flat, None);
        self.rows.push(info.command_mean);
        let a = self.actor.act(self.belief.h.data(), None).0;
        ForwardModel::act_taken(&mut self.belief, a);
        a
    }
}

/// Runs `episodes` deterministic episodes per sentence and stacks the
/// command posterior mean of every step.
pub fn collect_command_latents(
    model: &ForwardModel,
    agent: &Agent,
    sentences: &[Sentence],
    episodes: usize,
    scale: ScaleConfig,
    config: EnvConfig,
    seed: u64,
) -> Result<LatentMatrix> {
    let layout = model.layout();
    let mut rec = Recorder { model, actor: &agent.actor, belief: model.initial_belief(), rows: Vec::new() };
    let mut labels = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        for k in 0..episodes {
            let ep = run_episode(&mut rec, *s, scale, config, &layout, eval_scene_seed(seed, i, k))?;
            labels.extend((0..ep.len()).map(|t| (*s, t)));
        }
    }
    let dim = model.config.latents.dim(Modality::Command);
    let mut data = Tensor::zeros(rec.rows.len(), dim);
    for (r, row) in rec.rows.iter().enumerate() {
        data.row_mut(r).copy_from_slice(row);
    }
    Ok(LatentMatrix { data, labels })
}

/// Principal components of a data matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Tensor,
    /// Eigenvalues of the sample covariance, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Shares of the total variance.
    pub explained_ratio: Vec<f64>,
    /// Centred data projected onto the components, `n × k`.
    pub projections: Tensor,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors as columns, unsorted.
pub fn symmetric_eigen(a: &Tensor) -> (Vec<f64>, Tensor) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = Tensor::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale: f64 = m.data().iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| { let x = m.get(i, j); x * x }).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| m.get(i, i)).collect(), v)
}

/// Top-`k` principal components; the largest-magnitude loading of each is positive.
pub fn pca(data: &Tensor, k: usize) -> Result<Pca> {
    let (n, d) = data.shape();
    if n < 2 || k == 0 || k > d {
        return Err(CoreError::Config(alloc::format!("pca needs at least 2 rows and 1 <= k <= {d}, got n={n}, k={k}")));
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| data.get(i, j)).sum::<f64>() / n as f64).collect();
    let centred = Tensor::from_vec(n, d, (0..n * d).map(|x| data.data()[x] - mean[x % d]).collect());
    let cov = centred.transpose().matmul(&centred).map(|x| x / (n - 1) as f64);
    let (vals, vecs) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let mut components = Tensor::zeros(k, d);
    for (r, &c) in order[..k].iter().enumerate() {
        let col: Vec<f64> = (0..d).map(|i| vecs.get(i, c)).collect();
        let big = (0..d).fold(0, |b, i| if col[i].abs() > col[b].abs() { i } else { b });
        let sign = if col[big] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components.set(r, i, sign * col[i]);
        }
    }
    let explained_variance: Vec<f64> = order[..k].iter().map(|&c| vals[c].max(0.0)).collect();
    let explained_ratio = explained_variance.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
    let projections = centred.matmul(&components.transpose());
    Ok(Pca { mean, components, explained_variance, explained_ratio, projections })
}

/// Mean silhouette coefficient of labelled points (Euclidean).
/// `None` with fewer than two clusters.
pub fn silhouette(points: &Tensor, labels: &[usize]) -> Option<f64> {
    let n = points.rows();
    assert_eq!(n, labels.len());
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let present = (0..k).filter(|c| labels.contains(c)).count();
    if present < 2 {
        return None;
    }
    let dist = |a: usize, b: usize| {
        libm::sqrt(points.row(a).iter().zip(points.row(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = alloc::vec![0.0; k];
        let mut counts = alloc::vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(i, j);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k).filter(|&c| c != own && counts[c] > 0).map(|c| sums[c] / counts[c] as f64).fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        total += if m > 0.0 { (b - a) / m } else { 0.0 };
    }
    Some(total / n as f64)
}

/// A dream and what it started from.
#[derive(Clone, Debug, PartialEq)]
pub struct DreamExport {
    pub sentence: Sentence,
    pub steps: Vec<DreamStep>,
    pub vision_size: usize,
}

impl DreamExport {
    /// Vision frame consumed at step `t` (HWC, 4 channels).
    pub fn frame(&self, t: usize, layout: &ObsLayout) -> &[f64] {
        layout.slice(&self.steps[t].input, Modality::Vision)
    }
}

/// Dreams from the first observation of `genuine`; later entries are never read.
pub fn dream_from_episode(model: &ForwardModel, actor: &Actor, genuine: &[Vec<f64>], steps: usize) -> Result<Vec<DreamStep>> {
    let first = genuine.first().ok_or(CoreError::Config("dream needs a genuine observation".into()))?;
    model.dream_rollout(first, actor, steps)
}

/// Dreams `steps` steps of `sentence` from the scene drawn from `seed`.
pub fn export_dream(
    model: &ForwardModel,
    actor: &Actor,
    sentence: Sentence,
    scale: ScaleConfig,
    seed: u64,
    steps: usize,
) -> Result<DreamExport> {
    let config = EnvConfig { vision_size: model.config.vision_size };
    let (_, obs) = env::reset(seed, sentence, scale, config)?;
    let flat = model.layout().flatten(&obs);
    let steps = model.dream_rollout(&flat, actor, steps)?;
    Ok(DreamExport { sentence, steps, vision_size: config.vision_size })
}

/// Mean squared one-step vision prediction error along a real episode,
/// filtering with posterior means.
pub fn vision_prediction_error(model: &ForwardModel, episode: &Episode) -> f64 {
    let layout = model.layout();
    let mut belief = model.initial_belief();
    let mut total = 0.0;
    for t in 0..episode.len() {
        model.observe(&mut belief, &episode.observations[t], None);
        let pred = model.predict(&belief.h, &episode.actions[t]);
        ForwardModel::act_taken(&mut belief, episode.actions[t]);
        let truth = layout.slice(&episode.observations[t + 1], Modality::Vision);
        total += pred.vision.iter().zip(truth).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / truth.len() as f64;
    }
    total / episode.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_data_has_one_component() {
        let data = Tensor::from_vec(4, 2, alloc::vec![0.0, 0.0, 1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = pca(&data, 2).unwrap();
        assert!(p.explained_variance[1].abs() < 1e-12);
        assert!((p.explained_ratio[0] - 1.0).abs() < 1e-12);
        // leading loading positive
        assert!(p.components.get(0, 1) > 0.0);
    }

    #[test]
    fn silhouette_of_separated_clusters() {
        let pts = Tensor::from_vec(4, 1, alloc::vec![0.0, 0.1, 10.0, 10.1]);
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.98);
        assert!(silhouette(&pts, &[0, 0, 0, 0]).is_none());
    }
}
