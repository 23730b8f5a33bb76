//! Free-energy arithmetic: Gaussian KLD, the forward model's evidence free
//! energy, the curiosity reward and the augmented soft Q target.
//!
//! The graph builders here are what [`crate::fm`] and [`crate::agent`]
//! differentiate; the plain-`f64` functions are their reference values.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::graph::{softplus, Graph, Var};
use crate::tensor::Tensor;

/// The five sensory modalities, in latent-concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Vision,
    Touch,
    Proprio,
    Command,
    Feedback,
}

impl Modality {
    pub const ALL: [Modality; 5] =
        [Modality::Vision, Modality::Touch, Modality::Proprio, Modality::Command, Modality::Feedback];

    /// Modalities that can carry a curiosity weight, in η order.
    pub const CURIOUS: [Modality; 4] = [Modality::Vision, Modality::Touch, Modality::Proprio, Modality::Feedback];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Vision => "vision",
            Modality::Touch => "touch",
            Modality::Proprio => "proprio",
            Modality::Command => "command",
            Modality::Feedback => "feedback",
        }
    }
}

/// A Gaussian with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(CoreError::Dimension { what: "gaussian std", expected: mean.len(), got: std.len() });
        }
        if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(CoreError::Config("standard deviations must be positive and finite".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: alloc::vec![0.0; dim], std: alloc::vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// `mean + std * eps`.
    pub fn sample_with(&self, eps: &[f64]) -> Vec<f64> {
        self.mean.iter().zip(&self.std).zip(eps).map(|((m, s), e)| m + s * e).collect()
    }
}

/// `KL(q || p)` for diagonal Gaussians.
pub fn kld_diag(q: &DiagonalGaussian, p: &DiagonalGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(CoreError::Dimension { what: "kld operands", expected: q.dim(), got: p.dim() });
    }
    let mut acc = 0.0;
    for i in 0..q.dim() {
        let (mq, sq, mp, sp) = (q.mean[i], q.std[i], p.mean[i], p.std[i]);
        let d = mq - mp;
        acc += libm::log(sp / sq) + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
    }
    Ok(acc)
}

/// Curiosity weights and soft actor-critic constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntrinsicConfig {
    /// η for vision, touch, proprioception, feedback voice.
    pub eta: [f64; 4],
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl IntrinsicConfig {
    pub const NO_CURIOSITY: [f64; 4] = [0.0, 0.0, 0.0, 0.0];
    pub const SENSORIMOTOR: [f64; 4] = [0.05, 2.0, 0.1, 0.0];
    pub const ALL: [f64; 4] = [0.05, 2.0, 0.1, 0.3];

    pub fn new(eta: [f64; 4]) -> Self {
        Self { eta, alpha: 0.05, gamma: 0.99, tau: 0.005 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta.iter().any(|&e| !(e >= 0.0)) {
            return Err(CoreError::Config("curiosity weights must be non-negative".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(CoreError::Config("alpha must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return Err(CoreError::Config("gamma and tau must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// η laid out over all five modalities; the command voice is never curious.
    pub fn eta_by_modality(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (m, &e) in Modality::CURIOUS.iter().zip(&self.eta) {
            out[m.index()] = e;
        }
        out
    }
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        Self::new(Self::NO_CURIOSITY)
    }
}

/// Σ η_i KLD_i over modalities with a positive weight.
pub fn curiosity(kld_by_modality: &[f64; 5], eta: &[f64; 4]) -> f64 {
    let mut acc = 0.0;
    for (m, &e) in Modality::CURIOUS.iter().zip(eta) {
        if e > 0.0 {
            acc += e * kld_by_modality[m.index()];
        }
    }
    acc
}

/// `r + curiosity + α·entropy + γ·(1 − done)·next_q`.
pub fn q_target(r: f64, curiosity: f64, entropy: f64, next_q: f64, done: bool, gamma: f64, alpha: f64) -> f64 {
    let bootstrap = if done { 0.0 } else { gamma * next_q };
    r + curiosity + alpha * entropy + bootstrap
}

/// `log(1 − tanh(u)²)`, computed without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (core::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of `a = tanh(u)` when `u ~ N(mean, std)`.
pub fn squashed_log_prob(u: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    let half_ln_tau = 0.5 * libm::log(core::f64::consts::TAU);
    let mut acc = 0.0;
    for i in 0..u.len() {
        let z = (u[i] - mean[i]) / std[i];
        acc += -0.5 * z * z - libm::log(std[i]) - half_ln_tau - log_one_minus_tanh_sq(u[i]);
    }
    acc
}

/// How a modality's accuracy term is scored.
#[derive(Clone, Debug)]
pub enum Likelihood {
    /// Unit-variance Gaussian: `½‖pred − target‖²` per row.
    Gaussian { prediction: Var, target: Var },
    /// Softmax cross-entropy; `logits` hold `rows_per_item` consecutive rows per item.
    Categorical { logits: Var, targets: Arc<Tensor>, rows_per_item: usize },
}

/// One modality's share of the free energy on a batch of rows.
#[derive(Clone, Debug)]
pub struct ModalityTerm {
    pub posterior: (Var, Var),
    pub prior: (Var, Var),
    pub likelihood: Likelihood,
    /// Accuracy weight.
    pub weight: f64,
}

/// Per-row KLD of one modality.
pub fn kld_node(g: &mut Graph, term: &ModalityTerm) -> Var {
    g.kld_diag(term.posterior.0, term.posterior.1, term.prior.0, term.prior.1)
}

/// Per-row negative log-likelihood of one modality.
pub fn nll_node(g: &mut Graph, likelihood: &Likelihood) -> Var {
    match likelihood {
        Likelihood::Gaussian { prediction, target } => {
            let d = g.sub(*prediction, *target);
            let sq = g.square(d);
            let s = g.sum_cols(sq);
            g.scale(s, 0.5)
        }
        Likelihood::Categorical { logits, targets, rows_per_item } => {
            let ce = g.cross_entropy(*logits, targets.clone());
            let rows = g.shape(ce).0 / rows_per_item;
            let per_item = g.reshape(ce, rows, *rows_per_item);
            g.sum_cols(per_item)
        }
    }
}

/// Masked free energy per row: `mask · Σ_i (KLD_i + w_i · NLL_i)`.
///
/// Returns the `rows x 1` column and each modality's unmasked KLD column.
pub fn free_energy_rows(g: &mut Graph, terms: &[ModalityTerm], mask: Var) -> (Var, Vec<Var>) {
    let mut total = None;
    let mut klds = Vec::with_capacity(terms.len());
    for term in terms {
        let kld = kld_node(g, term);
        klds.push(kld);
        let nll = nll_node(g, &term.likelihood);
        let nll = if term.weight == 1.0 { nll } else { g.scale(nll, term.weight) };
        let f = g.add(kld, nll);
        total = Some(match total {
            None => f,
            Some(t) => g.add(t, f),
        });
    }
    let total = total.expect("free energy needs at least one modality");
    (g.mul_col(total, mask), klds)
}

/// Plain values for one modality of one observation, used by [`evidence_free_energy`].
#[derive(Clone, Debug)]
pub struct ModalityValues {
    pub posterior: DiagonalGaussian,
    pub prior: DiagonalGaussian,
    pub prediction: Vec<f64>,
    /// Continuous target, or one-hot rows for a categorical modality.
    pub target: Vec<f64>,
    /// `Some(classes)` marks the prediction as logits over that many classes per row.
    pub categorical: Option<usize>,
}

/// Evidence free energy summed over masked steps.
///
/// `steps[t]` lists every modality at step `t`; steps with `mask[t] == 0`
/// contribute exactly nothing.
pub fn evidence_free_energy(steps: &[Vec<ModalityValues>], mask: &[f64]) -> Result<f64> {
    if steps.len() != mask.len() {
        return Err(CoreError::Dimension { what: "free energy mask", expected: steps.len(), got: mask.len() });
    }
    let mut total = 0.0;
    for (mods, &m) in steps.iter().zip(mask) {
        let mut g = Graph::new();
        let mut terms = Vec::with_capacity(mods.len());
        for v in mods {
            if v.posterior.dim() != v.prior.dim() {
                return Err(CoreError::Dimension { what: "latent pair", expected: v.prior.dim(), got: v.posterior.dim() });
            }
            if v.prediction.len() != v.target.len() {
                return Err(CoreError::Dimension { what: "prediction", expected: v.target.len(), got: v.prediction.len() });
            }
            let row = |g: &mut Graph, x: &[f64]| g.constant(Tensor::row_vector(x));
            let posterior = (row(&mut g, v.posterior.mean()), row(&mut g, v.posterior.std()));
            let prior = (row(&mut g, v.prior.mean()), row(&mut g, v.prior.std()));
            let likelihood = match v.categorical {
                None => Likelihood::Gaussian { prediction: row(&mut g, &v.prediction), target: row(&mut g, &v.target) },
                Some(classes) => {
                    let n = v.prediction.len() / classes;
                    if n * classes != v.prediction.len() {
                        return Err(CoreError::Dimension { what: "logit rows", expected: n * classes, got: v.prediction.len() });
                    }
                    let logits = g.constant(Tensor::from_vec(n, classes, v.prediction.clone()));
                    Likelihood::Categorical {
                        logits,
                        targets: Arc::new(Tensor::from_vec(n, classes, v.target.clone())),
                        rows_per_item: n,
                    }
                }
            };
            terms.push(ModalityTerm { posterior, prior, likelihood, weight: 1.0 });
        }
        if terms.is_empty() {
            continue;
        }
        let mask_var = g.constant(Tensor::filled(1, 1, m));
        let (f, _) = free_energy_rows(&mut g, &terms, mask_var);
        total += g.scalar(f);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn g1(m: f64, s: f64) -> DiagonalGaussian {
        DiagonalGaussian::new(vec![m], vec![s]).unwrap()
    }

    #[test]
    fn kld_identical_is_zero() {
        let q = DiagonalGaussian::new(vec![0.3, -1.0], vec![0.5, 2.0]).unwrap();
        assert_eq!(kld_diag(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn kld_closed_cases() {
        assert!((kld_diag(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-12);
        let expect = 2.0 - 0.5 - core::f64::consts::LN_2;
        assert!((kld_diag(&g1(0.0, 2.0), &g1(0.0, 1.0)).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn kld_dimension_mismatch() {
        assert!(matches!(kld_diag(&g1(0.0, 1.0), &DiagonalGaussian::standard(2)), Err(CoreError::Dimension { .. })));
        assert!(DiagonalGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagonalGaussian::new(vec![0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn curiosity_presets() {
        let klds = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(curiosity(&klds, &IntrinsicConfig::NO_CURIOSITY), 0.0);
        let expect = 0.05 * 1.0 + 2.0 * 2.0 + 0.1 * 3.0 + 0.3 * 5.0;
        assert!((curiosity(&klds, &IntrinsicConfig::ALL) - expect).abs() < 1e-12);
        // command KLD never contributes
        assert_eq!(curiosity(&[0.0, 0.0, 0.0, 9.0, 0.0], &IntrinsicConfig::ALL), 0.0);
        assert_eq!(IntrinsicConfig::new(IntrinsicConfig::SENSORIMOTOR).eta_by_modality(), [0.05, 2.0, 0.1, 0.0, 0.0]);
    }

    #[test]
    fn q_target_examples() {
        assert_eq!(q_target(1.0, 0.0, 0.0, 123.0, true, 0.99, 0.05), 1.0);
        assert!((q_target(0.0, 0.0, 0.0, 2.0, false, 0.99, 0.0) - 1.98).abs() < 1e-12);
        assert_eq!(q_target(0.5, 0.0, 7.0, 3.0, false, 0.9, 0.0), 0.5 + 0.9 * 3.0);
    }

    #[test]
    fn q_target_is_affine() {
        let base = q_target(0.0, 0.0, 0.0, 0.0, false, 0.9, 0.2);
        assert_eq!(base, 0.0);
        assert!((q_target(1.0, 0.0, 0.0, 0.0, false, 0.9, 0.2) - 1.0).abs() < 1e-15);
        assert!((q_target(0.0, 1.0, 0.0, 0.0, false, 0.9, 0.2) - 1.0).abs() < 1e-15);
        assert!((q_target(0.0, 0.0, 1.0, 0.0, false, 0.9, 0.2) - 0.2).abs() < 1e-15);
        assert!((q_target(0.0, 0.0, 0.0, 1.0, false, 0.9, 0.2) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn stable_tanh_correction() {
        for &u in &[-30.0, -3.0, -0.2, 0.0, 0.7, 4.0, 25.0] {
            let t = libm::tanh(u);
            let naive = libm::log(1.0 - t * t);
            if naive.is_finite() && u.abs() < 5.0 {
                assert!((log_one_minus_tanh_sq(u) - naive).abs() < 1e-10);
            }
            assert!(log_one_minus_tanh_sq(u).is_finite());
        }
    }

    fn values(shift: f64) -> Vec<ModalityValues> {
        let q = DiagonalGaussian::new(vec![0.1 + shift, -0.2], vec![0.9, 1.1]).unwrap();
        let p = DiagonalGaussian::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        vec![
            ModalityValues { posterior: q.clone(), prior: p.clone(), prediction: vec![0.2, 0.4], target: vec![0.25, 0.1], categorical: None },
            ModalityValues {
                posterior: q,
                prior: p,
                prediction: vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.0],
                target: vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                categorical: Some(3),
            },
        ]
    }

    #[test]
    fn perfect_prediction_and_matching_latents_give_zero() {
        let p = DiagonalGaussian::standard(3);
        let v = ModalityValues { posterior: p.clone(), prior: p, prediction: vec![0.5; 4], target: vec![0.5; 4], categorical: None };
        assert_eq!(evidence_free_energy(&[vec![v]], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn masked_steps_contribute_nothing() {
        let live = evidence_free_energy(&[values(0.0)], &[1.0]).unwrap();
        let both = evidence_free_energy(&[values(0.0), values(5.0)], &[1.0, 0.0]).unwrap();
        assert_eq!(live, both);
        assert!(live > 0.0);
    }

    #[test]
    fn free_energy_matches_hand_sum() {
        let vals = values(0.0);
        let mut expect = 0.0;
        for v in &vals {
            expect += kld_diag(&v.posterior, &v.prior).unwrap();
        }
        expect += 0.5 * ((0.2f64 - 0.25).powi(2) + (0.4f64 - 0.1).powi(2));
        let lse = |r: &[f64]| libm::log(r.iter().map(|x| libm::exp(*x)).sum::<f64>());
        expect += lse(&[1.0, 0.0, -1.0]) - 1.0;
        expect += lse(&[0.5, 0.5, 0.0]) - 0.0;
        assert!((evidence_free_energy(&[vals], &[1.0]).unwrap() - expect).abs() < 1e-12);
    }
}
