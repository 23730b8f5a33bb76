//! Variational recurrent forward model.
//!
//! Each step, every modality gets a prior `p(z | h_{t-1}, a_{t-1})` and a
//! posterior `q(z | h_{t-1}, a_{t-1}, o_t)`; a GRU folds the concatenated
//! posterior samples into `h_t`, and decoders read `(h_t, enc(a_t))` to predict
//! `o_{t+1}`. Training minimises the evidence free energy over replayed
//! episodes.
//!
//! Observations are flat rows laid out as [`ObsLayout`] describes.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::{ObservationBundle, TOUCH_PATCHES};
use crate::error::{CoreError, Result};
use crate::fe::{self, DiagonalGaussian, Likelihood, Modality, ModalityTerm};
use crate::graph::{Graph, Var};
use crate::language::{SENTENCE_LEN, VOCAB_SIZE};
use crate::nn::{Adam, Bound, Dense, Gru, Linear, PRelu, ParamSet};
use crate::replay::{Batch, ACTION_DIM};
use crate::rng::fill_normal;
use crate::tensor::Tensor;
use crate::EPISODE_STEPS;

/// Lower bound added to every softplus standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-4;
const VOICE_WIDTH: usize = SENTENCE_LEN * VOCAB_SIZE;

/// Latent sizes per modality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatentLayout {
    pub vision: usize,
    pub touch: usize,
    pub proprio: usize,
    pub command: usize,
    pub feedback: usize,
}

impl LatentLayout {
    pub fn dim(&self, m: Modality) -> usize {
        match m {
            Modality::Vision => self.vision,
            Modality::Touch => self.touch,
            Modality::Proprio => self.proprio,
            Modality::Command => self.command,
            Modality::Feedback => self.feedback,
        }
    }

    pub fn total(&self) -> usize {
        Modality::ALL.iter().map(|&m| self.dim(m)).sum()
    }

    /// Column offset of a modality inside the concatenated sample.
    pub fn offset(&self, m: Modality) -> usize {
        Modality::ALL[..m.index()].iter().map(|&x| self.dim(x)).sum()
    }
}

/// Layer widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FmConfig {
    pub vision_size: usize,
    pub hidden: usize,
    pub action_enc: usize,
    pub vision_enc: usize,
    /// Side of the decoder's low-resolution grid; the image is twice as wide.
    pub vision_grid: usize,
    pub vision_channels: usize,
    pub touch_enc: usize,
    pub proprio_enc: usize,
    pub voice_embed: usize,
    pub voice_width: usize,
    pub voice_enc_out: usize,
    pub head_width: usize,
    pub latents: LatentLayout,
}

impl FmConfig {
    /// Layer shapes of the original model.
    pub fn full() -> Self {
        Self {
            vision_size: 16,
            hidden: 256,
            action_enc: 8,
            vision_enc: 128,
            vision_grid: 8,
            vision_channels: 64,
            touch_enc: 20,
            proprio_enc: 4,
            voice_embed: 8,
            voice_width: 64,
            voice_enc_out: 256,
            head_width: 128,
            latents: LatentLayout { vision: 16, touch: 8, proprio: 8, command: 16, feedback: 16 },
        }
    }

    /// 8x8 vision with narrow layers, for desk-scale runs.
    pub fn tiny() -> Self {
        Self {
            vision_size: 8,
            hidden: 128,
            action_enc: 8,
            vision_enc: 64,
            vision_grid: 4,
            vision_channels: 32,
            touch_enc: 10,
            proprio_enc: 4,
            voice_embed: 8,
            voice_width: 32,
            voice_enc_out: 128,
            head_width: 32,
            latents: LatentLayout { vision: 8, touch: 4, proprio: 4, command: 8, feedback: 8 },
        }
    }

    /// Smallest shapes that still exercise every path; for gradient checks.
    pub fn micro() -> Self {
        Self {
            vision_size: 4,
            hidden: 5,
            action_enc: 3,
            vision_enc: 4,
            vision_grid: 2,
            vision_channels: 2,
            touch_enc: 3,
            proprio_enc: 2,
            voice_embed: 3,
            voice_width: 3,
            voice_enc_out: 4,
            head_width: 3,
            latents: LatentLayout { vision: 2, touch: 1, proprio: 1, command: 2, feedback: 2 },
        }
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout { vision: self.vision_size * self.vision_size * 4 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vision_grid * 2 != self.vision_size || self.vision_grid < 2 {
            return Err(CoreError::Config("vision grid must be half the image side and at least 2".into()));
        }
        Ok(())
    }

    fn decoder_input(&self) -> usize {
        self.hidden + self.action_enc
    }

    fn encoded_width(&self, m: Modality) -> usize {
        match m {
            Modality::Vision => self.vision_enc,
            Modality::Touch => self.touch_enc,
            Modality::Proprio => self.proprio_enc,
            Modality::Command | Modality::Feedback => self.voice_enc_out,
        }
    }
}

/// Column ranges of a flattened observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObsLayout {
    pub vision: usize,
}

impl ObsLayout {
    pub fn dim(&self) -> usize {
        self.vision + TOUCH_PATCHES + 4 + 2 * VOICE_WIDTH
    }

    /// `(start, len)` of a modality.
    pub fn range(&self, m: Modality) -> (usize, usize) {
        match m {
            Modality::Vision => (0, self.vision),
            Modality::Touch => (self.vision, TOUCH_PATCHES),
            Modality::Proprio => (self.vision + TOUCH_PATCHES, 4),
            Modality::Command => (self.vision + TOUCH_PATCHES + 4, VOICE_WIDTH),
            Modality::Feedback => (self.vision + TOUCH_PATCHES + 4 + VOICE_WIDTH, VOICE_WIDTH),
        }
    }

    pub fn flatten(&self, obs: &ObservationBundle) -> Vec<f64> {
        assert_eq!(obs.vision.len(), self.vision, "vision size does not match the model");
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&obs.vision);
        out.extend_from_slice(&obs.touch);
        out.extend_from_slice(&obs.proprio);
        for row in &obs.command {
            out.extend_from_slice(row);
        }
        for row in &obs.feedback_rows() {
            out.extend_from_slice(row);
        }
        out
    }

    pub fn slice<'a>(&self, flat: &'a [f64], m: Modality) -> &'a [f64] {
        let (s, n) = self.range(m);
        &flat[s..s + n]
    }
}

/// Mean and standard deviation nodes.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mean: Var,
    pub std: Var,
}

/// Two-layer head producing `(μ, σ)`.
#[derive(Debug, Clone)]
struct Head {
    hidden: Dense,
    out: Linear,
    dim: usize,
}

impl Head {
    fn new<R: Rng + ?Sized>(ps: &mut ParamSet, name: &str, inputs: usize, width: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            hidden: Dense::new(ps, &alloc::format!("{name}.0"), inputs, width, rng),
            out: Linear::new(ps, &alloc::format!("{name}.1"), width, 2 * dim, rng),
            dim,
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> GaussianVars {
        let y = self.hidden.forward(g, p, x);
        let y = self.out.forward(g, p, y);
        let mean = g.slice(y, 0, self.dim);
        let raw = g.slice(y, self.dim, self.dim);
        let sp = g.softplus(raw);
        GaussianVars { mean, std: g.add_scalar(sp, SIGMA_FLOOR) }
    }
}

#[derive(Debug, Clone)]
struct VoiceEncoder {
    embed: Linear,
    lift: Dense,
    gru: Gru,
    out: Dense,
}

#[derive(Debug, Clone)]
struct VoiceDecoder {
    lift: Dense,
    gru: Gru,
    act: PRelu,
    logits: Linear,
}

#[derive(Debug, Clone)]
struct VisionDecoder {
    lift: Linear,
    conv: Linear,
    /// im2col gather: per batch row, `P · 9C` columns from `P · C`.
    im2col: Arc<[usize]>,
    /// Pixel shuffle into row-major HWC.
    shuffle: Arc<[usize]>,
}

/// Per-step decoder outputs.
#[derive(Clone, Copy, Debug)]
pub struct Predictions {
    /// `B × vision` in [0, 1].
    pub vision: Var,
    pub touch: Var,
    pub proprio: Var,
    /// `B × 54` logits, three rows of 18.
    pub command: Var,
    pub feedback: Var,
}

/// Encoded observation per modality.
#[derive(Clone, Copy, Debug)]
pub struct Encoded(pub [Var; 5]);

/// The forward model's parameters and layer wiring.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub config: FmConfig,
    pub params: ParamSet,
    action: Dense,
    vision_enc: Dense,
    touch_enc: Dense,
    proprio_enc: Dense,
    voice_enc: VoiceEncoder,
    priors: Vec<Head>,
    posteriors: Vec<Head>,
    core: Gru,
    vision_dec: VisionDecoder,
    touch_dec: Linear,
    proprio_dec: Linear,
    command_dec: VoiceDecoder,
    feedback_dec: VoiceDecoder,
}

fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

fn im2col_index(grid: usize, channels: usize) -> Arc<[usize]> {
    let mut idx = Vec::with_capacity(grid * grid * 9 * channels);
    for y in 0..grid {
        for x in 0..grid {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let sy = reflect(y as isize + dy, grid);
                    let sx = reflect(x as isize + dx, grid);
                    for c in 0..channels {
                        idx.push((sy * grid + sx) * channels + c);
                    }
                }
            }
        }
    }
    idx.into()
}

/// `out[h, w, c] = conv[(h/2, w/2), c·4 + (h%2)·2 + w%2]`.
fn shuffle_index(grid: usize) -> Arc<[usize]> {
    let side = grid * 2;
    let mut idx = Vec::with_capacity(side * side * 4);
    for h in 0..side {
        for w in 0..side {
            for c in 0..4 {
                let p = (h / 2) * grid + w / 2;
                idx.push(p * 16 + c * 4 + (h % 2) * 2 + w % 2);
            }
        }
    }
    idx.into()
}

impl ForwardModel {
    pub fn new<R: Rng + ?Sized>(config: FmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut ps = ParamSet::new();
        let lat = c.latents;
        let action = Dense::new(&mut ps, "fm.action", ACTION_DIM, c.action_enc, rng);
        let vision_enc = Dense::new(&mut ps, "fm.vision_enc", c.vision_size * c.vision_size * 4, c.vision_enc, rng);
        let touch_enc = Dense::new(&mut ps, "fm.touch_enc", TOUCH_PATCHES, c.touch_enc, rng);
        let proprio_enc = Dense::new(&mut ps, "fm.proprio_enc", 4, c.proprio_enc, rng);
        let voice_enc = VoiceEncoder {
            embed: Linear::new(&mut ps, "fm.voice_enc.embed", VOCAB_SIZE, c.voice_embed, rng),
            lift: Dense::new(&mut ps, "fm.voice_enc.lift", c.voice_embed, c.voice_width, rng),
            gru: Gru::new(&mut ps, "fm.voice_enc.gru", c.voice_width, c.voice_width, rng),
            out: Dense::new(&mut ps, "fm.voice_enc.out", c.voice_width, c.voice_enc_out, rng),
        };
        let ctx = c.hidden + c.action_enc;
        let mut priors = Vec::new();
        let mut posteriors = Vec::new();
        for m in Modality::ALL {
            let d = lat.dim(m);
            priors.push(Head::new(&mut ps, &alloc::format!("fm.prior.{}", m.name()), ctx, c.head_width, d, rng));
        }
        for m in Modality::ALL {
            let d = lat.dim(m);
            let inputs = ctx + c.encoded_width(m);
            posteriors.push(Head::new(&mut ps, &alloc::format!("fm.posterior.{}", m.name()), inputs, c.head_width, d, rng));
        }
        let core = Gru::new(&mut ps, "fm.core", lat.total(), c.hidden, rng);
        let di = c.decoder_input();
        let grid_cells = c.vision_grid * c.vision_grid;
        let vision_dec = VisionDecoder {
            lift: Linear::new(&mut ps, "fm.vision_dec.lift", di, grid_cells * c.vision_channels, rng),
            conv: Linear::new(&mut ps, "fm.vision_dec.conv", 9 * c.vision_channels, 16, rng),
            im2col: im2col_index(c.vision_grid, c.vision_channels),
            shuffle: shuffle_index(c.vision_grid),
        };
        let touch_dec = Linear::new(&mut ps, "fm.touch_dec", di, TOUCH_PATCHES, rng);
        let proprio_dec = Linear::new(&mut ps, "fm.proprio_dec", di, 4, rng);
        let mut voice_dec = |name: &str, ps: &mut ParamSet| VoiceDecoder {
            lift: Dense::new(ps, &alloc::format!("{name}.lift"), di, SENTENCE_LEN * c.voice_width, rng),
            gru: Gru::new(ps, &alloc::format!("{name}.gru"), c.voice_width, c.voice_width, rng),
            act: PRelu::new(ps, &alloc::format!("{name}.act")),
            logits: Linear::new(ps, &alloc::format!("{name}.logits"), c.voice_width, VOCAB_SIZE, rng),
        };
        let command_dec = voice_dec("fm.command_dec", &mut ps);
        let feedback_dec = voice_dec("fm.feedback_dec", &mut ps);
        Ok(Self {
            config,
            params: ps,
            action,
            vision_enc,
            touch_enc,
            proprio_enc,
            voice_enc,
            priors,
            posteriors,
            core,
            vision_dec,
            touch_dec,
            proprio_dec,
            command_dec,
            feedback_dec,
        })
    }

    pub fn layout(&self) -> ObsLayout {
        self.config.layout()
    }

    pub fn encode_action(&self, g: &mut Graph, p: &Bound, a: Var) -> Var {
        self.action.forward(g, p, a)
    }

    /// Shared voice encoder over three one-hot rows (`B × 54`).
    pub fn encode_voice(&self, g: &mut Graph, p: &Bound, rows: Var) -> Var {
        let e = &self.voice_enc;
        let b = g.shape(rows).0;
        let mut h = g.constant(Tensor::zeros(b, self.config.voice_width));
        for k in 0..SENTENCE_LEN {
            let tok = g.slice(rows, k * VOCAB_SIZE, VOCAB_SIZE);
            let x = e.embed.forward(g, p, tok);
            let x = e.lift.forward(g, p, x);
            h = e.gru.forward(g, p, x, h);
        }
        e.out.forward(g, p, h)
    }

    /// Encodes every modality of flat observations `obs` (`B × dim`).
    pub fn encode(&self, g: &mut Graph, p: &Bound, obs: Var) -> Encoded {
        let lay = self.layout();
        let part = |g: &mut Graph, m| {
            let (s, n) = lay.range(m);
            g.slice(obs, s, n)
        };
        let v = part(g, Modality::Vision);
        let t = part(g, Modality::Touch);
        let pr = part(g, Modality::Proprio);
        let cm = part(g, Modality::Command);
        let fb = part(g, Modality::Feedback);
        Encoded([
            self.vision_enc.forward(g, p, v),
            self.touch_enc.forward(g, p, t),
            self.proprio_enc.forward(g, p, pr),
            self.encode_voice(g, p, cm),
            self.encode_voice(g, p, fb),
        ])
    }

    /// Priors for every modality from `(h_{t-1}, enc(a_{t-1}))`.
    pub fn compute_prior(&self, g: &mut Graph, p: &Bound, h_prev: Var, a_enc: Var) -> [GaussianVars; 5] {
        let ctx = g.concat(&[h_prev, a_enc]);
        core::array::from_fn(|i| self.priors[i].forward(g, p, ctx))
    }

    /// Posterior of one modality given its encoded observation.
    pub fn compute_posterior(&self, g: &mut Graph, p: &Bound, m: Modality, h_prev: Var, a_enc: Var, enc: Var) -> GaussianVars {
        let x = g.concat(&[h_prev, a_enc, enc]);
        self.posteriors[m.index()].forward(g, p, x)
    }

    /// One GRU step over the concatenated latent sample.
    pub fn advance_hidden(&self, g: &mut Graph, p: &Bound, h_prev: Var, z: Var) -> Var {
        self.core.forward(g, p, z, h_prev)
    }

    fn decode_voice(&self, g: &mut Graph, p: &Bound, dec: &VoiceDecoder, x: Var) -> Var {
        let w = self.config.voice_width;
        let lifted = dec.lift.forward(g, p, x);
        let b = g.shape(x).0;
        let mut h = g.constant(Tensor::zeros(b, w));
        let mut rows = Vec::with_capacity(SENTENCE_LEN);
        for k in 0..SENTENCE_LEN {
            let inp = g.slice(lifted, k * w, w);
            h = dec.gru.forward(g, p, inp, h);
            let y = dec.act.forward(g, p, h);
            rows.push(dec.logits.forward(g, p, y));
        }
        g.concat(&rows)
    }

    /// Predicts `o_{t+1}` from `(h_t, enc(a_t))`.
    pub fn predict_next(&self, g: &mut Graph, p: &Bound, h: Var, a_enc: Var) -> Predictions {
        let c = &self.config;
        let x = g.concat(&[h, a_enc]);
        let b = g.shape(x).0;
        let cells = c.vision_grid * c.vision_grid;

        let vd = &self.vision_dec;
        let grid = vd.lift.forward(g, p, x);
        let cols = g.gather(grid, vd.im2col.clone());
        let cols = g.reshape(cols, b * cells, 9 * c.vision_channels);
        let conv = vd.conv.forward(g, p, cols);
        let conv = g.reshape(conv, b, cells * 16);
        let conv = g.tanh(conv);
        let img = g.gather(conv, vd.shuffle.clone());
        let img = g.scale(img, 0.5);
        let vision = g.add_scalar(img, 0.5);

        let unit = |g: &mut Graph, y: Var| {
            let y = g.tanh(y);
            let y = g.scale(y, 0.5);
            g.add_scalar(y, 0.5)
        };
        let touch = self.touch_dec.forward(g, p, x);
        let touch = unit(g, touch);
        let proprio = self.proprio_dec.forward(g, p, x);
        let proprio = unit(g, proprio);
        let command = self.decode_voice(g, p, &self.command_dec, x);
        let feedback = self.decode_voice(g, p, &self.feedback_dec, x);
        Predictions { vision, touch, proprio, command, feedback }
    }

    /// Samples `z = μ + σ ε` for every modality and concatenates them.
    fn sample(&self, g: &mut Graph, post: &[GaussianVars; 5], eps: Option<&Tensor>) -> Var {
        let parts: Vec<Var> = match eps {
            None => post.iter().map(|q| q.mean).collect(),
            Some(eps) => {
                let lat = self.config.latents;
                Modality::ALL
                    .iter()
                    .map(|&m| {
                        let e = g.constant(eps.slice_cols(lat.offset(m), lat.dim(m)));
                        let q = post[m.index()];
                        let se = g.mul(q.std, e);
                        g.add(q.mean, se)
                    })
                    .collect()
            }
        };
        g.concat(&parts)
    }

    /// Prior, posterior and next hidden state for one observation step.
    pub fn filter_step(&self, g: &mut Graph, p: &Bound, h_prev: Var, a_prev_enc: Var, obs: Var, eps: Option<&Tensor>) -> FilterStep {
        let enc = self.encode(g, p, obs);
        let prior = self.compute_prior(g, p, h_prev, a_prev_enc);
        let posterior: [GaussianVars; 5] =
            core::array::from_fn(|i| self.compute_posterior(g, p, Modality::ALL[i], h_prev, a_prev_enc, enc.0[i]));
        let z = self.sample(g, &posterior, eps);
        let h = self.advance_hidden(g, p, h_prev, z);
        FilterStep { prior, posterior, h }
    }

    /// The free energy terms of one step against target observations.
    fn terms(&self, g: &mut Graph, step: &FilterStep, pred: &Predictions, target: &Tensor) -> Vec<ModalityTerm> {
        let lay = self.layout();
        let mut terms = Vec::with_capacity(5);
        for m in Modality::ALL {
            let (s, n) = lay.range(m);
            let likelihood = match m {
                Modality::Vision | Modality::Touch | Modality::Proprio => {
                    let prediction = match m {
                        Modality::Vision => pred.vision,
                        Modality::Touch => pred.touch,
                        _ => pred.proprio,
                    };
                    Likelihood::Gaussian { prediction, target: g.constant(target.slice_cols(s, n)) }
                }
                Modality::Command | Modality::Feedback => {
                    let logits = if m == Modality::Command { pred.command } else { pred.feedback };
                    let b = g.shape(logits).0;
                    let logits = g.reshape(logits, b * SENTENCE_LEN, VOCAB_SIZE);
                    let t = target.slice_cols(s, n).reshaped(b * SENTENCE_LEN, VOCAB_SIZE);
                    Likelihood::Categorical { logits, targets: Arc::new(t), rows_per_item: SENTENCE_LEN }
                }
            };
            let q = step.posterior[m.index()];
            let pr = step.prior[m.index()];
            terms.push(ModalityTerm { posterior: (q.mean, q.std), prior: (pr.mean, pr.std), likelihood, weight: 1.0 });
        }
        terms
    }

    /// Builds the full replay pass on `g`.
    ///
    /// `noise[t]` holds `B × latent_total` standard normals for step `t`; pass
    /// `None` to use posterior means.
    pub fn replay_graph(&self, g: &mut Graph, p: &Bound, batch: &Batch, noise: Option<&[Tensor]>) -> ReplayGraph {
        let b = batch.size();
        let c = &self.config;
        let mut h = g.constant(Tensor::zeros(b, c.hidden));
        let zero_a = g.constant(Tensor::zeros(b, ACTION_DIM));
        let mut a_prev = self.encode_action(g, p, zero_a);
        let mut hidden = Vec::with_capacity(EPISODE_STEPS + 1);
        let mut klds = Vec::with_capacity(EPISODE_STEPS + 1);
        let mut total: Option<Var> = None;
        for t in 0..=EPISODE_STEPS {
            let obs = g.constant(batch.observations[t].clone());
            let step = self.filter_step(g, p, h, a_prev, obs, noise.map(|n| &n[t]));
            h = step.h;
            hidden.push(h);
            let kld: Vec<Var> = Modality::ALL
                .iter()
                .map(|&m| {
                    let (q, pr) = (step.posterior[m.index()], step.prior[m.index()]);
                    g.kld_diag(q.mean, q.std, pr.mean, pr.std)
                })
                .collect();
            klds.push(g.concat(&kld));
            if t == EPISODE_STEPS {
                break;
            }
            let act = g.constant(batch.actions[t].clone());
            let a_enc = self.encode_action(g, p, act);
            let pred = self.predict_next(g, p, h, a_enc);
            let terms = self.terms(g, &step, &pred, &batch.observations[t + 1]);
            let mask = g.constant(batch.mask[t].clone());
            let (rows, _) = fe::free_energy_rows(g, &terms, mask);
            let s = g.sum(rows);
            total = Some(match total {
                None => s,
                Some(acc) => g.add(acc, s),
            });
            a_prev = a_enc;
        }
        let total = total.expect("episodes have at least one step");
        let free_energy = g.scale(total, 1.0 / b as f64);
        ReplayGraph { free_energy, hidden, klds }
    }

    /// Standard normal noise for a replay pass.
    pub fn draw_noise<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<Tensor> {
        let n = self.config.latents.total();
        (0..=EPISODE_STEPS)
            .map(|_| {
                let mut t = Tensor::zeros(batch, n);
                fill_normal(rng, t.data_mut());
                t
            })
            .collect()
    }

    /// Free energy and its parameter gradients without updating.
    pub fn free_energy_and_grads(&self, batch: &Batch, noise: Option<&[Tensor]>) -> (ReplayPass, Vec<Tensor>) {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, true);
        let rg = self.replay_graph(&mut g, &p, batch, noise);
        let grads = g.backward(rg.free_energy);
        (rg.values(&g), p.grads(&grads, &self.params))
    }

    /// One optimiser step on the free energy of `batch`.
    pub fn train_step<R: Rng + ?Sized>(&mut self, opt: &mut Adam, batch: &Batch, rng: &mut R, epoch: usize) -> Result<ReplayPass> {
        let noise = self.draw_noise(batch.size(), rng);
        let (pass, grads) = self.free_energy_and_grads(batch, Some(&noise));
        if !pass.free_energy.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(CoreError::NonFinite { what: "free energy", epoch });
        }
        opt.step(&mut self.params, &grads);
        Ok(pass)
    }

    /// Starts a single-episode belief at `h = 0`, `a_{-1} = 0`.
    pub fn initial_belief(&self) -> Belief {
        Belief { h: Tensor::zeros(1, self.config.hidden), prev_action: [0.0; ACTION_DIM] }
    }

    /// Integrates one observation into `belief`. `eps` selects a posterior
    /// sample; `None` uses the posterior mean.
    pub fn observe(&self, belief: &mut Belief, obs: &[f64], eps: Option<&[f64]>) -> ObserveInfo {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let h = g.constant(belief.h.clone());
        let a = g.constant(Tensor::row_vector(&belief.prev_action));
        let a_enc = self.encode_action(&mut g, &p, a);
        let o = g.constant(Tensor::row_vector(obs));
        let eps = eps.map(Tensor::row_vector);
        let step = self.filter_step(&mut g, &p, h, a_enc, o, eps.as_ref());
        let mut kld = [0.0; 5];
        for m in Modality::ALL {
            let (q, pr) = (step.posterior[m.index()], step.prior[m.index()]);
            let k = g.kld_diag(q.mean, q.std, pr.mean, pr.std);
            kld[m.index()] = g.scalar(k);
        }
        belief.h = g.value(step.h).clone();
        let cm = step.posterior[Modality::Command.index()];
        ObserveInfo {
            kld,
            command_mean: g.value(cm.mean).data().to_vec(),
            posterior: gaussians(&g, &step.posterior),
            prior: gaussians(&g, &step.prior),
        }
    }

    /// Records the action taken from the current belief.
    pub fn act_taken(belief: &mut Belief, action: [f64; ACTION_DIM]) {
        belief.prev_action = action;
    }

    /// Decoded next-observation prediction, voices as logits.
    pub fn predict(&self, h: &Tensor, action: &[f64; ACTION_DIM]) -> PredictedObservation {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let hv = g.constant(h.clone());
        let a = g.constant(Tensor::row_vector(action));
        let a_enc = self.encode_action(&mut g, &p, a);
        let pr = self.predict_next(&mut g, &p, hv, a_enc);
        let row = |v: Var| g.value(v).data().to_vec();
        PredictedObservation {
            vision: row(pr.vision),
            touch: row(pr.touch),
            proprio: row(pr.proprio),
            command_logits: row(pr.command),
            feedback_logits: row(pr.feedback),
        }
    }

    /// Closed-loop imagination: only `initial` is real; each later input is
    /// the model's own prediction, voices re-encoded as one-hot argmax rows.
    pub fn dream_rollout(&self, initial: &[f64], policy: &dyn Policy, steps: usize) -> Result<Vec<DreamStep>> {
        if steps > EPISODE_STEPS {
            return Err(CoreError::Config(alloc::format!("dream length {steps} exceeds {EPISODE_STEPS}")));
        }
        if initial.len() != self.layout().dim() {
            return Err(CoreError::Dimension { what: "dream observation", expected: self.layout().dim(), got: initial.len() });
        }
        let mut belief = self.initial_belief();
        let mut input = initial.to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            self.observe(&mut belief, &input, None);
            let action = policy.act(belief.h.data());
            let pred = self.predict(&belief.h, &action);
            Self::act_taken(&mut belief, action);
            let next = pred.to_observation();
            out.push(DreamStep { input: core::mem::replace(&mut input, next), action, prediction: pred });
        }
        Ok(out)
    }
}

fn gaussians(g: &Graph, vars: &[GaussianVars; 5]) -> [DiagonalGaussian; 5] {
    core::array::from_fn(|i| {
        let m = g.value(vars[i].mean).data().to_vec();
        let s = g.value(vars[i].std).data().to_vec();
        DiagonalGaussian::new(m, s).expect("heads emit positive deviations")
    })
}

/// Graph nodes of one filtering step.
#[derive(Clone, Copy, Debug)]
pub struct FilterStep {
    pub prior: [GaussianVars; 5],
    pub posterior: [GaussianVars; 5],
    pub h: Var,
}

/// Nodes produced by [`ForwardModel::replay_graph`].
#[derive(Clone, Debug)]
pub struct ReplayGraph {
    /// `1 × 1`: masked free energy summed over steps, averaged over episodes.
    pub free_energy: Var,
    /// `h_0..h_30`, each `B × hidden`.
    pub hidden: Vec<Var>,
    /// Per step, `B × 5` KLDs in [`Modality::ALL`] order.
    pub klds: Vec<Var>,
}

impl ReplayGraph {
    pub fn values(&self, g: &Graph) -> ReplayPass {
        ReplayPass {
            free_energy: g.scalar(self.free_energy),
            hidden: self.hidden.iter().map(|&v| g.value(v).clone()).collect(),
            klds: self.klds.iter().map(|&v| g.value(v).clone()).collect(),
        }
    }
}

/// Detached values of a replay pass, consumed by the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayPass {
    pub free_energy: f64,
    pub hidden: Vec<Tensor>,
    pub klds: Vec<Tensor>,
}

/// Recurrent state of one running episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub h: Tensor,
    pub prev_action: [f64; ACTION_DIM],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObserveInfo {
    pub kld: [f64; 5],
    pub command_mean: Vec<f64>,
    pub posterior: [DiagonalGaussian; 5],
    pub prior: [DiagonalGaussian; 5],
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictedObservation {
    pub vision: Vec<f64>,
    pub touch: Vec<f64>,
    pub proprio: Vec<f64>,
    pub command_logits: Vec<f64>,
    pub feedback_logits: Vec<f64>,
}

fn argmax_rows(logits: &[f64], out: &mut Vec<f64>) {
    for row in logits.chunks_exact(VOCAB_SIZE) {
        let best = row
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > row[b] { i } else { b });
        out.extend((0..VOCAB_SIZE).map(|i| if i == best { 1.0 } else { 0.0 }));
    }
}

impl PredictedObservation {
    /// Flat observation with voices as one-hot argmax rows.
    pub fn to_observation(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.vision.len() + TOUCH_PATCHES + 4 + 2 * VOICE_WIDTH);
        out.extend_from_slice(&self.vision);
        out.extend_from_slice(&self.touch);
        out.extend_from_slice(&self.proprio);
        argmax_rows(&self.command_logits, &mut out);
        argmax_rows(&self.feedback_logits, &mut out);
        out
    }
}

/// Anything that maps a hidden state to a motor command.
pub trait Policy {
    fn act(&self, h: &[f64]) -> [f64; ACTION_DIM];
}

/// One imagined step: the input consumed, the command chosen, the prediction made.
#[derive(Clone, Debug, PartialEq)]
pub struct DreamStep {
    pub input: Vec<f64>,
    pub action: [f64; ACTION_DIM],
    pub prediction: PredictedObservation,
}

/// Zero noise in the shape [`ForwardModel::draw_noise`] produces.
pub fn zero_noise(batch: usize, latent_total: usize) -> Vec<Tensor> {
    vec![Tensor::zeros(batch, latent_total); EPISODE_STEPS + 1]
}
