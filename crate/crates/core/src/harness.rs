//! Training schedule, evaluation and seed aggregation.
//!
//! One epoch: draw a training sentence, roll one stochastic episode, store it,
//! then update the forward model, critics and actor once on a replay batch.
//! Every `eval_every` epochs the deterministic policy is scored on the
//! learned and unlearned sentences.

use alloc::string::String;
use alloc::vec::Vec;

use glam::DVec2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::agent::{Agent, AgentConfig, CuriosityIndex, UpdateStats};
use crate::env::{self, ArenaState, EnvConfig, MotorCommand, ObservationBundle, TraceRecord};
use crate::error::{CoreError, Result};
use crate::fe::IntrinsicConfig;
use crate::fm::{Belief, FmConfig, ForwardModel, ObsLayout};
use crate::language::{generate_split, ScaleConfig, Sentence, Split, Verb};
use crate::nn::Adam;
use crate::replay::{EpisodeRecord, ReplayBuffer, ACTION_DIM, BATCH_SIZE, CAPACITY};
use crate::rng::{derive_seed, fill_normal, stream, stream_rng, StreamRng};
use crate::EPISODE_STEPS;

/// Curiosity weights per the three agent types.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CuriosityPreset {
    None,
    Sensorimotor,
    All,
}

impl CuriosityPreset {
    pub const ALL: [CuriosityPreset; 3] = [CuriosityPreset::None, CuriosityPreset::Sensorimotor, CuriosityPreset::All];

    /// η for vision, touch, proprioception, feedback.
    pub fn eta(self) -> [f64; 4] {
        match self {
            CuriosityPreset::None => IntrinsicConfig::NO_CURIOSITY,
            CuriosityPreset::Sensorimotor => IntrinsicConfig::SENSORIMOTOR,
            CuriosityPreset::All => IntrinsicConfig::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CuriosityPreset::None => "none",
            CuriosityPreset::Sensorimotor => "sensorimotor",
            CuriosityPreset::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CoreError::Config(alloc::format!("unknown curiosity preset `{s}`")))
    }
}

/// Network widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkPreset {
    Full,
    Tiny,
}

impl NetworkPreset {
    pub fn fm(self) -> FmConfig {
        match self {
            NetworkPreset::Full => FmConfig::full(),
            NetworkPreset::Tiny => FmConfig::tiny(),
        }
    }

    /// Hidden width of actor and critics.
    pub fn agent_width(self) -> usize {
        match self {
            NetworkPreset::Full => 256,
            NetworkPreset::Tiny => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetworkPreset::Full => "full",
            NetworkPreset::Tiny => "tiny",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(NetworkPreset::Full),
            "tiny" => Ok(NetworkPreset::Tiny),
            _ => Err(CoreError::Config(alloc::format!("unknown network preset `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub curiosity: CuriosityPreset,
    pub scale: ScaleConfig,
    pub network: NetworkPreset,
    pub seed: u64,
    pub epochs: usize,
    pub eval_every: usize,
    /// Evaluation points per rolling-average window.
    pub rolling_window: usize,
    pub episodes_per_sentence: usize,
    pub fm_lr: f64,
    pub agent_lr: f64,
    pub curiosity_index: CuriosityIndex,
}

impl RunConfig {
    pub fn new(curiosity: CuriosityPreset, scale: ScaleConfig, seed: u64) -> Self {
        Self {
            curiosity,
            scale,
            network: NetworkPreset::Tiny,
            seed,
            epochs: 2000,
            eval_every: 50,
            rolling_window: 10,
            episodes_per_sentence: 1,
            fm_lr: 3e-4,
            agent_lr: 3e-4,
            curiosity_index: CuriosityIndex::Current,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 || self.rolling_window == 0 || self.episodes_per_sentence == 0 {
            return Err(CoreError::Config("eval_every, rolling_window and episodes_per_sentence must be positive".into()));
        }
        ScaleConfig::new(self.scale.verbs, self.scale.colors, self.scale.shapes)?;
        self.network.fm().validate()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig { vision_size: self.network.fm().vision_size }
    }
}

/// Anything that drives the robot through an episode.
pub trait Controller {
    fn begin(&mut self);
    fn act(&mut self, state: &ArenaState, obs: &ObservationBundle, flat: &[f64]) -> [f64; ACTION_DIM];
}

/// A finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub sentence: Sentence,
    /// Flat observations `o_0..o_len`.
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub rewards: Vec<f64>,
    pub success: bool,
    pub trace: Vec<TraceRecord>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn record(&self) -> Result<EpisodeRecord> {
        EpisodeRecord::new(&self.observations, &self.actions, &self.rewards)
    }
}

/// Runs one episode of `sentence` in the scene drawn from `env_seed`.
pub fn run_episode(
    ctrl: &mut dyn Controller,
    sentence: Sentence,
    scale: ScaleConfig,
    config: EnvConfig,
    layout: &ObsLayout,
    env_seed: u64,
) -> Result<Episode> {
    let (mut state, mut obs) = env::reset(env_seed, sentence, scale, config)?;
    ctrl.begin();
    let mut ep = Episode {
        sentence,
        observations: Vec::with_capacity(EPISODE_STEPS + 1),
        actions: Vec::with_capacity(EPISODE_STEPS),
        rewards: Vec::with_capacity(EPISODE_STEPS),
        success: false,
        trace: Vec::with_capacity(EPISODE_STEPS),
    };
    ep.observations.push(layout.flatten(&obs));
    while !state.done {
        let flat = ep.observations.last().expect("at least o_0");
        let cmd = MotorCommand::new(ctrl.act(&state, &obs, flat));
        let out = env::step(&mut state, cmd)?;
        ep.actions.push(cmd.0);
        ep.rewards.push(out.reward);
        ep.success |= out.reward > 0.0;
        ep.trace.push(TraceRecord::capture(&state, out.event, out.reward));
        ep.observations.push(layout.flatten(&out.observation));
        obs = out.observation;
    }
    Ok(ep)
}

/// The trained agent: filters observations and acts on `h_t`.
///
/// With `noise = None` latents use posterior means and the policy its
/// squashed mean; otherwise both are sampled from the given streams.
#[derive(Debug)]
pub struct LearnedController<'a> {
    pub model: &'a ForwardModel,
    pub agent: &'a Agent,
    pub belief: Belief,
    pub noise: Option<(&'a mut StreamRng, &'a mut StreamRng)>,
    eps: Vec<f64>,
}

impl<'a> LearnedController<'a> {
    pub fn deterministic(model: &'a ForwardModel, agent: &'a Agent) -> Self {
        Self { model, agent, belief: model.initial_belief(), noise: None, eps: Vec::new() }
    }

    pub fn stochastic(model: &'a ForwardModel, agent: &'a Agent, policy: &'a mut StreamRng, latent: &'a mut StreamRng) -> Self {
        let eps = alloc::vec![0.0; model.config.latents.total()];
        Self { model, agent, belief: model.initial_belief(), noise: Some((policy, latent)), eps }
    }
}

impl Controller for LearnedController<'_> {
    fn begin(&mut self) {
        self.belief = self.model.initial_belief();
    }

    fn act(&mut self, _: &ArenaState, _: &ObservationBundle, flat: &[f64]) -> [f64; ACTION_DIM] {
        let action = match &mut self.noise {
            None => {
                self.model.observe(&mut self.belief, flat, None);
                self.agent.actor.act(self.belief.h.data(), None).0
            }
            Some((policy, latent)) => {
                fill_normal(&mut **latent, &mut self.eps);
                self.model.observe(&mut self.belief, flat, Some(&self.eps));
                let mut e = [0.0; ACTION_DIM];
                fill_normal(&mut **policy, &mut e);
                self.agent.actor.act(self.belief.h.data(), Some(&e)).0
            }
        };
        ForwardModel::act_taken(&mut self.belief, action);
        action
    }
}

/// Uniform commands in `[-1, 1]^4`.
#[derive(Debug)]
pub struct RandomController {
    pub rng: StreamRng,
}

impl Controller for RandomController {
    fn begin(&mut self) {}

    fn act(&mut self, _: &ArenaState, _: &ObservationBundle, _: &[f64]) -> [f64; ACTION_DIM] {
        core::array::from_fn(|_| self.rng.gen_range(-1.0..=1.0))
    }
}

/// Hand-built Watch solver reading the true state: turn to the target, then
/// hold a standoff distance while facing it.
#[derive(Clone, Copy, Debug)]
pub struct ScriptedWatch {
    pub standoff: f64,
}

impl Default for ScriptedWatch {
    fn default() -> Self {
        Self { standoff: 8.0 }
    }
}

impl Controller for ScriptedWatch {
    fn begin(&mut self) {}

    fn act(&mut self, state: &ArenaState, _: &ObservationBundle, _: &[f64]) -> [f64; ACTION_DIM] {
        let r = &state.robot;
        let target = state.objects[0].position;
        let dist = (target - r.position).length();
        let in_band = (dist - self.standoff).abs() < 1.5;
        let goal = if in_band { target } else { self.standoff_point(target, r.position) };
        let to = goal - r.position;
        let bearing = r.forward().angle_to(to);
        // spin at ω = 10 (right − left) rad/s for 0.25 s per step
        let turn = (0.3 * bearing).clamp(-0.3, 0.3);
        let aligned = bearing.abs() < 10f64.to_radians();
        let drive = if in_band || !aligned { 0.0 } else { (0.2 * to.length()).clamp(0.0, 0.5) };
        [drive - turn, drive + turn, 0.0, 0.0]
    }
}

impl ScriptedWatch {
    /// Closest point to `from` at the standoff distance from `target` that
    /// keeps the body clear of the walls.
    fn standoff_point(&self, target: DVec2, from: DVec2) -> DVec2 {
        let limit = crate::env::ARENA_HALF - 2.0 * crate::env::BODY_HALF;
        (0..72)
            .map(|k| {
                let a = k as f64 * core::f64::consts::TAU / 72.0;
                target + self.standoff * DVec2::new(libm::cos(a), libm::sin(a))
            })
            .filter(|p| p.x.abs() <= limit && p.y.abs() <= limit)
            .min_by(|a, b| (*a - from).length().total_cmp(&(*b - from).length()))
            .unwrap_or(target)
    }
}

/// Success rates grouped by verb.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rates {
    /// `(successes, episodes)` per verb in token order.
    pub by_verb: [(u32, u32); 6],
}

impl Rates {
    pub fn add(&mut self, verb: Verb, success: bool) {
        let e = &mut self.by_verb[verb.index()];
        e.0 += u32::from(success);
        e.1 += 1;
    }

    pub fn verb(&self, verb: Verb) -> Option<f64> {
        let (s, n) = self.by_verb[verb.index()];
        (n > 0).then(|| s as f64 / n as f64)
    }

    pub fn overall(&self) -> Option<f64> {
        let (s, n) = self.by_verb.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        (n > 0).then(|| s as f64 / n as f64)
    }

    pub fn episodes(&self) -> u32 {
        self.by_verb.iter().map(|x| x.1).sum()
    }
}

/// Scene seed of episode `k` of sentence `i` in an evaluation pass.
pub fn eval_scene_seed(seed: u64, sentence_index: usize, k: usize) -> u64 {
    derive_seed(derive_seed(seed, stream::EVAL), (sentence_index * 1_000_003 + k) as u64)
}

/// Rolls `episodes_per_sentence` episodes of every sentence.
pub fn evaluate(
    ctrl: &mut dyn Controller,
    sentences: &[Sentence],
    episodes_per_sentence: usize,
    scale: ScaleConfig,
    config: EnvConfig,
    layout: &ObsLayout,
    seed: u64,
) -> Result<Rates> {
    let mut rates = Rates::default();
    for (i, s) in sentences.iter().enumerate() {
        for k in 0..episodes_per_sentence {
            let ep = run_episode(ctrl, *s, scale, config, layout, eval_scene_seed(seed, i, k))?;
            rates.add(s.verb, ep.success);
        }
    }
    Ok(rates)
}

/// Success rate over `episodes` episodes cycling through `sentences`.
pub fn success_rate(
    ctrl: &mut dyn Controller,
    sentences: &[Sentence],
    episodes: usize,
    scale: ScaleConfig,
    config: EnvConfig,
    layout: &ObsLayout,
    seed: u64,
) -> Result<f64> {
    let mut wins = 0;
    for k in 0..episodes {
        let i = k % sentences.len();
        let ep = run_episode(ctrl, sentences[i], scale, config, layout, eval_scene_seed(seed, i, k / sentences.len()))?;
        wins += usize::from(ep.success);
    }
    Ok(wins as f64 / episodes as f64)
}

/// One line of the metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub learned: Rates,
    pub unlearned: Rates,
    /// Means over the epochs since the previous row.
    pub curiosity: f64,
    pub entropy: f64,
    pub extrinsic: f64,
    pub free_energy: f64,
}

/// Per-epoch training diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub free_energy: f64,
    /// Mean intrinsic reward over the batch's real steps.
    pub curiosity: f64,
    /// Mean extrinsic reward over the batch's real steps.
    pub extrinsic: f64,
    pub episode_success: bool,
    pub episode_len: usize,
    pub update: UpdateStats,
}

/// Owns every piece of training state for one run.
#[derive(Debug)]
pub struct Trainer {
    pub config: RunConfig,
    pub split: Split,
    pub model: ForwardModel,
    pub agent: Agent,
    pub fm_opt: Adam,
    pub buffer: ReplayBuffer,
    pub epoch: usize,
    layout: ObsLayout,
    command_rng: StreamRng,
    env_rng: StreamRng,
    policy_rng: StreamRng,
    latent_rng: StreamRng,
    replay_rng: StreamRng,
    update_rng: StreamRng,
    window: Vec<EpochStats>,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let mut init = stream_rng(seed, stream::INIT);
        let fm_cfg = config.network.fm();
        let model = ForwardModel::new(fm_cfg, &mut init)?;
        let mut ac = AgentConfig::new(fm_cfg.hidden, config.network.agent_width(), IntrinsicConfig::new(config.curiosity.eta()));
        ac.lr = config.agent_lr;
        ac.curiosity_index = config.curiosity_index;
        let agent = Agent::new(ac, &mut init)?;
        let fm_opt = Adam::new(&model.params, config.fm_lr);
        Ok(Self {
            config,
            split: generate_split(config.scale, seed),
            layout: model.layout(),
            model,
            agent,
            fm_opt,
            buffer: ReplayBuffer::new(CAPACITY),
            epoch: 0,
            command_rng: stream_rng(seed, stream::COMMAND),
            env_rng: stream_rng(seed, stream::ENV),
            policy_rng: stream_rng(seed, stream::POLICY),
            latent_rng: stream_rng(seed, stream::LATENT),
            replay_rng: stream_rng(seed, stream::REPLAY),
            update_rng: stream_rng(seed, stream::UPDATE),
            window: Vec::new(),
        })
    }

    pub fn layout(&self) -> &ObsLayout {
        &self.layout
    }

    /// Collects one episode and performs one round of updates.
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.epoch + 1;
        let sentence = *self.split.train.choose(&mut self.command_rng).expect("training split is never empty");
        let env_seed: u64 = self.env_rng.gen();
        let ep = {
            let mut ctrl = LearnedController::stochastic(&self.model, &self.agent, &mut self.policy_rng, &mut self.latent_rng);
            run_episode(&mut ctrl, sentence, self.config.scale, self.config.env_config(), &self.layout, env_seed)?
        };
        self.buffer.push(ep.record()?);
        let batch = self.buffer.sample(BATCH_SIZE, &mut self.replay_rng)?;
        let pass = self.model.train_step(&mut self.fm_opt, &batch, &mut self.update_rng, epoch)?;
        let tr = self.agent.transitions(&pass, &batch);
        let update = self.agent.update(&tr, &mut self.update_rng, epoch)?;
        let stats = EpochStats {
            epoch,
            free_energy: pass.free_energy,
            curiosity: tr.mean_curiosity(),
            extrinsic: tr.mean_reward(),
            episode_success: ep.success,
            episode_len: ep.len(),
            update,
        };
        if !stats.curiosity.is_finite() {
            return Err(CoreError::NonFinite { what: "curiosity", epoch });
        }
        self.epoch = epoch;
        self.window.push(stats);
        Ok(stats)
    }

    /// Scores the deterministic policy on both halves of the split.
    pub fn evaluate(&self) -> Result<(Rates, Rates)> {
        let c = &self.config;
        let mut ctrl = LearnedController::deterministic(&self.model, &self.agent);
        // fresh scenes at every evaluation point
        let seed = derive_seed(c.seed, self.epoch as u64);
        let learned = evaluate(&mut ctrl, &self.split.train, c.episodes_per_sentence, c.scale, c.env_config(), &self.layout, seed)?;
        let unlearned = evaluate(&mut ctrl, &self.split.test, c.episodes_per_sentence, c.scale, c.env_config(), &self.layout, seed)?;
        Ok((learned, unlearned))
    }

    /// Evaluates and summarises the epochs since the previous row.
    pub fn metrics_row(&mut self) -> Result<MetricsRow> {
        let (learned, unlearned) = self.evaluate()?;
        let n = self.window.len().max(1) as f64;
        let mean = |f: fn(&EpochStats) -> f64| self.window.iter().map(f).sum::<f64>() / n;
        let row = MetricsRow {
            epoch: self.epoch,
            learned,
            unlearned,
            curiosity: mean(|s| s.curiosity),
            entropy: mean(|s| s.update.entropy),
            extrinsic: mean(|s| s.extrinsic),
            free_energy: mean(|s| s.free_energy),
        };
        self.window.clear();
        Ok(row)
    }

    /// Trains to `config.epochs`, calling `on_epoch` after every epoch and
    /// `on_row` at every evaluation point.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochStats), mut on_row: impl FnMut(&MetricsRow)) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        while self.epoch < self.config.epochs {
            let stats = self.train_epoch()?;
            on_epoch(&stats);
            if self.epoch % self.config.eval_every == 0 {
                let row = self.metrics_row()?;
                on_row(&row);
                rows.push(row);
            }
        }
        Ok(rows)
    }
}

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Mean and normal-approximation 99% interval at one evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per-index mean and 99% interval across equally long series.
/// A single series gets a zero-width interval.
pub fn aggregate_seeds(series: &[Vec<f64>]) -> Result<Vec<Summary>> {
    let Some(first) = series.first() else {
        return Err(CoreError::Config("no series to aggregate".into()));
    };
    if let Some(bad) = series.iter().find(|s| s.len() != first.len()) {
        return Err(CoreError::Dimension { what: "seed series length", expected: first.len(), got: bad.len() });
    }
    let n = series.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            let mean = series.iter().map(|s| s[i]).sum::<f64>() / n;
            let half = if series.len() < 2 {
                0.0
            } else {
                let var = series.iter().map(|s| (s[i] - mean) * (s[i] - mean)).sum::<f64>() / (n - 1.0);
                Z99 * libm::sqrt(var / n)
            };
            Summary { mean, lower: mean - half, upper: mean + half }
        })
        .collect())
}

/// Trailing mean over at most `window` points.
pub fn rolling_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Column names of the metrics file for `scale`.
pub fn metrics_header(scale: &ScaleConfig) -> Vec<String> {
    let mut cols: Vec<String> = ["epoch", "learned", "unlearned"].iter().map(|s| String::from(*s)).collect();
    for set in ["learned", "unlearned"] {
        for v in scale.verbs() {
            cols.push(alloc::format!("{set}_{}", v.slug()));
        }
    }
    for s in ["curiosity", "entropy", "extrinsic", "free_energy"] {
        cols.push(s.into());
    }
    cols
}

/// Cells matching [`metrics_header`]; missing rates are empty.
pub fn metrics_cells(row: &MetricsRow, scale: &ScaleConfig) -> Vec<String> {
    let rate = |r: Option<f64>| r.map_or(String::new(), |x| alloc::format!("{x}"));
    let mut cells = alloc::vec![alloc::format!("{}", row.epoch), rate(row.learned.overall()), rate(row.unlearned.overall())];
    for set in [&row.learned, &row.unlearned] {
        for &v in scale.verbs() {
            cells.push(rate(set.verb(v)));
        }
    }
    for x in [row.curiosity, row.entropy, row.extrinsic, row.free_energy] {
        cells.push(alloc::format!("{x}"));
    }
    cells
}
