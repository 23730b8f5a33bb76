//! Acceptance gate: one PASS/FAIL line per criterion, then a single verdict.
//!
//! The training criteria share runs: seed A is trained twice (determinism),
//! seeds B and C once each, and a short run covers the no-curiosity preset.
//! Expect roughly an hour on one core.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use codev::metrics::MetricsTable;
use codev::run;
use codev_core::agent::CuriosityIndex;
use codev_core::harness::{success_rate, CuriosityPreset, LearnedController, RandomController, RunConfig};
use codev_core::language::ScaleConfig;
use codev_core::rng::stream_rng;
use common::checks;
use common::fixtures::{split, success};

const SEEDS: [u64; 3] = [1, 2, 3];
const BASELINE_EPISODES: usize = 200;
const NO_CURIOSITY_EPOCHS: usize = 200;

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, n: usize, pass: bool, detail: String) {
        let line = format!("criterion {n:>2}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
        // straight to the handle so the lines survive output capture
        let _ = std::io::stdout().lock().write_all(line.as_bytes());
        self.lines.push((n, pass, detail));
    }
}

/// Runs a panicking fixture; the panic message becomes the failure detail.
fn fixture(f: impl FnOnce()) -> Result<(), String> {
    panic::catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
    })
}

fn smoke_config(curiosity: CuriosityPreset, seed: u64) -> RunConfig {
    RunConfig::new(curiosity, ScaleConfig::new(2, 2, 2).unwrap(), seed)
}

fn kld(r: &mut Report) {
    let clock = Instant::now();
    let random = checks::kld_random_pairs_error();
    let analytic = checks::kld_analytic_errors();
    let t = clock.elapsed();
    let pass = random < 1e-6 && analytic.iter().all(|e| *e < 1e-9) && t < Duration::from_secs(1);
    r.record(1, pass, format!("quadrature |Δ| {random:.2e}, analytic {:.1e}/{:.1e}, {t:.2?}", analytic[0], analytic[1]));
}

fn gradients(r: &mut Report) {
    let clock = Instant::now();
    let errors = [
        ("F", checks::free_energy_fd()),
        ("posterior KLD", checks::posterior_kld_fd()),
        ("critic", checks::critic_loss_fd()),
        ("actor", checks::actor_loss_fd()),
    ];
    let t = clock.elapsed();
    let pass = errors.iter().all(|(_, e)| *e < 1e-4) && t < Duration::from_secs(120);
    let detail: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    r.record(2, pass, format!("worst relative error {}, {t:.2?}", detail.join(", ")));
}

fn mask(r: &mut Report) {
    let mut detail = Vec::new();
    let mut pass = true;
    for index in [CuriosityIndex::Current, CuriosityIndex::Next] {
        let (a, b) = checks::mask_pair(index);
        let same = [a.free_energy == b.free_energy, a.critic == b.critic, a.actor == b.actor];
        let grads = a.fm_grads == b.fm_grads && a.critic_grads == b.critic_grads && a.actor_grads == b.actor_grads;
        pass &= same.iter().all(|x| *x) && grads;
        detail.push(format!(
            "{index:?}: ΔF {:e} Δcritic {:e} Δactor {:e} gradients {}",
            b.free_energy - a.free_energy,
            b.critic - a.critic,
            b.actor - a.actor,
            if grads { "equal" } else { "differ" }
        ));
    }
    r.record(3, pass, detail.join("; "));
}

fn thresholds(r: &mut Report) {
    let cases: [(&str, fn()); 9] = [
        ("facing", success::facing_boundary),
        ("watch band", success::watch_band),
        ("near band", success::near_band_and_contact),
        ("hand height", success::touch_top_needs_a_high_hand),
        ("push", success::push_thresholds),
        ("wheel gate", success::wheel_gate_on_sideways_pushes),
        ("streaks", success::streak_lengths),
        ("streak restart", success::one_failed_step_restarts_the_streak),
        ("prioritisation", success::prioritisation_table),
    ];
    let failed: Vec<String> = cases.iter().filter_map(|(name, f)| fixture(*f).err().map(|e| format!("{name}: {e}"))).collect();
    let detail = if failed.is_empty() { format!("{} fixture groups", cases.len()) } else { failed.join("; ") };
    r.record(4, failed.is_empty(), detail);
}

fn splits(r: &mut Report) {
    let res = fixture(split::preset_counts_and_invariants_over_seeds).and_then(|_| fixture(split::splits_depend_only_on_the_seed));
    r.record(5, res.is_ok(), res.err().unwrap_or_else(|| "full 60/180, middle 33/100, small 16/48 over 100 seeds".into()));
}

/// Everything the training criteria need from one run.
struct Trained {
    metrics: Vec<u8>,
    table: MetricsTable,
    curiosity: Vec<f64>,
    wall: Duration,
    dir: tempfile::TempDir,
}

fn train(config: RunConfig) -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let mut curiosity = Vec::with_capacity(config.epochs);
    let clock = Instant::now();
    run::train(config, dir.path(), |s| curiosity.push(s.curiosity)).unwrap();
    let wall = clock.elapsed();
    let path = dir.path().join(run::METRICS);
    Trained { metrics: std::fs::read(&path).unwrap(), table: MetricsTable::read(&path).unwrap(), curiosity, wall, dir }
}

fn determinism(r: &mut Report, a: &Trained, again: &Trained) {
    let pass = a.metrics == again.metrics && !a.metrics.is_empty();
    r.record(6, pass, format!("{} and {} bytes, {}", a.metrics.len(), again.metrics.len(), if pass { "identical" } else { "differ" }));
}

fn smoke_learning(r: &mut Report, dir: &Path, wall: Duration) {
    let (_, trainer) = run::load(dir).unwrap();
    let c = trainer.config;
    let goals = trainer.split.train.clone();
    let mut random = RandomController { rng: stream_rng(c.seed, 0xba5e) };
    let baseline = success_rate(&mut random, &goals, BASELINE_EPISODES, c.scale, c.env_config(), trainer.layout(), 7).unwrap();
    let mut policy = LearnedController::deterministic(&trainer.model, &trainer.agent);
    let learned = success_rate(&mut policy, &goals, BASELINE_EPISODES, c.scale, c.env_config(), trainer.layout(), 77).unwrap();
    let pass = learned > 0.0 && learned >= 5.0 * baseline && wall < Duration::from_secs(3600);
    r.record(7, pass, format!("learned {learned:.3} vs 5 × random {baseline:.3} over {BASELINE_EPISODES} episodes, trained in {wall:.0?}"));
}

fn ordering(r: &mut Report, tables: &[MetricsTable], window: usize) {
    let (epochs, series) = run::aggregate_tables(tables, window).unwrap();
    let mean = |name: &str| series.iter().find(|s| s.column == name).unwrap().mean.clone();
    let (learned, unlearned) = (mean("learned"), mean("unlearned"));
    let behind: Vec<String> = epochs
        .iter()
        .zip(learned.iter().zip(&unlearned))
        .filter(|(_, (l, u))| l < u)
        .map(|(e, (l, u))| format!("{e}: {l:.3}<{u:.3}"))
        .collect();
    let detail = if behind.is_empty() {
        format!("learned ≥ unlearned at all {} points (seed mean, window {window})", epochs.len())
    } else {
        format!("learned behind at {} of {} points, first {}", behind.len(), epochs.len(), behind[..behind.len().min(3)].join(", "))
    };
    r.record(8, behind.is_empty(), detail);
}

fn curiosity_signal(r: &mut Report, all: &[f64], none: &[f64]) {
    let min = all.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = !all.is_empty() && min > 0.0 && !none.is_empty() && none.iter().all(|c| *c == 0.0);
    let nonzero = none.iter().filter(|c| **c != 0.0).count();
    r.record(9, pass, format!("all-preset minimum {min:.3e} over {} epochs; none-preset nonzero epochs {nonzero}/{}", all.len(), none.len()));
}

fn pca_oracle(r: &mut Report) {
    let worst = checks::pca_oracle_error(0..10, 50, 5).max(checks::pca_oracle_error(10..20, 200, 8));
    r.record(10, worst < 1e-8, format!("worst difference {worst:.1e}"));
}

fn dream(r: &mut Report) {
    let (frame0, untainted, chained) = checks::dream_wiring();
    r.record(11, frame0 && untainted && chained, format!("frame 0 bitwise {frame0}, taint-free {untainted}, fed own predictions {chained}"));
}

#[test]
fn acceptance() {
    let mut r = Report { lines: Vec::new() };
    kld(&mut r);
    gradients(&mut r);
    mask(&mut r);
    thresholds(&mut r);
    splits(&mut r);
    pca_oracle(&mut r);
    dream(&mut r);

    let runs: Vec<Trained> = SEEDS.iter().map(|&s| train(smoke_config(CuriosityPreset::All, s))).collect();
    let again = train(smoke_config(CuriosityPreset::All, SEEDS[0]));
    determinism(&mut r, &runs[0], &again);
    smoke_learning(&mut r, runs[0].dir.path(), runs[0].wall);
    let tables: Vec<MetricsTable> = runs.iter().map(|t| t.table.clone()).collect();
    ordering(&mut r, &tables, smoke_config(CuriosityPreset::All, SEEDS[0]).rolling_window);
    let mut quiet = smoke_config(CuriosityPreset::None, SEEDS[0]);
    quiet.epochs = NO_CURIOSITY_EPOCHS;
    let none = train(quiet);
    curiosity_signal(&mut r, &runs[0].curiosity, &none.curiosity);

    r.lines.sort_by_key(|l| l.0);
    let failed: Vec<usize> = r.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
