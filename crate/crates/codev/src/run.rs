//! Run directories: training, reloading, evaluation, dreams, PCA and seed aggregation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use codev_core::analysis::{collect_command_latents, dream_from_episode, pca, silhouette};
use codev_core::fe::Modality;
use codev_core::harness::{aggregate_seeds, eval_scene_seed, rolling_mean, run_episode, EpochStats, LearnedController, Rates, RunConfig, Trainer};
use codev_core::language::{decode, decode_row, Color, SILENCE, Sentence, Shape, Utterance, Verb, Word, SENTENCE_LEN};
use serde_json::json;

use crate::charts::{self, Series};
use crate::checkpoint::{self, Checkpoint};
use crate::frames;
use crate::manifest::{Manifest, Status};
use crate::metrics::{MetricsTable, MetricsWriter};
use crate::trace;

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.csv";
pub const SPLIT: &str = "split.txt";
pub const CHECKPOINT: &str = "checkpoint.bin";

fn file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Writes the split as `train`/`test` tagged `verb|adjective|noun` records.
pub fn write_split(path: &Path, trainer: &Trainer) -> Result<()> {
    let mut out = String::from("# split seed ");
    out += &format!("{}, scale {}\n", trainer.split.seed, trainer.split.scale.name());
    for (tag, set) in [("train", &trainer.split.train), ("test", &trainer.split.test)] {
        for s in set {
            out += &format!("{tag} {}\n", s.to_record());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, trainer: &Trainer) -> Result<()> {
    checkpoint::save(
        path,
        &[
            ("model", &trainer.model.params),
            ("actor", &trainer.agent.actor.params),
            ("critics", &trainer.agent.critics.params),
            ("targets", &trainer.agent.critics.targets),
        ],
    )
}

fn restore(ck: &Checkpoint, trainer: &mut Trainer) -> Result<()> {
    ck.restore("model", &mut trainer.model.params)?;
    ck.restore("actor", &mut trainer.agent.actor.params)?;
    ck.restore("critics", &mut trainer.agent.critics.params)?;
    ck.restore("targets", &mut trainer.agent.critics.targets)
}

/// Trains into `dir`, flushing metrics and a checkpoint at every evaluation
/// point. A failed run leaves an `aborted` manifest behind.
pub fn train(config: RunConfig, dir: &Path, mut progress: impl FnMut(&EpochStats)) -> Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let clock = Instant::now();
    let mut manifest = Manifest::new(&config);
    manifest.files = [MANIFEST, METRICS, SPLIT, CHECKPOINT].map(String::from).to_vec();
    manifest.save(&file(dir, MANIFEST))?;
    let mut trainer = Trainer::new(config)?;
    write_split(&file(dir, SPLIT), &trainer)?;
    let mut metrics = MetricsWriter::create(&file(dir, METRICS), config.scale)?;
    let result = (|| -> Result<()> {
        while trainer.epoch < config.epochs {
            let stats = trainer.train_epoch()?;
            progress(&stats);
            if trainer.epoch % config.eval_every == 0 {
                metrics.push(&trainer.metrics_row()?)?;
                save_checkpoint(&file(dir, CHECKPOINT), &trainer)?;
            }
        }
        save_checkpoint(&file(dir, CHECKPOINT), &trainer)
    })();
    manifest.epochs_completed = trainer.epoch;
    manifest.wall_seconds = clock.elapsed().as_secs_f64();
    match result {
        Ok(()) => {
            manifest.status = Status::Complete;
            manifest.save(&file(dir, MANIFEST))?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = Status::Aborted;
            manifest.error = Some(format!("{e:#}"));
            manifest.save(&file(dir, MANIFEST))?;
            Err(e.context(format!("run in {} aborted after {} epochs", dir.display(), trainer.epoch)))
        }
    }
}

/// Rebuilds the trainer of a finished run with its checkpointed weights.
pub fn load(dir: &Path) -> Result<(Manifest, Trainer)> {
    let manifest = Manifest::load(&file(dir, MANIFEST))?;
    let config = manifest.config.config()?;
    let mut trainer = Trainer::new(config)?;
    restore(&checkpoint::load(&file(dir, CHECKPOINT))?, &mut trainer)?;
    trainer.epoch = manifest.epochs_completed;
    Ok((manifest, trainer))
}

/// Accepts `watch red pillar` or `watch|red|pillar`.
pub fn parse_sentence(text: &str) -> Result<Sentence> {
    if text.contains('|') {
        return Ok(Sentence::parse_record(text)?);
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    ensure!(words.len() >= SENTENCE_LEN, "expected `verb adjective noun`, got `{text}`");
    let n = words.len();
    match (Word::parse(&words[..n - 2].join(" "))?, Word::parse(words[n - 2])?, Word::parse(words[n - 1])?) {
        (Word::Verb(v), Word::Color(c), Word::Shape(s)) => Ok(Sentence::new(v, c, s)),
        _ => bail!("`{text}` is not a verb-adjective-noun sentence"),
    }
}

fn rates_json(r: &Rates) -> serde_json::Value {
    let verbs: serde_json::Map<_, _> =
        Verb::ALL.iter().filter_map(|v| r.verb(*v).map(|x| (v.slug().to_string(), json!(x)))).collect();
    json!({ "overall": r.overall(), "episodes": r.episodes(), "by_verb": verbs })
}

/// Scores the deterministic policy of a run on both halves of its split,
/// optionally tracing every episode.
pub fn evaluate(dir: &Path, episodes_per_sentence: usize, seed: u64, trace_out: Option<&Path>) -> Result<serde_json::Value> {
    let (_, trainer) = load(dir)?;
    let c = trainer.config;
    let mut ctrl = LearnedController::deterministic(&trainer.model, &trainer.agent);
    let mut sink = trace_out.map(|p| File::create(p).map(BufWriter::new)).transpose()?;
    let mut results = serde_json::Map::new();
    let mut index = 0;
    for (name, set) in [("learned", &trainer.split.train), ("unlearned", &trainer.split.test)] {
        let mut rates = Rates::default();
        for (i, s) in set.iter().enumerate() {
            for k in 0..episodes_per_sentence {
                let ep = run_episode(&mut ctrl, *s, c.scale, c.env_config(), trainer.layout(), eval_scene_seed(seed, i, k))?;
                rates.add(s.verb, ep.success);
                if let Some(out) = sink.as_mut() {
                    trace::write_episode(out, index, name, &ep)?;
                }
                index += 1;
            }
        }
        results.insert(name.into(), rates_json(&rates));
    }
    if let Some(mut out) = sink {
        out.flush()?;
    }
    let report = json!({ "epoch": trainer.epoch, "episodes_per_sentence": episodes_per_sentence, "seed": seed, "rates": results });
    fs::write(file(dir, "eval.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

fn utterance(rows: &[f64]) -> String {
    let rows: Vec<[f64; codev_core::language::VOCAB_SIZE]> =
        rows.chunks_exact(codev_core::language::VOCAB_SIZE).map(|c| c.try_into().unwrap()).collect();
    if rows.iter().all(|r| decode_row(r) == Ok(SILENCE)) {
        return "silence".into();
    }
    match decode(&rows) {
        Ok(Utterance::Silence) => "silence".into(),
        Ok(Utterance::Sentence(s)) => s.to_string(),
        Err(_) => "(unreadable)".into(),
    }
}

/// Runs one real episode and a dream started from its first frame, writing
/// both frame sequences as PPM plus a JSON summary of the dream.
pub fn dream(dir: &Path, sentence: Sentence, steps: usize, seed: u64, zoom: usize, out: &Path) -> Result<serde_json::Value> {
    let (_, trainer) = load(dir)?;
    let c = trainer.config;
    c.scale.validate(&sentence)?;
    fs::create_dir_all(out)?;
    let layout = *trainer.layout();
    let size = c.env_config().vision_size;
    let mut ctrl = LearnedController::deterministic(&trainer.model, &trainer.agent);
    let real = run_episode(&mut ctrl, sentence, c.scale, c.env_config(), &layout, seed)?;
    let dreamt = dream_from_episode(&trainer.model, &trainer.agent.actor, &real.observations, steps)?;
    for (t, obs) in real.observations.iter().enumerate().take(steps) {
        frames::save(&out.join(format!("real_{t:02}.ppm")), layout.slice(obs, Modality::Vision), size, zoom)?;
    }
    let mut log = Vec::new();
    for (t, step) in dreamt.iter().enumerate() {
        frames::save(&out.join(format!("dream_{t:02}.ppm")), layout.slice(&step.input, Modality::Vision), size, zoom)?;
        log.push(json!({
            "step": t,
            "action": step.action,
            "command": utterance(layout.slice(&step.input, Modality::Command)),
            "feedback": utterance(layout.slice(&step.input, Modality::Feedback)),
        }));
    }
    let report = json!({
        "sentence": sentence.to_string(),
        "seed": seed,
        "real_success": real.success,
        "real_steps": real.len(),
        "dream": log,
    });
    fs::write(out.join("dream.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// PCA of command latents over every sentence of the run's scale.
pub fn latent_pca(dir: &Path, episodes: usize, seed: u64, out: &Path) -> Result<serde_json::Value> {
    let (_, trainer) = load(dir)?;
    let c = trainer.config;
    fs::create_dir_all(out)?;
    let sentences = c.scale.all_sentences();
    let latents = collect_command_latents(&trainer.model, &trainer.agent, &sentences, episodes, c.scale, c.env_config(), seed)?;
    let k = 2.min(latents.data.cols());
    let p = pca(&latents.data, k)?;
    let mut w = csv::Writer::from_path(out.join("projections.csv"))?;
    w.write_record(["pc1", "pc2", "verb", "adjective", "noun", "step", "split"])?;
    for (r, (s, t)) in latents.labels.iter().enumerate() {
        let split = if trainer.split.train.contains(s) { "learned" } else { "unlearned" };
        let pc2 = if k > 1 { p.projections.get(r, 1).to_string() } else { String::new() };
        w.write_record([p.projections.get(r, 0).to_string(), pc2, s.verb.name().into(), s.color.name().into(), s.shape.name().into(), t.to_string(), split.into()])?;
    }
    w.flush()?;
    let points: Vec<(f64, f64)> = (0..p.projections.rows()).map(|r| (p.projections.get(r, 0), if k > 1 { p.projections.get(r, 1) } else { 0.0 })).collect();
    let plane = codev_core::tensor::Tensor::from_vec(points.len(), 2, points.iter().flat_map(|(a, b)| [*a, *b]).collect());
    let mut clusters = serde_json::Map::new();
    let by: [(&str, Box<dyn Fn(&Sentence) -> usize>, Vec<&str>); 3] = [
        ("verb", Box::new(|s: &Sentence| s.verb.index()), c.scale.verbs().iter().map(|v| v.name()).collect()),
        ("adjective", Box::new(|s: &Sentence| s.color.index()), c.scale.colors().iter().map(|x: &Color| x.name()).collect()),
        ("noun", Box::new(|s: &Sentence| s.shape.index()), c.scale.shapes().iter().map(|x: &Shape| x.name()).collect()),
    ];
    for (name, key, names) in &by {
        let groups: Vec<usize> = latents.labels.iter().map(|(s, _)| key(s)).collect();
        clusters.insert(name.to_string(), json!(silhouette(&plane, &groups)));
        let svg = charts::scatter(&format!("command latents by {name}"), "PC1", "PC2", &points, &groups, names);
        fs::write(out.join(format!("pca_{name}.svg")), svg)?;
    }
    let report = json!({
        "rows": latents.labels.len(),
        "explained_ratio": p.explained_ratio,
        "components": (0..k).map(|i| p.components.row(i).to_vec()).collect::<Vec<_>>(),
        "silhouette_pc_plane": clusters,
    });
    fs::write(out.join("pca.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Seed-aggregated curves of one metric column.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregated {
    pub column: String,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub const AGGREGATED_COLUMNS: [&str; 6] = ["learned", "unlearned", "curiosity", "entropy", "extrinsic", "free_energy"];

/// Rolling-averages each run's column over `window` evaluation points, then
/// takes the per-point mean and 99% interval across runs.
pub fn aggregate_tables(tables: &[MetricsTable], window: usize) -> Result<(Vec<usize>, Vec<Aggregated>)> {
    ensure!(!tables.is_empty(), "nothing to aggregate");
    let epochs = tables[0].epochs();
    for t in tables {
        ensure!(t.epochs() == epochs, "runs were evaluated at different epochs");
    }
    let mut out = Vec::new();
    for col in AGGREGATED_COLUMNS {
        let series = tables
            .iter()
            .map(|t| {
                let raw = t.column(col).with_context(|| format!("missing column {col}"))?;
                let xs: Vec<f64> = raw.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect();
                Ok(rolling_mean(&xs, window))
            })
            .collect::<Result<Vec<_>>>()?;
        let s = aggregate_seeds(&series)?;
        out.push(Aggregated {
            column: col.into(),
            mean: s.iter().map(|x| x.mean).collect(),
            lower: s.iter().map(|x| x.lower).collect(),
            upper: s.iter().map(|x| x.upper).collect(),
        });
    }
    Ok((epochs, out))
}

/// Aggregates run directories into `aggregate.csv` and SVG charts in `out`.
pub fn aggregate(runs: &[PathBuf], window: Option<usize>, out: &Path) -> Result<(Vec<usize>, Vec<Aggregated>)> {
    ensure!(!runs.is_empty(), "no run directories given");
    let mut tables = Vec::new();
    let mut default_window = None;
    for r in runs {
        tables.push(MetricsTable::read(&file(r, METRICS))?);
        if default_window.is_none() {
            default_window = Manifest::load(&file(r, MANIFEST)).ok().map(|m| m.config.rolling_window);
        }
    }
    let window = window.or(default_window).unwrap_or(10);
    let (epochs, agg) = aggregate_tables(&tables, window)?;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("aggregate.csv"))?;
    let mut header = vec!["epoch".to_string()];
    for a in &agg {
        header.extend(["mean", "lower", "upper"].map(|s| format!("{}_{s}", a.column)));
    }
    w.write_record(&header)?;
    for (i, e) in epochs.iter().enumerate() {
        let mut row = vec![e.to_string()];
        for a in &agg {
            row.extend([a.mean[i], a.lower[i], a.upper[i]].map(|x| x.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    let xs: Vec<f64> = epochs.iter().map(|&e| e as f64).collect();
    let series = |a: &Aggregated, name: &str| Series { name: name.into(), xs: xs.clone(), ys: a.mean.clone(), band: Some((a.lower.clone(), a.upper.clone())) };
    let success = charts::line_chart(
        &format!("rolling success rate, {} seeds", runs.len()),
        "epoch",
        "success rate",
        &[series(&agg[0], "learned goals"), series(&agg[1], "unlearned goals")],
    );
    fs::write(out.join("success.svg"), success)?;
    for a in &agg[2..] {
        fs::write(out.join(format!("{}.svg", a.column)), charts::line_chart(&a.column.replace('_', " "), "epoch", &a.column, &[series(a, &a.column)]))?;
    }
    Ok((epochs, agg))
}
