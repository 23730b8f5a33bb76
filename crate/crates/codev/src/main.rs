use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use codev::manifest::parse_index;
use codev::run;
use codev_core::harness::{CuriosityPreset, NetworkPreset, RunConfig};
use codev_core::language::ScaleConfig;

#[derive(Parser)]
#[command(name = "codev", version, about = "Curiosity-driven action and language co-development experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its run directory.
    Train(TrainArgs),
    /// Score a trained run on its learned and unlearned goals.
    Evaluate {
        /// Run directory written by `train`.
        run: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write every evaluated step to this NDJSON file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Rolling means and 99% intervals across seeds.
    Aggregate {
        /// Run directories to combine.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Rolling window in evaluation points (defaults to the runs' setting).
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value = "aggregate")]
        out: PathBuf,
    },
    /// Imagine an episode from its first real frame and export both as PPM frames.
    Dream {
        run: PathBuf,
        /// Commanded sentence, e.g. "watch red pillar".
        #[arg(long)]
        sentence: String,
        #[arg(long, default_value_t = 30)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        zoom: usize,
        #[arg(long, default_value = "dream")]
        out: PathBuf,
    },
    /// Principal components of the command-voice latents.
    Pca {
        run: PathBuf,
        /// Episodes per sentence.
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "pca")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// none, sensorimotor or all.
    #[arg(long, default_value = "all")]
    curiosity: String,
    /// full, middle, small or VxCxS (active verbs, colors, shapes).
    #[arg(long, default_value = "full")]
    scale: String,
    /// tiny or full network widths.
    #[arg(long, default_value = "tiny")]
    network: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 50)]
    eval_every: usize,
    /// Rolling window in evaluation points.
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    episodes_per_sentence: usize,
    #[arg(long, default_value_t = 3e-4)]
    fm_lr: f64,
    #[arg(long, default_value_t = 3e-4)]
    agent_lr: f64,
    /// Which step's KLD pays the curiosity reward: current or next.
    #[arg(long, default_value = "current")]
    curiosity_index: String,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Print a progress line every this many epochs (0 disables).
    #[arg(long, default_value_t = 50)]
    log_every: usize,
}

impl TrainArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::new(CuriosityPreset::parse(&self.curiosity)?, ScaleConfig::parse(&self.scale)?, self.seed);
        c.network = NetworkPreset::parse(&self.network)?;
        c.epochs = self.epochs;
        c.eval_every = self.eval_every;
        c.rolling_window = self.window;
        c.episodes_per_sentence = self.episodes_per_sentence;
        c.fm_lr = self.fm_lr;
        c.agent_lr = self.agent_lr;
        c.curiosity_index = parse_index(&self.curiosity_index)?;
        c.validate()?;
        Ok(c)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let config = args.config()?;
            let log_every = args.log_every;
            let m = run::train(config, &args.out, |s| {
                if log_every > 0 && s.epoch % log_every == 0 {
                    eprintln!(
                        "epoch {:>6}  F {:>9.3}  curiosity {:.5}  entropy {:>6.3}  critic {:.5}  success {}",
                        s.epoch, s.free_energy, s.curiosity, s.update.entropy, s.update.critic_loss, s.episode_success
                    );
                }
            })?;
            println!("{} epochs in {:.1} s, results in {}", m.epochs_completed, m.wall_seconds, args.out.display());
        }
        Command::Evaluate { run: dir, episodes, seed, trace } => {
            let report = run::evaluate(&dir, episodes, seed, trace.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Aggregate { runs, window, out } => {
            let (epochs, agg) = run::aggregate(&runs, window, &out)?;
            if let (Some(e), [learned, unlearned, ..]) = (epochs.last(), agg.as_slice()) {
                let last = epochs.len() - 1;
                println!(
                    "epoch {e}: learned {:.3} [{:.3}, {:.3}], unlearned {:.3} [{:.3}, {:.3}]",
                    learned.mean[last], learned.lower[last], learned.upper[last], unlearned.mean[last], unlearned.lower[last], unlearned.upper[last]
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Dream { run: dir, sentence, steps, seed, zoom, out } => {
            let sentence = run::parse_sentence(&sentence)?;
            let report = run::dream(&dir, sentence, steps, seed, zoom, &out)?;
            println!("real episode success: {}; frames in {}", report["real_success"], out.display());
        }
        Command::Pca { run: dir, episodes, seed, out } => {
            let report = run::latent_pca(&dir, episodes, seed, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
