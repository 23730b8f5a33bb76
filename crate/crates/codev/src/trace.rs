//! Newline-delimited JSON episode traces, one object per environment step.

use std::io::Write;

use anyhow::Result;
use codev_core::harness::Episode;
use serde_json::json;

pub fn write_episode(out: &mut impl Write, index: usize, split: &str, ep: &Episode) -> Result<()> {
    for (rec, action) in ep.trace.iter().zip(&ep.actions) {
        let line = json!({
            "episode": index,
            "split": split,
            "sentence": ep.sentence.to_string(),
            "step": rec.step,
            "action": action,
            "position": rec.position,
            "heading": rec.heading,
            "yaw": rec.yaw,
            "pitch": rec.pitch,
            "objects": rec.objects,
            "event": rec.event.map(|e| e.sentence().to_string()),
            "reward": rec.reward,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}
