//! Metrics CSV: one row per evaluation point.
//!
//! Columns: `epoch`, overall `learned` and `unlearned` success rates, one
//! rate per active verb for each half of the split (`learned_<verb>`,
//! `unlearned_<verb>`), then the means since the previous row of
//! `curiosity`, `entropy`, `extrinsic` reward and `free_energy`. A verb
//! without evaluated episodes leaves its cell empty.

use std::fs::File;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use codev_core::harness::{metrics_cells, metrics_header, MetricsRow};
use codev_core::language::ScaleConfig;

pub struct MetricsWriter {
    out: csv::Writer<File>,
    scale: ScaleConfig,
}

impl MetricsWriter {
    pub fn create(path: &Path, scale: ScaleConfig) -> Result<Self> {
        let mut out = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        out.write_record(metrics_header(&scale))?;
        out.flush()?;
        Ok(Self { out, scale })
    }

    pub fn push(&mut self, row: &MetricsRow) -> Result<()> {
        self.out.write_record(metrics_cells(row, &self.scale))?;
        self.out.flush()?;
        Ok(())
    }
}

/// A metrics file read back; empty cells become `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            ensure!(rec.len() == header.len(), "{}: ragged row", path.display());
            let row = rec
                .iter()
                .map(|c| if c.is_empty() { Ok(None) } else { c.parse::<f64>().map(Some) })
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("{}: bad number", path.display()))?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn epochs(&self) -> Vec<usize> {
        self.column("epoch").unwrap_or_default().into_iter().map(|e| e.unwrap_or(0.0) as usize).collect()
    }
}
