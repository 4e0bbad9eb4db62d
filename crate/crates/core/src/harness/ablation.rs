//! Variant ladder evaluated over a suite of sequences and seeds.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Variant};
use super::metrics::compute_metrics;
use super::tracker::{make_backend, run_sequence_with, Sequence};
use crate::error::{Error, Result};
use crate::observation::AppearanceBackend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub variant: Variant,
    pub sequence: String,
    pub seed: u64,
    pub precision: f64,
    pub success_auc: f64,
    pub lost_frames: usize,
    /// Set when the run failed; its scores are then zero.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub precision: f64,
    pub success_auc: f64,
    /// Percent change relative to PF; `None` when the PF value is zero.
    pub precision_gain: Option<f64>,
    pub success_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub runs: Vec<AblationRun>,
}

fn gain(value: f64, base: f64) -> Option<f64> {
    (base > 0.0).then(|| 100.0 * (value - base) / base)
}

/// Runs every variant on every sequence for every seed. Runs execute in
/// parallel; results are collected in a fixed order, so the table does not
/// depend on scheduling.
pub fn run_ablation(suite: &[Sequence], base: &RunConfig, seeds: &[u64]) -> Result<AblationTable> {
    if suite.is_empty() {
        return Err(Error::InvalidConfig("ablation suite is empty".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("ablation needs at least one seed".into()));
    }
    let backends: Vec<std::result::Result<Arc<dyn AppearanceBackend>, String>> = suite
        .iter()
        .map(|s| make_backend(base.backend, s).map_err(|e| e.to_string()))
        .collect();
    let jobs: Vec<(Variant, usize, u64)> = Variant::ALL
        .iter()
        .flat_map(|&v| (0..suite.len()).flat_map(move |i| seeds.iter().map(move |&s| (v, i, s))))
        .collect();
    let runs: Vec<AblationRun> = jobs
        .par_iter()
        .map(|&(variant, i, seed)| {
            let seq = &suite[i];
            let cfg = RunConfig {
                variant,
                seed,
                ..base.clone()
            };
            let outcome = backends[i].clone().and_then(|b| {
                let r = run_sequence_with(&cfg, seq, b.as_ref()).map_err(|e| e.to_string())?;
                let m = compute_metrics(&r).map_err(|e| e.to_string())?;
                Ok((m, r.frames.iter().filter(|f| f.diagnostics.lost).count()))
            });
            let (precision, success_auc, lost_frames, error) = match outcome {
                Ok((m, lost)) => (m.precision, m.success_auc, lost, None),
                Err(e) => (0.0, 0.0, seq.frames.len(), Some(e)),
            };
            AblationRun {
                variant,
                sequence: seq.name.clone(),
                seed,
                precision,
                success_auc,
                lost_frames,
                error,
            }
        })
        .collect();

    let mean = |v: Variant, f: fn(&AblationRun) -> f64| {
        let xs: Vec<f64> = runs.iter().filter(|r| r.variant == v).map(f).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let pf = (mean(Variant::Pf, |r| r.precision), mean(Variant::Pf, |r| r.success_auc));
    let rows = Variant::ALL
        .iter()
        .map(|&v| {
            let (p, s) = (mean(v, |r| r.precision), mean(v, |r| r.success_auc));
            AblationRow {
                variant: v,
                precision: p,
                success_auc: s,
                precision_gain: gain(p, pf.0),
                success_gain: gain(s, pf.1),
            }
        })
        .collect();
    Ok(AblationTable { rows, runs })
}

fn fmt_gain(g: Option<f64>) -> String {
    g.map(|g| format!("{g:.6}")).unwrap_or_default()
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// `variant,metric,value,gain` rows; gains are percentages over PF.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,metric,value,gain\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},precision,{:.6},{}", r.variant, r.precision, fmt_gain(r.precision_gain));
            let _ = writeln!(s, "{},success_auc,{:.6},{}", r.variant, r.success_auc, fmt_gain(r.success_gain));
        }
        s
    }

    /// Per-run scores, one line per variant/sequence/seed.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("variant,sequence,seed,precision,success_auc,lost_frames,error\n");
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6},{},{}",
                r.variant,
                r.sequence,
                r.seed,
                r.precision,
                r.success_auc,
                r.lost_frames,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }

    /// Fixed-width table with scores in percent and gains over PF.
    pub fn format_table(&self) -> String {
        let mut s = format!("{:<8}{:>12}{:>10}{:>12}{:>10}\n", "variant", "precision", "gain", "success", "gain");
        let pct = |g: Option<f64>, v: Variant| match (v, g) {
            (Variant::Pf, _) => "-".to_string(),
            (_, Some(g)) => format!("{g:+.1}%"),
            (_, None) => "n/a".to_string(),
        };
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8}{:>11.1}%{:>10}{:>11.1}%{:>10}",
                r.variant.name(),
                100.0 * r.precision,
                pct(r.precision_gain, r.variant),
                100.0 * r.success_auc,
                pct(r.success_gain, r.variant),
            );
        }
        s
    }
}
