//! The versioned JSON run report.
//!
//! A report echoes every effective setting, so a stored report is enough
//! to rerun its job; it also carries the per-iteration instrumentation
//! (live nodes, edges, cycles, rescan work) and the post-run audit
//! summary.

use crate::drm::{IterationCounters, SprtTraceEntry};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Effective settings of one segmentation job.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub input: String,
    pub output: String,
    pub init: String,
    pub labels: Option<String>,
    pub grid_block: u32,
    pub median_radius: u32,
    pub quant_levels: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n0: u32,
    pub prob_floor: f64,
    pub max_samples: usize,
    pub deterministic: bool,
    pub engine: String,
    pub policy: String,
    pub seed: u64,
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub decode_ms: f64,
    pub init_ms: f64,
    pub build_ms: f64,
    pub merge_ms: f64,
    pub emit_ms: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuditSummary {
    pub not_under_merged: bool,
    pub not_over_merged: bool,
    pub objective_replay_ok: bool,
    pub replay_reproduces_labels: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: ConfigEcho,
    pub seed: u64,
    pub initial_regions: u32,
    pub final_regions: u32,
    pub merge_count: u64,
    pub blacklist_count: u64,
    pub f_total: f64,
    pub audit: AuditSummary,
    /// Initial node-degree distribution: index d holds the node count of
    /// degree d.
    pub degree_histogram: Vec<u64>,
    /// Fraction of initial nodes with degree below 15.
    pub degree_below_15_fraction: f64,
    /// Trials whose sample size was clipped by `max_samples`.
    pub sample_cap_hits: u64,
    pub iterations: Vec<IterationCounters>,
    pub timings_ms: PhaseTimings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sprt_trace: Option<Vec<SprtTraceEntry>>,
}

/// Fraction of nodes with degree strictly below the threshold.
pub fn degree_fraction_below(histogram: &[u64], threshold: usize) -> f64 {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return 1.0;
    }
    let below: u64 = histogram.iter().take(threshold).sum();
    below as f64 / total as f64
}
