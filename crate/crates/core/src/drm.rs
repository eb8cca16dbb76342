//! The merge engines.
//!
//! A region pair merges exactly when it satisfies the two-part predicate:
//! the regions are each other's minimum-dissimilarity neighbor, and the
//! sequential consistency test accepts them as one population. A mutual
//! pair that fails the test carries boundary evidence and is blacklisted
//! until either endpoint changes by merging elsewhere; without that
//! exclusion, the candidate supply never dries up and the loop cannot
//! terminate.
//!
//! Three engines share the predicate and differ only in candidate search:
//!
//! * [`run_baseline_level`] — sweeps that test every mutual pair of the
//!   current partition simultaneously, stopping at the first sweep with
//!   no merges
//! * [`run_baseline_globalmin`] — one pair per iteration, found by
//!   scanning every live edge for the global minimum
//! * [`run_accelerated`] — one pair per iteration, found from the
//!   nearest-neighbor graph's cycle set and repaired incrementally
//!
//! In deterministic mode the two global-min engines produce identical
//! partitions on every input; the accelerated engine just finds each
//! candidate without the full scan.

use crate::graph::{GraphError, Rag};
use crate::nng::Nng;
use crate::pixel::{LabelMap, RgbImage};
use crate::sprt::{consistency_test, Decision, SprtConfig, TestOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DrmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("merge loop exceeded {max_iterations} iterations; partial trace attached")]
    MaxIterationsExceeded { max_iterations: u64, partial: Box<MergeTrace> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergePolicy {
    /// Simultaneous sweeps over all mutual pairs.
    Level,
    /// One globally minimal pair per iteration.
    GlobalMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    /// Candidates found by scanning the RAG.
    Baseline,
    /// Candidates maintained in the nearest-neighbor graph.
    NngAccelerated,
}

#[derive(Debug, Clone, Copy)]
pub struct DrmConfig {
    pub sprt: SprtConfig,
    pub policy: MergePolicy,
    pub engine: EngineKind,
    pub seed: u64,
    /// Safety bound on loop iterations; `None` means 10x the initial
    /// region count.
    pub max_iterations: Option<u64>,
    /// Record one trace entry per consistency test.
    pub record_sprt_trace: bool,
}

impl Default for DrmConfig {
    fn default() -> Self {
        Self {
            sprt: SprtConfig::default(),
            policy: MergePolicy::GlobalMin,
            engine: EngineKind::NngAccelerated,
            seed: 0,
            max_iterations: None,
            record_sprt_trace: false,
        }
    }
}

impl DrmConfig {
    pub fn validate(&self) -> Result<Vec<String>, DrmError> {
        if self.engine == EngineKind::NngAccelerated && self.policy != MergePolicy::GlobalMin {
            return Err(DrmError::Config(
                "the nng-accelerated engine requires the global-min policy".into(),
            ));
        }
        self.sprt.validate().map_err(|e| DrmError::Config(e.to_string()))
    }
}

/// One committed merge.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MergeStep {
    /// Global event order across merges and boundary events.
    pub seq: u64,
    pub iteration: u64,
    pub survivor: u32,
    pub absorbed: u32,
    /// Edge weight at merge time; the transition cost d.
    pub weight: f64,
    pub delta: f64,
    pub trials: u32,
}

/// One blacklisted pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryEvent {
    pub seq: u64,
    pub iteration: u64,
    pub a: u32,
    pub b: u32,
    pub delta: f64,
    pub trials: u32,
}

/// One hop of an initial region's label path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathHop {
    /// Live region id after the transition.
    pub live_id: u32,
    /// Transition cost: the merge weight.
    pub cost: f64,
}

/// Everything needed to audit a run: the ordered merge and boundary
/// events plus, per initial region, the sequence of live regions it
/// passed through with per-transition costs.
#[derive(Debug, Clone, Default)]
pub struct MergeTrace {
    pub steps: Vec<MergeStep>,
    pub boundary_events: Vec<BoundaryEvent>,
    pub label_paths: Vec<Vec<PathHop>>,
}

impl MergeTrace {
    /// Recorded transition cost total of one initial region.
    pub fn path_cost(&self, initial: u32) -> f64 {
        self.label_paths[initial as usize].iter().map(|h| h.cost).sum()
    }

    /// Sum of transition costs over all initial regions.
    pub fn total_cost(&self) -> f64 {
        (0..self.label_paths.len() as u32).map(|i| self.path_cost(i)).sum()
    }
}

/// Per-iteration instrumentation, one row per loop iteration (or per
/// sweep in level mode).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationCounters {
    pub iteration: u64,
    pub live_nodes: u32,
    pub rag_edges: usize,
    /// Mutual pairs known this iteration (0 for the global-min scan
    /// engine, which never enumerates them).
    pub nng_cycles: usize,
    pub rescanned_nodes: usize,
    pub edges_examined: u64,
}

/// One consistency test, recorded when tracing is on.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SprtTraceEntry {
    pub a: u32,
    pub b: u32,
    pub trials: u32,
    pub delta: f64,
    pub decision: Decision,
}

/// Result of a segmentation run.
#[derive(Debug)]
pub struct RunOutput {
    /// Final partition, densely relabeled.
    pub labels: LabelMap,
    pub trace: MergeTrace,
    pub counters: Vec<IterationCounters>,
    pub merge_count: u64,
    pub blacklist_count: u64,
    pub initial_regions: u32,
    pub final_regions: u32,
    /// Degree distribution of the initial graph: index d holds the
    /// number of nodes with degree d.
    pub degree_histogram: Vec<u64>,
    /// Trials whose per-region sample size was clipped by the cap.
    pub sample_cap_hits: u64,
    pub build_ms: f64,
    pub merge_ms: f64,
    pub sprt_trace: Vec<SprtTraceEntry>,
    /// Final graph state, for audits.
    pub rag: Rag,
    pub nng: Option<Nng>,
}

/// The merge predicate: (a) the pair is mutually minimal and (b) the
/// consistency test accepted it. The mutual check reads the
/// nearest-neighbor graph when one is supplied, the RAG otherwise.
pub fn merge_predicate(
    rag: &Rag,
    nng: Option<&Nng>,
    a: u32,
    b: u32,
    decision: Decision,
) -> bool {
    let mutual = match nng {
        Some(g) => {
            g.nn(a).map(|(t, _)| t) == Some(b) && g.nn(b).map(|(t, _)| t) == Some(a)
        }
        None => {
            rag.min_neighbor(a).map(|(t, _)| t) == Some(b)
                && rag.min_neighbor(b).map(|(t, _)| t) == Some(a)
        }
    };
    mutual && decision == Decision::Consistent
}

struct Engine<'a> {
    img: &'a RgbImage,
    cfg: &'a DrmConfig,
    rag: Rag,
    /// Initial region ids contained in each live region.
    members: Vec<Vec<u32>>,
    trace: MergeTrace,
    counters: Vec<IterationCounters>,
    rng: ChaCha8Rng,
    seq: u64,
    merge_count: u64,
    blacklist_count: u64,
    sample_cap_hits: u64,
    sprt_trace: Vec<SprtTraceEntry>,
    degree_histogram: Vec<u64>,
    max_iterations: u64,
}

impl<'a> Engine<'a> {
    fn new(img: &'a RgbImage, init_lm: &LabelMap, cfg: &'a DrmConfig) -> Result<Self, DrmError> {
        let rag = Rag::build(img, init_lm)?;
        let k = rag.initial_regions();
        let mut degree_histogram = Vec::new();
        for v in rag.live_ids() {
            let d = rag.degree(v);
            if degree_histogram.len() <= d {
                degree_histogram.resize(d + 1, 0);
            }
            degree_histogram[d] += 1;
        }
        let trace = MergeTrace {
            steps: Vec::new(),
            boundary_events: Vec::new(),
            label_paths: (0..k).map(|i| vec![PathHop { live_id: i, cost: 0.0 }]).collect(),
        };
        let max_iterations = cfg.max_iterations.unwrap_or(10 * k.max(1) as u64);
        Ok(Self {
            img,
            cfg,
            rag,
            members: (0..k).map(|i| vec![i]).collect(),
            trace,
            counters: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            seq: 0,
            merge_count: 0,
            blacklist_count: 0,
            sample_cap_hits: 0,
            sprt_trace: Vec::new(),
            degree_histogram,
            max_iterations,
        })
    }

    /// Run the consistency test in canonical order (smaller id first), so
    /// the pair orientation never depends on discovery order.
    fn test_pair(&mut self, a: u32, b: u32) -> TestOutcome {
        let (lo, hi) = (a.min(b), a.max(b));
        let out = consistency_test(self.img, &self.rag, lo, hi, &mut self.rng, &self.cfg.sprt);
        self.sample_cap_hits += out.cap_hits as u64;
        if self.cfg.record_sprt_trace {
            self.sprt_trace.push(SprtTraceEntry {
                a: lo,
                b: hi,
                trials: out.trials,
                delta: out.delta,
                decision: out.decision,
            });
        }
        out
    }

    fn apply_merge(
        &mut self,
        a: u32,
        b: u32,
        weight: f64,
        out: &TestOutcome,
        iteration: u64,
    ) -> Result<u32, DrmError> {
        let survivor = self.rag.merge(a, b)?;
        let dead = a.max(b);
        let mut dead_members = std::mem::take(&mut self.members[dead as usize]);
        if dead_members.len() > self.members[survivor as usize].len() {
            std::mem::swap(&mut dead_members, &mut self.members[survivor as usize]);
        }
        self.members[survivor as usize].append(&mut dead_members);
        // every initial region on either side transitions into the
        // merged region at this weight
        for &i in &self.members[survivor as usize] {
            self.trace.label_paths[i as usize].push(PathHop { live_id: survivor, cost: weight });
        }
        self.trace.steps.push(MergeStep {
            seq: self.seq,
            iteration,
            survivor,
            absorbed: dead,
            weight,
            delta: out.delta,
            trials: out.trials,
        });
        self.seq += 1;
        self.merge_count += 1;
        Ok(survivor)
    }

    fn apply_boundary(
        &mut self,
        a: u32,
        b: u32,
        out: &TestOutcome,
        iteration: u64,
    ) -> Result<(), DrmError> {
        self.rag.mark_boundary(a, b)?;
        self.trace.boundary_events.push(BoundaryEvent {
            seq: self.seq,
            iteration,
            a: a.min(b),
            b: a.max(b),
            delta: out.delta,
            trials: out.trials,
        });
        self.seq += 1;
        self.blacklist_count += 1;
        Ok(())
    }

    fn exceeded(&self, iteration: u64) -> Option<DrmError> {
        (iteration > self.max_iterations).then(|| DrmError::MaxIterationsExceeded {
            max_iterations: self.max_iterations,
            partial: Box::new(self.trace.clone()),
        })
    }

    fn finish(self, nng: Option<Nng>, build_ms: f64, merge_ms: f64) -> RunOutput {
        RunOutput {
            labels: self.rag.final_label_map(),
            final_regions: self.rag.num_live(),
            initial_regions: self.rag.initial_regions(),
            trace: self.trace,
            counters: self.counters,
            merge_count: self.merge_count,
            blacklist_count: self.blacklist_count,
            degree_histogram: self.degree_histogram,
            sample_cap_hits: self.sample_cap_hits,
            build_ms,
            merge_ms,
            sprt_trace: self.sprt_trace,
            rag: self.rag,
            nng,
        }
    }
}

fn now_ms(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Dispatch on the configured engine and policy.
pub fn run(img: &RgbImage, init_lm: &LabelMap, cfg: &DrmConfig) -> Result<RunOutput, DrmError> {
    cfg.validate()?;
    match (cfg.engine, cfg.policy) {
        (EngineKind::Baseline, MergePolicy::Level) => run_baseline_level(img, init_lm, cfg),
        (EngineKind::Baseline, MergePolicy::GlobalMin) => {
            run_baseline_globalmin(img, init_lm, cfg)
        }
        (EngineKind::NngAccelerated, MergePolicy::GlobalMin) => {
            run_accelerated(img, init_lm, cfg)
        }
        (EngineKind::NngAccelerated, MergePolicy::Level) => Err(DrmError::Config(
            "the nng-accelerated engine requires the global-min policy".into(),
        )),
    }
}

/// Level sweeps: every sweep enumerates all mutual pairs of the current
/// partition (a full scan), tests each, merges the consistent ones and
/// blacklists the rest. Mutual pairs are node-disjoint, so the sweep's
/// merges commute. Stops at the first sweep that merges nothing.
pub fn run_baseline_level(
    img: &RgbImage,
    init_lm: &LabelMap,
    cfg: &DrmConfig,
) -> Result<RunOutput, DrmError> {
    let build_start = std::time::Instant::now();
    let mut e = Engine::new(img, init_lm, cfg)?;
    let build_ms = now_ms(build_start);
    let merge_start = std::time::Instant::now();
    let mut sweep = 0u64;
    loop {
        sweep += 1;
        if let Some(err) = e.exceeded(sweep) {
            return Err(err);
        }
        if e.rag.num_live() < 2 {
            break;
        }
        let mut examined = 0u64;
        let mut nn = std::collections::BTreeMap::new();
        for v in e.rag.live_ids() {
            if let Some((t, w)) = e.rag.min_neighbor(v) {
                nn.insert(v, (t, w));
            }
            examined += e.rag.degree(v) as u64;
        }
        let pairs: Vec<(u32, u32, f64)> = nn
            .iter()
            .filter_map(|(&v, &(t, w))| {
                (v < t && nn.get(&t).map(|&(u, _)| u) == Some(v)).then_some((v, t, w))
            })
            .collect();
        e.counters.push(IterationCounters {
            iteration: sweep,
            live_nodes: e.rag.num_live(),
            rag_edges: e.rag.edge_count(),
            nng_cycles: pairs.len(),
            rescanned_nodes: e.rag.num_live() as usize,
            edges_examined: examined,
        });
        if pairs.is_empty() {
            break;
        }
        let mut merges = 0u64;
        for (a, b, w) in pairs {
            let out = e.test_pair(a, b);
            if out.decision == Decision::Consistent {
                e.apply_merge(a, b, w, &out, sweep)?;
                merges += 1;
            } else {
                e.apply_boundary(a, b, &out, sweep)?;
            }
        }
        if merges == 0 {
            break;
        }
    }
    let merge_ms = now_ms(merge_start);
    Ok(e.finish(None, build_ms, merge_ms))
}

/// Scan every live edge for the strict-order minimum: weight first, then
/// the (smaller, larger) id pair. Returns the examined-edge count too.
fn global_min_edge(rag: &Rag) -> (Option<(u32, u32, f64)>, u64) {
    let mut best: Option<(u32, u32, f64)> = None;
    let mut examined = 0u64;
    for a in rag.live_ids() {
        for (&b, &w) in rag.neighbors(a) {
            if b <= a {
                continue;
            }
            examined += 1;
            if rag.is_blacklisted(a, b) {
                continue;
            }
            // ascending (a, b) iteration: strict < keeps the
            // lexicographically smallest pair on weight ties
            if best.is_none_or(|(_, _, bw)| w < bw) {
                best = Some((a, b, w));
            }
        }
    }
    (best, examined)
}

/// One pair per iteration, found by a full edge scan. This is the
/// reference schedule the accelerated engine must reproduce.
pub fn run_baseline_globalmin(
    img: &RgbImage,
    init_lm: &LabelMap,
    cfg: &DrmConfig,
) -> Result<RunOutput, DrmError> {
    let build_start = std::time::Instant::now();
    let mut e = Engine::new(img, init_lm, cfg)?;
    let build_ms = now_ms(build_start);
    let merge_start = std::time::Instant::now();
    let mut iteration = 0u64;
    loop {
        iteration += 1;
        if let Some(err) = e.exceeded(iteration) {
            return Err(err);
        }
        if e.rag.num_live() < 2 {
            break;
        }
        let (candidate, examined) = global_min_edge(&e.rag);
        e.counters.push(IterationCounters {
            iteration,
            live_nodes: e.rag.num_live(),
            rag_edges: e.rag.edge_count(),
            nng_cycles: 0,
            rescanned_nodes: 0,
            edges_examined: examined,
        });
        let Some((a, b, w)) = candidate else { break };
        let out = e.test_pair(a, b);
        if out.decision == Decision::Consistent {
            e.apply_merge(a, b, w, &out, iteration)?;
        } else {
            e.apply_boundary(a, b, &out, iteration)?;
        }
    }
    let merge_ms = now_ms(merge_start);
    Ok(e.finish(None, build_ms, merge_ms))
}

/// One pair per iteration, found from the nearest-neighbor graph: the
/// minimum-weight cycle is exactly the global-min pair, and each update
/// touches only the second-order neighborhood of the change.
pub fn run_accelerated(
    img: &RgbImage,
    init_lm: &LabelMap,
    cfg: &DrmConfig,
) -> Result<RunOutput, DrmError> {
    let build_start = std::time::Instant::now();
    let mut e = Engine::new(img, init_lm, cfg)?;
    let (mut nng, _) = Nng::build(&e.rag);
    let build_ms = now_ms(build_start);
    let merge_start = std::time::Instant::now();
    let mut iteration = 0u64;
    loop {
        iteration += 1;
        if let Some(err) = e.exceeded(iteration) {
            return Err(err);
        }
        let Some(((a, b), w)) = nng.min_cycle() else {
            // candidates exist while any unblacklisted edge joins two
            // live regions, and then the cycle set cannot be empty
            debug_assert!(e.rag.num_live() < 2 || !e.rag.has_unblacklisted_edge());
            break;
        };
        let mut counters = IterationCounters {
            iteration,
            live_nodes: e.rag.num_live(),
            rag_edges: e.rag.edge_count(),
            nng_cycles: nng.num_cycles(),
            rescanned_nodes: 0,
            edges_examined: 0,
        };
        let out = e.test_pair(a, b);
        let stats = if out.decision == Decision::Consistent {
            let survivor = e.apply_merge(a, b, w, &out, iteration)?;
            nng.update_after_merge(&e.rag, survivor, a.max(b))
        } else {
            e.apply_boundary(a, b, &out, iteration)?;
            nng.update_after_blacklist(&e.rag, a, b)
        };
        counters.rescanned_nodes = stats.rescanned;
        counters.edges_examined = stats.edges_examined;
        e.counters.push(counters);
    }
    let merge_ms = now_ms(merge_start);
    Ok(e.finish(Some(nng), build_ms, merge_ms))
}
