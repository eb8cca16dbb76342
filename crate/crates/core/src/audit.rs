//! Post-run replay checks.
//!
//! The merge trace is re-executed against a fresh graph built from the
//! initial labeling. Every merge step must name a live, adjacent,
//! non-blacklisted pair that was mutually minimal at its time, carry the
//! then-current edge weight, and carry non-negative evidence; every
//! boundary event must carry negative evidence. The recorded label paths
//! must agree hop by hop with the replay, and the replayed partition
//! must equal the engine's output.

use crate::drm::{BoundaryEvent, MergeStep, MergeTrace};
use crate::graph::{GraphError, Rag};
use crate::pixel::{LabelMap, RgbImage};
use thiserror::Error;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("replay failed at event {seq}: {reason}")]
    Step { seq: u64, reason: String },
    #[error(
        "region {region}: recorded transition cost {recorded} disagrees with replayed {replayed}"
    )]
    PathMismatch { region: u32, recorded: f64, replayed: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Transition-cost totals reproduced by replay.
#[derive(Debug, Clone)]
pub struct ObjectiveAudit {
    /// Sum of all per-region transition costs.
    pub f_total: f64,
    /// Per initial region.
    pub per_region: Vec<f64>,
}

#[derive(Debug)]
struct ReplayOutcome {
    rag: Rag,
    per_region_cost: Vec<f64>,
    /// Hop-by-hop disagreement with the recorded label paths, if any.
    path_violation: Option<AuditError>,
    /// First predicate breach, if any: (seq, reason).
    violation: Option<(u64, String)>,
}

enum Event<'a> {
    Merge(&'a MergeStep),
    Boundary(&'a BoundaryEvent),
}

impl Event<'_> {
    fn seq(&self) -> u64 {
        match self {
            Event::Merge(s) => s.seq,
            Event::Boundary(b) => b.seq,
        }
    }
}

fn mutual_min(rag: &Rag, a: u32, b: u32) -> bool {
    rag.min_neighbor(a).map(|(t, _)| t) == Some(b)
        && rag.min_neighbor(b).map(|(t, _)| t) == Some(a)
}

fn replay(img: &RgbImage, init_lm: &LabelMap, trace: &MergeTrace) -> Result<ReplayOutcome, GraphError> {
    let mut rag = Rag::build(img, init_lm)?;
    let k = rag.initial_regions();
    let mut members: Vec<Vec<u32>> = (0..k).map(|i| vec![i]).collect();
    let mut per_region_cost = vec![0.0f64; k as usize];
    let mut hop_cursor = vec![1usize; k as usize]; // hop 0 is the initial id
    let mut path_violation = None;
    let mut violation = None;

    let mut events: Vec<Event> = trace
        .steps
        .iter()
        .map(Event::Merge)
        .chain(trace.boundary_events.iter().map(Event::Boundary))
        .collect();
    events.sort_by_key(Event::seq);

    'events: for ev in events {
        match ev {
            Event::Merge(s) => {
                let (a, b) = (s.survivor.min(s.absorbed), s.survivor.max(s.absorbed));
                let seq = s.seq;
                let fail = |reason: String| Some((seq, reason));
                if !rag.is_live(a) || !rag.is_live(b) {
                    violation = fail(format!("merge of non-live pair ({a}, {b})"));
                    break 'events;
                }
                let w = match rag.dissimilarity(a, b) {
                    Ok(w) => w,
                    Err(_) => {
                        violation = fail(format!("merge of non-adjacent pair ({a}, {b})"));
                        break 'events;
                    }
                };
                if rag.is_blacklisted(a, b) {
                    violation = fail(format!("merge of blacklisted pair ({a}, {b})"));
                    break 'events;
                }
                if (w - s.weight).abs() > WEIGHT_TOLERANCE {
                    violation = fail(format!(
                        "recorded weight {} disagrees with replayed weight {w}",
                        s.weight
                    ));
                    break 'events;
                }
                if !mutual_min(&rag, a, b) {
                    violation = fail(format!("pair ({a}, {b}) was not mutually minimal"));
                    break 'events;
                }
                if s.delta < 0.0 {
                    violation = fail(format!("merge carries negative evidence {}", s.delta));
                    break 'events;
                }
                let survivor = rag.merge(a, b)?;
                let mut dead_members = std::mem::take(&mut members[b as usize]);
                if dead_members.len() > members[survivor as usize].len() {
                    std::mem::swap(&mut dead_members, &mut members[survivor as usize]);
                }
                members[survivor as usize].append(&mut dead_members);
                for &i in &members[survivor as usize] {
                    per_region_cost[i as usize] += s.weight;
                    if path_violation.is_none() {
                        let path = &trace.label_paths[i as usize];
                        let cur = hop_cursor[i as usize];
                        let ok = path.get(cur).is_some_and(|h| {
                            h.live_id == survivor && (h.cost - s.weight).abs() <= WEIGHT_TOLERANCE
                        });
                        if !ok {
                            path_violation = Some(AuditError::Step {
                                seq,
                                reason: format!(
                                    "label path of region {i} disagrees with replay at hop {cur}"
                                ),
                            });
                        }
                        hop_cursor[i as usize] = cur + 1;
                    }
                }
            }
            Event::Boundary(ev) => {
                let (a, b) = (ev.a.min(ev.b), ev.a.max(ev.b));
                if !rag.is_live(a) || !rag.is_live(b) || rag.dissimilarity(a, b).is_err() {
                    violation = Some((ev.seq, format!("boundary event on invalid pair ({a}, {b})")));
                    break 'events;
                }
                if ev.delta >= 0.0 {
                    violation = Some((
                        ev.seq,
                        format!("boundary event carries non-negative evidence {}", ev.delta),
                    ));
                    break 'events;
                }
                rag.mark_boundary(a, b)?;
            }
        }
    }

    if path_violation.is_none() && violation.is_none() {
        for (i, &cursor) in hop_cursor.iter().enumerate() {
            if cursor != trace.label_paths[i].len() {
                path_violation = Some(AuditError::Step {
                    seq: 0,
                    reason: format!("label path of region {i} has unexplained hops"),
                });
                break;
            }
        }
    }

    Ok(ReplayOutcome { rag, per_region_cost, path_violation, violation })
}

/// Reproduce the per-region transition costs by replay and verify them
/// against the recorded label paths, including that every recorded cost
/// was the minimal non-blacklisted dissimilarity at its merge time.
pub fn objective_audit(
    img: &RgbImage,
    init_lm: &LabelMap,
    trace: &MergeTrace,
) -> Result<ObjectiveAudit, AuditError> {
    let outcome = replay(img, init_lm, trace)?;
    if let Some((seq, reason)) = outcome.violation {
        return Err(AuditError::Step { seq, reason });
    }
    if let Some(v) = outcome.path_violation {
        return Err(v);
    }
    let mut per_region = Vec::with_capacity(trace.label_paths.len());
    for (i, replayed) in outcome.per_region_cost.iter().enumerate() {
        let recorded = trace.path_cost(i as u32);
        if (recorded - replayed).abs() > WEIGHT_TOLERANCE {
            return Err(AuditError::PathMismatch {
                region: i as u32,
                recorded,
                replayed: *replayed,
            });
        }
        per_region.push(recorded);
    }
    Ok(ObjectiveAudit { f_total: per_region.iter().sum(), per_region })
}

/// Post-termination report.
#[derive(Debug, Clone, Default)]
pub struct TerminationReport {
    /// No surviving mutual-minimum pair lacks boundary evidence.
    pub not_under_merged: bool,
    /// Every merge step satisfied the predicate when it ran.
    pub not_over_merged: bool,
    /// The replayed partition equals the returned one.
    pub replay_reproduces_labels: bool,
    /// Mutual pairs that survived without boundary evidence.
    pub unmerged_consistent_pairs: Vec<(u32, u32)>,
    /// First predicate breach found during replay.
    pub merge_violation: Option<(u64, String)>,
}

impl TerminationReport {
    /// The two termination assertions together.
    pub fn all_pass(&self) -> bool {
        self.not_under_merged && self.not_over_merged
    }
}

/// Minimum neighbor ignoring the blacklist, same tie-break as the
/// candidate search.
fn min_neighbor_ignoring_blacklist(rag: &Rag, v: u32) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (&n, &w) in rag.neighbors(v) {
        if best.is_none_or(|(_, bw)| w < bw) {
            best = Some((n, w));
        }
    }
    best.map(|(n, _)| n)
}

/// Check the two termination properties of a finished run.
///
/// (i) every pair that is mutually minimal over all edges of the final
/// graph (ignoring the blacklist) must carry boundary evidence backed by
/// a recorded inconsistent decision; (ii) replaying the trace must find
/// every merge step to have satisfied the predicate at its time.
pub fn audit_termination(
    img: &RgbImage,
    init_lm: &LabelMap,
    final_rag: &Rag,
    trace: &MergeTrace,
) -> TerminationReport {
    let mut report = TerminationReport::default();

    for a in final_rag.live_ids() {
        if let Some(b) = min_neighbor_ignoring_blacklist(final_rag, a) {
            if b > a && min_neighbor_ignoring_blacklist(final_rag, b) == Some(a) {
                let recorded = final_rag.is_blacklisted(a, b)
                    && trace
                        .boundary_events
                        .iter()
                        .any(|ev| (ev.a.min(ev.b), ev.a.max(ev.b)) == (a, b));
                if !recorded {
                    report.unmerged_consistent_pairs.push((a, b));
                }
            }
        }
    }
    report.not_under_merged = report.unmerged_consistent_pairs.is_empty();

    match replay(img, init_lm, trace) {
        Ok(outcome) => {
            report.merge_violation = outcome.violation;
            report.not_over_merged = report.merge_violation.is_none();
            report.replay_reproduces_labels = report.not_over_merged
                && outcome.rag.final_label_map() == final_rag.final_label_map();
        }
        Err(e) => {
            report.merge_violation = Some((0, e.to_string()));
            report.not_over_merged = false;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drm::{run, DrmConfig};
    use crate::gen::gen_quadrants;
    use crate::initseg::grid_init;
    use crate::sprt::SprtConfig;

    fn quadrant_run() -> (RgbImage, LabelMap, crate::drm::RunOutput) {
        let (img, _) = gen_quadrants(
            32,
            [[40, 40, 40], [210, 40, 40], [40, 210, 40], [40, 40, 210]],
            6.0,
            2,
        );
        let lm = grid_init(32, 32, 8);
        let cfg = DrmConfig {
            sprt: SprtConfig { lambda1: 2.0, deterministic: true, ..Default::default() },
            ..Default::default()
        };
        let out = run(&img, &lm, &cfg).unwrap();
        (img, lm, out)
    }

    #[test]
    fn empty_trace_audits_to_zero() {
        let img = RgbImage::new(2, 1, vec![0; 6]);
        let lm = LabelMap::new(2, 1, vec![0, 0]);
        let cfg = DrmConfig::default();
        let out = run(&img, &lm, &cfg).unwrap();
        let audit = objective_audit(&img, &lm, &out.trace).unwrap();
        assert_eq!(audit.f_total, 0.0);
    }

    #[test]
    fn single_merge_charges_both_endpoints() {
        // two noisy same-population regions whose means sit 5 apart, so
        // the single merge records weight 5 and both paths charge it
        let img = RgbImage::new(4, 1, vec![0, 0, 0, 20, 0, 0, 5, 0, 0, 25, 0, 0]);
        let lm = LabelMap::new(4, 1, vec![0, 0, 1, 1]);
        let cfg = DrmConfig {
            sprt: SprtConfig { deterministic: true, ..Default::default() },
            ..Default::default()
        };
        let out = run(&img, &lm, &cfg).unwrap();
        assert_eq!(out.merge_count, 1);
        assert!((out.trace.steps[0].weight - 5.0).abs() < 1e-12);
        let audit = objective_audit(&img, &lm, &out.trace).unwrap();
        assert_eq!(audit.per_region, vec![5.0, 5.0]);
        assert_eq!(audit.f_total, 10.0);
    }

    #[test]
    fn quadrant_run_passes_both_audits() {
        let (img, lm, out) = quadrant_run();
        assert_eq!(out.final_regions, 4);
        let audit = objective_audit(&img, &lm, &out.trace).unwrap();
        assert!((audit.f_total - out.trace.total_cost()).abs() < 1e-9);
        let term = audit_termination(&img, &lm, &out.rag, &out.trace);
        assert!(term.all_pass(), "{term:?}");
        assert!(term.replay_reproduces_labels);
    }

    #[test]
    fn inflated_weight_is_detected() {
        let (img, lm, mut out) = quadrant_run();
        out.trace.steps[0].weight += 1.0;
        match objective_audit(&img, &lm, &out.trace) {
            Err(AuditError::Step { seq, .. }) => assert_eq!(seq, out.trace.steps[0].seq),
            other => panic!("expected step failure, got {other:?}"),
        }
    }

    #[test]
    fn forced_merge_of_blacklisted_pair_fails_replay() {
        let (img, lm, mut out) = quadrant_run();
        // fabricate a merge of a pair that the run blacklisted
        let ev = out.trace.boundary_events[0];
        out.trace.steps.push(crate::drm::MergeStep {
            seq: ev.seq + 1_000_000,
            iteration: 0,
            survivor: ev.a,
            absorbed: ev.b,
            weight: 0.0,
            delta: 1.0,
            trials: 1,
        });
        let term = audit_termination(&img, &lm, &out.rag, &out.trace);
        assert!(!term.not_over_merged);
        assert!(term.merge_violation.is_some());
    }

    #[test]
    fn single_region_output_passes_vacuously() {
        let img = RgbImage::new(2, 1, vec![9; 6]);
        let lm = LabelMap::new(2, 1, vec![0, 0]);
        let out = run(&img, &lm, &DrmConfig::default()).unwrap();
        let term = audit_termination(&img, &lm, &out.rag, &out.trace);
        assert!(term.all_pass());
    }
}
