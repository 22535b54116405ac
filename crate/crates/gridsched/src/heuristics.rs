//! Conflict metrics, the conflict-aware greedy family, and the bin-packing
//! based heuristics.
//!
//! All heuristics are two-phase: URLLC demands are covered first, then the
//! remaining blocks go to eMBB by plain max-rate greedy. The conflict-aware
//! variants divide the URLLC utility by a conflict penalty so placements
//! that foreclose fewer eMBB blocks win; the bin-packing variants bucket
//! blocks by how many of them are needed to cover a demand and spend the
//! cheapest buckets first. Everything here is deterministic: argmax ties
//! break toward the smallest (block, service) pair and category ties toward
//! the smallest service.

use crate::channel::{ServiceSet, ThroughputMatrix};
use crate::exact::{Assignment, InstanceP0, Schedule, ScheduleStatus, DEMAND_TOL_KBPS};
use crate::grid::ConflictStructure;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

// ---------------------------------------------------------------------------
// Conflict metrics and utilities
// ---------------------------------------------------------------------------

/// Aggregate and average conflict per block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictMetrics {
    /// Number of blocks overlapping each block.
    pub c_total: Vec<usize>,
    /// Mean rate, per URLLC service, of the blocks overlapping each block;
    /// zero for isolated blocks.
    pub c_avg: Vec<Vec<f64>>,
}

pub fn conflict_metrics(
    conflicts: &ConflictStructure,
    tp: &ThroughputMatrix,
    services: &ServiceSet,
) -> ConflictMetrics {
    let n_urllc = services.n_urllc();
    let mut c_total = Vec::with_capacity(conflicts.n_blocks());
    let mut c_avg = Vec::with_capacity(conflicts.n_blocks());
    for b in 0..conflicts.n_blocks() {
        let degree = conflicts.degree(b);
        c_total.push(degree);
        let mut row = vec![0.0; n_urllc];
        if degree > 0 {
            for &p in conflicts.neighbors(b) {
                for (k, slot) in row.iter_mut().enumerate() {
                    *slot += tp.rate(p, k);
                }
            }
            for slot in row.iter_mut() {
                *slot /= degree as f64;
            }
        }
        c_avg.push(row);
    }
    ConflictMetrics { c_total, c_avg }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilityVariant {
    /// Plain rate, as in the baseline greedy.
    Baseline,
    /// Rate divided by the overlap count.
    Total,
    /// Rate divided by the average overlapped rate.
    Avg,
    /// Plain rate for all URLLC services except the last, which uses Avg.
    LastPl,
}

impl UtilityVariant {
    pub fn name(self) -> &'static str {
        match self {
            UtilityVariant::Baseline => "baseline",
            UtilityVariant::Total => "ca-total",
            UtilityVariant::Avg => "ca-avg",
            UtilityVariant::LastPl => "ca-lastpl",
        }
    }
}

/// URLLC utility per (block, URLLC service).
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    pub u: Vec<Vec<f64>>,
    pub variant: UtilityVariant,
}

/// Division guards: an isolated block (or zero average conflict) keeps its
/// raw rate, so conflict-free placements stay maximally attractive.
pub fn utility_matrix(
    inst: &InstanceP0,
    metrics: &ConflictMetrics,
    variant: UtilityVariant,
) -> UtilityMatrix {
    let n_urllc = inst.services.n_urllc();
    let u = (0..inst.n_blocks())
        .map(|b| {
            (0..n_urllc)
                .map(|k| {
                    let r = inst.throughput.rate(b, k);
                    let total = metrics.c_total[b];
                    let avg = metrics.c_avg[b][k];
                    let by_total = if total == 0 { r } else { r / total as f64 };
                    let by_avg = if avg == 0.0 { r } else { r / avg };
                    match variant {
                        UtilityVariant::Baseline => r,
                        UtilityVariant::Total => by_total,
                        UtilityVariant::Avg => by_avg,
                        UtilityVariant::LastPl => {
                            if k + 1 == n_urllc {
                                by_avg
                            } else {
                                r
                            }
                        }
                    }
                })
                .collect()
        })
        .collect();
    UtilityMatrix { u, variant }
}

// ---------------------------------------------------------------------------
// Conflict-aware greedy (two-phase argmax)
// ---------------------------------------------------------------------------

/// Max-heap entry ordered by value, ties toward the smallest (block, service).
#[derive(Debug, PartialEq)]
struct Candidate {
    value: f64,
    block: u32,
    service: u32,
}

impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.value
            .partial_cmp(&other.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                Reverse((self.block, self.service)).cmp(&Reverse((other.block, other.service)))
            })
    }
}

fn kill_with_neighbors(conflicts: &ConflictStructure, alive: &mut [bool], b: usize) {
    alive[b] = false;
    for &p in conflicts.neighbors(b) {
        alive[p] = false;
    }
}

/// Greedy max-rate assignment of the remaining blocks to eMBB services.
fn embb_phase(inst: &InstanceP0, alive: &mut [bool], assignments: &mut Vec<Assignment>) {
    let mut heap = BinaryHeap::new();
    for b in 0..inst.n_blocks() {
        if !alive[b] {
            continue;
        }
        for k in inst.services.embb_range() {
            let r = inst.throughput.rate(b, k);
            if r > 0.0 {
                heap.push(Candidate {
                    value: r,
                    block: b as u32,
                    service: k as u32,
                });
            }
        }
    }
    while let Some(c) = heap.pop() {
        let b = c.block as usize;
        if !alive[b] {
            continue;
        }
        assignments.push(Assignment {
            block_id: b,
            service: c.service as usize,
            fraction: 1.0,
        });
        kill_with_neighbors(&inst.conflicts, alive, b);
    }
}

/// Conflict-aware greedy (and, with [`UtilityVariant::Baseline`], the plain
/// baseline greedy).
///
/// Phase 1 repeatedly assigns the (block, service) pair maximizing the
/// URLLC utility among surviving blocks and unmet services, removing the
/// block and everything overlapping it; a service whose demand is met drops
/// out. Pairs with zero rate cannot contribute to a demand and are never
/// selected, so blocks are preserved for eMBB when no useful URLLC
/// placement remains. Phase 2 then runs the same greedy over eMBB with the
/// plain rate as utility. Unmet demands yield an Infeasible status with the
/// partial assignment kept.
pub fn run_ca(inst: &InstanceP0, variant: UtilityVariant) -> Schedule {
    let n_urllc = inst.services.n_urllc();
    let mut alive = vec![true; inst.n_blocks()];
    let mut assignments = Vec::new();
    let mut delivered = vec![0.0; n_urllc];
    let mut unmet = vec![true; n_urllc];
    let mut n_unmet = n_urllc;

    if n_urllc > 0 {
        let utilities = if variant == UtilityVariant::Baseline {
            None
        } else {
            let metrics = conflict_metrics(&inst.conflicts, &inst.throughput, &inst.services);
            Some(utility_matrix(inst, &metrics, variant))
        };
        let mut heap = BinaryHeap::new();
        for b in 0..inst.n_blocks() {
            for k in 0..n_urllc {
                if inst.throughput.rate(b, k) > 0.0 {
                    let value = match &utilities {
                        None => inst.throughput.rate(b, k),
                        Some(m) => m.u[b][k],
                    };
                    heap.push(Candidate {
                        value,
                        block: b as u32,
                        service: k as u32,
                    });
                }
            }
        }
        while n_unmet > 0 {
            let Some(c) = heap.pop() else { break };
            let (b, k) = (c.block as usize, c.service as usize);
            if !alive[b] || !unmet[k] {
                continue;
            }
            assignments.push(Assignment {
                block_id: b,
                service: k,
                fraction: 1.0,
            });
            delivered[k] += inst.throughput.rate(b, k);
            kill_with_neighbors(&inst.conflicts, &mut alive, b);
            if delivered[k] >= inst.services.demand_kbps(k) - DEMAND_TOL_KBPS {
                unmet[k] = false;
                n_unmet -= 1;
            }
        }
    }

    embb_phase(inst, &mut alive, &mut assignments);

    let status = if n_unmet == 0 {
        ScheduleStatus::Feasible { bound_gap: None }
    } else {
        ScheduleStatus::Infeasible
    };
    Schedule::from_assignments(assignments, status, inst)
}

// ---------------------------------------------------------------------------
// Bin-packing based heuristics
// ---------------------------------------------------------------------------

/// Which reading of the aggregated-loss sum to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// Sum the eMBB rates of the blocks a placement would knock out.
    #[default]
    NeighborRates,
    /// The block's own eMBB rate sum times its overlap count.
    OwnRates,
}

/// Which loss field drives category pruning and selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMetric {
    /// Prefer blocks destroying the least eMBB value (ascending loss).
    Aggregated,
    /// Prefer blocks with the highest best-URLLC rate (descending), used by
    /// the modified heuristic when URLLC satisfiability is at risk.
    MaxUrllcRate,
}

/// Aggregated eMBB loss and best-URLLC-rate per block.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector {
    pub aggregated: Vec<f64>,
    pub max_urllc_rate: Vec<f64>,
}

pub fn loss_vector(inst: &InstanceP0, mode: LossMode) -> LossVector {
    let embb_sum = |b: usize| -> f64 {
        inst.services
            .embb_range()
            .map(|k| inst.throughput.rate(b, k))
            .sum()
    };
    let aggregated = (0..inst.n_blocks())
        .map(|b| match mode {
            LossMode::NeighborRates => inst
                .conflicts
                .neighbors(b)
                .iter()
                .map(|&p| embb_sum(p))
                .sum(),
            LossMode::OwnRates => inst.conflicts.degree(b) as f64 * embb_sum(b),
        })
        .collect();
    let max_urllc_rate = (0..inst.n_blocks())
        .map(|b| {
            inst.services
                .urllc_range()
                .map(|k| inst.throughput.rate(b, k))
                .fold(0.0f64, f64::max)
        })
        .collect();
    LossVector {
        aggregated,
        max_urllc_rate,
    }
}

/// Default category count: ceil(max demand / smallest positive URLLC rate),
/// capped at 16.
pub fn default_h(inst: &InstanceP0) -> usize {
    let mut r_min = f64::INFINITY;
    let mut q_max = 0.0f64;
    for k in inst.services.urllc_range() {
        q_max = q_max.max(inst.services.demand_kbps(k));
        for b in 0..inst.n_blocks() {
            let r = inst.throughput.rate(b, k);
            if r > 0.0 {
                r_min = r_min.min(r);
            }
        }
    }
    if !r_min.is_finite() || q_max == 0.0 {
        return 1;
    }
    ((q_max / r_min).ceil() as usize).clamp(1, 16)
}

/// True when `a` should be kept over `b` under the metric.
fn prefer(loss: &LossVector, metric: LossMetric, a: usize, b: usize) -> bool {
    match metric {
        LossMetric::Aggregated => {
            let (la, lb) = (loss.aggregated[a], loss.aggregated[b]);
            la < lb || (la == lb && a < b)
        }
        LossMetric::MaxUrllcRate => {
            let (ra, rb) = (loss.max_urllc_rate[a], loss.max_urllc_rate[b]);
            ra > rb || (ra == rb && a < b)
        }
    }
}

/// Bin-packing based resource allocation.
///
/// Per URLLC service, category `i` holds the blocks needing `i` copies to
/// cover the demand (ceil(q/r) = i, so i blocks from category i always
/// suffice). Categories are pruned by a pairwise-conflict sweep in block_id
/// order that drops the worse member of each surviving pair, then ranked by
/// the loss metric. Allocation passes walk the levels i = 1..H, each level
/// serving the unmet service whose usable category is scarcest with its i
/// best blocks, and repeat until every demand is met or a full pass places
/// nothing. The eMBB phase is the same max-rate greedy as the conflict-aware
/// family.
pub fn run_bpb(inst: &InstanceP0, h: usize, metric: LossMetric, mode: LossMode) -> Schedule {
    let h = h.max(1);
    let n_urllc = inst.services.n_urllc();
    let loss = loss_vector(inst, mode);

    // Categories per (service, level), ascending block_id by construction.
    let mut categories: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); h]; n_urllc];
    for k in 0..n_urllc {
        let q = inst.services.demand_kbps(k);
        for b in 0..inst.n_blocks() {
            let r = inst.throughput.rate(b, k);
            if r > 0.0 {
                let i = (q / r).ceil() as usize;
                if (1..=h).contains(&i) {
                    categories[k][i - 1].push(b);
                }
            }
        }
    }

    // Pairwise-conflict prune within each category, then rank by preference.
    for cats in categories.iter_mut() {
        for cat in cats.iter_mut() {
            let mut kept = vec![true; cat.len()];
            for i in 0..cat.len() {
                if !kept[i] {
                    continue;
                }
                for j in i + 1..cat.len() {
                    if !kept[j] || !inst.conflicts.conflicts(cat[i], cat[j]) {
                        continue;
                    }
                    if prefer(&loss, metric, cat[i], cat[j]) {
                        kept[j] = false;
                    } else {
                        kept[i] = false;
                        break;
                    }
                }
            }
            let mut survivors: Vec<usize> = cat
                .iter()
                .zip(&kept)
                .filter_map(|(&b, &keep)| keep.then_some(b))
                .collect();
            survivors.sort_by(|&a, &b| {
                if prefer(&loss, metric, a, b) {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Greater
                }
            });
            *cat = survivors;
        }
    }

    let mut alive = vec![true; inst.n_blocks()];
    let mut assignments = Vec::new();
    let mut delivered = vec![0.0; n_urllc];
    let mut unmet = vec![true; n_urllc];
    let mut n_unmet = n_urllc;

    while n_unmet > 0 {
        let mut assigned_this_pass = false;
        for level in 1..=h {
            // Scarcest usable category at this level among unmet services.
            let mut selected: Option<(usize, usize)> = None; // (count, service)
            for k in 0..n_urllc {
                if !unmet[k] {
                    continue;
                }
                let count = categories[k][level - 1]
                    .iter()
                    .filter(|&&b| alive[b])
                    .count();
                if count >= level {
                    let better = match selected {
                        None => true,
                        Some((c, kk)) => count < c || (count == c && k < kk),
                    };
                    if better {
                        selected = Some((count, k));
                    }
                }
            }
            let Some((_, k)) = selected else { continue };

            let chosen: Vec<usize> = categories[k][level - 1]
                .iter()
                .copied()
                .filter(|&b| alive[b])
                .take(level)
                .collect();
            for &b in &chosen {
                assignments.push(Assignment {
                    block_id: b,
                    service: k,
                    fraction: 1.0,
                });
                delivered[k] += inst.throughput.rate(b, k);
                kill_with_neighbors(&inst.conflicts, &mut alive, b);
            }
            if delivered[k] >= inst.services.demand_kbps(k) - DEMAND_TOL_KBPS {
                unmet[k] = false;
                n_unmet -= 1;
            }
            assigned_this_pass = true;
        }
        if !assigned_this_pass {
            break;
        }
    }

    embb_phase(inst, &mut alive, &mut assignments);

    let status = if n_unmet == 0 {
        ScheduleStatus::Feasible { bound_gap: None }
    } else {
        ScheduleStatus::Infeasible
    };
    Schedule::from_assignments(assignments, status, inst)
}

/// Modified bin-packing heuristic with a feasibility pre-check.
///
/// When the URLLC share of the total available throughput exceeds `delta`,
/// the allocation switches from the aggregated-loss metric to the
/// best-URLLC-rate metric, trading eMBB value for URLLC satisfiability.
pub fn run_mbp(inst: &InstanceP0, h: usize, delta: f64, mode: LossMode) -> Schedule {
    debug_assert!(delta > 0.0 && delta < 1.0);
    let mut urllc_sum = 0.0;
    let mut total_sum = 0.0;
    for b in 0..inst.n_blocks() {
        for k in 0..inst.services.n_services() {
            let r = inst.throughput.rate(b, k);
            total_sum += r;
            if inst.services.is_urllc(k) {
                urllc_sum += r;
            }
        }
    }
    let metric = if urllc_sum > delta * total_sum {
        LossMetric::MaxUrllcRate
    } else {
        LossMetric::Aggregated
    };
    run_bpb(inst, h, metric, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_snr, throughput_matrix, ServiceSet, ThroughputMatrix};
    use crate::exact::solve_p0_bruteforce;
    use crate::grid::{build_conflicts, default_shapes, enumerate_blocks, BlockShape, GridSpec, ShapeId};
    use crate::validate::validate_schedule;
    use proptest::prelude::*;

    fn seeded_instance(
        spec: &GridSpec,
        shapes: &[BlockShape],
        services: ServiceSet,
        seed: u64,
    ) -> InstanceP0 {
        let blocks = enumerate_blocks(spec, shapes);
        let conflicts = build_conflicts(&blocks, spec);
        let snr = sample_snr(&services, spec, (5.0, 30.0), seed).unwrap();
        let tp = throughput_matrix(&snr, &blocks, &services, spec, shapes);
        InstanceP0::new(conflicts, tp, services)
    }

    fn tiny_instance(seed: u64, q_kbps: f64) -> InstanceP0 {
        let spec = GridSpec::new(4, 4, 2.0, 2.0).unwrap();
        let shapes = [
            BlockShape::standard(ShapeId::Shape1),
            BlockShape::standard(ShapeId::Shape2),
        ];
        seeded_instance(
            &spec,
            &shapes,
            ServiceSet::uniform(1, q_kbps, 2.0, 2, 2.0).unwrap(),
            seed,
        )
    }

    #[test]
    fn isolated_block_metrics_are_zero() {
        let spec = GridSpec::new(4, 1, 2.0, 2.0).unwrap();
        let blocks = enumerate_blocks(&spec, &[BlockShape::standard(ShapeId::Shape1)]);
        let conflicts = build_conflicts(&blocks, &spec);
        let services = ServiceSet::uniform(1, 10.0, 2.0, 0, 2.0).unwrap();
        let tp = ThroughputMatrix::from_rows(vec![vec![100.0]], 1);
        let metrics = conflict_metrics(&conflicts, &tp, &services);
        assert_eq!(metrics.c_total[0], 0);
        assert_eq!(metrics.c_avg[0][0], 0.0);
    }

    #[test]
    fn two_overlapping_blocks_single_term_average() {
        // Two Shape3 blocks at the same origin fully overlap.
        let spec = GridSpec::new(1, 4, 2.0, 2.0).unwrap();
        let shapes = [
            BlockShape::standard(ShapeId::Shape3),
            BlockShape::standard(ShapeId::Shape4),
        ];
        let blocks = enumerate_blocks(&spec, &shapes);
        assert_eq!(blocks.len(), 2);
        let conflicts = build_conflicts(&blocks, &spec);
        let services = ServiceSet::uniform(1, 10.0, 2.0, 0, 2.0).unwrap();
        let tp = ThroughputMatrix::from_rows(vec![vec![100.0], vec![100.0]], 1);
        let metrics = conflict_metrics(&conflicts, &tp, &services);
        assert_eq!(metrics.c_total[0], 1);
        assert_eq!(metrics.c_avg[0][0], 100.0);
        assert_eq!(metrics.c_avg[1][0], 100.0);
    }

    #[test]
    fn metrics_match_double_loop_oracle_on_4x4() {
        let inst = tiny_instance(11, 500.0);
        let metrics = conflict_metrics(&inst.conflicts, &inst.throughput, &inst.services);
        for b in 0..inst.n_blocks() {
            let mut degree = 0usize;
            let mut sums = vec![0.0; inst.services.n_urllc()];
            for p in 0..inst.n_blocks() {
                if inst.conflicts.conflicts(b, p) {
                    degree += 1;
                    for (k, s) in sums.iter_mut().enumerate() {
                        *s += inst.throughput.rate(p, k);
                    }
                }
            }
            assert_eq!(metrics.c_total[b], degree);
            for k in 0..inst.services.n_urllc() {
                let expected = if degree == 0 { 0.0 } else { sums[k] / degree as f64 };
                assert!((metrics.c_avg[b][k] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn greedy_assigns_independent_blocks_without_urllc() {
        // Two disjoint Shape1 blocks on a 4x2 grid, one eMBB user.
        let spec = GridSpec::new(4, 2, 2.0, 2.0).unwrap();
        let blocks = enumerate_blocks(&spec, &[BlockShape::standard(ShapeId::Shape1)]);
        assert_eq!(blocks.len(), 2);
        let conflicts = build_conflicts(&blocks, &spec);
        let services = ServiceSet::uniform(0, 1.0, 1.0, 1, 2.0).unwrap();
        let tp = ThroughputMatrix::from_rows(vec![vec![120.0], vec![80.0]], 1);
        let inst = InstanceP0::new(conflicts, tp, services);
        let sched = run_ca(&inst, UtilityVariant::Baseline);
        assert_eq!(sched.status, ScheduleStatus::Feasible { bound_gap: None });
        assert_eq!(sched.assignments.len(), 2);
        assert_eq!(sched.objective_kbps, 200.0);
    }

    #[test]
    fn ca_bounded_by_bruteforce_on_tiny_instances() {
        for seed in 0..100u64 {
            let inst = tiny_instance(seed, 2000.0);
            let exact = solve_p0_bruteforce(&inst).unwrap();
            for variant in [
                UtilityVariant::Baseline,
                UtilityVariant::Total,
                UtilityVariant::Avg,
                UtilityVariant::LastPl,
            ] {
                let sched = run_ca(&inst, variant);
                assert!(validate_schedule(&inst, &sched, 1.0).is_empty());
                if exact.status == ScheduleStatus::Optimal
                    && sched.status != ScheduleStatus::Infeasible
                {
                    assert!(
                        sched.objective_kbps <= exact.objective_kbps + 1e-9,
                        "seed {seed} variant {variant:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn bpb_category_arithmetic() {
        // q = 64 against a 70 kbps block lands in category 1.
        assert_eq!((64.0f64 / 70.0).ceil() as usize, 1);

        let spec = GridSpec::new(4, 1, 2.0, 2.0).unwrap();
        let blocks = enumerate_blocks(&spec, &[BlockShape::standard(ShapeId::Shape1)]);
        let conflicts = build_conflicts(&blocks, &spec);
        let services = ServiceSet::uniform(1, 64.0, 2.0, 0, 2.0).unwrap();
        let tp = ThroughputMatrix::from_rows(vec![vec![70.0]], 1);
        let inst = InstanceP0::new(conflicts, tp, services);
        let sched = run_bpb(&inst, 4, LossMetric::Aggregated, LossMode::NeighborRates);
        assert_eq!(sched.status, ScheduleStatus::Feasible { bound_gap: None });
        assert_eq!(sched.assignments.len(), 1);
    }

    #[test]
    fn masked_blocks_appear_in_no_category() {
        // Rate 0 for the URLLC service: BPB cannot place it, demand unmet.
        let spec = GridSpec::new(4, 1, 2.0, 2.0).unwrap();
        let blocks = enumerate_blocks(&spec, &[BlockShape::standard(ShapeId::Shape1)]);
        let conflicts = build_conflicts(&blocks, &spec);
        let services = ServiceSet::uniform(1, 64.0, 2.0, 1, 2.0).unwrap();
        let tp = ThroughputMatrix::from_rows(vec![vec![0.0, 150.0]], 2);
        let inst = InstanceP0::new(conflicts, tp, services);
        let sched = run_bpb(&inst, 4, LossMetric::Aggregated, LossMode::NeighborRates);
        assert_eq!(sched.status, ScheduleStatus::Infeasible);
        // The block still goes to eMBB in phase 2.
        assert_eq!(sched.assignments.len(), 1);
        assert_eq!(sched.assignments[0].service, 1);
    }

    #[test]
    fn bpb_bounded_by_exact_and_validates() {
        for seed in 0..60u64 {
            let inst = tiny_instance(seed, 2500.0);
            let exact = solve_p0_bruteforce(&inst).unwrap();
            let h = default_h(&inst);
            let sched = run_bpb(&inst, h, LossMetric::Aggregated, LossMode::NeighborRates);
            assert!(validate_schedule(&inst, &sched, 1.0).is_empty(), "seed {seed}");
            if exact.status == ScheduleStatus::Optimal && sched.status != ScheduleStatus::Infeasible
            {
                assert!(sched.objective_kbps <= exact.objective_kbps + 1e-9, "seed {seed}");
            }
        }
    }

    #[test]
    fn mbp_delta_extremes() {
        let inst = tiny_instance(5, 1500.0);
        let h = default_h(&inst);
        // delta near 1: pre-check never trips, identical to BPB.
        let bpb = run_bpb(&inst, h, LossMetric::Aggregated, LossMode::NeighborRates);
        let mbp_high = run_mbp(&inst, h, 0.999_999, LossMode::NeighborRates);
        assert_eq!(bpb, mbp_high);
        // delta near 0: pre-check always trips, identical to the max-rate metric.
        let forced = run_bpb(&inst, h, LossMetric::MaxUrllcRate, LossMode::NeighborRates);
        let mbp_low = run_mbp(&inst, h, 1e-9, LossMode::NeighborRates);
        assert_eq!(forced, mbp_low);
    }

    #[test]
    fn heuristics_deterministic() {
        let inst = tiny_instance(17, 1800.0);
        let h = default_h(&inst);
        assert_eq!(run_ca(&inst, UtilityVariant::Total), run_ca(&inst, UtilityVariant::Total));
        assert_eq!(
            run_bpb(&inst, h, LossMetric::Aggregated, LossMode::NeighborRates),
            run_bpb(&inst, h, LossMetric::Aggregated, LossMode::NeighborRates)
        );
        assert_eq!(
            run_mbp(&inst, h, 0.5, LossMode::NeighborRates),
            run_mbp(&inst, h, 0.5, LossMode::NeighborRates)
        );
    }

    #[test]
    fn category_partition_before_pruning() {
        let inst = tiny_instance(23, 3000.0);
        let h = default_h(&inst);
        for k in inst.services.urllc_range() {
            let q = inst.services.demand_kbps(k);
            for b in 0..inst.n_blocks() {
                let r = inst.throughput.rate(b, k);
                if r > 0.0 {
                    let i = (q / r).ceil() as usize;
                    if i <= h {
                        // Exactly one category index claims the block.
                        let claims = (1..=h).filter(|&j| j == i).count();
                        assert_eq!(claims, 1);
                    }
                }
            }
        }
    }

    #[test]
    fn literal_loss_mode_differs_but_validates() {
        let inst = tiny_instance(31, 2200.0);
        let h = default_h(&inst);
        let a = run_bpb(&inst, h, LossMetric::Aggregated, LossMode::NeighborRates);
        let b = run_bpb(&inst, h, LossMetric::Aggregated, LossMode::OwnRates);
        assert!(validate_schedule(&inst, &a, 1.0).is_empty());
        assert!(validate_schedule(&inst, &b, 1.0).is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn argmax_scale_invariance(seed in 0u64..200, exponent in -20i32..20) {
            // Powers of two scale utilities exactly, so the assignment
            // sequence must be bit-identical.
            let inst = tiny_instance(seed, 1500.0);
            let metrics = conflict_metrics(&inst.conflicts, &inst.throughput, &inst.services);
            let base = utility_matrix(&inst, &metrics, UtilityVariant::Total);
            let scale = 2.0f64.powi(exponent);

            let run_with = |u: &UtilityMatrix| -> Vec<(usize, usize)> {
                let mut alive = vec![true; inst.n_blocks()];
                let mut heap = BinaryHeap::new();
                for b in 0..inst.n_blocks() {
                    for k in 0..inst.services.n_urllc() {
                        if inst.throughput.rate(b, k) > 0.0 {
                            heap.push(Candidate { value: u.u[b][k], block: b as u32, service: k as u32 });
                        }
                    }
                }
                let mut picks = Vec::new();
                let mut delivered = vec![0.0; inst.services.n_urllc()];
                let mut unmet = vec![true; inst.services.n_urllc()];
                while let Some(c) = heap.pop() {
                    let (b, k) = (c.block as usize, c.service as usize);
                    if !alive[b] || !unmet[k] { continue; }
                    picks.push((b, k));
                    delivered[k] += inst.throughput.rate(b, k);
                    if delivered[k] >= inst.services.demand_kbps(k) - DEMAND_TOL_KBPS {
                        unmet[k] = false;
                    }
                    kill_with_neighbors(&inst.conflicts, &mut alive, b);
                }
                picks
            };

            let scaled = UtilityMatrix {
                u: base.u.iter().map(|row| row.iter().map(|&v| v * scale).collect()).collect(),
                variant: base.variant,
            };
            prop_assert_eq!(run_with(&base), run_with(&scaled));
        }
    }
}
