//! Exact OMA scheduling: branch-and-bound over the LP relaxation, plus an
//! exhaustive-enumeration oracle for tiny instances.
//!
//! The integer program assigns each block to at most one service (binary
//! x[b][k]), must deliver every URLLC demand, and may cover each mini-slot
//! at most once; the objective is the eMBB sum rate. Branch-and-bound prices
//! bounds from the box relaxation (the NOMA LP at r_tilde = 1), branches on
//! the most fractional variable, and explores nodes best-bound first with
//! deeper nodes preferred on ties.

use crate::channel::{ServiceSet, ThroughputMatrix};
use crate::grid::ConflictStructure;
use crate::lp::{self, LpConfig, LpError, LpStatus, NomaConfig, Sense};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Feasibility tolerance on delivered rate versus demand, in kbps.
pub const DEMAND_TOL_KBPS: f64 = 1e-6;
/// Integrality tolerance for branch-and-bound.
pub const INTEGRALITY_TOL: f64 = 1e-6;

const BRUTE_MAX_BLOCKS: usize = 14;
const BRUTE_MAX_SERVICES: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ExactError {
    #[error(
        "instance too large for exhaustive search: {n_blocks} blocks x {n_services} services \
         (limits: {max_blocks} blocks, {max_services} services)"
    )]
    InstanceTooLarge {
        n_blocks: usize,
        n_services: usize,
        max_blocks: usize,
        max_services: usize,
    },
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A fully materialized scheduling instance.
#[derive(Debug, Clone)]
pub struct InstanceP0 {
    pub conflicts: ConflictStructure,
    pub throughput: ThroughputMatrix,
    pub services: ServiceSet,
}

impl InstanceP0 {
    pub fn new(
        conflicts: ConflictStructure,
        throughput: ThroughputMatrix,
        services: ServiceSet,
    ) -> Self {
        assert_eq!(conflicts.n_blocks(), throughput.n_blocks());
        assert_eq!(services.n_services(), throughput.n_services());
        Self {
            conflicts,
            throughput,
            services,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.conflicts.n_blocks()
    }
}

/// One block-service pairing; `fraction` is 1 for binary schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub block_id: usize,
    /// Dense service index (URLLC first).
    pub service: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleStatus {
    /// Proven optimal (within the configured gap tolerance for B&B).
    Optimal,
    /// Feasible without an optimality certificate (heuristic output).
    Feasible { bound_gap: Option<f64> },
    /// Demands not met: proven impossible for exact solvers, or simply not
    /// achieved by a heuristic (its partial assignment is still recorded).
    Infeasible,
    /// Branch-and-bound ran out of time.
    TimeLimit {
        best_objective: Option<f64>,
        best_bound: f64,
    },
}

impl ScheduleStatus {
    /// Whether the schedule claims every URLLC demand is met.
    pub fn claims_feasible(&self) -> bool {
        match self {
            ScheduleStatus::Optimal | ScheduleStatus::Feasible { .. } => true,
            ScheduleStatus::Infeasible => false,
            ScheduleStatus::TimeLimit { best_objective, .. } => best_objective.is_some(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScheduleStatus::Optimal => "Optimal",
            ScheduleStatus::Feasible { .. } => "Feasible",
            ScheduleStatus::Infeasible => "Infeasible",
            ScheduleStatus::TimeLimit { .. } => "TimeLimit",
        }
    }
}

/// A block-to-service assignment with its delivered rates and eMBB objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Sorted by (block_id, service).
    pub assignments: Vec<Assignment>,
    /// eMBB sum rate, accumulated in assignment order.
    pub objective_kbps: f64,
    pub status: ScheduleStatus,
    /// Delivered rate per dense service index.
    pub delivered_kbps: Vec<f64>,
}

impl Schedule {
    /// Ranks assignments canonically and recomputes delivered rates and the
    /// objective from the instance, so equal assignment sets always produce
    /// bit-identical numbers regardless of which solver found them.
    pub fn from_assignments(
        mut assignments: Vec<Assignment>,
        status: ScheduleStatus,
        inst: &InstanceP0,
    ) -> Self {
        assignments.sort_by(|a, b| {
            (a.block_id, a.service)
                .cmp(&(b.block_id, b.service))
                .then(a.fraction.partial_cmp(&b.fraction).unwrap_or(Ordering::Equal))
        });
        let mut delivered = vec![0.0; inst.services.n_services()];
        let mut objective = 0.0;
        for a in &assignments {
            let contribution = inst.throughput.rate(a.block_id, a.service) * a.fraction;
            delivered[a.service] += contribution;
            if !inst.services.is_urllc(a.service) {
                objective += contribution;
            }
        }
        Self {
            assignments,
            objective_kbps: objective,
            status,
            delivered_kbps: delivered,
        }
    }

    pub fn infeasible(n_services: usize) -> Self {
        Self {
            assignments: Vec::new(),
            objective_kbps: 0.0,
            status: ScheduleStatus::Infeasible,
            delivered_kbps: vec![0.0; n_services],
        }
    }

    /// True when every URLLC demand is delivered within tolerance.
    pub fn demands_met(&self, inst: &InstanceP0) -> bool {
        inst.services
            .urllc_range()
            .all(|k| self.delivered_kbps[k] >= inst.services.demand_kbps(k) - DEMAND_TOL_KBPS)
    }
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration
// ---------------------------------------------------------------------------

/// Globally optimal schedule by exhaustive search.
///
/// Guarded to at most 14 blocks and 4 services: the search walks every
/// conflict-free assignment, which is O((K+1)^B) before pruning. Ties on the
/// objective are broken toward the lexicographically smallest assignment
/// set, so results are deterministic.
pub fn solve_p0_bruteforce(inst: &InstanceP0) -> Result<Schedule, ExactError> {
    let n_blocks = inst.n_blocks();
    let n_services = inst.services.n_services();
    if n_blocks > BRUTE_MAX_BLOCKS || n_services > BRUTE_MAX_SERVICES {
        return Err(ExactError::InstanceTooLarge {
            n_blocks,
            n_services,
            max_blocks: BRUTE_MAX_BLOCKS,
            max_services: BRUTE_MAX_SERVICES,
        });
    }

    // Upper bound on the eMBB value obtainable from blocks b.. onwards,
    // ignoring conflicts; used only for strict pruning so ties survive.
    let best_embb_rate = |b: usize| -> f64 {
        inst.services
            .embb_range()
            .map(|k| inst.throughput.rate(b, k))
            .fold(0.0f64, f64::max)
    };
    let mut suffix_potential = vec![0.0; n_blocks + 1];
    for b in (0..n_blocks).rev() {
        suffix_potential[b] = suffix_potential[b + 1] + best_embb_rate(b);
    }

    struct Search<'a> {
        inst: &'a InstanceP0,
        suffix_potential: Vec<f64>,
        chosen: Vec<(usize, usize)>,
        delivered: Vec<f64>,
        embb_value: f64,
        best: Option<(f64, Vec<(usize, usize)>)>,
    }

    impl Search<'_> {
        fn feasible_now(&self) -> bool {
            self.inst.services.urllc_range().all(|k| {
                self.delivered[k] >= self.inst.services.demand_kbps(k) - DEMAND_TOL_KBPS
            })
        }

        fn recurse(&mut self, b: usize) {
            if let Some((best_obj, _)) = &self.best {
                if self.embb_value + self.suffix_potential[b] < *best_obj {
                    return;
                }
            }
            if b == self.inst.n_blocks() {
                if !self.feasible_now() {
                    return;
                }
                let better = match &self.best {
                    None => true,
                    Some((obj, set)) => {
                        self.embb_value > *obj
                            || (self.embb_value == *obj && self.chosen < *set)
                    }
                };
                if better {
                    self.best = Some((self.embb_value, self.chosen.clone()));
                }
                return;
            }

            // Option 1: leave block b unassigned.
            self.recurse(b + 1);

            // Option 2: assign to each service with positive rate, if
            // conflict-free against the current selection.
            let clashes = self
                .chosen
                .iter()
                .any(|&(p, _)| self.inst.conflicts.conflicts(b, p));
            if clashes {
                return;
            }
            for k in 0..self.inst.services.n_services() {
                let r = self.inst.throughput.rate(b, k);
                if r <= 0.0 {
                    continue;
                }
                self.chosen.push((b, k));
                self.delivered[k] += r;
                let is_embb = !self.inst.services.is_urllc(k);
                if is_embb {
                    self.embb_value += r;
                }
                self.recurse(b + 1);
                if is_embb {
                    self.embb_value -= r;
                }
                self.delivered[k] -= r;
                self.chosen.pop();
            }
        }
    }

    let mut search = Search {
        inst,
        suffix_potential,
        chosen: Vec::new(),
        delivered: vec![0.0; n_services],
        embb_value: 0.0,
        best: None,
    };
    search.recurse(0);

    match search.best {
        None => Ok(Schedule::infeasible(n_services)),
        Some((_, set)) => {
            let assignments = set
                .into_iter()
                .map(|(block_id, service)| Assignment {
                    block_id,
                    service,
                    fraction: 1.0,
                })
                .collect();
            Ok(Schedule::from_assignments(
                assignments,
                ScheduleStatus::Optimal,
                inst,
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BnbConfig {
    pub time_limit: Option<Duration>,
    /// Relative bound gap at which the incumbent is accepted as optimal.
    pub gap_tol: f64,
    pub lp: LpConfig,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            time_limit: None,
            gap_tol: 0.0,
            lp: LpConfig::default(),
        }
    }
}

struct Node {
    /// (variable, fixed value) pairs along the path from the root.
    fixings: Vec<(usize, u8)>,
    bound: f64,
    branch_var: usize,
    depth: usize,
    id: u64,
    /// Basis of this node's own LP optimum, reused by its children.
    warm: Option<lp::WarmBasis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key() == other.cmp_key()
    }
}
impl Eq for Node {}
impl Node {
    fn cmp_key(&self) -> (f64, usize, std::cmp::Reverse<u64>) {
        (self.bound, self.depth, std::cmp::Reverse(self.id))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        let (b1, d1, i1) = self.cmp_key();
        let (b2, d2, i2) = other.cmp_key();
        b1.partial_cmp(&b2)
            .unwrap_or(Ordering::Equal)
            .then(d1.cmp(&d2))
            .then(i1.cmp(&i2))
    }
}

/// Exact P0 solve by LP-based branch-and-bound.
///
/// Pairs with zero rate are dropped up front (latency masking zeroes many
/// URLLC columns). Nodes are explored best-bound first, ties broken toward
/// deeper nodes; branching fixes the most fractional variable, ties toward
/// the smallest (block, service).
pub fn solve_p0_bnb(inst: &InstanceP0, cfg: &BnbConfig) -> Result<Schedule, ExactError> {
    let start = Instant::now();
    let n_services = inst.services.n_services();

    // Identical-footprint dominance: of two blocks covering exactly the
    // same mini-slots, the one with the weakly better rate vector can stand
    // in for the other in any schedule, so the weaker block's variables are
    // dropped (ties keep the smaller block_id). This removes the symmetric
    // duplicate columns that otherwise stall fractional branching.
    let mut dominated = vec![false; inst.n_blocks()];
    {
        let mut groups: std::collections::BTreeMap<[usize; 4], Vec<usize>> =
            std::collections::BTreeMap::new();
        for b in 0..inst.n_blocks() {
            let mut key = *inst.conflicts.covered_slots(b);
            key.sort_unstable();
            groups.entry(key).or_default().push(b);
        }
        for group in groups.values() {
            for (i, &a) in group.iter().enumerate() {
                for &b in &group[i + 1..] {
                    let a_covers_b =
                        (0..n_services).all(|k| inst.throughput.rate(a, k) >= inst.throughput.rate(b, k));
                    if a_covers_b {
                        dominated[b] = true;
                    } else if (0..n_services)
                        .all(|k| inst.throughput.rate(b, k) >= inst.throughput.rate(a, k))
                    {
                        dominated[a] = true;
                    }
                }
            }
        }
    }

    // An eMBB variable appears in no demand row, so a block carried by eMBB
    // always does best on its max-rate eMBB service; the block's other eMBB
    // variables cannot improve any solution and are dropped (ties keep the
    // smallest service index).
    let best_embb: Vec<Option<usize>> = (0..inst.n_blocks())
        .map(|b| {
            inst.services
                .embb_range()
                .filter(|&k| inst.throughput.rate(b, k) > 0.0)
                .max_by(|&a, &bk| {
                    inst.throughput
                        .rate(b, a)
                        .partial_cmp(&inst.throughput.rate(b, bk))
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(bk.cmp(&a))
                })
        })
        .collect();

    // Presolve: keep only non-dominated pairs that can carry rate.
    let vars: Vec<(usize, usize)> = (0..inst.n_blocks())
        .flat_map(|b| (0..n_services).map(move |k| (b, k)))
        .filter(|&(b, k)| {
            !dominated[b]
                && inst.throughput.rate(b, k) > 0.0
                && (inst.services.is_urllc(k) || best_embb[b] == Some(k))
        })
        .collect();

    for k in inst.services.urllc_range() {
        if !vars.iter().any(|&(_, kk)| kk == k) {
            return Ok(Schedule::infeasible(n_services));
        }
    }

    let lp = build_relaxation(inst, &vars);
    let root_bounds: Vec<(f64, f64)> = vec![(0.0, 1.0); vars.len()];

    let objective_of = |selected: &[(usize, usize)]| -> f64 {
        selected
            .iter()
            .filter(|&&(_, k)| !inst.services.is_urllc(k))
            .map(|&(b, k)| inst.throughput.rate(b, k))
            .sum()
    };

    // Warm incumbent from the fast heuristics. Any feasible schedule prunes
    // every node bounded at or below its value, which shrinks the tree
    // without affecting the optimum.
    let mut incumbent: Option<(f64, Vec<(usize, usize)>)> = None;
    for warm in [
        crate::heuristics::run_ca(inst, crate::heuristics::UtilityVariant::Total),
        crate::heuristics::run_ca(inst, crate::heuristics::UtilityVariant::Baseline),
        crate::heuristics::run_bpb(
            inst,
            crate::heuristics::default_h(inst),
            crate::heuristics::LossMetric::Aggregated,
            crate::heuristics::LossMode::NeighborRates,
        ),
    ] {
        if !(warm.status.claims_feasible() && warm.demands_met(inst)) {
            continue;
        }
        let selected: Vec<(usize, usize)> = warm
            .assignments
            .iter()
            .map(|a| (a.block_id, a.service))
            .collect();
        let obj = objective_of(&selected);
        if incumbent.as_ref().map_or(true, |(best, _)| obj > *best) {
            incumbent = Some((obj, selected));
        }
    }

    // Root relaxation: certifies infeasibility and drives reduced-cost
    // fixing throughout the search.
    let (root_sol, root_warm_basis) = lp::solve_lp_reopt(&lp, &cfg.lp, &root_bounds, None)?;
    match root_sol.status {
        LpStatus::Infeasible => return Ok(Schedule::infeasible(n_services)),
        LpStatus::Unbounded => {
            return Err(ExactError::Lp(LpError::Numerical(
                "relaxation is box-bounded; unbounded status indicates a solver failure".into(),
            )))
        }
        LpStatus::Optimal => {}
    }

    let mut queue: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 0u64;

    // Evaluates one node: reoptimizes its LP from the parent basis (cold
    // solve as fallback), updates the incumbent on integral solutions, or
    // queues it for branching.
    let evaluate = |fixings: Vec<(usize, u8)>,
                    depth: usize,
                    parent_warm: Option<&lp::WarmBasis>,
                    queue: &mut BinaryHeap<Node>,
                    incumbent: &mut Option<(f64, Vec<(usize, usize)>)>,
                    next_id: &mut u64|
     -> Result<(), ExactError> {
        let mut bounds = root_bounds.clone();
        // Reduced-cost fixing against the current incumbent: forcing a
        // nonbasic root variable off its bound costs at least its reduced
        // cost, so pairs that cannot reach the incumbent are pinned.
        if let Some((best, _)) = incumbent {
            let margin = *best - 1e-6 * (1.0 + best.abs());
            for (v, bound) in bounds.iter_mut().enumerate() {
                let d = root_sol.reduced_costs[v];
                let xv = root_sol.x[v];
                if xv <= INTEGRALITY_TOL && root_sol.objective + d < margin {
                    *bound = (0.0, 0.0);
                } else if xv >= 1.0 - INTEGRALITY_TOL && root_sol.objective - d < margin {
                    *bound = (1.0, 1.0);
                }
            }
        }
        for &(v, val) in &fixings {
            bounds[v] = (val as f64, val as f64);
        }
        bnb_stats::NODES.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let warm_try = parent_warm.and_then(|w| lp::solve_lp_reopt(&lp, &cfg.lp, &bounds, Some(w)).ok());
        if warm_try.is_none() { bnb_stats::WARM_FAILS.fetch_add(1, std::sync::atomic::Ordering::Relaxed); }
        let (sol, warm) = match warm_try
        {
            Some(result) => result,
            None => lp::solve_lp_reopt(&lp, &cfg.lp, &bounds, None)?,
        };
        bnb_stats::LP_ITERS.fetch_add(sol.iterations as u64, std::sync::atomic::Ordering::Relaxed);
        match sol.status {
            LpStatus::Infeasible => Ok(()),
            LpStatus::Unbounded => Err(ExactError::Lp(LpError::Numerical(
                "relaxation is box-bounded; unbounded status indicates a solver failure".into(),
            ))),
            LpStatus::Optimal => {
                if let Some((best, _)) = incumbent {
                    if sol.objective <= *best + 1e-9 * (1.0 + best.abs()) {
                        return Ok(());
                    }
                }
                // Greedy rounding of the node LP: take variables by
                // descending fraction while they fit, then keep the result
                // if it is feasible and improving. Cheap incumbents tighten
                // pruning everywhere.
                let mut order: Vec<usize> = (0..sol.x.len()).filter(|&v| sol.x[v] > 1e-6).collect();
                order.sort_by(|&a, &b| {
                    sol.x[b]
                        .partial_cmp(&sol.x[a])
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                let mut slot_used = vec![false; inst.conflicts.n_minislots()];
                let mut rounded: Vec<(usize, usize)> = Vec::new();
                for v in order {
                    let (b, k) = vars[v];
                    if inst
                        .conflicts
                        .covered_slots(b)
                        .iter()
                        .all(|&s| !slot_used[s])
                    {
                        for &s in inst.conflicts.covered_slots(b) {
                            slot_used[s] = true;
                        }
                        rounded.push((b, k));
                    }
                }
                rounded.sort_unstable();
                if integral_selection_feasible(inst, &rounded) {
                    let obj = objective_of(&rounded);
                    if incumbent.as_ref().map_or(true, |(best, _)| obj > *best) {
                        *incumbent = Some((obj, rounded));
                    }
                }

                // Most-fractional rule: maximize min(f, 1-f), smallest
                // variable index on ties.
                let mut branch_var = None;
                let mut best_score = INTEGRALITY_TOL;
                for (v, &xv) in sol.x.iter().enumerate() {
                    let f = xv - xv.floor();
                    let score = f.min(1.0 - f);
                    if score > best_score {
                        best_score = score;
                        branch_var = Some(v);
                    }
                }

                match branch_var {
                    None => {
                        // Integral: round and accept if genuinely feasible.
                        let selected: Vec<(usize, usize)> = sol
                            .x
                            .iter()
                            .enumerate()
                            .filter(|(_, &xv)| xv > 0.5)
                            .map(|(v, _)| vars[v])
                            .collect();
                        if integral_selection_feasible(inst, &selected) {
                            let obj = objective_of(&selected);
                            let better = match incumbent {
                                None => true,
                                Some((best, _)) => obj > *best,
                            };
                            if better {
                                *incumbent = Some((obj, selected));
                            }
                        }
                        Ok(())
                    }
                    Some(v) => {
                        queue.push(Node {
                            fixings,
                            bound: sol.objective,
                            branch_var: v,
                            depth,
                            id: *next_id,
                            warm,
                        });
                        *next_id += 1;
                        Ok(())
                    }
                }
            }
        }
    };

    let root_warm = root_warm_basis.as_ref();
    evaluate(
        Vec::new(),
        0,
        root_warm,
        &mut queue,
        &mut incumbent,
        &mut next_id,
    )?;

    let prune_tol = |best: f64| 1e-9 * (1.0 + best.abs());
    while let Some(node) = queue.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound <= *best + prune_tol(*best) {
                continue; // best-bound order: every remaining node is pruned too
            }
            if cfg.gap_tol > 0.0 && node.bound - best <= cfg.gap_tol * best.abs().max(1.0) {
                break;
            }
        }
        if let Some(limit) = cfg.time_limit {
            if start.elapsed() >= limit {
                let best_bound = node.bound;
                return Ok(match &incumbent {
                    None => Schedule {
                        assignments: Vec::new(),
                        objective_kbps: 0.0,
                        status: ScheduleStatus::TimeLimit {
                            best_objective: None,
                            best_bound,
                        },
                        delivered_kbps: vec![0.0; n_services],
                    },
                    Some((obj, selected)) => {
                        let assignments = selected
                            .iter()
                            .map(|&(block_id, service)| Assignment {
                                block_id,
                                service,
                                fraction: 1.0,
                            })
                            .collect();
                        let mut sched = Schedule::from_assignments(
                            assignments,
                            ScheduleStatus::TimeLimit {
                                best_objective: Some(*obj),
                                best_bound,
                            },
                            inst,
                        );
                        sched.status = ScheduleStatus::TimeLimit {
                            best_objective: Some(sched.objective_kbps),
                            best_bound,
                        };
                        sched
                    }
                });
            }
        }

        for value in [0u8, 1u8] {
            let mut fixings = node.fixings.clone();
            fixings.push((node.branch_var, value));
            evaluate(
                fixings,
                node.depth + 1,
                node.warm.as_ref(),
                &mut queue,
                &mut incumbent,
                &mut next_id,
            )?;
        }
    }

    Ok(match incumbent {
        None => Schedule::infeasible(n_services),
        Some((_, selected)) => {
            let assignments = selected
                .into_iter()
                .map(|(block_id, service)| Assignment {
                    block_id,
                    service,
                    fraction: 1.0,
                })
                .collect();
            Schedule::from_assignments(assignments, ScheduleStatus::Optimal, inst)
        }
    })
}

/// LP relaxation over an explicit variable list (capacity rhs fixed at 1).
fn build_relaxation(inst: &InstanceP0, vars: &[(usize, usize)]) -> lp::LinearProgram {
    let mut lp = lp::LinearProgram::new(vars.len());
    let mut vars_by_block: Vec<Vec<usize>> = vec![Vec::new(); inst.n_blocks()];
    for (v, &(b, k)) in vars.iter().enumerate() {
        lp.set_bounds(v, 0.0, 1.0);
        vars_by_block[b].push(v);
        if !inst.services.is_urllc(k) {
            lp.set_objective(v, inst.throughput.rate(b, k));
        }
    }
    for k in inst.services.urllc_range() {
        let terms: Vec<(usize, f64)> = vars
            .iter()
            .enumerate()
            .filter(|&(_, &(_, kk))| kk == k)
            .map(|(v, &(b, _))| (v, inst.throughput.rate(b, k)))
            .collect();
        lp.add_row(Sense::Ge, inst.services.demand_kbps(k), &terms);
    }
    for i in 0..inst.conflicts.n_minislots() {
        let mut terms = Vec::new();
        for &b in inst.conflicts.blocks_on_slot(i) {
            for &v in &vars_by_block[b] {
                terms.push((v, 1.0));
            }
        }
        if !terms.is_empty() {
            lp.add_row(Sense::Le, 1.0, &terms);
        }
    }
    lp
}

/// Exclusivity and demand recheck for a rounded LP solution.
fn integral_selection_feasible(inst: &InstanceP0, selected: &[(usize, usize)]) -> bool {
    let mut slot_used = vec![false; inst.conflicts.n_minislots()];
    let mut delivered = vec![0.0; inst.services.n_services()];
    for &(b, k) in selected {
        for &slot in inst.conflicts.covered_slots(b) {
            if slot_used[slot] {
                return false;
            }
            slot_used[slot] = true;
        }
        delivered[k] += inst.throughput.rate(b, k);
    }
    inst.services
        .urllc_range()
        .all(|k| delivered[k] >= inst.services.demand_kbps(k) - DEMAND_TOL_KBPS)
}

/// Convenience: the LP relaxation bound of P0 (equals P1 at r_tilde = 1).
pub fn p0_relaxation_bound(inst: &InstanceP0, cfg: &LpConfig) -> Result<Option<f64>, ExactError> {
    let lp = lp::build_p1(inst, &NomaConfig::default());
    let sol = lp::solve_lp_with(&lp, cfg, None)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(sol.objective),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{SnrRealization, ThroughputMatrix};
    use crate::grid::{build_conflicts, default_shapes, enumerate_blocks, GridSpec};

    /// One Shape1 block on a 4x1 grid with hand-set rates.
    fn single_block_instance(rates: Vec<f64>, services: ServiceSet) -> InstanceP0 {
        let spec = GridSpec::new(4, 1, 2.0, 2.0).unwrap();
        let blocks = enumerate_blocks(&spec, &[crate::grid::BlockShape::standard(
            crate::grid::ShapeId::Shape1,
        )]);
        assert_eq!(blocks.len(), 1);
        let conflicts = build_conflicts(&blocks, &spec);
        let tp = ThroughputMatrix::from_rows(vec![rates], services.n_services());
        InstanceP0::new(conflicts, tp, services)
    }

    #[test]
    fn single_block_single_embb() {
        let services = ServiceSet::uniform(0, 1.0, 1.0, 1, 2.0).unwrap();
        let inst = single_block_instance(vec![100.0], services);
        let sched = solve_p0_bruteforce(&inst).unwrap();
        assert_eq!(sched.status, ScheduleStatus::Optimal);
        assert_eq!(sched.objective_kbps, 100.0);
        assert_eq!(sched.assignments.len(), 1);
    }

    #[test]
    fn unreachable_demand_is_infeasible() {
        let services = ServiceSet::uniform(1, 1000.0, 2.0, 0, 2.0).unwrap();
        let inst = single_block_instance(vec![100.0], services);
        let sched = solve_p0_bruteforce(&inst).unwrap();
        assert_eq!(sched.status, ScheduleStatus::Infeasible);
        let bnb = solve_p0_bnb(&inst, &BnbConfig::default()).unwrap();
        assert_eq!(bnb.status, ScheduleStatus::Infeasible);
    }

    #[test]
    fn guard_rejects_oversized_instances() {
        let spec = GridSpec::new(6, 4, 2.0, 2.0).unwrap();
        let blocks = enumerate_blocks(&spec, &default_shapes());
        assert!(blocks.len() > 14);
        let services = ServiceSet::uniform(1, 10.0, 2.0, 1, 2.0).unwrap();
        let snr = SnrRealization::from_parts(vec![vec![20.0; 4]; 2], 0);
        let tp = crate::channel::throughput_matrix(&snr, &blocks, &services, &spec, &default_shapes());
        let conflicts = build_conflicts(&blocks, &spec);
        let inst = InstanceP0::new(conflicts, tp, services);
        let err = solve_p0_bruteforce(&inst).unwrap_err();
        assert!(matches!(err, ExactError::InstanceTooLarge { .. }));
        assert!(err.to_string().contains("14 blocks"));
    }

    #[test]
    fn bnb_matches_bruteforce_on_seeded_tiny_instances() {
        use crate::grid::{BlockShape, ShapeId};
        // 4x4 grid with Shape1 + Shape2 gives 13 blocks.
        let spec = GridSpec::new(4, 4, 2.0, 2.0).unwrap();
        let shapes = [
            BlockShape::standard(ShapeId::Shape1),
            BlockShape::standard(ShapeId::Shape2),
        ];
        let blocks = enumerate_blocks(&spec, &shapes);
        assert_eq!(blocks.len(), 13);
        let conflicts = build_conflicts(&blocks, &spec);

        for seed in 0..50u64 {
            let services = ServiceSet::uniform(1, 2500.0, 2.0, 1, 2.0).unwrap();
            let snr = crate::channel::sample_snr(&services, &spec, (5.0, 30.0), seed).unwrap();
            let tp = crate::channel::throughput_matrix(&snr, &blocks, &services, &spec, &shapes);
            let inst = InstanceP0::new(conflicts.clone(), tp, services);

            let brute = solve_p0_bruteforce(&inst).unwrap();
            let bnb = solve_p0_bnb(&inst, &BnbConfig::default()).unwrap();
            assert_eq!(brute.status, bnb.status, "seed {seed}");
            if brute.status == ScheduleStatus::Optimal {
                assert_eq!(
                    brute.objective_kbps, bnb.objective_kbps,
                    "seed {seed}: brute {} vs bnb {}",
                    brute.objective_kbps, bnb.objective_kbps
                );
            }
        }
    }

    #[test]
    fn bnb_objective_bounded_by_relaxation() {
        use crate::grid::{BlockShape, ShapeId};
        let spec = GridSpec::new(4, 4, 2.0, 2.0).unwrap();
        let shapes = [
            BlockShape::standard(ShapeId::Shape1),
            BlockShape::standard(ShapeId::Shape2),
        ];
        let blocks = enumerate_blocks(&spec, &shapes);
        let conflicts = build_conflicts(&blocks, &spec);
        let services = ServiceSet::uniform(1, 2000.0, 2.0, 1, 2.0).unwrap();
        let snr = crate::channel::sample_snr(&services, &spec, (5.0, 30.0), 3).unwrap();
        let tp = crate::channel::throughput_matrix(&snr, &blocks, &services, &spec, &shapes);
        let inst = InstanceP0::new(conflicts, tp, services);

        let sched = solve_p0_bnb(&inst, &BnbConfig::default()).unwrap();
        let bound = p0_relaxation_bound(&inst, &LpConfig::default())
            .unwrap()
            .expect("relaxation feasible");
        assert!(sched.objective_kbps <= bound + 1e-6 * (1.0 + bound.abs()));
    }

    #[test]
    fn adding_embb_user_never_decreases_optimum() {
        use crate::grid::{BlockShape, ShapeId};
        let spec = GridSpec::new(4, 4, 2.0, 2.0).unwrap();
        let shapes = [BlockShape::standard(ShapeId::Shape2)];
        let blocks = enumerate_blocks(&spec, &shapes);
        let conflicts = build_conflicts(&blocks, &spec);
        for seed in 0..10u64 {
            let small = ServiceSet::uniform(1, 1500.0, 2.0, 1, 2.0).unwrap();
            let large = ServiceSet::uniform(1, 1500.0, 2.0, 2, 2.0).unwrap();
            let snr_small = crate::channel::sample_snr(&small, &spec, (5.0, 30.0), seed).unwrap();
            // Reuse the first two services' draws so the shared users see the
            // same channel in both instances.
            let snr_large = {
                let extended = crate::channel::sample_snr(&large, &spec, (5.0, 30.0), seed).unwrap();
                let mut rows: Vec<Vec<f64>> = (0..2)
                    .map(|k| (0..spec.n_freq).map(|f| snr_small.snr_db(k, f)).collect())
                    .collect();
                rows.push((0..spec.n_freq).map(|f| extended.snr_db(2, f)).collect());
                SnrRealization::from_parts(rows, seed)
            };
            let tp_small =
                crate::channel::throughput_matrix(&snr_small, &blocks, &small, &spec, &shapes);
            let tp_large =
                crate::channel::throughput_matrix(&snr_large, &blocks, &large, &spec, &shapes);
            let inst_small = InstanceP0::new(conflicts.clone(), tp_small, small);
            let inst_large = InstanceP0::new(conflicts.clone(), tp_large, large);
            let a = solve_p0_bnb(&inst_small, &BnbConfig::default()).unwrap();
            let b = solve_p0_bnb(&inst_large, &BnbConfig::default()).unwrap();
            if a.status == ScheduleStatus::Optimal && b.status == ScheduleStatus::Optimal {
                assert!(b.objective_kbps >= a.objective_kbps - 1e-9);
            }
        }
    }

    #[test]
    fn raising_demand_never_increases_optimum() {
        use crate::grid::{BlockShape, ShapeId};
        let spec = GridSpec::new(4, 4, 2.0, 2.0).unwrap();
        let shapes = [BlockShape::standard(ShapeId::Shape2)];
        let blocks = enumerate_blocks(&spec, &shapes);
        let conflicts = build_conflicts(&blocks, &spec);
        for seed in 0..10u64 {
            let lo = ServiceSet::uniform(1, 1000.0, 2.0, 1, 2.0).unwrap();
            let hi = ServiceSet::uniform(1, 3000.0, 2.0, 1, 2.0).unwrap();
            let snr = crate::channel::sample_snr(&lo, &spec, (5.0, 30.0), seed).unwrap();
            let tp_lo = crate::channel::throughput_matrix(&snr, &blocks, &lo, &spec, &shapes);
            let tp_hi = crate::channel::throughput_matrix(&snr, &blocks, &hi, &spec, &shapes);
            let a = solve_p0_bnb(&InstanceP0::new(conflicts.clone(), tp_lo, lo), &BnbConfig::default())
                .unwrap();
            let b = solve_p0_bnb(&InstanceP0::new(conflicts.clone(), tp_hi, hi), &BnbConfig::default())
                .unwrap();
            if a.status == ScheduleStatus::Optimal && b.status == ScheduleStatus::Optimal {
                assert!(b.objective_kbps <= a.objective_kbps + 1e-9);
            }
        }
    }
}

#[doc(hidden)]
pub mod bnb_stats {
    use std::sync::atomic::AtomicU64;
    pub static NODES: AtomicU64 = AtomicU64::new(0);
    pub static WARM_FAILS: AtomicU64 = AtomicU64::new(0);
    pub static LP_ITERS: AtomicU64 = AtomicU64::new(0);
}
