//! Bounded-variable revised simplex and the NOMA relaxation P1.
//!
//! The solver keeps an explicit dense basis inverse (refactorized
//! periodically) over sparsely stored constraint columns, prices with
//! Dantzig's rule, and falls back to Bland's rule after a run of degenerate
//! pivots. Feasibility is established in a first phase that minimizes the
//! total artificial-variable mass, so any mix of senses and bound
//! configurations gets a valid start. The pivot sequence is fully
//! deterministic: identical inputs give identical iterates.

use crate::exact::{Assignment, InstanceP0, Schedule, ScheduleStatus};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("iteration cap of {cap} reached after {iterations} pivots")]
    IterationLimit { cap: usize, iterations: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("r_tilde must be at least 1 (got {0})")]
    InvalidRTilde(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Normalized per-mini-slot capacity under NOMA. 1 reduces the NOMA gain to
/// pure conflict avoidance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NomaConfig {
    r_tilde: f64,
}

impl NomaConfig {
    pub fn new(r_tilde: f64) -> Result<Self, LpError> {
        if !(r_tilde >= 1.0) {
            return Err(LpError::InvalidRTilde(r_tilde));
        }
        Ok(Self { r_tilde })
    }

    pub fn r_tilde(&self) -> f64 {
        self.r_tilde
    }
}

impl Default for NomaConfig {
    fn default() -> Self {
        Self { r_tilde: 1.0 }
    }
}

#[derive(Debug, Clone)]
struct Row {
    terms: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

/// A maximization LP with row constraints and per-variable bounds.
///
/// Rows are stored sparsely; variables default to free. Build with
/// [`set_objective`](Self::set_objective), [`set_bounds`](Self::set_bounds)
/// and [`add_row`](Self::add_row).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    n_vars: usize,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n_vars],
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Coefficient of `var` in the maximization objective.
    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        debug_assert!(lower <= upper);
        self.bounds[var] = (lower, upper);
    }

    pub fn add_row(&mut self, sense: Sense, rhs: f64, terms: &[(usize, f64)]) {
        debug_assert!(terms.iter().all(|&(v, _)| v < self.n_vars));
        self.rows.push(Row {
            terms: terms.to_vec(),
            sense,
            rhs,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpResiduals {
    /// Worst row/bound violation, scaled by 1 + |rhs|.
    pub primal: f64,
    /// Worst reduced-cost sign violation, scaled by 1 + |c|.
    pub dual: f64,
    /// Worst complementary-slackness product.
    pub complementarity: f64,
    /// |primal objective - dual objective| / (1 + |primal objective|).
    pub duality_gap: f64,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (zeros unless Optimal).
    pub x: Vec<f64>,
    /// Row duals in the maximization convention.
    pub duals: Vec<f64>,
    /// Structural reduced costs in the maximization convention.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: LpResiduals,
}

#[derive(Debug, Clone)]
pub struct LpConfig {
    pub iteration_cap: usize,
    /// Pricing threshold on reduced costs.
    pub opt_tol: f64,
    /// Phase-1 acceptance threshold, scaled by 1 + max |rhs|.
    pub feas_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule,
    /// expressed as a multiple of (rows + columns).
    pub stall_factor: usize,
    pub refactor_interval: usize,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            iteration_cap: 1_000_000,
            opt_tol: 1e-9,
            feas_tol: 1e-7,
            stall_factor: 5,
            refactor_interval: 100,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &LpConfig::default(), None)
}

/// Solves `lp`, optionally overriding the structural variable bounds
/// (used by branch-and-bound, which only ever changes bounds).
pub fn solve_lp_with(
    lp: &LinearProgram,
    cfg: &LpConfig,
    bounds_override: Option<&[(f64, f64)]>,
) -> Result<LpSolution, LpError> {
    let bounds = bounds_override.unwrap_or(&lp.bounds);
    debug_assert_eq!(bounds.len(), lp.n_vars);
    Simplex::new(lp, cfg, bounds).run_cold().map(|(sol, _)| sol)
}

/// An optimal basis snapshot, reusable to reoptimize the same LP after a
/// bound change (the branch-and-bound case).
#[derive(Debug, Clone)]
pub struct WarmBasis {
    basis: Vec<u32>,
    /// Per-variable state: 0 lower, 1 upper, 2 free, 3 basic.
    state: Vec<u8>,
}

/// Solves `lp` under `bounds`. With a warm basis from a previous solve of
/// the same LP the solver starts dual-feasible and reoptimizes with the
/// dual simplex, which is typically a handful of pivots after a bound
/// change; without one it runs the cold two-phase method. Returns the
/// solution together with a basis snapshot for further reoptimization
/// (absent when the final basis is unusable, e.g. still holds an artificial).
pub fn solve_lp_reopt(
    lp: &LinearProgram,
    cfg: &LpConfig,
    bounds: &[(f64, f64)],
    warm: Option<&WarmBasis>,
) -> Result<(LpSolution, Option<WarmBasis>), LpError> {
    debug_assert_eq!(bounds.len(), lp.n_vars);
    match warm {
        Some(w) => Simplex::new(lp, cfg, bounds).run_warm(w),
        None => Simplex::new(lp, cfg, bounds).run_cold(),
    }
}

const PIVOT_TOL: f64 = 1e-9;
const DEGEN_TOL: f64 = 1e-10;
const RATIO_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable, held at zero.
    Free,
}

struct Simplex<'a> {
    cfg: &'a LpConfig,
    n_struct: usize,
    m: usize,
    /// Structural + slack + artificial count.
    total: usize,
    n_artificial: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    /// Internal minimization cost (phase 2): negated user objective.
    cost2: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Dense m x m basis inverse, row-major.
    binv: Vec<f64>,
    x: Vec<f64>,
    iterations: usize,
    pivots_since_refactor: usize,
    stall: usize,
    bland: bool,
    /// Scratch vectors.
    y: Vec<f64>,
    w: Vec<f64>,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

enum DualOutcome {
    PrimalFeasible,
    Infeasible,
}

impl<'a> Simplex<'a> {
    fn new(lp: &LinearProgram, cfg: &'a LpConfig, bounds: &[(f64, f64)]) -> Self {
        let n_struct = lp.n_vars;
        let m = lp.rows.len();

        // Structural columns from the row-wise input.
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(v, a) in &row.terms {
                if a != 0.0 {
                    cols[v].push((i, a));
                }
            }
        }
        // One slack per row; bounds encode the sense.
        let mut lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let mut upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        for (i, row) in lp.rows.iter().enumerate() {
            cols.push(vec![(i, 1.0)]);
            let (lo, hi) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            let _ = i;
            lower.push(lo);
            upper.push(hi);
        }

        let mut cost2 = vec![0.0; n_struct + m];
        for j in 0..n_struct {
            cost2[j] = -lp.objective[j];
        }

        Self {
            cfg,
            n_struct,
            m,
            total: n_struct + m,
            n_artificial: 0,
            cols,
            lower,
            upper,
            rhs: lp.rows.iter().map(|r| r.rhs).collect(),
            cost2,
            state: Vec::new(),
            basis: Vec::new(),
            binv: Vec::new(),
            x: Vec::new(),
            iterations: 0,
            pivots_since_refactor: 0,
            stall: 0,
            bland: false,
            y: vec![0.0; m],
            w: vec![0.0; m],
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::Free => 0.0,
            VarState::Basic(_) => unreachable!(),
        }
    }

    /// Initial point: structural variables at a finite bound (or zero when
    /// free), slacks basic where that is feasible, artificials elsewhere.
    fn initialize(&mut self) {
        self.state = (0..self.total)
            .map(|j| {
                if self.lower[j].is_finite() {
                    VarState::AtLower
                } else if self.upper[j].is_finite() {
                    VarState::AtUpper
                } else {
                    VarState::Free
                }
            })
            .collect();
        self.x = (0..self.total).map(|j| self.nonbasic_value(j)).collect();

        // Row activity of the structural part.
        let mut activity = vec![0.0; self.m];
        for j in 0..self.n_struct {
            let xj = self.x[j];
            if xj != 0.0 {
                for &(i, a) in &self.cols[j] {
                    activity[i] += a * xj;
                }
            }
        }

        self.basis = vec![usize::MAX; self.m];
        self.binv = vec![0.0; self.m * self.m];
        for i in 0..self.m {
            let slack = self.n_struct + i;
            let want = self.rhs[i] - activity[i];
            if want >= self.lower[slack] && want <= self.upper[slack] {
                self.basis[i] = slack;
                self.state[slack] = VarState::Basic(i);
                self.x[slack] = want;
                self.binv[i * self.m + i] = 1.0;
            } else {
                // Clamp the slack to its nearest bound and cover the
                // residual with a nonnegative artificial.
                let clamped = want.clamp(self.lower[slack], self.upper[slack]);
                self.x[slack] = clamped;
                self.state[slack] = if clamped == self.lower[slack] {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                };
                let residual = want - clamped;
                let sign = if residual >= 0.0 { 1.0 } else { -1.0 };
                let art = self.total + self.n_artificial;
                self.cols.push(vec![(i, sign)]);
                self.lower.push(0.0);
                self.upper.push(f64::INFINITY);
                self.x.push(residual.abs());
                self.state.push(VarState::Basic(i));
                self.basis[i] = art;
                self.binv[i * self.m + i] = sign;
                self.n_artificial += 1;
            }
        }
        self.total += self.n_artificial;
    }

    fn run_cold(mut self) -> Result<(LpSolution, Option<WarmBasis>), LpError> {
        self.initialize();

        if self.n_artificial > 0 {
            let mut cost1 = vec![0.0; self.total];
            for a in 0..self.n_artificial {
                cost1[self.total - self.n_artificial + a] = 1.0;
            }
            match self.pivot_loop(&cost1)? {
                PhaseOutcome::Unbounded => {
                    return Err(LpError::Numerical(
                        "phase-1 objective is bounded below but reported unbounded".into(),
                    ));
                }
                PhaseOutcome::Optimal => {}
            }
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
            let infeasibility: f64 = (0..self.n_artificial)
                .map(|a| self.x[self.total - self.n_artificial + a])
                .sum();
            if infeasibility > self.cfg.feas_tol * scale {
                return Ok((self.finish(LpStatus::Infeasible), None));
            }
            self.evict_artificials();
        }

        let mut cost2 = self.cost2.clone();
        cost2.resize(self.total, 0.0);
        self.bland = false;
        self.stall = 0;
        match self.pivot_loop(&cost2)? {
            PhaseOutcome::Optimal => {
                let warm = self.extract_warm();
                Ok((self.finish(LpStatus::Optimal), warm))
            }
            PhaseOutcome::Unbounded => Ok((self.finish(LpStatus::Unbounded), None)),
        }
    }

    /// Reoptimization from a dual-feasible basis after a bound change: the
    /// dual simplex restores primal feasibility, then a primal cleanup pass
    /// (normally zero pivots) certifies optimality.
    fn run_warm(mut self, warm: &WarmBasis) -> Result<(LpSolution, Option<WarmBasis>), LpError> {
        self.install(warm)?;
        let cost2 = self.cost2.clone();
        match self.dual_pivot_loop(&cost2)? {
            DualOutcome::Infeasible => return Ok((self.finish(LpStatus::Infeasible), None)),
            DualOutcome::PrimalFeasible => {}
        }
        self.bland = false;
        self.stall = 0;
        match self.pivot_loop(&cost2)? {
            PhaseOutcome::Optimal => {
                let warm = self.extract_warm();
                Ok((self.finish(LpStatus::Optimal), warm))
            }
            PhaseOutcome::Unbounded => Ok((self.finish(LpStatus::Unbounded), None)),
        }
    }

    /// Adopts a basis snapshot: states, basis, fresh inverse, fresh values.
    fn install(&mut self, warm: &WarmBasis) -> Result<(), LpError> {
        if warm.state.len() != self.total || warm.basis.len() != self.m {
            return Err(LpError::Numerical(format!(
                "warm basis shape mismatch: {} states / {} rows vs {} / {}",
                warm.state.len(),
                warm.basis.len(),
                self.total,
                self.m
            )));
        }
        self.state = warm
            .state
            .iter()
            .map(|&s| match s {
                0 => VarState::AtLower,
                1 => VarState::AtUpper,
                2 => VarState::Free,
                _ => VarState::Basic(usize::MAX), // row patched below
            })
            .collect();
        self.basis = warm.basis.iter().map(|&v| v as usize).collect();
        for (row, &var) in self.basis.iter().enumerate() {
            if var >= self.total || !matches!(self.state[var], VarState::Basic(_)) {
                return Err(LpError::Numerical("inconsistent warm basis".into()));
            }
            self.state[var] = VarState::Basic(row);
        }
        // Nonbasic variables sit on bounds that may have moved; clamp states
        // whose bound vanished (a fixed variable is AtLower of its point).
        for j in 0..self.total {
            match self.state[j] {
                VarState::Basic(_) => {}
                VarState::AtLower if self.lower[j].is_finite() => {}
                VarState::AtUpper if self.upper[j].is_finite() => {}
                VarState::Free => {}
                _ => {
                    self.state[j] = if self.lower[j].is_finite() {
                        VarState::AtLower
                    } else if self.upper[j].is_finite() {
                        VarState::AtUpper
                    } else {
                        VarState::Free
                    };
                }
            }
        }
        self.x = vec![0.0; self.total];
        self.binv = vec![0.0; self.m * self.m];
        self.refactorize(self.total)
    }

    fn extract_warm(&self) -> Option<WarmBasis> {
        let real = self.n_struct + self.m;
        if self.basis.iter().any(|&v| v >= real) {
            return None; // an artificial is still basic (redundant row)
        }
        Some(WarmBasis {
            basis: self.basis.iter().map(|&v| v as u32).collect(),
            state: (0..real)
                .map(|j| match self.state[j] {
                    VarState::AtLower => 0,
                    VarState::AtUpper => 1,
                    VarState::Free => 2,
                    VarState::Basic(_) => 3,
                })
                .collect(),
        })
    }

    /// Bounded-variable dual simplex: repeatedly drives the worst
    /// bound-violating basic variable to its violated bound, entering the
    /// nonbasic column that keeps the reduced-cost signs valid.
    fn dual_pivot_loop(&mut self, cost: &[f64]) -> Result<DualOutcome, LpError> {
        let viol_tol = |bound: f64| 1e-9 * (1.0 + bound.abs());
        loop {
            if self.iterations >= self.cfg.iteration_cap {
                return Err(LpError::IterationLimit {
                    cap: self.cfg.iteration_cap,
                    iterations: self.iterations,
                });
            }
            if self.pivots_since_refactor >= self.cfg.refactor_interval {
                self.refactorize(cost.len())?;
            }
            self.compute_duals(cost);

            // Leaving row: the largest bound violation (smallest basic var
            // index under Bland).
            let mut leaving: Option<(usize, f64, f64)> = None; // (row, violation, target bound)
            for r in 0..self.m {
                let var = self.basis[r];
                let xv = self.x[var];
                let (violation, bound) = if xv < self.lower[var] - viol_tol(self.lower[var]) {
                    (self.lower[var] - xv, self.lower[var])
                } else if xv > self.upper[var] + viol_tol(self.upper[var]) {
                    (xv - self.upper[var], self.upper[var])
                } else {
                    continue;
                };
                let better = match leaving {
                    None => true,
                    Some((lrow, lviol, _)) => {
                        if self.bland {
                            self.basis[r] < self.basis[lrow]
                        } else {
                            violation > lviol
                        }
                    }
                };
                if better {
                    leaving = Some((r, violation, bound));
                }
            }
            let Some((row, _, target)) = leaving else {
                return Ok(DualOutcome::PrimalFeasible);
            };

            self.iterations += 1;
            let leaving_var = self.basis[row];
            let below = self.x[leaving_var] < target;

            // alpha_j = (e_row B^-1) A_j over nonbasic candidates.
            let binv_row = self.binv[row * self.m..(row + 1) * self.m].to_vec();
            let mut entering: Option<(f64, f64, usize)> = None; // (|theta|, |alpha|, var)
            for j in 0..self.total {
                if matches!(self.state[j], VarState::Basic(_)) || self.lower[j] == self.upper[j] {
                    continue;
                }
                let mut alpha = 0.0;
                for &(i, a) in &self.cols[j] {
                    alpha += binv_row[i] * a;
                }
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                // Moving j toward feasibility of the leaving variable:
                // below-lower needs the entering step to raise x[leaving],
                // above-upper to lower it; the admissible sign depends on
                // which bound j currently sits on.
                let eligible = match self.state[j] {
                    VarState::AtLower => {
                        if below {
                            alpha < 0.0
                        } else {
                            alpha > 0.0
                        }
                    }
                    VarState::AtUpper => {
                        if below {
                            alpha > 0.0
                        } else {
                            alpha < 0.0
                        }
                    }
                    VarState::Free => true,
                    VarState::Basic(_) => unreachable!(),
                };
                if !eligible {
                    continue;
                }
                let d = self.reduced_cost(cost, j);
                let theta = (d / alpha).abs();
                let better = match entering {
                    None => true,
                    Some((t, a, var)) => {
                        if self.bland {
                            j < var
                        } else {
                            theta < t - RATIO_TIE_TOL
                                || (theta < t + RATIO_TIE_TOL
                                    && (alpha.abs() > a || (alpha.abs() == a && j < var)))
                        }
                    }
                };
                if better {
                    entering = Some((theta, alpha.abs(), j));
                }
            }
            let Some((theta_abs, _, j)) = entering else {
                // No column can repair this row: the LP is primal infeasible.
                return Ok(DualOutcome::Infeasible);
            };

            self.compute_column(j);
            let alpha = self.w[row];
            if alpha.abs() <= PIVOT_TOL / 10.0 {
                return Err(LpError::Numerical(
                    "dual pivot element vanished; basis is numerically singular".into(),
                ));
            }
            let step = (self.x[leaving_var] - target) / alpha;
            for r in 0..self.m {
                let wr = self.w[r];
                if wr != 0.0 {
                    self.x[self.basis[r]] -= step * wr;
                }
            }
            self.x[j] = self.nonbasic_value(j) + step;
            self.x[leaving_var] = target;
            self.state[leaving_var] = if below {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            self.apply_pivot(j, row, 1.0, step);
            self.track_stall(theta_abs.min(step.abs()), cost.len());
        }
    }

    /// Locks artificials at zero and pivots basic ones out where a usable
    /// replacement column exists; rows without one are redundant and keep a
    /// zero-fixed artificial in the basis.
    fn evict_artificials(&mut self) {
        let first_art = self.total - self.n_artificial;
        for j in first_art..self.total {
            self.upper[j] = 0.0;
            if !matches!(self.state[j], VarState::Basic(_)) {
                self.state[j] = VarState::AtLower;
                self.x[j] = 0.0;
            }
        }
        for r in 0..self.m {
            if self.basis[r] < first_art {
                continue;
            }
            let mut entering = None;
            for j in 0..first_art {
                if matches!(self.state[j], VarState::Basic(_)) || self.lower[j] == self.upper[j] {
                    continue;
                }
                // w_r = (B^-1 A_j)_r
                let mut wr = 0.0;
                for &(i, a) in &self.cols[j] {
                    wr += self.binv[r * self.m + i] * a;
                }
                if wr.abs() > 1e-7 {
                    entering = Some(j);
                    break;
                }
            }
            if let Some(j) = entering {
                self.compute_column(j);
                let art = self.basis[r];
                self.state[art] = VarState::AtLower;
                self.x[art] = 0.0;
                self.apply_pivot(j, r, 1.0, 0.0);
            }
        }
    }

    fn pivot_loop(&mut self, cost: &[f64]) -> Result<PhaseOutcome, LpError> {
        loop {
            if self.iterations >= self.cfg.iteration_cap {
                return Err(LpError::IterationLimit {
                    cap: self.cfg.iteration_cap,
                    iterations: self.iterations,
                });
            }
            if self.pivots_since_refactor >= self.cfg.refactor_interval {
                self.refactorize(cost.len())?;
            }

            self.compute_duals(cost);
            let Some((entering, direction)) = self.price(cost) else {
                return Ok(PhaseOutcome::Optimal);
            };

            self.iterations += 1;
            self.compute_column(entering);

            match self.ratio_test(entering, direction) {
                RatioOutcome::Unbounded => return Ok(PhaseOutcome::Unbounded),
                RatioOutcome::BoundFlip(step) => {
                    let to_upper = direction > 0.0;
                    self.x[entering] = if to_upper {
                        self.upper[entering]
                    } else {
                        self.lower[entering]
                    };
                    self.state[entering] = if to_upper {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    for r in 0..self.m {
                        let wr = self.w[r];
                        if wr != 0.0 {
                            self.x[self.basis[r]] -= direction * step * wr;
                        }
                    }
                    self.track_stall(step, cost.len());
                }
                RatioOutcome::Leaving { row, step, to_upper } => {
                    let leaving = self.basis[row];
                    self.x[entering] = match self.state[entering] {
                        VarState::AtLower => self.lower[entering],
                        VarState::AtUpper => self.upper[entering],
                        VarState::Free => 0.0,
                        VarState::Basic(_) => unreachable!(),
                    } + direction * step;
                    for r in 0..self.m {
                        let wr = self.w[r];
                        if wr != 0.0 {
                            self.x[self.basis[r]] -= direction * step * wr;
                        }
                    }
                    // Snap the leaving variable onto the bound it reached.
                    self.x[leaving] = if to_upper {
                        self.upper[leaving]
                    } else {
                        self.lower[leaving]
                    };
                    self.state[leaving] = if to_upper {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.apply_pivot(entering, row, direction, step);
                    self.track_stall(step, cost.len());
                }
            }
        }
    }

    fn track_stall(&mut self, step: f64, dim: usize) {
        if step.abs() <= DEGEN_TOL {
            self.stall += 1;
            if self.stall > self.cfg.stall_factor * (self.m + dim) {
                self.bland = true;
            }
        } else {
            self.stall = 0;
        }
    }

    /// y = cost_B * B^-1.
    fn compute_duals(&mut self, cost: &[f64]) {
        for c in 0..self.m {
            let mut acc = 0.0;
            for r in 0..self.m {
                let cb = cost[self.basis[r]];
                if cb != 0.0 {
                    acc += cb * self.binv[r * self.m + c];
                }
            }
            self.y[c] = acc;
        }
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for &(i, a) in &self.cols[j] {
            d -= self.y[i] * a;
        }
        d
    }

    /// Dantzig pricing (largest reduced-cost violation), or the first
    /// eligible index under Bland's rule. Returns (column, direction).
    fn price(&self, cost: &[f64]) -> Option<(usize, f64)> {
        let tol = self.cfg.opt_tol;
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..self.total {
            let state = self.state[j];
            if matches!(state, VarState::Basic(_)) || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(cost, j);
            let (score, dir) = match state {
                VarState::AtLower if d < -tol => (-d, 1.0),
                VarState::AtUpper if d > tol => (d, -1.0),
                VarState::Free if d < -tol => (-d, 1.0),
                VarState::Free if d > tol => (d, -1.0),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            match best {
                Some((s, _, _)) if s >= score => {}
                _ => best = Some((score, j, dir)),
            }
        }
        best.map(|(_, j, dir)| (j, dir))
    }

    /// w = B^-1 A_j.
    fn compute_column(&mut self, j: usize) {
        for r in 0..self.m {
            let mut acc = 0.0;
            let row = &self.binv[r * self.m..(r + 1) * self.m];
            for &(i, a) in &self.cols[j] {
                acc += row[i] * a;
            }
            self.w[r] = acc;
        }
    }

    fn ratio_test(&self, entering: usize, direction: f64) -> RatioOutcome {
        let span = self.upper[entering] - self.lower[entering];
        let mut best_t = f64::INFINITY;
        let mut leaving: Option<(usize, bool, f64)> = None; // (row, to_upper, |pivot|)

        for r in 0..self.m {
            let wr = self.w[r];
            if wr.abs() <= PIVOT_TOL {
                continue;
            }
            let basic = self.basis[r];
            let delta = direction * wr;
            let (bound, to_upper) = if delta > 0.0 {
                (self.lower[basic], false)
            } else {
                (self.upper[basic], true)
            };
            if !bound.is_finite() {
                continue;
            }
            let t = ((self.x[basic] - bound) / delta).max(0.0);
            let better = match leaving {
                None => true,
                Some((lrow, _, lpiv)) => {
                    if t < best_t - RATIO_TIE_TOL {
                        true
                    } else if t <= best_t + RATIO_TIE_TOL {
                        // Near-tie: prefer a large pivot for stability, or the
                        // smallest variable index under Bland's rule.
                        if self.bland {
                            self.basis[r] < self.basis[lrow]
                        } else {
                            wr.abs() > lpiv
                                || (wr.abs() == lpiv && self.basis[r] < self.basis[lrow])
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                best_t = best_t.min(t);
                leaving = Some((r, to_upper, wr.abs()));
            }
        }

        match leaving {
            None if !span.is_finite() => RatioOutcome::Unbounded,
            None => RatioOutcome::BoundFlip(span),
            Some((row, to_upper, _)) => {
                if span.is_finite() && span < best_t - RATIO_TIE_TOL {
                    RatioOutcome::BoundFlip(span)
                } else {
                    RatioOutcome::Leaving {
                        row,
                        step: best_t,
                        to_upper,
                    }
                }
            }
        }
    }

    /// Makes `entering` basic in `row` and updates the basis inverse.
    fn apply_pivot(&mut self, entering: usize, row: usize, _direction: f64, _step: f64) {
        let pivot = self.w[row];
        debug_assert!(pivot.abs() > PIVOT_TOL / 10.0);
        let inv = 1.0 / pivot;
        for c in 0..self.m {
            self.binv[row * self.m + c] *= inv;
        }
        for r in 0..self.m {
            if r == row {
                continue;
            }
            let f = self.w[r];
            if f != 0.0 {
                for c in 0..self.m {
                    self.binv[r * self.m + c] -= f * self.binv[row * self.m + c];
                }
            }
        }
        self.state[entering] = VarState::Basic(row);
        self.basis[row] = entering;
        self.pivots_since_refactor += 1;
    }

    /// Re-inverts the basis from scratch and recomputes basic values,
    /// clearing accumulated floating-point drift.
    fn refactorize(&mut self, _dim: usize) -> Result<(), LpError> {
        let m = self.m;
        if m == 0 {
            self.pivots_since_refactor = 0;
            return Ok(());
        }
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut aug = vec![0.0; m * 2 * m];
        for (r, &j) in self.basis.iter().enumerate() {
            let _ = r;
            for &(i, a) in &self.cols[j] {
                aug[i * 2 * m + r] = a;
            }
        }
        for i in 0..m {
            aug[i * 2 * m + m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = aug[col * 2 * m + col].abs();
            for r in col + 1..m {
                let v = aug[r * 2 * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val <= 1e-12 {
                return Err(LpError::Numerical(format!(
                    "singular basis at refactorization (column {col})"
                )));
            }
            if piv_row != col {
                for c in 0..2 * m {
                    aug.swap(col * 2 * m + c, piv_row * 2 * m + c);
                }
            }
            let inv = 1.0 / aug[col * 2 * m + col];
            for c in 0..2 * m {
                aug[col * 2 * m + c] *= inv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = aug[r * 2 * m + col];
                if f != 0.0 {
                    for c in 0..2 * m {
                        aug[r * 2 * m + c] -= f * aug[col * 2 * m + c];
                    }
                }
            }
        }
        for r in 0..m {
            for c in 0..m {
                self.binv[r * m + c] = aug[r * 2 * m + m + c];
            }
        }
        self.recompute_basics();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// x_B = B^-1 (rhs - N x_N).
    fn recompute_basics(&mut self) {
        let mut btilde = self.rhs.clone();
        for j in 0..self.total {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.nonbasic_value(j);
            self.x[j] = xj;
            if xj != 0.0 {
                for &(i, a) in &self.cols[j] {
                    btilde[i] -= a * xj;
                }
            }
        }
        for r in 0..self.m {
            let mut acc = 0.0;
            for i in 0..self.m {
                acc += self.binv[r * self.m + i] * btilde[i];
            }
            self.x[self.basis[r]] = acc;
        }
    }

    fn finish(mut self, status: LpStatus) -> LpSolution {
        let iterations = self.iterations;
        if status != LpStatus::Optimal {
            return LpSolution {
                status,
                x: vec![0.0; self.n_struct],
                duals: vec![0.0; self.m],
                reduced_costs: vec![0.0; self.n_struct],
                objective: 0.0,
                iterations,
                residuals: LpResiduals {
                    primal: f64::NAN,
                    dual: f64::NAN,
                    complementarity: f64::NAN,
                    duality_gap: f64::NAN,
                },
            };
        }

        // Fresh factorization before reporting, so residuals measure the
        // actual solution rather than accumulated update noise.
        let dim = self.total;
        if self.m > 0 && self.refactorize(dim).is_err() {
            // Keep the updated inverse; residuals will show any damage.
        }

        let mut cost2 = self.cost2.clone();
        cost2.resize(self.total, 0.0);
        self.compute_duals(&cost2);

        let x: Vec<f64> = self.x[..self.n_struct].to_vec();
        // User (maximization) orientation.
        let duals: Vec<f64> = self.y.iter().map(|v| -v).collect();
        let reduced: Vec<f64> = (0..self.n_struct)
            .map(|j| -self.reduced_cost(&cost2, j))
            .collect();
        let objective: f64 = -(0..self.n_struct)
            .map(|j| cost2[j] * self.x[j])
            .sum::<f64>();

        let residuals = self.residuals(&cost2, objective);
        LpSolution {
            status,
            x,
            duals,
            reduced_costs: reduced,
            objective,
            iterations,
            residuals,
        }
    }

    fn residuals(&mut self, cost2: &[f64], objective: f64) -> LpResiduals {
        let mut primal = 0.0f64;
        // Row residuals: recompute activity of structural variables and
        // compare against the slack-adjusted rhs.
        let mut activity = vec![0.0; self.m];
        for j in 0..self.n_struct {
            let xj = self.x[j];
            if xj != 0.0 {
                for &(i, a) in &self.cols[j] {
                    activity[i] += a * xj;
                }
            }
        }
        for i in 0..self.m {
            let slack = self.n_struct + i;
            let viol = (activity[i] + self.x[slack] - self.rhs[i]).abs()
                / (1.0 + self.rhs[i].abs());
            primal = primal.max(viol);
            let s = self.x[slack];
            let bviol = (self.lower[slack] - s).max(s - self.upper[slack]).max(0.0);
            primal = primal.max(bviol / (1.0 + self.rhs[i].abs()));
        }
        for j in 0..self.n_struct {
            let xj = self.x[j];
            let bviol = (self.lower[j] - xj).max(xj - self.upper[j]).max(0.0);
            primal = primal.max(bviol / (1.0 + xj.abs()));
        }

        // Dual residuals in the internal minimization orientation:
        // at lower requires d >= 0, at upper d <= 0, basic/free d == 0.
        let mut dual = 0.0f64;
        let mut compl = 0.0f64;
        let mut dual_obj: f64 = (0..self.m).map(|i| self.y[i] * self.rhs[i]).sum();
        for j in 0..self.total {
            if self.lower[j] == self.upper[j] && j >= self.n_struct + self.m {
                continue; // locked artificials
            }
            let d = self.reduced_cost(cost2, j);
            let scale = 1.0 + cost2[j].abs();
            match self.state[j] {
                VarState::Basic(_) => dual = dual.max(d.abs() / scale),
                VarState::AtLower => {
                    dual = dual.max((-d).max(0.0) / scale);
                    dual_obj += d * self.x[j];
                }
                VarState::AtUpper => {
                    dual = dual.max(d.max(0.0) / scale);
                    dual_obj += d * self.x[j];
                }
                VarState::Free => {
                    dual = dual.max(d.abs() / scale);
                }
            }
            // Complementarity: nonzero reduced cost requires the variable to
            // sit on the corresponding bound.
            if !matches!(self.state[j], VarState::Basic(_)) {
                let gap_lower = if self.lower[j].is_finite() {
                    (self.x[j] - self.lower[j]).abs()
                } else {
                    f64::INFINITY
                };
                let gap_upper = if self.upper[j].is_finite() {
                    (self.upper[j] - self.x[j]).abs()
                } else {
                    f64::INFINITY
                };
                let gap = gap_lower.min(gap_upper);
                if gap.is_finite() {
                    compl = compl.max(d.abs() * gap / (1.0 + objective.abs()));
                }
            }
        }

        // Internal objective is -user objective.
        let duality_gap = ((-objective) - dual_obj).abs() / (1.0 + objective.abs());
        LpResiduals {
            primal,
            dual,
            complementarity: compl,
            duality_gap,
        }
    }
}

enum RatioOutcome {
    Unbounded,
    /// Entering variable travels to its opposite bound; basis unchanged.
    BoundFlip(f64),
    Leaving {
        row: usize,
        step: f64,
        to_upper: bool,
    },
}

/// Builds the NOMA LP: one variable per (block, service) pair in [0, 1],
/// a demand row per URLLC service, and a capacity row with rhs r_tilde per
/// mini-slot.
pub fn build_p1(inst: &InstanceP0, noma: &NomaConfig) -> LinearProgram {
    let n_blocks = inst.conflicts.n_blocks();
    let n_services = inst.services.n_services();
    let var = |b: usize, k: usize| b * n_services + k;

    let mut lp = LinearProgram::new(n_blocks * n_services);
    for b in 0..n_blocks {
        for k in 0..n_services {
            lp.set_bounds(var(b, k), 0.0, 1.0);
        }
    }
    for k in inst.services.embb_range() {
        for b in 0..n_blocks {
            let r = inst.throughput.rate(b, k);
            if r != 0.0 {
                lp.set_objective(var(b, k), r);
            }
        }
    }
    for k in inst.services.urllc_range() {
        let terms: Vec<(usize, f64)> = (0..n_blocks)
            .filter_map(|b| {
                let r = inst.throughput.rate(b, k);
                (r != 0.0).then_some((var(b, k), r))
            })
            .collect();
        lp.add_row(Sense::Ge, inst.services.demand_kbps(k), &terms);
    }
    for i in 0..inst.conflicts.n_minislots() {
        let mut terms = Vec::new();
        for &b in inst.conflicts.blocks_on_slot(i) {
            for k in 0..n_services {
                terms.push((var(b, k), 1.0));
            }
        }
        lp.add_row(Sense::Le, noma.r_tilde(), &terms);
    }
    lp
}

/// Solves P1 and packages the fractional assignment as a schedule.
pub fn solve_p1(inst: &InstanceP0, noma: &NomaConfig, cfg: &LpConfig) -> Result<Schedule, LpError> {
    let lp = build_p1(inst, noma);
    let sol = solve_lp_with(&lp, cfg, None)?;
    match sol.status {
        LpStatus::Infeasible => Ok(Schedule::infeasible(inst.services.n_services())),
        LpStatus::Unbounded => Err(LpError::Numerical(
            "P1 is box-bounded; unbounded status indicates a solver failure".into(),
        )),
        LpStatus::Optimal => {
            let n_services = inst.services.n_services();
            let mut assignments = Vec::new();
            for b in 0..inst.conflicts.n_blocks() {
                for k in 0..n_services {
                    let xv = sol.x[b * n_services + k];
                    if xv > 1e-9 {
                        assignments.push(Assignment {
                            block_id: b,
                            service: k,
                            fraction: xv.min(1.0),
                        });
                    }
                }
            }
            Ok(Schedule::from_assignments(
                assignments,
                ScheduleStatus::Optimal,
                inst,
            ))
        }
    }
}
