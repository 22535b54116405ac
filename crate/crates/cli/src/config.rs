//! JSON scenario configuration.
//!
//! The schema is strict: unknown keys are rejected and `schema_version` is
//! mandatory (currently 1). Every other field has a documented default, and
//! numeric keys carry their unit (`q_kbps`, `tau_ms`, `window_ms`, ...).

use gridsched::{
    BlockShape, EmbbService, ExactMode, GridSpec, LossMode, NumerologyMode, Scenario, ServiceSet,
    ShapeId, SolverKind, SolverParams, UrllcService,
};
use serde::Deserialize;

pub const SUPPORTED_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Mandatory; must equal 1.
    pub schema_version: u32,
    #[serde(default = "default_scenario_id")]
    pub scenario_id: String,
    #[serde(default)]
    pub grid: GridCfg,
    #[serde(default)]
    pub numerology: NumerologyCfg,
    /// URLLC services; default 5 users at 64 kbps / 1 ms.
    #[serde(default = "default_urllc")]
    pub urllc: Vec<UrllcCfg>,
    /// eMBB services; default 5 users at 2 ms.
    #[serde(default = "default_embb")]
    pub embb: Vec<EmbbCfg>,
    #[serde(default)]
    pub snr_db: SnrCfg,
    #[serde(default)]
    pub efficiency: EfficiencyCfg,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    /// Solver roster for Monte Carlo runs; default is P1 plus all
    /// heuristics (add "exact" explicitly for optimality gaps).
    #[serde(default = "default_solvers")]
    pub solvers: Vec<String>,
    #[serde(default)]
    pub exact_mode: ExactModeCfg,
    /// Normalized NOMA capacity per mini-slot; >= 1.
    #[serde(default = "default_r_tilde")]
    pub r_tilde: f64,
    /// Category count for the bin-packing heuristics; null derives it from
    /// the instance (capped at 16).
    #[serde(default)]
    pub h_categories: Option<usize>,
    /// Feasibility threshold of the modified bin-packing pre-check, in (0,1).
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Branch-and-bound wall-clock budget; null means unlimited.
    #[serde(default)]
    pub time_limit_ms: Option<u64>,
    /// Relative bound gap accepted as optimal by branch-and-bound.
    #[serde(default)]
    pub gap_tol: f64,
    #[serde(default = "default_lp_iteration_cap")]
    pub lp_iteration_cap: usize,
    /// Use the block's own rate times overlap count as aggregated loss
    /// instead of the overlapped blocks' rates.
    #[serde(default)]
    pub bpb_own_rate_loss: bool,
    /// Write real wall-clock timings into the CSVs. Off by default so
    /// repeated runs are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_scenario_id() -> String {
    "default".into()
}
fn default_trials() -> usize {
    1000
}
fn default_base_seed() -> u64 {
    1
}
fn default_r_tilde() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.5
}
fn default_lp_iteration_cap() -> usize {
    1_000_000
}
fn default_solvers() -> Vec<String> {
    ["p1", "baseline", "ca-total", "ca-avg", "ca-lastpl", "bpb", "mbp"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn default_urllc() -> Vec<UrllcCfg> {
    (0..5)
        .map(|id| UrllcCfg {
            id,
            q_kbps: 64.0,
            tau_ms: 1.0,
        })
        .collect()
}
fn default_embb() -> Vec<EmbbCfg> {
    (5..10).map(|id| EmbbCfg { id, tau_ms: 2.0 }).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    #[serde(default = "default_n_time")]
    pub n_time: usize,
    #[serde(default = "default_n_freq")]
    pub n_freq: usize,
    #[serde(default = "default_window_ms")]
    pub window_ms: f64,
    #[serde(default = "default_bandwidth_mhz")]
    pub bandwidth_mhz: f64,
}

fn default_n_time() -> usize {
    16
}
fn default_n_freq() -> usize {
    11
}
fn default_window_ms() -> f64 {
    2.0
}
fn default_bandwidth_mhz() -> f64 {
    2.0
}

impl Default for GridCfg {
    fn default() -> Self {
        Self {
            n_time: 16,
            n_freq: 11,
            window_ms: 2.0,
            bandwidth_mhz: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeCfg {
    Shape1,
    Shape2,
    Shape3,
    Shape4,
}

impl From<ShapeCfg> for ShapeId {
    fn from(s: ShapeCfg) -> Self {
        match s {
            ShapeCfg::Shape1 => ShapeId::Shape1,
            ShapeCfg::Shape2 => ShapeId::Shape2,
            ShapeCfg::Shape3 => ShapeId::Shape3,
            ShapeCfg::Shape4 => ShapeId::Shape4,
        }
    }
}

/// "flexible", "multiple_fixed", or {"fixed": "shape2"}.
#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NumerologyCfg {
    #[default]
    Flexible,
    MultipleFixed,
    Fixed(ShapeCfg),
}

impl From<NumerologyCfg> for NumerologyMode {
    fn from(n: NumerologyCfg) -> Self {
        match n {
            NumerologyCfg::Flexible => NumerologyMode::Flexible,
            NumerologyCfg::MultipleFixed => NumerologyMode::MultipleFixed,
            NumerologyCfg::Fixed(s) => NumerologyMode::Fixed(s.into()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UrllcCfg {
    pub id: usize,
    pub q_kbps: f64,
    pub tau_ms: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbbCfg {
    pub id: usize,
    #[serde(default = "default_embb_tau")]
    pub tau_ms: f64,
}

fn default_embb_tau() -> f64 {
    2.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrCfg {
    #[serde(default = "default_snr_low")]
    pub low: f64,
    #[serde(default = "default_snr_high")]
    pub high: f64,
}

fn default_snr_low() -> f64 {
    5.0
}
fn default_snr_high() -> f64 {
    30.0
}

impl Default for SnrCfg {
    fn default() -> Self {
        Self {
            low: 5.0,
            high: 30.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyCfg {
    #[serde(default = "default_eta1")]
    pub shape1: f64,
    #[serde(default = "default_eta2")]
    pub shape2: f64,
    #[serde(default = "default_eta34")]
    pub shape3: f64,
    #[serde(default = "default_eta34")]
    pub shape4: f64,
}

fn default_eta1() -> f64 {
    0.95
}
fn default_eta2() -> f64 {
    0.93
}
fn default_eta34() -> f64 {
    0.90
}

impl Default for EfficiencyCfg {
    fn default() -> Self {
        Self {
            shape1: 0.95,
            shape2: 0.93,
            shape3: 0.90,
            shape4: 0.90,
        }
    }
}

/// "full", "skip", or {"reduced": {"max_trials": N}}.
#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExactModeCfg {
    #[default]
    Full,
    Skip,
    Reduced {
        max_trials: usize,
    },
}

impl From<ExactModeCfg> for ExactMode {
    fn from(m: ExactModeCfg) -> Self {
        match m {
            ExactModeCfg::Full => ExactMode::Full,
            ExactModeCfg::Skip => ExactMode::Skip,
            ExactModeCfg::Reduced { max_trials } => ExactMode::Reduced { max_trials },
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: ConfigFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if cfg.schema_version != SUPPORTED_SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {})",
                cfg.schema_version, SUPPORTED_SCHEMA_VERSION
            ));
        }
        if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
            return Err(format!("delta must lie in (0, 1), got {}", cfg.delta));
        }
        if cfg.gap_tol < 0.0 {
            return Err(format!("gap_tol must be nonnegative, got {}", cfg.gap_tol));
        }
        if !(cfg.r_tilde >= 1.0) {
            return Err(format!("r_tilde must be at least 1, got {}", cfg.r_tilde));
        }
        Ok(cfg)
    }

    pub fn shapes(&self) -> [BlockShape; 4] {
        [
            BlockShape::with_efficiency(ShapeId::Shape1, self.efficiency.shape1),
            BlockShape::with_efficiency(ShapeId::Shape2, self.efficiency.shape2),
            BlockShape::with_efficiency(ShapeId::Shape3, self.efficiency.shape3),
            BlockShape::with_efficiency(ShapeId::Shape4, self.efficiency.shape4),
        ]
    }

    pub fn service_set(&self) -> Result<ServiceSet, String> {
        let urllc = self
            .urllc
            .iter()
            .map(|s| UrllcService {
                id: s.id,
                demand_kbps: s.q_kbps,
                latency_ms: s.tau_ms,
            })
            .collect();
        let embb = self
            .embb
            .iter()
            .map(|s| EmbbService {
                id: s.id,
                latency_ms: s.tau_ms,
            })
            .collect();
        ServiceSet::new(urllc, embb).map_err(|e| e.to_string())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, String> {
        GridSpec::new(
            self.grid.n_time,
            self.grid.n_freq,
            self.grid.window_ms,
            self.grid.bandwidth_mhz,
        )
        .map_err(|e| e.to_string())
    }

    pub fn roster(&self) -> Result<Vec<SolverKind>, String> {
        self.solvers
            .iter()
            .map(|name| {
                SolverKind::from_name(name).ok_or_else(|| {
                    format!(
                        "unknown solver '{name}' (expected one of: {})",
                        SolverKind::ALL
                            .iter()
                            .map(|s| s.name())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )
                })
            })
            .collect()
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            time_limit_ms: self.time_limit_ms,
            gap_tol: self.gap_tol,
            r_tilde: self.r_tilde,
            h: self.h_categories,
            delta: self.delta,
            loss_mode: if self.bpb_own_rate_loss {
                LossMode::OwnRates
            } else {
                LossMode::NeighborRates
            },
            lp_iteration_cap: self.lp_iteration_cap,
        }
    }

    /// Full scenario for Monte Carlo runs; `seed_override` replaces the
    /// configured base seed.
    pub fn scenario(&self, seed_override: Option<u64>) -> Result<Scenario, String> {
        Ok(Scenario {
            scenario_id: self.scenario_id.clone(),
            grid: self.grid_spec()?,
            shapes: self.shapes(),
            numerology: self.numerology.into(),
            services: self.service_set()?,
            snr_range_db: (self.snr_db.low, self.snr_db.high),
            trials: self.trials,
            base_seed: seed_override.unwrap_or(self.base_seed),
            roster: self.roster()?,
            exact_mode: self.exact_mode.into(),
            params: self.solver_params(),
        })
    }
}
