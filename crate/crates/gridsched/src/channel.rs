//! Per-trial SNR realizations and the block-service throughput matrix.
//!
//! SNR is drawn once per (service, frequency row) and held constant across
//! time columns within a trial (frequency-selective, time-flat block fading).
//! Block rates follow a Shannon model per mini-slot scaled by the shape's
//! efficiency factor; URLLC entries are zeroed wherever the block misses the
//! service's latency tolerance, so infeasible placements carry no throughput.

use crate::grid::{latency_feasible, Block, BlockShape, GridSpec};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("SNR interval must satisfy lower < upper (got [{low}, {high}] dB)")]
    EmptySnrInterval { low: f64, high: f64 },
    #[error("service ids must be unique across classes (duplicate id {0})")]
    DuplicateServiceId(usize),
    #[error("URLLC demand must be positive (service {id}: {q_kbps} kbps)")]
    NonPositiveDemand { id: usize, q_kbps: f64 },
    #[error("latency tolerance must be positive (service {id}: {tau_ms} ms)")]
    NonPositiveLatency { id: usize, tau_ms: f64 },
}

/// A URLLC service: hard rate demand plus a latency tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UrllcService {
    pub id: usize,
    pub demand_kbps: f64,
    pub latency_ms: f64,
}

/// An eMBB service: best-effort throughput, fixed latency tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbbService {
    pub id: usize,
    pub latency_ms: f64,
}

/// The service population, URLLC first then eMBB.
///
/// Services are addressed internally by a dense index `k`: URLLC services
/// occupy `0..n_urllc()`, eMBB services `n_urllc()..n_services()`. The
/// user-facing `id` is carried through to schedule dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSet {
    urllc: Vec<UrllcService>,
    embb: Vec<EmbbService>,
}

impl ServiceSet {
    pub fn new(urllc: Vec<UrllcService>, embb: Vec<EmbbService>) -> Result<Self, ChannelError> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &urllc {
            if !(s.demand_kbps > 0.0) {
                return Err(ChannelError::NonPositiveDemand {
                    id: s.id,
                    q_kbps: s.demand_kbps,
                });
            }
            if !(s.latency_ms > 0.0) {
                return Err(ChannelError::NonPositiveLatency {
                    id: s.id,
                    tau_ms: s.latency_ms,
                });
            }
            if !seen.insert(s.id) {
                return Err(ChannelError::DuplicateServiceId(s.id));
            }
        }
        for s in &embb {
            if !(s.latency_ms > 0.0) {
                return Err(ChannelError::NonPositiveLatency {
                    id: s.id,
                    tau_ms: s.latency_ms,
                });
            }
            if !seen.insert(s.id) {
                return Err(ChannelError::DuplicateServiceId(s.id));
            }
        }
        Ok(Self { urllc, embb })
    }

    /// `n` URLLC services with equal demand/latency and `m` eMBB services,
    /// ids assigned 0..n+m in order.
    pub fn uniform(
        n_urllc: usize,
        q_kbps: f64,
        tau_ms: f64,
        n_embb: usize,
        embb_tau_ms: f64,
    ) -> Result<Self, ChannelError> {
        let urllc = (0..n_urllc)
            .map(|id| UrllcService {
                id,
                demand_kbps: q_kbps,
                latency_ms: tau_ms,
            })
            .collect();
        let embb = (0..n_embb)
            .map(|i| EmbbService {
                id: n_urllc + i,
                latency_ms: embb_tau_ms,
            })
            .collect();
        Self::new(urllc, embb)
    }

    pub fn n_urllc(&self) -> usize {
        self.urllc.len()
    }

    pub fn n_embb(&self) -> usize {
        self.embb.len()
    }

    pub fn n_services(&self) -> usize {
        self.urllc.len() + self.embb.len()
    }

    pub fn urllc(&self) -> &[UrllcService] {
        &self.urllc
    }

    pub fn embb(&self) -> &[EmbbService] {
        &self.embb
    }

    /// Dense indices of the URLLC class.
    pub fn urllc_range(&self) -> std::ops::Range<usize> {
        0..self.urllc.len()
    }

    /// Dense indices of the eMBB class.
    pub fn embb_range(&self) -> std::ops::Range<usize> {
        self.urllc.len()..self.n_services()
    }

    pub fn is_urllc(&self, k: usize) -> bool {
        k < self.urllc.len()
    }

    /// Demand of the URLLC service at dense index `k`.
    pub fn demand_kbps(&self, k: usize) -> f64 {
        self.urllc[k].demand_kbps
    }

    /// Latency tolerance of the service at dense index `k`.
    pub fn latency_ms(&self, k: usize) -> f64 {
        if k < self.urllc.len() {
            self.urllc[k].latency_ms
        } else {
            self.embb[k - self.urllc.len()].latency_ms
        }
    }

    /// User-facing id of the service at dense index `k`.
    pub fn service_id(&self, k: usize) -> usize {
        if k < self.urllc.len() {
            self.urllc[k].id
        } else {
            self.embb[k - self.urllc.len()].id
        }
    }
}

/// One trial's SNR draw: dB per (dense service index, frequency row).
#[derive(Debug, Clone, PartialEq)]
pub struct SnrRealization {
    snr_db: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SnrRealization {
    /// Wraps an explicit dB matrix (tests, replay).
    pub fn from_parts(snr_db: Vec<Vec<f64>>, seed: u64) -> Self {
        Self { snr_db, seed }
    }

    pub fn snr_db(&self, k: usize, freq_row: usize) -> f64 {
        self.snr_db[k][freq_row]
    }
}

/// Draws SNR uniformly from `range_db` per (service, frequency row).
///
/// The generator is ChaCha8 seeded with `seed`; each draw is
/// `low + u * (high - low)` with `u` the generator's standard 53-bit
/// uniform in [0, 1). Draw order is dense service index ascending,
/// frequency row ascending, so realizations are reproducible bit-exactly.
pub fn sample_snr(
    services: &ServiceSet,
    spec: &GridSpec,
    range_db: (f64, f64),
    seed: u64,
) -> Result<SnrRealization, ChannelError> {
    let (low, high) = range_db;
    if !(low < high) {
        return Err(ChannelError::EmptySnrInterval { low, high });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snr_db = (0..services.n_services())
        .map(|_| {
            (0..spec.n_freq)
                .map(|_| low + rng.gen::<f64>() * (high - low))
                .collect()
        })
        .collect();
    Ok(SnrRealization { snr_db, seed })
}

/// Achievable rate in kbps per (block, dense service index).
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputMatrix {
    r: Vec<Vec<f64>>,
    n_services: usize,
}

impl ThroughputMatrix {
    pub fn from_rows(r: Vec<Vec<f64>>, n_services: usize) -> Self {
        debug_assert!(r.iter().all(|row| row.len() == n_services));
        Self { r, n_services }
    }

    pub fn n_blocks(&self) -> usize {
        self.r.len()
    }

    pub fn n_services(&self) -> usize {
        self.n_services
    }

    pub fn rate(&self, b: usize, k: usize) -> f64 {
        self.r[b][k]
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.r[b]
    }

    pub fn set_rate(&mut self, b: usize, k: usize, value: f64) {
        self.r[b][k] = value;
    }
}

/// Builds the rate matrix from an SNR realization.
///
/// `r[b][k]` is the Shannon capacity summed over the block's 4 mini-slots,
/// scaled by the shape efficiency and expressed as kbps over the scheduling
/// window; URLLC entries are zeroed where the block's end time exceeds the
/// service's latency tolerance.
pub fn throughput_matrix(
    snr: &SnrRealization,
    blocks: &[Block],
    services: &ServiceSet,
    spec: &GridSpec,
    shapes: &[BlockShape],
) -> ThroughputMatrix {
    let mut efficiency = [f64::NAN; 4];
    for shape in shapes {
        efficiency[shape.id.index()] = shape.efficiency;
    }

    let w0_hz = spec.slot_bandwidth_mhz() * 1.0e6;
    let t0_s = spec.slot_duration_ms() * 1.0e-3;
    let window_s = spec.window_ms * 1.0e-3;

    let r = blocks
        .iter()
        .map(|block| {
            let eta = efficiency[block.shape_id.index()];
            debug_assert!(eta.is_finite(), "missing shape in shape list");
            (0..services.n_services())
                .map(|k| {
                    if services.is_urllc(k) && !latency_feasible(block, services.latency_ms(k)) {
                        return 0.0;
                    }
                    let bits: f64 = block
                        .minislots
                        .iter()
                        .map(|&slot| {
                            let freq_row = slot % spec.n_freq;
                            let snr_lin = 10f64.powf(snr.snr_db(k, freq_row) / 10.0);
                            w0_hz * t0_s * (1.0 + snr_lin).log2()
                        })
                        .sum();
                    eta * bits / window_s / 1000.0
                })
                .collect()
        })
        .collect();

    ThroughputMatrix {
        r,
        n_services: services.n_services(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{default_shapes, enumerate_blocks, ShapeId};
    use proptest::prelude::*;

    fn two_plus_two() -> ServiceSet {
        ServiceSet::uniform(2, 100.0, 1.0, 2, 2.0).unwrap()
    }

    #[test]
    fn degenerate_interval_rejected() {
        let services = two_plus_two();
        let spec = GridSpec::default();
        let err = sample_snr(&services, &spec, (10.0, 10.0), 1).unwrap_err();
        assert_eq!(
            err,
            ChannelError::EmptySnrInterval {
                low: 10.0,
                high: 10.0
            }
        );
    }

    #[test]
    fn fixed_seed_reproduces_realization() {
        let services = two_plus_two();
        let spec = GridSpec::default();
        let a = sample_snr(&services, &spec, (5.0, 30.0), 42).unwrap();
        let b = sample_snr(&services, &spec, (5.0, 30.0), 42).unwrap();
        assert_eq!(a, b);
        let c = sample_snr(&services, &spec, (5.0, 30.0), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_mean_of_uniform_draws() {
        // 10 services x 11 rows per trial; ~10^5 draws in total.
        let services = ServiceSet::uniform(5, 64.0, 1.0, 5, 2.0).unwrap();
        let spec = GridSpec::default();
        let mut sum = 0.0;
        let mut count = 0usize;
        for seed in 0..910 {
            let snr = sample_snr(&services, &spec, (5.0, 30.0), seed).unwrap();
            for k in 0..services.n_services() {
                for f in 0..spec.n_freq {
                    sum += snr.snr_db(k, f);
                    count += 1;
                }
            }
        }
        assert!(count >= 100_000);
        let mean = sum / count as f64;
        assert!((mean - 17.5).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn zero_linear_snr_gives_zero_matrix() {
        let services = two_plus_two();
        let spec = GridSpec::default();
        let blocks = enumerate_blocks(&spec, &default_shapes());
        let rows = vec![vec![f64::NEG_INFINITY; spec.n_freq]; services.n_services()];
        let snr = SnrRealization::from_parts(rows, 0);
        let tp = throughput_matrix(&snr, &blocks, &services, &spec, &default_shapes());
        for b in 0..tp.n_blocks() {
            for k in 0..tp.n_services() {
                assert_eq!(tp.rate(b, k), 0.0);
            }
        }
    }

    #[test]
    fn worked_rate_at_30db_matches_direct_formula() {
        // Independent hand computation of the stated rate model on the
        // default grid at 30 dB with eta = 0.9 (Shape3):
        //   rate = eta * 4 * (2e6/11) * 1.25e-4 * log2(1 + 1000) / 2e-3 / 1000 kbps
        let expected = 0.9 * 4.0 * (2.0e6 / 11.0) * 1.25e-4 * (1.0f64 + 1000.0).log2()
            / 2.0e-3
            / 1000.0;
        assert!((expected - 407.75).abs() < 0.01, "sanity pin: {expected}");

        let services = ServiceSet::uniform(0, 1.0, 1.0, 1, 2.0).unwrap();
        let spec = GridSpec::default();
        let blocks = enumerate_blocks(&spec, &default_shapes());
        let snr = SnrRealization::from_parts(vec![vec![30.0; spec.n_freq]], 0);
        let tp = throughput_matrix(&snr, &blocks, &services, &spec, &default_shapes());
        let shape3 = blocks
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape3)
            .unwrap();
        let got = tp.rate(shape3.block_id, 0);
        assert!(
            (got - expected).abs() <= 1e-9 * expected,
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn urllc_latency_mask_applied() {
        let services = ServiceSet::uniform(1, 50.0, 0.5, 1, 2.0).unwrap();
        let spec = GridSpec::default();
        let blocks = enumerate_blocks(&spec, &default_shapes());
        let snr = sample_snr(&services, &spec, (5.0, 30.0), 7).unwrap();
        let tp = throughput_matrix(&snr, &blocks, &services, &spec, &default_shapes());
        for block in &blocks {
            if block.end_time_ms > 0.5 {
                assert_eq!(tp.rate(block.block_id, 0), 0.0);
            } else {
                assert!(tp.rate(block.block_id, 0) > 0.0);
            }
            // eMBB column is never masked on a 2 ms window.
            assert!(tp.rate(block.block_id, 1) > 0.0);
        }
    }

    #[test]
    fn doubling_window_with_fixed_slot_duration_halves_rates() {
        let services = ServiceSet::uniform(0, 1.0, 1.0, 1, 4.0).unwrap();
        let spec_a = GridSpec::new(16, 11, 2.0, 2.0).unwrap();
        let spec_b = GridSpec::new(32, 11, 4.0, 2.0).unwrap(); // same 0.125 ms slots
        let rows = vec![vec![20.0; 11]];
        let snr = SnrRealization::from_parts(rows, 0);
        let blocks_a = enumerate_blocks(&spec_a, &default_shapes());
        let blocks_b = enumerate_blocks(&spec_b, &default_shapes());
        let tp_a = throughput_matrix(&snr, &blocks_a, &services, &spec_a, &default_shapes());
        let tp_b = throughput_matrix(&snr, &blocks_b, &services, &spec_b, &default_shapes());
        // Compare the Shape1 block at origin (0,0) in both grids.
        let a = blocks_a
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape1 && b.origin == (0, 0))
            .unwrap();
        let b = blocks_b
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape1 && b.origin == (0, 0))
            .unwrap();
        let ratio = tp_a.rate(a.block_id, 0) / tp_b.rate(b.block_id, 0);
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn service_set_validation() {
        assert!(ServiceSet::new(
            vec![UrllcService {
                id: 0,
                demand_kbps: 0.0,
                latency_ms: 1.0
            }],
            vec![]
        )
        .is_err());
        assert!(ServiceSet::new(
            vec![UrllcService {
                id: 0,
                demand_kbps: 10.0,
                latency_ms: 1.0
            }],
            vec![EmbbService {
                id: 0,
                latency_ms: 2.0
            }]
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn raising_snr_never_decreases_rates(
            seed in 0u64..1000,
            k in 0usize..4,
            row in 0usize..6,
            bump in 0.1f64..20.0,
        ) {
            let services = two_plus_two();
            let spec = GridSpec::new(6, 6, 2.0, 2.0).unwrap();
            let blocks = enumerate_blocks(&spec, &default_shapes());
            let snr = sample_snr(&services, &spec, (5.0, 30.0), seed).unwrap();
            let mut bumped = vec![];
            for kk in 0..services.n_services() {
                let mut r = (0..spec.n_freq).map(|f| snr.snr_db(kk, f)).collect::<Vec<_>>();
                if kk == k {
                    r[row] += bump;
                }
                bumped.push(r);
            }
            let snr_hi = SnrRealization::from_parts(bumped, seed);
            let lo = throughput_matrix(&snr, &blocks, &services, &spec, &default_shapes());
            let hi = throughput_matrix(&snr_hi, &blocks, &services, &spec, &default_shapes());
            for b in 0..lo.n_blocks() {
                for kk in 0..lo.n_services() {
                    prop_assert!(hi.rate(b, kk) >= lo.rate(b, kk));
                }
            }
        }
    }
}
