//! Time-frequency mini-slot grid, candidate resource blocks, and conflict
//! structure.
//!
//! The scheduling window is divided into `n_time` columns and `n_freq`
//! frequency rows; each cell is a mini-slot. A candidate resource block is a
//! rectangular group of 4 contiguous mini-slots in one of four shapes
//! (numerologies). Two blocks conflict when they share at least one
//! mini-slot, which is what makes OMA scheduling combinatorial.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be at least 1x1 (got {n_time}x{n_freq})")]
    EmptyGrid { n_time: usize, n_freq: usize },
    #[error("window and bandwidth must be positive (got {window_ms} ms, {bandwidth_mhz} MHz)")]
    NonPositiveExtent { window_ms: f64, bandwidth_mhz: f64 },
}

/// Geometry of the scheduling window.
///
/// First axis is time (columns), second is frequency (rows). Mini-slot `i`
/// at time column `t` and frequency row `f` has index `t * n_freq + f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_time: usize,
    pub n_freq: usize,
    pub window_ms: f64,
    pub bandwidth_mhz: f64,
}

impl GridSpec {
    pub fn new(
        n_time: usize,
        n_freq: usize,
        window_ms: f64,
        bandwidth_mhz: f64,
    ) -> Result<Self, GridError> {
        if n_time < 1 || n_freq < 1 {
            return Err(GridError::EmptyGrid { n_time, n_freq });
        }
        if !(window_ms > 0.0) || !(bandwidth_mhz > 0.0) {
            return Err(GridError::NonPositiveExtent {
                window_ms,
                bandwidth_mhz,
            });
        }
        Ok(Self {
            n_time,
            n_freq,
            window_ms,
            bandwidth_mhz,
        })
    }

    pub fn minislot_count(&self) -> usize {
        self.n_time * self.n_freq
    }

    /// Duration of one time column in milliseconds.
    pub fn slot_duration_ms(&self) -> f64 {
        self.window_ms / self.n_time as f64
    }

    /// Bandwidth of one frequency row in MHz.
    pub fn slot_bandwidth_mhz(&self) -> f64 {
        self.bandwidth_mhz / self.n_freq as f64
    }

    pub fn minislot_index(&self, time: usize, freq: usize) -> usize {
        debug_assert!(time < self.n_time && freq < self.n_freq);
        time * self.n_freq + freq
    }
}

impl Default for GridSpec {
    /// 16 columns x 11 rows over a 2 ms / 2 MHz window.
    fn default() -> Self {
        Self {
            n_time: 16,
            n_freq: 11,
            window_ms: 2.0,
            bandwidth_mhz: 2.0,
        }
    }
}

/// The four block shapes. Shape1 is horizontal (4x1), Shape2 square (2x2),
/// Shape3 and Shape4 vertical (1x4). Shape3 and Shape4 share a footprint but
/// are distinct numerology identities, so same-origin instances conflict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShapeId {
    Shape1,
    Shape2,
    Shape3,
    Shape4,
}

impl ShapeId {
    pub const ALL: [ShapeId; 4] = [
        ShapeId::Shape1,
        ShapeId::Shape2,
        ShapeId::Shape3,
        ShapeId::Shape4,
    ];

    pub fn index(self) -> usize {
        match self {
            ShapeId::Shape1 => 0,
            ShapeId::Shape2 => 1,
            ShapeId::Shape3 => 2,
            ShapeId::Shape4 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeId::Shape1 => "shape1",
            ShapeId::Shape2 => "shape2",
            ShapeId::Shape3 => "shape3",
            ShapeId::Shape4 => "shape4",
        }
    }
}

/// A block shape together with its throughput efficiency factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockShape {
    pub id: ShapeId,
    pub time_extent: usize,
    pub freq_extent: usize,
    /// Dimensionless overhead factor in (0, 1] applied to the Shannon rate.
    pub efficiency: f64,
}

impl BlockShape {
    /// Shape with its default efficiency factor.
    pub fn standard(id: ShapeId) -> Self {
        Self::with_efficiency(id, Self::default_efficiency(id))
    }

    pub fn with_efficiency(id: ShapeId, efficiency: f64) -> Self {
        let (time_extent, freq_extent) = match id {
            ShapeId::Shape1 => (4, 1),
            ShapeId::Shape2 => (2, 2),
            ShapeId::Shape3 | ShapeId::Shape4 => (1, 4),
        };
        Self {
            id,
            time_extent,
            freq_extent,
            efficiency,
        }
    }

    /// Finer numerology pays more overhead: 0.95 / 0.93 / 0.90 / 0.90.
    pub fn default_efficiency(id: ShapeId) -> f64 {
        match id {
            ShapeId::Shape1 => 0.95,
            ShapeId::Shape2 => 0.93,
            ShapeId::Shape3 | ShapeId::Shape4 => 0.90,
        }
    }

    /// Number of placements of this shape on the grid.
    pub fn placements(&self, spec: &GridSpec) -> usize {
        let t = (spec.n_time + 1).saturating_sub(self.time_extent);
        let f = (spec.n_freq + 1).saturating_sub(self.freq_extent);
        t * f
    }
}

/// All four shapes with default efficiency factors.
pub fn default_shapes() -> [BlockShape; 4] {
    [
        BlockShape::standard(ShapeId::Shape1),
        BlockShape::standard(ShapeId::Shape2),
        BlockShape::standard(ShapeId::Shape3),
        BlockShape::standard(ShapeId::Shape4),
    ]
}

/// One candidate resource block placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Dense index within the enumeration order.
    pub block_id: usize,
    pub shape_id: ShapeId,
    /// (time column, frequency row) of the top-left mini-slot.
    pub origin: (usize, usize),
    /// The 4 covered mini-slot indices, time-major then frequency.
    pub minislots: [usize; 4],
    /// Completion time of the block's last time column, in milliseconds.
    pub end_time_ms: f64,
}

/// Whether a block finishes within a latency tolerance.
pub fn latency_feasible(block: &Block, tau_ms: f64) -> bool {
    debug_assert!(tau_ms > 0.0);
    block.end_time_ms <= tau_ms
}

/// Enumerates every axis-aligned placement of every requested shape.
///
/// Order is shape_id ascending, then origin lexicographic (time column
/// outer, frequency row inner); `block_id` is the position in this order.
/// A shape larger than the grid in either dimension contributes no blocks.
pub fn enumerate_blocks(spec: &GridSpec, shapes: &[BlockShape]) -> Vec<Block> {
    let mut sorted: Vec<&BlockShape> = shapes.iter().collect();
    sorted.sort_by_key(|s| s.id);
    sorted.dedup_by_key(|s| s.id);

    let mut blocks = Vec::new();
    for shape in sorted {
        if shape.time_extent > spec.n_time || shape.freq_extent > spec.n_freq {
            continue;
        }
        for t0 in 0..=(spec.n_time - shape.time_extent) {
            for f0 in 0..=(spec.n_freq - shape.freq_extent) {
                let mut minislots = [0usize; 4];
                let mut idx = 0;
                for dt in 0..shape.time_extent {
                    for df in 0..shape.freq_extent {
                        minislots[idx] = spec.minislot_index(t0 + dt, f0 + df);
                        idx += 1;
                    }
                }
                blocks.push(Block {
                    block_id: blocks.len(),
                    shape_id: shape.id,
                    origin: (t0, f0),
                    minislots,
                    end_time_ms: (t0 + shape.time_extent) as f64 * spec.slot_duration_ms(),
                });
            }
        }
    }
    blocks
}

/// Incidence and pairwise conflict relations over a block set.
///
/// Immutable after construction. `conflicts(b, p)` is true iff the mini-slot
/// sets of `b` and `p` intersect and `b != p`.
#[derive(Debug, Clone)]
pub struct ConflictStructure {
    n_blocks: usize,
    n_minislots: usize,
    covers: Vec<[usize; 4]>,
    /// Blocks covering each mini-slot, ascending by block_id.
    slot_blocks: Vec<Vec<usize>>,
    /// Conflicting blocks per block, ascending by block_id.
    neighbors: Vec<Vec<usize>>,
    /// Dense pair relation, row-major n_blocks x n_blocks.
    pair: Vec<bool>,
}

impl ConflictStructure {
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n_minislots(&self) -> usize {
        self.n_minislots
    }

    /// Mini-slots covered by block `b`.
    pub fn covered_slots(&self, b: usize) -> &[usize; 4] {
        &self.covers[b]
    }

    /// Blocks covering mini-slot `i`.
    pub fn blocks_on_slot(&self, i: usize) -> &[usize] {
        &self.slot_blocks[i]
    }

    pub fn conflicts(&self, b: usize, p: usize) -> bool {
        self.pair[b * self.n_blocks + p]
    }

    pub fn neighbors(&self, b: usize) -> &[usize] {
        &self.neighbors[b]
    }

    /// Number of blocks overlapping block `b`.
    pub fn degree(&self, b: usize) -> usize {
        self.neighbors[b].len()
    }
}

/// Materializes incidence and conflict relations for `blocks`.
pub fn build_conflicts(blocks: &[Block], spec: &GridSpec) -> ConflictStructure {
    let n_blocks = blocks.len();
    let n_minislots = spec.minislot_count();

    let covers: Vec<[usize; 4]> = blocks.iter().map(|b| b.minislots).collect();

    let mut slot_blocks = vec![Vec::new(); n_minislots];
    for block in blocks {
        for &slot in &block.minislots {
            slot_blocks[slot].push(block.block_id);
        }
    }

    let mut pair = vec![false; n_blocks * n_blocks];
    for on_slot in &slot_blocks {
        for (idx, &b) in on_slot.iter().enumerate() {
            for &p in &on_slot[idx + 1..] {
                pair[b * n_blocks + p] = true;
                pair[p * n_blocks + b] = true;
            }
        }
    }

    let neighbors = (0..n_blocks)
        .map(|b| {
            (0..n_blocks)
                .filter(|&p| pair[b * n_blocks + p])
                .collect::<Vec<_>>()
        })
        .collect();

    ConflictStructure {
        n_blocks,
        n_minislots,
        covers,
        slot_blocks,
        neighbors,
        pair,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n_time: usize, n_freq: usize) -> GridSpec {
        GridSpec::new(n_time, n_freq, 2.0, 2.0).unwrap()
    }

    #[test]
    fn default_grid_census_matches_549() {
        let blocks = enumerate_blocks(&GridSpec::default(), &default_shapes());
        let count = |s: ShapeId| blocks.iter().filter(|b| b.shape_id == s).count();
        assert_eq!(count(ShapeId::Shape1), 143);
        assert_eq!(count(ShapeId::Shape2), 150);
        assert_eq!(count(ShapeId::Shape3), 128);
        assert_eq!(count(ShapeId::Shape4), 128);
        assert_eq!(blocks.len(), 549);
    }

    #[test]
    fn shape_too_large_contributes_zero() {
        // 1x4 does not fit in a single frequency row.
        let blocks = enumerate_blocks(&grid(4, 1), &[BlockShape::standard(ShapeId::Shape3)]);
        assert!(blocks.is_empty());
    }

    #[test]
    fn four_by_four_census() {
        let blocks = enumerate_blocks(&grid(4, 4), &default_shapes());
        let count = |s: ShapeId| blocks.iter().filter(|b| b.shape_id == s).count();
        assert_eq!(count(ShapeId::Shape1), 4);
        assert_eq!(count(ShapeId::Shape2), 9);
        assert_eq!(count(ShapeId::Shape3), 4);
        assert_eq!(count(ShapeId::Shape4), 4);
        assert_eq!(blocks.len(), 21);
    }

    #[test]
    fn block_ids_are_positions_and_ordering_is_stable() {
        let spec = grid(4, 4);
        let a = enumerate_blocks(&spec, &default_shapes());
        let b = enumerate_blocks(&spec, &default_shapes());
        assert_eq!(a, b);
        for (idx, block) in a.iter().enumerate() {
            assert_eq!(block.block_id, idx);
        }
        // Shape-major, then time outer / frequency inner.
        assert!(a.windows(2).all(|w| {
            (w[0].shape_id, w[0].origin) < (w[1].shape_id, w[1].origin)
                || w[0].shape_id < w[1].shape_id
        }));
    }

    #[test]
    fn minislots_are_distinct_and_inside_grid() {
        let spec = grid(5, 6);
        for block in enumerate_blocks(&spec, &default_shapes()) {
            let mut slots = block.minislots;
            slots.sort_unstable();
            assert!(slots.windows(2).all(|w| w[0] < w[1]));
            assert!(slots.iter().all(|&i| i < spec.minislot_count()));
        }
    }

    #[test]
    fn end_time_arithmetic_on_16_column_grid() {
        let spec = GridSpec::default(); // slot duration 0.125 ms
        let blocks = enumerate_blocks(&spec, &default_shapes());

        // Shape1 at column 0 ends at 0.5 ms, at column 1 at 0.625 ms.
        let s1_c0 = blocks
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape1 && b.origin == (0, 0))
            .unwrap();
        let s1_c1 = blocks
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape1 && b.origin == (1, 0))
            .unwrap();
        assert!(latency_feasible(s1_c0, 0.5));
        assert!(!latency_feasible(s1_c1, 0.5));

        // Shape3 at column 3 ends at (3+1)*0.125 = 0.5 ms.
        let s3_c3 = blocks
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape3 && b.origin == (3, 0))
            .unwrap();
        assert!(latency_feasible(s3_c3, 0.5));

        // The window bound itself is always met.
        assert!(blocks.iter().all(|b| latency_feasible(b, 2.0)));
    }

    #[test]
    fn single_block_has_no_conflicts() {
        let spec = grid(4, 1);
        let blocks = enumerate_blocks(&spec, &[BlockShape::standard(ShapeId::Shape1)]);
        assert_eq!(blocks.len(), 1);
        let conflicts = build_conflicts(&blocks, &spec);
        assert_eq!(conflicts.degree(0), 0);
        assert!(!conflicts.conflicts(0, 0));
    }

    #[test]
    fn conflicts_symmetric_irreflexive_on_4x4() {
        let spec = grid(4, 4);
        let blocks = enumerate_blocks(&spec, &default_shapes());
        let conflicts = build_conflicts(&blocks, &spec);
        for b in 0..blocks.len() {
            assert!(!conflicts.conflicts(b, b));
            for p in 0..blocks.len() {
                assert_eq!(conflicts.conflicts(b, p), conflicts.conflicts(p, b));
            }
        }
    }

    /// Brute-force pairwise mini-slot intersection, independent of
    /// ConflictStructure internals.
    fn intersects(a: &Block, b: &Block) -> bool {
        a.minislots
            .iter()
            .any(|i| b.minislots.iter().any(|j| i == j))
    }

    #[test]
    fn conflict_count_of_shape2_origin_zero_on_4x4() {
        let spec = grid(4, 4);
        let blocks = enumerate_blocks(&spec, &default_shapes());
        let conflicts = build_conflicts(&blocks, &spec);
        let target = blocks
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape2 && b.origin == (0, 0))
            .unwrap();
        let expected = blocks
            .iter()
            .filter(|p| p.block_id != target.block_id && intersects(target, p))
            .count();
        assert_eq!(conflicts.degree(target.block_id), expected);
    }

    #[test]
    fn same_origin_shape3_shape4_conflict() {
        let spec = grid(4, 4);
        let blocks = enumerate_blocks(&spec, &default_shapes());
        let conflicts = build_conflicts(&blocks, &spec);
        let s3 = blocks
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape3 && b.origin == (0, 0))
            .unwrap();
        let s4 = blocks
            .iter()
            .find(|b| b.shape_id == ShapeId::Shape4 && b.origin == (0, 0))
            .unwrap();
        assert!(conflicts.conflicts(s3.block_id, s4.block_id));
    }

    #[test]
    fn neighbor_lists_sorted_and_consistent_with_pair_relation() {
        let spec = grid(5, 5);
        let blocks = enumerate_blocks(&spec, &default_shapes());
        let conflicts = build_conflicts(&blocks, &spec);
        for b in 0..blocks.len() {
            let nb = conflicts.neighbors(b);
            assert!(nb.windows(2).all(|w| w[0] < w[1]));
            for &p in nb {
                assert!(conflicts.conflicts(b, p));
            }
        }
    }

    #[test]
    fn grid_spec_rejects_degenerate_inputs() {
        assert!(GridSpec::new(0, 4, 2.0, 2.0).is_err());
        assert!(GridSpec::new(4, 0, 2.0, 2.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 2.0).is_err());
        assert!(GridSpec::new(4, 4, 2.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn census_identity(n_time in 1usize..8, n_freq in 1usize..8) {
            let spec = grid(n_time, n_freq);
            let shapes = default_shapes();
            let blocks = enumerate_blocks(&spec, &shapes);
            let expected: usize = shapes.iter().map(|s| s.placements(&spec)).sum();
            prop_assert_eq!(blocks.len(), expected);
            for shape in &shapes {
                let count = blocks.iter().filter(|b| b.shape_id == shape.id).count();
                prop_assert_eq!(count, shape.placements(&spec));
            }
        }

        #[test]
        fn conflict_soundness_up_to_6x6(n_time in 1usize..=6, n_freq in 1usize..=6) {
            let spec = grid(n_time, n_freq);
            let blocks = enumerate_blocks(&spec, &default_shapes());
            let conflicts = build_conflicts(&blocks, &spec);
            for a in &blocks {
                for b in &blocks {
                    let expected = a.block_id != b.block_id && intersects(a, b);
                    prop_assert_eq!(conflicts.conflicts(a.block_id, b.block_id), expected);
                }
            }
        }

        #[test]
        fn latency_monotone_in_tau(col in 0usize..13, tau_lo in 0.01f64..4.0, tau_hi in 0.01f64..4.0) {
            let spec = GridSpec::default();
            let blocks = enumerate_blocks(&spec, &[BlockShape::standard(ShapeId::Shape1)]);
            let block = blocks.iter().find(|b| b.origin.0 == col).unwrap();
            let (lo, hi) = if tau_lo <= tau_hi { (tau_lo, tau_hi) } else { (tau_hi, tau_lo) };
            prop_assert!(!latency_feasible(block, lo) || latency_feasible(block, hi));
        }
    }
}
