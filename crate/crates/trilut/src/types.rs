//! Shared data types and layout conventions.
//!
//! Everything downstream relies on one indexing convention: within a group of
//! `g` consecutive weights along K, the r-th weight (0-based, increasing K)
//! maps to base-3 digit r of the packed byte, least significant digit first.
//! A trit t in {-1, 0, +1} is stored as the digit t+1, so a group packs to
//! `sum_r (trit[r] + 1) * 3^r`, a value in `[0, 3^g)`. The byte doubles as
//! the lookup-table row index, and the all-zero weight group always lands on
//! row `(3^g - 1) / 2` (40 for g=4, 121 for g=5).
//!
//! Layouts:
//! - activations, LUT tiles, and outputs keep the token axis (N) innermost
//!   and contiguous, so one table row holds one value per token;
//! - packed weights are permuted into (K-tile, M-tile) blocks, K-tile index
//!   outermost, and within a block bytes are group-major then row-major.

use crate::error::{Error, Result};

/// 3^g.
pub const fn pow3(g: u8) -> usize {
    let mut v = 1usize;
    let mut i = 0;
    while i < g {
        v *= 3;
        i += 1;
    }
    v
}

/// Index of the all-zero weight group: (3^g - 1) / 2.
pub const fn zero_index(g: u8) -> u8 {
    ((pow3(g) - 1) / 2) as u8
}

/// Largest number of INT16 rows that can be summed in an INT16 accumulator
/// without overflow when each row entry is bounded by `g * 127`:
/// `floor(32767 / (127 * g))`. 64 for g=4, 51 for g=5.
pub const fn block_bound(g: u8) -> usize {
    (i16::MAX as usize) / (127 * g as usize)
}

/// Default rows per M-tile in the packed weight layout.
pub const DEFAULT_M_TILE: usize = 32;

/// A single ternary weight, guaranteed in {-1, 0, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trit(i8);

impl Trit {
    pub const MINUS: Trit = Trit(-1);
    pub const ZERO: Trit = Trit(0);
    pub const PLUS: Trit = Trit(1);

    pub fn new(value: i8) -> Result<Self> {
        if (-1..=1).contains(&value) {
            Ok(Trit(value))
        } else {
            Err(Error::InvalidTrit(value))
        }
    }

    #[inline]
    pub fn value(self) -> i8 {
        self.0
    }
}

impl From<Trit> for i8 {
    fn from(t: Trit) -> i8 {
        t.0
    }
}

/// Unpacked ternary weight matrix, the ground-truth representation.
///
/// Row-major M x K with entries in {-1, 0, +1} and one per-tensor FP32 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryMatrix {
    m: usize,
    k: usize,
    data: Vec<i8>,
    weight_scale: f32,
}

impl TernaryMatrix {
    pub fn new(m: usize, k: usize, data: Vec<i8>, weight_scale: f32) -> Result<Self> {
        if data.len() != m * k {
            return Err(Error::ShapeMismatch(format!(
                "ternary data length {} != M*K = {}",
                data.len(),
                m * k
            )));
        }
        if let Some(&bad) = data.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::InvalidTrit(bad));
        }
        if !(weight_scale.is_finite() && weight_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight_scale must be finite and > 0, got {weight_scale}"
            )));
        }
        Ok(Self {
            m,
            k,
            data,
            weight_scale,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weight_scale(&self) -> f32 {
        self.weight_scale
    }

    /// Row of K trits as raw i8 values.
    #[inline]
    pub fn row(&self, m: usize) -> &[i8] {
        &self.data[m * self.k..(m + 1) * self.k]
    }

    #[inline]
    pub fn trit(&self, m: usize, k: usize) -> Trit {
        Trit(self.data[m * self.k + k])
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }
}

/// Per-matrix sequence of group sizes along K. Identical for every row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSchedule {
    groups: Vec<u8>,
    covered_k: usize,
}

/// A maximal run of equal group sizes within a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleRun {
    pub g: u8,
    /// Index of the first group of the run.
    pub start_group: usize,
    /// Number of groups in the run.
    pub groups: usize,
    /// First K feature covered by the run.
    pub k0: usize,
}

impl GroupSchedule {
    pub fn new(groups: Vec<u8>, covered_k: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidArgument("empty group schedule".into()));
        }
        if let Some(&bad) = groups.iter().find(|g| !matches!(**g, 4 | 5)) {
            return Err(Error::InvalidArgument(format!(
                "group size {bad} not in {{4, 5}}"
            )));
        }
        let sum: usize = groups.iter().map(|&g| g as usize).sum();
        if sum != covered_k {
            return Err(Error::ShapeMismatch(format!(
                "group sizes sum to {sum}, expected covered_K = {covered_k}"
            )));
        }
        Ok(Self { groups, covered_k })
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn covered_k(&self) -> usize {
        self.covered_k
    }

    pub fn g_max(&self) -> u8 {
        *self.groups.iter().max().expect("non-empty schedule")
    }

    pub fn g_min(&self) -> u8 {
        *self.groups.iter().min().expect("non-empty schedule")
    }

    /// Maximal runs of equal group size, in K order.
    pub fn runs(&self) -> Vec<ScheduleRun> {
        let mut runs = Vec::new();
        let mut start = 0usize;
        let mut k0 = 0usize;
        while start < self.groups.len() {
            let g = self.groups[start];
            let mut end = start;
            while end < self.groups.len() && self.groups[end] == g {
                end += 1;
            }
            runs.push(ScheduleRun {
                g,
                start_group: start,
                groups: end - start,
                k0,
            });
            k0 += (end - start) * g as usize;
            start = end;
        }
        runs
    }
}

/// One K-tile of the packed layout: a run of `groups` equal-size groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KTile {
    pub g: u8,
    /// Global index of the first group in the tile.
    pub start_group: usize,
    /// Groups in this tile (may be short at a run boundary).
    pub groups: usize,
    /// First K feature covered by the tile.
    pub k0: usize,
    /// Payload offset of this tile's first byte for M-tile 0.
    pub payload_base: usize,
}

impl KTile {
    /// Features covered by the tile.
    pub fn features(&self) -> usize {
        self.groups * self.g as usize
    }
}

/// Splits a schedule into K-tiles of at most `k_tile_groups` groups each.
/// Tiles never span a change in group size; a run boundary starts a fresh
/// (possibly short) tile.
pub fn build_tile_plan(
    schedule: &GroupSchedule,
    k_tile_groups: usize,
    m_tile: usize,
    num_m_tiles: usize,
) -> Vec<KTile> {
    let mut plan = Vec::new();
    let mut payload_base = 0usize;
    for run in schedule.runs() {
        let mut done = 0usize;
        while done < run.groups {
            let groups = k_tile_groups.min(run.groups - done);
            plan.push(KTile {
                g: run.g,
                start_group: run.start_group + done,
                groups,
                k0: run.k0 + done * run.g as usize,
                payload_base,
            });
            payload_base += groups * m_tile * num_m_tiles;
            done += groups;
        }
    }
    plan
}

/// Packed ternary weights: one byte per group per row, permuted into
/// (K-tile, M-tile) blocks with the K-tile index outermost.
///
/// Within a block the bytes are group-major then row-major, so the inner
/// accumulation loop reads one byte per output row sequentially. Rows past M
/// in the final M-tile are padded with the all-zero index and contribute
/// exactly zero to any output.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedWeights {
    m: usize,
    k: usize,
    schedule: GroupSchedule,
    k_tile_groups: usize,
    m_tile: usize,
    payload: Vec<u8>,
    weight_scale: f32,
    plan: Vec<KTile>,
}

impl PackedWeights {
    /// Builds and validates a packed matrix from raw parts. Every payload
    /// byte must be a valid index for its group's size.
    pub fn from_parts(
        m: usize,
        k: usize,
        schedule: GroupSchedule,
        k_tile_groups: usize,
        m_tile: usize,
        payload: Vec<u8>,
        weight_scale: f32,
    ) -> Result<Self> {
        if schedule.covered_k() != k {
            return Err(Error::ShapeMismatch(format!(
                "schedule covers {} features, expected K = {k}",
                schedule.covered_k()
            )));
        }
        if k_tile_groups == 0 || m_tile == 0 {
            return Err(Error::InvalidArgument(
                "k_tile_groups and m_tile must be >= 1".into(),
            ));
        }
        if !(weight_scale.is_finite() && weight_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight_scale must be finite and > 0, got {weight_scale}"
            )));
        }
        let num_m_tiles = m.div_ceil(m_tile);
        let expected = schedule.len() * m_tile * num_m_tiles;
        if payload.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "payload length {} != expected tile-padded size {expected}",
                payload.len()
            )));
        }
        let plan = build_tile_plan(&schedule, k_tile_groups, m_tile, num_m_tiles);
        for tile in &plan {
            let limit = pow3(tile.g) as u8;
            let bytes = tile.groups * m_tile * num_m_tiles;
            for (i, &b) in payload[tile.payload_base..tile.payload_base + bytes]
                .iter()
                .enumerate()
            {
                if b >= limit {
                    return Err(Error::CorruptPayload {
                        byte: b,
                        g: tile.g,
                        offset: tile.payload_base + i,
                    });
                }
            }
        }
        Ok(Self {
            m,
            k,
            schedule,
            k_tile_groups,
            m_tile,
            payload,
            weight_scale,
            plan,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn schedule(&self) -> &GroupSchedule {
        &self.schedule
    }

    pub fn k_tile_groups(&self) -> usize {
        self.k_tile_groups
    }

    pub fn m_tile(&self) -> usize {
        self.m_tile
    }

    pub fn num_m_tiles(&self) -> usize {
        self.m.div_ceil(self.m_tile)
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn weight_scale(&self) -> f32 {
        self.weight_scale
    }

    pub fn tile_plan(&self) -> &[KTile] {
        &self.plan
    }

    /// Undoes the tile permutation: row-major M x num_groups matrix of raw
    /// group indices, padding discarded.
    pub fn index_matrix(&self) -> Vec<u8> {
        let num_groups = self.schedule.len();
        let mut idx = vec![0u8; self.m * num_groups];
        for tile in &self.plan {
            for mt in 0..self.num_m_tiles() {
                let base = tile.payload_base + mt * tile.groups * self.m_tile;
                for j in 0..tile.groups {
                    let col = tile.start_group + j;
                    for r in 0..self.m_tile {
                        let row = mt * self.m_tile + r;
                        if row < self.m {
                            idx[row * num_groups + col] = self.payload[base + j * self.m_tile + r];
                        }
                    }
                }
            }
        }
        idx
    }
}

/// Token-major INT8 activation block with per-token quantization scales.
///
/// `data[k * N + n]` is feature k of token n; the token axis is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationView {
    k: usize,
    n: usize,
    data: Vec<i8>,
    token_scales: Vec<f32>,
}

impl ActivationView {
    pub fn new(k: usize, n: usize, data: Vec<i8>, token_scales: Vec<f32>) -> Result<Self> {
        if data.len() != k * n {
            return Err(Error::ShapeMismatch(format!(
                "activation data length {} != K*N = {}",
                data.len(),
                k * n
            )));
        }
        if token_scales.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "token_scales length {} != N = {n}",
                token_scales.len()
            )));
        }
        if let Some(pos) = token_scales.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "token scale at {pos} must be finite and > 0"
            )));
        }
        Ok(Self {
            k,
            n,
            data,
            token_scales,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// All N tokens of feature k, contiguous.
    #[inline]
    pub fn row(&self, k: usize) -> &[i8] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn token_scales(&self) -> &[f32] {
        &self.token_scales
    }
}

/// One streamed LUT block: `groups_in_tile` sub-tables of 3^g rows, each row
/// holding `width` INT16 entries (one per token). This is the unit that must
/// fit in L1.
#[derive(Debug, Clone)]
pub struct LutTile {
    g: u8,
    groups_in_tile: usize,
    width: usize,
    data: Vec<i16>,
}

impl LutTile {
    pub fn new(g: u8, groups_in_tile: usize, width: usize) -> Self {
        let data = vec![0i16; groups_in_tile * pow3(g) * width];
        Self {
            g,
            groups_in_tile,
            width,
            data,
        }
    }

    /// Reshapes the tile in place, reusing the allocation where possible.
    pub fn reset(&mut self, g: u8, groups_in_tile: usize, width: usize) {
        self.g = g;
        self.groups_in_tile = groups_in_tile;
        self.width = width;
        self.data.clear();
        self.data.resize(groups_in_tile * pow3(g) * width, 0);
    }

    pub fn g(&self) -> u8 {
        self.g
    }

    pub fn groups_in_tile(&self) -> usize {
        self.groups_in_tile
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn sub_table(&self, group: usize) -> &[i16] {
        let stride = pow3(self.g) * self.width;
        &self.data[group * stride..(group + 1) * stride]
    }

    #[inline]
    pub fn sub_table_mut(&mut self, group: usize) -> &mut [i16] {
        let stride = pow3(self.g) * self.width;
        &mut self.data[group * stride..(group + 1) * stride]
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    /// Bytes held by the backing allocation.
    pub fn capacity_bytes(&self) -> usize {
        self.data.capacity() * std::mem::size_of::<i16>()
    }
}

/// GeMM result: token-major INT32, optionally rescaled to FP32.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    pub m: usize,
    pub n: usize,
    /// `data_i32[m * N + n]` is the exact integer dot product of weight row m
    /// with INT8 token n.
    pub data_i32: Vec<i32>,
    pub data_f32: Option<Vec<f32>>,
}

impl OutputMatrix {
    pub fn zeroed(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            data_i32: vec![0; m * n],
            data_f32: None,
        }
    }

    #[inline]
    pub fn at(&self, m: usize, n: usize) -> i32 {
        self.data_i32[m * self.n + n]
    }
}

/// Kernel execution parameters.
///
/// `k_tile` is a feature budget along K: each K-tile takes
/// `max(1, k_tile / g)` whole groups of its run's size, so the features per
/// tile are always a multiple of that tile's g. `n_tile` is the token-tile
/// width, a multiple of the INT16 SIMD lane count. `block_b` bounds how many
/// INT16 table rows are summed before widening into INT32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    pub k_tile: usize,
    pub n_tile: usize,
    pub block_b: usize,
    pub threads: usize,
    pub l1_bytes: usize,
    pub simd_bits: usize,
}

impl KernelConfig {
    /// Checks the configuration against a concrete group schedule.
    pub fn validate_for(&self, schedule: &GroupSchedule) -> Result<()> {
        if self.simd_bits < 16 || !self.simd_bits.is_multiple_of(16) {
            return Err(Error::ConfigInfeasible(format!(
                "simd_bits {} must be a positive multiple of 16",
                self.simd_bits
            )));
        }
        let lanes = self.simd_bits / 16;
        if self.n_tile == 0 || !self.n_tile.is_multiple_of(lanes) {
            return Err(Error::ConfigInfeasible(format!(
                "n_tile {} must be a positive multiple of the INT16 lane count {lanes}",
                self.n_tile
            )));
        }
        if self.threads == 0 {
            return Err(Error::ConfigInfeasible("threads must be >= 1".into()));
        }
        let g_max = schedule.g_max();
        let bound = block_bound(g_max);
        if self.block_b == 0 || self.block_b > bound {
            return Err(Error::BlockBoundViolation {
                block_b: self.block_b,
                bound,
                g: g_max,
            });
        }
        let worst_groups = (self.k_tile / schedule.g_min() as usize).max(1);
        let lut_bytes = pow3(g_max) * self.n_tile * worst_groups * 2;
        if lut_bytes > self.l1_bytes {
            return Err(Error::ConfigInfeasible(format!(
                "LUT tile of {lut_bytes} bytes exceeds l1_bytes = {}",
                self.l1_bytes
            )));
        }
        Ok(())
    }

    /// Groups per K-tile for this configuration under `schedule`.
    pub fn k_tile_groups(&self, schedule: &GroupSchedule) -> usize {
        (self.k_tile / schedule.g_max() as usize).max(1)
    }
}
