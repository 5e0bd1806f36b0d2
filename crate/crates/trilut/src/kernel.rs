//! Streamed vector-LUT mixed-precision GeMM.
//!
//! The full lookup table for a K x N activation block is (K/g) * 3^g * N
//! INT16 entries, far beyond cache for real shapes, so it is never
//! materialized. Instead the kernel walks token tiles and K-tiles: for each
//! pair it precomputes one cache-sized [`LutTile`], then for every M-tile
//! reads one weight byte per output row per group and adds the indexed
//! INT16 row vector (one entry per token) into an INT16 block accumulator.
//! The accumulator widens into the INT32 output every `block_b` groups and
//! at tile end; `block_b <= floor(32767 / (127 g))` guarantees the INT16
//! partial sums cannot overflow, so the result is exact.
//!
//! Weight bytes arrive pre-permuted in the same (K-tile, M-tile) order the
//! loops consume them, one sequential byte per output row. Activations and
//! outputs stay token-major end to end; feature-major callers get the
//! transposition fused into precompute (input) or the widening flush
//! (output) instead of a separate pass.
//!
//! Threads split the M-tile range; each worker owns a private [`LutTile`]
//! and writes a disjoint output region, so results are identical for any
//! thread count.

use crate::error::{Error, Result};
use crate::precompute::precompute_topological_rows;
use crate::types::{
    block_bound, pow3, ActivationView, GroupSchedule, KTile, KernelConfig, LutTile, OutputMatrix,
    PackedWeights,
};

/// Default L1 data-cache budget for tile selection.
pub const DEFAULT_L1_BYTES: usize = 32 * 1024;
/// Default SIMD register width in bits.
pub const DEFAULT_SIMD_BITS: usize = 256;
/// Preferred token-tile width before rounding up to the lane count.
pub const DEFAULT_N_TILE: usize = 32;

/// Widest K-tile worth keeping, in groups: reuse of output registers stops
/// paying off beyond 4 groups at g=4 and 2 groups at g=5.
fn k_tile_cap_groups(g: u8) -> usize {
    if g == 4 {
        4
    } else {
        2
    }
}

fn check_group_size(g: u8) -> Result<()> {
    if g == 4 || g == 5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "group size {g} not in {{4, 5}}"
        )))
    }
}

/// Token-tile width for a SIMD width: the default 32, rounded up to a whole
/// number of INT16 lanes.
pub fn default_n_tile(simd_bits: usize) -> Result<usize> {
    if simd_bits < 16 || !simd_bits.is_multiple_of(16) {
        return Err(Error::ConfigInfeasible(format!(
            "simd_bits {simd_bits} must be a positive multiple of 16"
        )));
    }
    let lanes = simd_bits / 16;
    Ok(DEFAULT_N_TILE.div_ceil(lanes) * lanes)
}

/// Largest multiple of g such that one LUT tile (3^g rows of `n_tile` INT16
/// entries per group) fits in `l1_bytes`, capped at the per-g maximum.
pub fn select_k_tile(g: u8, l1_bytes: usize, n_tile: usize) -> Result<usize> {
    check_group_size(g)?;
    let per_group_bytes = pow3(g) * n_tile * 2;
    let fit = l1_bytes / per_group_bytes;
    if fit == 0 {
        return Err(Error::ConfigInfeasible(format!(
            "a single sub-table of {per_group_bytes} bytes exceeds l1_bytes = {l1_bytes}"
        )));
    }
    Ok(fit.min(k_tile_cap_groups(g)) * g as usize)
}

/// Analytic tile selection: `(k_tile, n_tile)` from hardware parameters.
pub fn select_tiles(g: u8, l1_bytes: usize, simd_bits: usize) -> Result<(usize, usize)> {
    let n_tile = default_n_tile(simd_bits)?;
    let k_tile = select_k_tile(g, l1_bytes, n_tile)?;
    Ok((k_tile, n_tile))
}

impl KernelConfig {
    /// Configuration for a schedule from hardware parameters, with one
    /// thread and the maximal legal `block_b` clipped to the groups per
    /// tile.
    pub fn for_schedule(
        schedule: &GroupSchedule,
        l1_bytes: usize,
        simd_bits: usize,
    ) -> Result<Self> {
        let g = schedule.g_max();
        let (k_tile, n_tile) = select_tiles(g, l1_bytes, simd_bits)?;
        let groups_per_tile = (k_tile / g as usize).max(1);
        Ok(KernelConfig {
            k_tile,
            n_tile,
            block_b: block_bound(g).min(groups_per_tile),
            threads: 1,
            l1_bytes,
            simd_bits,
        })
    }

    /// [`KernelConfig::for_schedule`] with the default cache and SIMD width.
    pub fn recommended(schedule: &GroupSchedule) -> Result<Self> {
        Self::for_schedule(schedule, DEFAULT_L1_BYTES, DEFAULT_SIMD_BITS)
    }
}

/// Size in bytes of a fully materialized INT16 LUT for a K x N activation
/// block at group size g. Kept as documentation of why streaming is
/// mandatory: real shapes run to hundreds of MiB.
pub fn full_lut_bytes(k: usize, n: usize, g: u8) -> Result<usize> {
    check_group_size(g)?;
    if !k.is_multiple_of(g as usize) {
        return Err(Error::DivisibilityError { k, g });
    }
    Ok((k / g as usize) * pow3(g) * n * 2)
}

/// Activations in the feature-contiguous layout common to inference
/// frameworks: `data[n * K + k]`, one row of K features per token.
#[derive(Debug, Clone, Copy)]
pub struct FeatureMajorActivations<'a> {
    pub k: usize,
    pub n: usize,
    pub data: &'a [i8],
    pub token_scales: &'a [f32],
}

impl FeatureMajorActivations<'_> {
    fn validate(&self) -> Result<()> {
        if self.data.len() != self.k * self.n {
            return Err(Error::ShapeMismatch(format!(
                "feature-major data length {} != N*K = {}",
                self.data.len(),
                self.k * self.n
            )));
        }
        Ok(())
    }
}

/// Standalone transposition to the token-major layout. The kernel itself
/// never performs this as a full pass; it gathers per K-tile during
/// precompute instead (see [`mpgemm_fused_input`]).
pub fn transpose_to_token_major(acts: &FeatureMajorActivations) -> Result<ActivationView> {
    acts.validate()?;
    let (k, n) = (acts.k, acts.n);
    let mut data = vec![0i8; k * n];
    for token in 0..n {
        let src = &acts.data[token * k..(token + 1) * k];
        for (kk, &v) in src.iter().enumerate() {
            data[kk * n + token] = v;
        }
    }
    ActivationView::new(k, n, data, acts.token_scales.to_vec())
}

/// Layout of an FP32 activation block handed to [`quantize_activation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F32Layout {
    /// `data[k * N + n]`, token axis contiguous.
    TokenMajor,
    /// `data[n * K + k]`, feature axis contiguous.
    FeatureMajor,
}

/// Per-token symmetric INT8 quantization.
///
/// `scale_n = max_k |A[k,n]| / 127` (1.0 for an all-zero token); entries are
/// rounded half away from zero and clamped to [-127, 127].
pub fn quantize_activation(
    data: &[f32],
    k: usize,
    n: usize,
    layout: F32Layout,
) -> Result<ActivationView> {
    if data.len() != k * n {
        return Err(Error::ShapeMismatch(format!(
            "activation length {} != K*N = {}",
            data.len(),
            k * n
        )));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(pos));
    }
    let at = |kk: usize, token: usize| -> f32 {
        match layout {
            F32Layout::TokenMajor => data[kk * n + token],
            F32Layout::FeatureMajor => data[token * k + kk],
        }
    };
    let mut scales = vec![1.0f32; n];
    for (token, scale) in scales.iter_mut().enumerate() {
        let mut max_abs = 0f32;
        for kk in 0..k {
            max_abs = max_abs.max(at(kk, token).abs());
        }
        if max_abs > 0.0 {
            *scale = max_abs / 127.0;
        }
    }
    let mut q = vec![0i8; k * n];
    for kk in 0..k {
        for token in 0..n {
            let v = (at(kk, token) / scales[token]).round().clamp(-127.0, 127.0);
            q[kk * n + token] = v as i8;
        }
    }
    ActivationView::new(k, n, q, scales)
}

/// Fills `out.data_f32` with `data_i32[m,n] * weight_scale * token_scales[n]`.
pub fn apply_scales(
    out: &mut OutputMatrix,
    weight_scale: f32,
    token_scales: &[f32],
) -> Result<()> {
    if token_scales.len() != out.n {
        return Err(Error::ShapeMismatch(format!(
            "token_scales length {} != N = {}",
            token_scales.len(),
            out.n
        )));
    }
    let mut f = vec![0f32; out.m * out.n];
    for row in 0..out.m {
        for col in 0..out.n {
            let v = out.data_i32[row * out.n + col];
            f[row * out.n + col] = v as f32 * weight_scale * token_scales[col];
        }
    }
    out.data_f32 = Some(f);
    Ok(())
}

/// INT16 block accumulation with INT32 widening, exposed standalone so the
/// overflow bound can be exercised directly.
///
/// `lut_rows` is a flat row-major array of INT16 rows of `width` lanes;
/// `indices` selects rows to sum. Rows are accumulated in INT16 and widened
/// into INT32 every `block_b` additions. The result equals direct INT32
/// summation exactly as long as `block_b <= floor(32767 / (127 g))`.
pub fn hierarchical_accumulate(
    lut_rows: &[i16],
    width: usize,
    indices: &[u8],
    g: u8,
    block_b: usize,
) -> Result<Vec<i32>> {
    check_group_size(g)?;
    if width == 0 || !lut_rows.len().is_multiple_of(width) {
        return Err(Error::ShapeMismatch(format!(
            "lut_rows length {} is not a multiple of width {width}",
            lut_rows.len()
        )));
    }
    let bound = block_bound(g);
    if block_b == 0 || block_b > bound {
        return Err(Error::BlockBoundViolation { block_b, bound, g });
    }
    let num_rows = lut_rows.len() / width;
    let mut out = vec![0i32; width];
    let mut acc = vec![0i16; width];
    for chunk in indices.chunks(block_b) {
        acc.fill(0);
        for &idx in chunk {
            let idx = idx as usize;
            if idx >= num_rows {
                return Err(Error::IndexOutOfRange {
                    index: idx as u8,
                    g,
                    max: (num_rows - 1) as u8,
                });
            }
            let row = &lut_rows[idx * width..(idx + 1) * width];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        for (o, &a) in out.iter_mut().zip(acc.iter()) {
            *o += a as i32;
        }
    }
    Ok(out)
}

/// A GeMM instance: packed weights, token-major activations, execution
/// parameters.
#[derive(Debug, Clone, Copy)]
pub struct GemmProblem<'a> {
    pub weights: &'a PackedWeights,
    pub activations: &'a ActivationView,
    pub config: KernelConfig,
}

/// Instrumentation returned by [`mpgemm_with_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KernelStats {
    /// Table-indexing events: one per weight byte read (each yields a whole
    /// row of token results).
    pub vector_lookups: u64,
    /// Row-vector add/sub operations spent building LUT tiles.
    pub precompute_vector_ops: u64,
    /// Sum of all workers' LUT tile allocations in bytes; the peak LUT
    /// working set of the call.
    pub lut_bytes_peak: usize,
}

#[derive(Clone, Copy)]
enum ActSource<'a> {
    TokenMajor(&'a ActivationView),
    FeatureMajor(&'a FeatureMajorActivations<'a>),
}

impl ActSource<'_> {
    fn k(&self) -> usize {
        match self {
            ActSource::TokenMajor(a) => a.k(),
            ActSource::FeatureMajor(a) => a.k,
        }
    }

    fn n(&self) -> usize {
        match self {
            ActSource::TokenMajor(a) => a.n(),
            ActSource::FeatureMajor(a) => a.n,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum OutLayout {
    TokenMajor,
    FeatureMajor,
}

#[derive(Clone, Copy)]
struct SendPtr(*mut i32);
// Workers write disjoint output regions (disjoint M-tile ranges), so a
// shared raw pointer is sound to pass across threads.
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

/// Vector-LUT GeMM, token-major in and out.
pub fn mpgemm(problem: &GemmProblem) -> Result<OutputMatrix> {
    mpgemm_with_stats(problem).map(|(out, _)| out)
}

/// [`mpgemm`] plus instrumentation counters.
pub fn mpgemm_with_stats(problem: &GemmProblem) -> Result<(OutputMatrix, KernelStats)> {
    let (data, stats) = run_kernel(
        problem.weights,
        ActSource::TokenMajor(problem.activations),
        &problem.config,
        OutLayout::TokenMajor,
    )?;
    Ok((
        OutputMatrix {
            m: problem.weights.m(),
            n: problem.activations.n(),
            data_i32: data,
            data_f32: None,
        },
        stats,
    ))
}

/// Vector-LUT GeMM over feature-major activations. The transposition to
/// token-major happens per K-tile inside precompute; output is bit-identical
/// to [`transpose_to_token_major`] followed by [`mpgemm`].
pub fn mpgemm_fused_input(
    weights: &PackedWeights,
    acts: &FeatureMajorActivations,
    config: &KernelConfig,
) -> Result<OutputMatrix> {
    acts.validate()?;
    let (data, _) = run_kernel(
        weights,
        ActSource::FeatureMajor(acts),
        config,
        OutLayout::TokenMajor,
    )?;
    Ok(OutputMatrix {
        m: weights.m(),
        n: acts.n,
        data_i32: data,
        data_f32: None,
    })
}

/// Vector-LUT GeMM that re-transposes the output while widening: returns
/// `out[n * M + m]`, one row of M results per token.
pub fn mpgemm_fused_output(problem: &GemmProblem) -> Result<Vec<i32>> {
    run_kernel(
        problem.weights,
        ActSource::TokenMajor(problem.activations),
        &problem.config,
        OutLayout::FeatureMajor,
    )
    .map(|(data, _)| data)
}

fn run_kernel(
    w: &PackedWeights,
    src: ActSource,
    cfg: &KernelConfig,
    out_layout: OutLayout,
) -> Result<(Vec<i32>, KernelStats)> {
    if w.k() != src.k() {
        return Err(Error::ShapeMismatch(format!(
            "weight K = {} but activation K = {}",
            w.k(),
            src.k()
        )));
    }
    cfg.validate_for(w.schedule())?;
    let g_max = w.schedule().g_max();
    let live_lut_bytes = pow3(g_max) * cfg.n_tile * w.k_tile_groups() * 2;
    if live_lut_bytes > cfg.l1_bytes {
        return Err(Error::ConfigInfeasible(format!(
            "packed K-tile needs a {live_lut_bytes}-byte LUT tile, above l1_bytes = {}",
            cfg.l1_bytes
        )));
    }

    let (m, n) = (w.m(), src.n());
    let mut out = vec![0i32; m * n];
    let num_m_tiles = w.num_m_tiles();
    if m == 0 || n == 0 || num_m_tiles == 0 {
        return Ok((out, KernelStats::default()));
    }

    let threads = cfg.threads.min(num_m_tiles);
    let out_ptr = SendPtr(out.as_mut_ptr());
    let mut stats = KernelStats::default();

    if threads <= 1 {
        stats = worker(w, src, cfg, out_layout, out_ptr, 0..num_m_tiles);
    } else {
        let base = num_m_tiles / threads;
        let extra = num_m_tiles % threads;
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(threads);
            let mut start = 0usize;
            for t in 0..threads {
                let count = base + usize::from(t < extra);
                let range = start..start + count;
                start += count;
                handles.push(scope.spawn(move || worker(w, src, cfg, out_layout, out_ptr, range)));
            }
            for h in handles {
                let ws = h.join().expect("kernel worker panicked");
                stats.vector_lookups += ws.vector_lookups;
                stats.precompute_vector_ops += ws.precompute_vector_ops;
                stats.lut_bytes_peak += ws.lut_bytes_peak;
            }
        });
    }
    Ok((out, stats))
}

fn worker(
    w: &PackedWeights,
    src: ActSource,
    cfg: &KernelConfig,
    out_layout: OutLayout,
    out_ptr: SendPtr,
    m_tiles: std::ops::Range<usize>,
) -> KernelStats {
    let (m, n) = (w.m(), src.n());
    let m_tile = w.m_tile();
    let payload = w.payload();
    let plan = w.tile_plan();
    let n_tile = cfg.n_tile;

    // One LUT tile buffer per worker, sized for the largest tile up front so
    // it is never regrown.
    let widest = plan
        .iter()
        .max_by_key(|t| t.groups * pow3(t.g))
        .expect("non-empty plan");
    let mut lut = LutTile::new(widest.g, widest.groups, n_tile);
    let mut stats = KernelStats {
        lut_bytes_peak: lut.capacity_bytes(),
        ..KernelStats::default()
    };

    let mut acc = vec![0i16; m_tile * n_tile];
    let mut stage = vec![0i8; 5 * n_tile];

    for nt in 0..n.div_ceil(n_tile) {
        let n0 = nt * n_tile;
        let width = n_tile.min(n - n0);
        for tile in plan {
            stats.precompute_vector_ops +=
                precompute_tile(&mut lut, tile, src, n0, width, &mut stage) as u64;
            let p3w = pow3(tile.g) * width;

            for mt in m_tiles.clone() {
                let m0 = mt * m_tile;
                let rows = m_tile.min(m - m0);
                let tile_payload =
                    &payload[tile.payload_base + mt * tile.groups * m_tile..][..tile.groups * m_tile];
                acc[..rows * width].fill(0);
                let mut since_flush = 0usize;
                for j in 0..tile.groups {
                    let sub = &lut.data()[j * p3w..(j + 1) * p3w];
                    let bytes = &tile_payload[j * m_tile..j * m_tile + rows];
                    for (r, &byte) in bytes.iter().enumerate() {
                        let lrow = &sub[byte as usize * width..][..width];
                        let arow = &mut acc[r * width..][..width];
                        for (a, &v) in arow.iter_mut().zip(lrow) {
                            *a += v;
                        }
                    }
                    stats.vector_lookups += rows as u64;
                    since_flush += 1;
                    if since_flush == cfg.block_b && j + 1 < tile.groups {
                        flush(&acc, rows, width, m0, n0, m, n, out_layout, out_ptr);
                        acc[..rows * width].fill(0);
                        since_flush = 0;
                    }
                }
                flush(&acc, rows, width, m0, n0, m, n, out_layout, out_ptr);
            }
        }
    }
    stats
}

fn precompute_tile(
    lut: &mut LutTile,
    tile: &KTile,
    src: ActSource,
    n0: usize,
    width: usize,
    stage: &mut [i8],
) -> usize {
    lut.reset(tile.g, tile.groups, width);
    let g = tile.g as usize;
    let mut ops = 0usize;
    for j in 0..tile.groups {
        let k0 = tile.k0 + j * g;
        let mut rows: [&[i8]; 5] = [&[]; 5];
        match src {
            ActSource::TokenMajor(a) => {
                for (r, slot) in rows.iter_mut().take(g).enumerate() {
                    *slot = &a.row(k0 + r)[n0..n0 + width];
                }
            }
            ActSource::FeatureMajor(a) => {
                // Fused transposition: gather this group's strided feature
                // columns into a contiguous staging block.
                for r in 0..g {
                    for c in 0..width {
                        stage[r * width + c] = a.data[(n0 + c) * a.k + k0 + r];
                    }
                }
                for (r, slot) in rows.iter_mut().take(g).enumerate() {
                    *slot = &stage[r * width..(r + 1) * width];
                }
            }
        }
        ops += precompute_topological_rows(&rows[..g], lut.sub_table_mut(j));
    }
    ops
}

#[allow(clippy::too_many_arguments)]
fn flush(
    acc: &[i16],
    rows: usize,
    width: usize,
    m0: usize,
    n0: usize,
    m: usize,
    n: usize,
    out_layout: OutLayout,
    out_ptr: SendPtr,
) {
    match out_layout {
        OutLayout::TokenMajor => {
            for r in 0..rows {
                let base = (m0 + r) * n + n0;
                let arow = &acc[r * width..(r + 1) * width];
                // SAFETY: rows [m0, m0+rows) belong to this worker alone and
                // base + width <= m * n.
                unsafe {
                    for (c, &v) in arow.iter().enumerate() {
                        *out_ptr.0.add(base + c) += v as i32;
                    }
                }
            }
        }
        OutLayout::FeatureMajor => {
            for r in 0..rows {
                let arow = &acc[r * width..(r + 1) * width];
                // SAFETY: as above; indices stay within the worker's rows.
                unsafe {
                    for (c, &v) in arow.iter().enumerate() {
                        *out_ptr.0.add((n0 + c) * m + m0 + r) += v as i32;
                    }
                }
            }
        }
    }
}
