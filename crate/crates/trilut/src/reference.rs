//! Reference kernels: the INT32 triple-loop oracle every exactness claim is
//! checked against, a scalar-LUT kernel that reproduces the one-table-per-
//! token paradigm for benchmarking, and an FP32 GeMM for scale-path checks.
//!
//! All of these are single-threaded and untiled on purpose.

use crate::error::{Error, Result};
use crate::types::{pow3, ActivationView, OutputMatrix, PackedWeights, TernaryMatrix};

fn check_k(wk: usize, ak: usize) -> Result<()> {
    if wk != ak {
        return Err(Error::ShapeMismatch(format!(
            "weight K = {wk} but activation K = {ak}"
        )));
    }
    Ok(())
}

/// Direct INT32 GeMM over unpacked trits: `O[m,n] = sum_k W[m,k] * A[k,n]`.
pub fn naive_gemm_int(w: &TernaryMatrix, a: &ActivationView) -> Result<OutputMatrix> {
    check_k(w.k(), a.k())?;
    let (m, n) = (w.m(), a.n());
    let mut out = OutputMatrix::zeroed(m, n);
    for row in 0..m {
        let dst = &mut out.data_i32[row * n..(row + 1) * n];
        for (kk, &wt) in w.row(row).iter().enumerate() {
            let wv = wt as i32;
            for (d, &av) in dst.iter_mut().zip(a.row(kk)) {
                *d += wv * av as i32;
            }
        }
    }
    Ok(out)
}

/// Cross-check variant of [`naive_gemm_int`] with the K loop outermost.
pub fn naive_gemm_int_k_outer(w: &TernaryMatrix, a: &ActivationView) -> Result<OutputMatrix> {
    check_k(w.k(), a.k())?;
    let (m, k, n) = (w.m(), w.k(), a.n());
    let mut out = OutputMatrix::zeroed(m, n);
    for kk in 0..k {
        let arow = a.row(kk);
        for row in 0..m {
            let wv = w.row(row)[kk] as i32;
            let dst = &mut out.data_i32[row * n..(row + 1) * n];
            for (d, &av) in dst.iter_mut().zip(arow) {
                *d += wv * av as i32;
            }
        }
    }
    Ok(out)
}

/// Lookup instrumentation for the scalar-LUT baseline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScalarLutStats {
    /// Sub-table constructions: one per (token, group).
    pub table_builds: u64,
    /// Table-indexing events: one scalar lookup per (row, group, token).
    pub scalar_lookups: u64,
}

/// Scalar-LUT GeMM: one independent table per token, one scalar per lookup.
///
/// For each token the full table (all K/g sub-tables) is built and stays
/// resident while every weight byte is traversed, mirroring how prior
/// lookup kernels behave. Output is bit-exact equal to [`naive_gemm_int`].
pub fn scalar_lut_gemm(w: &PackedWeights, a: &ActivationView) -> Result<OutputMatrix> {
    scalar_lut_gemm_with_stats(w, a).map(|(out, _)| out)
}

pub fn scalar_lut_gemm_with_stats(
    w: &PackedWeights,
    a: &ActivationView,
) -> Result<(OutputMatrix, ScalarLutStats)> {
    check_k(w.k(), a.k())?;
    let (m, n) = (w.m(), a.n());
    let schedule = w.schedule();
    let num_groups = schedule.len();
    let idx = w.index_matrix();
    let mut stats = ScalarLutStats::default();
    let mut out = OutputMatrix::zeroed(m, n);

    // Per-group offsets into the flat per-token table.
    let mut table_offsets = Vec::with_capacity(num_groups);
    let mut k_starts = Vec::with_capacity(num_groups);
    let mut off = 0usize;
    let mut k0 = 0usize;
    for &g in schedule.groups() {
        table_offsets.push(off);
        k_starts.push(k0);
        off += pow3(g);
        k0 += g as usize;
    }
    let mut table = vec![0i16; off];

    for token in 0..n {
        for (gi, &g) in schedule.groups().iter().enumerate() {
            let base = table_offsets[gi];
            let k0 = k_starts[gi];
            for i in 0..pow3(g) {
                let mut acc = 0i16;
                let mut v = i;
                for r in 0..g as usize {
                    let sign = (v % 3) as i16 - 1;
                    v /= 3;
                    acc += sign * a.row(k0 + r)[token] as i16;
                }
                table[base + i] = acc;
            }
        }
        stats.table_builds += num_groups as u64;

        for row in 0..m {
            let mut acc = 0i32;
            let row_idx = &idx[row * num_groups..(row + 1) * num_groups];
            for (gi, &byte) in row_idx.iter().enumerate() {
                acc += table[table_offsets[gi] + byte as usize] as i32;
            }
            stats.scalar_lookups += num_groups as u64;
            out.data_i32[row * n + token] = acc;
        }
    }
    Ok((out, stats))
}

/// Plain FP32 GeMM over row-major W (M x K) and token-major A (K x N).
pub fn naive_gemm_f32(
    w: &[f32],
    m: usize,
    k: usize,
    a: &[f32],
    n: usize,
) -> Result<Vec<f32>> {
    if w.len() != m * k {
        return Err(Error::ShapeMismatch(format!(
            "weight length {} != M*K = {}",
            w.len(),
            m * k
        )));
    }
    if a.len() != k * n {
        return Err(Error::ShapeMismatch(format!(
            "activation length {} != K*N = {}",
            a.len(),
            k * n
        )));
    }
    let mut out = vec![0f32; m * n];
    for row in 0..m {
        for kk in 0..k {
            let wv = w[row * k + kk];
            let arow = &a[kk * n..(kk + 1) * n];
            let dst = &mut out[row * n..(row + 1) * n];
            for (d, &av) in dst.iter_mut().zip(arow) {
                *d += wv * av;
            }
        }
    }
    Ok(out)
}
