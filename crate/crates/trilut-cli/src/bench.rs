//! Kernel benchmark runner with CSV output.
//!
//! Timing uses a monotonic clock, reports the median of the timed repeats,
//! and discards two warm-up runs. `timed = false` zeroes every timing field
//! (and skips the repeats) so CSV output is byte-stable for golden tests;
//! each run also reports a checksum of the output block for determinism
//! checks across thread counts.

use std::time::Instant;

use trilut::{
    make_group_schedule, mpgemm, naive_gemm_int, scalar_lut_gemm, GemmProblem, PackingMode,
};

use crate::gen;
use crate::{CliError, KernelParams};

pub const CSV_HEADER: &str = "M,K,N,kernel,mode,threads,repeats,ns_per_run,runs_per_s,effective_gops";

pub const MIN_REPEATS: usize = 5;
pub const WARMUP_RUNS: usize = 2;

/// Kernels the harness can time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    VectorLut,
    ScalarLut,
    NaiveMad,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [
        KernelKind::VectorLut,
        KernelKind::ScalarLut,
        KernelKind::NaiveMad,
    ];
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelKind::VectorLut => write!(f, "vector_lut"),
            KernelKind::ScalarLut => write!(f, "scalar_lut"),
            KernelKind::NaiveMad => write!(f, "naive_mad"),
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "vector_lut" => Ok(KernelKind::VectorLut),
            "scalar_lut" => Ok(KernelKind::ScalarLut),
            "naive_mad" => Ok(KernelKind::NaiveMad),
            other => Err(format!(
                "unknown kernel '{other}' (expected vector_lut, scalar_lut, or naive_mad)"
            )),
        }
    }
}

/// One benchmark measurement.
#[derive(Debug, Clone, Copy)]
pub struct BenchRecord {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub kernel: KernelKind,
    pub mode: PackingMode,
    pub threads: usize,
    pub repeats: usize,
    pub ns_per_run: u64,
    pub runs_per_s: f64,
    pub effective_gops: f64,
}

impl BenchRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3},{:.3}",
            self.m,
            self.k,
            self.n,
            self.kernel,
            self.mode,
            self.threads,
            self.repeats,
            self.ns_per_run,
            self.runs_per_s,
            self.effective_gops
        )
    }
}

/// A record plus the FNV-1a checksum of the INT32 output it produced.
#[derive(Debug, Clone, Copy)]
pub struct BenchOutcome {
    pub record: BenchRecord,
    pub checksum: u64,
}

pub fn checksum_i32(data: &[i32]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for v in data {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn median_ns(mut samples: Vec<u128>) -> u64 {
    samples.sort_unstable();
    let n = samples.len();
    let mid = if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    };
    mid as u64
}

/// Times one (shape, kernel, mode, threads) combination.
///
/// Setup (generation, packing) is excluded from timing. The same seed and
/// shape always produce the same weights and activations no matter which
/// kernel or thread count consumes them, so checksums are comparable.
#[allow(clippy::too_many_arguments)]
pub fn run_bench(
    m: usize,
    k: usize,
    n: usize,
    kernel: KernelKind,
    mode: PackingMode,
    threads: usize,
    repeats: usize,
    seed: u64,
    params: &KernelParams,
    timed: bool,
) -> Result<BenchOutcome, CliError> {
    if repeats < MIN_REPEATS {
        return Err(CliError::Format(format!(
            "repeats must be >= {MIN_REPEATS}, got {repeats}"
        )));
    }
    let schedule = make_group_schedule(k, mode)?;
    let mut cfg = params.config_for(&schedule)?;
    cfg.threads = threads;

    let mut rng = gen::rng_for(gen::problem_seed(seed, m, k, n, mode));
    let weights = gen::random_ternary(m, k, 1.0, &mut rng);
    let acts = gen::random_activations_i8(k, n, &mut rng);
    let packed = trilut::pack_matrix(&weights, mode, &cfg)?;

    let run = || -> Result<Vec<i32>, CliError> {
        let out = match kernel {
            KernelKind::VectorLut => mpgemm(&GemmProblem {
                weights: &packed,
                activations: &acts,
                config: cfg,
            })?,
            KernelKind::ScalarLut => scalar_lut_gemm(&packed, &acts)?,
            KernelKind::NaiveMad => naive_gemm_int(&weights, &acts)?,
        };
        Ok(out.data_i32)
    };

    let (ns_per_run, checksum, runs) = if timed {
        for _ in 0..WARMUP_RUNS {
            run()?;
        }
        let mut samples = Vec::with_capacity(repeats);
        let mut checksum = 0u64;
        for _ in 0..repeats {
            let t0 = Instant::now();
            let out = run()?;
            samples.push(t0.elapsed().as_nanos());
            checksum = checksum_i32(&out);
        }
        (median_ns(samples), checksum, repeats)
    } else {
        let out = run()?;
        (0, checksum_i32(&out), repeats)
    };

    let (runs_per_s, effective_gops) = if ns_per_run > 0 {
        let ns = ns_per_run as f64;
        (1e9 / ns, 2.0 * (m * k * n) as f64 / ns)
    } else {
        (0.0, 0.0)
    };

    Ok(BenchOutcome {
        record: BenchRecord {
            m,
            k,
            n,
            kernel,
            mode,
            threads,
            repeats: runs,
            ns_per_run,
            runs_per_s,
            effective_gops,
        },
        checksum,
    })
}

/// Throughput in problems per second for a quick relative comparison;
/// `run_bench` with real timing, returning runs/s.
#[allow(clippy::too_many_arguments)]
pub fn measure_runs_per_s(
    m: usize,
    k: usize,
    n: usize,
    kernel: KernelKind,
    mode: PackingMode,
    threads: usize,
    repeats: usize,
    seed: u64,
    params: &KernelParams,
) -> Result<f64, CliError> {
    run_bench(m, k, n, kernel, mode, threads, repeats, seed, params, true)
        .map(|o| o.record.runs_per_s)
}
