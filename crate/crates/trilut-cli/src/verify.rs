//! Correctness verification driver: runs the vector-LUT kernel (and the
//! scalar-LUT baseline) against the naive INT32 oracle and reports the
//! first differing coordinate on any mismatch.

use std::path::Path;

use trilut::{
    make_group_schedule, mpgemm, naive_gemm_int, scalar_lut_gemm, unpack_matrix, GemmProblem,
    PackingMode, TernaryMatrix,
};

use crate::{gen, weight_file, CliError, KernelParams};

/// Shapes exercised when no `--shape` is given, spanning the bundled model
/// fixtures.
pub const DEFAULT_SHAPES: [(usize, usize); 3] = [(320, 3200), (128, 8640), (4096, 4096)];
pub const DEFAULT_TOKEN_COUNTS: [usize; 5] = [1, 8, 32, 100, 512];

#[derive(Debug, Default)]
pub struct VerifyReport {
    pub lines: Vec<String>,
    pub cases: usize,
    pub failures: usize,
}

impl VerifyReport {
    fn ok(&mut self, msg: String) {
        self.cases += 1;
        self.lines.push(format!("ok       {msg}"));
    }

    fn fail(&mut self, msg: String) {
        self.cases += 1;
        self.failures += 1;
        self.lines.push(format!("MISMATCH {msg}"));
    }

    fn skip(&mut self, msg: String) {
        self.lines.push(format!("skip     {msg}"));
    }

    pub fn merge(&mut self, other: VerifyReport) {
        self.cases += other.cases;
        self.failures += other.failures;
        self.lines.extend(other.lines);
    }
}

fn first_mismatch(got: &[i32], want: &[i32], n: usize) -> Option<(usize, usize, i32, i32)> {
    got.iter()
        .zip(want)
        .position(|(g, w)| g != w)
        .map(|pos| (pos / n.max(1), pos % n.max(1), got[pos], want[pos]))
}

fn check(
    report: &mut VerifyReport,
    label: String,
    got: &[i32],
    want: &[i32],
    n: usize,
) {
    match first_mismatch(got, want, n) {
        None => report.ok(label),
        Some((row, col, g, w)) => {
            report.fail(format!("{label}: first diff at ({row},{col}) got {g} want {w}"))
        }
    }
}

/// Verifies one (shape, mode) combination across the requested thread
/// counts.
pub fn verify_shape(
    m: usize,
    k: usize,
    n: usize,
    mode: PackingMode,
    threads_list: &[usize],
    seed: u64,
    params: &KernelParams,
) -> Result<VerifyReport, CliError> {
    let mut report = VerifyReport::default();
    if n == 0 {
        report.ok(format!("{m}x{k}x0 mode={mode}: empty token block, no-op"));
        return Ok(report);
    }
    let schedule = make_group_schedule(k, mode)?;
    let mut cfg = params.config_for(&schedule)?;

    let mut rng = gen::rng_for(gen::problem_seed(seed, m, k, n, mode));
    let weights = gen::random_ternary(m, k, 1.0, &mut rng);
    let acts = gen::random_activations_i8(k, n, &mut rng);
    let packed = trilut::pack_matrix(&weights, mode, &cfg)?;
    let oracle = naive_gemm_int(&weights, &acts)?;

    for &threads in threads_list {
        cfg.threads = threads;
        let got = mpgemm(&GemmProblem {
            weights: &packed,
            activations: &acts,
            config: cfg,
        })?;
        check(
            &mut report,
            format!("{m}x{k}x{n} mode={mode} kernel=vector_lut threads={threads}"),
            &got.data_i32,
            &oracle.data_i32,
            n,
        );
    }

    let scalar = scalar_lut_gemm(&packed, &acts)?;
    check(
        &mut report,
        format!("{m}x{k}x{n} mode={mode} kernel=scalar_lut"),
        &scalar.data_i32,
        &oracle.data_i32,
        n,
    );
    Ok(report)
}

/// Runs the shape matrix; `(K, mode)` pairs the mode cannot pack are
/// reported as skips.
pub fn verify_suite(
    shapes: &[(usize, usize, usize)],
    modes: &[PackingMode],
    threads_list: &[usize],
    seed: u64,
    params: &KernelParams,
) -> Result<VerifyReport, CliError> {
    let mut report = VerifyReport::default();
    for &(m, k, n) in shapes {
        for &mode in modes {
            if make_group_schedule(k, mode).is_err() {
                report.skip(format!("{m}x{k}x{n} mode={mode}: K not packable"));
                continue;
            }
            report.merge(verify_shape(m, k, n, mode, threads_list, seed, params)?);
        }
    }
    Ok(report)
}

/// Verifies a packed-weight file against ground-truth trits.
///
/// With `against`, the raw trit file (M*K signed bytes) is the truth, so
/// payload corruption shows up as a kernel/oracle mismatch. Without it the
/// file's own unpacked trits are used, which checks internal consistency of
/// the kernels only.
pub fn verify_file(
    path: &Path,
    against: Option<&Path>,
    n: usize,
    threads_list: &[usize],
    seed: u64,
    params: &KernelParams,
) -> Result<VerifyReport, CliError> {
    let (packed, mode) = weight_file::load(path)?;
    let truth = match against {
        Some(raw_path) => {
            let raw = std::fs::read(raw_path)?;
            let data: Vec<i8> = raw.iter().map(|&b| b as i8).collect();
            TernaryMatrix::new(packed.m(), packed.k(), data, packed.weight_scale())?
        }
        None => unpack_matrix(&packed)?,
    };

    let mut report = VerifyReport::default();
    if n == 0 {
        report.ok(format!(
            "{}x{}x0 mode={mode}: empty token block, no-op",
            packed.m(),
            packed.k()
        ));
        return Ok(report);
    }
    let schedule = packed.schedule().clone();
    let mut cfg = params.config_for(&schedule)?;
    // the file fixes the packed K-tile; keep the config consistent with it
    cfg.k_tile = packed.k_tile_groups() * schedule.g_max() as usize;

    let mut rng = gen::rng_for(gen::problem_seed(seed, packed.m(), packed.k(), n, mode));
    let acts = gen::random_activations_i8(packed.k(), n, &mut rng);
    let oracle = naive_gemm_int(&truth, &acts)?;

    for &threads in threads_list {
        cfg.threads = threads;
        let got = mpgemm(&GemmProblem {
            weights: &packed,
            activations: &acts,
            config: cfg,
        })?;
        check(
            &mut report,
            format!(
                "{}x{}x{n} mode={mode} kernel=vector_lut threads={threads} file={}",
                packed.m(),
                packed.k(),
                path.display()
            ),
            &got.data_i32,
            &oracle.data_i32,
            n,
        );
    }
    let scalar = scalar_lut_gemm(&packed, &acts)?;
    check(
        &mut report,
        format!(
            "{}x{}x{n} mode={mode} kernel=scalar_lut file={}",
            packed.m(),
            packed.k(),
            path.display()
        ),
        &scalar.data_i32,
        &oracle.data_i32,
        n,
    );
    Ok(report)
}
