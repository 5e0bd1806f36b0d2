//! Quantized-linear-layer demo: FP32 activations are quantized per token,
//! multiplied through the integer kernel, rescaled, and compared against a
//! plain FP32 GeMM over the dequantized weights. Weights are lossless, so
//! the whole gap is activation rounding, bounded per element by
//! `weight_scale * (scale_n / 2) * sum_k |W[m,k]|`.

use trilut::kernel::{apply_scales, quantize_activation, F32Layout};
use trilut::{
    make_group_schedule, mpgemm, naive_gemm_f32, GemmProblem, PackingMode, TernaryMatrix,
};

use crate::{gen, CliError, KernelParams};

#[derive(Debug, Clone, Copy)]
pub struct DemoReport {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Largest per-element analytic rounding bound.
    pub max_bound: f64,
    pub within_bound: bool,
}

/// Runs the layer over explicit weights and token-major FP32 activations.
pub fn demo_layer_with(
    weights: &TernaryMatrix,
    acts_f32: &[f32],
    n: usize,
    mode: PackingMode,
    params: &KernelParams,
) -> Result<DemoReport, CliError> {
    let (m, k) = (weights.m(), weights.k());
    let schedule = make_group_schedule(k, mode)?;
    let cfg = params.config_for(&schedule)?;

    let quant = quantize_activation(acts_f32, k, n, F32Layout::TokenMajor)?;
    let packed = trilut::pack_matrix(weights, mode, &cfg)?;
    let mut out = mpgemm(&GemmProblem {
        weights: &packed,
        activations: &quant,
        config: cfg,
    })?;
    apply_scales(&mut out, weights.weight_scale(), quant.token_scales())?;
    let got = out.data_f32.as_deref().expect("scales applied");

    let w_f32: Vec<f32> = (0..m * k)
        .map(|i| weights.row(i / k)[i % k] as f32 * weights.weight_scale())
        .collect();
    let want = naive_gemm_f32(&w_f32, m, k, acts_f32, n)?;

    let mut max_abs_err = 0f64;
    let mut max_ref = 0f64;
    let mut max_bound = 0f64;
    let mut within_bound = true;
    for row in 0..m {
        let row_l1: f64 = weights.row(row).iter().map(|&t| t.abs() as f64).sum();
        for col in 0..n {
            let diff = (got[row * n + col] as f64 - want[row * n + col] as f64).abs();
            let reference = (want[row * n + col] as f64).abs();
            let bound =
                weights.weight_scale() as f64 * quant.token_scales()[col] as f64 / 2.0 * row_l1;
            max_abs_err = max_abs_err.max(diff);
            max_ref = max_ref.max(reference);
            max_bound = max_bound.max(bound);
            // small slack for FP32 summation order differences
            if diff > bound * 1.001 + 1e-4 {
                within_bound = false;
            }
        }
    }
    let max_rel_err = if max_ref > 0.0 {
        max_abs_err / max_ref
    } else {
        0.0
    };
    Ok(DemoReport {
        m,
        k,
        n,
        max_abs_err,
        max_rel_err,
        max_bound,
        within_bound,
    })
}

/// Seeded end-to-end demo: random ternary weights and standard-normal
/// activations.
pub fn demo_layer(
    m: usize,
    k: usize,
    n: usize,
    mode: PackingMode,
    seed: u64,
    params: &KernelParams,
) -> Result<DemoReport, CliError> {
    let mut rng = gen::rng_for(gen::problem_seed(seed, m, k, n, mode));
    let weights = gen::random_ternary(m, k, 0.02, &mut rng);
    let acts = gen::random_activations_f32(k, n, &mut rng);
    demo_layer_with(&weights, &acts, n, mode, params)
}
