//! Ternary mixed-precision GeMM built on vector lookup tables.
//!
//! Weights constrained to {-1, 0, +1} are packed losslessly into byte
//! indices (groups of 4 trits for 2.00 bits per weight, groups of 5 for
//! 1.60, or a mix covering almost any K). For a block of N tokens the
//! kernel precomputes, per weight group, a table whose rows are signed sums
//! of activation rows; each row holds one INT16 entry per token, so a
//! single byte lookup yields N results at once. Tables are built and
//! consumed one cache-sized tile at a time, and INT16 partial sums widen
//! into INT32 under a block bound that makes the whole pipeline exact.
//!
//! The `reference` module carries the deliberately simple kernels used to
//! check and benchmark everything else.

pub mod error;
pub mod kernel;
pub mod packing;
pub mod precompute;
pub mod reference;
pub mod types;

pub use error::{Error, Result};
pub use kernel::{
    apply_scales, full_lut_bytes, hierarchical_accumulate, mpgemm, mpgemm_fused_input,
    mpgemm_fused_output, mpgemm_with_stats, quantize_activation, select_tiles,
    transpose_to_token_major, F32Layout, FeatureMajorActivations, GemmProblem, KernelStats,
};
pub use packing::{
    bits_per_weight, make_group_schedule, pack_group, pack_matrix, pack_matrix_tiled, unpack_index,
    unpack_matrix, PackingMode,
};
pub use precompute::{get_sign, precompute_topological, precompute_vanilla, topo_order, TopoStep};
pub use reference::{naive_gemm_f32, naive_gemm_int, scalar_lut_gemm, scalar_lut_gemm_with_stats};
pub use types::{
    block_bound, pow3, zero_index, ActivationView, GroupSchedule, KernelConfig, LutTile,
    OutputMatrix, PackedWeights, TernaryMatrix, Trit,
};
