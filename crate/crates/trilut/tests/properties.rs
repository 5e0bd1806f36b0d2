//! Property tests over the packing, precompute, and kernel invariants.

use proptest::prelude::*;

use trilut::kernel::{quantize_activation, transpose_to_token_major, F32Layout};
use trilut::precompute::{precompute_topological_rows, precompute_vanilla_rows};
use trilut::types::{pow3, ActivationView, KernelConfig, TernaryMatrix};
use trilut::{
    make_group_schedule, mpgemm, naive_gemm_int, pack_matrix_tiled, unpack_matrix,
    FeatureMajorActivations, GemmProblem, PackingMode,
};

fn mode_strategy() -> impl Strategy<Value = PackingMode> {
    prop_oneof![
        Just(PackingMode::I2),
        Just(PackingMode::I1),
        Just(PackingMode::Mixed),
    ]
}

/// K values packable under the given mode.
fn k_for_mode(mode: PackingMode) -> BoxedStrategy<usize> {
    match mode {
        PackingMode::I2 => (1usize..=30).prop_map(|x| 4 * x).boxed(),
        PackingMode::I1 => (1usize..=24).prop_map(|x| 5 * x).boxed(),
        PackingMode::Mixed => (4usize..=120)
            .prop_filter("4a+5b solvable", |&k| {
                make_group_schedule(k, PackingMode::Mixed).is_ok()
            })
            .boxed(),
    }
}

fn trits(len: usize) -> impl Strategy<Value = Vec<i8>> {
    proptest::collection::vec(-1i8..=1, len)
}

fn int8s(len: usize) -> impl Strategy<Value = Vec<i8>> {
    proptest::collection::vec(-127i8..=127, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pack_unpack_roundtrip(
        (mode, k, m, data, kt, mt) in mode_strategy()
            .prop_flat_map(|mode| (Just(mode), k_for_mode(mode)))
            .prop_flat_map(|(mode, k)| {
                (Just(mode), Just(k), 1usize..=128)
                    .prop_flat_map(|(mode, k, m)| {
                        (Just(mode), Just(k), Just(m), trits(m * k), 1usize..=4, 1usize..=33)
                    })
            })
    ) {
        let w = TernaryMatrix::new(m, k, data, 1.0).unwrap();
        let p = pack_matrix_tiled(&w, mode, kt, mt).unwrap();
        prop_assert_eq!(unpack_matrix(&p).unwrap(), w);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn payload_bytes_stay_in_mode_range(
        (mode, k, m, data) in mode_strategy()
            .prop_flat_map(|mode| (Just(mode), k_for_mode(mode)))
            .prop_flat_map(|(mode, k)| {
                (Just(mode), Just(k), 1usize..=32)
                    .prop_flat_map(|(mode, k, m)| (Just(mode), Just(k), Just(m), trits(m * k)))
            })
    ) {
        let w = TernaryMatrix::new(m, k, data, 1.0).unwrap();
        let p = pack_matrix_tiled(&w, mode, 2, 8).unwrap();
        let cap = match mode {
            PackingMode::I2 => 80,
            _ => 242,
        };
        prop_assert!(p.payload().iter().all(|&b| b <= cap));
    }

    #[test]
    fn transpose_is_an_involution(
        (k, n, data) in (1usize..=24, 1usize..=24)
            .prop_flat_map(|(k, n)| (Just(k), Just(n), int8s(k * n)))
    ) {
        let scales = vec![1.0f32; n];
        let fm = FeatureMajorActivations { k, n, data: &data, token_scales: &scales };
        let once = transpose_to_token_major(&fm).unwrap();
        // transposing the token-major buffer with swapped axes restores the input
        let back_scales = vec![1.0f32; k];
        let back = transpose_to_token_major(&FeatureMajorActivations {
            k: n,
            n: k,
            data: once.data(),
            token_scales: &back_scales,
        })
        .unwrap();
        prop_assert_eq!(back.data(), &data[..]);
    }

    #[test]
    fn quantize_dequantize_within_half_scale(
        (k, n, data) in (1usize..=16, 1usize..=8).prop_flat_map(|(k, n)| {
            (Just(k), Just(n), proptest::collection::vec(-100.0f32..100.0, k * n))
        })
    ) {
        let v = quantize_activation(&data, k, n, F32Layout::TokenMajor).unwrap();
        for kk in 0..k {
            for token in 0..n {
                let scale = v.token_scales()[token];
                let deq = v.row(kk)[token] as f32 * scale;
                prop_assert!((data[kk * n + token] - deq).abs() <= scale / 2.0 + 1e-4);
            }
        }
    }

    #[test]
    fn mpgemm_equals_oracle(
        (mode, k, m, n, wdata, adata) in mode_strategy()
            .prop_flat_map(|mode| (Just(mode), k_for_mode(mode)))
            .prop_flat_map(|(mode, k)| (Just(mode), Just(k), 1usize..=48, 1usize..=48))
            .prop_flat_map(|(mode, k, m, n)| {
                (Just(mode), Just(k), Just(m), Just(n), trits(m * k), int8s(k * n))
            })
    ) {
        let w = TernaryMatrix::new(m, k, wdata, 1.0).unwrap();
        let a = ActivationView::new(k, n, adata, vec![1.0; n]).unwrap();
        let schedule = make_group_schedule(k, mode).unwrap();
        let cfg = KernelConfig::recommended(&schedule).unwrap();
        let p = pack_matrix_tiled(&w, mode, cfg.k_tile_groups(&schedule), 32).unwrap();
        let got = mpgemm(&GemmProblem { weights: &p, activations: &a, config: cfg }).unwrap();
        let want = naive_gemm_int(&w, &a).unwrap();
        prop_assert_eq!(got.data_i32, want.data_i32);
    }

    #[test]
    fn precompute_is_linear_below_saturation(
        (g, width, a1, a2) in prop_oneof![Just(4usize), Just(5)]
            .prop_flat_map(|g| (Just(g), 1usize..=8))
            .prop_flat_map(|(g, width)| {
                (
                    Just(g),
                    Just(width),
                    proptest::collection::vec(-63i8..=63, g * width),
                    proptest::collection::vec(-63i8..=63, g * width),
                )
            })
    ) {
        let sum: Vec<i8> = a1.iter().zip(&a2).map(|(&x, &y)| x + y).collect();
        let table = |data: &[i8]| {
            let rows: Vec<&[i8]> = data.chunks(width).collect();
            let mut out = vec![0i16; pow3(g as u8) * width];
            precompute_topological_rows(&rows, &mut out);
            out
        };
        let t1 = table(&a1);
        let t2 = table(&a2);
        let ts = table(&sum);
        for i in 0..ts.len() {
            prop_assert_eq!(ts[i], t1[i] + t2[i]);
        }
    }

    #[test]
    fn topological_equals_vanilla_everywhere(
        (g, width, data) in prop_oneof![Just(4usize), Just(5)]
            .prop_flat_map(|g| (Just(g), 1usize..=8))
            .prop_flat_map(|(g, width)| {
                (Just(g), Just(width), int8s(g * width))
            })
    ) {
        let rows: Vec<&[i8]> = data.chunks(width).collect();
        let mut vanilla = vec![0i16; pow3(g as u8) * width];
        let mut topo = vec![0i16; pow3(g as u8) * width];
        precompute_vanilla_rows(&rows, &mut vanilla);
        precompute_topological_rows(&rows, &mut topo);
        prop_assert_eq!(vanilla, topo);
    }
}
