//! Lossless byte packing of ternary weights.
//!
//! A group of g trits becomes one byte: `sum_r (trit[r] + 1) * 3^r`. With
//! g=4 that is 2.00 bits per weight (indices 0..=80), with g=5 it is 1.60
//! bits per weight (indices 0..=242). Mixed schedules combine both, using as
//! many g=5 groups as possible and filling the remainder with g=4, which
//! covers every K expressible as 4a+5b and stays within 8(K+4)/(5K) bits.
//!
//! `pack_matrix` additionally permutes the bytes into (K-tile, M-tile)
//! blocks so the kernel streams them in its natural loop order.

use crate::error::{Error, Result};
use crate::types::{
    build_tile_plan, pow3, zero_index, GroupSchedule, KernelConfig, PackedWeights, TernaryMatrix,
    Trit, DEFAULT_M_TILE,
};

/// Weight packing mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PackingMode {
    /// All groups of 4 trits: 2.00 bits per weight, requires 4 | K.
    I2,
    /// All groups of 5 trits: 1.60 bits per weight, requires 5 | K.
    I1,
    /// Greatest number of g=5 groups, remainder in g=4; requires K = 4a+5b.
    Mixed,
}

impl PackingMode {
    pub const ALL: [PackingMode; 3] = [PackingMode::I2, PackingMode::I1, PackingMode::Mixed];

    /// Stable byte code used by the on-disk format.
    pub fn code(self) -> u8 {
        match self {
            PackingMode::I2 => 0,
            PackingMode::I1 => 1,
            PackingMode::Mixed => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(PackingMode::I2),
            1 => Ok(PackingMode::I1),
            2 => Ok(PackingMode::Mixed),
            other => Err(Error::InvalidArgument(format!(
                "unknown packing mode code {other}"
            ))),
        }
    }
}

impl std::fmt::Display for PackingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PackingMode::I2 => write!(f, "i2"),
            PackingMode::I1 => write!(f, "i1"),
            PackingMode::Mixed => write!(f, "mixed"),
        }
    }
}

impl std::str::FromStr for PackingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i2" => Ok(PackingMode::I2),
            "i1" => Ok(PackingMode::I1),
            "mixed" => Ok(PackingMode::Mixed),
            other => Err(Error::InvalidArgument(format!(
                "unknown packing mode '{other}' (expected i1, i2, or mixed)"
            ))),
        }
    }
}

/// Builds the per-row group schedule for K features under `mode`.
///
/// Mixed mode maximizes the number of g=5 groups and places them before the
/// g=4 groups.
pub fn make_group_schedule(k: usize, mode: PackingMode) -> Result<GroupSchedule> {
    match mode {
        PackingMode::I2 => {
            if k < 4 || !k.is_multiple_of(4) {
                return Err(Error::ModeMismatch {
                    mode,
                    divisor: 4,
                    k,
                });
            }
            GroupSchedule::new(vec![4; k / 4], k)
        }
        PackingMode::I1 => {
            if k < 5 || !k.is_multiple_of(5) {
                return Err(Error::ModeMismatch {
                    mode,
                    divisor: 5,
                    k,
                });
            }
            GroupSchedule::new(vec![5; k / 5], k)
        }
        PackingMode::Mixed => {
            // Largest b with 4a + 5b = k; only the top few b need checking
            // since b is fixed mod 4.
            let mut best: Option<(usize, usize)> = None;
            let mut b = k / 5;
            loop {
                if (k - 5 * b).is_multiple_of(4) {
                    best = Some(((k - 5 * b) / 4, b));
                    break;
                }
                if b == 0 {
                    break;
                }
                b -= 1;
            }
            let (a, b) = best.ok_or(Error::UnrepresentableK(k))?;
            if a + b == 0 {
                return Err(Error::UnrepresentableK(k));
            }
            let mut groups = vec![5u8; b];
            groups.extend(std::iter::repeat_n(4u8, a));
            GroupSchedule::new(groups, k)
        }
    }
}

/// Packs one group of trits into its base-3 byte index.
pub fn pack_group(trits: &[i8]) -> Result<u8> {
    let g = trits.len();
    if !(g == 4 || g == 5) {
        return Err(Error::InvalidArgument(format!(
            "group size {g} not in {{4, 5}}"
        )));
    }
    let mut index = 0u16;
    let mut base = 1u16;
    for &t in trits {
        if !(-1..=1).contains(&t) {
            return Err(Error::InvalidTrit(t));
        }
        index += (t + 1) as u16 * base;
        base *= 3;
    }
    Ok(index as u8)
}

/// Inverse of [`pack_group`]: recovers the g trits of a byte index,
/// least significant digit first.
pub fn unpack_index(index: u8, g: u8) -> Result<Vec<Trit>> {
    let limit = pow3(g);
    if (index as usize) >= limit {
        return Err(Error::IndexOutOfRange {
            index,
            g,
            max: (limit - 1) as u8,
        });
    }
    let mut out = Vec::with_capacity(g as usize);
    let mut v = index as usize;
    for _ in 0..g {
        out.push(Trit::new((v % 3) as i8 - 1).expect("digit in range"));
        v /= 3;
    }
    Ok(out)
}

#[inline]
fn unpack_into(index: u8, g: u8, out: &mut [i8]) {
    let mut v = index as usize;
    for slot in out.iter_mut().take(g as usize) {
        *slot = (v % 3) as i8 - 1;
        v /= 3;
    }
}

/// Bits per weight of a schedule: 8 bits per group byte over the features it
/// covers. 1.60 for all-g=5, 2.00 for all-g=4.
pub fn bits_per_weight(schedule: &GroupSchedule) -> f64 {
    8.0 * schedule.len() as f64 / schedule.covered_k() as f64
}

/// Packs a ternary matrix into the tile-permuted byte layout, using the
/// default 32-row M-tile and the K-tile implied by `cfg`.
pub fn pack_matrix(
    w: &TernaryMatrix,
    mode: PackingMode,
    cfg: &KernelConfig,
) -> Result<PackedWeights> {
    let schedule = make_group_schedule(w.k(), mode)?;
    let k_tile_groups = cfg.k_tile_groups(&schedule);
    pack_matrix_tiled(w, mode, k_tile_groups, DEFAULT_M_TILE)
}

/// [`pack_matrix`] with explicit tile shape, for exercising tile boundaries.
pub fn pack_matrix_tiled(
    w: &TernaryMatrix,
    mode: PackingMode,
    k_tile_groups: usize,
    m_tile: usize,
) -> Result<PackedWeights> {
    if k_tile_groups == 0 || m_tile == 0 {
        return Err(Error::InvalidArgument(
            "k_tile_groups and m_tile must be >= 1".into(),
        ));
    }
    let schedule = make_group_schedule(w.k(), mode)?;
    let num_groups = schedule.len();
    let m = w.m();

    // Row-major index matrix first, then the tile permutation.
    let mut idx = vec![0u8; m * num_groups];
    for row in 0..m {
        let trits = w.row(row);
        let mut k0 = 0usize;
        for (gi, &g) in schedule.groups().iter().enumerate() {
            let g = g as usize;
            idx[row * num_groups + gi] = pack_group(&trits[k0..k0 + g])?;
            k0 += g;
        }
    }

    let num_m_tiles = m.div_ceil(m_tile);
    let plan = build_tile_plan(&schedule, k_tile_groups, m_tile, num_m_tiles);
    let mut payload = vec![0u8; num_groups * m_tile * num_m_tiles];
    for tile in &plan {
        let pad = zero_index(tile.g);
        for mt in 0..num_m_tiles {
            let base = tile.payload_base + mt * tile.groups * m_tile;
            for j in 0..tile.groups {
                let col = tile.start_group + j;
                for r in 0..m_tile {
                    let row = mt * m_tile + r;
                    payload[base + j * m_tile + r] = if row < m {
                        idx[row * num_groups + col]
                    } else {
                        pad
                    };
                }
            }
        }
    }

    PackedWeights::from_parts(
        m,
        w.k(),
        schedule,
        k_tile_groups,
        m_tile,
        payload,
        w.weight_scale(),
    )
}

/// Exact inverse of [`pack_matrix`], discarding padding.
pub fn unpack_matrix(p: &PackedWeights) -> Result<TernaryMatrix> {
    let idx = p.index_matrix();
    let num_groups = p.schedule().len();
    let mut data = vec![0i8; p.m() * p.k()];
    for row in 0..p.m() {
        let mut k0 = 0usize;
        for (gi, &g) in p.schedule().groups().iter().enumerate() {
            let byte = idx[row * num_groups + gi];
            if (byte as usize) >= pow3(g) {
                return Err(Error::CorruptPayload {
                    byte,
                    g,
                    offset: row * num_groups + gi,
                });
            }
            unpack_into(byte, g, &mut data[row * p.k() + k0..]);
            k0 += g as usize;
        }
    }
    TernaryMatrix::new(p.m(), p.k(), data, p.weight_scale())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg16() -> KernelConfig {
        KernelConfig {
            k_tile: 16,
            n_tile: 32,
            block_b: 4,
            threads: 1,
            l1_bytes: 48 * 1024,
            simd_bits: 256,
        }
    }

    #[test]
    fn schedule_i1_on_multiple_of_five() {
        let s = make_group_schedule(20, PackingMode::I1).unwrap();
        assert_eq!(s.groups(), &[5, 5, 5, 5]);
        assert_eq!(bits_per_weight(&s), 1.60);
    }

    #[test]
    fn schedule_mixed_maximizes_g5() {
        // 4096 = 4*4 + 5*816, so 816 groups of 5 then 4 groups of 4.
        let s = make_group_schedule(4096, PackingMode::Mixed).unwrap();
        let fives = s.groups().iter().filter(|&&g| g == 5).count();
        let fours = s.groups().iter().filter(|&&g| g == 4).count();
        assert_eq!((fives, fours), (816, 4));
        assert!(s.groups()[..816].iter().all(|&g| g == 5));
        assert!(s.groups()[816..].iter().all(|&g| g == 4));
        // 8 * 820 / 4096 = 1.6015625 exactly
        assert_eq!(bits_per_weight(&s), 1.6015625);
    }

    #[test]
    fn schedule_unrepresentable_k() {
        for k in [1usize, 2, 3, 6, 7, 11] {
            assert_eq!(
                make_group_schedule(k, PackingMode::Mixed),
                Err(Error::UnrepresentableK(k)),
                "K={k}"
            );
        }
        assert!(make_group_schedule(7, PackingMode::Mixed).is_err());
    }

    #[test]
    fn schedule_mode_mismatch() {
        assert!(matches!(
            make_group_schedule(3201, PackingMode::I2),
            Err(Error::ModeMismatch { divisor: 4, .. })
        ));
        assert!(matches!(
            make_group_schedule(12, PackingMode::I1),
            Err(Error::ModeMismatch { divisor: 5, .. })
        ));
    }

    #[test]
    fn mixed_bpw_below_1_7_for_packable_k() {
        for k in 100..=1000usize {
            if let Ok(s) = make_group_schedule(k, PackingMode::Mixed) {
                let bpw = bits_per_weight(&s);
                assert!(bpw < 1.7, "K={k} gave bpw {bpw}");
                assert!(bpw <= 2.0);
            }
        }
    }

    #[test]
    fn pack_group_known_values() {
        assert_eq!(pack_group(&[0, 0, 0, 0]).unwrap(), 40);
        assert_eq!(pack_group(&[1, 1, 1, 1]).unwrap(), 80);
        // 2*1 + 1*3 + 2*9 + 0*27 = 23
        assert_eq!(pack_group(&[1, 0, 1, -1]).unwrap(), 23);
        assert_eq!(pack_group(&[0, 0, 0, 0, 0]).unwrap(), 121);
        assert_eq!(pack_group(&[1, 1, 1, 1, 1]).unwrap(), 242);
        assert_eq!(pack_group(&[2, 0, 0, 0]), Err(Error::InvalidTrit(2)));
        assert!(pack_group(&[0, 0, 0]).is_err());
    }

    #[test]
    fn unpack_index_known_values() {
        let vals = |v: Vec<Trit>| v.iter().map(|t| t.value()).collect::<Vec<_>>();
        assert_eq!(vals(unpack_index(40, 4).unwrap()), vec![0, 0, 0, 0]);
        assert_eq!(vals(unpack_index(0, 5).unwrap()), vec![-1, -1, -1, -1, -1]);
        assert_eq!(vals(unpack_index(23, 4).unwrap()), vec![1, 0, 1, -1]);
        assert!(matches!(
            unpack_index(81, 4),
            Err(Error::IndexOutOfRange { index: 81, g: 4, .. })
        ));
    }

    #[test]
    fn pack_unpack_bijection_all_indices() {
        for g in [4u8, 5] {
            for index in 0..pow3(g) as u8 {
                let trits: Vec<i8> = unpack_index(index, g)
                    .unwrap()
                    .iter()
                    .map(|t| t.value())
                    .collect();
                assert_eq!(pack_group(&trits).unwrap(), index);
            }
        }
    }

    #[test]
    fn payload_byte_caps_per_mode() {
        // I1 indices never exceed 242, I2 never exceed 80.
        for g in [4u8, 5] {
            let max = pow3(g) as u8 - 1;
            assert_eq!(pack_group(&vec![1i8; g as usize]).unwrap(), max);
        }
    }

    #[test]
    fn pack_all_zero_matrix_yields_zero_indices() {
        let w = TernaryMatrix::new(3, 8, vec![0; 24], 1.0).unwrap();
        let p = pack_matrix(&w, PackingMode::I2, &cfg16()).unwrap();
        assert!(p.payload().iter().all(|&b| b == 40));
    }

    #[test]
    fn payload_length_for_table_shape() {
        // 128x8640 in I2: 2160 groups per row, one byte each, M-tile exact.
        let w = TernaryMatrix::new(128, 8640, vec![0; 128 * 8640], 1.0).unwrap();
        let p = pack_matrix(&w, PackingMode::I2, &cfg16()).unwrap();
        assert_eq!(p.payload().len(), 128 * 2160);
        assert_eq!(p.payload().len(), 276_480);
    }

    #[test]
    fn roundtrip_all_plus_one() {
        let w = TernaryMatrix::new(5, 20, vec![1; 100], 0.75).unwrap();
        for mode in PackingMode::ALL {
            let p = pack_matrix(&w, mode, &cfg16()).unwrap();
            assert_eq!(unpack_matrix(&p).unwrap(), w);
        }
    }

    #[test]
    fn corrupt_payload_detected() {
        let w = TernaryMatrix::new(2, 10, vec![0; 20], 1.0).unwrap();
        let p = pack_matrix(&w, PackingMode::I1, &cfg16()).unwrap();
        let mut payload = p.payload().to_vec();
        payload[0] = 243; // 3^5
        let bad = PackedWeights::from_parts(
            p.m(),
            p.k(),
            p.schedule().clone(),
            p.k_tile_groups(),
            p.m_tile(),
            payload,
            p.weight_scale(),
        );
        assert!(matches!(
            bad,
            Err(Error::CorruptPayload { byte: 243, g: 5, .. })
        ));
    }

    #[test]
    fn packing_is_identical_for_any_kernel_config_with_same_tiling() {
        let data: Vec<i8> = (0..6 * 20).map(|i| ((i * 7 + 3) % 3) as i8 - 1).collect();
        let w = TernaryMatrix::new(6, 20, data, 1.0).unwrap();
        let a = pack_matrix_tiled(&w, PackingMode::Mixed, 2, 4).unwrap();
        let b = pack_matrix_tiled(&w, PackingMode::Mixed, 2, 4).unwrap();
        assert_eq!(a.payload(), b.payload());
    }
}
