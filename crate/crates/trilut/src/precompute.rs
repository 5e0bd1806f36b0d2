//! Sub-table precompute: turning g activation rows into the 3^g signed-sum
//! rows of one lookup sub-table.
//!
//! Row i of a sub-table is `sum_r sign(i, r) * A[r]` where sign(i, r) is
//! base-3 digit r of i, shifted to {-1, 0, +1}. Two interchangeable builders
//! produce bit-identical tables:
//!
//! - `precompute_vanilla` enumerates every (row, digit) pair and applies the
//!   nonzero signs directly: 2 * 3^(g-1) * g row-vector adds/subs.
//! - `precompute_topological` derives each row from an already-built row
//!   that differs in a single digit, one add or sub per row: 3^g - 1 ops.
//!   The derivation tree is rooted at the all-zero-weight row, which costs
//!   nothing to produce.
//!
//! Both return their row-vector operation count so callers can assert the
//! ratio.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::types::{pow3, zero_index, ActivationView, LutTile, Trit};

/// Base-3 digit r of `index`, shifted to a trit: `(index / 3^r) % 3 - 1`.
#[inline]
pub fn get_sign(index: u8, row_offset: u8, g: u8) -> Trit {
    debug_assert!((index as usize) < pow3(g));
    debug_assert!(row_offset < g);
    let digit = (index as usize / pow3(row_offset)) % 3;
    Trit::new(digit as i8 - 1).expect("digit in range")
}

/// One derivation step: `table[target] = table[source] + sign * A[row_offset]`.
///
/// The root step has `sign == 0` and `source == target`; it denotes the
/// all-zero row and performs no arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopoStep {
    pub target: u8,
    pub source: u8,
    pub row_offset: u8,
    pub sign: i8,
}

fn build_topo_order(g: u8) -> Vec<TopoStep> {
    let total = pow3(g);
    let root = zero_index(g);
    let mut steps = Vec::with_capacity(total);
    let mut seen = vec![false; total];
    let mut queue = std::collections::VecDeque::new();

    steps.push(TopoStep {
        target: root,
        source: root,
        row_offset: 0,
        sign: 0,
    });
    seen[root as usize] = true;
    queue.push_back(root);

    while let Some(v) = queue.pop_front() {
        for r in 0..g {
            let digit = (v as usize / pow3(r)) % 3;
            for delta in [-1i8, 1] {
                let nd = digit as i8 + delta;
                if !(0..=2).contains(&nd) {
                    continue;
                }
                let u = (v as i16 + delta as i16 * pow3(r) as i16) as u8;
                if seen[u as usize] {
                    continue;
                }
                seen[u as usize] = true;
                steps.push(TopoStep {
                    target: u,
                    source: v,
                    row_offset: r,
                    sign: delta,
                });
                queue.push_back(u);
            }
        }
    }
    debug_assert_eq!(steps.len(), total);
    steps
}

/// Derivation order covering all 3^g indices: one zero-cost root and
/// 3^g - 1 single add-or-subtract steps. Cached; g must be 4 or 5.
pub fn topo_order(g: u8) -> &'static [TopoStep] {
    static ORDER4: OnceLock<Vec<TopoStep>> = OnceLock::new();
    static ORDER5: OnceLock<Vec<TopoStep>> = OnceLock::new();
    match g {
        4 => ORDER4.get_or_init(|| build_topo_order(4)),
        5 => ORDER5.get_or_init(|| build_topo_order(5)),
        other => panic!("unsupported group size {other}"),
    }
}

/// Enumerative sub-table build from `rows` (g slices of equal width) into
/// `out` (3^g * width INT16 entries, token axis innermost). Returns the
/// number of row-vector add/sub operations performed.
pub fn precompute_vanilla_rows(rows: &[&[i8]], out: &mut [i16]) -> usize {
    let g = rows.len() as u8;
    let width = rows[0].len();
    debug_assert!(rows.iter().all(|r| r.len() == width));
    let total = pow3(g);
    assert_eq!(out.len(), total * width);

    out.fill(0);
    let mut ops = 0usize;
    for i in 0..total {
        let dst = &mut out[i * width..(i + 1) * width];
        for (r, row) in rows.iter().enumerate() {
            match get_sign(i as u8, r as u8, g).value() {
                1 => {
                    for (d, &a) in dst.iter_mut().zip(*row) {
                        *d += a as i16;
                    }
                    ops += 1;
                }
                -1 => {
                    for (d, &a) in dst.iter_mut().zip(*row) {
                        *d -= a as i16;
                    }
                    ops += 1;
                }
                _ => {}
            }
        }
    }
    ops
}

/// Topological sub-table build; identical output to
/// [`precompute_vanilla_rows`] with 3^g - 1 row-vector operations.
pub fn precompute_topological_rows(rows: &[&[i8]], out: &mut [i16]) -> usize {
    let g = rows.len() as u8;
    let width = rows[0].len();
    debug_assert!(rows.iter().all(|r| r.len() == width));
    let total = pow3(g);
    assert_eq!(out.len(), total * width);

    let mut ops = 0usize;
    for step in topo_order(g) {
        let dst = step.target as usize * width;
        if step.sign == 0 {
            out[dst..dst + width].fill(0);
            continue;
        }
        let src = step.source as usize * width;
        let act = rows[step.row_offset as usize];
        // Source row is always produced before the target; split the buffer
        // to read one row while writing the other.
        let (src_row, dst_row) = if dst > src {
            let (lo, hi) = out.split_at_mut(dst);
            (&lo[src..src + width], &mut hi[..width])
        } else {
            let (lo, hi) = out.split_at_mut(src);
            (&hi[..width], &mut lo[dst..dst + width])
        };
        if step.sign > 0 {
            for ((d, &s), &a) in dst_row.iter_mut().zip(src_row).zip(act) {
                *d = s + a as i16;
            }
        } else {
            for ((d, &s), &a) in dst_row.iter_mut().zip(src_row).zip(act) {
                *d = s - a as i16;
            }
        }
        ops += 1;
    }
    ops
}

fn activation_rows(
    a: &ActivationView,
    k0: usize,
    g: u8,
    n0: usize,
    width: usize,
) -> Vec<&[i8]> {
    (0..g as usize)
        .map(|r| &a.row(k0 + r)[n0..n0 + width])
        .collect()
}

/// [`precompute_vanilla_rows`] over an activation window: g feature rows
/// starting at k0, tokens [n0, n0 + width).
pub fn precompute_vanilla(
    a: &ActivationView,
    k0: usize,
    g: u8,
    n0: usize,
    width: usize,
    out: &mut [i16],
) -> usize {
    precompute_vanilla_rows(&activation_rows(a, k0, g, n0, width), out)
}

/// [`precompute_topological_rows`] over an activation window.
pub fn precompute_topological(
    a: &ActivationView,
    k0: usize,
    g: u8,
    n0: usize,
    width: usize,
    out: &mut [i16],
) -> usize {
    precompute_topological_rows(&activation_rows(a, k0, g, n0, width), out)
}

/// Fills every sub-table of `tile` from the activation window starting at
/// feature k0, tokens [n0, n0 + tile.width()). Returns total row-vector ops.
pub fn fill_lut_tile(tile: &mut LutTile, a: &ActivationView, k0: usize, n0: usize) -> Result<()> {
    let g = tile.g();
    let width = tile.width();
    if n0 + width > a.n() || k0 + tile.groups_in_tile() * g as usize > a.k() {
        return Err(Error::ShapeMismatch(format!(
            "LUT tile window (k0={k0}, n0={n0}) exceeds activation {}x{}",
            a.k(),
            a.n()
        )));
    }
    for j in 0..tile.groups_in_tile() {
        let gk0 = k0 + j * g as usize;
        precompute_topological(a, gk0, g, n0, width, tile.sub_table_mut(j));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::zero_index;

    fn view(k: usize, n: usize, data: Vec<i8>) -> ActivationView {
        ActivationView::new(k, n, data, vec![1.0; n]).unwrap()
    }

    /// Brute-force oracle: walks an odometer over {-1,0,1}^g in base-3
    /// counting order and takes dot products directly. Shares no arithmetic
    /// with get_sign.
    fn oracle_table(rows: &[&[i8]]) -> Vec<i16> {
        let g = rows.len();
        let width = rows[0].len();
        let total = pow3(g as u8);
        let mut out = vec![0i16; total * width];
        let mut w = vec![-1i8; g];
        for i in 0..total {
            for c in 0..width {
                let mut acc = 0i16;
                for r in 0..g {
                    acc += w[r] as i16 * rows[r][c] as i16;
                }
                out[i * width + c] = acc;
            }
            // increment odometer, least significant position first
            for digit in w.iter_mut() {
                if *digit < 1 {
                    *digit += 1;
                    break;
                }
                *digit = -1;
            }
        }
        out
    }

    #[test]
    fn get_sign_known_values() {
        assert_eq!(get_sign(23, 0, 4).value(), 1); // 23 mod 3 == 2
        for r in 0..4 {
            assert_eq!(get_sign(40, r, 4).value(), 0);
        }
        for r in 0..5 {
            assert_eq!(get_sign(0, r, 5).value(), -1);
        }
    }

    #[test]
    fn vanilla_matches_oracle_and_counts_ops() {
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state % 255) as i16 - 127) as i8
        };
        for g in [4usize, 5] {
            let width = 7;
            let data: Vec<i8> = (0..g * width).map(|_| next()).collect();
            let rows: Vec<&[i8]> = data.chunks(width).collect();
            let mut out = vec![0i16; pow3(g as u8) * width];
            let ops = precompute_vanilla_rows(&rows, &mut out);
            assert_eq!(out, oracle_table(&rows));
            assert_eq!(ops, 2 * pow3(g as u8 - 1) * g);
        }
    }

    #[test]
    fn vanilla_zero_index_row_is_zero_and_top_row_is_sum() {
        let a = view(4, 3, vec![1, 2, 3, -4, 5, -6, 7, 8, 9, 10, -11, 12]);
        let mut out = vec![0i16; 81 * 3];
        precompute_vanilla(&a, 0, 4, 0, 3, &mut out);
        let z = zero_index(4) as usize;
        assert_eq!(&out[z * 3..z * 3 + 3], &[0, 0, 0]);
        // index 3^g - 1 is all +1: element-wise sum of the four rows
        let top = (81 - 1) * 3;
        assert_eq!(&out[top..top + 3], &[1 - 4 + 7 + 10, 2 + 5 + 8 - 11, 3 - 6 + 9 + 12]);
    }

    #[test]
    fn topo_order_structure() {
        for g in [4u8, 5] {
            let steps = topo_order(g);
            assert_eq!(steps.len(), pow3(g));
            let mut produced = vec![false; pow3(g)];
            for (i, step) in steps.iter().enumerate() {
                assert!(!produced[step.target as usize], "duplicate target");
                if i == 0 {
                    assert_eq!(step.sign, 0);
                    assert_eq!(step.target, zero_index(g));
                } else {
                    assert!(produced[step.source as usize], "source before target");
                    assert!(step.sign == 1 || step.sign == -1);
                    // single-digit difference of exactly sign at row_offset
                    let diff = step.target as i32 - step.source as i32;
                    assert_eq!(diff, step.sign as i32 * pow3(step.row_offset) as i32);
                    for r in 0..g {
                        let td = (step.target as usize / pow3(r)) % 3;
                        let sd = (step.source as usize / pow3(r)) % 3;
                        if r == step.row_offset {
                            assert_eq!(td as i32 - sd as i32, step.sign as i32);
                        } else {
                            assert_eq!(td, sd);
                        }
                    }
                }
                produced[step.target as usize] = true;
            }
            assert!(produced.iter().all(|&p| p));
        }
    }

    #[test]
    fn topological_equals_vanilla() {
        let mut state = 88172645463325252u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state % 255) as i16 - 127) as i8
        };
        for g in [4usize, 5] {
            for width in [1usize, 3, 32] {
                let data: Vec<i8> = (0..g * width).map(|_| next()).collect();
                let rows: Vec<&[i8]> = data.chunks(width).collect();
                let mut vanilla = vec![0i16; pow3(g as u8) * width];
                let mut topo = vec![0i16; pow3(g as u8) * width];
                let vops = precompute_vanilla_rows(&rows, &mut vanilla);
                let tops = precompute_topological_rows(&rows, &mut topo);
                assert_eq!(vanilla, topo);
                assert_eq!(tops, pow3(g as u8) - 1);
                assert!(tops <= pow3(g as u8));
                assert_eq!(vops, 2 * pow3(g as u8 - 1) * g);
            }
        }
    }

    #[test]
    fn zero_activation_gives_zero_table() {
        let a = view(5, 4, vec![0; 20]);
        let mut out = vec![1i16; 243 * 4];
        precompute_topological(&a, 0, 5, 0, 4, &mut out);
        assert!(out.iter().all(|&v| v == 0));
    }

    #[test]
    fn antisymmetry_of_sub_tables() {
        let a = view(4, 5, (0..20).map(|i| (i * 11 % 19) as i8 - 9).collect());
        let mut out = vec![0i16; 81 * 5];
        precompute_topological(&a, 0, 4, 0, 5, &mut out);
        for i in 0..81 {
            let j = 80 - i;
            for c in 0..5 {
                assert_eq!(out[i * 5 + c], -out[j * 5 + c]);
            }
        }
    }

    #[test]
    fn fill_lut_tile_zero_row_invariant() {
        let data: Vec<i8> = (0..10 * 6).map(|i| (i % 17) as i8 - 8).collect();
        let a = view(10, 6, data);
        let mut tile = LutTile::new(5, 2, 6);
        fill_lut_tile(&mut tile, &a, 0, 0).unwrap();
        let z = zero_index(5) as usize;
        for j in 0..2 {
            let sub = tile.sub_table(j);
            assert!(sub[z * 6..(z + 1) * 6].iter().all(|&v| v == 0));
        }
    }
}
