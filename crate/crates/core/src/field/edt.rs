//! Exact Euclidean distance transform by separable lower-envelope passes
//! (Felzenszwalb & Huttenlocher).

use rayon::prelude::*;

use super::grid::{BinaryGrid, Lattice, SignedDistanceGrid};

const FAR: f64 = 1e20;

/// Outcome of [`distance_transform`] on degenerate occupancies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceFlag {
    Regular,
    /// No voxel is set; every value is a positive sentinel.
    AllOutside,
    /// Every voxel is set; every value is a negative sentinel.
    AllInside,
}

/// 1D squared distance transform of sampled function `f` into `out`.
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s =
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

fn pass_along(values: &mut [f64], n: usize, stride: usize, outer: impl Fn(usize) -> usize + Sync) {
    let lines: Vec<(usize, Vec<f64>)> = (0..n * n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]),
            |(buf, v, z), line| {
                let base = outer(line);
                let f: Vec<f64> = (0..n).map(|q| values[base + q * stride]).collect();
                dt1d(&f, buf, v, z);
                (base, buf.clone())
            },
        )
        .collect();
    for (base, line) in lines {
        for (q, val) in line.into_iter().enumerate() {
            values[base + q * stride] = val;
        }
    }
}

/// Squared distance (in voxel units²) from each cell center to the nearest set cell.
/// Cells are `FAR`-valued when no cell is set.
pub(crate) fn squared_edt(bits: &[bool], n: usize) -> Vec<f64> {
    let mut values: Vec<f64> = bits.iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    // x lines are contiguous.
    values.par_chunks_mut(n).for_each_init(
        || (vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]),
        |(buf, v, z), line| {
            let f = line.to_vec();
            dt1d(&f, buf, v, z);
            line.copy_from_slice(buf);
        },
    );
    pass_along(&mut values, n, n, |line| {
        let (i, k) = (line % n, line / n);
        i + n * n * k
    });
    pass_along(&mut values, n, n * n, |line| line);
    values
}

/// Signed Euclidean distance transform: negative inside (distance to the
/// nearest unset cell center), positive outside (distance to the nearest set
/// cell center), in world units.
pub fn distance_transform(occ: &BinaryGrid) -> (SignedDistanceGrid, DistanceFlag) {
    let lattice: Lattice = occ.lattice;
    let n = lattice.resolution;
    let sentinel = lattice.diagonal() + lattice.spacing;
    let set = occ.count();
    if set == 0 {
        let values = vec![sentinel; lattice.len()];
        return (
            SignedDistanceGrid { lattice, values },
            DistanceFlag::AllOutside,
        );
    }
    if set == lattice.len() {
        let values = vec![-sentinel; lattice.len()];
        return (
            SignedDistanceGrid { lattice, values },
            DistanceFlag::AllInside,
        );
    }
    let to_inside = squared_edt(&occ.bits, n);
    let complement: Vec<bool> = occ.bits.iter().map(|b| !b).collect();
    let to_outside = squared_edt(&complement, n);
    let h = lattice.spacing;
    let values = occ
        .bits
        .iter()
        .enumerate()
        .map(|(i, &inside)| {
            if inside {
                -to_outside[i].sqrt() * h
            } else {
                to_inside[i].sqrt() * h
            }
        })
        .collect();
    (
        SignedDistanceGrid { lattice, values },
        DistanceFlag::Regular,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;

    fn brute_sq(bits: &[bool], n: usize, idx: usize) -> f64 {
        let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
        let mut best = FAR;
        for (o, &b) in bits.iter().enumerate() {
            if b {
                let (a, bb, c) = (o % n, (o / n) % n, o / (n * n));
                let d = (a as f64 - i as f64).powi(2)
                    + (bb as f64 - j as f64).powi(2)
                    + (c as f64 - k as f64).powi(2);
                best = best.min(d);
            }
        }
        best
    }

    #[test]
    fn squared_edt_matches_brute_force() {
        let n = 9;
        let mut bits = vec![false; n * n * n];
        for &idx in &[4, 100, 371, 500, 728] {
            bits[idx] = true;
        }
        let d = squared_edt(&bits, n);
        for (idx, &v) in d.iter().enumerate() {
            assert_eq!(v, brute_sq(&bits, n, idx), "cell {idx}");
        }
    }

    #[test]
    fn single_voxel_neighbor_is_one_spacing() {
        let l = Lattice::normalized(16);
        let mut g = BinaryGrid::empty(l);
        let c = l.index(8, 8, 8);
        g.bits[c] = true;
        let (sdf, flag) = distance_transform(&g);
        assert_eq!(flag, DistanceFlag::Regular);
        assert!((sdf.get(9, 8, 8) - l.spacing).abs() < 1e-15);
        assert!(sdf.get(8, 8, 8) < 0.0);
    }

    #[test]
    fn empty_and_full_are_flagged() {
        let l = Lattice::normalized(16);
        let (sdf, flag) = distance_transform(&BinaryGrid::empty(l));
        assert_eq!(flag, DistanceFlag::AllOutside);
        assert!(sdf.min_value() > 0.0);
        let full = BinaryGrid {
            lattice: l,
            bits: vec![true; l.len()],
        };
        let (sdf, flag) = distance_transform(&full);
        assert_eq!(flag, DistanceFlag::AllInside);
        assert!(sdf.max_value() < 0.0);
    }

    #[test]
    fn ball_center_depth() {
        // Voxel ball of radius 10 around the lattice center.
        let l = Lattice::normalized(32);
        let c = [16i64, 16, 16];
        let g = BinaryGrid {
            lattice: l,
            bits: (0..l.len())
                .map(|idx| {
                    let [i, j, k] = l.coords(idx);
                    let d2 = (i as i64 - c[0]).pow(2)
                        + (j as i64 - c[1]).pow(2)
                        + (k as i64 - c[2]).pow(2);
                    d2 <= 100
                })
                .collect(),
        };
        let (sdf, _) = distance_transform(&g);
        let center = sdf.get(16, 16, 16);
        assert!(
            (center + 10.0 * l.spacing).abs() <= l.spacing,
            "center {center}"
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force_and_occupancy(bits in proptest::collection::vec(proptest::bool::weighted(0.2), 7 * 7 * 7)) {
            let n = 7;
            let d = squared_edt(&bits, n);
            for (idx, &v) in d.iter().enumerate() {
                proptest::prop_assert_eq!(v, brute_sq(&bits, n, idx));
            }
            let l = Lattice::new(n, Vec3::zeros(), 0.1).unwrap();
            let (sdf, flag) = distance_transform(&BinaryGrid { lattice: l, bits: bits.clone() });
            if flag == DistanceFlag::Regular {
                for (v, &b) in sdf.values.iter().zip(&bits) {
                    proptest::prop_assert_eq!(*v < 0.0, b);
                    proptest::prop_assert!(v.abs() >= l.spacing - 1e-15);
                }
            }
        }
    }
}
