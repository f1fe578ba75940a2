//! Dense cubic lattices carrying signed distances or occupancy bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Cells added on every side of the normalized bounding box.
pub const GRID_MARGIN_CELLS: usize = 3;

/// A cubic lattice of `resolution³` cell centers. `origin` is the world
/// position of cell `(0, 0, 0)`; linear indices run x-fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub resolution: usize,
    pub origin: [f64; 3],
    pub spacing: f64,
}

impl Lattice {
    pub fn new(resolution: usize, origin: Vec3, spacing: f64) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidParameter(
                "lattice resolution must be positive".into(),
            ));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lattice spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            resolution,
            origin: origin.into(),
            spacing,
        })
    }

    /// Lattice covering the normalized box `[-0.5, 0.5]³` with a
    /// [`GRID_MARGIN_CELLS`] margin of cell centers on every side.
    pub fn normalized(resolution: usize) -> Self {
        assert!(
            resolution > 2 * GRID_MARGIN_CELLS + 1,
            "resolution {resolution} too small"
        );
        let m = GRID_MARGIN_CELLS as f64;
        let spacing = 1.0 / (resolution as f64 - 1.0 - 2.0 * m);
        let o = -0.5 - m * spacing;
        Self {
            resolution,
            origin: [o, o, o],
            spacing,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.resolution * self.resolution * self.resolution
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.resolution;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    #[inline]
    pub fn origin(&self) -> Vec3 {
        Vec3::from(self.origin)
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
            self.origin[2] + k as f64 * self.spacing,
        )
    }

    #[inline]
    pub fn position_of(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.position(i, j, k)
    }

    /// Continuous lattice coordinates of a world point.
    #[inline]
    pub fn to_grid(&self, p: &Vec3) -> Vec3 {
        (p - self.origin()) / self.spacing
    }

    /// Index of the cell whose center is nearest to `p`, if inside the lattice.
    pub fn nearest_cell(&self, p: &Vec3) -> Option<[usize; 3]> {
        let g = self.to_grid(p);
        let n = self.resolution as f64;
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = g[a].round();
            if r < 0.0 || r >= n {
                return None;
            }
            out[a] = r as usize;
        }
        Some(out)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    /// World-space extent between the first and last cell centers.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let lo = self.origin();
        let hi = lo + Vec3::repeat(self.spacing * (self.resolution as f64 - 1.0));
        (lo, hi)
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    pub fn same_as(&self, other: &Lattice) -> bool {
        self.resolution == other.resolution
            && self.spacing == other.spacing
            && self.origin == other.origin
    }

    /// Neighbor offsets for 6- or 26-connectivity.
    pub fn neighbor_offsets(connectivity: Connectivity) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match connectivity {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Voxel adjacency used by component labeling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "6")]
    Six,
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Self::Six),
            26 => Ok(Self::TwentySix),
            _ => Err(Error::InvalidParameter(format!(
                "connectivity must be 6 or 26, got {n}"
            ))),
        }
    }
}

/// Signed distances at cell centers, negative inside.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceGrid {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl SignedDistanceGrid {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} grid values, got {}",
                lattice.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signed distance grid"));
        }
        Ok(Self { lattice, values })
    }

    /// Samples a field at every cell center.
    pub fn from_fn<F>(lattice: Lattice, f: F) -> Self
    where
        F: Fn(&Vec3) -> f64 + Sync,
    {
        use rayon::prelude::*;
        let values = (0..lattice.len())
            .into_par_iter()
            .map(|idx| f(&lattice.position_of(idx)))
            .collect();
        Self { lattice, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.lattice.index(i, j, k)]
    }

    /// Occupancy `{p | f(p) <= tau}`.
    pub fn threshold(&self, tau: f64) -> BinaryGrid {
        BinaryGrid {
            lattice: self.lattice,
            bits: self.values.iter().map(|&v| v <= tau).collect(),
        }
    }

    pub fn inside(&self) -> BinaryGrid {
        self.threshold(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Trilinear interpolation; points outside the lattice are clamped to it.
    pub fn sample(&self, p: &Vec3) -> f64 {
        let n = self.lattice.resolution;
        let g = self.lattice.to_grid(p);
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let x = g[a].clamp(0.0, (n - 1) as f64);
            let i = (x.floor() as usize).min(n.saturating_sub(2));
            base[a] = i;
            frac[a] = x - i as f64;
        }
        if n == 1 {
            return self.values[0];
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if dx == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dy == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dz == 1 { frac[2] } else { 1.0 - frac[2] });
            if w != 0.0 {
                acc += w * self.get(base[0] + dx, base[1] + dy, base[2] + dz);
            }
        }
        acc
    }
}

/// Occupancy bits on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryGrid {
    pub lattice: Lattice,
    pub bits: Vec<bool>,
}

impl BinaryGrid {
    pub fn empty(lattice: Lattice) -> Self {
        Self {
            lattice,
            bits: vec![false; lattice.len()],
        }
    }

    pub fn from_fn<F>(lattice: Lattice, f: F) -> Self
    where
        F: Fn(&Vec3) -> bool + Sync,
    {
        use rayon::prelude::*;
        let bits = (0..lattice.len())
            .into_par_iter()
            .map(|idx| f(&lattice.position_of(idx)))
            .collect();
        Self { lattice, bits }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[self.lattice.index(i, j, k)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.lattice.cell_volume()
    }

    pub fn is_subset_of(&self, other: &BinaryGrid) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn check(&self, other: &BinaryGrid) -> Result<()> {
        if self.lattice.same_as(&other.lattice) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    pub fn and(&self, other: &BinaryGrid) -> Result<BinaryGrid> {
        self.check(other)?;
        Ok(BinaryGrid {
            lattice: self.lattice,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    pub fn or(&self, other: &BinaryGrid) -> Result<BinaryGrid> {
        self.check(other)?;
        Ok(BinaryGrid {
            lattice: self.lattice,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    pub fn and_not(&self, other: &BinaryGrid) -> Result<BinaryGrid> {
        self.check(other)?;
        Ok(BinaryGrid {
            lattice: self.lattice,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && !b)
                .collect(),
        })
    }

    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_lattice_has_margin() {
        let l = Lattice::normalized(64);
        let (lo, hi) = l.bounds();
        for a in 0..3 {
            assert!((lo[a] + 0.5 + 3.0 * l.spacing).abs() < 1e-12);
            assert!((hi[a] - 0.5 - 3.0 * l.spacing).abs() < 1e-12);
        }
    }

    #[test]
    fn index_round_trip() {
        let l = Lattice::normalized(16);
        for idx in [0, 1, 17, 300, l.len() - 1] {
            let [i, j, k] = l.coords(idx);
            assert_eq!(l.index(i, j, k), idx);
        }
    }

    #[test]
    fn trilinear_reproduces_linear_field() {
        let l = Lattice::normalized(16);
        let g = SignedDistanceGrid::from_fn(l, |p| 2.0 * p.x - p.y + 0.5 * p.z);
        let p = Vec3::new(0.123, -0.271, 0.05);
        assert!((g.sample(&p) - (2.0 * p.x - p.y + 0.5 * p.z)).abs() < 1e-12);
    }

    #[test]
    fn set_algebra_rejects_other_lattice() {
        let a = BinaryGrid::empty(Lattice::normalized(16));
        let b = BinaryGrid::empty(Lattice::normalized(17));
        assert!(matches!(a.and(&b), Err(Error::LatticeMismatch)));
    }

    #[test]
    fn connectivity_offsets() {
        assert_eq!(Lattice::neighbor_offsets(Connectivity::Six).len(), 6);
        assert_eq!(Lattice::neighbor_offsets(Connectivity::TwentySix).len(), 26);
        assert!(Connectivity::from_count(8).is_err());
    }
}
