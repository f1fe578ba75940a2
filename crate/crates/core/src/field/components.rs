//! Connected-component labeling of voxel occupancy.

use super::grid::{BinaryGrid, Connectivity, Lattice};

/// Labels `1..=count` in order of each component's lowest voxel index;
/// `0` is background.
#[derive(Clone, Debug)]
pub struct Components {
    pub labels: Vec<u32>,
    /// `sizes[l - 1]` is the voxel count of label `l`.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// `(label, size)` pairs, largest first; ties keep the lower label.
    pub fn sorted_by_size(&self) -> Vec<(u32, usize)> {
        let mut v: Vec<(u32, usize)> = self
            .sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| (i as u32 + 1, s))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    pub fn largest(&self) -> Option<(u32, usize)> {
        self.sorted_by_size().first().copied()
    }

    pub fn mask(&self, lattice: Lattice, label: u32) -> BinaryGrid {
        BinaryGrid {
            lattice,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

pub fn connected_components(occ: &BinaryGrid, connectivity: Connectivity) -> Components {
    let lattice = occ.lattice;
    let n = lattice.resolution as i64;
    let offsets = Lattice::neighbor_offsets(connectivity);
    let mut labels = vec![0u32; occ.bits.len()];
    let mut sizes = Vec::new();
    let mut queue = Vec::new();
    for seed in 0..occ.bits.len() {
        if !occ.bits[seed] || labels[seed] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[seed] = label;
        queue.clear();
        queue.push(seed);
        let mut size = 0usize;
        while let Some(idx) = queue.pop() {
            size += 1;
            let [i, j, k] = lattice.coords(idx);
            for o in &offsets {
                let (a, b, c) = (i as i64 + o[0], j as i64 + o[1], k as i64 + o[2]);
                if a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n {
                    continue;
                }
                let nb = lattice.index(a as usize, b as usize, c as usize);
                if occ.bits[nb] && labels[nb] == 0 {
                    labels[nb] = label;
                    queue.push(nb);
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}
