//! Nearest-neighbor lookup over 3D points.

use rstar::primitives::GeomWithData;
use rstar::{PointDistance, RTree};

use crate::Vec3;

type Entry = GeomWithData<[f64; 3], usize>;

#[derive(Debug)]
pub struct PointIndex {
    tree: RTree<Entry>,
}

impl PointIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let entries = points
            .iter()
            .enumerate()
            .map(|(i, p)| Entry::new([p.x, p.y, p.z], i))
            .collect();
        Self {
            tree: RTree::bulk_load(entries),
        }
    }

    /// Index and squared distance of the nearest stored point.
    pub fn nearest(&self, p: &Vec3) -> Option<(usize, f64)> {
        let q = [p.x, p.y, p.z];
        let nn = self.tree.nearest_neighbor(q)?;
        Some((nn.data, nn.distance_2(&q)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_nearest() {
        let pts: Vec<Vec3> = (0..50)
            .map(|i| Vec3::new(i as f64 * 0.1, (i % 7) as f64, 0.0))
            .collect();
        let idx = PointIndex::new(&pts);
        let q = Vec3::new(2.02, 6.0, 0.1);
        let brute = (0..pts.len())
            .min_by(|&a, &b| (pts[a] - q).norm().total_cmp(&(pts[b] - q).norm()))
            .unwrap();
        let (i, d2) = idx.nearest(&q).unwrap();
        assert_eq!(i, brute);
        assert!((d2 - (pts[brute] - q).norm_squared()).abs() < 1e-12);
        assert!(PointIndex::new(&[]).nearest(&q).is_none());
    }
}
