//! Greedy deletion of primitives that do not pay for themselves.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneStep {
    /// Index of the deleted primitive in the input list.
    pub removed: usize,
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneReport {
    /// Surviving indices in their original order.
    pub kept: Vec<usize>,
    pub steps: Vec<PruneStep>,
    pub passes: usize,
    pub objective: f64,
}

/// Tries deleting each index of `order` in turn from `kept` and accepts a
/// deletion iff `objective` strictly increases. Passes repeat until one makes
/// no deletion.
pub fn prune(
    kept: Vec<usize>,
    order: &[usize],
    mut objective: impl FnMut(&[usize]) -> f64,
) -> PruneReport {
    let mut kept = kept;
    let mut current = objective(&kept);
    let mut steps = Vec::new();
    let mut passes = 0;
    loop {
        passes += 1;
        let mut changed = false;
        for &cand in order {
            let Some(pos) = kept.iter().position(|&k| k == cand) else {
                continue;
            };
            let mut trial = kept.clone();
            trial.remove(pos);
            let o = objective(&trial);
            if o > current {
                steps.push(PruneStep {
                    removed: cand,
                    objective_before: current,
                    objective_after: o,
                });
                log::debug!("pruned primitive {cand}: objective {current:.6} -> {o:.6}");
                kept = trial;
                current = o;
                changed = true;
            }
        }
        if !changed || kept.is_empty() {
            break;
        }
    }
    PruneReport {
        kept,
        steps,
        passes,
        objective: current,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Coverage of 0..10 by intervals, minus a per-interval cost.
    fn coverage(intervals: &[(u32, u32)], alpha: f64) -> impl Fn(&[usize]) -> f64 + '_ {
        move |kept: &[usize]| {
            let covered = (0..10)
                .filter(|x| {
                    kept.iter()
                        .any(|&k| intervals[k].0 <= *x && *x < intervals[k].1)
                })
                .count();
            covered as f64 / 10.0 - alpha * kept.len() as f64
        }
    }

    #[test]
    fn duplicates_collapse_to_one() {
        let iv = [(0, 10), (0, 10)];
        let r = prune(vec![0, 1], &[0, 1], coverage(&iv, 1e-3));
        assert_eq!(r.kept.len(), 1);
        assert!(r
            .steps
            .iter()
            .all(|s| s.objective_after > s.objective_before));
    }

    #[test]
    fn necessary_primitives_survive() {
        let iv = [(0, 5), (5, 10)];
        let r = prune(vec![0, 1], &[0, 1], coverage(&iv, 1e-3));
        assert_eq!(r.kept, vec![0, 1]);
        assert!(r.steps.is_empty());
        assert_eq!(r.passes, 1);
    }

    #[test]
    fn useless_primitive_goes() {
        let iv = [(0, 10), (3, 3)];
        let r = prune(vec![0, 1], &[1, 0], coverage(&iv, 1e-3));
        assert_eq!(r.kept, vec![0]);
        assert!(r.objective >= coverage(&iv, 1e-3)(&[0, 1]));
    }

    #[test]
    fn terminates_within_bound() {
        let iv: Vec<(u32, u32)> = (0..8).map(|i| (i, i + 3)).collect();
        let all: Vec<usize> = (0..8).collect();
        let r = prune(all.clone(), &all, coverage(&iv, 0.05));
        assert!(r.passes <= all.len() + 1);
        let mut o = coverage(&iv, 0.05)(&all);
        for s in &r.steps {
            assert_eq!(s.objective_before, o);
            assert!(s.objective_after > o);
            o = s.objective_after;
        }
    }
}
