use serde::{Deserialize, Serialize};

use super::heatmap::Heatmap;
use crate::bank::{classify, Label, PatchSpec};
use crate::region::Region;

/// One consolidated group of overlapping anomalous patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRegion {
    pub region: Region,
    /// Mean heatmap score of the group's anomalous centers.
    pub mean_center_score: f64,
    pub centers: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so grouping is order-stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Expands every center scored above β to its patch rectangle (clipped to
/// the frame), groups rectangles that overlap or touch, and bounds each
/// group. Groups come back by descending mean center score.
pub fn merge_anomalous_patches(
    heatmap: &Heatmap,
    beta: f64,
    spec: &PatchSpec,
    width: usize,
    height: usize,
) -> Vec<MergedRegion> {
    let anomalous: Vec<(Region, f64)> = heatmap
        .entries
        .iter()
        .filter(|&&(_, _, s)| classify(s, beta) == Label::Abnormal)
        .map(|&(x, y, s)| (spec.centered_clipped(x, y, width, height), s))
        .collect();
    let n = anomalous.len();
    let mut sets = DisjointSet::new(n);
    // sweep over x1-sorted rectangles so only horizontally reachable pairs are tested
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| anomalous[i].0.x1);
    for (k, &i) in order.iter().enumerate() {
        let a = anomalous[i].0;
        for &j in &order[k + 1..] {
            let b = anomalous[j].0;
            if b.x1 > a.x2 + 1 {
                break;
            }
            if a.overlaps_or_touches(&b) {
                sets.union(i, j);
            }
        }
    }
    let mut groups: Vec<(usize, Region, f64, usize)> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = sets.find(i);
        let (rect, score) = anomalous[i];
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push((root, rect, 0.0, 0));
        }
        let g = &mut groups[slot[root]];
        g.1 = g.1.union_bounds(&rect);
        g.2 += score;
        g.3 += 1;
    }
    let mut merged: Vec<MergedRegion> = groups
        .into_iter()
        .map(|(_, region, sum, count)| MergedRegion {
            region,
            mean_center_score: sum / count as f64,
            centers: count,
        })
        .collect();
    merged.sort_by(|a, b| {
        b.mean_center_score
            .total_cmp(&a.mean_center_score)
            .then_with(|| a.region.cmp(&b.region))
    });
    merged
}
