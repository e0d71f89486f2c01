//! Gated minimum-cost assignment between predicted tracks and detections.
//!
//! Pairs farther apart than the gate radius are inadmissible. Among
//! admissible pairs the solver returns a maximum-cardinality matching of
//! minimum total distance via successive shortest augmenting paths over the
//! sparse admissibility graph. Cost is roughly O(matches · edges · log nodes),
//! so a crowded frame where the gate graph percolates into one component
//! stays cheap, unlike a dense cubic solve on the component.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Result of [`associate`]: matched index pairs plus the leftovers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// (track index, detection index), sorted by track index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

fn planar_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Min-heap entry. Ties break on node index so traversal order, and with it
/// the choice among equal-cost matchings, is fully deterministic.
struct Visit {
    dist: f64,
    node: usize,
}

impl PartialEq for Visit {
    fn eq(&self, other: &Self) -> bool {
        self.dist.total_cmp(&other.dist) == Ordering::Equal && self.node == other.node
    }
}
impl Eq for Visit {}
impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest distance.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Matches planar track predictions to detections within `gate_radius`,
/// maximising the match count and, among maximum matchings, minimising the
/// total planar distance. Deterministic for identical inputs.
pub fn associate(
    tracks: &[(f64, f64)],
    detections: &[(f64, f64)],
    gate_radius: f64,
) -> Assignment {
    let m = tracks.len();
    let n = detections.len();
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (i, t) in tracks.iter().enumerate() {
        for (j, d) in detections.iter().enumerate() {
            let dist = planar_distance(*t, *d);
            if dist <= gate_radius {
                edges[i].push((j, dist));
            }
        }
    }

    // Successive shortest augmenting paths with node potentials. Nodes
    // 0..m are tracks, m..m+n detections. Potentials keep every reduced
    // cost non-negative so Dijkstra applies; each round augments along the
    // globally cheapest path from any unmatched track to any unmatched
    // detection, which yields the minimum-cost matching at every
    // cardinality, including the maximum one where we stop.
    let mut match_t: Vec<Option<usize>> = vec![None; m];
    let mut match_d: Vec<Option<usize>> = vec![None; n];
    let mut pot = vec![0.0f64; m + n];
    let mut dist = vec![f64::INFINITY; m + n];
    let mut prev_track = vec![usize::MAX; n];
    let mut settled = vec![false; m + n];

    loop {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        settled.iter_mut().for_each(|s| *s = false);
        let mut heap = BinaryHeap::new();
        for i in 0..m {
            if match_t[i].is_none() && !edges[i].is_empty() {
                dist[i] = 0.0;
                heap.push(Visit { dist: 0.0, node: i });
            }
        }

        let mut target: Option<(f64, usize)> = None;
        while let Some(Visit { dist: d0, node }) = heap.pop() {
            if settled[node] {
                continue;
            }
            settled[node] = true;
            if node >= m {
                let j = node - m;
                if match_d[j].is_none() {
                    // First unmatched detection popped is the cheapest
                    // reachable one; its distance is final.
                    target = Some((d0, j));
                    break;
                }
                // Leave via the matched edge, which is tight by
                // construction; clamp float drift.
                let i = match_d[j].expect("checked above");
                let c = edges[i]
                    .iter()
                    .find(|&&(dj, _)| dj == j)
                    .expect("matched edges are admissible")
                    .1;
                let step = (pot[node] - c - pot[i]).max(0.0);
                if d0 + step < dist[i] {
                    dist[i] = d0 + step;
                    heap.push(Visit {
                        dist: dist[i],
                        node: i,
                    });
                }
            } else {
                for &(j, c) in &edges[node] {
                    let step = (c + pot[node] - pot[m + j]).max(0.0);
                    let nd = d0 + step;
                    if nd < dist[m + j] {
                        dist[m + j] = nd;
                        prev_track[j] = node;
                        heap.push(Visit {
                            dist: nd,
                            node: m + j,
                        });
                    }
                }
            }
        }

        let Some((total, end)) = target else {
            break; // No augmenting path left: the matching is maximum.
        };

        // Standard potential update: settled nodes move by their final
        // distance, everything else by the target distance, preserving
        // non-negative reduced costs.
        for (p, d) in pot.iter_mut().zip(&dist) {
            *p += d.min(total);
        }

        // Flip matched edges backwards along the augmenting path.
        let mut j = end;
        loop {
            let i = prev_track[j];
            let freed = match_t[i];
            match_t[i] = Some(j);
            match_d[j] = Some(i);
            match freed {
                Some(pd) => j = pd,
                None => break,
            }
        }
    }

    let mut out = Assignment::default();
    for (i, mt) in match_t.iter().enumerate() {
        match mt {
            Some(j) => out.pairs.push((i, *j)),
            None => out.unmatched_tracks.push(i),
        }
    }
    out.unmatched_detections = (0..n).filter(|&j| match_d[j].is_none()).collect();
    out
}
