//! One-to-one correspondence between predicted and ground-truth edge pixels.

use std::collections::HashMap;
use std::collections::VecDeque;

/// Pixel coordinate `(row, column)`.
pub type Pixel = (usize, usize);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Matched `(pred, gt)` pixel pairs.
    pub pairs: Vec<(Pixel, Pixel)>,
}

pub fn ones(map: &[u8], w: usize) -> Vec<Pixel> {
    map.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| (i / w, i % w))
        .collect()
}

/// Maximum-cardinality matching where a pair is admissible when the
/// Euclidean distance is at most `max_dist`.
pub fn match_points(pred: &[Pixel], gt: &[Pixel], max_dist: f64) -> MatchResult {
    let adj = admissible_pairs(pred, gt, max_dist);
    let mate = hopcroft_karp(&adj, gt.len());
    let pairs: Vec<_> = mate
        .iter()
        .enumerate()
        .filter_map(|(p, m)| m.map(|g| (pred[p], gt[g])))
        .collect();
    let tp = pairs.len();
    MatchResult {
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
        pairs,
    }
}

/// [`match_points`] over two binary maps of width `w`.
pub fn match_maps(pred: &[u8], gt: &[u8], w: usize, max_dist: f64) -> MatchResult {
    match_points(&ones(pred, w), &ones(gt, w), max_dist)
}

fn admissible_pairs(pred: &[Pixel], gt: &[Pixel], max_dist: f64) -> Vec<Vec<usize>> {
    if max_dist < 0.0 || !max_dist.is_finite() {
        return vec![Vec::new(); pred.len()];
    }
    let mut index: HashMap<Pixel, Vec<usize>> = HashMap::new();
    for (i, &g) in gt.iter().enumerate() {
        index.entry(g).or_default().push(i);
    }
    let r = max_dist.floor() as isize;
    let r2 = max_dist * max_dist;
    pred.iter()
        .map(|&(py, px)| {
            let mut out = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    if ((dy * dy + dx * dx) as f64) > r2 {
                        continue;
                    }
                    let (y, x) = (py as isize + dy, px as isize + dx);
                    if y < 0 || x < 0 {
                        continue;
                    }
                    if let Some(ids) = index.get(&(y as usize, x as usize)) {
                        out.extend_from_slice(ids);
                    }
                }
            }
            out
        })
        .collect()
}

const FREE: usize = usize::MAX;

/// Returns, for every left vertex, its matched right vertex.
fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> Vec<Option<usize>> {
    let n_left = adj.len();
    let mut left_mate = vec![FREE; n_left];
    let mut right_mate = vec![FREE; n_right];
    let mut dist = vec![0usize; n_left];
    loop {
        // layer the graph from all free left vertices
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if left_mate[u] == FREE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut reachable_free = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let m = right_mate[v];
                if m == FREE {
                    reachable_free = true;
                } else if dist[m] == usize::MAX {
                    dist[m] = dist[u] + 1;
                    queue.push_back(m);
                }
            }
        }
        if !reachable_free {
            break;
        }
        let mut next = vec![0usize; n_left];
        for u in 0..n_left {
            if left_mate[u] == FREE {
                augment(u, adj, &mut left_mate, &mut right_mate, &mut dist, &mut next);
            }
        }
    }
    left_mate
        .into_iter()
        .map(|m| (m != FREE).then_some(m))
        .collect()
}

fn augment(
    u: usize,
    adj: &[Vec<usize>],
    left_mate: &mut [usize],
    right_mate: &mut [usize],
    dist: &mut [usize],
    next: &mut [usize],
) -> bool {
    while next[u] < adj[u].len() {
        let v = adj[u][next[u]];
        next[u] += 1;
        let m = right_mate[v];
        let ok = m == FREE
            || (dist[m] == dist[u].wrapping_add(1) && augment(m, adj, left_mate, right_mate, dist, next));
        if ok {
            left_mate[u] = v;
            right_mate[v] = u;
            return true;
        }
    }
    dist[u] = usize::MAX;
    false
}
