//! Independent reference implementations for the benchmark tests.

use sedge_core::bench::Pixel;

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// Kuhn-Munkres with potentials. Returns the column of each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost.first().map_or(0, |r| r.len());
    assert!(n <= m);
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

fn within(a: Pixel, b: Pixel, max_dist: f64) -> bool {
    let dy = a.0 as f64 - b.0 as f64;
    let dx = a.1 as f64 - b.1 as f64;
    dy * dy + dx * dx <= max_dist * max_dist
}

/// Largest number of disjoint pairs within `max_dist`, as an assignment
/// problem: admissible pairs cost 0, everything else 1.
pub fn optimal_tp(pred: &[Pixel], gt: &[Pixel], max_dist: f64) -> usize {
    let (rows, cols, swap) = if pred.len() <= gt.len() { (pred, gt, false) } else { (gt, pred, true) };
    if rows.is_empty() {
        return 0;
    }
    let cost: Vec<Vec<i64>> = rows
        .iter()
        .map(|&r| {
            cols.iter()
                .map(|&c| {
                    let (a, b) = if swap { (c, r) } else { (r, c) };
                    if within(a, b, max_dist) {
                        0
                    } else {
                        1
                    }
                })
                .collect()
        })
        .collect();
    let assign = hungarian(&cost);
    assign.iter().enumerate().filter(|&(i, &j)| cost[i][j] == 0).count()
}

/// Exhaustive search for tiny instances, to check the oracle itself.
pub fn brute_tp(pred: &[Pixel], gt: &[Pixel], max_dist: f64) -> usize {
    fn go(i: usize, pred: &[Pixel], gt: &[Pixel], used: &mut Vec<bool>, d: f64) -> usize {
        if i == pred.len() {
            return 0;
        }
        let mut best = go(i + 1, pred, gt, used, d);
        for j in 0..gt.len() {
            if !used[j] && within(pred[i], gt[j], d) {
                used[j] = true;
                best = best.max(1 + go(i + 1, pred, gt, used, d));
                used[j] = false;
            }
        }
        best
    }
    go(0, pred, gt, &mut vec![false; gt.len()], max_dist)
}
