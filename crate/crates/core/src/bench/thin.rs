//! Zhang-Suen thinning of binary maps.

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, 0),  // P2, north
    (-1, 1),  // P3
    (0, 1),   // P4, east
    (1, 1),   // P5
    (1, 0),   // P6, south
    (1, -1),  // P7
    (0, -1),  // P8, west
    (-1, -1), // P9
];

fn ring(map: &[u8], h: usize, w: usize, y: usize, x: usize) -> [bool; 8] {
    let mut out = [false; 8];
    for (o, &(dy, dx)) in out.iter_mut().zip(&NEIGHBOURS) {
        let (ny, nx) = (y as isize + dy, x as isize + dx);
        *o = ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w && map[ny as usize * w + nx as usize] != 0;
    }
    out
}

/// Reduces foreground regions (nonzero entries) to a skeleton. Pixels
/// outside the map count as background. Returns a 0/1 map.
pub fn thin(map: &[u8], h: usize, w: usize) -> Vec<u8> {
    assert_eq!(map.len(), h * w, "thin: map size mismatch");
    let mut cur: Vec<u8> = map.iter().map(|&v| (v != 0) as u8).collect();
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            doomed.clear();
            for y in 0..h {
                for x in 0..w {
                    if cur[y * w + x] == 0 {
                        continue;
                    }
                    let p = ring(&cur, h, w, y, x);
                    let b = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    // p[0]=P2, p[2]=P4, p[4]=P6, p[6]=P8
                    let keep = if pass == 0 {
                        (p[0] && p[2] && p[4]) || (p[2] && p[4] && p[6])
                    } else {
                        (p[0] && p[2] && p[6]) || (p[0] && p[4] && p[6])
                    };
                    if !keep {
                        doomed.push(y * w + x);
                    }
                }
            }
            for &i in &doomed {
                cur[i] = 0;
            }
            changed |= !doomed.is_empty();
        }
        if !changed {
            return cur;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stays_empty() {
        assert_eq!(thin(&[0; 12], 3, 4), vec![0; 12]);
    }

    #[test]
    fn thin_diagonal_is_unchanged() {
        let mut m = vec![0u8; 25];
        for i in 0..5 {
            m[i * 5 + i] = 1;
        }
        assert_eq!(thin(&m, 5, 5), m);
    }

    #[test]
    fn isolated_pixel_survives() {
        let mut m = vec![0u8; 9];
        m[4] = 1;
        assert_eq!(thin(&m, 3, 3), m);
    }

    #[test]
    fn thick_bar_becomes_unit_width() {
        let (h, w) = (6, 14);
        let mut m = vec![0u8; h * w];
        for y in 1..5 {
            for x in 1..13 {
                m[y * w + x] = 1;
            }
        }
        let t = thin(&m, h, w);
        for x in 3..11 {
            let col: usize = (0..h).map(|y| t[y * w + x] as usize).sum();
            assert_eq!(col, 1, "column {x} of {t:?}");
        }
    }
}
