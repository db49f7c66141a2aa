//! D3Q19 velocity set and the domain topology shared by the solver and the
//! connectivity search.

use serde::{Deserialize, Serialize};

pub const Q: usize = 19;

/// Rest, 6 face neighbours, 12 edge neighbours.
pub const C: [[i32; 3]; Q] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, -1],
    [0, 1, -1],
    [0, -1, 1],
];

pub const W: [f64; Q] = [
    1.0 / 3.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

/// Directions are stored in opposite pairs after the rest population.
pub const fn opposite(q: usize) -> usize {
    if q == 0 {
        0
    } else if q % 2 == 1 {
        q + 1
    } else {
        q - 1
    }
}

/// Treatment of the y- and z-normal domain faces. The x faces are always
/// periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lateral {
    Wall,
    Periodic,
}

/// Neighbour of `(x, y, z)` along `c`. Returns the neighbour index and the
/// x-winding crossed (−1, 0 or +1), or `None` past a wall.
#[inline]
pub fn neighbour(
    n: usize,
    lateral: [Lateral; 2],
    x: usize,
    y: usize,
    z: usize,
    c: [i32; 3],
) -> Option<(usize, i32)> {
    let n_i = n as i32;
    let mut xn = x as i32 + c[0];
    let mut wind = 0;
    if xn < 0 {
        xn += n_i;
        wind = -1;
    } else if xn >= n_i {
        xn -= n_i;
        wind = 1;
    }
    let wrap = |v: i32, mode: Lateral| -> Option<i32> {
        if (0..n_i).contains(&v) {
            Some(v)
        } else if mode == Lateral::Periodic {
            Some(v.rem_euclid(n_i))
        } else {
            None
        }
    };
    let yn = wrap(y as i32 + c[1], lateral[0])?;
    let zn = wrap(z as i32 + c[2], lateral[1])?;
    Some((xn as usize + n * (yn as usize + n * zn as usize), wind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_set_moments() {
        assert!((W.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for a in 0..3 {
            for b in 0..3 {
                let m: f64 = (0..Q).map(|q| W[q] * (C[q][a] * C[q][b]) as f64).sum();
                let e = if a == b { 1.0 / 3.0 } else { 0.0 };
                assert!((m - e).abs() < 1e-15);
            }
        }
        for q in 0..Q {
            let o = opposite(q);
            assert_eq!(opposite(o), q);
            for a in 0..3 {
                assert_eq!(C[q][a], -C[o][a]);
            }
        }
    }
}
