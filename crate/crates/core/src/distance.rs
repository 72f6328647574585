//! Exact Euclidean distance from mask voxels to the nearest background voxel.
//!
//! Uses the separable lower-envelope-of-parabolas transform on squared
//! integer distances, so results are exact. The region outside the grid
//! counts as background, and voxels touching the background by a face get
//! distance 1.0.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::volume::{Dims, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMap {
    pub dims: Dims,
    /// Millimetres to the nearest background voxel centre; 0 outside the mask.
    pub values: Vec<f64>,
}

impl DistanceMap {
    #[inline]
    pub fn at(&self, index: usize) -> f64 {
        self.values[index]
    }
}

const FAR: i64 = i64::MAX / 4;

/// One-dimensional squared-distance transform of `f` (entries `FAR` are
/// treated as +infinity). Writes into `out`.
fn transform_line(f: &[i64], out: &mut [i64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        let fq = (f[q] + (q * q) as i64) as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let fp = (f[p] + (p * p) as i64) as f64;
                    let s = (fq - fp) / (2.0 * (q as f64 - p as f64));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = FAR);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as i64 - p as i64;
        *o = d * d + f[p];
    }
}

/// Squared distance (in voxel units) of every padded-grid voxel to the nearest
/// background voxel, on the grid padded by one background voxel on each side.
fn squared_distances(mask: &Mask) -> (Dims, Vec<i64>) {
    let d = mask.dims();
    let pd = Dims::new(d.nx + 2, d.ny + 2, d.nz + 2);
    let mut grid = vec![0i64; pd.len()];
    for i in mask.indices() {
        let [x, y, z] = d.coords(i);
        grid[pd.index(x + 1, y + 1, z + 1)] = FAR;
    }
    let longest = pd.nx.max(pd.ny).max(pd.nz);
    let mut line = vec![0i64; longest];
    let mut out = vec![0i64; longest];
    let (mut v, mut zs) = (Vec::with_capacity(longest), Vec::with_capacity(longest + 1));

    for axis in 0..3 {
        let (n, stride, outer): (usize, usize, Vec<usize>) = match axis {
            0 => (
                pd.nx,
                1,
                (0..pd.nz)
                    .flat_map(|z| (0..pd.ny).map(move |y| pd.index(0, y, z)))
                    .collect(),
            ),
            1 => (
                pd.ny,
                pd.nx,
                (0..pd.nz)
                    .flat_map(|z| (0..pd.nx).map(move |x| pd.index(x, 0, z)))
                    .collect(),
            ),
            _ => (
                pd.nz,
                pd.nx * pd.ny,
                (0..pd.ny)
                    .flat_map(|y| (0..pd.nx).map(move |x| pd.index(x, y, 0)))
                    .collect(),
            ),
        };
        for start in outer {
            for k in 0..n {
                line[k] = grid[start + k * stride];
            }
            transform_line(&line[..n], &mut out[..n], &mut v, &mut zs);
            for k in 0..n {
                grid[start + k * stride] = out[k];
            }
        }
    }
    (pd, grid)
}

pub fn distance_to_boundary(mask: &Mask) -> DistanceMap {
    let d = mask.dims();
    let (pd, sq) = squared_distances(mask);
    let mut values = vec![0.0; d.len()];
    for i in mask.indices() {
        let [x, y, z] = d.coords(i);
        values[i] = libm::sqrt(sq[pd.index(x + 1, y + 1, z + 1)] as f64);
    }
    DistanceMap { dims: d, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize, side: usize, at: usize) -> Mask {
        let dims = Dims::new(n, n, n);
        let mut idx = Vec::new();
        for z in at..at + side {
            for y in at..at + side {
                for x in at..at + side {
                    idx.push(dims.index(x, y, z));
                }
            }
        }
        Mask::from_indices(dims, idx)
    }

    #[test]
    fn isolated_voxel_is_one() {
        let dims = Dims::new(5, 5, 5);
        let m = Mask::from_indices(dims, [dims.index(2, 2, 2)]);
        assert_eq!(distance_to_boundary(&m).at(dims.index(2, 2, 2)), 1.0);
    }

    #[test]
    fn cube_centre_and_face() {
        let m = cube(7, 3, 2);
        let d = distance_to_boundary(&m);
        let dims = m.dims();
        assert_eq!(d.at(dims.index(3, 3, 3)), 2.0);
        assert_eq!(d.at(dims.index(2, 3, 3)), 1.0);
        assert_eq!(d.at(dims.index(0, 0, 0)), 0.0);
    }

    #[test]
    fn grid_edge_counts_as_background() {
        let m = cube(3, 3, 0);
        let d = distance_to_boundary(&m);
        assert_eq!(d.at(m.dims().index(1, 1, 1)), 2.0);
        assert_eq!(d.at(0), 1.0);
    }
}
