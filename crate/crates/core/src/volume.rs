//! Dense voxel grids: scalar intensity volumes and binary masks.
//!
//! Both share the same row-major layout with `x` varying fastest, so the
//! linear index of `(x, y, z)` is `x + nx * (y + ny * z)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent in voxels (1 mm isotropic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub const fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.nx;
        let rest = index / self.nx;
        [x, rest % self.ny, rest / self.ny]
    }

    /// Linear index of a signed coordinate, or `None` when it falls outside the grid.
    #[inline]
    pub fn checked_index(&self, x: i64, y: i64, z: i64) -> Option<usize> {
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        (x < self.nx && y < self.ny && z < self.nz).then(|| self.index(x, y, z))
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Scalar intensity volume in arbitrary units.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DataLength {
                dims,
                expected: dims.len(),
                found: data.len(),
            });
        }
        Ok(Volume { dims, data })
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        Volume {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    /// Index of the first non-finite sample, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}

/// Binary voxel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: Dims,
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(dims: Dims) -> Self {
        Mask {
            dims,
            data: vec![false; dims.len()],
        }
    }

    pub fn from_bools(dims: Dims, data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DataLength {
                dims,
                expected: dims.len(),
                found: data.len(),
            });
        }
        Ok(Mask { dims, data })
    }

    pub fn from_indices(dims: Dims, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = Mask::empty(dims);
        for i in indices {
            mask.data[i] = true;
        }
        mask
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.data[index]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: bool) {
        self.data[index] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }
}
