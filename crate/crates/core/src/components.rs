//! 26-connected component labeling over binary masks.

use alloc::vec;
use alloc::vec::Vec;

use crate::volume::{Dims, Mask};

/// Component labels for a mask: `labels[i] == 0` for background, otherwise a
/// dense label starting at 1, assigned in order of first voxel index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<u32>,
    /// `sizes[label - 1]` is the voxel count of each component.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

/// Offsets of the 26 neighbours of a voxel.
pub fn neighbour_offsets() -> impl Iterator<Item = [i64; 3]> {
    (-1..=1i64).flat_map(|dz| {
        (-1..=1i64).flat_map(move |dy| {
            (-1..=1i64).filter_map(move |dx| (dx, dy, dz).ne(&(0, 0, 0)).then_some([dx, dy, dz]))
        })
    })
}

pub fn label_components(mask: &Mask) -> Components {
    let dims = mask.dims();
    let mut labels = vec![0u32; dims.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    let offsets: Vec<[i64; 3]> = neighbour_offsets().collect();
    for seed in mask.indices() {
        if labels[seed] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[seed] = label;
        stack.push(seed);
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let [x, y, z] = dims.coords(i);
            for [dx, dy, dz] in &offsets {
                if let Some(j) = dims.checked_index(x as i64 + dx, y as i64 + dy, z as i64 + dz) {
                    if mask.contains(j) && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

/// Removes every 26-connected component with fewer than `min_voxels` voxels.
pub fn filter_small_components(mask: &Mask, min_voxels: usize) -> Mask {
    let comps = label_components(mask);
    let dims: Dims = mask.dims();
    Mask::from_indices(
        dims,
        comps
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0 && comps.sizes[l as usize - 1] >= min_voxels)
            .map(|(i, _)| i),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(dims: Dims, len: usize, y: usize, z: usize) -> impl Iterator<Item = usize> {
        (0..len).map(move |x| dims.index(x, y, z))
    }

    #[test]
    fn twenty_six_neighbours() {
        assert_eq!(neighbour_offsets().count(), 26);
    }

    #[test]
    fn size_threshold_is_inclusive() {
        let dims = Dims::new(30, 3, 3);
        let m26 = Mask::from_indices(dims, line(dims, 26, 1, 1));
        assert!(filter_small_components(&m26, 27).is_empty());
        let m27 = Mask::from_indices(dims, line(dims, 27, 1, 1));
        assert_eq!(filter_small_components(&m27, 27), m27);
    }

    #[test]
    fn removes_only_small_components() {
        let dims = Dims::new(12, 12, 12);
        let mut idx: Vec<usize> = line(dims, 5, 0, 0).collect();
        for z in 6..11 {
            for y in 6..11 {
                for x in 6..10 {
                    idx.push(dims.index(x, y, z));
                }
            }
        }
        let mask = Mask::from_indices(dims, idx);
        let filtered = filter_small_components(&mask, 27);
        assert_eq!(filtered.count(), 100);
        assert!(!filtered.get(0, 0, 0));
        assert!(filtered.get(6, 6, 6));
    }

    #[test]
    fn diagonal_contact_connects() {
        let dims = Dims::new(4, 4, 4);
        let mask = Mask::from_indices(dims, [dims.index(0, 0, 0), dims.index(1, 1, 1)]);
        assert_eq!(label_components(&mask).count(), 1);
        let apart = Mask::from_indices(dims, [dims.index(0, 0, 0), dims.index(2, 2, 2)]);
        assert_eq!(label_components(&apart).count(), 2);
    }
}
