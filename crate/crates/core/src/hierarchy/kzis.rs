//! The shape of the Polish occupation classification (KZiS, as of 2023).
//!
//! The real code list is not bundled. [`kzis_shaped_codes`] produces a
//! synthetic list with exactly the published node counts per major group at
//! every level, which is enough for benchmarks and structural tests.

use super::{HierarchyError, HierarchyTree};

/// Segment widths of KZiS codes: four one-digit levels, then a two-digit
/// occupation suffix (1, 2, 3, 4 and 6 digits in total).
pub const KZIS_SEGMENT_LENGTHS: [usize; 5] = [1, 1, 1, 1, 2];

/// Per major group: (group digit, sub-major groups, minor groups, unit
/// groups, 6-digit occupations).
pub const KZIS_GROUP_STRUCTURE: [(u8, usize, usize, usize, usize); 10] = [
    (0, 3, 3, 3, 3),
    (1, 4, 11, 31, 202),
    (2, 6, 31, 99, 789),
    (3, 5, 20, 87, 610),
    (4, 4, 8, 27, 89),
    (5, 4, 13, 39, 166),
    (6, 3, 9, 17, 63),
    (7, 5, 14, 69, 476),
    (8, 3, 14, 41, 387),
    (9, 6, 11, 32, 126),
];

/// Splits `total` items over `bins` as evenly as possible, larger shares first.
fn spread(total: usize, bins: usize) -> Vec<usize> {
    let base = total / bins;
    let extra = total % bins;
    (0..bins).map(|i| base + usize::from(i < extra)).collect()
}

/// A synthetic 6-digit code list whose per-group, per-level node counts match
/// [`KZIS_GROUP_STRUCTURE`]. Children are numbered from 1 at the one-digit
/// levels and from 01 in the occupation suffix.
pub fn kzis_shaped_codes() -> Vec<String> {
    let mut codes = Vec::new();
    for &(group, sub_major, minor, unit, occupations) in &KZIS_GROUP_STRUCTURE {
        let minors = spread(minor, sub_major);
        let units = spread(unit, minor);
        let occs = spread(occupations, unit);
        let (mut minor_idx, mut unit_idx) = (0, 0);
        for (s, &n_minor) in minors.iter().enumerate() {
            for m in 0..n_minor {
                for u in 0..units[minor_idx] {
                    for o in 0..occs[unit_idx] {
                        codes.push(format!("{group}{}{}{}{:02}", s + 1, m + 1, u + 1, o + 1));
                    }
                    unit_idx += 1;
                }
                minor_idx += 1;
            }
        }
    }
    codes
}

pub fn kzis_shaped_tree() -> Result<HierarchyTree, HierarchyError> {
    HierarchyTree::build(kzis_shaped_codes(), &KZIS_SEGMENT_LENGTHS)
}
