//! Pre-defined tile-grid aspect ratios.
//!
//! A [`RatioCatalog`] holds every `(columns, rows)` grid whose tile count
//! falls inside a budget range, in a fixed order: tile count ascending, then
//! columns ascending. Planning scans the catalog in this order, so the order
//! is part of the contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tile grid: `columns` tiles across the width, `rows` tiles down the height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RatioGrid {
    pub columns: u32,
    pub rows: u32,
}

impl RatioGrid {
    pub const fn new(columns: u32, rows: u32) -> Self {
        Self { columns, rows }
    }

    pub const fn tiles(&self) -> u32 {
        self.columns * self.rows
    }
}

impl std::fmt::Display for RatioGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.columns, self.rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatioCatalog {
    min_tiles: u32,
    max_tiles: u32,
    entries: Vec<RatioGrid>,
}

impl RatioCatalog {
    /// Enumerates all grids with `min_tiles <= columns * rows <= max_tiles`.
    pub fn build(min_tiles: u32, max_tiles: u32) -> Result<Self> {
        if min_tiles < 1 || min_tiles > max_tiles {
            return Err(Error::InvalidRange {
                min: min_tiles,
                max: max_tiles,
            });
        }
        let mut entries = Vec::new();
        for tiles in min_tiles..=max_tiles {
            // Divisors of `tiles` in ascending order give columns ascending.
            for columns in 1..=tiles {
                if tiles % columns == 0 {
                    entries.push(RatioGrid::new(columns, tiles / columns));
                }
            }
        }
        Ok(Self {
            min_tiles,
            max_tiles,
            entries,
        })
    }

    pub fn min_tiles(&self) -> u32 {
        self.min_tiles
    }

    pub fn max_tiles(&self) -> u32 {
        self.max_tiles
    }

    pub fn entries(&self) -> &[RatioGrid] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RatioGrid> {
        self.entries.iter()
    }

    pub fn contains(&self, grid: &RatioGrid) -> bool {
        let t = grid.tiles();
        grid.columns >= 1 && grid.rows >= 1 && t >= self.min_tiles && t <= self.max_tiles
    }
}

impl<'a> IntoIterator for &'a RatioCatalog {
    type Item = &'a RatioGrid;
    type IntoIter = std::slice::Iter<'a, RatioGrid>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// One line of the `catalog` JSONL dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub columns: u32,
    pub rows: u32,
    pub tiles: u32,
}

impl From<RatioGrid> for CatalogEntry {
    fn from(g: RatioGrid) -> Self {
        Self {
            columns: g.columns,
            rows: g.rows,
            tiles: g.tiles(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ordered_pairs(n: u32) -> usize {
        let mut count = 0;
        for a in 1..=n {
            for b in 1..=n {
                if a * b == n {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn default_budget_has_35_grids() {
        assert_eq!(RatioCatalog::build(1, 12).unwrap().len(), 35);
    }

    #[test]
    fn single_tile_budget() {
        let c = RatioCatalog::build(1, 1).unwrap();
        assert_eq!(c.entries(), &[RatioGrid::new(1, 1)]);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn six_tile_budget() {
        let brute: usize = (1..=6).map(ordered_pairs).sum();
        assert_eq!(brute, 14);
        assert_eq!(RatioCatalog::build(1, 6).unwrap().len(), 14);
    }

    #[test]
    fn forty_tile_budget_matches_divisor_count() {
        let brute: usize = (1..=40).map(ordered_pairs).sum();
        assert_eq!(RatioCatalog::build(1, 40).unwrap().len(), brute);
        assert_eq!(brute, 158);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(matches!(
            RatioCatalog::build(0, 12),
            Err(Error::InvalidRange { min: 0, max: 12 })
        ));
        assert!(RatioCatalog::build(5, 4).is_err());
    }

    #[test]
    fn complete_sound_unique_ordered() {
        for max in 1..=64u32 {
            for min in [1, 2, max / 2 + 1, max] {
                if min < 1 || min > max {
                    continue;
                }
                let c = RatioCatalog::build(min, max).unwrap();
                let set: HashSet<_> = c.iter().copied().collect();
                assert_eq!(set.len(), c.len());
                for g in &c {
                    assert!(g.tiles() >= min && g.tiles() <= max);
                }
                for cols in 1..=max {
                    for rows in 1..=max {
                        let t = cols * rows;
                        if t >= min && t <= max {
                            assert!(set.contains(&RatioGrid::new(cols, rows)));
                        }
                    }
                }
                let keys: Vec<_> = c.iter().map(|g| (g.tiles(), g.columns)).collect();
                let mut sorted = keys.clone();
                sorted.sort();
                assert_eq!(keys, sorted);
                assert_eq!(c, RatioCatalog::build(min, max).unwrap());
            }
        }
    }

    #[test]
    fn listed_example_ratios_present() {
        let c = RatioCatalog::build(1, 12).unwrap();
        for (cols, rows) in [(1, 1), (1, 2), (2, 1), (3, 1), (2, 6)] {
            assert!(c.entries().contains(&RatioGrid::new(cols, rows)));
        }
    }
}
