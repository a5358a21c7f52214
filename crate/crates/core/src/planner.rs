//! Aspect-ratio matching and tile planning.
//!
//! An image of `width x height` is matched against every grid in a
//! [`RatioCatalog`] by the absolute difference `|width/height - columns/rows|`.
//! The comparison is exact: both sides are cross-multiplied into 128-bit
//! integers, so grids such as 1:1 and 2:2 tie exactly.
//!
//! Ties are resolved by a single scan in catalog order. The incumbent is
//! replaced on a strictly smaller difference; on an exact tie it is replaced
//! only when the candidate's target area `columns * rows * tile_size^2` is
//! below twice the input area. The net effect is that the largest tied grid
//! that does not upscale past 2x the input area wins, falling back to the
//! smallest tied grid.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::catalog::{RatioCatalog, RatioGrid};
use crate::error::{Error, Result};

pub const DEFAULT_TILE_SIZE: u32 = 448;
pub const DEFAULT_MIN_TILES: u32 = 1;
pub const DEFAULT_MAX_TILES: u32 = 12;
pub const DEFAULT_TOKENS_PER_TILE: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions {
                width: width.into(),
                height: height.into(),
            });
        }
        Ok(Self { width, height })
    }

    pub fn area(&self) -> u128 {
        u128::from(self.width) * u128::from(self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub tile_size: u32,
    pub min_tiles: u32,
    pub max_tiles: u32,
    pub tokens_per_tile: u32,
    pub use_thumbnail: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
            min_tiles: DEFAULT_MIN_TILES,
            max_tiles: DEFAULT_MAX_TILES,
            tokens_per_tile: DEFAULT_TOKENS_PER_TILE,
            use_thumbnail: true,
        }
    }
}

impl PlannerConfig {
    pub fn with_max_tiles(mut self, max_tiles: u32) -> Self {
        self.max_tiles = max_tiles;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::InvalidConfig("tile_size must be positive".into()));
        }
        if self.tokens_per_tile == 0 {
            return Err(Error::InvalidConfig(
                "tokens_per_tile must be positive".into(),
            ));
        }
        if self.min_tiles < 1 || self.min_tiles > self.max_tiles {
            return Err(Error::InvalidRange {
                min: self.min_tiles,
                max: self.max_tiles,
            });
        }
        Ok(())
    }

    pub fn catalog(&self) -> Result<RatioCatalog> {
        RatioCatalog::build(self.min_tiles, self.max_tiles)
    }

    fn thumbnail_for(&self, tile_count: u32) -> bool {
        self.use_thumbnail && tile_count > 1
    }

    /// Tokens emitted for a grid of `tile_count` tiles, thumbnail included.
    pub fn tokens_for(&self, tile_count: u32) -> u64 {
        let images = u64::from(tile_count) + u64::from(self.thumbnail_for(tile_count));
        images * u64::from(self.tokens_per_tile)
    }
}

/// The resolved preprocessing plan for one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilePlan {
    pub grid: RatioGrid,
    pub resize_width: u32,
    pub resize_height: u32,
    pub tile_count: u32,
    pub include_thumbnail: bool,
    pub visual_tokens: u64,
}

/// Flat JSON form of a [`TilePlan`], as printed by `plan` and stored in
/// tile sidecar files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilePlanRecord {
    pub grid_columns: u32,
    pub grid_rows: u32,
    pub resize_width: u32,
    pub resize_height: u32,
    pub tile_count: u32,
    pub include_thumbnail: bool,
    pub visual_tokens: u64,
}

impl From<&TilePlan> for TilePlanRecord {
    fn from(p: &TilePlan) -> Self {
        Self {
            grid_columns: p.grid.columns,
            grid_rows: p.grid.rows,
            resize_width: p.resize_width,
            resize_height: p.resize_height,
            tile_count: p.tile_count,
            include_thumbnail: p.include_thumbnail,
            visual_tokens: p.visual_tokens,
        }
    }
}

impl TilePlan {
    fn for_grid(grid: RatioGrid, config: &PlannerConfig) -> Self {
        let tile_count = grid.tiles();
        Self {
            grid,
            resize_width: grid.columns * config.tile_size,
            resize_height: grid.rows * config.tile_size,
            tile_count,
            include_thumbnail: config.thumbnail_for(tile_count),
            visual_tokens: config.tokens_for(tile_count),
        }
    }

    /// Number of images (tiles plus thumbnail) this plan emits.
    pub fn image_count(&self) -> u32 {
        self.tile_count + u32::from(self.include_thumbnail)
    }

    pub fn to_record(&self) -> TilePlanRecord {
        self.into()
    }

    /// Rebuilds a plan from its flat record, checking every invariant
    /// against `config`.
    pub fn from_record(record: &TilePlanRecord, config: &PlannerConfig) -> Result<Self> {
        config.validate()?;
        if record.grid_columns == 0 || record.grid_rows == 0 {
            return Err(Error::InvalidPlan("grid dimensions must be positive".into()));
        }
        let grid = RatioGrid::new(record.grid_columns, record.grid_rows);
        if !config.catalog()?.contains(&grid) {
            return Err(Error::InvalidPlan(format!(
                "grid {grid} outside tile budget [{}, {}]",
                config.min_tiles, config.max_tiles
            )));
        }
        let expected = Self::for_grid(grid, config);
        let got = TilePlan {
            grid,
            resize_width: record.resize_width,
            resize_height: record.resize_height,
            tile_count: record.tile_count,
            include_thumbnail: record.include_thumbnail,
            visual_tokens: record.visual_tokens,
        };
        if got != expected {
            return Err(Error::InvalidPlan(format!(
                "record {record:?} inconsistent with grid {grid} (expected {:?})",
                expected.to_record()
            )));
        }
        Ok(got)
    }
}

/// Compares `|w/h - c1/r1|` against `|w/h - c2/r2|` without rounding.
///
/// `|w/h - c/r| = |w*r - h*c| / (h*r)`; the common `h` cancels, leaving
/// `|w*r1 - h*c1| * r2` vs `|w*r2 - h*c2| * r1`.
pub fn compare_ratio_diff(dims: ImageDims, a: RatioGrid, b: RatioGrid) -> Ordering {
    let num = |g: RatioGrid| {
        let lhs = i128::from(dims.width) * i128::from(g.rows);
        let rhs = i128::from(dims.height) * i128::from(g.columns);
        (lhs - rhs).unsigned_abs()
    };
    (num(a) * u128::from(b.rows)).cmp(&(num(b) * u128::from(a.rows)))
}

fn target_area(grid: RatioGrid, tile_size: u32) -> u128 {
    let side = u128::from(tile_size);
    u128::from(grid.tiles()) * side * side
}

/// Picks the catalog grid whose aspect ratio is closest to `dims`.
///
/// Returns `None` only for an empty catalog.
pub fn closest_ratio(
    dims: ImageDims,
    catalog: &RatioCatalog,
    config: &PlannerConfig,
) -> Option<RatioGrid> {
    let limit = 2 * dims.area();
    let mut entries = catalog.iter().copied();
    let mut best = entries.next()?;
    for candidate in entries {
        match compare_ratio_diff(dims, candidate, best) {
            Ordering::Less => best = candidate,
            Ordering::Equal if target_area(candidate, config.tile_size) < limit => {
                best = candidate
            }
            _ => {}
        }
    }
    Some(best)
}

pub fn plan(dims: ImageDims, config: &PlannerConfig) -> Result<TilePlan> {
    if dims.width == 0 || dims.height == 0 {
        return Err(Error::InvalidDimensions {
            width: dims.width.into(),
            height: dims.height.into(),
        });
    }
    config.validate()?;
    let catalog = config.catalog()?;
    let grid = closest_ratio(dims, &catalog, config)
        .expect("a validated config always yields a non-empty catalog");
    Ok(TilePlan::for_grid(grid, config))
}

/// Smallest and largest visual-token count a config can produce.
pub fn token_bounds(config: &PlannerConfig) -> Result<(u64, u64)> {
    config.validate()?;
    Ok((
        config.tokens_for(config.min_tiles),
        config.tokens_for(config.max_tiles),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(w: u32, h: u32) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    fn closest(w: u32, h: u32) -> RatioGrid {
        let cfg = PlannerConfig::default();
        closest_ratio(dims(w, h), &cfg.catalog().unwrap(), &cfg).unwrap()
    }

    #[test]
    fn worked_example_800x1300() {
        assert_eq!(closest(800, 1300), RatioGrid::new(2, 3));
        let p = plan(dims(800, 1300), &PlannerConfig::default()).unwrap();
        assert_eq!((p.resize_width, p.resize_height), (896, 1344));
        assert_eq!(p.tile_count, 6);
        assert!(p.include_thumbnail);
        assert_eq!(p.visual_tokens, 1792);
    }

    #[test]
    fn square_inputs() {
        assert_eq!(closest(448, 448), RatioGrid::new(1, 1));
        assert_eq!(closest(500, 500), RatioGrid::new(1, 1));
        assert_eq!(closest(2000, 2000), RatioGrid::new(3, 3));
        let p = plan(dims(448, 448), &PlannerConfig::default()).unwrap();
        assert_eq!(p.tile_count, 1);
        assert!(!p.include_thumbnail);
        assert_eq!(p.visual_tokens, 256);
    }

    #[test]
    fn three_to_one_prefers_larger_qualifying_tie() {
        // 3:1 and 6:2 tie exactly; 6*2*448^2 = 2,408,448 < 2*3,000,000.
        let p = plan(dims(3000, 1000), &PlannerConfig::default()).unwrap();
        assert_eq!(p.grid, RatioGrid::new(6, 2));
        assert_eq!((p.resize_width, p.resize_height), (2688, 896));
        assert_eq!(p.visual_tokens, 3328);

        // At 1200x400, 6:2 would exceed twice the input area.
        let p = plan(dims(1200, 400), &PlannerConfig::default()).unwrap();
        assert_eq!(p.grid, RatioGrid::new(3, 1));
        assert_eq!(p.visual_tokens, 1024);
    }

    #[test]
    fn orientation_is_preserved() {
        assert_eq!(closest(900, 448), RatioGrid::new(2, 1));
        assert_eq!(closest(448, 900), RatioGrid::new(1, 2));
    }

    #[test]
    fn extreme_ratios_take_extreme_grids() {
        assert_eq!(closest(10_000, 10), RatioGrid::new(12, 1));
        assert_eq!(closest(10, 10_000), RatioGrid::new(1, 12));
        assert_eq!(closest(1, 1), RatioGrid::new(1, 1));
    }

    #[test]
    fn token_bounds_defaults_and_test_time() {
        let d = PlannerConfig::default();
        assert_eq!(token_bounds(&d).unwrap(), (256, 3328));
        assert_eq!(token_bounds(&d.with_max_tiles(40)).unwrap(), (256, 10_496));
        assert_eq!(token_bounds(&d.with_max_tiles(1)).unwrap(), (256, 256));
        let no_thumb = PlannerConfig {
            use_thumbnail: false,
            ..d
        };
        assert_eq!(token_bounds(&no_thumb).unwrap(), (256, 3072));
        let min_two = PlannerConfig { min_tiles: 2, ..d };
        assert_eq!(token_bounds(&min_two).unwrap(), (768, 3328));
    }

    #[test]
    fn rejects_zero_dimensions_and_bad_config() {
        assert!(matches!(
            ImageDims::new(0, 10),
            Err(Error::InvalidDimensions { .. })
        ));
        let zero = ImageDims {
            width: 10,
            height: 0,
        };
        assert!(plan(zero, &PlannerConfig::default()).is_err());
        let bad = PlannerConfig {
            tile_size: 0,
            ..Default::default()
        };
        assert!(matches!(
            plan(dims(10, 10), &bad),
            Err(Error::InvalidConfig(_))
        ));
        let bad = PlannerConfig {
            min_tiles: 5,
            max_tiles: 4,
            ..Default::default()
        };
        assert!(matches!(
            plan(dims(10, 10), &bad),
            Err(Error::InvalidRange { .. })
        ));
    }

    #[test]
    fn record_round_trip_and_validation() {
        let cfg = PlannerConfig::default();
        let p = plan(dims(800, 1300), &cfg).unwrap();
        let json = serde_json::to_string(&p.to_record()).unwrap();
        let back: TilePlanRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(TilePlan::from_record(&back, &cfg).unwrap(), p);

        let mut tampered = back;
        tampered.visual_tokens = 1536;
        assert!(TilePlan::from_record(&tampered, &cfg).is_err());
        let mut tampered = back;
        tampered.grid_columns = 5;
        assert!(TilePlan::from_record(&tampered, &cfg).is_err());
    }

    #[test]
    fn exact_comparison_sees_ties_floats_miss() {
        // 1:3 vs 2:6 tie exactly; so do 1:1 and 3:3 at any square input.
        let d = dims(7, 21);
        assert_eq!(
            compare_ratio_diff(d, RatioGrid::new(1, 3), RatioGrid::new(2, 6)),
            Ordering::Equal
        );
        let d = dims(8191, 8191);
        assert_eq!(
            compare_ratio_diff(d, RatioGrid::new(1, 1), RatioGrid::new(3, 3)),
            Ordering::Equal
        );
    }
}
