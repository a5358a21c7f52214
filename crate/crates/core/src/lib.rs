//! Preprocessing front end for vision-language models with dynamic
//! high-resolution input.
//!
//! - [`catalog`]: the set of candidate tile grids for a tile budget.
//! - [`planner`]: aspect-ratio matching and token accounting.
//! - [`tiler`]: resize, slice and thumbnail generation.
//! - [`shuffle`]: patch-grid arithmetic and pixel (un)shuffle.
//! - [`mixture`]: manifest loading and weighted task sampling.
//! - [`translate`]: prompt rendering and cached batch translation.

pub mod catalog;
pub mod error;
pub mod mixture;
pub mod planner;
pub mod shuffle;
pub mod tiler;
pub mod translate;

pub use catalog::{RatioCatalog, RatioGrid};
pub use error::{Error, Result};
pub use planner::{plan, token_bounds, ImageDims, PlannerConfig, TilePlan};
pub use tiler::{RasterImage, TileSet};
