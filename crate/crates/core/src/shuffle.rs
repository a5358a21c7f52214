//! Patch-grid arithmetic and pixel (un)shuffle.
//!
//! `unshuffle` is space-to-depth: each `factor x factor` block of positions
//! folds into one position with `factor^2` times the channels. With factor 2
//! a 32x32 patch grid (1,024 positions) becomes 16x16 (256 positions).
//!
//! Channel packing inside a block is block-offset-major:
//! `out[i, j, c * f^2 + di * f + dj] = in[i * f + di, j * f + dj, c]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `height x width x channels` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        let grid = Self {
            height,
            width,
            channels,
            values,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    /// Checks shape positivity and buffer length; used after deserializing.
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::InvalidGrid(format!(
                "shape {}x{}x{} has a zero extent",
                self.height, self.width, self.channels
            )));
        }
        let expected = self
            .height
            .checked_mul(self.width)
            .and_then(|n| n.checked_mul(self.channels))
            .ok_or_else(|| Error::InvalidGrid("shape overflows".into()))?;
        if self.values.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "{} values for shape {}x{}x{} (expected {expected})",
                self.values.len(),
                self.height,
                self.width,
                self.channels
            )));
        }
        Ok(())
    }

    /// Spatial positions, i.e. visual tokens.
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + channel]
    }
}

/// Encoder patch grid for one tile.
pub fn patch_grid(tile_size: usize, patch_size: usize) -> Result<(usize, usize)> {
    if tile_size == 0 || patch_size == 0 {
        return Err(Error::InvalidGrid(
            "tile and patch size must be positive".into(),
        ));
    }
    if !tile_size.is_multiple_of(patch_size) {
        return Err(Error::NotDivisible {
            what: "tile_size",
            value: tile_size,
            divisor: patch_size,
        });
    }
    let n = tile_size / patch_size;
    Ok((n, n))
}

/// Visual tokens per tile after unshuffling the patch grid by `factor`.
pub fn tokens_per_tile(tile_size: usize, patch_size: usize, factor: usize) -> Result<usize> {
    let (rows, cols) = patch_grid(tile_size, patch_size)?;
    let (h, w, _) = unshuffled_shape(rows, cols, 1, factor)?;
    Ok(h * w)
}

fn unshuffled_shape(
    height: usize,
    width: usize,
    channels: usize,
    factor: usize,
) -> Result<(usize, usize, usize)> {
    if factor == 0 {
        return Err(Error::InvalidGrid("factor must be positive".into()));
    }
    for (what, value) in [("height", height), ("width", width)] {
        if value % factor != 0 {
            return Err(Error::NotDivisible {
                what,
                value,
                divisor: factor,
            });
        }
    }
    Ok((height / factor, width / factor, channels * factor * factor))
}

/// Space-to-depth by `factor`.
pub fn unshuffle(grid: &FeatureGrid, factor: usize) -> Result<FeatureGrid> {
    grid.validate()?;
    let (oh, ow, oc) = unshuffled_shape(grid.height, grid.width, grid.channels, factor)?;
    let f2 = factor * factor;
    let mut out = vec![0.0; grid.values.len()];
    for i in 0..oh {
        for j in 0..ow {
            let dst = (i * ow + j) * oc;
            for di in 0..factor {
                for dj in 0..factor {
                    let src = ((i * factor + di) * grid.width + j * factor + dj) * grid.channels;
                    let offset = di * factor + dj;
                    for c in 0..grid.channels {
                        out[dst + c * f2 + offset] = grid.values[src + c];
                    }
                }
            }
        }
    }
    FeatureGrid::new(oh, ow, oc, out)
}

/// Depth-to-space by `factor`; inverse of [`unshuffle`].
pub fn shuffle(grid: &FeatureGrid, factor: usize) -> Result<FeatureGrid> {
    grid.validate()?;
    if factor == 0 {
        return Err(Error::InvalidGrid("factor must be positive".into()));
    }
    let f2 = factor * factor;
    if !grid.channels.is_multiple_of(f2) {
        return Err(Error::NotDivisible {
            what: "channels",
            value: grid.channels,
            divisor: f2,
        });
    }
    let (oh, ow, oc) = (grid.height * factor, grid.width * factor, grid.channels / f2);
    let mut out = vec![0.0; grid.values.len()];
    for i in 0..grid.height {
        for j in 0..grid.width {
            let src = (i * grid.width + j) * grid.channels;
            for di in 0..factor {
                for dj in 0..factor {
                    let dst = ((i * factor + di) * ow + j * factor + dj) * oc;
                    let offset = di * factor + dj;
                    for c in 0..oc {
                        out[dst + c] = grid.values[src + c * f2 + offset];
                    }
                }
            }
        }
    }
    FeatureGrid::new(oh, ow, oc, out)
}
