//! Turning a [`TilePlan`] into pixels.
//!
//! The image is resized to the plan's target with bilinear interpolation
//! (half-pixel centers, edge clamping, round-half-up to `u8`), cut into
//! `tile_size` squares in row-major order, and optionally followed by a
//! thumbnail of the whole original image.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::RatioGrid;
use crate::error::{Error, Result};
use crate::planner::{self, ImageDims, PlannerConfig, TilePlan, TilePlanRecord};

/// Interleaved 8-bit raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions {
                width: width.into(),
                height: height.into(),
            });
        }
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::InvalidRaster(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "buffer holds {} samples, {width}x{height}x{channels} needs {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims {
            width: self.width,
            height: self.height,
        }
    }

    fn row_len(&self) -> usize {
        self.width as usize * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let start = y as usize * self.row_len() + x as usize * c;
        &self.pixels[start..start + c]
    }

    /// Converts to 3-channel RGB: gray is replicated, alpha is dropped.
    pub fn to_rgb(&self) -> RasterImage {
        let pixels = match self.channels {
            3 => return self.clone(),
            1 => self.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
            4 => self
                .pixels
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            _ => unreachable!("channel count checked at construction"),
        };
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let decoded = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(format!("reading {}", path.display()), io),
            other => Error::Decode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })?;
        let rgb = decoded.into_rgb8();
        let (w, h) = rgb.dimensions();
        RasterImage::new(w, h, 3, rgb.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            _ => image::ExtendedColorType::Rgba8,
        };
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(format!("writing {}", path.display()), io),
            other => Error::Encode(other.to_string()),
        })
    }
}

/// Source index pair and blend weight for one output coordinate.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f32,
}

fn taps(src: u32, dst: u32) -> Vec<Tap> {
    let scale = f64::from(src) / f64::from(dst);
    let last = (src - 1) as usize;
    (0..dst)
        .map(|o| {
            let pos = ((f64::from(o) + 0.5) * scale - 0.5).clamp(0.0, last as f64);
            let lo = pos.floor() as usize;
            Tap {
                lo,
                hi: (lo + 1).min(last),
                frac: (pos - lo as f64) as f32,
            }
        })
        .collect()
}

/// Bilinear resize to exactly `target_width x target_height`.
pub fn resize(image: &RasterImage, target_width: u32, target_height: u32) -> Result<RasterImage> {
    if target_width == 0 || target_height == 0 {
        return Err(Error::InvalidTarget {
            width: target_width,
            height: target_height,
        });
    }
    if (target_width, target_height) == (image.width, image.height) {
        return Ok(image.clone());
    }
    let c = image.channels as usize;
    let xs = taps(image.width, target_width);
    let ys = taps(image.height, target_height);
    let src_row = image.row_len();
    let dst_row = target_width as usize * c;
    let mut out = vec![0u8; dst_row * target_height as usize];
    // Horizontal pass per source row, cached for the two rows each output row needs.
    let mut cache: [(usize, Vec<f32>); 2] = [
        (usize::MAX, vec![0.0; dst_row]),
        (usize::MAX, vec![0.0; dst_row]),
    ];
    let horizontal = |row: usize, buf: &mut Vec<f32>| {
        let src = &image.pixels[row * src_row..(row + 1) * src_row];
        for (ox, tap) in xs.iter().enumerate() {
            let a = &src[tap.lo * c..tap.lo * c + c];
            let b = &src[tap.hi * c..tap.hi * c + c];
            for k in 0..c {
                let (a, b) = (f32::from(a[k]), f32::from(b[k]));
                buf[ox * c + k] = a + (b - a) * tap.frac;
            }
        }
    };
    for (oy, tap) in ys.iter().enumerate() {
        if cache[0].0 != tap.lo {
            if cache[1].0 == tap.lo {
                cache.swap(0, 1);
            } else {
                horizontal(tap.lo, &mut cache[0].1);
                cache[0].0 = tap.lo;
            }
        }
        if cache[1].0 != tap.hi {
            if tap.hi == tap.lo {
                let (first, second) = cache.split_at_mut(1);
                second[0].1.copy_from_slice(&first[0].1);
            } else {
                horizontal(tap.hi, &mut cache[1].1);
            }
            cache[1].0 = tap.hi;
        }
        let (top, bottom) = (&cache[0].1, &cache[1].1);
        let dst = &mut out[oy * dst_row..(oy + 1) * dst_row];
        for i in 0..dst_row {
            let v = top[i] + (bottom[i] - top[i]) * tap.frac;
            dst[i] = (v + 0.5).clamp(0.0, 255.0) as u8;
        }
    }
    RasterImage::new(target_width, target_height, image.channels, out)
}

/// Cuts an image of exactly `grid * tile_size` pixels into row-major tiles.
pub fn slice(image: &RasterImage, grid: RatioGrid, tile_size: u32) -> Result<Vec<RasterImage>> {
    let expected_w = u64::from(grid.columns) * u64::from(tile_size);
    let expected_h = u64::from(grid.rows) * u64::from(tile_size);
    if tile_size == 0
        || grid.columns == 0
        || grid.rows == 0
        || u64::from(image.width) != expected_w
        || u64::from(image.height) != expected_h
    {
        return Err(Error::DimensionMismatch {
            expected_width: expected_w,
            expected_height: expected_h,
            width: image.width,
            height: image.height,
        });
    }
    let c = image.channels as usize;
    let tile_row = tile_size as usize * c;
    let src_row = image.row_len();
    let mut tiles = Vec::with_capacity(grid.tiles() as usize);
    for r in 0..grid.rows as usize {
        for col in 0..grid.columns as usize {
            let mut buf = Vec::with_capacity(tile_row * tile_size as usize);
            for y in 0..tile_size as usize {
                let start = (r * tile_size as usize + y) * src_row + col * tile_row;
                buf.extend_from_slice(&image.pixels[start..start + tile_row]);
            }
            tiles.push(RasterImage::new(tile_size, tile_size, image.channels, buf)?);
        }
    }
    Ok(tiles)
}

pub fn thumbnail(image: &RasterImage, tile_size: u32) -> Result<RasterImage> {
    resize(image, tile_size, tile_size)
}

/// Tiles and optional thumbnail produced for one image.
#[derive(Debug, Clone)]
pub struct TileSet {
    pub tiles: Vec<RasterImage>,
    pub thumbnail: Option<RasterImage>,
    pub plan: TilePlan,
    pub source_id: String,
}

/// Contents of the `<source_id>.json` sidecar written next to the tiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSidecar {
    pub source_id: String,
    pub source_width: u32,
    pub source_height: u32,
    pub tile_size: u32,
    #[serde(flatten)]
    pub plan: TilePlanRecord,
    pub files: Vec<String>,
}

pub fn tile_file_name(source_id: &str, row: u32, col: u32) -> String {
    format!("{source_id}_tile_{row}_{col}.png")
}

pub fn thumbnail_file_name(source_id: &str) -> String {
    format!("{source_id}_thumb.png")
}

impl TileSet {
    /// Tiles followed by the thumbnail, the order downstream consumers see.
    pub fn images(&self) -> impl Iterator<Item = &RasterImage> {
        self.tiles.iter().chain(self.thumbnail.as_ref())
    }

    pub fn image_count(&self) -> usize {
        self.tiles.len() + usize::from(self.thumbnail.is_some())
    }

    /// Output file names in serialization order.
    pub fn file_names(&self) -> Vec<String> {
        let cols = self.plan.grid.columns;
        let mut names: Vec<String> = (0..self.tiles.len() as u32)
            .map(|i| tile_file_name(&self.source_id, i / cols, i % cols))
            .collect();
        if self.thumbnail.is_some() {
            names.push(thumbnail_file_name(&self.source_id));
        }
        names
    }

    /// Writes every image as PNG plus the JSON sidecar; returns the sidecar path.
    pub fn write_to_dir(&self, dir: &Path, source: ImageDims, tile_size: u32) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let names = self.file_names();
        for (img, name) in self.images().zip(&names) {
            img.save_png(&dir.join(name))?;
        }
        let sidecar = TileSidecar {
            source_id: self.source_id.clone(),
            source_width: source.width,
            source_height: source.height,
            tile_size,
            plan: self.plan.to_record(),
            files: names,
        };
        let path = dir.join(format!("{}.json", self.source_id));
        let body = serde_json::to_vec_pretty(&sidecar)?;
        fs::write(&path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}

pub fn process(
    source_id: &str,
    image: &RasterImage,
    plan: &TilePlan,
    config: &PlannerConfig,
) -> Result<TileSet> {
    let expected = planner::plan(image.dims(), config)?;
    if expected != *plan {
        return Err(Error::InvalidPlan(format!(
            "plan {:?} does not match {}x{} under the given config",
            plan.to_record(),
            image.width,
            image.height
        )));
    }
    let rgb = image.to_rgb();
    let resized = resize(&rgb, plan.resize_width, plan.resize_height)?;
    let tiles = slice(&resized, plan.grid, config.tile_size)?;
    let thumbnail = if plan.include_thumbnail {
        Some(thumbnail(&rgb, config.tile_size)?)
    } else {
        None
    };
    Ok(TileSet {
        tiles,
        thumbnail,
        plan: *plan,
        source_id: source_id.to_owned(),
    })
}

/// Plans and processes in one step.
pub fn tile_image(source_id: &str, image: &RasterImage, config: &PlannerConfig) -> Result<TileSet> {
    let plan = planner::plan(image.dims(), config)?;
    process(source_id, image, &plan, config)
}

/// Source id used for a file: its stem, or `image` when there is none.
pub fn source_id_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "image".to_owned())
}

/// Tiles many images on a dedicated thread pool of `jobs` threads.
pub struct BatchTiler {
    config: PlannerConfig,
    pool: rayon::ThreadPool,
}

impl BatchTiler {
    pub fn new(config: PlannerConfig, jobs: usize) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(Self { config, pool })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn tile_images(&self, images: &[(String, RasterImage)]) -> Vec<Result<TileSet>> {
        use rayon::prelude::*;
        self.pool.install(|| {
            images
                .par_iter()
                .map(|(id, img)| tile_image(id, img, &self.config))
                .collect()
        })
    }

    /// Tiles `count` images produced on demand by `source`, keeping only the
    /// plans so memory stays bounded by the number of worker threads.
    pub fn tile_generated<F>(&self, count: usize, source: F) -> Vec<Result<TilePlan>>
    where
        F: Fn(usize) -> (String, RasterImage) + Sync,
    {
        use rayon::prelude::*;
        self.pool.install(|| {
            (0..count)
                .into_par_iter()
                .map(|i| {
                    let (id, img) = source(i);
                    let set = tile_image(&id, &img, &self.config)?;
                    let tile = self.config.tile_size;
                    if set.images().any(|t| t.width() != tile || t.height() != tile) {
                        return Err(Error::InvalidPlan(format!("{id}: tile size mismatch")));
                    }
                    Ok(set.plan)
                })
                .collect()
        })
    }

    /// Decodes, tiles and writes each file into `out_dir`; one result per
    /// input, in input order, holding the sidecar path.
    pub fn tile_files(&self, paths: &[PathBuf], out_dir: &Path) -> Vec<Result<PathBuf>> {
        use rayon::prelude::*;
        self.pool.install(|| {
            paths
                .par_iter()
                .map(|path| {
                    let image = RasterImage::open(path)?;
                    let set = tile_image(&source_id_for(path), &image, &self.config)?;
                    set.write_to_dir(out_dir, image.dims(), self.config.tile_size)
                })
                .collect()
        })
    }
}
