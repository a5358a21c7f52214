use std::fs;
use std::path::PathBuf;

use dynres::planner::{PlannerConfig, TilePlan};
use dynres::tiler::{BatchTiler, RasterImage, TileSidecar};

fn pattern(w: u32, h: u32) -> RasterImage {
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            px.extend_from_slice(&[(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]);
        }
    }
    RasterImage::new(w, h, 3, px).unwrap()
}

#[test]
fn writes_tiles_thumbnail_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("page.png");
    pattern(800, 1300).save_png(&src).unwrap();

    let out = dir.path().join("out");
    let tiler = BatchTiler::new(PlannerConfig::default(), 2).unwrap();
    let results = tiler.tile_files(std::slice::from_ref(&src), &out);
    let sidecar_path = results.into_iter().next().unwrap().unwrap();
    assert_eq!(sidecar_path, out.join("page.json"));

    let sidecar: TileSidecar =
        serde_json::from_slice(&fs::read(&sidecar_path).unwrap()).unwrap();
    assert_eq!(sidecar.source_id, "page");
    assert_eq!((sidecar.source_width, sidecar.source_height), (800, 1300));
    assert_eq!(sidecar.plan.resize_width, 896);
    assert_eq!(sidecar.plan.visual_tokens, 1792);
    assert_eq!(sidecar.files.len(), 7);
    assert_eq!(sidecar.files.last().unwrap(), "page_thumb.png");
    TilePlan::from_record(&sidecar.plan, &PlannerConfig::default()).unwrap();

    for (row, col) in [(0, 0), (0, 1), (2, 1)] {
        let tile = RasterImage::open(&out.join(format!("page_tile_{row}_{col}.png"))).unwrap();
        assert_eq!((tile.width(), tile.height()), (448, 448));
    }
    let thumb = RasterImage::open(&out.join("page_thumb.png")).unwrap();
    assert_eq!((thumb.width(), thumb.height()), (448, 448));
}

#[test]
fn png_tiles_are_lossless_slices_of_resized_image() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("exact.png");
    // Already on the 2x1 grid, so resize is the identity.
    let img = pattern(896, 448);
    img.save_png(&src).unwrap();
    let out = dir.path().join("o");
    let tiler = BatchTiler::new(PlannerConfig::default(), 1).unwrap();
    tiler.tile_files(&[src], &out)[0].as_ref().unwrap();
    let right = RasterImage::open(&out.join("exact_tile_0_1.png")).unwrap();
    assert_eq!(right.pixel(0, 0), img.pixel(448, 0));
    assert_eq!(right.pixel(447, 447), img.pixel(895, 447));
}

#[test]
fn decodes_jpeg_and_grayscale() {
    let dir = tempfile::tempdir().unwrap();
    let jpg = dir.path().join("photo.jpg");
    image::RgbImage::from_pixel(640, 480, image::Rgb([10, 200, 30]))
        .save(&jpg)
        .unwrap();
    let gray = dir.path().join("gray.png");
    image::GrayImage::from_pixel(300, 300, image::Luma([77]))
        .save(&gray)
        .unwrap();

    let img = RasterImage::open(&jpg).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (640, 480, 3));
    let g = RasterImage::open(&gray).unwrap();
    assert_eq!(g.channels(), 3);
    assert_eq!(g.pixel(5, 5), &[77, 77, 77]);
}

#[test]
fn missing_and_corrupt_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.png");
    fs::write(&bad, b"not a png").unwrap();
    let missing = PathBuf::from("/nonexistent/missing.png");
    let tiler = BatchTiler::new(PlannerConfig::default(), 2).unwrap();
    let results = tiler.tile_files(&[missing, bad], &dir.path().join("o"));
    assert!(matches!(results[0], Err(dynres::Error::Io { .. })));
    assert!(matches!(results[1], Err(dynres::Error::Decode { .. })));
}

#[test]
fn batch_matches_sequential() {
    let cfg = PlannerConfig::default();
    let inputs: Vec<(String, RasterImage)> = [(300, 900), (1000, 500), (448, 448), (50, 2000)]
        .into_iter()
        .enumerate()
        .map(|(i, (w, h))| (format!("img{i}"), pattern(w, h)))
        .collect();
    let tiler = BatchTiler::new(cfg, 3).unwrap();
    let parallel = tiler.tile_images(&inputs);
    for ((id, img), got) in inputs.iter().zip(parallel) {
        let got = got.unwrap();
        let want = dynres::tiler::tile_image(id, img, &cfg).unwrap();
        assert_eq!(got.tiles, want.tiles);
        assert_eq!(got.thumbnail, want.thumbnail);
        assert_eq!(got.plan, want.plan);
    }
}
