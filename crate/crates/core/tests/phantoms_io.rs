mod common;

use common::{random_image, test_rng};
use ctrecon::io::{
    decode_grid, encode_grid, read_checkpoint, read_image, read_sinogram, read_trace_csv, write_checkpoint,
    write_image, write_pgm, write_png, write_sinogram, write_trace_csv, Grid,
};
use ctrecon::neural::{GeneratorConfig, GeneratorParams};
use ctrecon::phantom::{ellipse_phantom, shepp_logan, symmetric_shepp_logan, Ellipse, PhantomSpec};
use ctrecon::solvers::TraceRecord;
use ctrecon::{Image, Sinogram};
use proptest::prelude::*;
use std::path::Path;

fn rotate_180(img: &Image) -> Image {
    let mut out = img.clone();
    let (w, h) = (img.width(), img.height());
    for r in 0..h {
        for c in 0..w {
            out.set(h - 1 - r, w - 1 - c, img.get(r, c));
        }
    }
    out
}

#[test]
fn shepp_logan_is_bounded_and_repeatable() {
    let a = shepp_logan(64).unwrap();
    assert!(a.min() >= 0.0 && a.max() <= 1.0);
    assert_eq!(a, shepp_logan(64).unwrap());
}

#[test]
fn symmetric_variant_is_point_symmetric_up_to_boundaries() {
    for n in [64, 65, 128] {
        let a = symmetric_shepp_logan(n).unwrap();
        let b = rotate_180(&a);
        let differing = a.as_slice().iter().zip(b.as_slice()).filter(|(p, q)| p != q).count();
        assert!((differing as f64) < 0.02 * a.len() as f64, "{n}: {differing} pixels differ");
    }
    // The classic layout is not symmetric.
    let a = shepp_logan(64).unwrap();
    assert_ne!(a, rotate_180(&a));
}

#[test]
fn centred_circle_area() {
    for (size, r) in [(64, 0.5), (128, 0.3), (100, 0.8)] {
        let img = ellipse_phantom(&[Ellipse::new((0.0, 0.0), (r, r), 0.0, 1.0)], size).unwrap();
        let inside = img.as_slice().iter().filter(|&&v| v == 1.0).count() as f64;
        // r is in half-widths of the image, so the radius is r * size / 2 pixels.
        let expected = std::f64::consts::PI * (r * size as f64 / 2.0).powi(2);
        assert!((inside - expected).abs() <= 0.02 * expected, "{inside} vs {expected}");
    }
}

#[test]
fn overlapping_ellipses_add_before_clamping() {
    let big = Ellipse::new((0.0, 0.0), (0.9, 0.9), 0.0, 0.6);
    let small = Ellipse::new((0.0, 0.0), (0.3, 0.3), 0.0, 0.7);
    let negative = Ellipse::new((0.6, 0.0), (0.2, 0.2), 0.0, -0.9);
    let img = ellipse_phantom(&[big, small, negative], 10).unwrap();
    // pixel centres are at -0.9, -0.7, ..., 0.9
    assert_eq!(img.get(4, 4), 1.0); // 0.6 + 0.7 clamps
    assert_eq!(img.get(4, 1), 0.6); // x = -0.7, y = 0.1: big only
    assert_eq!(img.get(4, 8), 0.0); // x = 0.7: 0.6 - 0.9 clamps at 0
    assert_eq!(img.get(0, 0), 0.0); // corner: outside everything
}

#[test]
fn presets_are_distinct() {
    let imgs: Vec<Image> = PhantomSpec::presets(64).iter().map(|p| p.render(1.0).unwrap()).collect();
    assert_ne!(imgs[0], imgs[1]);
    assert_ne!(imgs[1], imgs[2]);
    assert_ne!(imgs[0], imgs[2]);
    for img in &imgs {
        assert!(img.min() >= 0.0 && img.max() <= 1.0 && img.max() > img.min());
    }
}

#[test]
fn grid_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.grid");
    let img = random_image(&mut test_rng(1), 17, 11).map(|v| v * 1e-3 - 7.25).with_extent(0.37).unwrap();
    write_image(&path, &img).unwrap();
    let back = read_image(&path).unwrap();
    assert_eq!(back, img);
    assert_eq!(back.extent(), 0.37);

    let sino = Sinogram::from_vec(3, 5, (0..15).map(|i| i as f64 / 7.0).collect()).unwrap();
    let spath = dir.path().join("y.grid");
    write_sinogram(&spath, &sino).unwrap();
    assert_eq!(read_sinogram(&spath).unwrap(), sino);
}

#[test]
fn grid_header_errors() {
    let p = Path::new("test");
    assert!(decode_grid(b"P-GRID 2 -1 1.0\n", p).is_err());
    assert!(decode_grid(b"P-GRID 2 2 1.0\n\0\0\0\0", p).is_err());
    assert!(decode_grid(b"P-GRID 2 2\n", p).is_err());
    assert!(decode_grid(b"no header", p).is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(read_image(&dir.path().join("missing.grid")).is_err());
}

#[test]
fn png_and_pgm_exports_are_readable() {
    let dir = tempfile::tempdir().unwrap();
    let img = shepp_logan(32).unwrap();
    let png_path = dir.path().join("a.png");
    write_png(&png_path, &img, Some((0.0, 1.0))).unwrap();
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&png_path).unwrap()));
    let reader = decoder.read_info().unwrap();
    let info = reader.info();
    assert_eq!((info.width, info.height), (32, 32));
    assert_eq!(info.bit_depth, png::BitDepth::Sixteen);

    let pgm_path = dir.path().join("a.pgm");
    write_pgm(&pgm_path, &img, None).unwrap();
    let bytes = std::fs::read(&pgm_path).unwrap();
    assert!(bytes.starts_with(b"P5\n32 32\n255\n"));
    assert_eq!(bytes.len(), b"P5\n32 32\n255\n".len() + 32 * 32);
    assert_eq!(*bytes.iter().skip(13).max().unwrap(), 255);
}

#[test]
fn trace_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let records = vec![
        TraceRecord { t: 25, psnr: Some(18.123456789012345), ssim: Some(0.5), fidelity: 4.1, lagrangian: 5.0 / 3.0 },
        TraceRecord { t: 50, psnr: None, ssim: None, fidelity: 1e-300, lagrangian: -2.5 },
    ];
    write_trace_csv(&path, &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t,psnr,ssim,fidelity,lagrangian\n"));
    assert_eq!(read_trace_csv(&path).unwrap(), records);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.ckpt");
    let cfg = GeneratorConfig::for_image(32).unwrap();
    let params = GeneratorParams::init(&cfg, 3, 5).unwrap();
    write_checkpoint(&path, &params).unwrap();
    assert_eq!(read_checkpoint(&path).unwrap(), params);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 8);
    std::fs::write(&path, bytes).unwrap();
    assert!(read_checkpoint(&path).is_err());
}

proptest! {
    #[test]
    fn grid_bytes_round_trip(values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..64), extent in 1e-6f64..1e6) {
        let grid = Grid { width: values.len(), height: 1, extent, data: values };
        let back = decode_grid(&encode_grid(&grid), Path::new("mem")).unwrap();
        prop_assert_eq!(back.extent.to_bits(), grid.extent.to_bits());
        for (a, b) in back.data.iter().zip(&grid.data) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
