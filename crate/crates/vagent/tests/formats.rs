use std::path::Path;

use vagent::formats::*;
use vagent_core::data::glyphs;
use vagent_core::training::MetricsRow;

#[test]
fn csv_single_row() {
    let pts = parse_points_csv("1.0,2.0\n", Path::new("x.csv")).unwrap();
    assert_eq!(pts, vec![vec![1.0, 2.0]]);
}

#[test]
fn csv_errors_carry_the_line() {
    let e = parse_points_csv("1,2\n3,x\n", Path::new("x.csv")).unwrap_err();
    assert!(matches!(e, FormatError::Csv { line: 2, .. }), "{e}");
    let e = parse_points_csv("1,2\n3\n4,5\n", Path::new("x.csv")).unwrap_err();
    assert!(matches!(e, FormatError::Csv { line: 2, .. }), "{e}");
    assert!(parse_points_csv("1e-3,-2.5E2\n", Path::new("x.csv")).is_ok());
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let pts = vec![vec![0.1, -1e-300, 3.0], vec![std::f64::consts::PI, 2.0 / 3.0, -0.0]];
    write_points_csv(&path, &pts).unwrap();
    let back = load_points_csv(&path).unwrap();
    for (a, b) in back.points().iter().zip(&pts) {
        for (u, v) in a.iter().zip(b) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}

#[test]
fn pgm_zero_image() {
    let mut bytes = b"P5\n3 2\n255\n".to_vec();
    bytes.extend([0u8; 6]);
    let img = decode_pgm(&bytes, Path::new("z.pgm")).unwrap();
    assert_eq!((img.width, img.height), (3, 2));
    assert!(img.pixels.iter().all(|&p| p == 0));
    assert_eq!(encode_pgm(&img), bytes);
}

#[test]
fn pgm_header_comments_and_errors() {
    let mut bytes = b"P5 # a comment\n2 # w\n1\n255\n".to_vec();
    bytes.extend([7u8, 9]);
    assert_eq!(decode_pgm(&bytes, Path::new("c.pgm")).unwrap().pixels, vec![7, 9]);

    let at = |b: &[u8]| match decode_pgm(b, Path::new("e.pgm")) {
        Err(FormatError::Pgm { offset, .. }) => offset,
        other => panic!("{other:?}"),
    };
    assert_eq!(at(b"P6\n1 1\n255\n\0"), 0);
    assert_eq!(at(b"P5\nx 1\n255\n\0"), 3);
    assert_eq!(at(b"P5\n1 1\n15\n\0"), 9);
    assert_eq!(at(b"P5\n2 2\n255\n\0\0"), 13);
    assert_eq!(at(b"P5\n1 1\n255\n\0\0"), 12);
}

#[test]
fn glyph_directory_round_trip_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let ds = glyphs(3, 0.05, 4).unwrap();
    save_pgm_dir(dir.path(), ds.points(), 8, 8).unwrap();
    let back = load_pgm_dir(dir.path()).unwrap();
    assert_eq!(back.len(), ds.len());
    for (a, b) in back.points().iter().zip(ds.points()) {
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() <= 1.0 / 255.0);
        }
    }
}

#[test]
fn pgm_dir_reads_in_lexicographic_order() {
    let dir = tempfile::tempdir().unwrap();
    for (name, v) in [("b.pgm", 2u8), ("a.pgm", 1), ("c.pgm", 3)] {
        let img = GrayImage {
            width: 1,
            height: 1,
            pixels: vec![v],
        };
        write_pgm(&dir.path().join(name), &img).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let ds = load_pgm_dir(dir.path()).unwrap();
    let firsts: Vec<f64> = ds.points().iter().map(|p| p[0] * 255.0).collect();
    assert_eq!(firsts, vec![1.0, 2.0, 3.0]);
}

#[test]
fn grid_layout() {
    let white = vec![1.0; 4];
    let grid = pgm_grid(&vec![white; 12], 2, 2);
    // 10 columns of 2 px plus 9 separators; 2 rows plus 1 separator.
    assert_eq!((grid.width, grid.height), (29, 5));
    assert_eq!(grid.pixels[0], 255);
    assert_eq!(grid.pixels[2], 0);
    assert_eq!(grid.pixels[2 * 29], 0);
    assert_eq!(grid.pixels[3 * 29 + 3], 255);
    // cells after the 12th image stay black
    assert_eq!(grid.pixels[3 * 29 + 2 * 3], 0);
    assert_eq!(quantize(-0.3), 0);
    assert_eq!(quantize(0.5), 128);
    assert_eq!(quantize(7.0), 255);
}

#[test]
fn nine_significant_digits() {
    assert_eq!(format_g9(0.0), "0");
    assert_eq!(format_g9(1.0), "1");
    assert_eq!(format_g9(2.74), "2.74");
    assert_eq!(format_g9(1.0 / 3.0), "0.333333333");
    assert_eq!(format_g9(123456789.4), "123456789");
    assert_eq!(format_g9(1234567890.0), "1.23456789e+09");
    assert_eq!(format_g9(0.0001234), "0.0001234");
    assert_eq!(format_g9(0.00001234), "1.234e-05");
    assert_eq!(format_g9(-9.9999999999), "-10");
}

#[test]
fn metrics_rows_leave_skipped_updates_empty() {
    let rows = vec![
        MetricsRow {
            traj: 1,
            term_loss: 2.5,
            prop_loss: None,
            sel_loss: None,
            q_loss: None,
        },
        MetricsRow {
            traj: 2,
            term_loss: 0.125,
            prop_loss: Some(1.0),
            sel_loss: Some(0.5),
            q_loss: None,
        },
    ];
    let mut out = Vec::new();
    write_metrics(&mut out, &rows, true).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "traj,term_loss,prop_loss,sel_loss,q_loss\n1,2.5,,,\n2,0.125,1,0.5,\n"
    );
}
