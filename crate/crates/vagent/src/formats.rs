//! Points CSV, binary PGM images and the metrics CSV.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use vagent_core::data::Dataset;
use vagent_core::training::MetricsRow;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Csv { path: PathBuf, line: u64, message: String },
    #[error("{path}: byte {offset}: {message}")]
    Pgm { path: PathBuf, offset: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parse headerless comma-separated rows of decimals.
pub fn parse_points_csv(text: &str, path: &Path) -> Result<Vec<Vec<f64>>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| FormatError::Csv {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                let v: f64 = field.trim().parse().map_err(|_| FormatError::Csv {
                    path: path.to_path_buf(),
                    line,
                    message: format!("not a number: `{field}`"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(FormatError::Csv {
                        path: path.to_path_buf(),
                        line,
                        message: format!("not finite: `{field}`"),
                    })
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = points.first() {
            let first: &Vec<f64> = first;
            if first.len() != row.len() {
                return Err(FormatError::Csv {
                    path: path.to_path_buf(),
                    line,
                    message: format!("{} fields, expected {}", row.len(), first.len()),
                });
            }
        }
        points.push(row);
    }
    Ok(points)
}

pub fn load_points_csv(path: &Path) -> Result<Dataset, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let points = parse_points_csv(&text, path)?;
    Dataset::new(path.display().to_string(), points).map_err(|e| invalid(path, e.to_string()))
}

/// One row per point, shortest round-trip decimal for each value.
pub fn write_points_csv(path: &Path, points: &[Vec<f64>]) -> Result<(), FormatError> {
    let mut out = String::new();
    for p in points {
        let row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// A grey-scale image with 8-bit pixels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn pgm_err(path: &Path, offset: usize, message: impl Into<String>) -> FormatError {
    FormatError::Pgm {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

/// Decode a binary `P5` PGM with maxval 255.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage, FormatError> {
    if !bytes.starts_with(b"P5") {
        return Err(pgm_err(path, 0, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for (k, slot) in header.iter_mut().enumerate() {
        // Whitespace and comments before each field.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        if k == 0 && pos == 2 {
            return Err(pgm_err(path, pos, "expected whitespace after magic"));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == start {
            return Err(pgm_err(path, pos, "expected a decimal number"));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| pgm_err(path, start, "number out of range"))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(pgm_err(path, pos, format!("maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(pgm_err(path, pos, "empty image"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(pgm_err(path, pos, "expected one whitespace byte before the raster"));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(pgm_err(path, bytes.len(), format!("raster truncated, expected {n} bytes")));
    }
    if bytes.len() > pos + n {
        return Err(pgm_err(path, pos + n, "trailing bytes after raster"));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[pos..].to_vec(),
    })
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pgm(&bytes, path)
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<(), FormatError> {
    fs::write(path, encode_pgm(image)).map_err(io_err(path))
}

/// `round(clamp(v, 0, 1) * 255)`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Every `*.pgm` file in `dir`, in lexicographic file-name order, as one
/// point per image with pixels scaled by `1/255`.
pub fn load_pgm_dir(dir: &Path) -> Result<Dataset, FormatError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if files.is_empty() {
        return Err(invalid(dir, "no .pgm files"));
    }
    let mut points = Vec::with_capacity(files.len());
    let mut size = None;
    for f in &files {
        let img = read_pgm(f)?;
        match size {
            None => size = Some((img.width, img.height)),
            Some(s) if s != (img.width, img.height) => {
                return Err(invalid(f, format!("size {}x{} differs from {}x{}", img.width, img.height, s.0, s.1)));
            }
            _ => {}
        }
        points.push(img.pixels.iter().map(|&p| p as f64 / 255.0).collect());
    }
    Dataset::new(dir.display().to_string(), points).map_err(|e| invalid(dir, e.to_string()))
}

/// Write each point as `000000.pgm`, `000001.pgm`, ... in `dir`.
pub fn save_pgm_dir(dir: &Path, points: &[Vec<f64>], width: usize, height: usize) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, p) in points.iter().enumerate() {
        if p.len() != width * height {
            return Err(invalid(dir, format!("point {i} has {} values, expected {}", p.len(), width * height)));
        }
        let image = GrayImage {
            width,
            height,
            pixels: p.iter().map(|&v| quantize(v)).collect(),
        };
        write_pgm(&dir.join(format!("{i:06}.pgm")), &image)?;
    }
    Ok(())
}

pub const GRID_COLUMNS: usize = 10;

/// Tile images `GRID_COLUMNS` per row with 1-pixel black separators; empty
/// cells in the last row stay black.
pub fn pgm_grid(images: &[Vec<f64>], width: usize, height: usize) -> GrayImage {
    let cols = GRID_COLUMNS.min(images.len().max(1));
    let rows = images.len().div_ceil(GRID_COLUMNS).max(1);
    let gw = cols * width + cols - 1;
    let gh = rows * height + rows - 1;
    let mut pixels = vec![0u8; gw * gh];
    for (k, img) in images.iter().enumerate() {
        let (r, c) = (k / GRID_COLUMNS, k % GRID_COLUMNS);
        let (x0, y0) = (c * (width + 1), r * (height + 1));
        for y in 0..height {
            for x in 0..width {
                pixels[(y0 + y) * gw + x0 + x] = quantize(img[y * width + x]);
            }
        }
    }
    GrayImage {
        width: gw,
        height: gh,
        pixels,
    }
}

/// `side` such that `side * side == d`.
pub fn square_side(d: usize) -> Option<usize> {
    let s = (d as f64).sqrt().round() as usize;
    (s * s == d).then_some(s)
}

/// C's `%.9g`.
pub fn format_g9(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const METRICS_HEADER: &str = "traj,term_loss,prop_loss,sel_loss,q_loss";

pub fn metrics_line(row: &MetricsRow) -> String {
    let opt = |v: Option<f64>| v.map(format_g9).unwrap_or_default();
    format!(
        "{},{},{},{},{}",
        row.traj,
        format_g9(row.term_loss),
        opt(row.prop_loss),
        opt(row.sel_loss),
        opt(row.q_loss)
    )
}

pub fn write_metrics<W: Write>(out: &mut W, rows: &[MetricsRow], header: bool) -> io::Result<()> {
    if header {
        writeln!(out, "{METRICS_HEADER}")?;
    }
    for row in rows {
        writeln!(out, "{}", metrics_line(row))?;
    }
    Ok(())
}
