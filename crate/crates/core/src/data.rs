//! Desk-scale training sets.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{self, STREAM_DATA};
use crate::{Error, Result};

/// A nonempty set of equal-length points.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or(Error::config("dataset is empty"))?;
        if dim == 0 {
            return Err(Error::config("dataset points have dimension 0"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::config(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("point {i} has non-finite entries")));
            }
        }
        Ok(Dataset {
            name: name.into(),
            dim,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Coordinate-wise mean, usable as an initial state.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in &self.points {
            for (m, v) in m.iter_mut().zip(p) {
                *m += v;
            }
        }
        let n = self.points.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Split off every `k`-th point (starting at index 0) as a held-out set.
    /// Both halves must stay nonempty.
    pub fn split_every(&self, k: usize) -> Result<(Dataset, Dataset)> {
        if k < 2 {
            return Err(Error::config("split stride must be at least 2"));
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            if i % k == 0 {
                test.push(p.clone());
            } else {
                train.push(p.clone());
            }
        }
        Ok((
            Dataset::new(format!("{}-train", self.name), train)?,
            Dataset::new(format!("{}-test", self.name), test)?,
        ))
    }
}

/// Corners `(+-h, +-h)` of an axis-aligned square of the given side, centred
/// at the origin.
pub fn square_corners(side: f64) -> Vec<Vec<f64>> {
    let h = side / 2.0;
    vec![vec![h, h], vec![-h, h], vec![-h, -h], vec![h, -h]]
}

/// `n_per_mode` isotropic Gaussian draws around each center, interleaved
/// mode by mode.
pub fn gaussian_mixture(centers: &[Vec<f64>], n_per_mode: usize, std: f64, seed: u64) -> Result<Dataset> {
    if centers.is_empty() || n_per_mode == 0 {
        return Err(Error::config("need at least one mode and one point per mode"));
    }
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::config("std must be nonnegative"));
    }
    let mut rng = rng::seeded(seed, STREAM_DATA);
    let mut points = Vec::with_capacity(centers.len() * n_per_mode);
    for _ in 0..n_per_mode {
        for c in centers {
            points.push(c.iter().map(|&m| m + std * rng::normal(&mut rng)).collect());
        }
    }
    Dataset::new(format!("gmm{}", centers.len()), points)
}

pub const GLYPH_SIDE: usize = 8;
pub const GLYPH_CLASSES: usize = 10;

/// Ten 8x8 binary digit-like strokes; `#` is ink.
pub const GLYPH_TEMPLATES: [[&str; GLYPH_SIDE]; GLYPH_CLASSES] = [
    [
        "..####..", ".#....#.", ".#...##.", ".#..#.#.", ".#.#..#.", ".##...#.", ".#....#.", "..####..",
    ],
    [
        "...##...", "..###...", ".#.##...", "...##...", "...##...", "...##...", "...##...", ".######.",
    ],
    [
        "..####..", ".#....#.", "......#.", ".....#..", "...##...", "..#.....", ".#......", ".######.",
    ],
    [
        "..####..", ".#....#.", "......#.", "...###..", "......#.", "......#.", ".#....#.", "..####..",
    ],
    [
        ".....#..", "....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..", ".....#..",
    ],
    [
        ".######.", ".#......", ".#......", ".#####..", "......#.", "......#.", ".#....#.", "..####..",
    ],
    [
        "...###..", "..#.....", ".#......", ".#####..", ".#....#.", ".#....#.", ".#....#.", "..####..",
    ],
    [
        ".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....", "...#....",
    ],
    [
        "..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.", ".#....#.", "..####..",
    ],
    [
        "..####..", ".#....#.", ".#....#.", ".#....#.", "..#####.", "......#.", ".....#..", "..###...",
    ],
];

/// Template `class` as 64 values in `{0, 1}`, row-major.
pub fn glyph_template(class: usize) -> Vec<f64> {
    GLYPH_TEMPLATES[class]
        .iter()
        .flat_map(|row| row.bytes().map(|b| if b == b'#' { 1.0 } else { 0.0 }))
        .collect()
}

/// `n_per_class` noisy copies of each template, interleaved class by class.
/// Each pixel gets `U(-noise, noise)` added and is clamped to `[0, 1]`.
pub fn glyphs(n_per_class: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::config("need at least one glyph per class"));
    }
    if !(0.0..0.5).contains(&noise) {
        return Err(Error::config("glyph noise must lie in [0, 0.5)"));
    }
    let templates: Vec<Vec<f64>> = (0..GLYPH_CLASSES).map(glyph_template).collect();
    let mut rng = rng::seeded(seed, STREAM_DATA);
    let mut points = Vec::with_capacity(n_per_class * GLYPH_CLASSES);
    for _ in 0..n_per_class {
        for t in &templates {
            points.push(
                t.iter()
                    .map(|&v| {
                        if noise == 0.0 {
                            v
                        } else {
                            (v + rng::uniform_in(&mut rng, -noise, noise)).clamp(0.0, 1.0)
                        }
                    })
                    .collect(),
            );
        }
    }
    Dataset::new("glyphs", points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_single_mode_repeats_the_center() {
        let d = gaussian_mixture(&[vec![1.0, 2.0]], 5, 0.0, 3).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.points().iter().all(|p| p == &[1.0, 2.0]));
    }

    #[test]
    fn four_mode_mean_is_near_the_square_center() {
        let std = 0.5;
        let d = gaussian_mixture(&square_corners(4.0), 250, std, 8).unwrap();
        let n = d.len() as f64;
        // Per coordinate the points are a balanced +-2 shift plus N(0, std^2)
        // noise, so the sample mean has standard deviation std / sqrt(N).
        for m in d.mean() {
            assert!(m.abs() < 4.0 * std / libm::sqrt(n), "mean {m}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = gaussian_mixture(&square_corners(4.0), 10, 0.1, 5).unwrap();
        let b = gaussian_mixture(&square_corners(4.0), 10, 0.1, 5).unwrap();
        let c = gaussian_mixture(&square_corners(4.0), 10, 0.1, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(glyphs(3, 0.1, 1).unwrap(), glyphs(3, 0.1, 1).unwrap());
    }

    #[test]
    fn noiseless_glyphs_equal_their_templates() {
        let d = glyphs(2, 0.0, 0).unwrap();
        assert_eq!(d.dim(), 64);
        for (i, p) in d.points().iter().enumerate() {
            assert_eq!(p, &glyph_template(i % GLYPH_CLASSES));
        }
    }

    #[test]
    fn noisy_glyphs_stay_in_unit_range() {
        let d = glyphs(20, 0.45, 2).unwrap();
        assert!(d.points().iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(glyphs(1, 0.5, 0).is_err());
    }

    #[test]
    fn templates_are_pairwise_distinct() {
        for a in 0..GLYPH_CLASSES {
            for row in GLYPH_TEMPLATES[a] {
                assert_eq!(row.len(), GLYPH_SIDE);
            }
            for b in a + 1..GLYPH_CLASSES {
                let (ta, tb) = (glyph_template(a), glyph_template(b));
                let d2: f64 = ta.iter().zip(&tb).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!(d2 > 0.0, "templates {a} and {b} coincide");
            }
        }
    }

    #[test]
    fn mean_matches_streaming_mean() {
        let d = gaussian_mixture(&square_corners(4.0), 100, 0.3, 1).unwrap();
        let mut running = vec![0.0; 2];
        for (k, p) in d.points().iter().enumerate() {
            for (r, v) in running.iter_mut().zip(p) {
                *r += (v - *r) / (k + 1) as f64;
            }
        }
        for (a, b) in d.mean().iter().zip(&running) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_datasets_are_rejected() {
        assert!(Dataset::new("e", vec![]).is_err());
        assert!(Dataset::new("r", vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Dataset::new("n", vec![vec![f64::NAN]]).is_err());
    }
}
