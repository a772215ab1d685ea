use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{InvError, Result};
use crate::image::Image;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    SheppLogan,
    /// Random rectangles and ellipses on a dark background.
    Shapes,
    /// Gaussian bump on a gentle ramp.
    SmoothBump,
    /// Constant 0.5.
    Flat,
}

/// Modified Shepp–Logan ellipses: intensity, semi-axes, centre, rotation (deg).
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Pixel centre in `[-1, 1]²`, `y` pointing up.
fn coords(i: usize, j: usize, h: usize, w: usize) -> (f64, f64) {
    ((2 * j + 1) as f64 / w as f64 - 1.0, 1.0 - (2 * i + 1) as f64 / h as f64)
}

fn in_ellipse(x: f64, y: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> bool {
    let (s, c) = phi_deg.to_radians().sin_cos();
    let (dx, dy) = (x - x0, y - y0);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    (u / a).powi(2) + (v / b).powi(2) <= 1.0
}

fn shepp_logan(h: usize, w: usize) -> Image {
    let raw = Image::from_fn(h, w, |i, j| {
        let (x, y) = coords(i, j, h, w);
        SHEPP_LOGAN
            .iter()
            .filter(|e| in_ellipse(x, y, e.1, e.2, e.3, e.4, e.5))
            .map(|e| e.0)
            .sum::<f64>()
            .max(0.0)
    });
    let max = raw.data().iter().copied().fold(0.0, f64::max);
    raw.map(|v| v / max)
}

fn shapes(h: usize, w: usize, seed: u64) -> Image {
    let mut g = rng::rng(seed);
    let count = g.random_range(2..=4);
    let mut img = Image::zeros(h, w);
    for _ in 0..count {
        let ellipse = g.random_bool(0.5);
        let (cx, cy) = (g.random_range(-0.6..0.6), g.random_range(-0.6..0.6));
        let (a, b) = (g.random_range(0.15..0.5), g.random_range(0.15..0.5));
        let intensity = g.random_range(0.3..1.0);
        for i in 0..h {
            for j in 0..w {
                let (x, y) = coords(i, j, h, w);
                let inside = if ellipse { in_ellipse(x, y, a, b, cx, cy, 0.0) } else { (x - cx).abs() <= a && (y - cy).abs() <= b };
                if inside {
                    img.set(i, j, intensity);
                }
            }
        }
    }
    img
}

fn smooth_bump(h: usize, w: usize, seed: u64) -> Image {
    let mut g = rng::rng(seed);
    let (cx, cy) = (g.random_range(-0.2..0.2), g.random_range(-0.2..0.2));
    let s = g.random_range(0.3..0.5);
    Image::from_fn(h, w, |i, j| {
        let (x, y) = coords(i, j, h, w);
        let bump = (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp();
        0.1 + 0.6 * bump + 0.2 * (x + 1.0) / 2.0
    })
}

/// Deterministic synthetic test image with values in `[0, 1]`.
pub fn make_phantom(kind: PhantomKind, height: usize, width: usize, seed: u64) -> Result<Image> {
    if height < 8 || width < 8 {
        return Err(InvError::InvalidSpec(format!("phantom needs at least 8x8 pixels, got {height}x{width}")));
    }
    Ok(match kind {
        PhantomKind::SheppLogan => shepp_logan(height, width),
        PhantomKind::Shapes => shapes(height, width, seed),
        PhantomKind::SmoothBump => smooth_bump(height, width, seed),
        PhantomKind::Flat => Image::filled(height, width, 0.5),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feature {
    Square { size: usize, intensity: f64 },
}

/// Copy of `x` with the feature written over the pixels starting at
/// `(row, col)` (top-left corner).
pub fn insert_feature(x: &Image, feature: Feature, row: usize, col: usize) -> Result<Image> {
    let Feature::Square { size, intensity } = feature;
    if row + size > x.height() || col + size > x.width() {
        return Err(InvError::InvalidSpec(format!(
            "square of size {size} at ({row}, {col}) exceeds {}x{} image",
            x.height(),
            x.width()
        )));
    }
    let mut out = x.clone();
    for i in row..row + size {
        for j in col..col + size {
            out.set(i, j, intensity);
        }
    }
    Ok(out)
}

/// Top-left corner placing a square of `size` at the image centre.
pub fn centered(x: &Image, size: usize) -> (usize, usize) {
    (x.height().saturating_sub(size) / 2, x.width().saturating_sub(size) / 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_bounds() {
        let f = make_phantom(PhantomKind::Flat, 8, 9, 0).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.5));
        for kind in [PhantomKind::SheppLogan, PhantomKind::Shapes, PhantomKind::SmoothBump] {
            let p = make_phantom(kind, 32, 24, 3).unwrap();
            assert!(p.data().iter().all(|&v| (0.0..=1.0).contains(&v)), "{kind:?}");
        }
        assert!(make_phantom(PhantomKind::Flat, 7, 8, 0).is_err());
    }

    #[test]
    fn shepp_logan_scaled() {
        let p = make_phantom(PhantomKind::SheppLogan, 64, 64, 0).unwrap();
        assert_eq!(p.data().iter().copied().fold(f64::MIN, f64::max), 1.0);
        assert!(p.data().iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn shapes_are_seeded() {
        let a = make_phantom(PhantomKind::Shapes, 16, 16, 5).unwrap();
        assert_eq!(a, make_phantom(PhantomKind::Shapes, 16, 16, 5).unwrap());
        assert_ne!(a, make_phantom(PhantomKind::Shapes, 16, 16, 6).unwrap());
    }

    #[test]
    fn feature_insertion_is_local() {
        let x = make_phantom(PhantomKind::SmoothBump, 16, 16, 1).unwrap();
        assert_eq!(insert_feature(&x, Feature::Square { size: 0, intensity: 1.0 }, 3, 3).unwrap(), x);
        let y = insert_feature(&x, Feature::Square { size: 3, intensity: 0.9 }, 2, 5).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let inside = (2..5).contains(&i) && (5..8).contains(&j);
                assert_eq!(y.get(i, j), if inside { 0.9 } else { x.get(i, j) });
            }
        }
        assert!(insert_feature(&x, Feature::Square { size: 4, intensity: 1.0 }, 13, 0).is_err());
    }
}
