//! Clicks and the normalized-to-pixel coordinate rule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        matches!(self, Polarity::Positive)
    }
}

/// A single click in pixel coordinates. `radius_hint` is an optional
/// annotation consumed only by the built-in disc segmenter: the radius of the
/// largest disc around the click guaranteed to stay inside the error region
/// the click was placed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radius_hint: Option<f64>,
}

impl Click {
    pub fn positive(row: usize, col: usize) -> Self {
        Click { row, col, polarity: Polarity::Positive, radius_hint: None }
    }

    pub fn negative(row: usize, col: usize) -> Self {
        Click { row, col, polarity: Polarity::Negative, radius_hint: None }
    }
}

/// Maps normalized coordinates (x right, y down, both in [0,1]) to a pixel:
/// col = min(floor(x*width), width-1), row = min(floor(y*height), height-1).
/// Both edges map inside the grid, so x = 1.0 is the last column.
pub fn to_pixel(x: f64, y: f64, width: usize, height: usize) -> (usize, usize) {
    debug_assert!(width > 0 && height > 0);
    let col = ((x * width as f64).floor() as usize).min(width - 1);
    let row = ((y * height as f64).floor() as usize).min(height - 1);
    (row, col)
}

/// Inverse of [`to_pixel`] for emission: the center of a pixel, which
/// round-trips exactly through `to_pixel`.
pub fn to_normalized(row: usize, col: usize, width: usize, height: usize) -> (f64, f64) {
    ((col as f64 + 0.5) / width as f64, (row as f64 + 0.5) / height as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_stay_inside() {
        assert_eq!(to_pixel(0.0, 0.0, 10, 8), (0, 0));
        assert_eq!(to_pixel(1.0, 1.0, 10, 8), (7, 9));
        assert_eq!(to_pixel(0.5, 0.25, 10, 8), (2, 5));
    }

    #[test]
    fn center_roundtrip_is_exact() {
        for (w, h) in [(1, 1), (7, 3), (64, 64), (33, 17)] {
            for row in 0..h {
                for col in 0..w {
                    let (x, y) = to_normalized(row, col, w, h);
                    assert_eq!(to_pixel(x, y, w, h), (row, col));
                }
            }
        }
    }
}
