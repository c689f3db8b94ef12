//! Exact Euclidean distance transform.
//!
//! Two-phase algorithm (Meijster et al.): a column scan builds per-cell
//! vertical distances to the nearest background, then a row scan minimizes
//! parabolas over columns. All arithmetic is integer, so squared distances
//! are exact and comparisons are never subject to float rounding. Background
//! cells read 0.

use crate::mask::Mask;
use crate::scalar::{from_sq, Scalar};

/// How cells beyond the grid edge are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum BorderPolicy {
    /// A virtual background ring surrounds the grid: a foreground cell on the
    /// edge has distance 1. The default.
    #[default]
    #[serde(rename = "background")]
    Background,
    /// Only real background cells count; an all-foreground mask has no finite
    /// distances anywhere.
    #[serde(rename = "ignored")]
    Ignored,
}

/// Sentinel squared distance for "no background reachable".
pub const INF_SQ: u64 = u64::MAX;

// Internal 1-D sentinel. Small enough that its square plus any in-grid term
// stays far below u64::MAX, large enough to dominate every real distance.
const G_INF: u64 = 1 << 20;

/// Grid of exact squared distances. Values are `u64` so the argmax and the
/// polarity comparison in the click oracle are integer-exact; callers wanting
/// real distances take square roots through [`DistanceField::value`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    sq: Vec<u64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn sq_at(&self, row: usize, col: usize) -> u64 {
        self.sq[row * self.width + col]
    }

    pub fn sq_values(&self) -> &[u64] {
        &self.sq
    }

    /// Euclidean distance at a cell; infinity for the sentinel.
    pub fn value<F: Scalar>(&self, row: usize, col: usize) -> F {
        let sq = self.sq_at(row, col);
        if sq == INF_SQ {
            F::infinity()
        } else {
            from_sq::<F>(sq).sqrt()
        }
    }

    pub fn max_sq(&self) -> u64 {
        self.sq.iter().copied().max().unwrap_or(0)
    }

    /// First cell in row-major order attaining the maximum. Ties break to the
    /// smallest row, then the smallest column, by construction of the scan.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        if self.sq.is_empty() {
            return None;
        }
        let mut best = 0usize;
        for (i, &v) in self.sq.iter().enumerate() {
            if v > self.sq[best] {
                best = i;
            }
        }
        Some((best / self.width, best % self.width))
    }
}

/// Exact squared-distance transform of the foreground of `mask`.
pub fn edt(mask: &Mask, policy: BorderPolicy) -> DistanceField {
    let (w, h) = (mask.width(), mask.height());
    if w == 0 || h == 0 {
        return DistanceField { width: w, height: h, sq: Vec::new() };
    }

    let border_g = match policy {
        BorderPolicy::Background => 1,
        BorderPolicy::Ignored => G_INF,
    };

    // Phase 1: per-column vertical distances.
    let mut g = vec![0u64; w * h];
    for c in 0..w {
        for r in 0..h {
            g[r * w + c] = if !mask.get(r, c) {
                0
            } else if r == 0 {
                border_g
            } else {
                (g[(r - 1) * w + c] + 1).min(G_INF)
            };
        }
        for r in (0..h).rev() {
            let below = if r == h - 1 { border_g } else { (g[(r + 1) * w + c] + 1).min(G_INF) };
            if below < g[r * w + c] {
                g[r * w + c] = below;
            }
        }
    }

    // Phase 2: per-row lower envelope of parabolas f(x, i) = (x-i)^2 + g(i)^2.
    let mut sq = vec![0u64; w * h];
    let mut s = vec![0usize; w];
    let mut t = vec![0u64; w];
    let f = |x: usize, i: usize, g2i: u64| -> u64 {
        let d = x.abs_diff(i) as u64;
        d * d + g2i
    };
    for r in 0..h {
        let row_g = &g[r * w..(r + 1) * w];
        let g2: Vec<u64> = row_g.iter().map(|&v| v * v).collect();
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(t[q as usize] as usize, s[q as usize], g2[s[q as usize]]) > f(t[q as usize] as usize, u, g2[u])
            {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                // First column where u's parabola wins over s[q]'s, by exact
                // floor division; i128 avoids sign and overflow pitfalls.
                let i = s[q as usize] as i128;
                let uu = u as i128;
                let num = uu * uu - i * i + g2[u] as i128 - g2[s[q as usize]] as i128;
                let sep = num.div_euclid(2 * (uu - i));
                let wsep = sep + 1;
                if wsep < w as i128 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = wsep.max(0) as u64;
                }
            }
        }
        for u in (0..w).rev() {
            let mut v = f(u, s[q as usize], g2[s[q as usize]]);
            if policy == BorderPolicy::Background {
                // Virtual background columns just beyond the left/right edges.
                let left = (u as u64 + 1) * (u as u64 + 1);
                let right = (w - u) as u64 * (w - u) as u64;
                v = v.min(left).min(right);
            }
            sq[r * w + u] = if v >= G_INF * G_INF { INF_SQ } else { v };
            if q > 0 && u as u64 == t[q as usize] {
                q -= 1;
            }
        }
    }

    DistanceField { width: w, height: h, sq }
}
