//! Binary masks on a pixel grid.
//!
//! Row-major bits packed into 64-bit words. Trailing bits of the last word
//! are kept zero at all times so counting ops can popcount whole words.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("cell ({row},{col}) outside {width}x{height} grid")]
    OutOfBounds { row: usize, col: usize, width: usize, height: usize },
    #[error("payload of {got} bytes does not match {width}x{height} mask")]
    BadPayload { width: usize, height: usize, got: usize },
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        let nbits = width * height;
        Mask { width, height, words: vec![0; nbits.div_ceil(64)] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Mask::new(width, height);
        for r in 0..height {
            for c in 0..width {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn shape_check(&self, other: &Mask) -> Result<(), MaskError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(MaskError::DimensionMismatch(self.width, self.height, other.width, other.height))
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width
    }

    #[inline]
    fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(self.contains(row, col));
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        assert!(self.contains(row, col), "cell ({row},{col}) outside {}x{} grid", self.width, self.height);
        let i = self.index(row, col);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(self.contains(row, col), "cell ({row},{col}) outside {}x{} grid", self.width, self.height);
        let i = self.index(row, col);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Mask for the valid bits of the final word; all earlier words are fully used.
    fn tail_mask(&self) -> u64 {
        let rem = (self.width * self.height) % 64;
        if rem == 0 {
            u64::MAX
        } else {
            (1u64 << rem) - 1
        }
    }

    fn zip_words(&self, other: &Mask, f: impl Fn(u64, u64) -> u64) -> Mask {
        assert!(self.same_shape(other), "mask shape mismatch");
        let words = self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect();
        Mask { width: self.width, height: self.height, words }
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip_words(other, |a, b| a & b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip_words(other, |a, b| a | b)
    }

    pub fn xor(&self, other: &Mask) -> Mask {
        self.zip_words(other, |a, b| a ^ b)
    }

    /// Cells set in `self` but not in `other`.
    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip_words(other, |a, b| a & !b)
    }

    pub fn not(&self) -> Mask {
        let mut words: Vec<u64> = self.words.iter().map(|&w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= self.tail_mask();
        }
        Mask { width: self.width, height: self.height, words }
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        assert!(self.same_shape(other), "mask shape mismatch");
        self.words.iter().zip(&other.words).map(|(&a, &b)| (a & b).count_ones() as usize).sum()
    }

    pub fn union_count(&self, other: &Mask) -> usize {
        assert!(self.same_shape(other), "mask shape mismatch");
        self.words.iter().zip(&other.words).map(|(&a, &b)| (a | b).count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        (0..self.height * self.width)
            .filter(move |&i| self.words[i / 64] >> (i % 64) & 1 == 1)
            .map(move |i| (i / w, i % w))
    }

    /// Packed little-endian byte image of the bit grid, canonical because the
    /// padding bits are always zero.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Mask, MaskError> {
        let nwords = (width * height).div_ceil(64);
        if bytes.len() != nwords * 8 {
            return Err(MaskError::BadPayload { width, height, got: bytes.len() });
        }
        let words: Vec<u64> =
            bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        let m = Mask { width, height, words };
        // Reject payloads with set padding bits: they cannot have come from to_bytes.
        if let Some(&last) = m.words.last() {
            if last & !m.tail_mask() != 0 {
                return Err(MaskError::BadPayload { width, height, got: bytes.len() });
            }
        }
        Ok(m)
    }
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mask({}x{}, {} set)", self.width, self.height, self.count_ones())
    }
}
