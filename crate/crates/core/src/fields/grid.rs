use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FyError, Result};

/// Uniform periodic grid on the flat torus of complex dimension `n`.
///
/// Real coordinates are `x¹ … x^{2n}` in `[0, 2π)` with
/// `z^j = x^{2j−1} + i x^{2j}`. Samples are stored row-major with axis 0
/// varying slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    points_per_axis: usize,
}

impl TorusGrid {
    pub const MAX_DIM: usize = 4;

    pub fn new(n: usize, points_per_axis: usize) -> Result<Self> {
        if !(2..=Self::MAX_DIM).contains(&n) {
            return Err(FyError::Domain(format!(
                "complex dimension must be in 2..={}, got {n}",
                Self::MAX_DIM
            )));
        }
        if points_per_axis < 4 || !points_per_axis.is_multiple_of(2) {
            return Err(FyError::Domain(format!(
                "points per axis must be even and >= 4, got {points_per_axis}"
            )));
        }
        let total = (points_per_axis as u64).checked_pow(2 * n as u32);
        if total.is_none_or(|t| t > (1 << 28)) {
            return Err(FyError::Domain(format!(
                "grid {points_per_axis}^{} is too large",
                2 * n
            )));
        }
        Ok(TorusGrid { n, points_per_axis })
    }

    /// Complex dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of real axes, `2n`.
    pub fn axes(&self) -> usize {
        2 * self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.points_per_axis as f64
    }

    /// Stride of `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.axes() - 1 - axis) as u32)
    }

    /// Integer position of `idx` along `axis`.
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.points_per_axis
    }

    pub fn coordinate(&self, idx: usize, axis: usize) -> f64 {
        self.axis_index(idx, axis) as f64 * self.spacing()
    }

    pub fn coordinates(&self, idx: usize) -> Vec<f64> {
        (0..self.axes()).map(|a| self.coordinate(idx, a)).collect()
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        (0..self.axes()).map(|a| self.axis_index(idx, a)).collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .enumerate()
            .map(|(a, &m)| (m % self.points_per_axis) * self.stride(a))
            .sum()
    }

    /// Flat index of the point reached from `idx` by an integer shift.
    pub fn shifted(&self, idx: usize, shift: &[isize]) -> usize {
        let np = self.points_per_axis as isize;
        let multi: Vec<usize> = self
            .multi_index(idx)
            .iter()
            .zip(shift)
            .map(|(&m, &s)| (m as isize + s).rem_euclid(np) as usize)
            .collect();
        self.flat_index(&multi)
    }

    /// Signed wavenumber of Fourier index `m` along one axis.
    pub fn wavenumber(&self, m: usize) -> i64 {
        let np = self.points_per_axis as i64;
        let m = m as i64;
        if m <= np / 2 {
            m
        } else {
            m - np
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(TorusGrid::new(1, 8).is_err());
        assert!(TorusGrid::new(5, 8).is_err());
        assert!(TorusGrid::new(2, 6).is_ok());
        assert!(TorusGrid::new(2, 7).is_err());
        assert!(TorusGrid::new(2, 2).is_err());
    }

    #[test]
    fn layout_round_trip() {
        let g = TorusGrid::new(2, 4).unwrap();
        assert_eq!(g.len(), 256);
        for idx in [0, 1, 17, 255] {
            assert_eq!(g.flat_index(&g.multi_index(idx)), idx);
        }
        assert_eq!(g.axis_index(1, 3), 1);
        assert_eq!(g.axis_index(64, 0), 1);
        assert_eq!(g.shifted(0, &[-1, 0, 0, 0]), 192);
    }
}
