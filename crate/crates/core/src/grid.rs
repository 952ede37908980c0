//! Periodic lattice on the torus `[0, 2π)^dim`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("unsupported dimension {0}: only 2 and 3 are supported")]
    Dimension(usize),
    #[error("unsupported resolution {0}: points per axis must be a power of two and at least 8")]
    Resolution(usize),
}

/// Uniform periodic grid with `n` points per axis on `[0, 2π)^dim`.
///
/// Points are stored row-major: axis 0 varies slowest, the last axis is
/// contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self, GridError> {
        if dim != 2 && dim != 3 {
            return Err(GridError::Dimension(dim));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(GridError::Resolution(n));
        }
        Ok(Grid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of lattice points, `n^dim`.
    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn length(&self) -> f64 {
        2.0 * PI
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Volume of the periodic box, `(2π)^dim`.
    pub fn volume(&self) -> f64 {
        self.length().powi(self.dim as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Largest wavenumber magnitude kept by the two-thirds rule.
    pub fn dealias_cutoff(&self) -> f64 {
        self.n as f64 / 3.0
    }

    /// Signed wavenumber for FFT index `i`, in `{-n/2+1, ..., n/2}`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn nyquist(&self) -> i64 {
        self.n as i64 / 2
    }

    /// Per-axis indices of a flat point index; unused trailing axes are zero.
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let n = self.n;
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rem % n;
            rem /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .fold(0, |acc, &i| acc * self.n + (i % self.n))
    }

    /// Physical coordinates of a lattice point.
    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let h = self.spacing();
        let idx = self.multi_index(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = h * idx[axis] as f64;
        }
        x
    }

    /// Signed wavenumber vector of a flat spectral index.
    pub fn wavevector(&self, flat: usize) -> [i64; 3] {
        let idx = self.multi_index(flat);
        let mut k = [0i64; 3];
        for axis in 0..self.dim {
            k[axis] = self.wavenumber(idx[axis]);
        }
        k
    }

    /// Flat index of the mode `-k`, the Hermitian partner of `flat`.
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let n = self.n;
        let idx = self.multi_index(flat);
        let mut out = [0usize; 3];
        for axis in 0..self.dim {
            out[axis] = (n - idx[axis]) % n;
        }
        self.flat_index(&out[..self.dim])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(Grid::new(1, 16), Err(GridError::Dimension(1)));
        assert_eq!(Grid::new(4, 16), Err(GridError::Dimension(4)));
        assert_eq!(Grid::new(2, 4), Err(GridError::Resolution(4)));
        assert_eq!(Grid::new(2, 24), Err(GridError::Resolution(24)));
        assert!(Grid::new(3, 8).is_ok());
    }

    #[test]
    fn wavenumbers_cover_half_open_band() {
        let g = Grid::new(2, 8).unwrap();
        let ks: Vec<i64> = (0..8).map(|i| g.wavenumber(i)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, 4, -3, -2, -1]);
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(3, 8).unwrap();
        for flat in [0, 1, 9, 77, 511] {
            let idx = g.multi_index(flat);
            assert_eq!(g.flat_index(&idx[..3]), flat);
        }
        let k = g.wavevector(g.flat_index(&[1, 7, 3]));
        assert_eq!(k, [1, -1, 3]);
        let c = g.conjugate_index(g.flat_index(&[1, 7, 3]));
        assert_eq!(g.wavevector(c), [-1, 1, -3]);
    }
}
