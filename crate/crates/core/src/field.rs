//! Sampled scalar, vector and tensor fields over a [`Grid`].

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Tensor rank of a field. `AntiPair` holds the rank-3 object
/// `T[i][(j, m)]` antisymmetric in its last two indices, stored for `j < m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rank {
    Scalar,
    Vector,
    Tensor,
    AntiPair,
}

impl Rank {
    pub fn components(self, dim: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => dim,
            Rank::Tensor => dim * dim,
            Rank::AntiPair => dim * dim * (dim - 1) / 2,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::Tensor => 2,
            Rank::AntiPair => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector),
            2 => Some(Rank::Tensor),
            3 => Some(Rank::AntiPair),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repr {
    Physical,
    Spectral,
}

impl Repr {
    pub fn code(self) -> u8 {
        match self {
            Repr::Physical => 0,
            Repr::Spectral => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Repr::Physical),
            1 => Some(Repr::Spectral),
            _ => None,
        }
    }
}

/// Component-major sample storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// Index pairs `(j, m)`, `j < m`, in storage order for [`Rank::AntiPair`].
pub fn anti_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for j in 0..dim {
        for m in (j + 1)..dim {
            pairs.push((j, m));
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    rank: Rank,
    samples: Samples,
}

impl Field {
    pub fn zeros(grid: Grid, rank: Rank, repr: Repr) -> Self {
        let len = rank.components(grid.dim()) * grid.points();
        let samples = match repr {
            Repr::Physical => Samples::Physical(vec![0.0; len]),
            Repr::Spectral => Samples::Spectral(vec![Complex64::new(0.0, 0.0); len]),
        };
        Field {
            grid,
            rank,
            samples,
        }
    }

    /// Physical field from a sampling function `f(x, component)`.
    pub fn from_fn(grid: Grid, rank: Rank, f: impl Fn(&[f64; 3], usize) -> f64) -> Self {
        let np = grid.points();
        let nc = rank.components(grid.dim());
        let mut data = vec![0.0; nc * np];
        for p in 0..np {
            let x = grid.coords(p);
            for c in 0..nc {
                data[c * np + p] = f(&x, c);
            }
        }
        Field {
            grid,
            rank,
            samples: Samples::Physical(data),
        }
    }

    pub fn from_physical(grid: Grid, rank: Rank, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rank.components(grid.dim()) * grid.points(),
            "sample count does not match grid and rank"
        );
        Field {
            grid,
            rank,
            samples: Samples::Physical(data),
        }
    }

    pub fn from_spectral(grid: Grid, rank: Rank, data: Vec<Complex64>) -> Self {
        assert_eq!(
            data.len(),
            rank.components(grid.dim()) * grid.points(),
            "coefficient count does not match grid and rank"
        );
        Field {
            grid,
            rank,
            samples: Samples::Spectral(data),
        }
    }

    /// Constant tensor field `value[i][j]` (row-major `dim x dim`).
    pub fn constant_tensor(grid: Grid, value: &[f64]) -> Self {
        let d = grid.dim();
        assert_eq!(value.len(), d * d);
        Field::from_fn(grid, Rank::Tensor, |_, c| value[c])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn repr(&self) -> Repr {
        match self.samples {
            Samples::Physical(_) => Repr::Physical,
            Samples::Spectral(_) => Repr::Spectral,
        }
    }

    pub fn components(&self) -> usize {
        self.rank.components(self.grid.dim())
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    pub fn physical(&self) -> Option<&[f64]> {
        match &self.samples {
            Samples::Physical(d) => Some(d),
            Samples::Spectral(_) => None,
        }
    }

    pub fn physical_mut(&mut self) -> Option<&mut [f64]> {
        match &mut self.samples {
            Samples::Physical(d) => Some(d),
            Samples::Spectral(_) => None,
        }
    }

    pub fn spectral(&self) -> Option<&[Complex64]> {
        match &self.samples {
            Samples::Spectral(d) => Some(d),
            Samples::Physical(_) => None,
        }
    }

    pub fn spectral_mut(&mut self) -> Option<&mut [Complex64]> {
        match &mut self.samples {
            Samples::Spectral(d) => Some(d),
            Samples::Physical(_) => None,
        }
    }

    /// Physical samples of one component.
    pub fn component(&self, c: usize) -> Option<&[f64]> {
        let np = self.grid.points();
        self.physical().map(|d| &d[c * np..(c + 1) * np])
    }

    /// Storage index of tensor component `(i, j)`.
    pub fn tensor_index(&self, i: usize, j: usize) -> usize {
        i * self.grid.dim() + j
    }

    /// Largest absolute sample over all components (physical) or largest
    /// coefficient modulus (spectral).
    pub fn max_abs(&self) -> f64 {
        match &self.samples {
            Samples::Physical(d) => d.iter().fold(0.0, |m, x| m.max(x.abs())),
            Samples::Spectral(d) => d.iter().fold(0.0, |m, z| m.max(z.norm())),
        }
    }

    pub fn is_finite(&self) -> bool {
        match &self.samples {
            Samples::Physical(d) => d.iter().all(|x| x.is_finite()),
            Samples::Spectral(d) => d.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    /// `self * a`, preserving representation.
    pub fn scaled(&self, a: f64) -> Field {
        let samples = match &self.samples {
            Samples::Physical(d) => Samples::Physical(d.iter().map(|x| a * x).collect()),
            Samples::Spectral(d) => Samples::Spectral(d.iter().map(|z| z * a).collect()),
        };
        Field {
            grid: self.grid,
            rank: self.rank,
            samples,
        }
    }

    /// `self + a * other`. Both fields must share grid, rank and representation.
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        assert_eq!(self.rank, other.rank, "rank mismatch");
        let samples = match (&self.samples, &other.samples) {
            (Samples::Physical(x), Samples::Physical(y)) => {
                Samples::Physical(x.iter().zip(y).map(|(x, y)| x + a * y).collect())
            }
            (Samples::Spectral(x), Samples::Spectral(y)) => {
                Samples::Spectral(x.iter().zip(y).map(|(x, y)| x + y * a).collect())
            }
            _ => panic!("representation mismatch"),
        };
        Field {
            grid: self.grid,
            rank: self.rank,
            samples,
        }
    }

    /// Largest absolute difference between two physical fields.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        match (&self.samples, &other.samples) {
            (Samples::Physical(x), Samples::Physical(y)) => x
                .iter()
                .zip(y)
                .fold(0.0, |m, (a, b)| m.max((a - b).abs())),
            (Samples::Spectral(x), Samples::Spectral(y)) => x
                .iter()
                .zip(y)
                .fold(0.0, |m, (a, b)| m.max((a - b).norm())),
            _ => panic!("representation mismatch"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_counts() {
        assert_eq!(Rank::Scalar.components(3), 1);
        assert_eq!(Rank::Vector.components(2), 2);
        assert_eq!(Rank::Tensor.components(3), 9);
        assert_eq!(Rank::AntiPair.components(2), 2);
        assert_eq!(Rank::AntiPair.components(3), 9);
        assert_eq!(anti_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn from_fn_layout_is_component_major() {
        let g = Grid::new(2, 8).unwrap();
        let f = Field::from_fn(g, Rank::Vector, |x, c| if c == 0 { x[0] } else { -x[1] });
        let d = f.physical().unwrap();
        assert_eq!(d.len(), 128);
        assert_eq!(d[g.flat_index(&[3, 0])], 3.0 * g.spacing());
        assert_eq!(d[64 + g.flat_index(&[0, 5])], -5.0 * g.spacing());
    }

    #[test]
    fn axpy_and_scale() {
        let g = Grid::new(2, 8).unwrap();
        let a = Field::from_fn(g, Rank::Scalar, |x, _| x[0]);
        let b = a.scaled(2.0).axpy(-2.0, &a);
        assert_eq!(b.max_abs(), 0.0);
    }
}
