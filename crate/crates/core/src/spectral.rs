//! Fourier transforms and spectral calculus on the periodic box.
//!
//! Conventions:
//! - forward transform is unnormalized, the inverse carries `1/N`;
//! - derivatives multiply by `i k_j` with the Nyquist wavenumber zeroed, so
//!   odd derivatives of real data stay Hermitian;
//! - `(∇v)_{ij} = ∂_j v_i` and `(∇·F)_i = ∂_j F_{ij}` (row divergence);
//! - the two-thirds rule drops every mode with some `|k_j| > n/3`.
//!
//! The same derivative wavenumbers are used for the Leray projector and the
//! Sobolev weights, so `‖f‖²_{H¹} = ‖f‖² + ‖∇f‖²` holds exactly and the
//! projector annihilates every discrete gradient.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{anti_pairs, Field, Rank, Repr, Samples};
use crate::grid::Grid;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Highest Sobolev order accepted by [`SobolevIndex`].
pub const MAX_SOBOLEV_ORDER: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("expected a field in {expected:?} representation, got {found:?}")]
    WrongRepr { expected: Repr, found: Repr },
    #[error("spectrum is not Hermitian: relative imaginary residue {residue:.3e} exceeds {tol:.1e}")]
    NotHermitian { residue: f64, tol: f64 },
    #[error("operation does not support a field of rank {0:?}")]
    UnsupportedRank(Rank),
    #[error("Sobolev order {0} is not supported (maximum {MAX_SOBOLEV_ORDER})")]
    UnsupportedOrder(u32),
    #[error("field lives on {found:?}, operator built for {expected:?}")]
    GridMismatch { expected: Grid, found: Grid },
}

/// Order `s` of the Sobolev space `H^s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SobolevIndex(u32);

impl TryFrom<u32> for SobolevIndex {
    type Error = SpectralError;
    fn try_from(s: u32) -> Result<Self, Self::Error> {
        SobolevIndex::new(s)
    }
}

impl From<SobolevIndex> for u32 {
    fn from(s: SobolevIndex) -> u32 {
        s.0
    }
}

impl SobolevIndex {
    pub const L2: SobolevIndex = SobolevIndex(0);
    pub const H1: SobolevIndex = SobolevIndex(1);
    pub const H2: SobolevIndex = SobolevIndex(2);

    pub fn new(s: u32) -> Result<Self, SpectralError> {
        if s > MAX_SOBOLEV_ORDER {
            return Err(SpectralError::UnsupportedOrder(s));
        }
        Ok(SobolevIndex(s))
    }

    pub fn order(self) -> u32 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConfig {
    /// Apply the two-thirds rule to nonlinear products.
    pub dealias: bool,
    /// Relative imaginary residue tolerated by [`Spectral::to_physical`].
    pub hermitian_tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            dealias: true,
            hermitian_tol: 1e-12,
        }
    }
}

/// Planned transforms and wavenumber tables for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    config: SpectralConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Derivative wavenumbers per flat index, Nyquist zeroed.
    kd: Vec<[f64; 3]>,
    k2: Vec<f64>,
    keep: Vec<bool>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .field("config", &self.config)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        Self::with_config(grid, SpectralConfig::default())
    }

    pub fn with_config(grid: Grid, config: SpectralConfig) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n());
        let inverse = planner.plan_fft_inverse(grid.n());
        let np = grid.points();
        let nyq = grid.nyquist();
        let cutoff = grid.dealias_cutoff();
        let mut kd = Vec::with_capacity(np);
        let mut k2 = Vec::with_capacity(np);
        let mut keep = Vec::with_capacity(np);
        for p in 0..np {
            let k = grid.wavevector(p);
            let mut kv = [0.0; 3];
            let mut retained = true;
            for axis in 0..grid.dim() {
                if k[axis] != nyq {
                    kv[axis] = k[axis] as f64;
                }
                if (k[axis].abs() as f64) > cutoff {
                    retained = false;
                }
            }
            k2.push(kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2]);
            kd.push(kv);
            keep.push(retained);
        }
        Spectral {
            grid,
            config,
            forward,
            inverse,
            kd,
            k2,
            keep,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn config(&self) -> SpectralConfig {
        self.config
    }

    pub fn dealias_enabled(&self) -> bool {
        self.config.dealias
    }

    /// Derivative wavevector of a flat spectral index.
    pub fn kd(&self, p: usize) -> [f64; 3] {
        self.kd[p]
    }

    /// `|k|²` of the derivative wavevectors.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// Two-thirds retention mask.
    pub fn retained(&self) -> &[bool] {
        &self.keep
    }

    // ---------------------------------------------------------------------
    // Raw transforms on component-major buffers
    // ---------------------------------------------------------------------

    fn transform_component(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.grid.n();
        let d = self.grid.dim();
        let np = buf.len();
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
        let mut lines = vec![ZERO; np];
        for axis in 0..d - 1 {
            let stride = n.pow((d - 1 - axis) as u32);
            let block = n * stride;
            for start in (0..np).step_by(block) {
                let tmp = &mut lines[..block];
                for j in 0..n {
                    let row = &buf[start + j * stride..start + (j + 1) * stride];
                    for (o, z) in row.iter().enumerate() {
                        tmp[o * n + j] = *z;
                    }
                }
                fft.process_with_scratch(tmp, &mut scratch);
                for j in 0..n {
                    let row = &mut buf[start + j * stride..start + (j + 1) * stride];
                    for (o, z) in row.iter_mut().enumerate() {
                        *z = tmp[o * n + j];
                    }
                }
            }
        }
        if inverse {
            let s = 1.0 / np as f64;
            for z in buf.iter_mut() {
                *z *= s;
            }
        }
    }

    /// In-place forward DFT of every component of a component-major buffer.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        let np = self.grid.points();
        buf.par_chunks_mut(np)
            .for_each(|c| self.transform_component(c, false));
    }

    /// In-place normalized inverse DFT of every component.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        let np = self.grid.points();
        buf.par_chunks_mut(np)
            .for_each(|c| self.transform_component(c, true));
    }

    /// Forward transform of real samples.
    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, z: &[Complex64]) -> Vec<f64> {
        let mut buf = z.to_vec();
        self.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Zero every mode removed by the two-thirds rule, in place.
    pub fn dealias_in_place(&self, buf: &mut [Complex64]) {
        let np = self.grid.points();
        for comp in buf.chunks_mut(np) {
            for (z, &k) in comp.iter_mut().zip(&self.keep) {
                if !k {
                    *z = ZERO;
                }
            }
        }
    }

    /// Forward transform of a physical product, dealiased when enabled.
    pub fn product_to_spectral(&self, x: &[f64]) -> Vec<Complex64> {
        let mut z = self.forward_real(x);
        if self.config.dealias {
            self.dealias_in_place(&mut z);
        }
        z
    }

    // ---------------------------------------------------------------------
    // Raw spectral calculus on component-major coefficient buffers
    // ---------------------------------------------------------------------

    /// `∂_axis` of one spectral component.
    pub fn derivative_hat(&self, src: &[Complex64], axis: usize) -> Vec<Complex64> {
        src.iter()
            .zip(&self.kd)
            .map(|(z, k)| I * k[axis] * z)
            .collect()
    }

    /// Gradient of `ncomp` components: output component `c * dim + j` is `∂_j f_c`.
    pub fn gradient_hat(&self, src: &[Complex64]) -> Vec<Complex64> {
        let np = self.grid.points();
        let d = self.grid.dim();
        let mut out = Vec::with_capacity(src.len() * d);
        for comp in src.chunks(np) {
            for j in 0..d {
                out.extend(comp.iter().zip(&self.kd).map(|(z, k)| I * k[j] * z));
            }
        }
        out
    }

    /// Row divergence: groups of `dim` consecutive components are contracted
    /// with `i k_j`. A vector gives a scalar, a tensor gives its row divergence.
    pub fn divergence_hat(&self, src: &[Complex64]) -> Vec<Complex64> {
        let np = self.grid.points();
        let d = self.grid.dim();
        let rows = src.len() / (np * d);
        let mut out = vec![ZERO; rows * np];
        for r in 0..rows {
            let dst = &mut out[r * np..(r + 1) * np];
            for j in 0..d {
                let comp = &src[(r * d + j) * np..(r * d + j + 1) * np];
                for ((o, z), k) in dst.iter_mut().zip(comp).zip(&self.kd) {
                    *o += I * k[j] * z;
                }
            }
        }
        out
    }

    /// Column divergence of a tensor, `(∇·Eᵀ)_i = ∂_j E_{ji}`.
    pub fn transpose_divergence_hat(&self, src: &[Complex64]) -> Vec<Complex64> {
        let np = self.grid.points();
        let d = self.grid.dim();
        let mut out = vec![ZERO; d * np];
        for i in 0..d {
            let dst = &mut out[i * np..(i + 1) * np];
            for j in 0..d {
                let comp = &src[(j * d + i) * np..(j * d + i + 1) * np];
                for ((o, z), k) in dst.iter_mut().zip(comp).zip(&self.kd) {
                    *o += I * k[j] * z;
                }
            }
        }
        out
    }

    pub fn laplacian_hat(&self, src: &[Complex64]) -> Vec<Complex64> {
        let np = self.grid.points();
        src.chunks(np)
            .flat_map(|comp| comp.iter().zip(&self.k2).map(|(z, k2)| -z * *k2))
            .collect()
    }

    /// Leray projector `(I - k kᵀ/|k|²)` applied to a vector spectrum in place.
    pub fn leray_in_place(&self, v: &mut [Complex64]) {
        let np = self.grid.points();
        let d = self.grid.dim();
        for p in 0..np {
            let k2 = self.k2[p];
            if k2 == 0.0 {
                continue;
            }
            let k = self.kd[p];
            let mut kv = ZERO;
            for j in 0..d {
                kv += v[j * np + p] * k[j];
            }
            let f = kv / k2;
            for j in 0..d {
                v[j * np + p] -= f * k[j];
            }
        }
    }

    /// Solve `Δu = f` with zero mean for every component.
    pub fn inverse_laplacian_hat(&self, src: &[Complex64]) -> Vec<Complex64> {
        let np = self.grid.points();
        src.chunks(np)
            .flat_map(|comp| {
                comp.iter()
                    .zip(&self.k2)
                    .map(|(z, &k2)| if k2 == 0.0 { ZERO } else { -z / k2 })
            })
            .collect()
    }

    /// Squared `H^s` norm of a component-major spectrum, Parseval-normalized.
    pub fn sobolev_norm_sq_hat(&self, src: &[Complex64], s: u32) -> f64 {
        let np = self.grid.points();
        let scale = self.grid.volume() / (np as f64 * np as f64);
        let mut total = 0.0;
        for comp in src.chunks(np) {
            for (z, &k2) in comp.iter().zip(&self.k2) {
                total += (1.0 + k2).powi(s as i32) * z.norm_sqr();
            }
        }
        total * scale
    }

    /// Squared norm with weight `|k|^{2a} (1+|k|²)^s`.
    pub fn weighted_norm_sq_hat(&self, src: &[Complex64], grad_order: u32, s: u32) -> f64 {
        let np = self.grid.points();
        let scale = self.grid.volume() / (np as f64 * np as f64);
        let mut total = 0.0;
        for comp in src.chunks(np) {
            for (z, &k2) in comp.iter().zip(&self.k2) {
                total += k2.powi(grad_order as i32) * (1.0 + k2).powi(s as i32) * z.norm_sqr();
            }
        }
        total * scale
    }

    // ---------------------------------------------------------------------
    // Field-level operations
    // ---------------------------------------------------------------------

    fn check_grid(&self, f: &Field) -> Result<(), SpectralError> {
        if f.grid() != self.grid {
            return Err(SpectralError::GridMismatch {
                expected: self.grid,
                found: f.grid(),
            });
        }
        Ok(())
    }

    pub fn to_spectral(&self, f: &Field) -> Result<Field, SpectralError> {
        self.check_grid(f)?;
        match f.samples() {
            Samples::Physical(x) => Ok(Field::from_spectral(
                self.grid,
                f.rank(),
                self.forward_real(x),
            )),
            Samples::Spectral(_) => Err(SpectralError::WrongRepr {
                expected: Repr::Physical,
                found: Repr::Spectral,
            }),
        }
    }

    pub fn to_physical(&self, f: &Field) -> Result<Field, SpectralError> {
        self.check_grid(f)?;
        match f.samples() {
            Samples::Spectral(z) => {
                let mut buf = z.to_vec();
                self.inverse_in_place(&mut buf);
                let (max_im, max_abs) = buf
                    .iter()
                    .fold((0.0f64, 0.0f64), |(mi, ma), c| (mi.max(c.im.abs()), ma.max(c.norm())));
                if max_abs > 0.0 {
                    let residue = max_im / max_abs;
                    if residue > self.config.hermitian_tol {
                        return Err(SpectralError::NotHermitian {
                            residue,
                            tol: self.config.hermitian_tol,
                        });
                    }
                }
                Ok(Field::from_physical(
                    self.grid,
                    f.rank(),
                    buf.into_iter().map(|c| c.re).collect(),
                ))
            }
            Samples::Physical(_) => Err(SpectralError::WrongRepr {
                expected: Repr::Spectral,
                found: Repr::Physical,
            }),
        }
    }

    /// Spectral coefficients of `f` regardless of its representation.
    pub fn coefficients(&self, f: &Field) -> Result<Vec<Complex64>, SpectralError> {
        self.check_grid(f)?;
        Ok(match f.samples() {
            Samples::Physical(x) => self.forward_real(x),
            Samples::Spectral(z) => z.to_vec(),
        })
    }

    /// Wrap coefficients in a field with the requested representation.
    fn emit(&self, rank: Rank, hat: Vec<Complex64>, repr: Repr) -> Field {
        match repr {
            Repr::Spectral => Field::from_spectral(self.grid, rank, hat),
            Repr::Physical => Field::from_physical(self.grid, rank, self.inverse_real(&hat)),
        }
    }

    /// `∇f`; scalar to vector or vector to tensor with `(∇v)_{ij} = ∂_j v_i`.
    /// The result has the same representation as the input.
    pub fn gradient(&self, f: &Field) -> Result<Field, SpectralError> {
        let out_rank = match f.rank() {
            Rank::Scalar => Rank::Vector,
            Rank::Vector => Rank::Tensor,
            r => return Err(SpectralError::UnsupportedRank(r)),
        };
        let hat = self.coefficients(f)?;
        Ok(self.emit(out_rank, self.gradient_hat(&hat), f.repr()))
    }

    /// `∇·f`; vector to scalar, tensor to vector with `(∇·F)_i = ∂_j F_{ij}`.
    pub fn divergence(&self, f: &Field) -> Result<Field, SpectralError> {
        let out_rank = match f.rank() {
            Rank::Vector => Rank::Scalar,
            Rank::Tensor => Rank::Vector,
            r => return Err(SpectralError::UnsupportedRank(r)),
        };
        let hat = self.coefficients(f)?;
        Ok(self.emit(out_rank, self.divergence_hat(&hat), f.repr()))
    }

    /// `(∇·Eᵀ)_i = ∂_j E_{ji}` of a tensor field.
    pub fn transpose_divergence(&self, f: &Field) -> Result<Field, SpectralError> {
        if f.rank() != Rank::Tensor {
            return Err(SpectralError::UnsupportedRank(f.rank()));
        }
        let hat = self.coefficients(f)?;
        Ok(self.emit(Rank::Vector, self.transpose_divergence_hat(&hat), f.repr()))
    }

    pub fn laplacian(&self, f: &Field) -> Result<Field, SpectralError> {
        let hat = self.coefficients(f)?;
        Ok(self.emit(f.rank(), self.laplacian_hat(&hat), f.repr()))
    }

    /// `∇_m E_{ij} - ∇_j E_{im}` for all `i` and `j < m`; component
    /// `i * npairs + p` holds pair `p` of [`anti_pairs`].
    pub fn curl_tensor(&self, e: &Field) -> Result<Field, SpectralError> {
        if e.rank() != Rank::Tensor {
            return Err(SpectralError::UnsupportedRank(e.rank()));
        }
        let hat = self.coefficients(e)?;
        Ok(self.emit(Rank::AntiPair, self.curl_tensor_hat(&hat), e.repr()))
    }

    pub(crate) fn curl_tensor_hat(&self, e_hat: &[Complex64]) -> Vec<Complex64> {
        let np = self.grid.points();
        let d = self.grid.dim();
        let pairs = anti_pairs(d);
        let mut out = Vec::with_capacity(d * pairs.len() * np);
        for i in 0..d {
            for &(j, m) in &pairs {
                let eij = &e_hat[(i * d + j) * np..(i * d + j + 1) * np];
                let eim = &e_hat[(i * d + m) * np..(i * d + m + 1) * np];
                out.extend(
                    eij.iter()
                        .zip(eim)
                        .zip(&self.kd)
                        .map(|((a, b), k)| I * (a * k[m] - b * k[j])),
                );
            }
        }
        out
    }

    /// Leray projection onto divergence-free vector fields; the mean passes through.
    pub fn leray_project(&self, v: &Field) -> Result<Field, SpectralError> {
        if v.rank() != Rank::Vector {
            return Err(SpectralError::UnsupportedRank(v.rank()));
        }
        let mut hat = self.coefficients(v)?;
        self.leray_in_place(&mut hat);
        Ok(self.emit(Rank::Vector, hat, v.repr()))
    }

    /// Two-thirds rule on a spectral field.
    pub fn dealias(&self, f: &Field) -> Result<Field, SpectralError> {
        self.check_grid(f)?;
        match f.samples() {
            Samples::Spectral(z) => {
                let mut out = z.to_vec();
                self.dealias_in_place(&mut out);
                Ok(Field::from_spectral(self.grid, f.rank(), out))
            }
            Samples::Physical(_) => Err(SpectralError::WrongRepr {
                expected: Repr::Spectral,
                found: Repr::Physical,
            }),
        }
    }

    /// `‖f‖_{H^s}` summed over components; `s = 0` is the `L²` norm.
    pub fn sobolev_norm(&self, f: &Field, s: SobolevIndex) -> Result<f64, SpectralError> {
        let hat = self.coefficients(f)?;
        Ok(self.sobolev_norm_sq_hat(&hat, s.order()).sqrt())
    }

    pub fn l2_norm(&self, f: &Field) -> Result<f64, SpectralError> {
        self.sobolev_norm(f, SobolevIndex::L2)
    }
}
