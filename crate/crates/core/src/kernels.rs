//! Shared pseudo-spectral product kernels for the transport and momentum
//! equations. Spectral inputs are component-major coefficient buffers;
//! products are formed on the grid and returned as (optionally dealiased)
//! spectra.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::spectral::Spectral;

/// Velocity and velocity gradient sampled on the grid.
pub(crate) struct VelocitySamples {
    pub v: Vec<f64>,
    /// `(∇v)_{ij} = ∂_j v_i` at component `i * d + j`.
    pub grad: Vec<f64>,
}

/// Strain and strain gradient sampled on the grid.
pub(crate) struct StrainSamples {
    pub e: Vec<f64>,
    /// `∂_l E_{ij}` at component `(i * d + j) * d + l`.
    pub grad: Vec<f64>,
}

fn to_grid(sp: &Spectral, hat: Vec<Complex64>) -> Vec<f64> {
    let mut buf = hat;
    sp.inverse_in_place(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

pub(crate) fn velocity_samples(sp: &Spectral, v_hat: &[Complex64]) -> VelocitySamples {
    let mut all = v_hat.to_vec();
    all.extend(sp.gradient_hat(v_hat));
    let d = sp.grid().dim();
    let np = sp.grid().points();
    let mut data = to_grid(sp, all);
    let grad = data.split_off(d * np);
    VelocitySamples { v: data, grad }
}

pub(crate) fn strain_samples(sp: &Spectral, e_hat: &[Complex64]) -> StrainSamples {
    let mut all = e_hat.to_vec();
    all.extend(sp.gradient_hat(e_hat));
    let d = sp.grid().dim();
    let np = sp.grid().points();
    let mut data = to_grid(sp, all);
    let grad = data.split_off(d * d * np);
    StrainSamples { e: data, grad }
}

/// Transform a batch of physical products, dealiasing when enabled.
pub(crate) fn products_to_spectral(sp: &Spectral, x: Vec<f64>) -> Vec<Complex64> {
    let mut z: Vec<Complex64> = x.into_iter().map(|r| Complex64::new(r, 0.0)).collect();
    sp.forward_in_place(&mut z);
    if sp.dealias_enabled() {
        sp.dealias_in_place(&mut z);
    }
    z
}

/// `(v·∇)v` sampled on the grid.
pub(crate) fn advection(sp: &Spectral, vel: &VelocitySamples) -> Vec<f64> {
    let d = sp.grid().dim();
    let np = sp.grid().points();
    let mut out = vec![0.0; d * np];
    out.par_chunks_mut(np).enumerate().for_each(|(i, dst)| {
        for j in 0..d {
            let vj = &vel.v[j * np..(j + 1) * np];
            let g = &vel.grad[(i * d + j) * np..(i * d + j + 1) * np];
            for ((o, a), b) in dst.iter_mut().zip(vj).zip(g) {
                *o += a * b;
            }
        }
    });
    out
}

/// `-(v·∇)E + (∇v)E` sampled on the grid.
pub(crate) fn strain_nonlinear(
    sp: &Spectral,
    vel: &VelocitySamples,
    strain: &StrainSamples,
) -> Vec<f64> {
    let d = sp.grid().dim();
    let np = sp.grid().points();
    let mut out = vec![0.0; d * d * np];
    out.par_chunks_mut(np).enumerate().for_each(|(c, dst)| {
        let (i, j) = (c / d, c % d);
        for l in 0..d {
            let vl = &vel.v[l * np..(l + 1) * np];
            let g = &strain.grad[((i * d + j) * d + l) * np..((i * d + j) * d + l + 1) * np];
            for ((o, a), b) in dst.iter_mut().zip(vl).zip(g) {
                *o -= a * b;
            }
        }
        for k in 0..d {
            let gv = &vel.grad[(i * d + k) * np..(i * d + k + 1) * np];
            let ekj = &strain.e[(k * d + j) * np..(k * d + j + 1) * np];
            for ((o, a), b) in dst.iter_mut().zip(gv).zip(ekj) {
                *o += a * b;
            }
        }
    });
    out
}

/// `E Eᵀ` sampled on the grid, full `d x d` layout.
pub(crate) fn strain_gram(sp: &Spectral, e: &[f64]) -> Vec<f64> {
    let d = sp.grid().dim();
    let np = sp.grid().points();
    let mut out = vec![0.0; d * d * np];
    out.par_chunks_mut(np).enumerate().for_each(|(c, dst)| {
        let (i, m) = (c / d, c % d);
        for k in 0..d {
            let a = &e[(i * d + k) * np..(i * d + k + 1) * np];
            let b = &e[(m * d + k) * np..(m * d + k + 1) * np];
            for ((o, x), y) in dst.iter_mut().zip(a).zip(b) {
                *o += x * y;
            }
        }
    });
    out
}

/// `E_{jk} ∂_j E_{ik}` sampled on the grid.
pub(crate) fn stress_nonconservative(sp: &Spectral, strain: &StrainSamples) -> Vec<f64> {
    let d = sp.grid().dim();
    let np = sp.grid().points();
    let mut out = vec![0.0; d * np];
    out.par_chunks_mut(np).enumerate().for_each(|(i, dst)| {
        for j in 0..d {
            for k in 0..d {
                let ejk = &strain.e[(j * d + k) * np..(j * d + k + 1) * np];
                let g = &strain.grad[((i * d + k) * d + j) * np..((i * d + k) * d + j + 1) * np];
                for ((o, a), b) in dst.iter_mut().zip(ejk).zip(g) {
                    *o += a * b;
                }
            }
        }
    });
    out
}

/// Spectrum of the strain tendency `-(v·∇)E + (∇v)E + ∇v`.
pub(crate) fn strain_tendency_hat(
    sp: &Spectral,
    v_hat: &[Complex64],
    vel: &VelocitySamples,
    strain: &StrainSamples,
) -> Vec<Complex64> {
    let mut out = products_to_spectral(sp, strain_nonlinear(sp, vel, strain));
    for (o, g) in out.iter_mut().zip(sp.gradient_hat(v_hat)) {
        *o += g;
    }
    out
}
