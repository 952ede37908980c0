//! Compressible viscoelastic flow at reciprocal Mach number `λ` and the
//! `λ → ∞` incompressible-limit study.
//!
//! ```text
//! ρ_t + ∇·(ρv) = 0,
//! v_t + v·∇v + λ² p'(ρ)/ρ ∇ρ = (μ/ρ)(Δv + ∇∇·v) + (1/ρ)∇·(ρFFᵀ),
//! F_t + v·∇F = ∇v F,
//! ```
//!
//! with `p(ρ) = ρ²/2`, so `p'(ρ)/ρ = 1` and the acoustic speed at rest is `λ`.
//! The continuity equation is kept in conservative form: the mean of `ρ`
//! is invariant to roundoff.

use std::time::Instant;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{random_shell_hat, AdmissibleIC, VelocitySpectrum};
use crate::dynamics::{Scheme, Solver, State, StepperConfig};
use crate::field::{Field, Rank};
use crate::grid::Grid;
use crate::kernels;
use crate::spectral::{SobolevIndex, Spectral, SpectralConfig, SpectralError, ZERO};
use crate::tensor;

/// Real-axis extent of the RK4 stability region, used for the viscous limit.
const RK4_REAL_EXTENT: f64 = 2.78;

#[derive(Debug, Error)]
pub enum MachError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("perturbation bounds violated after construction: {0:?}")]
    Construction(Box<CompressibleIcReport>),
    #[error("numerical divergence at step {step}, t = {t:.6e}: {what}")]
    Divergence { step: usize, t: f64, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressibleConfig {
    pub cfl: f64,
    pub dt_max: f64,
    pub dealias: bool,
}

impl Default for CompressibleConfig {
    fn default() -> Self {
        CompressibleConfig {
            cfl: 0.5,
            dt_max: 0.05,
            dealias: true,
        }
    }
}

impl CompressibleConfig {
    pub fn validate(&self) -> Result<(), MachError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(MachError::InvalidArgument(format!(
                "cfl must lie in (0, 1], got {}",
                self.cfl
            )));
        }
        if !(self.dt_max > 0.0) {
            return Err(MachError::InvalidArgument(format!(
                "dt_max must be positive, got {}",
                self.dt_max
            )));
        }
        Ok(())
    }
}

/// `(ρ, v, F)` in spectral space with the stiffness `λ` and viscosity `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressibleState {
    pub t: f64,
    pub lambda: f64,
    pub mu: f64,
    rho: Vec<Complex64>,
    v: Vec<Complex64>,
    f: Vec<Complex64>,
    grid: Grid,
}

impl CompressibleState {
    pub fn new(
        sp: &Spectral,
        t: f64,
        lambda: f64,
        mu: f64,
        rho: &Field,
        v: &Field,
        f: &Field,
    ) -> Result<Self, MachError> {
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return Err(MachError::InvalidArgument(format!("lambda must be at least 1, got {lambda}")));
        }
        if !(mu > 0.0) {
            return Err(MachError::InvalidArgument(format!("mu must be positive, got {mu}")));
        }
        for (field, rank) in [(rho, Rank::Scalar), (v, Rank::Vector), (f, Rank::Tensor)] {
            if field.rank() != rank {
                return Err(SpectralError::UnsupportedRank(field.rank()).into());
            }
        }
        let state = CompressibleState {
            t,
            lambda,
            mu,
            rho: sp.coefficients(rho)?,
            v: sp.coefficients(v)?,
            f: sp.coefficients(f)?,
            grid: sp.grid(),
        };
        let min_rho = state.min_density(sp);
        if !(min_rho > 0.0) {
            return Err(MachError::Divergence {
                step: 0,
                t,
                what: format!("non-positive density {min_rho:.3e}"),
            });
        }
        Ok(state)
    }

    /// `ρ = 1`, `v = 0`, `F = I`.
    pub fn equilibrium(grid: Grid, lambda: f64, mu: f64) -> Self {
        let np = grid.points();
        let d = grid.dim();
        let mut rho = vec![ZERO; np];
        rho[0] = Complex64::new(np as f64, 0.0);
        let mut f = vec![ZERO; d * d * np];
        for i in 0..d {
            f[(i * d + i) * np] = Complex64::new(np as f64, 0.0);
        }
        CompressibleState {
            t: 0.0,
            lambda,
            mu,
            rho,
            v: vec![ZERO; d * np],
            f,
            grid,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rho_hat(&self) -> &[Complex64] {
        &self.rho
    }

    pub fn v_hat(&self) -> &[Complex64] {
        &self.v
    }

    pub fn f_hat(&self) -> &[Complex64] {
        &self.f
    }

    /// Spectrum of `E = F − I`.
    pub fn e_hat(&self) -> Vec<Complex64> {
        let np = self.grid.points();
        let d = self.grid.dim();
        let mut e = self.f.clone();
        for i in 0..d {
            e[(i * d + i) * np] -= Complex64::new(np as f64, 0.0);
        }
        e
    }

    pub fn density(&self, sp: &Spectral) -> Field {
        Field::from_physical(self.grid, Rank::Scalar, sp.inverse_real(&self.rho))
    }

    pub fn velocity(&self, sp: &Spectral) -> Field {
        Field::from_physical(self.grid, Rank::Vector, sp.inverse_real(&self.v))
    }

    pub fn deformation(&self, sp: &Spectral) -> Field {
        Field::from_physical(self.grid, Rank::Tensor, sp.inverse_real(&self.f))
    }

    pub fn min_density(&self, sp: &Spectral) -> f64 {
        sp.inverse_real(&self.rho)
            .iter()
            .fold(f64::INFINITY, |m, &x| m.min(x))
    }

    /// `∫ρ dx`.
    pub fn mass(&self) -> f64 {
        let np = self.grid.points();
        self.rho[0].re * self.grid.volume() / np as f64
    }

    /// `max |ρ det F − 1|`.
    pub fn rho_det_drift(&self, sp: &Spectral) -> f64 {
        let np = self.grid.points();
        let d = self.grid.dim();
        let rho = sp.inverse_real(&self.rho);
        let f = sp.inverse_real(&self.f);
        (0..np).fold(0.0f64, |m, p| {
            let a = tensor::at(&f, np, d, p);
            m.max((rho[p] * tensor::det(&a, d) - 1.0).abs())
        })
    }

    /// `E_s = ‖λ(ρ − 1)‖²_{H^s} + ‖v‖²_{H^s} + ‖F − I‖²_{H^s}`.
    pub fn energy_s(&self, sp: &Spectral, s: SobolevIndex) -> f64 {
        let np = self.grid.points();
        let mut drho = self.rho.clone();
        drho[0] -= Complex64::new(np as f64, 0.0);
        let o = s.order();
        self.lambda * self.lambda * sp.sobolev_norm_sq_hat(&drho, o)
            + sp.sobolev_norm_sq_hat(&self.v, o)
            + sp.sobolev_norm_sq_hat(&self.e_hat(), o)
    }

    fn is_finite(&self) -> bool {
        self.rho
            .iter()
            .chain(&self.v)
            .chain(&self.f)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Spectral tendencies `(ρ_t, v_t, F_t)`.
#[derive(Debug, Clone)]
pub struct CompressibleTendency {
    pub rho: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub f: Vec<Complex64>,
}

/// Compressible system with its spectral operators.
#[derive(Debug)]
pub struct CompressibleSolver {
    sp: Spectral,
    cfg: CompressibleConfig,
}

impl CompressibleSolver {
    pub fn new(grid: Grid, cfg: CompressibleConfig) -> Result<Self, MachError> {
        cfg.validate()?;
        Ok(CompressibleSolver {
            sp: Spectral::with_config(
                grid,
                SpectralConfig {
                    dealias: cfg.dealias,
                    ..Default::default()
                },
            ),
            cfg,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    fn tendency_parts(
        &self,
        lambda: f64,
        mu: f64,
        rho_hat: &[Complex64],
        v_hat: &[Complex64],
        f_hat: &[Complex64],
    ) -> CompressibleTendency {
        let sp = &self.sp;
        let g = sp.grid();
        let np = g.points();
        let d = g.dim();
        let rho = sp.inverse_real(rho_hat);
        let inv_rho: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
        let vel = kernels::velocity_samples(sp, v_hat);
        let def = kernels::strain_samples(sp, f_hat);

        // continuity
        let mut flux = vec![0.0; d * np];
        for c in 0..d {
            for p in 0..np {
                flux[c * np + p] = rho[p] * vel.v[c * np + p];
            }
        }
        let flux = kernels::products_to_spectral(sp, flux);
        let drho: Vec<Complex64> = sp.divergence_hat(&flux).into_iter().map(|z| -z).collect();

        // stress ∇·(ρFFᵀ)
        let mut gram = kernels::strain_gram(sp, &def.e);
        for c in 0..d * d {
            for p in 0..np {
                gram[c * np + p] *= rho[p];
            }
        }
        let stress = sp.inverse_real(&sp.divergence_hat(&kernels::products_to_spectral(sp, gram)));

        // viscous operator Δv + ∇∇·v
        let mut visc = sp.laplacian_hat(v_hat);
        let graddiv = sp.gradient_hat(&sp.divergence_hat(v_hat));
        for (o, z) in visc.iter_mut().zip(graddiv) {
            *o += z;
        }
        let visc = sp.inverse_real(&visc);

        let adv = kernels::advection(sp, &vel);
        let mut momentum = vec![0.0; d * np];
        for c in 0..d {
            for p in 0..np {
                let i = c * np + p;
                momentum[i] = -adv[i] + inv_rho[p] * (mu * visc[i] + stress[i]);
            }
        }
        let mut dv = kernels::products_to_spectral(sp, momentum);
        let grad_rho = sp.gradient_hat(rho_hat);
        let l2 = lambda * lambda;
        for (o, z) in dv.iter_mut().zip(grad_rho) {
            *o -= z * l2;
        }

        let df = kernels::products_to_spectral(sp, kernels::strain_nonlinear(sp, &vel, &def));
        CompressibleTendency {
            rho: drho,
            v: dv,
            f: df,
        }
    }

    pub fn rhs_compressible(&self, state: &CompressibleState) -> Result<CompressibleTendency, MachError> {
        let min_rho = state.min_density(&self.sp);
        if !(min_rho > 0.0) {
            return Err(MachError::Divergence {
                step: 0,
                t: state.t,
                what: format!("non-positive density {min_rho:.3e}"),
            });
        }
        Ok(self.tendency_parts(state.lambda, state.mu, &state.rho, &state.v, &state.f))
    }

    /// `min(cfl·h/(max|v| + λ max√ρ + 1), cfl·2.78 ρ_min/(2μ|k|²_max), dt_max)`.
    pub fn cfl_dt(&self, state: &CompressibleState) -> f64 {
        let sp = &self.sp;
        let g = sp.grid();
        let np = g.points();
        let d = g.dim();
        let v = sp.inverse_real(&state.v);
        let rho = sp.inverse_real(&state.rho);
        let mut vmax = 0.0f64;
        for p in 0..np {
            vmax = vmax.max((0..d).map(|c| v[c * np + p].powi(2)).sum::<f64>());
        }
        let (rmin, rmax) = rho
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        let speed = vmax.sqrt() + state.lambda * rmax.sqrt() + 1.0;
        let acoustic = self.cfg.cfl * g.spacing() / speed;
        let k2max = sp
            .k2()
            .iter()
            .zip(sp.retained())
            .filter(|(_, &keep)| keep || !sp.dealias_enabled())
            .fold(0.0f64, |m, (&k, _)| m.max(k));
        let viscous = self.cfg.cfl * RK4_REAL_EXTENT * rmin / (2.0 * state.mu * k2max);
        acoustic.min(viscous).min(self.cfg.dt_max)
    }

    /// One classic RK4 step.
    pub fn step_compressible(&self, state: &CompressibleState, dt: f64) -> Result<CompressibleState, MachError> {
        let (lam, mu) = (state.lambda, state.mu);
        let eval = |r: &[Complex64], v: &[Complex64], f: &[Complex64]| self.tendency_parts(lam, mu, r, v, f);
        let add = |a: &[Complex64], k: &[Complex64], h: f64| -> Vec<Complex64> {
            a.iter().zip(k).map(|(x, y)| x + y * h).collect()
        };
        let k1 = self.rhs_compressible(state)?;
        let h = 0.5 * dt;
        let k2 = eval(&add(&state.rho, &k1.rho, h), &add(&state.v, &k1.v, h), &add(&state.f, &k1.f, h));
        let k3 = eval(&add(&state.rho, &k2.rho, h), &add(&state.v, &k2.v, h), &add(&state.f, &k2.f, h));
        let k4 = eval(&add(&state.rho, &k3.rho, dt), &add(&state.v, &k3.v, dt), &add(&state.f, &k3.f, dt));
        let w = dt / 6.0;
        let comb = |u: &[Complex64], a: &[Complex64], b: &[Complex64], c: &[Complex64], e: &[Complex64]| {
            (0..u.len())
                .map(|i| u[i] + (a[i] + 2.0 * b[i] + 2.0 * c[i] + e[i]) * w)
                .collect::<Vec<_>>()
        };
        let next = CompressibleState {
            t: state.t + dt,
            lambda: lam,
            mu,
            rho: comb(&state.rho, &k1.rho, &k2.rho, &k3.rho, &k4.rho),
            v: comb(&state.v, &k1.v, &k2.v, &k3.v, &k4.v),
            f: comb(&state.f, &k1.f, &k2.f, &k3.f, &k4.f),
            grid: state.grid,
        };
        if !next.is_finite() {
            return Err(MachError::Divergence {
                step: 0,
                t: next.t,
                what: "non-finite field values".into(),
            });
        }
        let min_rho = next.min_density(&self.sp);
        if !(min_rho > 0.0) {
            return Err(MachError::Divergence {
                step: 0,
                t: next.t,
                what: format!("non-positive density {min_rho:.3e}"),
            });
        }
        Ok(next)
    }

    /// Advance to `t_target` in equal steps that respect the CFL limit at the
    /// start of the interval. Returns the number of steps taken.
    pub fn advance_to(&self, state: &mut CompressibleState, t_target: f64) -> Result<usize, MachError> {
        let span = t_target - state.t;
        if span <= 0.0 {
            return Ok(0);
        }
        let dt_cfl = self.cfl_dt(state);
        let m = (span / dt_cfl).ceil().max(1.0) as usize;
        let dt = span / m as f64;
        for _ in 0..m {
            *state = self.step_compressible(state, dt)?;
        }
        state.t = t_target;
        Ok(m)
    }
}

// -------------------------------------------------------------------------
// Initial data
// -------------------------------------------------------------------------

/// Parameters of the well-prepared perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressibleIcParams {
    pub lambda: f64,
    pub delta0: f64,
    pub seed: u64,
    pub s: SobolevIndex,
    pub spectrum: VelocitySpectrum,
}

/// Measured perturbation norms against their bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressibleIcReport {
    pub s: u32,
    /// `‖ρ − 1‖_{H^s}` and `δ₀/λ²`.
    pub rho_norm: f64,
    pub rho_bound: f64,
    /// `‖v − v₀‖_{H^{s+1}}` and `δ₀/λ`.
    pub v_norm: f64,
    pub v_bound: f64,
    /// `‖F − F₀‖_{H^s}` and `δ₀/λ`.
    pub f_norm: f64,
    pub f_bound: f64,
    /// `max |ρ det F − 1|`.
    pub rho_det_drift: f64,
}

impl CompressibleIcReport {
    pub fn within_bounds(&self) -> bool {
        self.rho_norm <= self.rho_bound && self.v_norm <= self.v_bound && self.f_norm <= self.f_bound
    }
}

fn scale_to(hat: &mut [Complex64], norm: f64, target: f64) {
    if norm > 0.0 {
        let s = target / norm;
        for z in hat.iter_mut() {
            *z *= s;
        }
    }
}

/// Perturb admissible incompressible data into compressible data with
/// `ρ det F = 1` pointwise.
///
/// `ṽ` (random, not projected) is scaled to `δ₀/(2λ)` in `H^{s+1}`. A random
/// trace-free `G` gives `F' = (I + G)F₀` with `‖GF₀‖_{H^s} ≈ δ₀/(2λ)`, and a
/// random `ρ̃` of size `δ₀/(2λ²)` in `H^s` sets the density. Then
/// `F = c F'` with `cᵈ = det F₀ / ((1 + ρ̃) det F')` and `ρ = 1/det F`, which
/// gives `ρ ≈ 1 + ρ̃`. All three bounds are verified on the result.
pub fn gen_compressible_ic(
    sp: &Spectral,
    ic: &AdmissibleIC,
    mu: f64,
    params: &CompressibleIcParams,
) -> Result<(CompressibleState, CompressibleIcReport), MachError> {
    let CompressibleIcParams {
        lambda,
        delta0,
        seed,
        s,
        spectrum,
    } = *params;
    if !(delta0 >= 0.0 && delta0.is_finite()) {
        return Err(MachError::InvalidArgument(format!("delta0 must be non-negative, got {delta0}")));
    }
    if !(lambda >= 1.0) {
        return Err(MachError::InvalidArgument(format!("lambda must be at least 1, got {lambda}")));
    }
    let g = sp.grid();
    let np = g.points();
    let d = g.dim();
    let so = s.order();

    let v0 = sp.coefficients(&ic.v0)?;
    let e0 = sp.inverse_real(&sp.coefficients(&ic.e0)?);
    let mut f0 = e0.clone();
    for i in 0..d {
        for p in 0..np {
            f0[(i * d + i) * np + p] += 1.0;
        }
    }

    let mut v_pert = random_shell_hat(sp, seed ^ 0x5eed_0001, d, &spectrum);
    let mut rho_pert = random_shell_hat(sp, seed ^ 0x5eed_0002, 1, &spectrum);
    let mut g_hat = random_shell_hat(sp, seed ^ 0x5eed_0003, d * d, &spectrum);
    // trace-free G
    for p in 0..np {
        let tr: Complex64 = (0..d).map(|i| g_hat[(i * d + i) * np + p]).sum();
        for i in 0..d {
            g_hat[(i * d + i) * np + p] -= tr / d as f64;
        }
    }
    if delta0 == 0.0 {
        v_pert.iter_mut().for_each(|z| *z = ZERO);
        rho_pert.iter_mut().for_each(|z| *z = ZERO);
        g_hat.iter_mut().for_each(|z| *z = ZERO);
    } else {
        let vn = sp.sobolev_norm_sq_hat(&v_pert, so + 1).sqrt();
        scale_to(&mut v_pert, vn, 0.5 * delta0 / lambda);
        let rn = sp.sobolev_norm_sq_hat(&rho_pert, so).sqrt();
        scale_to(&mut rho_pert, rn, 0.5 * delta0 / (lambda * lambda));
    }
    let gphys = sp.inverse_real(&g_hat);
    let mut gf = vec![0.0; d * d * np];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for p in 0..np {
                    gf[(i * d + j) * np + p] += gphys[(i * d + k) * np + p] * f0[(k * d + j) * np + p];
                }
            }
        }
    }
    if delta0 > 0.0 {
        let gf_hat = sp.forward_real(&gf);
        let n = sp.sobolev_norm_sq_hat(&gf_hat, so).sqrt();
        if n > 0.0 {
            let sc = 0.5 * delta0 / lambda / n;
            gf.iter_mut().for_each(|x| *x *= sc);
        }
    }
    let rho_r = sp.inverse_real(&rho_pert);
    let mut f = vec![0.0; d * d * np];
    let mut rho = vec![0.0; np];
    for p in 0..np {
        let a0 = tensor::at(&f0, np, d, p);
        let mut a = a0;
        for c in 0..d * d {
            a[c] += gf[c * np + p];
        }
        let c = (tensor::det(&a0, d) / ((1.0 + rho_r[p]) * tensor::det(&a, d))).powf(1.0 / d as f64);
        for comp in 0..d * d {
            f[comp * np + p] = c * a[comp];
        }
        let af = tensor::at(&f, np, d, p);
        rho[p] = 1.0 / tensor::det(&af, d);
    }
    let v: Vec<Complex64> = v0.iter().zip(&v_pert).map(|(a, b)| a + b).collect();
    let v_field = Field::from_spectral(g, Rank::Vector, v);
    let state = CompressibleState::new(
        sp,
        0.0,
        lambda,
        mu,
        &Field::from_physical(g, Rank::Scalar, rho.clone()),
        &v_field,
        &Field::from_physical(g, Rank::Tensor, f.clone()),
    )?;

    let drho: Vec<f64> = rho.iter().map(|r| r - 1.0).collect();
    let df: Vec<f64> = f.iter().zip(&f0).map(|(a, b)| a - b).collect();
    let report = CompressibleIcReport {
        s: so,
        rho_norm: sp.sobolev_norm_sq_hat(&sp.forward_real(&drho), so).sqrt(),
        rho_bound: delta0 / (lambda * lambda),
        v_norm: sp.sobolev_norm_sq_hat(&v_pert, so + 1).sqrt(),
        v_bound: delta0 / lambda,
        f_norm: sp.sobolev_norm_sq_hat(&sp.forward_real(&df), so).sqrt(),
        f_bound: delta0 / lambda,
        rho_det_drift: state.rho_det_drift(sp),
    };
    // with δ₀ = 0 the only perturbation is the manufacture defect of det F₀
    if delta0 > 0.0 && !report.within_bounds() {
        return Err(MachError::Construction(Box::new(report)));
    }
    Ok((state, report))
}

// -------------------------------------------------------------------------
// Limit study
// -------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitStudyConfig {
    pub mu: f64,
    pub t_win: f64,
    pub delta0: f64,
    pub seed: u64,
    pub s: SobolevIndex,
    /// Number of equally spaced sample times in `(0, t_win]`.
    pub samples: usize,
    pub compressible: CompressibleConfig,
    /// Fixed step of the incompressible reference (explicit RK4).
    pub reference_dt: f64,
    pub spectrum: VelocitySpectrum,
    /// Reference runs whose `‖v‖²_{H²} + ‖E‖²_{H²}` exceeds this are unstable.
    pub blowup_ceiling: f64,
}

impl Default for LimitStudyConfig {
    fn default() -> Self {
        LimitStudyConfig {
            mu: 1.0,
            t_win: 1.0,
            delta0: 0.05,
            seed: 0,
            s: SobolevIndex::new(4).expect("order 4 is supported"),
            samples: 20,
            compressible: CompressibleConfig::default(),
            reference_dt: 1e-3,
            spectrum: VelocitySpectrum::default(),
            blowup_ceiling: crate::dynamics::DEFAULT_BLOWUP_CEILING,
        }
    }
}

/// Per-sample record of one member run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub t: f64,
    pub error: f64,
    pub projected_error: f64,
    pub energy_s: f64,
    pub mass: f64,
    pub rho_det_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRun {
    pub lambda: f64,
    pub samples: Vec<LimitSample>,
    pub sup_error: f64,
    pub projected_error: f64,
    pub max_es: f64,
    pub steps: usize,
    pub wall_time: f64,
    pub ic_report: Option<CompressibleIcReport>,
    /// Present when the run failed before the end of the window.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitStudyResult {
    pub lambdas: Vec<f64>,
    /// Sup-in-time raw `‖v^λ − v‖`.
    pub errors: Vec<f64>,
    /// Sup-in-time `‖P v^λ − v‖`.
    pub projected_errors: Vec<f64>,
    /// Least-squares slope of `log projected_error` against `log λ`.
    pub rate: Option<f64>,
    /// RMS residual of the log-log fit.
    pub rate_residual: Option<f64>,
    pub max_es: Vec<f64>,
    pub es_energies: Vec<Vec<(f64, f64)>>,
    pub runs: Vec<LambdaRun>,
    /// Effective window end (shortened when the reference is unstable).
    pub t_win: f64,
    pub annotations: Vec<String>,
    pub partial: bool,
}

/// Least-squares slope and RMS residual of `y` against `x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum();
    Some((slope, (rss / n).sqrt()))
}

fn l2_diff(sp: &Spectral, a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    sp.sobolev_norm_sq_hat(&d, 0).sqrt()
}

/// Incompressible reference velocity spectra at the sample times; stops
/// early when the reference becomes unstable.
fn reference_series(
    grid: Grid,
    ic: &AdmissibleIC,
    cfg: &LimitStudyConfig,
    times: &[f64],
) -> Result<(Vec<Vec<Complex64>>, Option<String>), MachError> {
    let solver = Solver::new(
        grid,
        StepperConfig {
            dealias: cfg.compressible.dealias,
            ..StepperConfig::fixed(cfg.reference_dt, Scheme::Erk4)
        },
    )
    .map_err(|e| MachError::InvalidArgument(e.to_string()))?;
    let sp = solver.spectral();
    let mut state =
        State::from_ic(sp, ic, cfg.mu).map_err(|e| MachError::InvalidArgument(e.to_string()))?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - state.t;
        let m = (span / cfg.reference_dt).ceil().max(1.0) as usize;
        let dt = span / m as f64;
        for _ in 0..m {
            state = solver.step(&state, dt);
        }
        state.t = t;
        let h2 = sp.sobolev_norm_sq_hat(state.v_hat(), 2) + sp.sobolev_norm_sq_hat(state.e_hat(), 2);
        if !state.is_finite() || !(h2 <= cfg.blowup_ceiling) {
            return Ok((out, Some(format!("incompressible reference unstable before t = {t:.6e}"))));
        }
        out.push(state.v_hat().to_vec());
    }
    Ok((out, None))
}

fn member_run(
    solver: &CompressibleSolver,
    ic: &AdmissibleIC,
    cfg: &LimitStudyConfig,
    lambda: f64,
    times: &[f64],
    reference: &[Vec<Complex64>],
) -> LambdaRun {
    let start = Instant::now();
    let sp = solver.spectral();
    let mut run = LambdaRun {
        lambda,
        samples: Vec::new(),
        sup_error: 0.0,
        projected_error: 0.0,
        max_es: 0.0,
        steps: 0,
        wall_time: 0.0,
        ic_report: None,
        failure: None,
    };
    let params = CompressibleIcParams {
        lambda,
        delta0: cfg.delta0,
        seed: cfg.seed,
        s: cfg.s,
        spectrum: cfg.spectrum,
    };
    let mut state = match gen_compressible_ic(sp, ic, cfg.mu, &params) {
        Ok((st, rep)) => {
            run.ic_report = Some(rep);
            st
        }
        Err(e) => {
            run.failure = Some(e.to_string());
            run.wall_time = start.elapsed().as_secs_f64();
            return run;
        }
    };
    run.max_es = state.energy_s(sp, cfg.s);
    for (t, v_ref) in times.iter().zip(reference) {
        match solver.advance_to(&mut state, *t) {
            Ok(m) => run.steps += m,
            Err(e) => {
                run.failure = Some(e.to_string());
                break;
            }
        }
        let mut pv = state.v_hat().to_vec();
        sp.leray_in_place(&mut pv);
        let sample = LimitSample {
            t: *t,
            error: l2_diff(sp, state.v_hat(), v_ref),
            projected_error: l2_diff(sp, &pv, v_ref),
            energy_s: state.energy_s(sp, cfg.s),
            mass: state.mass(),
            rho_det_drift: state.rho_det_drift(sp),
        };
        run.sup_error = run.sup_error.max(sample.error);
        run.projected_error = run.projected_error.max(sample.projected_error);
        run.max_es = run.max_es.max(sample.energy_s);
        run.samples.push(sample);
    }
    run.wall_time = start.elapsed().as_secs_f64();
    run
}

/// Incompressible reference once, then one compressible run per `λ` (in
/// parallel), compared at common sample times.
pub fn limit_study(
    grid: Grid,
    ic: &AdmissibleIC,
    lambdas: &[f64],
    cfg: &LimitStudyConfig,
) -> Result<LimitStudyResult, MachError> {
    if lambdas.is_empty() {
        return Err(MachError::InvalidArgument("at least one lambda is required".into()));
    }
    if lambdas.iter().any(|l| !(*l >= 1.0)) {
        return Err(MachError::InvalidArgument("every lambda must be at least 1".into()));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MachError::InvalidArgument("lambdas must be strictly increasing".into()));
    }
    if !(cfg.t_win > 0.0) || cfg.samples == 0 {
        return Err(MachError::InvalidArgument(
            "t_win must be positive and samples at least 1".into(),
        ));
    }
    let times: Vec<f64> = (1..=cfg.samples)
        .map(|i| cfg.t_win * i as f64 / cfg.samples as f64)
        .collect();
    let (reference, ref_failure) = reference_series(grid, ic, cfg, &times)?;
    let mut annotations = Vec::new();
    if let Some(msg) = ref_failure {
        annotations.push(msg);
    }
    if reference.is_empty() {
        return Ok(LimitStudyResult {
            lambdas: lambdas.to_vec(),
            errors: vec![],
            projected_errors: vec![],
            rate: None,
            rate_residual: None,
            max_es: vec![],
            es_energies: vec![],
            runs: vec![],
            t_win: 0.0,
            annotations,
            partial: true,
        });
    }
    let times = &times[..reference.len()];
    let solver = CompressibleSolver::new(grid, cfg.compressible)?;
    let runs: Vec<LambdaRun> = lambdas
        .par_iter()
        .map(|&lam| member_run(&solver, ic, cfg, lam, times, &reference))
        .collect();
    let mut partial = !annotations.is_empty();
    for r in &runs {
        if let Some(f) = &r.failure {
            partial = true;
            annotations.push(format!("lambda = {}: {f}", r.lambda));
        }
    }
    let projected: Vec<f64> = runs.iter().map(|r| r.projected_error).collect();
    let fit = if runs.iter().all(|r| r.failure.is_none()) {
        loglog_fit(lambdas, &projected)
    } else {
        None
    };
    Ok(LimitStudyResult {
        lambdas: lambdas.to_vec(),
        errors: runs.iter().map(|r| r.sup_error).collect(),
        projected_errors: projected,
        rate: fit.map(|f| f.0),
        rate_residual: fit.map(|f| f.1),
        max_es: runs.iter().map(|r| r.max_es).collect(),
        es_energies: runs
            .iter()
            .map(|r| r.samples.iter().map(|s| (s.t, s.energy_s)).collect())
            .collect(),
        t_win: *times.last().expect("non-empty"),
        runs,
        annotations,
        partial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solver(n: usize) -> CompressibleSolver {
        CompressibleSolver::new(Grid::new(2, n).unwrap(), CompressibleConfig::default()).unwrap()
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let s = solver(16);
        let st = CompressibleState::equilibrium(s.spectral().grid(), 10.0, 1.0);
        let k = s.rhs_compressible(&st).unwrap();
        let m = k.rho.iter().chain(&k.v).chain(&k.f).fold(0.0f64, |m, z| m.max(z.norm()));
        assert_eq!(m, 0.0);
        let next = s.step_compressible(&st, 1e-3).unwrap();
        assert_eq!(next.rho_hat(), st.rho_hat());
        assert_eq!(next.f_hat(), st.f_hat());
        assert_relative_eq!(st.mass(), (2.0 * std::f64::consts::PI).powi(2), max_relative = 1e-14);
    }

    #[test]
    fn acoustic_cfl_scales_with_lambda() {
        let s = CompressibleSolver::new(
            Grid::new(2, 64).unwrap(),
            CompressibleConfig {
                dt_max: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let g = s.spectral().grid();
        let a = s.cfl_dt(&CompressibleState::equilibrium(g, 100.0, 1e-6));
        let b = s.cfl_dt(&CompressibleState::equilibrium(g, 200.0, 1e-6));
        assert_relative_eq!(a / b, 201.0 / 101.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_positive_density() {
        let s = solver(16);
        let g = s.spectral().grid();
        let rho = Field::from_fn(g, Rank::Scalar, |x, _| x[0].cos());
        let v = Field::zeros(g, Rank::Vector, crate::field::Repr::Physical);
        let f = Field::constant_tensor(g, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            CompressibleState::new(s.spectral(), 0.0, 5.0, 1.0, &rho, &v, &f),
            Err(MachError::Divergence { .. })
        ));
    }

    #[test]
    fn loglog_fit_recovers_power() {
        let x = [5.0, 10.0, 20.0, 40.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.0)).collect();
        let (slope, res) = loglog_fit(&x, &y).unwrap();
        assert_relative_eq!(slope, -1.0, epsilon = 1e-12);
        assert!(res < 1e-12);
        assert!(loglog_fit(&[5.0], &[1.0]).is_none());
    }

    #[test]
    fn unperturbed_ic_keeps_incompressible_data() {
        let s = solver(16);
        let sp = s.spectral();
        let ic = AdmissibleIC::equilibrium(sp.grid());
        let (st, rep) = gen_compressible_ic(
            sp,
            &ic,
            1.0,
            &CompressibleIcParams {
                lambda: 10.0,
                delta0: 0.0,
                seed: 1,
                s: SobolevIndex::new(4).unwrap(),
                spectrum: VelocitySpectrum::default(),
            },
        )
        .unwrap();
        assert_eq!(st, CompressibleState::equilibrium(sp.grid(), 10.0, 1.0));
        assert_eq!(rep.rho_norm, 0.0);
    }
}
