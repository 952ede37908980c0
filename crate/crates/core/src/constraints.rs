//! Admissible initial data and constraint residuals.
//!
//! Admissible data `(v₀, E₀)` satisfy
//!
//! ```text
//! ∇·v₀ = 0,   det(I + E₀) = 1,   ∇·E₀ᵀ = 0,
//! ∇_m E_ij − ∇_j E_im = E_lj ∇_l E_im − E_lm ∇_l E_ij.
//! ```
//!
//! Strains are manufactured by transporting `E` from zero under a prescribed
//! divergence-free velocity with `E_s + v·∇E = ∇v E + ∇v`. The zero strain
//! satisfies every constraint and the transport preserves them, so the result
//! is admissible up to discretization error, which is measured and returned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{anti_pairs, Field, Rank, Repr};
use crate::grid::Grid;
use crate::kernels;
use crate::spectral::{Spectral, SpectralError, ZERO};
use crate::tensor;

/// Default bound on every residual of manufactured data.
pub const DEFAULT_MANUFACTURE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("prescribed velocity is not divergence-free: max |∇·v| = {0:.3e}")]
    NotSolenoidal(f64),
    #[error("manufactured data exceed tolerance {tolerance:.1e}: {residuals}")]
    Manufacture {
        residuals: Box<ConstraintResiduals>,
        tolerance: f64,
    },
}

/// L² norms of the five residual fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualL2 {
    pub div_v: f64,
    pub det_res: f64,
    pub div_et: f64,
    pub curl_res: f64,
    pub trace_res: f64,
}

/// Pointwise (L∞) constraint residuals, with L² norms alongside.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    /// `max |∇·v|`
    pub div_v: f64,
    /// `max |det(I+E) − 1|`
    pub det_res: f64,
    /// `max |∇·Eᵀ|`
    pub div_et: f64,
    /// max defect of the curl identity
    pub curl_res: f64,
    /// max of `tr E + det E` (2-D) or `tr E + det E + γ₂(E)` (3-D)
    pub trace_res: f64,
    pub l2: ResidualL2,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        self.div_v
            .max(self.det_res)
            .max(self.div_et)
            .max(self.curl_res)
            .max(self.trace_res)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }

    /// Named residuals in report order.
    pub fn entries(&self) -> [(&'static str, f64); 5] {
        [
            ("div_v", self.div_v),
            ("det_res", self.det_res),
            ("div_Et", self.div_et),
            ("curl_res", self.curl_res),
            ("trace_res", self.trace_res),
        ]
    }
}

impl std::fmt::Display for ConstraintResiduals {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, (name, value)) in self.entries().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}={value:.3e}")?;
        }
        Ok(())
    }
}

fn linf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn l2(grid: Grid, x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume()).sqrt()
}

/// Evaluate every constraint residual of `(v, E)`.
///
/// Derivatives are spectral; the quadratic part of the curl identity is
/// formed on the grid and dealiased (when enabled) before the reduction;
/// the determinant and trace identities are evaluated pointwise.
pub fn constraint_residuals(
    sp: &Spectral,
    v: &Field,
    e: &Field,
) -> Result<ConstraintResiduals, SpectralError> {
    if v.rank() != Rank::Vector {
        return Err(SpectralError::UnsupportedRank(v.rank()));
    }
    if e.rank() != Rank::Tensor {
        return Err(SpectralError::UnsupportedRank(e.rank()));
    }
    let v_hat = sp.coefficients(v)?;
    let e_hat = sp.coefficients(e)?;
    residuals_from_hat(sp, &v_hat, &e_hat)
}

pub(crate) fn residuals_from_hat(
    sp: &Spectral,
    v_hat: &[Complex64],
    e_hat: &[Complex64],
) -> Result<ConstraintResiduals, SpectralError> {
    let grid = sp.grid();
    let d = grid.dim();
    let np = grid.points();

    let div_v = sp.inverse_real(&sp.divergence_hat(v_hat));
    let div_et = sp.inverse_real(&sp.transpose_divergence_hat(e_hat));

    let strain = kernels::strain_samples(sp, e_hat);
    let (det_field, trace_field) = algebraic_defects(grid, &strain.e);

    // curl identity defect
    let pairs = anti_pairs(d);
    let linear = sp.inverse_real(&sp.curl_tensor_hat(e_hat));
    let mut quad = vec![0.0; d * pairs.len() * np];
    for i in 0..d {
        for (pi, &(j, m)) in pairs.iter().enumerate() {
            let dst = &mut quad[(i * pairs.len() + pi) * np..(i * pairs.len() + pi + 1) * np];
            for l in 0..d {
                let elj = &strain.e[(l * d + j) * np..(l * d + j + 1) * np];
                let elm = &strain.e[(l * d + m) * np..(l * d + m + 1) * np];
                let g_im = &strain.grad[((i * d + m) * d + l) * np..((i * d + m) * d + l + 1) * np];
                let g_ij = &strain.grad[((i * d + j) * d + l) * np..((i * d + j) * d + l + 1) * np];
                for p in 0..np {
                    dst[p] += -elj[p] * g_im[p] + elm[p] * g_ij[p];
                }
            }
        }
    }
    let quad = if sp.dealias_enabled() {
        sp.inverse_real(&kernels::products_to_spectral(sp, quad))
    } else {
        quad
    };
    let curl: Vec<f64> = linear.iter().zip(&quad).map(|(a, b)| a + b).collect();

    Ok(ConstraintResiduals {
        div_v: linf(&div_v),
        det_res: linf(&det_field),
        div_et: linf(&div_et),
        curl_res: linf(&curl),
        trace_res: linf(&trace_field),
        l2: ResidualL2 {
            div_v: l2(grid, &div_v),
            det_res: l2(grid, &det_field),
            div_et: l2(grid, &div_et),
            curl_res: l2(grid, &curl),
            trace_res: l2(grid, &trace_field),
        },
    })
}

/// Pointwise `det(I+E) − 1` and the trace-identity defect.
fn algebraic_defects(grid: Grid, e: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = grid.dim();
    let np = grid.points();
    let mut det_field = Vec::with_capacity(np);
    let mut trace_field = Vec::with_capacity(np);
    for p in 0..np {
        let m = tensor::at(e, np, d, p);
        det_field.push(tensor::det_shifted(&m, d) - 1.0);
        let tr = tensor::trace(&m, d);
        let defect = if d == 2 {
            tr + tensor::det(&m, d)
        } else {
            tr + tensor::det(&m, d) + tensor::gamma2(&m, d)
        };
        trace_field.push(defect);
    }
    (det_field, trace_field)
}

/// Principal invariants of a tensor field, sampled pointwise.
#[derive(Debug, Clone)]
pub struct GammaInvariants {
    /// `γ₁ = tr A`
    pub tr: Field,
    /// `γ₂ = ½[(tr A)² − tr A²]`
    pub gamma2: Field,
    /// `γ₃ = det A`
    pub det: Field,
    /// `max |det(I+A) − (1 + γ₁ + γ₂ + γ₃)|` in 3-D, `max |det(I+A) − (1 + γ₁ + det A)|`
    /// in 2-D, where `γ₂ = det A`.
    pub identity_defect: f64,
}

pub fn check_gamma_invariants(sp: &Spectral, e: &Field) -> Result<GammaInvariants, SpectralError> {
    if e.rank() != Rank::Tensor {
        return Err(SpectralError::UnsupportedRank(e.rank()));
    }
    let grid = sp.grid();
    let d = grid.dim();
    let np = grid.points();
    let phys = match e.repr() {
        Repr::Physical => e.clone(),
        Repr::Spectral => sp.to_physical(e)?,
    };
    let data = phys.physical().expect("physical");
    let mut tr = Vec::with_capacity(np);
    let mut g2 = Vec::with_capacity(np);
    let mut det = Vec::with_capacity(np);
    let mut defect = 0.0f64;
    for p in 0..np {
        let m = tensor::at(data, np, d, p);
        let t = tensor::trace(&m, d);
        let g = tensor::gamma2(&m, d);
        let dt = tensor::det(&m, d);
        let expanded = if d == 3 { 1.0 + t + g + dt } else { 1.0 + t + dt };
        defect = defect.max((tensor::det_shifted(&m, d) - expanded).abs());
        tr.push(t);
        g2.push(g);
        det.push(dt);
    }
    Ok(GammaInvariants {
        tr: Field::from_physical(grid, Rank::Scalar, tr),
        gamma2: Field::from_physical(grid, Rank::Scalar, g2),
        det: Field::from_physical(grid, Rank::Scalar, det),
        identity_defect: defect,
    })
}

// -------------------------------------------------------------------------
// Velocity synthesis
// -------------------------------------------------------------------------

/// Shell spectrum of a random-phase velocity: mode weights
/// `exp(−½((|k| − peak_k)/decay)²)`, rescaled so the RMS speed equals
/// `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySpectrum {
    pub amplitude: f64,
    pub peak_k: u32,
    pub decay: f64,
}

impl Default for VelocitySpectrum {
    fn default() -> Self {
        VelocitySpectrum {
            amplitude: 0.1,
            peak_k: 2,
            decay: 1.0,
        }
    }
}

/// `(sin x₁ cos x₂, −cos x₁ sin x₂)` in 2-D; in 3-D the same pattern
/// modulated by `cos x₃` with zero third component.
pub fn taylor_green(grid: Grid) -> Field {
    let three = grid.dim() == 3;
    Field::from_fn(grid, Rank::Vector, |x, c| {
        let z = if three { x[2].cos() } else { 1.0 };
        match c {
            0 => x[0].sin() * x[1].cos() * z,
            1 => -x[0].cos() * x[1].sin() * z,
            _ => 0.0,
        }
    })
}

/// Random-phase Hermitian spectrum of `ncomp` components with shell weights
/// `exp(−½((|k| − peak_k)/decay)²)`; the mean and modes removed by the
/// two-thirds rule are zero.
pub(crate) fn random_shell_hat(
    sp: &Spectral,
    seed: u64,
    ncomp: usize,
    spectrum: &VelocitySpectrum,
) -> Vec<Complex64> {
    let grid = sp.grid();
    let np = grid.points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let peak = spectrum.peak_k as f64;
    let mut raw = vec![ZERO; ncomp * np];
    for p in 0..np {
        let k = grid.wavevector(p);
        let kmag = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        let w = if p == 0 || !sp.retained()[p] {
            0.0
        } else {
            (-0.5 * ((kmag - peak) / spectrum.decay).powi(2)).exp()
        };
        for c in 0..ncomp {
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            raw[c * np + p] = Complex64::new(re, im) * w;
        }
    }
    let mut hat = vec![ZERO; ncomp * np];
    for p in 0..np {
        let q = grid.conjugate_index(p);
        for c in 0..ncomp {
            hat[c * np + p] = 0.5 * (raw[c * np + p] + raw[c * np + q].conj());
        }
    }
    hat
}

/// Random-phase, band-limited, divergence-free velocity. Deterministic in
/// `seed`; modes removed by the two-thirds rule are never populated.
pub fn gen_divfree_velocity(
    sp: &Spectral,
    seed: u64,
    spectrum: &VelocitySpectrum,
) -> Result<Field, ConstraintError> {
    let grid = sp.grid();
    if !(spectrum.amplitude >= 0.0) {
        return Err(ConstraintError::InvalidArgument(format!(
            "amplitude must be non-negative, got {}",
            spectrum.amplitude
        )));
    }
    if !(spectrum.decay > 0.0) {
        return Err(ConstraintError::InvalidArgument(format!(
            "decay must be positive, got {}",
            spectrum.decay
        )));
    }
    if spectrum.amplitude == 0.0 {
        return Ok(Field::zeros(grid, Rank::Vector, Repr::Physical));
    }
    let mut hat = random_shell_hat(sp, seed, grid.dim(), spectrum);
    sp.leray_in_place(&mut hat);
    let v = sp.inverse_real(&hat);
    let np = grid.points();
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / np as f64).sqrt();
    if rms == 0.0 {
        return Ok(Field::zeros(grid, Rank::Vector, Repr::Physical));
    }
    let s = spectrum.amplitude / rms;
    Ok(Field::from_physical(
        grid,
        Rank::Vector,
        v.into_iter().map(|x| x * s).collect(),
    ))
}

// -------------------------------------------------------------------------
// Strain manufacture
// -------------------------------------------------------------------------

/// Pseudo-time velocity used to transport the strain.
pub trait VelocityPrescription: Sync {
    /// Velocity spectrum at pseudo-time `s`.
    fn velocity_hat(&self, s: f64) -> Vec<Complex64>;
}

/// Time-independent transporting velocity.
pub struct SteadyFlow {
    hat: Vec<Complex64>,
}

impl SteadyFlow {
    pub fn new(sp: &Spectral, v: &Field) -> Result<Self, SpectralError> {
        Ok(SteadyFlow {
            hat: sp.coefficients(v)?,
        })
    }
}

impl VelocityPrescription for SteadyFlow {
    fn velocity_hat(&self, _s: f64) -> Vec<Complex64> {
        self.hat.clone()
    }
}

/// `v(s) = cos(ω s) v_a + sin(ω s) v_b`.
pub struct PulsedFlow {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    omega: f64,
}

impl PulsedFlow {
    pub fn new(sp: &Spectral, a: &Field, b: &Field, omega: f64) -> Result<Self, SpectralError> {
        Ok(PulsedFlow {
            a: sp.coefficients(a)?,
            b: sp.coefficients(b)?,
            omega,
        })
    }
}

impl VelocityPrescription for PulsedFlow {
    fn velocity_hat(&self, s: f64) -> Vec<Complex64> {
        let (sn, cs) = (self.omega * s).sin_cos();
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a * cs + b * sn)
            .collect()
    }
}

/// Velocity paired with the manufactured strain.
#[derive(Debug, Clone)]
pub enum InitialVelocity {
    /// The prescription evaluated at `s_end`.
    Prescription,
    Zero,
    /// An independently chosen field, Leray-projected.
    Given(Field),
    /// The prescription at `s_end` multiplied by a factor.
    ScaledPrescription(f64),
    /// Partner of `E₀` along the least-damped linear mode of each wavevector
    /// at viscosity `mu` (see [`least_damped_partner`]).
    LeastDamped { mu: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct ManufactureOptions {
    pub tolerance: f64,
}

impl Default for ManufactureOptions {
    fn default() -> Self {
        ManufactureOptions {
            tolerance: DEFAULT_MANUFACTURE_TOL,
        }
    }
}

/// Admissible initial data with the residuals measured at manufacture.
#[derive(Debug, Clone)]
pub struct AdmissibleIC {
    pub v0: Field,
    pub e0: Field,
    pub residuals: ConstraintResiduals,
    pub s_end: f64,
    pub steps: usize,
}

impl AdmissibleIC {
    /// Wrap arbitrary data; residuals are evaluated, not enforced.
    pub fn from_fields(sp: &Spectral, v0: Field, e0: Field) -> Result<Self, SpectralError> {
        let residuals = constraint_residuals(sp, &v0, &e0)?;
        Ok(AdmissibleIC {
            v0,
            e0,
            residuals,
            s_end: 0.0,
            steps: 0,
        })
    }

    pub fn equilibrium(grid: Grid) -> Self {
        AdmissibleIC {
            v0: Field::zeros(grid, Rank::Vector, Repr::Physical),
            e0: Field::zeros(grid, Rank::Tensor, Repr::Physical),
            residuals: ConstraintResiduals::default(),
            s_end: 0.0,
            steps: 0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.v0.grid()
    }
}

/// Classic RK4 transport of the strain from zero to pseudo-time `s_end`.
pub fn transport_strain(
    sp: &Spectral,
    flow: &dyn VelocityPrescription,
    s_end: f64,
    steps: usize,
) -> Vec<Complex64> {
    let grid = sp.grid();
    let len = grid.dim() * grid.dim() * grid.points();
    let mut e = vec![ZERO; len];
    if s_end == 0.0 || steps == 0 {
        return e;
    }
    let ds = s_end / steps as f64;
    let tendency = |s: f64, e_hat: &[Complex64]| {
        let v_hat = flow.velocity_hat(s);
        let vel = kernels::velocity_samples(sp, &v_hat);
        let strain = kernels::strain_samples(sp, e_hat);
        kernels::strain_tendency_hat(sp, &v_hat, &vel, &strain)
    };
    let combine = |base: &[Complex64], k: &[Complex64], h: f64| -> Vec<Complex64> {
        base.iter().zip(k).map(|(a, b)| a + b * h).collect()
    };
    for step in 0..steps {
        let s = step as f64 * ds;
        let k1 = tendency(s, &e);
        let k2 = tendency(s + 0.5 * ds, &combine(&e, &k1, 0.5 * ds));
        let k3 = tendency(s + 0.5 * ds, &combine(&e, &k2, 0.5 * ds));
        let k4 = tendency(s + ds, &combine(&e, &k3, ds));
        for (i, z) in e.iter_mut().enumerate() {
            *z += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (ds / 6.0);
        }
    }
    e
}

/// Velocity spectrum pairing `E` with the least-damped linear eigenmode of
/// each wavevector.
///
/// For a shear mode the linearized system about equilibrium is
/// `α' = −μ|k|²α + i|k|β`, `β' = i|k|α`, whose eigenvectors satisfy
/// `v̂ = −λ (∇·E)^ / |k|²` with `λ² + μ|k|²λ + |k|² = 0`. The root with the
/// larger real part is used; for complex roots the `+iω` branch is taken on
/// one half of wavevector space and its conjugate on the other so the
/// velocity stays real.
pub fn least_damped_partner(sp: &Spectral, e_hat: &[Complex64], mu: f64) -> Vec<Complex64> {
    let grid = sp.grid();
    let np = grid.points();
    let d = grid.dim();
    let mut div = sp.divergence_hat(e_hat);
    sp.leray_in_place(&mut div);
    let k2 = sp.k2();
    for p in 0..np {
        if k2[p] == 0.0 {
            for c in 0..d {
                div[c * np + p] = ZERO;
            }
            continue;
        }
        let kk = k2[p];
        let disc = mu * mu * kk * kk - 4.0 * kk;
        let lambda = if disc >= 0.0 {
            Complex64::new(0.5 * (-mu * kk + disc.sqrt()), 0.0)
        } else {
            let omega = 0.5 * (-disc).sqrt();
            let kv = sp.kd(p);
            let upper = kv
                .iter()
                .take(d)
                .find(|&&x| x != 0.0)
                .map_or(true, |&x| x > 0.0);
            Complex64::new(-0.5 * mu * kk, if upper { omega } else { -omega })
        };
        let factor = -lambda / kk;
        for c in 0..d {
            div[c * np + p] *= factor;
        }
    }
    div
}

/// Transport the strain from zero under `flow` and pair it with a velocity.
pub fn manufacture_strain(
    sp: &Spectral,
    flow: &dyn VelocityPrescription,
    s_end: f64,
    steps: usize,
    velocity: &InitialVelocity,
    options: &ManufactureOptions,
) -> Result<AdmissibleIC, ConstraintError> {
    let grid = sp.grid();
    if !(s_end >= 0.0) || !s_end.is_finite() {
        return Err(ConstraintError::InvalidArgument(format!(
            "s_end must be a finite non-negative number, got {s_end}"
        )));
    }
    if s_end > 0.0 && steps == 0 {
        return Err(ConstraintError::InvalidArgument(
            "steps must be positive when s_end > 0".into(),
        ));
    }
    let v_start = flow.velocity_hat(0.0);
    let div = sp.inverse_real(&sp.divergence_hat(&v_start));
    let vmax = linf(&sp.inverse_real(&v_start)).max(1.0);
    let max_div = linf(&div);
    if max_div > 1e-11 * vmax {
        return Err(ConstraintError::NotSolenoidal(max_div));
    }

    let e_hat = transport_strain(sp, flow, s_end, steps);
    let mut v_hat = match velocity {
        InitialVelocity::Prescription => flow.velocity_hat(s_end),
        InitialVelocity::ScaledPrescription(a) => {
            flow.velocity_hat(s_end).into_iter().map(|z| z * *a).collect()
        }
        InitialVelocity::Zero => vec![ZERO; grid.dim() * grid.points()],
        InitialVelocity::Given(f) => sp.coefficients(f)?,
        InitialVelocity::LeastDamped { mu } => {
            if !(*mu > 0.0) {
                return Err(ConstraintError::InvalidArgument(format!(
                    "viscosity must be positive, got {mu}"
                )));
            }
            least_damped_partner(sp, &e_hat, *mu)
        }
    };
    sp.leray_in_place(&mut v_hat);

    let residuals = residuals_from_hat(sp, &v_hat, &e_hat)?;
    let ic = AdmissibleIC {
        v0: Field::from_physical(grid, Rank::Vector, sp.inverse_real(&v_hat)),
        e0: Field::from_physical(grid, Rank::Tensor, sp.inverse_real(&e_hat)),
        residuals,
        s_end,
        steps,
    };
    if !residuals.within(options.tolerance) {
        return Err(ConstraintError::Manufacture {
            residuals: Box::new(residuals),
            tolerance: options.tolerance,
        });
    }
    Ok(ic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sp2(n: usize) -> Spectral {
        Spectral::new(Grid::new(2, n).unwrap())
    }

    #[test]
    fn zero_state_has_zero_residuals() {
        let sp = sp2(16);
        let g = sp.grid();
        let r = constraint_residuals(
            &sp,
            &Field::zeros(g, Rank::Vector, Repr::Physical),
            &Field::zeros(g, Rank::Tensor, Repr::Physical),
        )
        .unwrap();
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn scaled_identity_residuals() {
        let sp = sp2(16);
        let g = sp.grid();
        let e = Field::constant_tensor(g, &[0.1, 0.0, 0.0, 0.1]);
        let r = constraint_residuals(&sp, &Field::zeros(g, Rank::Vector, Repr::Physical), &e)
            .unwrap();
        assert_relative_eq!(r.det_res, 0.21, max_relative = 1e-12);
        assert_relative_eq!(r.trace_res, 0.21, max_relative = 1e-12);
        assert!(r.div_et < 1e-14);
        assert!(r.curl_res < 1e-14);
    }

    #[test]
    fn gamma_invariants_of_diagonal() {
        let sp = Spectral::new(Grid::new(3, 8).unwrap());
        let e = Field::constant_tensor(
            sp.grid(),
            &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0],
        );
        let inv = check_gamma_invariants(&sp, &e).unwrap();
        assert_relative_eq!(inv.tr.physical().unwrap()[5], 6.0);
        assert_relative_eq!(inv.gamma2.physical().unwrap()[5], 11.0);
        assert_relative_eq!(inv.det.physical().unwrap()[5], 6.0);
        assert!(inv.identity_defect < 1e-12);
        let zero = check_gamma_invariants(
            &sp,
            &Field::zeros(sp.grid(), Rank::Tensor, Repr::Physical),
        )
        .unwrap();
        assert_eq!(zero.tr.max_abs() + zero.gamma2.max_abs() + zero.det.max_abs(), 0.0);
    }

    #[test]
    fn zero_amplitude_gives_zero_velocity() {
        let sp = sp2(16);
        let v = gen_divfree_velocity(
            &sp,
            7,
            &VelocitySpectrum {
                amplitude: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn random_velocity_is_solenoidal_and_deterministic() {
        let sp = sp2(32);
        let spec = VelocitySpectrum {
            amplitude: 0.1,
            peak_k: 2,
            decay: 1.0,
        };
        let a = gen_divfree_velocity(&sp, 42, &spec).unwrap();
        let b = gen_divfree_velocity(&sp, 42, &spec).unwrap();
        assert_eq!(a, b);
        assert!(sp.divergence(&a).unwrap().max_abs() < 1e-12);
        let rms = (a.physical().unwrap().iter().map(|x| x * x).sum::<f64>()
            / sp.grid().points() as f64)
            .sqrt();
        assert_relative_eq!(rms, 0.1, max_relative = 1e-12);
        let c = gen_divfree_velocity(&sp, 43, &spec).unwrap();
        assert!(a.max_abs_diff(&c) > 1e-3);
    }

    #[test]
    fn zero_pseudo_time_gives_zero_strain() {
        let sp = sp2(16);
        let flow = SteadyFlow::new(&sp, &taylor_green(sp.grid())).unwrap();
        let ic = manufacture_strain(
            &sp,
            &flow,
            0.0,
            0,
            &InitialVelocity::Prescription,
            &ManufactureOptions::default(),
        )
        .unwrap();
        assert_eq!(ic.e0.max_abs(), 0.0);
        assert_eq!(ic.residuals.det_res, 0.0);
        assert_eq!(ic.residuals.curl_res, 0.0);
        assert!(ic.residuals.div_v < 1e-14);
    }

    #[test]
    fn rejects_compressive_prescription() {
        let sp = sp2(16);
        let v = Field::from_fn(sp.grid(), Rank::Vector, |x, c| if c == 0 { x[0].sin() } else { 0.0 });
        let flow = SteadyFlow::new(&sp, &v).unwrap();
        let err = manufacture_strain(
            &sp,
            &flow,
            0.1,
            10,
            &InitialVelocity::Prescription,
            &ManufactureOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ConstraintError::NotSolenoidal(_)));
    }

    #[test]
    fn manufacture_failure_carries_residuals() {
        let sp = sp2(32);
        let flow = SteadyFlow::new(&sp, &taylor_green(sp.grid())).unwrap();
        // one coarse step leaves a visible determinant defect
        let err = manufacture_strain(
            &sp,
            &flow,
            0.5,
            1,
            &InitialVelocity::Prescription,
            &ManufactureOptions { tolerance: 1e-12 },
        )
        .unwrap_err();
        match err {
            ConstraintError::Manufacture { residuals, .. } => assert!(residuals.det_res > 1e-12),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn least_damped_partner_of_single_mode() {
        // E = β a⊗k̂ sin(k·x) with k = (0, 2), a = (1, 0)
        let sp = sp2(16);
        let g = sp.grid();
        let e = Field::from_fn(g, Rank::Tensor, |x, c| if c == 1 { 0.01 * (2.0 * x[1]).sin() } else { 0.0 });
        let e_hat = sp.coefficients(&e).unwrap();
        let mu = 5.0;
        let v_hat = least_damped_partner(&sp, &e_hat, mu);
        let v = sp.inverse_real(&v_hat);
        // overdamped: λ = (−μk² + √(μ²k⁴ − 4k²))/2, v̂ = −λ (∇·E)^/k²
        let k2: f64 = 4.0;
        let lambda = 0.5 * (-mu * k2 + (mu * mu * k2 * k2 - 4.0 * k2).sqrt());
        let p = g.flat_index(&[3, 5]);
        let x = g.coords(p);
        let div = 0.02 * (2.0 * x[1]).cos();
        assert_relative_eq!(v[p], -lambda * div / k2, epsilon = 1e-14);
    }
}
