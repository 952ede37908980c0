//! Named initial-data recipes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constraints::{
    gen_divfree_velocity, manufacture_strain, taylor_green, AdmissibleIC, ConstraintError,
    InitialVelocity, ManufactureOptions, SteadyFlow, VelocitySpectrum,
};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// `v = 0`, `E = 0`.
    Equilibrium,
    /// Taylor–Green velocity; strain transported by the same flow.
    TaylorGreen,
    /// Near-equilibrium data scaled to a target `‖v‖²_{H²} + ‖E‖²_{H²}`,
    /// velocity on the least-damped linear branch.
    SmallData,
    /// Random transport flow and an independent random velocity.
    Random,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Equilibrium,
        Preset::TaylorGreen,
        Preset::SmallData,
        Preset::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Equilibrium => "equilibrium",
            Preset::TaylorGreen => "taylor-green",
            Preset::SmallData => "small-data",
            Preset::Random => "random",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown preset '{s}' (expected one of: equilibrium, taylor-green, small-data, random)"
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    pub seed: u64,
    /// Pseudo-time of the strain transport; `0` gives `E₀ = 0`.
    pub s_end: f64,
    pub steps: usize,
    pub spectrum: VelocitySpectrum,
    /// Viscosity used to pair the velocity with the strain (`small-data`).
    pub mu: f64,
    /// Target `‖v‖²_{H²} + ‖E‖²_{H²}` (`small-data`).
    pub target_h2_sq: f64,
    pub tolerance: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            seed: 0,
            s_end: 0.3,
            steps: 100,
            spectrum: VelocitySpectrum::default(),
            mu: 1.0,
            target_h2_sq: 1e-4,
            tolerance: crate::constraints::DEFAULT_MANUFACTURE_TOL,
        }
    }
}

fn small_data(sp: &Spectral, p: &PresetParams) -> Result<AdmissibleIC, ConstraintError> {
    if !(p.target_h2_sq > 0.0) {
        return Err(ConstraintError::InvalidArgument(format!(
            "target H² budget must be positive, got {}",
            p.target_h2_sq
        )));
    }
    let s_end = p.s_end;
    let opts = ManufactureOptions {
        tolerance: p.tolerance,
    };
    let velocity = InitialVelocity::LeastDamped { mu: p.mu };
    let build = |amplitude: f64| -> Result<AdmissibleIC, ConstraintError> {
        let flow = gen_divfree_velocity(
            sp,
            p.seed,
            &VelocitySpectrum {
                amplitude,
                ..p.spectrum
            },
        )?;
        let flow = SteadyFlow::new(sp, &flow)?;
        manufacture_strain(sp, &flow, s_end, p.steps, &velocity, &opts)
    };
    let h2 = |ic: &AdmissibleIC| -> Result<f64, ConstraintError> {
        let v = sp.coefficients(&ic.v0)?;
        let e = sp.coefficients(&ic.e0)?;
        Ok(sp.sobolev_norm_sq_hat(&v, 2) + sp.sobolev_norm_sq_hat(&e, 2))
    };
    // the budget is close to quadratic in the transport amplitude
    let mut amplitude = 1e-3;
    let mut ic = build(amplitude)?;
    for _ in 0..3 {
        let now = h2(&ic)?;
        if now == 0.0 {
            break;
        }
        amplitude *= (p.target_h2_sq / now).sqrt();
        ic = build(amplitude)?;
    }
    Ok(ic)
}

/// Build the initial data for `preset`.
pub fn build(sp: &Spectral, preset: Preset, p: &PresetParams) -> Result<AdmissibleIC, ConstraintError> {
    let opts = ManufactureOptions {
        tolerance: p.tolerance,
    };
    match preset {
        Preset::Equilibrium => Ok(AdmissibleIC::equilibrium(sp.grid())),
        Preset::TaylorGreen => {
            let flow = SteadyFlow::new(sp, &taylor_green(sp.grid()))?;
            manufacture_strain(sp, &flow, p.s_end, p.steps, &InitialVelocity::Prescription, &opts)
        }
        Preset::SmallData => small_data(sp, p),
        Preset::Random => {
            let flow = gen_divfree_velocity(sp, p.seed, &p.spectrum)?;
            let flow = SteadyFlow::new(sp, &flow)?;
            let v0 = gen_divfree_velocity(sp, p.seed.wrapping_add(1), &p.spectrum)?;
            manufacture_strain(
                sp,
                &flow,
                p.s_end,
                p.steps,
                &InitialVelocity::Given(v0),
                &opts,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("vortex".parse::<Preset>().is_err());
    }

    #[test]
    fn small_data_hits_budget() {
        let sp = Spectral::new(Grid::new(2, 32).unwrap());
        let p = PresetParams {
            seed: 3,
            steps: 40,
            ..Default::default()
        };
        let ic = build(&sp, Preset::SmallData, &p).unwrap();
        let v = sp.coefficients(&ic.v0).unwrap();
        let e = sp.coefficients(&ic.e0).unwrap();
        let total = sp.sobolev_norm_sq_hat(&v, 2) + sp.sobolev_norm_sq_hat(&e, 2);
        assert_relative_eq!(total, 1e-4, max_relative = 1e-3);
        assert!(ic.residuals.within(1e-10));
    }
}
