//! Time integration of the incompressible Hookean system
//!
//! ```text
//! v_t + v·∇v + ∇p = μΔv + ∇·(EEᵀ) + ∇·E,
//! E_t + v·∇E = ∇v E + ∇v,
//! ∇·v = 0.
//! ```
//!
//! The pressure is eliminated by Leray projection at every stage. The state
//! is held in spectral space; all products are formed on the grid and
//! dealiased when enabled.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::AdmissibleIC;
use crate::diagnostics::{self, DiagnosticsRecord, ThresholdConfig};
use crate::field::{Field, Rank, Repr};
use crate::grid::Grid;
use crate::kernels;
use crate::spectral::{Spectral, SpectralConfig, SpectralError, ZERO};

/// Default bound on constraint residual drift during a run.
pub const DEFAULT_DRIFT_BUDGET: f64 = 1e-5;
/// Default ceiling on `‖v‖²_{H²} + ‖E‖²_{H²}` before the blow-up monitor trips.
pub const DEFAULT_BLOWUP_CEILING: f64 = 1e8;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid configuration: {key}: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error("numerical divergence at step {step}, t = {t:.6e}: {what}")]
    Divergence {
        step: usize,
        t: f64,
        what: String,
        last_good: Box<State>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Scheme {
    /// Integrating factor on `μΔv`, explicit midpoint RK2 for the rest.
    #[default]
    ImexCnRk2,
    /// Classic explicit RK4 for every term.
    Erk4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ImexCnRk2 => "imex-cn-rk2",
            Scheme::Erk4 => "erk4",
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::ImexCnRk2 => 2,
            Scheme::Erk4 => 4,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "imex-cn-rk2" => Ok(Scheme::ImexCnRk2),
            "erk4" => Ok(Scheme::Erk4),
            other => Err(format!("unknown scheme '{other}' (expected imex-cn-rk2 or erk4)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    /// Fixed step; `None` selects the CFL-limited adaptive step.
    pub dt: Option<f64>,
    pub cfl: f64,
    /// Upper bound on adaptive steps.
    pub dt_max: f64,
    pub scheme: Scheme,
    pub dealias: bool,
    pub conservative_stress: bool,
    pub fluid_only: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: None,
            cfl: 0.5,
            dt_max: 0.1,
            scheme: Scheme::ImexCnRk2,
            dealias: true,
            conservative_stress: true,
            fluid_only: false,
        }
    }
}

impl StepperConfig {
    pub fn fixed(dt: f64, scheme: Scheme) -> Self {
        StepperConfig {
            dt: Some(dt),
            scheme,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(DynamicsError::InvalidConfig {
                    key: "dt",
                    reason: format!("must be positive and finite, got {dt}"),
                });
            }
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(DynamicsError::InvalidConfig {
                key: "cfl",
                reason: format!("must lie in (0, 1], got {}", self.cfl),
            });
        }
        if !(self.dt_max > 0.0) {
            return Err(DynamicsError::InvalidConfig {
                key: "dt_max",
                reason: format!("must be positive, got {}", self.dt_max),
            });
        }
        Ok(())
    }
}

/// Time, viscosity and spectral coefficients of `(v, E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub mu: f64,
    v: Vec<Complex64>,
    e: Vec<Complex64>,
    grid: Grid,
}

impl State {
    /// Build a state from fields in either representation; `v` is
    /// Leray-projected.
    pub fn new(sp: &Spectral, t: f64, mu: f64, v: &Field, e: &Field) -> Result<Self, DynamicsError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(DynamicsError::InvalidConfig {
                key: "mu",
                reason: format!("must be positive and finite, got {mu}"),
            });
        }
        if v.rank() != Rank::Vector {
            return Err(SpectralError::UnsupportedRank(v.rank()).into());
        }
        if e.rank() != Rank::Tensor {
            return Err(SpectralError::UnsupportedRank(e.rank()).into());
        }
        let mut v_hat = sp.coefficients(v)?;
        sp.leray_in_place(&mut v_hat);
        Ok(State {
            t,
            mu,
            v: v_hat,
            e: sp.coefficients(e)?,
            grid: sp.grid(),
        })
    }

    pub fn from_ic(sp: &Spectral, ic: &AdmissibleIC, mu: f64) -> Result<Self, DynamicsError> {
        State::new(sp, 0.0, mu, &ic.v0, &ic.e0)
    }

    pub fn from_hat(grid: Grid, t: f64, mu: f64, v: Vec<Complex64>, e: Vec<Complex64>) -> Self {
        assert_eq!(v.len(), grid.dim() * grid.points());
        assert_eq!(e.len(), grid.dim() * grid.dim() * grid.points());
        State { t, mu, v, e, grid }
    }

    pub fn equilibrium(grid: Grid, mu: f64) -> Self {
        let np = grid.points();
        let d = grid.dim();
        State {
            t: 0.0,
            mu,
            v: vec![ZERO; d * np],
            e: vec![ZERO; d * d * np],
            grid,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn v_hat(&self) -> &[Complex64] {
        &self.v
    }

    pub fn e_hat(&self) -> &[Complex64] {
        &self.e
    }

    /// Physical velocity samples.
    pub fn velocity(&self, sp: &Spectral) -> Field {
        Field::from_physical(self.grid, Rank::Vector, sp.inverse_real(&self.v))
    }

    /// Physical strain samples.
    pub fn strain(&self, sp: &Spectral) -> Field {
        Field::from_physical(self.grid, Rank::Tensor, sp.inverse_real(&self.e))
    }

    pub fn velocity_spectral(&self) -> Field {
        Field::from_spectral(self.grid, Rank::Vector, self.v.clone())
    }

    pub fn strain_spectral(&self) -> Field {
        Field::from_spectral(self.grid, Rank::Tensor, self.e.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.v
            .iter()
            .chain(&self.e)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Remove modes outside the two-thirds band.
    pub fn dealias(&mut self, sp: &Spectral) {
        sp.dealias_in_place(&mut self.v);
        sp.dealias_in_place(&mut self.e);
    }
}

/// Non-viscous tendencies in spectral space: `dv` is already projected.
#[derive(Debug, Clone)]
pub struct Tendency {
    pub dv: Vec<Complex64>,
    pub de: Vec<Complex64>,
}

/// Stress divergence spectrum: `∇·(EEᵀ) + ∇·E` (conservative) or
/// `E_jk ∂_j E_ik + ∂_j E_ij`.
fn stress_divergence_hat(sp: &Spectral, e_hat: &[Complex64], conservative: bool) -> Vec<Complex64> {
    let strain = kernels::strain_samples(sp, e_hat);
    stress_divergence_from(sp, e_hat, &strain, conservative)
}

fn stress_divergence_from(
    sp: &Spectral,
    e_hat: &[Complex64],
    strain: &kernels::StrainSamples,
    conservative: bool,
) -> Vec<Complex64> {
    let mut out = if conservative {
        let gram = kernels::products_to_spectral(sp, kernels::strain_gram(sp, &strain.e));
        sp.divergence_hat(&gram)
    } else {
        kernels::products_to_spectral(sp, kernels::stress_nonconservative(sp, strain))
    };
    for (o, z) in out.iter_mut().zip(sp.divergence_hat(e_hat)) {
        *o += z;
    }
    out
}

/// Elastic force on the fluid; output representation matches the input.
pub fn stress_divergence(sp: &Spectral, e: &Field, conservative: bool) -> Result<Field, SpectralError> {
    if e.rank() != Rank::Tensor {
        return Err(SpectralError::UnsupportedRank(e.rank()));
    }
    let hat = sp.coefficients(e)?;
    let out = stress_divergence_hat(sp, &hat, conservative);
    Ok(match e.repr() {
        Repr::Spectral => Field::from_spectral(sp.grid(), Rank::Vector, out),
        Repr::Physical => Field::from_physical(sp.grid(), Rank::Vector, sp.inverse_real(&out)),
    })
}

/// Spectral operators plus a stepper configuration.
#[derive(Debug)]
pub struct Solver {
    sp: Spectral,
    cfg: StepperConfig,
}

impl Solver {
    pub fn new(grid: Grid, cfg: StepperConfig) -> Result<Self, DynamicsError> {
        cfg.validate()?;
        let sp = Spectral::with_config(
            grid,
            SpectralConfig {
                dealias: cfg.dealias,
                ..Default::default()
            },
        );
        Ok(Solver { sp, cfg })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Unprojected non-viscous momentum forcing `−v·∇v + σ(E)` and the
    /// strain tendency.
    fn forcing(&self, v: &[Complex64], e: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let sp = &self.sp;
        let vel = kernels::velocity_samples(sp, v);
        let mut nv = kernels::products_to_spectral(sp, kernels::advection(sp, &vel));
        for z in nv.iter_mut() {
            *z = -*z;
        }
        if self.cfg.fluid_only {
            return (nv, vec![ZERO; e.len()]);
        }
        let strain = kernels::strain_samples(sp, e);
        for (o, z) in nv
            .iter_mut()
            .zip(stress_divergence_from(sp, e, &strain, self.cfg.conservative_stress))
        {
            *o += z;
        }
        let ne = kernels::strain_tendency_hat(sp, v, &vel, &strain);
        (nv, ne)
    }

    /// Projected non-viscous tendencies.
    pub fn tendency(&self, v: &[Complex64], e: &[Complex64]) -> Tendency {
        let (mut dv, de) = self.forcing(v, e);
        self.sp.leray_in_place(&mut dv);
        Tendency { dv, de }
    }

    /// Full right-hand side `(dv, dE)` with `dv = P[−v·∇v + σ(E)] + μΔv`,
    /// as spectral fields.
    pub fn rhs(&self, state: &State) -> (Field, Field) {
        let t = self.tendency(&state.v, &state.e);
        let dv = self.add_viscous(&t.dv, &state.v, state.mu);
        let g = state.grid;
        (
            Field::from_spectral(g, Rank::Vector, dv),
            Field::from_spectral(g, Rank::Tensor, t.de),
        )
    }

    fn add_viscous(&self, dv: &[Complex64], v: &[Complex64], mu: f64) -> Vec<Complex64> {
        let np = self.sp.grid().points();
        let k2 = self.sp.k2();
        dv.iter()
            .zip(v)
            .enumerate()
            .map(|(i, (a, b))| a - b * (mu * k2[i % np]))
            .collect()
    }

    /// Zero-mean pressure solving `Δp = ∇·N` for the non-viscous forcing `N`,
    /// so that `∇p = N − P N`. Physical samples.
    pub fn pressure_recover(&self, state: &State) -> Field {
        let (n, _) = self.forcing(&state.v, &state.e);
        let div = self.sp.divergence_hat(&n);
        let p = self.sp.inverse_laplacian_hat(&div);
        Field::from_physical(state.grid, Rank::Scalar, self.sp.inverse_real(&p))
    }

    /// CFL-limited step `cfl·h/(max|v| + 1)`, capped by `dt_max`. For `erk4`
    /// the explicit viscous limit `cfl·2.5/(μ |k|²_max)` also applies.
    pub fn cfl_dt(&self, state: &State) -> Result<f64, DynamicsError> {
        let grid = state.grid;
        let np = grid.points();
        let d = grid.dim();
        let v = self.sp.inverse_real(&state.v);
        let mut vmax = 0.0f64;
        for p in 0..np {
            let s: f64 = (0..d).map(|c| v[c * np + p] * v[c * np + p]).sum();
            vmax = vmax.max(s);
        }
        let vmax = vmax.sqrt();
        if !vmax.is_finite() {
            return Err(DynamicsError::Divergence {
                step: 0,
                t: state.t,
                what: "non-finite velocity in CFL evaluation".into(),
                last_good: Box::new(state.clone()),
            });
        }
        let mut dt = self.cfg.cfl * grid.spacing() / (vmax + 1.0);
        if self.cfg.scheme == Scheme::Erk4 {
            let k2max = self.max_active_k2();
            if k2max > 0.0 {
                dt = dt.min(self.cfg.cfl * 2.5 / (state.mu * k2max));
            }
        }
        Ok(dt.min(self.cfg.dt_max))
    }

    fn max_active_k2(&self) -> f64 {
        let keep = self.sp.retained();
        let dealias = self.sp.dealias_enabled();
        self.sp
            .k2()
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k || !dealias)
            .fold(0.0f64, |m, (&k2, _)| m.max(k2))
    }

    /// Advance `state` by `dt`.
    pub fn step(&self, state: &State, dt: f64) -> State {
        let f0 = self.tendency(&state.v, &state.e);
        self.step_with(state, dt, &f0)
    }

    /// Advance `state` by `dt` given its precomputed tendency.
    pub fn step_with(&self, state: &State, dt: f64, f0: &Tendency) -> State {
        let (v, e) = match self.cfg.scheme {
            Scheme::ImexCnRk2 => self.if_rk2(state, dt, f0),
            Scheme::Erk4 => self.erk4(state, dt, f0),
        };
        State {
            t: state.t + dt,
            mu: state.mu,
            v,
            e,
            grid: state.grid,
        }
    }

    fn if_rk2(&self, s: &State, dt: f64, f0: &Tendency) -> (Vec<Complex64>, Vec<Complex64>) {
        let np = s.grid.points();
        let k2 = self.sp.k2();
        let half: Vec<f64> = k2.iter().map(|k| (-s.mu * k * 0.5 * dt).exp()).collect();
        let v_mid: Vec<Complex64> = s
            .v
            .iter()
            .zip(&f0.dv)
            .enumerate()
            .map(|(i, (u, n))| (u + n * (0.5 * dt)) * half[i % np])
            .collect();
        let e_mid: Vec<Complex64> = s
            .e
            .iter()
            .zip(&f0.de)
            .map(|(u, n)| u + n * (0.5 * dt))
            .collect();
        let f1 = self.tendency(&v_mid, &e_mid);
        let v = s
            .v
            .iter()
            .zip(&f1.dv)
            .enumerate()
            .map(|(i, (u, n))| {
                let h = half[i % np];
                u * (h * h) + n * (dt * h)
            })
            .collect();
        let e = s.e.iter().zip(&f1.de).map(|(u, n)| u + n * dt).collect();
        (v, e)
    }

    fn erk4(&self, s: &State, dt: f64, f0: &Tendency) -> (Vec<Complex64>, Vec<Complex64>) {
        let full = |v: &[Complex64], t: &Tendency| self.add_viscous(&t.dv, v, s.mu);
        let combine = |a: &[Complex64], k: &[Complex64], h: f64| -> Vec<Complex64> {
            a.iter().zip(k).map(|(x, y)| x + y * h).collect()
        };
        let kv1 = full(&s.v, f0);
        let ke1 = &f0.de;
        let (v2, e2) = (combine(&s.v, &kv1, 0.5 * dt), combine(&s.e, ke1, 0.5 * dt));
        let t2 = self.tendency(&v2, &e2);
        let kv2 = full(&v2, &t2);
        let (v3, e3) = (combine(&s.v, &kv2, 0.5 * dt), combine(&s.e, &t2.de, 0.5 * dt));
        let t3 = self.tendency(&v3, &e3);
        let kv3 = full(&v3, &t3);
        let (v4, e4) = (combine(&s.v, &kv3, dt), combine(&s.e, &t3.de, dt));
        let t4 = self.tendency(&v4, &e4);
        let kv4 = full(&v4, &t4);
        let w = dt / 6.0;
        let v = (0..s.v.len())
            .map(|i| s.v[i] + (kv1[i] + 2.0 * kv2[i] + 2.0 * kv3[i] + kv4[i]) * w)
            .collect();
        let e = (0..s.e.len())
            .map(|i| s.e[i] + (ke1[i] + 2.0 * t2.de[i] + 2.0 * t3.de[i] + t4.de[i]) * w)
            .collect();
        (v, e)
    }

    /// `d/dt ‖∇v‖² = −2 Re(Δv, v_t)` for the given full velocity tendency.
    fn grad_energy_rate(&self, v: &[Complex64], dv_full: &[Complex64]) -> f64 {
        let np = self.sp.grid().points();
        let scale = self.sp.grid().volume() / (np as f64 * np as f64);
        let k2 = self.sp.k2();
        let mut acc = 0.0;
        for (i, (a, b)) in v.iter().zip(dv_full).enumerate() {
            acc += k2[i % np] * (a.conj() * b).re;
        }
        2.0 * acc * scale
    }
}

// -------------------------------------------------------------------------
// Runs
// -------------------------------------------------------------------------

/// Run cadences and monitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Emit a diagnostics record every this many steps (and at the end).
    pub diag_every: usize,
    /// Emit a snapshot every this many steps; 0 disables.
    pub snapshot_every: usize,
    pub threshold: ThresholdConfig,
    pub drift_budget: f64,
    pub blowup_ceiling: f64,
    /// Project the initial data onto the dealiased band before stepping.
    pub dealias_initial: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            diag_every: 1,
            snapshot_every: 0,
            threshold: ThresholdConfig::default(),
            drift_budget: DEFAULT_DRIFT_BUDGET,
            blowup_ceiling: DEFAULT_BLOWUP_CEILING,
            dealias_initial: true,
        }
    }
}

/// Receives run output as it is produced.
pub trait RunObserver {
    fn on_record(&mut self, _record: &DiagnosticsRecord) -> std::io::Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _step: usize, _state: &State) -> std::io::Result<()> {
        Ok(())
    }
}

/// Collects records in memory.
#[derive(Debug, Default)]
pub struct RecordCollector {
    pub records: Vec<DiagnosticsRecord>,
}

impl RunObserver for RecordCollector {
    fn on_record(&mut self, record: &DiagnosticsRecord) -> std::io::Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Observer that discards everything.
pub struct NullObserver;

impl RunObserver for NullObserver {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Diverged { step: usize, t: f64, what: String },
    BlowupMonitor { step: usize, t: f64, h2_sum: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub steps: usize,
    pub t_final: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Signed sum of per-step energy defects.
    pub energy_drift: f64,
    /// Largest per-step defect relative to the energy at that step.
    pub max_step_defect_rel: f64,
    pub blowup_integral: f64,
    /// Smallness monitor held at every emitted record.
    pub threshold_ok: bool,
    /// Initial data satisfied the data gate.
    pub data_gate_ok: bool,
    /// First record time at which a constraint residual exceeded the drift budget.
    pub drift_exceeded_at: Option<f64>,
    pub max_residuals: crate::constraints::ConstraintResiduals,
    pub annotations: Vec<String>,
    #[serde(skip)]
    pub final_state: Option<State>,
}

/// Integrate from `ic` to `t_end`, emitting diagnostics to `observer`.
///
/// Per-step energy defects use the trapezoid rule on the dissipation with
/// the Hermite end correction `dt²/12 (D'(t_n) − D'(t_{n+1}))`, where `D'`
/// is evaluated from the same tendencies the stepper uses.
pub fn run(
    solver: &Solver,
    ic: &AdmissibleIC,
    mu: f64,
    t_end: f64,
    options: &RunOptions,
    observer: &mut dyn RunObserver,
) -> Result<RunSummary, DynamicsError> {
    let sp = solver.spectral();
    let mut state = State::from_ic(sp, ic, mu)?;
    if options.dealias_initial && sp.dealias_enabled() {
        state.dealias(sp);
    }
    run_from(solver, state, t_end, options, observer)
}

pub fn run_from(
    solver: &Solver,
    mut state: State,
    t_end: f64,
    options: &RunOptions,
    observer: &mut dyn RunObserver,
) -> Result<RunSummary, DynamicsError> {
    if !(t_end >= state.t) || !t_end.is_finite() {
        return Err(DynamicsError::InvalidConfig {
            key: "t_end",
            reason: format!("must be finite and not before the start time, got {t_end}"),
        });
    }
    if options.diag_every == 0 {
        return Err(DynamicsError::InvalidConfig {
            key: "diag_every",
            reason: "must be at least 1".into(),
        });
    }
    options.threshold.validate().map_err(|reason| DynamicsError::InvalidConfig {
        key: "threshold",
        reason,
    })?;
    let sp = solver.spectral();
    let mu = state.mu;
    let t0 = state.t;

    let fixed_steps = solver.config().dt.map(|dt| {
        let span = t_end - t0;
        if span == 0.0 {
            0
        } else {
            ((span / dt) - 1e-9).ceil().max(1.0) as usize
        }
    });

    let mut monitor = diagnostics::Monitor::new(sp, &state, options.threshold);
    let first = monitor.record(sp, &state, 0.0);
    let initial_energy = first.kinetic + first.elastic;
    let data_gate_ok = monitor.data_gate_ok();
    observer
        .on_record(&first)
        .map_err(|e| io_divergence(&state, 0, e))?;
    if options.snapshot_every > 0 {
        observer
            .on_snapshot(0, &state)
            .map_err(|e| io_divergence(&state, 0, e))?;
    }

    let mut summary = RunSummary {
        termination: Termination::Completed,
        steps: 0,
        t_final: state.t,
        initial_energy,
        final_energy: initial_energy,
        energy_drift: 0.0,
        max_step_defect_rel: 0.0,
        blowup_integral: 0.0,
        threshold_ok: first.threshold_ok,
        data_gate_ok,
        drift_exceeded_at: None,
        max_residuals: first.constraint,
        annotations: Vec::new(),
        final_state: None,
    };
    note_residuals(&mut summary, &first, options.drift_budget);

    let mut f0 = solver.tendency(&state.v, &state.e);
    let mut energy = initial_energy;
    let mut diss = diagnostics::dissipation_hat(sp, &state.v, mu);
    let mut diss_rate = mu * solver.grad_energy_rate(&state.v, &solver.add_viscous(&f0.dv, &state.v, mu));
    let mut pending_defect = 0.0;
    let mut step = 0usize;

    loop {
        let remaining = t_end - state.t;
        let dt = match fixed_steps {
            Some(n) => {
                if step >= n {
                    break;
                }
                (t_end - t0) / n as f64
            }
            None => {
                if remaining <= 1e-12 * t_end.abs().max(1.0) {
                    break;
                }
                solver.cfl_dt(&state)?.min(remaining)
            }
        };
        let next = solver.step_with(&state, dt, &f0);
        step += 1;
        let next = match fixed_steps {
            Some(n) if step == n => State { t: t_end, ..next },
            _ => next,
        };
        if !next.is_finite() {
            summary.termination = Termination::Diverged {
                step,
                t: next.t,
                what: "non-finite field values".into(),
            };
            summary.steps = step - 1;
            summary.t_final = state.t;
            summary.final_state = Some(state);
            return Ok(summary);
        }
        let f1 = solver.tendency(&next.v, &next.e);
        let next_energy = diagnostics::energy_hat(sp, &next.v, &next.e);
        let next_diss = diagnostics::dissipation_hat(sp, &next.v, mu);
        let next_rate =
            mu * solver.grad_energy_rate(&next.v, &solver.add_viscous(&f1.dv, &next.v, mu));
        let integral = 0.5 * dt * (diss + next_diss) + dt * dt / 12.0 * (diss_rate - next_rate);
        let defect = next_energy - energy + integral;
        pending_defect += defect;
        summary.energy_drift += defect;
        if next_energy > 0.0 {
            summary.max_step_defect_rel = summary.max_step_defect_rel.max(defect.abs() / next_energy);
        }
        monitor.advance(sp, &next, dt);

        state = next;
        f0 = f1;
        energy = next_energy;
        diss = next_diss;
        diss_rate = next_rate;

        let last = match fixed_steps {
            Some(n) => step == n,
            None => t_end - state.t <= 1e-12 * t_end.abs().max(1.0),
        };
        let h2_sum = monitor.h2_sum();
        let tripped = !(h2_sum <= options.blowup_ceiling);
        if step % options.diag_every == 0 || last || tripped {
            let rec = monitor.record(sp, &state, pending_defect);
            pending_defect = 0.0;
            summary.threshold_ok &= rec.threshold_ok;
            note_residuals(&mut summary, &rec, options.drift_budget);
            observer
                .on_record(&rec)
                .map_err(|e| io_divergence(&state, step, e))?;
        }
        if options.snapshot_every > 0 && (step % options.snapshot_every == 0 || last) {
            observer
                .on_snapshot(step, &state)
                .map_err(|e| io_divergence(&state, step, e))?;
        }
        if tripped {
            summary.termination = Termination::BlowupMonitor {
                step,
                t: state.t,
                h2_sum,
            };
            break;
        }
    }

    summary.steps = step;
    summary.t_final = state.t;
    summary.final_energy = energy;
    summary.blowup_integral = monitor.blowup_integral();
    if !summary.threshold_ok {
        summary.annotations.push("threshold exceeded".into());
    }
    if let Some(t) = summary.drift_exceeded_at {
        summary
            .annotations
            .push(format!("constraint drift budget exceeded at t = {t:.6e}"));
    }
    summary.final_state = Some(state);
    Ok(summary)
}

fn note_residuals(summary: &mut RunSummary, rec: &DiagnosticsRecord, budget: f64) {
    let r = &rec.constraint;
    let m = &mut summary.max_residuals;
    m.div_v = m.div_v.max(r.div_v);
    m.det_res = m.det_res.max(r.det_res);
    m.div_et = m.div_et.max(r.div_et);
    m.curl_res = m.curl_res.max(r.curl_res);
    m.trace_res = m.trace_res.max(r.trace_res);
    if summary.drift_exceeded_at.is_none() && !r.within(budget) {
        summary.drift_exceeded_at = Some(rec.t);
    }
}

fn io_divergence(state: &State, step: usize, e: std::io::Error) -> DynamicsError {
    DynamicsError::Divergence {
        step,
        t: state.t,
        what: format!("output sink failed: {e}"),
        last_good: Box::new(state.clone()),
    }
}
