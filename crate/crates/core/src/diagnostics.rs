//! Scalar functionals tracked along trajectories: energies, Sobolev norms,
//! the auxiliary variable `w = Δv + ∇·E/μ`, the Hodge split of `ΔE`,
//! smallness monitors and the blow-up integral `∫‖∇v‖²_{H²}`.
//!
//! The generic constants `C` and `M` of the smallness thresholds carry no
//! constructive value; they are configuration, and monitors report measured
//! ratios next to every pass/fail flag.

use std::io::{self, BufRead, Write};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{residuals_from_hat, ConstraintResiduals};
use crate::dynamics::{RunObserver, State};
use crate::field::{Field, Rank};
use crate::spectral::{Spectral, SpectralError, ZERO};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed diagnostics CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Generic constants of the smallness thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub c_big: f64,
    pub m_big: f64,
}

impl ThresholdConfig {
    /// `M = 8C³ + 1`.
    pub fn with_c(c_big: f64) -> Self {
        ThresholdConfig {
            c_big,
            m_big: 8.0 * c_big.powi(3) + 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.c_big > 0.0 && self.c_big.is_finite()) {
            return Err(format!("C must be positive, got {}", self.c_big));
        }
        if !(self.m_big > 8.0 * self.c_big.powi(3)) {
            return Err(format!(
                "M must exceed 8C³ = {}, got {}",
                8.0 * self.c_big.powi(3),
                self.m_big
            ));
        }
        Ok(())
    }

    /// `μ² / (2C(μ³ + 1))`.
    pub fn run_bound(&self, mu: f64) -> f64 {
        mu * mu / (2.0 * self.c_big * (mu.powi(3) + 1.0))
    }

    /// `μ⁸ / (M(1 + μ¹²))`.
    pub fn data_gate(&self, mu: f64) -> f64 {
        mu.powi(8) / (self.m_big * (1.0 + mu.powi(12)))
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig::with_c(1.0)
    }
}

// -------------------------------------------------------------------------
// Spectral functionals
// -------------------------------------------------------------------------

/// `½‖v‖² + ½‖E‖²`.
pub fn energy_hat(sp: &Spectral, v: &[Complex64], e: &[Complex64]) -> f64 {
    0.5 * (sp.sobolev_norm_sq_hat(v, 0) + sp.sobolev_norm_sq_hat(e, 0))
}

/// `μ‖∇v‖²`.
pub fn dissipation_hat(sp: &Spectral, v: &[Complex64], mu: f64) -> f64 {
    mu * sp.weighted_norm_sq_hat(v, 1, 0)
}

/// `‖∇v‖²_{H²}`, the blow-up integrand.
pub fn grad_v_h2_sq(sp: &Spectral, v: &[Complex64]) -> f64 {
    sp.weighted_norm_sq_hat(v, 1, 2)
}

/// `(½‖v‖² + ½‖E‖², μ‖∇v‖²)`.
pub fn energy_pair(sp: &Spectral, state: &State) -> (f64, f64) {
    (
        energy_hat(sp, state.v_hat(), state.e_hat()),
        dissipation_hat(sp, state.v_hat(), state.mu),
    )
}

fn aux_w_hat(sp: &Spectral, v: &[Complex64], e: &[Complex64], mu: f64) -> Vec<Complex64> {
    let lap = sp.laplacian_hat(v);
    let div = sp.divergence_hat(e);
    lap.iter().zip(&div).map(|(a, b)| a + b / mu).collect()
}

/// `w = Δv + (1/μ)∇·E`, physical samples.
pub fn aux_w(sp: &Spectral, state: &State) -> Result<Field, DiagnosticsError> {
    if !(state.mu > 0.0) {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "viscosity must be positive, got {}",
            state.mu
        )));
    }
    let w = aux_w_hat(sp, state.v_hat(), state.e_hat(), state.mu);
    Ok(Field::from_physical(sp.grid(), Rank::Vector, sp.inverse_real(&w)))
}

/// `(∇∇·E)_ij = ∂_j ∂_l E_il`.
fn hodge_div_hat(sp: &Spectral, e: &[Complex64]) -> Vec<Complex64> {
    let np = sp.grid().points();
    let d = sp.grid().dim();
    let mut out = vec![ZERO; d * d * np];
    for i in 0..d {
        for j in 0..d {
            let dst = &mut out[(i * d + j) * np..(i * d + j + 1) * np];
            for l in 0..d {
                let src = &e[(i * d + l) * np..(i * d + l + 1) * np];
                for (p, (o, z)) in dst.iter_mut().zip(src).enumerate() {
                    let k = sp.kd(p);
                    *o -= z * (k[j] * k[l]);
                }
            }
        }
    }
    out
}

/// Row-wise `ΔE = ∇∇·E − ∇×∇×E`; returns `(∇∇·E, ∇×∇×E)` as spectra.
fn hodge_split_hat(sp: &Spectral, e: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let div = hodge_div_hat(sp, e);
    let lap = sp.laplacian_hat(e);
    let curl = div.iter().zip(&lap).map(|(a, b)| a - b).collect();
    (div, curl)
}

/// `(∇∇·E, ∇×∇×E)` with `ΔE = div_part − curl_part`, physical samples.
pub fn hodge_split(sp: &Spectral, e: &Field) -> Result<(Field, Field), SpectralError> {
    if e.rank() != Rank::Tensor {
        return Err(SpectralError::UnsupportedRank(e.rank()));
    }
    let hat = sp.coefficients(e)?;
    let (div, curl) = hodge_split_hat(sp, &hat);
    let g = sp.grid();
    Ok((
        Field::from_physical(g, Rank::Tensor, sp.inverse_real(&div)),
        Field::from_physical(g, Rank::Tensor, sp.inverse_real(&curl)),
    ))
}

/// Strain bound against the damping of `w` and `Δv`.
///
/// Since `∇·E = μ(w − Δv)`, `‖∇∇·E‖² ≤ 2μ²(‖∇w‖² + ‖∇Δv‖²)`; with
/// `‖∇×∇×E‖² ≤ C‖E‖²_{H²}‖ΔE‖²` this gives
/// `ratio ≤ 2/(1 − C‖E‖²_{H²})`, at most 4 when `‖E‖_{H²} ≤ 1/√(2C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrainBoundReport {
    /// `‖ΔE‖² / (μ²(‖∇w‖² + ‖∇Δv‖²))`; `None` when both sides vanish.
    pub ratio: Option<f64>,
    pub bound: f64,
    pub h2_e: f64,
    /// `‖E‖_{H²} ≤ 1/√(2C)`.
    pub precondition: bool,
    /// `‖∇×∇×E‖² / (‖E‖²_{H²} ‖ΔE‖²)`.
    pub measured_curl_constant: Option<f64>,
    pub degenerate: bool,
    pub pass: bool,
}

pub fn strain_bound_check(sp: &Spectral, state: &State, threshold: &ThresholdConfig) -> StrainBoundReport {
    let e = state.e_hat();
    let mu = state.mu;
    let lap_e = sp.weighted_norm_sq_hat(e, 2, 0);
    let w = aux_w_hat(sp, state.v_hat(), e, mu);
    let grad_w = sp.weighted_norm_sq_hat(&w, 1, 0);
    let grad_lap_v = sp.weighted_norm_sq_hat(state.v_hat(), 3, 0);
    let denom = mu * mu * (grad_w + grad_lap_v);
    let h2_sq = sp.sobolev_norm_sq_hat(e, 2);
    let h2_e = h2_sq.sqrt();
    let c = threshold.c_big;
    let precondition = h2_e <= 1.0 / (2.0 * c).sqrt();
    let bound = if c * h2_sq < 1.0 {
        2.0 / (1.0 - c * h2_sq)
    } else {
        f64::INFINITY
    };
    let (_, curl) = hodge_split_hat(sp, e);
    let curl_sq = sp.sobolev_norm_sq_hat(&curl, 0);
    let measured_curl_constant = if h2_sq > 0.0 && lap_e > 0.0 {
        Some(curl_sq / (h2_sq * lap_e))
    } else {
        None
    };
    if lap_e == 0.0 && denom == 0.0 {
        return StrainBoundReport {
            ratio: None,
            bound,
            h2_e,
            precondition,
            measured_curl_constant,
            degenerate: true,
            pass: true,
        };
    }
    let ratio = if denom > 0.0 { lap_e / denom } else { f64::INFINITY };
    StrainBoundReport {
        ratio: Some(ratio),
        bound,
        h2_e,
        precondition,
        measured_curl_constant,
        degenerate: false,
        pass: precondition && ratio <= bound,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    /// `‖v‖²_{H²} + ‖E‖²_{H²}`.
    pub norm_sq: f64,
    pub run_bound: f64,
    pub data_gate: f64,
    /// `norm_sq ≤ run_bound`.
    pub ok: bool,
    /// `norm_sq ≤ data_gate`.
    pub data_ok: bool,
}

pub fn smallness_monitor(sp: &Spectral, state: &State, threshold: &ThresholdConfig) -> SmallnessReport {
    let norm_sq = sp.sobolev_norm_sq_hat(state.v_hat(), 2) + sp.sobolev_norm_sq_hat(state.e_hat(), 2);
    let run_bound = threshold.run_bound(state.mu);
    let data_gate = threshold.data_gate(state.mu);
    SmallnessReport {
        norm_sq,
        run_bound,
        data_gate,
        ok: norm_sq <= run_bound,
        data_ok: norm_sq <= data_gate,
    }
}

// -------------------------------------------------------------------------
// Records
// -------------------------------------------------------------------------

/// One row of the diagnostics series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub dissipation: f64,
    /// Energy-law defect accumulated since the previous record.
    pub energy_residual: f64,
    pub h2_v: f64,
    pub h2_e: f64,
    pub w_norm: f64,
    pub grad_w_norm: f64,
    pub hodge_div: f64,
    pub hodge_curl: f64,
    pub blowup_integral: f64,
    pub threshold_ok: bool,
    pub constraint: ConstraintResiduals,
}

/// Add the trapezoid increment `dt/2 (prev + current)` to the running
/// blow-up integral.
pub fn blowup_integral_update(
    mut record: DiagnosticsRecord,
    dt: f64,
    prev_grad_v_h2_sq: f64,
    grad_v_h2_sq: f64,
) -> DiagnosticsRecord {
    record.blowup_integral += 0.5 * dt * (prev_grad_v_h2_sq + grad_v_h2_sq);
    record
}

/// Running state carried between steps: the blow-up integral and the
/// smallness norms.
#[derive(Debug, Clone)]
pub struct Monitor {
    threshold: ThresholdConfig,
    integral: f64,
    last_integrand: f64,
    h2_sum: f64,
    data_gate_ok: bool,
}

impl Monitor {
    pub fn new(sp: &Spectral, state: &State, threshold: ThresholdConfig) -> Self {
        let small = smallness_monitor(sp, state, &threshold);
        Monitor {
            threshold,
            integral: 0.0,
            last_integrand: grad_v_h2_sq(sp, state.v_hat()),
            h2_sum: small.norm_sq,
            data_gate_ok: small.data_ok,
        }
    }

    pub fn advance(&mut self, sp: &Spectral, next: &State, dt: f64) {
        let g = grad_v_h2_sq(sp, next.v_hat());
        self.integral += 0.5 * dt * (self.last_integrand + g);
        self.last_integrand = g;
        self.h2_sum = sp.sobolev_norm_sq_hat(next.v_hat(), 2) + sp.sobolev_norm_sq_hat(next.e_hat(), 2);
    }

    pub fn blowup_integral(&self) -> f64 {
        self.integral
    }

    /// `‖v‖²_{H²} + ‖E‖²_{H²}` at the latest state.
    pub fn h2_sum(&self) -> f64 {
        self.h2_sum
    }

    pub fn data_gate_ok(&self) -> bool {
        self.data_gate_ok
    }

    pub fn record(&self, sp: &Spectral, state: &State, energy_residual: f64) -> DiagnosticsRecord {
        let v = state.v_hat();
        let e = state.e_hat();
        let mu = state.mu;
        let w = aux_w_hat(sp, v, e, mu);
        let (div, curl) = hodge_split_hat(sp, e);
        let h2_v_sq = sp.sobolev_norm_sq_hat(v, 2);
        let h2_e_sq = sp.sobolev_norm_sq_hat(e, 2);
        let constraint = residuals_from_hat(sp, v, e).expect("state buffers have matching layout");
        DiagnosticsRecord {
            t: state.t,
            kinetic: 0.5 * sp.sobolev_norm_sq_hat(v, 0),
            elastic: 0.5 * sp.sobolev_norm_sq_hat(e, 0),
            dissipation: dissipation_hat(sp, v, mu),
            energy_residual,
            h2_v: h2_v_sq.sqrt(),
            h2_e: h2_e_sq.sqrt(),
            w_norm: sp.sobolev_norm_sq_hat(&w, 0).sqrt(),
            grad_w_norm: sp.weighted_norm_sq_hat(&w, 1, 0).sqrt(),
            hodge_div: sp.sobolev_norm_sq_hat(&div, 0).sqrt(),
            hodge_curl: sp.sobolev_norm_sq_hat(&curl, 0).sqrt(),
            blowup_integral: self.integral,
            threshold_ok: h2_v_sq + h2_e_sq <= self.threshold.run_bound(mu),
            constraint,
        }
    }
}

// -------------------------------------------------------------------------
// CSV
// -------------------------------------------------------------------------

/// Column names in output order.
pub const CSV_COLUMNS: [&str; 18] = [
    "t",
    "kinetic",
    "elastic",
    "dissipation",
    "energy_residual",
    "h2_v",
    "h2_E",
    "w_norm",
    "grad_w_norm",
    "hodge_div",
    "hodge_curl",
    "blowup_integral",
    "threshold_ok",
    "div_v",
    "det_res",
    "div_Et",
    "curl_res",
    "trace_res",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

/// Floats use 17 significant digits.
pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let c = &r.constraint;
    let floats_a = [
        r.t,
        r.kinetic,
        r.elastic,
        r.dissipation,
        r.energy_residual,
        r.h2_v,
        r.h2_e,
        r.w_norm,
        r.grad_w_norm,
        r.hodge_div,
        r.hodge_curl,
        r.blowup_integral,
    ];
    let floats_b = [c.div_v, c.det_res, c.div_et, c.curl_res, c.trace_res];
    let mut parts: Vec<String> = floats_a.iter().map(|x| format!("{x:.16e}")).collect();
    parts.push(r.threshold_ok.to_string());
    parts.extend(floats_b.iter().map(|x| format!("{x:.16e}")));
    parts.join(",")
}

/// Streams records as CSV; the header is written on construction.
pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", csv_header())?;
        Ok(CsvSink { out })
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> io::Result<()> {
        writeln!(self.out, "{}", csv_row(r))
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> RunObserver for CsvSink<W> {
    fn on_record(&mut self, record: &DiagnosticsRecord) -> io::Result<()> {
        self.write(record)
    }
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<DiagnosticsRecord>, DiagnosticsError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or(DiagnosticsError::Csv {
            line: 1,
            reason: "missing header".into(),
        })??;
    if header.trim() != csv_header() {
        return Err(DiagnosticsError::Csv {
            line: 1,
            reason: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let cells: Vec<&str> = line.trim().split(',').collect();
        if cells.len() != CSV_COLUMNS.len() {
            return Err(DiagnosticsError::Csv {
                line: lineno,
                reason: format!("expected {} cells, found {}", CSV_COLUMNS.len(), cells.len()),
            });
        }
        let f = |k: usize| -> Result<f64, DiagnosticsError> {
            cells[k].parse::<f64>().map_err(|e| DiagnosticsError::Csv {
                line: lineno,
                reason: format!("column {}: {e}", CSV_COLUMNS[k]),
            })
        };
        let threshold_ok = match cells[12] {
            "true" => true,
            "false" => false,
            other => {
                return Err(DiagnosticsError::Csv {
                    line: lineno,
                    reason: format!("column threshold_ok: '{other}' is not a boolean"),
                })
            }
        };
        out.push(DiagnosticsRecord {
            t: f(0)?,
            kinetic: f(1)?,
            elastic: f(2)?,
            dissipation: f(3)?,
            energy_residual: f(4)?,
            h2_v: f(5)?,
            h2_e: f(6)?,
            w_norm: f(7)?,
            grad_w_norm: f(8)?,
            hodge_div: f(9)?,
            hodge_curl: f(10)?,
            blowup_integral: f(11)?,
            threshold_ok,
            constraint: ConstraintResiduals {
                div_v: f(13)?,
                det_res: f(14)?,
                div_et: f(15)?,
                curl_res: f(16)?,
                trace_res: f(17)?,
                l2: Default::default(),
            },
        });
    }
    Ok(out)
}

/// Energy-law audit of an emitted series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub initial_energy: f64,
    /// `|Σ energy_residual|`, the stepper-resolution drift.
    pub cumulative_drift: f64,
    pub cumulative_drift_rel: f64,
    /// Largest single-row `|energy_residual|`.
    pub max_row_defect: f64,
    /// `|E(t_end) − E(0) + ∫D|` with the integral taken by the trapezoid rule
    /// over the record times; limited by the record cadence.
    pub cadence_defect: f64,
    pub blowup_monotone: bool,
    pub pass: bool,
}

pub fn audit_energy(records: &[DiagnosticsRecord], tol_rel: f64) -> EnergyAudit {
    let Some(first) = records.first() else {
        return EnergyAudit {
            initial_energy: 0.0,
            cumulative_drift: 0.0,
            cumulative_drift_rel: 0.0,
            max_row_defect: 0.0,
            cadence_defect: 0.0,
            blowup_monotone: true,
            pass: true,
        };
    };
    let e0 = first.kinetic + first.elastic;
    let drift: f64 = records.iter().map(|r| r.energy_residual).sum::<f64>().abs();
    let max_row = records
        .iter()
        .fold(0.0f64, |m, r| m.max(r.energy_residual.abs()));
    let mut integral = 0.0;
    for w in records.windows(2) {
        integral += 0.5 * (w[1].t - w[0].t) * (w[0].dissipation + w[1].dissipation);
    }
    let last = records.last().expect("non-empty");
    let cadence_defect = (last.kinetic + last.elastic - e0 + integral).abs();
    let blowup_monotone = records
        .windows(2)
        .all(|w| w[1].blowup_integral >= w[0].blowup_integral);
    let rel = if e0 > 0.0 { drift / e0 } else { drift };
    EnergyAudit {
        initial_energy: e0,
        cumulative_drift: drift,
        cumulative_drift_rel: rel,
        max_row_defect: max_row,
        cadence_defect,
        blowup_monotone,
        pass: rel <= tol_rel && blowup_monotone,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::taylor_green;
    use crate::field::Repr;
    use crate::grid::Grid;
    use approx::assert_relative_eq;

    fn sp2(n: usize) -> Spectral {
        Spectral::new(Grid::new(2, n).unwrap())
    }

    #[test]
    fn threshold_values_at_unit_viscosity() {
        let th = ThresholdConfig::default();
        assert_eq!(th.m_big, 9.0);
        assert_relative_eq!(th.run_bound(1.0), 0.25);
        assert_relative_eq!(th.data_gate(1.0), 1.0 / 18.0);
        assert!(ThresholdConfig { c_big: 1.0, m_big: 8.0 }.validate().is_err());
        assert!(ThresholdConfig { c_big: 0.0, m_big: 9.0 }.validate().is_err());
    }

    #[test]
    fn taylor_green_energy() {
        let sp = sp2(32);
        let g = sp.grid();
        let st = State::new(
            &sp,
            0.0,
            0.1,
            &taylor_green(g),
            &Field::zeros(g, Rank::Tensor, Repr::Physical),
        )
        .unwrap();
        let (total, diss) = energy_pair(&sp, &st);
        assert_relative_eq!(total, std::f64::consts::PI.powi(2), max_relative = 1e-13);
        // |k|² = 2 on every mode
        assert_relative_eq!(diss, 0.1 * 2.0 * 2.0 * total, max_relative = 1e-13);
    }

    #[test]
    fn aux_w_of_single_mode() {
        let sp = sp2(16);
        let g = sp.grid();
        let v = Field::from_fn(g, Rank::Vector, |x, c| if c == 0 { (3.0 * x[1]).sin() } else { 0.0 });
        let st = State::new(&sp, 0.0, 1.0, &v, &Field::zeros(g, Rank::Tensor, Repr::Physical)).unwrap();
        let w = aux_w(&sp, &st).unwrap();
        assert!(w.max_abs_diff(&v.scaled(-9.0)) < 1e-12);
    }

    #[test]
    fn hodge_split_of_gradient_rows() {
        let sp = sp2(16);
        let g = sp.grid();
        // E_ij = ∂_j g_i with g = (sin x₁ cos 2x₂, cos x₂)
        let e = Field::from_fn(g, Rank::Tensor, |x, c| match c {
            0 => x[0].cos() * (2.0 * x[1]).cos(),
            1 => -2.0 * x[0].sin() * (2.0 * x[1]).sin(),
            2 => 0.0,
            _ => -x[1].sin(),
        });
        let (div, curl) = hodge_split(&sp, &e).unwrap();
        assert!(curl.max_abs() < 1e-11);
        let lap = sp.laplacian(&e).unwrap();
        assert!(div.max_abs_diff(&lap) < 1e-11);
    }

    #[test]
    fn strain_bound_degenerate_at_equilibrium() {
        let sp = sp2(16);
        let st = State::equilibrium(sp.grid(), 1.0);
        let r = strain_bound_check(&sp, &st, &ThresholdConfig::default());
        assert!(r.degenerate && r.pass && r.ratio.is_none());
    }

    #[test]
    fn smallness_flag() {
        let sp = sp2(16);
        let g = sp.grid();
        // ‖a sin x₁‖²_{H²} = 4 · 2π² a²; pick a so the sum is 0.3
        let a = (0.3 / (8.0 * std::f64::consts::PI.powi(2))).sqrt();
        let v = Field::from_fn(g, Rank::Vector, |x, c| if c == 1 { a * x[0].sin() } else { 0.0 });
        let st = State::new(&sp, 0.0, 1.0, &v, &Field::zeros(g, Rank::Tensor, Repr::Physical)).unwrap();
        let r = smallness_monitor(&sp, &st, &ThresholdConfig::default());
        assert_relative_eq!(r.norm_sq, 0.3, max_relative = 1e-12);
        assert!(!r.ok);
        let eq = smallness_monitor(&sp, &State::equilibrium(g, 1.0), &ThresholdConfig::default());
        assert!(eq.ok && eq.data_ok);
    }

    #[test]
    fn blowup_update_is_trapezoid() {
        let sp = sp2(8);
        let st = State::equilibrium(sp.grid(), 1.0);
        let rec = Monitor::new(&sp, &st, ThresholdConfig::default()).record(&sp, &st, 0.0);
        let rec = blowup_integral_update(rec, 0.5, 0.0, 0.0);
        assert_eq!(rec.blowup_integral, 0.0);
        let rec = blowup_integral_update(rec, 0.5, 2.0, 2.0);
        let rec = blowup_integral_update(rec, 0.5, 2.0, 2.0);
        assert_relative_eq!(rec.blowup_integral, 2.0);
    }

    #[test]
    fn csv_round_trip() {
        let sp = sp2(16);
        let g = sp.grid();
        let st = State::new(
            &sp,
            0.25,
            0.1,
            &taylor_green(g),
            &Field::constant_tensor(g, &[0.0, 0.01, 0.0, 0.0]),
        )
        .unwrap();
        let rec = Monitor::new(&sp, &st, ThresholdConfig::default()).record(&sp, &st, 1e-9);
        let mut sink = CsvSink::new(Vec::new()).unwrap();
        sink.write(&rec).unwrap();
        let bytes = sink.into_inner().unwrap();
        let back = read_csv(&bytes[..]).unwrap();
        assert_eq!(back.len(), 1);
        let mut expected = rec.clone();
        expected.constraint.l2 = Default::default();
        assert_eq!(back[0], expected);
    }
}
