//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use vesim_core::constraints::{
    check_gamma_invariants, constraint_residuals, AdmissibleIC, ConstraintError, ConstraintResiduals,
};
use vesim_core::diagnostics::{self, audit_energy, hodge_split, read_csv, CsvSink, DiagnosticsRecord};
use vesim_core::dynamics::{self, DynamicsError, RunObserver, Solver, State, Termination};
use vesim_core::mach::{self, LimitStudyConfig, MachError};
use vesim_core::presets;
use vesim_core::snapshot::{load_field, save_field, save_sidecar, Sidecar};
use vesim_core::{Field, Grid, Rank, Repr, SobolevIndex, Spectral};

use crate::config::{validate_grid, IcParams, IcSource, RunConfig};
use crate::plot::{render_svg, Table};
use crate::{AuditArgs, CliError, GenIcArgs, LimitArgs, PlotArgs, RunArgs, VerifyArgs};

pub const V_FILE: &str = "v0.vesf";
pub const E_FILE: &str = "E0.vesf";

fn spectral_err(e: vesim_core::SpectralError) -> CliError {
    CliError::Usage(e.to_string())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn save_with_sidecar(path: &Path, f: &Field, t: f64, mu: Option<f64>, prov: serde_json::Value) -> Result<(), CliError> {
    save_field(path, f)?;
    save_sidecar(path, &Sidecar::new(t, mu, prov))?;
    Ok(())
}

fn load_pair(v_path: &Path, e_path: &Path) -> Result<(Field, Field), CliError> {
    let v = load_field(v_path)
        .map_err(|e| CliError::Usage(format!("cannot load {}: {e}", v_path.display())))?;
    let e = load_field(e_path)
        .map_err(|e| CliError::Usage(format!("cannot load {}: {e}", e_path.display())))?;
    if v.rank() != Rank::Vector {
        return Err(CliError::Usage(format!("{} does not hold a vector field", v_path.display())));
    }
    if e.rank() != Rank::Tensor {
        return Err(CliError::Usage(format!("{} does not hold a tensor field", e_path.display())));
    }
    if v.grid() != e.grid() {
        return Err(CliError::Usage("velocity and strain snapshots use different grids".into()));
    }
    Ok((v, e))
}

fn constraint_err(e: ConstraintError) -> CliError {
    match e {
        ConstraintError::Manufacture { residuals, tolerance } => CliError::Failed(format!(
            "manufactured data misses tolerance {tolerance:.1e}: {residuals}"
        )),
        ConstraintError::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::Usage(other.to_string()),
    }
}

/// Resolve an initial-data source on `sp`'s grid.
pub fn load_ic(sp: &Spectral, src: &IcSource, params: &IcParams, mu: f64) -> Result<AdmissibleIC, CliError> {
    match src {
        IcSource::Preset(p) => presets::build(sp, *p, &params.preset_params(mu)).map_err(constraint_err),
        IcSource::Dir(dir) => {
            let (v, e) = load_pair(&dir.join(V_FILE), &dir.join(E_FILE))?;
            if v.grid() != sp.grid() {
                return Err(CliError::Config {
                    key: "ic".into(),
                    reason: format!(
                        "snapshot grid {}^{} does not match the configured {}^{}",
                        v.grid().n(),
                        v.grid().dim(),
                        sp.grid().n(),
                        sp.grid().dim()
                    ),
                });
            }
            AdmissibleIC::from_fields(sp, v, e).map_err(spectral_err)
        }
    }
}

// -------------------------------------------------------------------------
// gen-ic
// -------------------------------------------------------------------------

pub fn gen_ic(a: &GenIcArgs) -> Result<(), CliError> {
    validate_grid(a.dim, a.n)?;
    if !(a.mu > 0.0 && a.mu.is_finite()) {
        return Err(CliError::Config {
            key: "mu".into(),
            reason: format!("must be positive and finite, got {}", a.mu),
        });
    }
    let mut params = IcParams::default();
    a.ic.apply(&mut params);
    params.validate()?;

    let grid = Grid::new(a.dim, a.n).expect("validated grid");
    let sp = Spectral::new(grid);
    create_dir(&a.out)?;
    let provenance = json!({
        "command": "gen-ic",
        "preset": a.preset.name(),
        "dim": a.dim,
        "n": a.n,
        "mu": a.mu,
        "params": params,
    });
    match presets::build(&sp, a.preset, &params.preset_params(a.mu)) {
        Ok(ic) => {
            save_with_sidecar(&a.out.join(V_FILE), &ic.v0, 0.0, None, provenance.clone())?;
            save_with_sidecar(&a.out.join(E_FILE), &ic.e0, 0.0, None, provenance.clone())?;
            write_json(
                &a.out.join("residuals.json"),
                &json!({
                    "pass": true,
                    "tolerance": params.tolerance,
                    "residuals": ic.residuals,
                    "provenance": provenance,
                }),
            )?;
            println!("{}", ic.residuals);
            Ok(())
        }
        Err(ConstraintError::Manufacture { residuals, tolerance }) => {
            write_json(
                &a.out.join("residuals.json"),
                &json!({
                    "pass": false,
                    "tolerance": tolerance,
                    "residuals": residuals,
                    "provenance": provenance,
                }),
            )?;
            Err(constraint_err(ConstraintError::Manufacture { residuals, tolerance }))
        }
        Err(e) => Err(constraint_err(e)),
    }
}

// -------------------------------------------------------------------------
// run
// -------------------------------------------------------------------------

/// Merge defaults, config file and flags.
pub fn resolve_run_config(a: &RunArgs) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::default();
    if let Some(path) = &a.config {
        c.load_file(path)?;
    }
    macro_rules! take {
        ($($field:ident),*) => {$(
            if let Some(v) = &a.$field {
                c.$field = v.clone();
            }
        )*};
    }
    take!(dim, n, mu, t_end, cfl, dt_max, scheme, out, diag_every, snapshot_every, c_threshold, drift_budget, blowup_ceiling);
    if let Some(dt) = a.dt {
        c.dt = Some(dt);
    }
    if a.cfl.is_some() {
        c.dt = None;
    }
    if let Some(ic) = &a.ic {
        c.set("ic", ic)?;
    }
    if a.fluid_only {
        c.fluid_only = true;
    }
    if a.no_dealias {
        c.dealias = false;
    }
    a.ic_args.apply(&mut c.ic_params);
    c.validate()?;
    Ok(c)
}

struct RunSink<'a> {
    csv: CsvSink<BufWriter<File>>,
    sp: &'a Spectral,
    snapshots: PathBuf,
    provenance: serde_json::Value,
}

impl RunObserver for RunSink<'_> {
    fn on_record(&mut self, record: &DiagnosticsRecord) -> std::io::Result<()> {
        self.csv.write(record)
    }

    fn on_snapshot(&mut self, step: usize, state: &State) -> std::io::Result<()> {
        let io = |e: vesim_core::snapshot::SnapshotError| std::io::Error::other(e.to_string());
        fs::create_dir_all(&self.snapshots)?;
        let mut prov = self.provenance.clone();
        prov["step"] = json!(step);
        for (name, f) in [("v", state.velocity(self.sp)), ("E", state.strain(self.sp))] {
            let path = self.snapshots.join(format!("step_{step:08}_{name}.vesf"));
            save_field(&path, &f).map_err(io)?;
            save_sidecar(&path, &Sidecar::new(state.t, Some(state.mu), prov.clone())).map_err(io)?;
        }
        Ok(())
    }
}

fn dynamics_err(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::InvalidConfig { key, reason } => CliError::Config {
            key: key.to_string(),
            reason,
        },
        DynamicsError::Divergence { what, step, t, .. } => {
            CliError::Diverged(format!("step {step}, t = {t:.6e}: {what}"))
        }
        DynamicsError::Spectral(e) => spectral_err(e),
    }
}

pub fn run(a: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve_run_config(a)?;
    let grid = cfg.grid();
    let solver = Solver::new(grid, cfg.stepper()).map_err(dynamics_err)?;
    let sp = solver.spectral();
    let ic = load_ic(sp, &cfg.ic, &cfg.ic_params, cfg.mu)?;

    create_dir(&cfg.out)?;
    let provenance = json!({ "command": "run", "config": cfg });
    let csv = CsvSink::new(BufWriter::new(File::create(cfg.out.join("diagnostics.csv"))?))?;
    let mut sink = RunSink {
        csv,
        sp,
        snapshots: cfg.out.join("snapshots"),
        provenance: provenance.clone(),
    };
    let summary = dynamics::run(&solver, &ic, cfg.mu, cfg.t_end, &cfg.run_options(), &mut sink)
        .map_err(dynamics_err)?;
    sink.csv.into_inner()?;

    if let Some(state) = &summary.final_state {
        let mut prov = provenance.clone();
        prov["step"] = json!(summary.steps);
        save_with_sidecar(&cfg.out.join("final_v.vesf"), &state.velocity(sp), state.t, Some(cfg.mu), prov.clone())?;
        save_with_sidecar(&cfg.out.join("final_E.vesf"), &state.strain(sp), state.t, Some(cfg.mu), prov)?;
    }
    write_json(
        &cfg.out.join("summary.json"),
        &json!({
            "config": cfg,
            "ic_residuals": ic.residuals,
            "summary": summary,
        }),
    )?;

    println!(
        "{} steps to t = {:.6e}; energy {:.6e} -> {:.6e}; drift {:.3e}",
        summary.steps, summary.t_final, summary.initial_energy, summary.final_energy, summary.energy_drift
    );
    for note in &summary.annotations {
        println!("note: {note}");
    }
    match summary.termination {
        Termination::Completed => Ok(()),
        Termination::Diverged { step, t, what } => {
            Err(CliError::Diverged(format!("step {step}, t = {t:.6e}: {what}")))
        }
        Termination::BlowupMonitor { step, t, h2_sum } => Err(CliError::Diverged(format!(
            "blow-up monitor tripped at step {step}, t = {t:.6e}: H2 sum {h2_sum:.3e}"
        ))),
    }
}

// -------------------------------------------------------------------------
// verify
// -------------------------------------------------------------------------

/// Tolerance on identities that hold to rounding for any tensor field.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub dim: usize,
    pub n: usize,
    pub tolerance: f64,
    pub residuals: ConstraintResiduals,
    /// `det(I+E)` against its invariant expansion.
    pub gamma_identity_defect: f64,
    /// `‖div − curl − ΔE‖ / ‖ΔE‖` for the Hodge parts.
    pub hodge_defect: f64,
    pub hodge_div: f64,
    pub hodge_curl: f64,
    pub failures: Vec<String>,
    pub pass: bool,
}

pub fn verify_fields(sp: &Spectral, v: &Field, e: &Field, tol: f64) -> Result<VerifyReport, CliError> {
    let residuals = constraint_residuals(sp, v, e).map_err(spectral_err)?;
    let gamma = check_gamma_invariants(sp, e).map_err(spectral_err)?;
    let (div, curl) = hodge_split(sp, e).map_err(spectral_err)?;
    let lap = sp.laplacian(e).map_err(spectral_err)?;
    let lap = match lap.repr() {
        Repr::Physical => lap,
        Repr::Spectral => sp.to_physical(&lap).map_err(spectral_err)?,
    };
    let scale = lap.max_abs();
    let hodge_defect = if scale > 0.0 {
        div.axpy(-1.0, &curl).max_abs_diff(&lap) / scale
    } else {
        div.axpy(-1.0, &curl).max_abs()
    };
    let hodge_div = sp.l2_norm(&div).map_err(spectral_err)?;
    let hodge_curl = sp.l2_norm(&curl).map_err(spectral_err)?;

    let mut failures: Vec<String> = residuals
        .entries()
        .iter()
        .filter(|(_, r)| !(*r <= tol))
        .map(|(name, r)| format!("{name}={r:.3e}"))
        .collect();
    if !(gamma.identity_defect <= IDENTITY_TOL * (1.0 + e.max_abs()).powi(3)) {
        failures.push(format!("gamma_identity={:.3e}", gamma.identity_defect));
    }
    if !(hodge_defect <= IDENTITY_TOL) {
        failures.push(format!("hodge={hodge_defect:.3e}"));
    }
    let g = sp.grid();
    Ok(VerifyReport {
        dim: g.dim(),
        n: g.n(),
        tolerance: tol,
        residuals,
        gamma_identity_defect: gamma.identity_defect,
        hodge_defect,
        hodge_div,
        hodge_curl,
        pass: failures.is_empty(),
        failures,
    })
}

pub fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    if !(a.tol > 0.0) {
        return Err(CliError::Config {
            key: "tol".into(),
            reason: format!("must be positive, got {}", a.tol),
        });
    }
    let (v_path, e_path) = match (&a.dir, &a.v, &a.e) {
        (Some(d), _, _) => (d.join(V_FILE), d.join(E_FILE)),
        (None, Some(v), Some(e)) => (v.clone(), e.clone()),
        _ => return Err(CliError::Usage("give --dir or both --v and --e".into())),
    };
    let (v, e) = load_pair(&v_path, &e_path)?;
    let sp = Spectral::new(v.grid());
    let report = verify_fields(&sp, &v, &e, a.tol)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Failed(report.failures.join(", ")))
    }
}

// -------------------------------------------------------------------------
// limit
// -------------------------------------------------------------------------

fn lambda_tag(l: f64) -> String {
    format!("{l}")
}

pub fn limit(a: &LimitArgs) -> Result<(), CliError> {
    validate_grid(a.dim, a.n)?;
    let config_err = |key: &str, reason: String| CliError::Config {
        key: key.into(),
        reason,
    };
    if !(a.mu > 0.0 && a.mu.is_finite()) {
        return Err(config_err("mu", format!("must be positive and finite, got {}", a.mu)));
    }
    if !(a.t_win > 0.0 && a.t_win.is_finite()) {
        return Err(config_err("t_win", format!("must be positive, got {}", a.t_win)));
    }
    if !(a.delta0 >= 0.0 && a.delta0.is_finite()) {
        return Err(config_err("delta0", format!("must be non-negative, got {}", a.delta0)));
    }
    let s = SobolevIndex::new(a.s).map_err(|e| config_err("s", e.to_string()))?;
    if a.s < 1 {
        return Err(config_err("s", "must lie in 1..=4".into()));
    }
    if a.samples < 1 {
        return Err(config_err("samples", "must be at least 1".into()));
    }
    if !(a.reference_dt > 0.0) {
        return Err(config_err("reference_dt", format!("must be positive, got {}", a.reference_dt)));
    }
    if a.lambdas.is_empty() || a.lambdas.iter().any(|l| !(*l >= 1.0)) {
        return Err(config_err("lambdas", "need one or more values, each at least 1".into()));
    }
    if a.lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config_err("lambdas", "must be strictly increasing".into()));
    }
    let mut params = IcParams::default();
    a.ic_args.apply(&mut params);
    params.validate()?;
    let src: IcSource = a.ic.parse().map_err(|e: String| config_err("ic", e))?;

    let mut cfg = LimitStudyConfig {
        mu: a.mu,
        t_win: a.t_win,
        delta0: a.delta0,
        seed: params.seed,
        s,
        samples: a.samples,
        reference_dt: a.reference_dt,
        ..Default::default()
    };
    if let Some(cfl) = a.cfl {
        cfg.compressible.cfl = cfl;
    }
    cfg.compressible.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let grid = Grid::new(a.dim, a.n).expect("validated grid");
    let sp = Spectral::new(grid);
    let ic = load_ic(&sp, &src, &params, a.mu)?;
    drop(sp);

    let result = mach::limit_study(grid, &ic, &a.lambdas, &cfg).map_err(|e| match e {
        MachError::InvalidArgument(m) => CliError::Usage(m),
        MachError::Divergence { step, t, what } => {
            CliError::Diverged(format!("step {step}, t = {t:.6e}: {what}"))
        }
        other => CliError::Failed(other.to_string()),
    })?;

    create_dir(&a.out)?;
    let mut study = BufWriter::new(File::create(a.out.join("limit.csv"))?);
    writeln!(study, "lambda,sup_error,projected_error,max_es,steps,wall_time")?;
    for run in &result.runs {
        writeln!(
            study,
            "{},{:.16e},{:.16e},{:.16e},{},{:.6}",
            run.lambda, run.sup_error, run.projected_error, run.max_es, run.steps, run.wall_time
        )?;
        let mut per = BufWriter::new(File::create(
            a.out.join(format!("lambda_{}.csv", lambda_tag(run.lambda))),
        )?);
        writeln!(per, "t,error,projected_error,energy_s,mass,rho_det_drift")?;
        for smp in &run.samples {
            writeln!(
                per,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                smp.t, smp.error, smp.projected_error, smp.energy_s, smp.mass, smp.rho_det_drift
            )?;
        }
        per.flush()?;
    }
    study.flush()?;
    write_json(
        &a.out.join("limit.json"),
        &json!({
            "config": cfg,
            "ic": a.ic,
            "ic_params": params,
            "result": result,
        }),
    )?;

    for run in &result.runs {
        println!(
            "lambda {:>6}: sup error {:.4e}, projected {:.4e}, max E_s {:.4e}, {} steps{}",
            run.lambda,
            run.sup_error,
            run.projected_error,
            run.max_es,
            run.steps,
            run.failure.as_deref().map(|f| format!(" (failed: {f})")).unwrap_or_default()
        );
    }
    match (result.rate, result.rate_residual) {
        (Some(r), Some(res)) => println!("rate {r:.4} (rms residual {res:.2e})"),
        _ => println!("rate undefined"),
    }
    for note in &result.annotations {
        println!("note: {note}");
    }
    Ok(())
}

// -------------------------------------------------------------------------
// plot, audit
// -------------------------------------------------------------------------

pub fn plot(a: &PlotArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.csv)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.csv.display())))?;
    let table = Table::parse(&text)?;
    let x = table.column(&a.x)?;
    let series = a
        .columns
        .iter()
        .map(|c| Ok((c.clone(), table.column(c)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    fs::write(&a.out, render_svg(&a.x, &x, &series, a.log))?;
    Ok(())
}

pub fn audit(a: &AuditArgs) -> Result<(), CliError> {
    if !(a.tol > 0.0) {
        return Err(CliError::Config {
            key: "tol".into(),
            reason: format!("must be positive, got {}", a.tol),
        });
    }
    let file = File::open(&a.csv)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.csv.display())))?;
    let records = read_csv(BufReader::new(file)).map_err(|e| match e {
        diagnostics::DiagnosticsError::Csv { line, reason } => {
            CliError::Usage(format!("{} line {line}: {reason}", a.csv.display()))
        }
        other => CliError::Io(other.to_string()),
    })?;
    let report = audit_energy(&records, a.tol);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "relative energy drift {:.3e} exceeds {:.1e}",
            report.cumulative_drift_rel, a.tol
        )))
    }
}
