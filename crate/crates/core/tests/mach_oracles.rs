//! Compressible system: linear acoustics, consistency with the incompressible
//! model, conservation and convergence.

use vesim_core::constraints::VelocitySpectrum;
use vesim_core::dynamics::{Solver, State, StepperConfig};
use vesim_core::mach::{gen_compressible_ic, CompressibleConfig, CompressibleIcParams, CompressibleSolver, CompressibleState};
use vesim_core::presets::{build, Preset, PresetParams};
use vesim_core::{Complex64, Field, Grid, Rank, Repr, SobolevIndex};

type M3 = [[f64; 3]; 3];

fn mul(a: &M3, b: &M3) -> M3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// `exp(A)` by scaling, a 20-term Taylor series, and squaring.
fn expm(a: &M3) -> M3 {
    let norm = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())) * 3.0;
    let squarings = norm.log2().ceil().max(0.0) as u32 + 1;
    let s = 0.5f64.powi(squarings as i32);
    let scaled: M3 = a.map(|r| r.map(|x| x * s));
    let mut term: M3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut sum = term;
    for n in 1..=20 {
        term = mul(&term, &scaled).map(|r| r.map(|x| x / n as f64));
        for i in 0..3 {
            for j in 0..3 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = mul(&sum, &sum);
    }
    sum
}

#[test]
fn density_mode_follows_linear_acoustics() {
    let g = Grid::new(2, 16).unwrap();
    let solver = CompressibleSolver::new(g, CompressibleConfig { cfl: 0.1, ..Default::default() }).unwrap();
    let sp = solver.spectral();
    let (lambda, mu, k, eps) = (3.0f64, 0.05f64, 1.0f64, 1e-7f64);
    let rho = Field::from_fn(g, Rank::Scalar, |x, _| 1.0 + eps * (k * x[0]).cos());
    let v = Field::zeros(g, Rank::Vector, Repr::Physical);
    let f = Field::constant_tensor(g, &[1.0, 0.0, 0.0, 1.0]);
    let mut st = CompressibleState::new(sp, 0.0, lambda, mu, &rho, &v, &f).unwrap();
    let t = 1.0;
    solver.advance_to(&mut st, t).unwrap();

    // ρ' = r cos kx, v₁ = a sin kx, F₁₁ − 1 = g cos kx
    let a_mat: M3 = [
        [0.0, -k, 0.0],
        [(lambda * lambda - 1.0) * k, -2.0 * mu * k * k, -2.0 * k],
        [0.0, k, 0.0],
    ];
    let e = expm(&a_mat.map(|r| r.map(|x| x * t)));
    let (r, a, gg) = (e[0][0] * eps, e[1][0] * eps, e[2][0] * eps);
    let want_rho = Field::from_fn(g, Rank::Scalar, |x, _| 1.0 + r * (k * x[0]).cos());
    let want_v = Field::from_fn(g, Rank::Vector, |x, c| if c == 0 { a * (k * x[0]).sin() } else { 0.0 });
    let want_f = Field::from_fn(g, Rank::Tensor, |x, c| match c {
        0 => 1.0 + gg * (k * x[0]).cos(),
        3 => 1.0,
        _ => 0.0,
    });
    assert!(st.density(sp).max_abs_diff(&want_rho) < 1e-5 * eps);
    assert!(st.velocity(sp).max_abs_diff(&want_v) < 1e-5 * eps);
    assert!(st.deformation(sp).max_abs_diff(&want_f) < 1e-5 * eps);
}

#[test]
fn projected_tendency_matches_incompressible_rhs() {
    let g = Grid::new(2, 32).unwrap();
    let comp = CompressibleSolver::new(g, CompressibleConfig::default()).unwrap();
    let inc = Solver::new(g, StepperConfig::default()).unwrap();
    let sp = comp.spectral();
    let p = PresetParams {
        seed: 9,
        steps: 50,
        ..Default::default()
    };
    let ic = build(sp, Preset::Random, &p).unwrap();
    let mu = 0.7;
    let identity = Field::constant_tensor(g, &[1.0, 0.0, 0.0, 1.0]);
    let f = identity.axpy(1.0, &ic.e0);
    let rho = Field::from_fn(g, Rank::Scalar, |_, _| 1.0);
    let cs = CompressibleState::new(sp, 0.0, 10.0, mu, &rho, &ic.v0, &f).unwrap();
    let is = State::from_ic(sp, &ic, mu).unwrap();

    let k = comp.rhs_compressible(&cs).unwrap();
    let mut dv = k.v.clone();
    sp.leray_in_place(&mut dv);
    let (want_v, want_e) = inc.rhs(&is);
    let want_v = want_v.spectral().unwrap();
    let want_e = want_e.spectral().unwrap();
    let scale = want_v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let dmax = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
    assert!(dmax(&dv, want_v) <= 1e-9 * scale);
    assert!(dmax(&k.f, want_e) <= 1e-9 * scale);
    assert!(k.rho.iter().all(|z| z.norm() <= 1e-9 * scale));
}

#[test]
fn mass_conserved_and_constraint_drift_bounded() {
    let g = Grid::new(2, 32).unwrap();
    let solver = CompressibleSolver::new(g, CompressibleConfig::default()).unwrap();
    let sp = solver.spectral();
    let ic = build(sp, Preset::SmallData, &PresetParams { seed: 3, steps: 40, ..Default::default() }).unwrap();
    let params = CompressibleIcParams {
        lambda: 5.0,
        delta0: 0.05,
        seed: 8,
        s: SobolevIndex::new(4).unwrap(),
        spectrum: VelocitySpectrum::default(),
    };
    let (mut st, rep) = gen_compressible_ic(sp, &ic, 1.0, &params).unwrap();
    assert!(rep.within_bounds());
    assert!(rep.rho_det_drift < 1e-12);
    let (again, _) = gen_compressible_ic(sp, &ic, 1.0, &params).unwrap();
    assert_eq!(st, again);

    let m0 = st.mass();
    solver.advance_to(&mut st, 0.5).unwrap();
    assert!(((st.mass() - m0) / m0).abs() < 1e-13);
    assert!(st.rho_det_drift(sp) < 1e-5);
}

#[test]
fn explicit_rk4_converges_at_fourth_order() {
    let g = Grid::new(2, 16).unwrap();
    let solver = CompressibleSolver::new(g, CompressibleConfig::default()).unwrap();
    let sp = solver.spectral();
    let ic = build(sp, Preset::SmallData, &PresetParams { seed: 6, steps: 40, target_h2_sq: 1e-2, ..Default::default() }).unwrap();
    let params = CompressibleIcParams {
        lambda: 2.0,
        delta0: 0.1,
        seed: 1,
        s: SobolevIndex::new(2).unwrap(),
        spectrum: VelocitySpectrum::default(),
    };
    let (st0, _) = gen_compressible_ic(sp, &ic, 1.0, &params).unwrap();
    let t = 0.2;
    let go = |n: usize| {
        let mut s = st0.clone();
        for _ in 0..n {
            s = solver.step_compressible(&s, t / n as f64).unwrap();
        }
        s
    };
    let reference = go(640);
    let err = |s: &CompressibleState| {
        s.v_hat()
            .iter()
            .zip(reference.v_hat())
            .chain(s.rho_hat().iter().zip(reference.rho_hat()))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let errs: Vec<f64> = [20usize, 40, 80].iter().map(|&n| err(&go(n))).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order:.3} from {errs:?}");
    }
}
