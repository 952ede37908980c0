//! Time integration against closed-form solutions.

use vesim_core::constraints::taylor_green;
use vesim_core::diagnostics::energy_hat;
use vesim_core::dynamics::{run, RecordCollector, RunOptions, Scheme, Solver, State, StepperConfig};
use vesim_core::presets::{build, Preset, PresetParams};
use vesim_core::{Field, Grid, Rank, Repr, Spectral};

/// `exp(M t)` applied to `(1, 0)` for `M = [[-μk², -k], [k, 0]]`, the shear mode
/// `v₂ = a sin(k x₁)`, `E₂₁ = b cos(k x₁)`.
fn shear_oracle(mu: f64, k: f64, t: f64) -> (f64, f64) {
    let tr = -mu * k * k;
    let det = k * k;
    let h = 0.5 * tr;
    let q2 = h * h - det;
    let (c, s) = if q2 > 1e-14 {
        let q = q2.sqrt();
        ((q * t).cosh(), (q * t).sinh() / q)
    } else if q2 < -1e-14 {
        let q = (-q2).sqrt();
        ((q * t).cos(), (q * t).sin() / q)
    } else {
        (1.0, t)
    };
    let e = (h * t).exp();
    (e * (c + s * (tr - h)), e * s * k)
}

#[test]
fn shear_mode_follows_linear_dispersion() {
    let g = Grid::new(2, 16).unwrap();
    let sp = Spectral::new(g);
    let eps = 1e-6;
    for (k, mu) in [(1.0f64, 0.1), (1.0, 5.0), (2.0, 1.0)] {
        let v = Field::from_fn(g, Rank::Vector, |x, c| if c == 1 { eps * (k * x[0]).sin() } else { 0.0 });
        let e = Field::zeros(g, Rank::Tensor, Repr::Physical);
        let solver = Solver::new(g, StepperConfig::fixed(1e-3, Scheme::Erk4)).unwrap();
        let mut s = State::new(&sp, 0.0, mu, &v, &e).unwrap();
        for _ in 0..500 {
            s = solver.step(&s, 1e-3);
        }
        let (a, b) = shear_oracle(mu, k, s.t);
        let vx = Field::from_fn(g, Rank::Vector, |x, c| if c == 1 { eps * a * (k * x[0]).sin() } else { 0.0 });
        let ex = Field::from_fn(g, Rank::Tensor, |x, c| if c == 2 { eps * b * (k * x[0]).cos() } else { 0.0 });
        assert!(s.velocity(&sp).max_abs_diff(&vx) < 1e-6 * eps, "k {k} mu {mu}");
        assert!(s.strain(&sp).max_abs_diff(&ex) < 1e-6 * eps, "k {k} mu {mu}");
    }
}

#[test]
fn taylor_green_decays_exactly_without_elasticity() {
    let g = Grid::new(2, 32).unwrap();
    let sp = Spectral::new(g);
    let mu = 0.1;
    let tg = taylor_green(g);
    for scheme in [Scheme::ImexCnRk2, Scheme::Erk4] {
        let cfg = StepperConfig {
            fluid_only: true,
            ..StepperConfig::fixed(0.01, scheme)
        };
        let solver = Solver::new(g, cfg).unwrap();
        let mut s = State::new(&sp, 0.0, mu, &tg, &Field::zeros(g, Rank::Tensor, Repr::Physical)).unwrap();
        for _ in 0..100 {
            s = solver.step(&s, 0.01);
        }
        let want = tg.scaled((-2.0 * mu * s.t).exp());
        assert!(s.velocity(&sp).max_abs_diff(&want) < 1e-6 * want.max_abs(), "{scheme}");
    }
}

fn small_state(sp: &Spectral) -> State {
    let p = PresetParams {
        seed: 2,
        steps: 40,
        target_h2_sq: 1e-2,
        ..Default::default()
    };
    let ic = build(sp, Preset::SmallData, &p).unwrap();
    let mut s = State::from_ic(sp, &ic, 1.0).unwrap();
    s.dealias(sp);
    s
}

fn advance(solver: &Solver, s: &State, dt: f64, steps: usize) -> State {
    let mut s = s.clone();
    for _ in 0..steps {
        s = solver.step(&s, dt);
    }
    s
}

fn distance(sp: &Spectral, a: &State, b: &State) -> f64 {
    let dv: Vec<_> = a.v_hat().iter().zip(b.v_hat()).map(|(x, y)| x - y).collect();
    let de: Vec<_> = a.e_hat().iter().zip(b.e_hat()).map(|(x, y)| x - y).collect();
    energy_hat(sp, &dv, &de).sqrt()
}

#[test]
fn schemes_converge_at_their_order() {
    let g = Grid::new(2, 16).unwrap();
    let sp = Spectral::new(g);
    let s0 = small_state(&sp);
    for scheme in [Scheme::ImexCnRk2, Scheme::Erk4] {
        let solver = Solver::new(g, StepperConfig::fixed(0.05, scheme)).unwrap();
        let t = 0.5;
        let reference = advance(&solver, &s0, t / 800.0, 800);
        let errs: Vec<f64> = [10usize, 20, 40]
            .iter()
            .map(|&n| distance(&sp, &advance(&solver, &s0, t / n as f64, n), &reference))
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            let want = scheme.order() as f64;
            assert!((order - want).abs() < 0.3, "{scheme}: order {order:.3} from {errs:?}");
        }
    }
}

#[test]
fn energy_law_closes_with_independent_quadrature() {
    let g = Grid::new(2, 32).unwrap();
    let solver = Solver::new(g, StepperConfig::fixed(2e-3, Scheme::Erk4)).unwrap();
    let sp = solver.spectral();
    let p = PresetParams {
        seed: 4,
        steps: 40,
        ..Default::default()
    };
    let ic = build(sp, Preset::SmallData, &p).unwrap();
    let mut col = RecordCollector::default();
    let opts = RunOptions {
        diag_every: 5,
        ..Default::default()
    };
    let summary = run(&solver, &ic, 1.0, 1.0, &opts, &mut col).unwrap();
    let r = &col.records;
    assert_eq!(r.len(), 101);
    // composite Simpson over the record cadence
    let h = r[1].t - r[0].t;
    let mut integral = r[0].dissipation + r[r.len() - 1].dissipation;
    for (i, rec) in r.iter().enumerate().take(r.len() - 1).skip(1) {
        integral += if i % 2 == 1 { 4.0 } else { 2.0 } * rec.dissipation;
    }
    integral *= h / 3.0;
    let e0 = r[0].kinetic + r[0].elastic;
    let e1 = r[r.len() - 1].kinetic + r[r.len() - 1].elastic;
    assert!(((e1 - e0 + integral) / e0).abs() < 1e-7);
    assert!((summary.energy_drift / e0).abs() < 1e-9);
    assert!(e1 < e0);
}
