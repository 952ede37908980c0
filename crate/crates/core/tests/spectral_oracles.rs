//! Transforms and derivatives against independent reference computations.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vesim_core::{Complex64, Field, Grid, Rank, Spectral};

fn random_field(grid: Grid, rank: Rank, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rank.components(grid.dim()) * grid.points();
    Field::from_physical(grid, rank, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn forward_matches_direct_sum() {
    let g = Grid::new(2, 8).unwrap();
    let sp = Spectral::new(g);
    let f = random_field(g, Rank::Scalar, 1);
    let x = f.physical().unwrap();
    let hat = sp.to_spectral(&f).unwrap();
    let hat = hat.spectral().unwrap();
    let n = g.n();
    let mut worst = 0.0f64;
    for kf in 0..g.points() {
        let [k1, k2, _] = g.multi_index(kf);
        let mut acc = Complex64::new(0.0, 0.0);
        for pf in 0..g.points() {
            let [j1, j2, _] = g.multi_index(pf);
            let phase = -2.0 * PI * ((k1 * j1 + k2 * j2) as f64) / n as f64;
            acc += Complex64::from_polar(x[pf], phase);
        }
        worst = worst.max((acc - hat[kf]).norm() / acc.norm().max(1.0));
    }
    assert!(worst < 1e-12, "direct DFT mismatch {worst:e}");
}

#[test]
fn round_trip_is_identity() {
    for (dim, n) in [(2, 64), (3, 16)] {
        let g = Grid::new(dim, n).unwrap();
        let sp = Spectral::new(g);
        let f = random_field(g, Rank::Tensor, 2);
        let back = sp.to_physical(&sp.to_spectral(&f).unwrap()).unwrap();
        let err = rel_l2(back.physical().unwrap(), f.physical().unwrap());
        assert!(err < 1e-12, "dim {dim}: {err:e}");
    }
}

fn smooth(x: &[f64; 3]) -> f64 {
    (0.5 * (x[0].sin() + (2.0 * x[1]).cos())).exp()
}

/// Fourth-order central difference along `axis`.
fn fd4(grid: Grid, data: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.n();
    let h = grid.spacing();
    (0..grid.points())
        .map(|p| {
            let idx = grid.multi_index(p);
            let at = |off: i64| {
                let mut j = idx;
                j[axis] = ((idx[axis] as i64 + off).rem_euclid(n as i64)) as usize;
                data[grid.flat_index(&j[..grid.dim()])]
            };
            (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
        })
        .collect()
}

#[test]
fn gradient_tracks_fourth_order_differences() {
    let mut errs = Vec::new();
    let sizes = [64usize, 128, 256];
    for n in sizes {
        let g = Grid::new(2, n).unwrap();
        let sp = Spectral::new(g);
        let f = Field::from_fn(g, Rank::Scalar, |x, _| smooth(x));
        let grad = sp.gradient(&f).unwrap();
        let grad = grad.physical().unwrap();
        let mut worst = 0.0f64;
        for axis in 0..2 {
            let fd = fd4(g, f.physical().unwrap(), axis);
            let spec = &grad[axis * g.points()..(axis + 1) * g.points()];
            worst = worst.max(fd.iter().zip(spec).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        errs.push(worst);
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 3.8, "observed order {order:.3} from {errs:?}");
    }
}

#[test]
fn leray_idempotent_and_kills_gradients() {
    let g = Grid::new(3, 16).unwrap();
    let sp = Spectral::new(g);
    let v = random_field(g, Rank::Vector, 3);
    let p1 = sp.leray_project(&v).unwrap();
    let p2 = sp.leray_project(&p1).unwrap();
    assert!(p2.max_abs_diff(&p1) <= 1e-12 * p1.max_abs());
    let div = sp.divergence(&p1).unwrap();
    assert!(div.max_abs() < 1e-12 * p1.max_abs() * g.n() as f64);

    let phi = random_field(g, Rank::Scalar, 4);
    let grad = sp.gradient(&phi).unwrap();
    let killed = sp.leray_project(&grad).unwrap();
    assert!(killed.max_abs() <= 1e-12 * grad.max_abs());
}

#[test]
fn row_divergence_and_laplacian_of_modes() {
    let g = Grid::new(2, 16).unwrap();
    let sp = Spectral::new(g);
    // E_{01} = sin(2 x_1), E_{10} = cos(3 x_0): (∇·E)_0 = 2 cos 2x_1, (∇·E)_1 = -3 sin 3x_0
    let e = Field::from_fn(g, Rank::Tensor, |x, c| match c {
        1 => (2.0 * x[1]).sin(),
        2 => (3.0 * x[0]).cos(),
        _ => 0.0,
    });
    let div = sp.divergence(&e).unwrap();
    let want = Field::from_fn(g, Rank::Vector, |x, c| {
        if c == 0 {
            2.0 * (2.0 * x[1]).cos()
        } else {
            -3.0 * (3.0 * x[0]).sin()
        }
    });
    assert!(div.max_abs_diff(&want) < 1e-12);
    let lap = sp.laplacian(&e).unwrap();
    assert!(lap.max_abs_diff(&e.scaled(-4.0).axpy(-5.0, &Field::from_fn(g, Rank::Tensor, |x, c| {
        if c == 2 { (3.0 * x[0]).cos() } else { 0.0 }
    }))) < 1e-11);
}
