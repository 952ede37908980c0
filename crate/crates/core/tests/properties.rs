use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vesim_core::constraints::{check_gamma_invariants, constraint_residuals};
use vesim_core::{Field, Grid, Rank, Spectral};

fn random_field(grid: Grid, rank: Rank, seed: u64, amp: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rank.components(grid.dim()) * grid.points();
    Field::from_physical(grid, rank, (0..len).map(|_| amp * rng.gen_range(-1.0..1.0)).collect())
}

/// `g(x_0, x_1, x_2) = f(x_a, x_b, …)` with axes `a` and `b` exchanged.
fn swap_axes(f: &Field, a: usize, b: usize) -> Field {
    let g = f.grid();
    let np = g.points();
    let nc = f.components();
    let data = f.physical().unwrap();
    let mut out = vec![0.0; data.len()];
    for p in 0..np {
        let mut idx = g.multi_index(p);
        idx.swap(a, b);
        let q = g.flat_index(&idx[..g.dim()]);
        for c in 0..nc {
            out[c * np + p] = data[c * np + q];
        }
    }
    Field::from_physical(g, f.rank(), out)
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop_oneof![Just(Grid::new(2, 16).unwrap()), Just(Grid::new(3, 8).unwrap())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_round_trip(grid in grid_strategy(), seed in any::<u64>(), amp in 1e-3f64..1e3) {
        let sp = Spectral::new(grid);
        let f = random_field(grid, Rank::Vector, seed, amp);
        let back = sp.to_physical(&sp.to_spectral(&f).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&f) <= 1e-12 * f.max_abs());
    }

    #[test]
    fn leray_is_idempotent(grid in grid_strategy(), seed in any::<u64>()) {
        let sp = Spectral::new(grid);
        let v = random_field(grid, Rank::Vector, seed, 1.0);
        let p1 = sp.leray_project(&v).unwrap();
        let p2 = sp.leray_project(&p1).unwrap();
        prop_assert!(p2.max_abs_diff(&p1) <= 1e-12 * p1.max_abs().max(1e-300));
        // the projection never increases the L² norm
        prop_assert!(sp.l2_norm(&p1).unwrap() <= sp.l2_norm(&v).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn determinant_expands_in_invariants(grid in grid_strategy(), seed in any::<u64>(), amp in 0.0f64..2.0) {
        let sp = Spectral::new(grid);
        let e = random_field(grid, Rank::Tensor, seed, amp);
        let inv = check_gamma_invariants(&sp, &e).unwrap();
        prop_assert!(inv.identity_defect <= 1e-12 * (1.0 + amp).powi(3));
    }

    #[test]
    fn derivatives_commute_with_axis_swaps(seed in any::<u64>(), a in 0usize..3, b in 0usize..3) {
        let grid = Grid::new(3, 8).unwrap();
        let sp = Spectral::new(grid);
        let f = random_field(grid, Rank::Scalar, seed, 1.0);
        let fs = swap_axes(&f, a, b);
        let grad = sp.gradient(&f).unwrap();
        let grad_s = sp.gradient(&fs).unwrap();
        let np = grid.points();
        let swapped = swap_axes(&grad, a, b);
        let gd = grad_s.physical().unwrap();
        let sd = swapped.physical().unwrap();
        // component c of ∇(f∘σ) is component σ(c) of (∇f)∘σ
        for c in 0..3 {
            let sc = if c == a { b } else if c == b { a } else { c };
            for p in 0..np {
                prop_assert!((gd[c * np + p] - sd[sc * np + p]).abs() <= 1e-12 * grad.max_abs());
            }
        }
        let lap_s = sp.laplacian(&fs).unwrap();
        let lap = swap_axes(&sp.laplacian(&f).unwrap(), a, b);
        prop_assert!(lap_s.max_abs_diff(&lap) <= 1e-12 * lap.max_abs());
    }

    #[test]
    fn constant_volume_preserving_strain_is_admissible(theta in -3.0f64..3.0, shear in -2.0f64..2.0) {
        // I + E = rotation times a unit-determinant shear: det(I+E) = 1, constant so ∇·Eᵀ = 0
        let grid = Grid::new(2, 8).unwrap();
        let sp = Spectral::new(grid);
        let (c, s) = (theta.cos(), theta.sin());
        let m = [c, c * shear - s, s, s * shear + c];
        let e = Field::constant_tensor(grid, &[m[0] - 1.0, m[1], m[2], m[3] - 1.0]);
        let v = Field::zeros(grid, Rank::Vector, vesim_core::Repr::Physical);
        let r = constraint_residuals(&sp, &v, &e).unwrap();
        prop_assert!(r.det_res <= 1e-12 * (1.0 + shear.abs()).powi(2));
        prop_assert!(r.div_et <= 1e-12 && r.curl_res <= 1e-12);
    }
}
