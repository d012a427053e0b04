//! Randomized invariants of the building blocks.

use proptest::prelude::*;

use spacetime_topopt::constraints::{overhang, ContinuityOperator, Neighborhood, OverhangParams};
use spacetime_topopt::fea::element_stiffness;
use spacetime_topopt::fields::filter::LinearFilter;
use spacetime_topopt::material::{rotated_constitutive, MaterialModel};
use spacetime_topopt::sobel::Padding;
use spacetime_topopt::{CellKind, Domain, Edge, Grid};

fn plate(nx: usize, ny: usize) -> Domain {
    let g = Grid::new(nx, ny, 1.0).unwrap();
    let base = g.edge_cells(Edge::Bottom);
    Domain::new(g, vec![CellKind::Design; nx * ny], Edge::Bottom, &base).unwrap()
}

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n)
}

proptest! {
    #[test]
    fn filter_transpose_is_the_adjoint(
        x in field(48),
        y in field(48),
        radius in 1.0f64..4.0,
    ) {
        let grid = Grid::new(8, 6, 1.0).unwrap();
        let members: Vec<usize> = (0..48).collect();
        let f = LinearFilter::new(&grid, &members, radius).unwrap();
        let lhs: f64 = f.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(f.apply_transpose(&y)).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn filter_is_an_average(x in field(48), radius in 1.0f64..4.0) {
        let grid = Grid::new(8, 6, 1.0).unwrap();
        let members: Vec<usize> = (0..48).collect();
        let out = LinearFilter::new(&grid, &members, radius).unwrap().apply(&x);
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn rotation_keeps_stiffness_positive_and_periodic(phi in -7.0f64..7.0) {
        for model in [MaterialModel::isotropic(), MaterialModel::anisotropic()] {
            let d0 = model.base_constitutive().unwrap();
            let d = rotated_constitutive(&d0, phi);
            let back = rotated_constitutive(&d0, phi + std::f64::consts::PI);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((d[i][j] - d[j][i]).abs() <= 1e-12 * d0[0][0]);
                    prop_assert!((d[i][j] - back[i][j]).abs() <= 1e-9 * d0[0][0]);
                }
            }
            // leading minors
            let m2 = d[0][0] * d[1][1] - d[0][1] * d[1][0];
            let m3 = d[0][0] * (d[1][1] * d[2][2] - d[1][2] * d[2][1])
                - d[0][1] * (d[1][0] * d[2][2] - d[1][2] * d[2][0])
                + d[0][2] * (d[1][0] * d[2][1] - d[1][1] * d[2][0]);
            prop_assert!(d[0][0] > 0.0 && m2 > 0.0 && m3 > 0.0);
        }
    }

    #[test]
    fn element_stiffness_is_symmetric_without_rigid_energy(
        phi in 0.0f64..3.2,
        h in 0.01f64..2.0,
        tx in -1.0f64..1.0,
        ty in -1.0f64..1.0,
        r in -1.0f64..1.0,
    ) {
        let d = rotated_constitutive(&MaterialModel::anisotropic().base_constitutive().unwrap(), phi);
        let k = element_stiffness(&d, h);
        let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let nodes = [(0.0, 0.0), (h, 0.0), (h, h), (0.0, h)];
        let mut u = [0.0; 8];
        for (n, &(x, y)) in nodes.iter().enumerate() {
            u[2 * n] = tx - r * y;
            u[2 * n + 1] = ty + r * x;
        }
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 0..8 {
            let mut f = 0.0;
            for j in 0..8 {
                prop_assert!((k[i * 8 + j] - k[j * 8 + i]).abs() <= 1e-12 * scale);
                f += k[i * 8 + j] * u[j];
            }
            prop_assert!(f.abs() <= 1e-12 * scale * umax);
        }
    }

    #[test]
    fn continuity_vanishes_on_constants_and_is_nonnegative(t in field(42), c in 0.0f64..1.0) {
        let d = plate(7, 6);
        for rule in [Neighborhood::Four, Neighborhood::Eight] {
            let op = ContinuityOperator::new(&d, rule).unwrap();
            prop_assert!(op.value(&t) >= 0.0);
            prop_assert!(op.value(&vec![c; 42]).abs() < 1e-28);
        }
    }

    #[test]
    fn overhang_is_nonnegative_and_stagewise(
        a in field(36),
        b in field(36),
        theta in prop::collection::vec(0.0f64..6.3, 2),
    ) {
        let d = plate(6, 6);
        // stage densities only grow
        let s2: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
        let rs = vec![vec![0.0; 36], a, s2];
        let r = overhang(&d, &Padding::with_base_plate(Edge::Bottom), &rs, &theta, &OverhangParams::new(45.0, 50.0), false);
        // faces turned away from the build direction keep the sigmoid tail,
        // at most sigma(-beta cos 45deg) times the largest Sobel component
        let tail = 1.0 / (1.0 + (50.0 * std::f64::consts::FRAC_1_SQRT_2).exp());
        prop_assert!(r.per_element.iter().flatten().all(|&v| v >= -8.0 * std::f64::consts::SQRT_2 * tail));
        prop_assert!((r.per_stage.iter().sum::<f64>() - r.total).abs() <= 1e-12 * r.total.max(1.0));
    }
}
