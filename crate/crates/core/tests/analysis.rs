mod common;

use common::*;
use lpnn::analysis::{
    input_jacobian, line_coeffs, line_coeffs_all, lipschitz_bounds, minimize_along, minimize_poly, operator_norm,
    power_iteration_norm,
};
use lpnn::network::{Head, LadderLayer, LadderNetwork};
use lpnn::LpnnError;
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn line_coefficients_match_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..50 {
        let (d0, widths) = random_shape(&mut rng, 5, 6, 2);
        let intercept = rng.random_bool(0.5);
        let net = random_net(&mut rng, d0, &widths, intercept, Head::Raw);
        let x0 = random_vec(&mut rng, d0, 1.0);
        let g = random_vec(&mut rng, d0, 1.0);
        let coeffs = line_coeffs(&net, &x0, &g).unwrap();
        let degree = net.depth() + 1;
        assert_eq!(coeffs.degree(), degree);
        let nodes: Vec<f64> = (0..=degree).map(|i| -1.0 + 2.0 * i as f64 / degree as f64).collect();
        let layers = plain_layers(&net);
        let along = |t: f64| -> Vec<f64> {
            let x: Vec<f64> = x0.iter().zip(&g).map(|(a, b)| a + t * b).collect();
            naive_forward(&layers, None, &x)
        };
        for k in 0..net.output_dim() {
            let values: Vec<f64> = nodes.iter().map(|&t| along(t)[k]).collect();
            let fit = vandermonde_fit(&nodes, &values);
            let scale = fit.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-300);
            for (a, b) in coeffs.unit(k).iter().zip(&fit) {
                assert!((a - b).abs() / scale < 1e-8, "coefficient {a} vs {b}");
            }
            for _ in 0..20 {
                let t = rng.random_range(-3.0..3.0);
                let want = along(t)[k];
                let got = horner(&coeffs.unit(k), t);
                assert!(rel_err(got, want, 1e-9) < 1e-9, "t={t}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn every_layer_has_its_own_degree() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let net = random_net(&mut rng, 3, &[4, 3, 2], false, Head::Raw);
    let all = line_coeffs_all(&net, &[0.1, 0.2, 0.3], &[1.0, 0.0, -1.0]).unwrap();
    assert_eq!(all.iter().map(|c| c.degree()).collect::<Vec<_>>(), vec![2, 3, 4]);
    assert_eq!(all.iter().map(|c| c.units()).collect::<Vec<_>>(), vec![4, 3, 2]);
}

#[test]
fn cube_along_unit_direction() {
    let one = || LadderLayer::new(array![[1.0]], array![[1.0]], None).unwrap();
    let net = LadderNetwork::new(vec![one(), one()], Head::Raw).unwrap();
    let c = line_coeffs(&net, &[0.0], &[1.0]).unwrap();
    assert_eq!(c.unit(0), vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn minimum_matches_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..10 {
        let (d0, mut widths) = random_shape(&mut rng, 4, 5, 1);
        widths.pop();
        widths.push(1);
        let net = random_net(&mut rng, d0, &widths, true, Head::Raw);
        let x0 = random_vec(&mut rng, d0, 1.0);
        let g = random_vec(&mut rng, d0, 1.0);
        let (lo, hi) = (-2.0, 1.5);
        let found = minimize_along(&net, &x0, &g, (lo, hi)).unwrap();
        let coeffs = line_coeffs(&net, &x0, &g).unwrap().unit(0);
        let n = 1_000_000;
        let grid_min = (0..=n)
            .map(|i| horner(&coeffs, lo + (hi - lo) * i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min);
        assert!(
            found.value <= grid_min + 1e-12 * grid_min.abs().max(1.0),
            "{} > grid {grid_min}",
            found.value
        );
        assert!((lo..=hi).contains(&found.t));
    }
}

#[test]
fn minimizer_edge_cases() {
    let m = minimize_poly(&[1.0, 0.0, 0.0], -1.0, 2.0).unwrap();
    assert_eq!((m.t, m.value), (0.0, 0.0));
    let m = minimize_poly(&[2.0, 1.0], -1.0, 1.0).unwrap();
    assert_eq!((m.t, m.value), (-1.0, -1.0));
    let m = minimize_poly(&[3.0], 0.0, 0.0).unwrap();
    assert_eq!((m.t, m.value), (0.0, 3.0));
    assert!(matches!(
        minimize_poly(&[1.0, 0.0], 1.0, 0.0),
        Err(LpnnError::Config(_))
    ));
    let net = LadderNetwork::new(
        vec![LadderLayer::new(array![[1.0], [1.0]], array![[1.0], [1.0]], None).unwrap()],
        Head::Raw,
    )
    .unwrap();
    assert!(matches!(
        minimize_along(&net, &[0.0], &[1.0], (0.0, 1.0)),
        Err(LpnnError::Precondition(_))
    ));
}

#[test]
fn operator_norm_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..30 {
        let r = rng.random_range(1..=9);
        let c = rng.random_range(1..=9);
        let m = random_matrix(&mut rng, r, c, 1.0);
        let want = spectral_norm_oracle(&m);
        assert!(rel_err(operator_norm(m.view()), want, 1e-300) < 1e-10);
        assert!(rel_err(power_iteration_norm(m.view()), want, 1e-300) < 1e-6);
    }
    assert_eq!(operator_norm(ndarray::Array2::<f64>::zeros((3, 2)).view()), 0.0);
}

#[test]
fn large_matrix_uses_iteration_and_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let m = random_matrix(&mut rng, 600, 20, 1.0);
    let want = spectral_norm_oracle(&m);
    assert!(rel_err(operator_norm(m.view()), want, 1e-300) < 1e-6);
}

#[test]
fn lipschitz_bounds_hold_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..10 {
        let (d0, widths) = random_shape(&mut rng, 4, 6, 2);
        let net = random_net(&mut rng, d0, &widths, false, Head::Raw);
        let report = lipschitz_bounds(&net, 1.0).unwrap();
        for r in [0.5, 1.0, 2.0] {
            for _ in 0..1000 {
                let x = sample_ball(&mut rng, d0, r);
                let (_, trace) = net.forward(&x).unwrap();
                let jac = input_jacobian(&net, &x).unwrap();
                let last = net.depth();
                for l in 1..=last {
                    let h = trace.h[l - 1].to_vec();
                    assert!(norm(&h) <= report.h_bound(l, r) * (1.0 + 1e-12));
                }
                let j = jac.mapv(|v| v);
                assert!(operator_norm(j.view()) <= report.grad_bound(last, r) * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn unit_norm_single_layer_bounds() {
    let net = LadderNetwork::new(
        vec![LadderLayer::new(array![[1.0]], array![[1.0]], None).unwrap()],
        Head::Raw,
    )
    .unwrap();
    let report = lipschitz_bounds(&net, 1.0).unwrap();
    assert_eq!((report.layers[0].h_bound, report.layers[0].grad_bound), (1.0, 2.0));
    let one = || LadderLayer::new(array![[1.0]], array![[1.0]], None).unwrap();
    let cube = LadderNetwork::new(vec![one(), one()], Head::Raw).unwrap();
    assert_eq!(lipschitz_bounds(&cube, 1.0).unwrap().grad_bound(2, 1.0), 3.0);
}

#[test]
fn lipschitz_requires_pure_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let net = random_net(&mut rng, 2, &[2, 1], true, Head::Raw);
    assert!(matches!(lipschitz_bounds(&net, 1.0), Err(LpnnError::Precondition(_))));
}

#[test]
fn input_jacobian_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for _ in 0..20 {
        let (d0, widths) = random_shape(&mut rng, 4, 5, 3);
        let intercept = rng.random_bool(0.5);
        let net = random_net(&mut rng, d0, &widths, intercept, Head::Raw);
        let x = random_vec(&mut rng, d0, 1.0);
        let jac = input_jacobian(&net, &x).unwrap();
        let fd = fd_input_jacobian(&net, &x);
        for k in 0..net.output_dim() {
            for n in 0..d0 {
                assert!(
                    rel_err(jac[[k, n]], fd[k][n], 1e-6) < 1e-7,
                    "{} vs {}",
                    jac[[k, n]],
                    fd[k][n]
                );
            }
        }
    }
}
