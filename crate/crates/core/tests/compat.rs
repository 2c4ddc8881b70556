mod common;

use common::*;
use lpnn::compat::{
    from_fm2, from_poly_kernel, to_tensor_train, to_tensor_train_output, tt_contract, FM2Model, KernelModel,
};
use lpnn::model_io::{tt_from_json, tt_to_json};
use lpnn::network::Head;
use lpnn::LpnnError;
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn kernel_network_matches_kernel_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for m in 1..=5u32 {
        let d = rng.random_range(1..=5);
        let k = rng.random_range(1..=4);
        let model = KernelModel {
            pi: Array1::from(random_vec(&mut rng, k, 1.0)),
            p: random_matrix(&mut rng, k, d, 0.7),
            lambda: rng.random_range(-1.0..1.0),
            m,
        };
        let net = from_poly_kernel(&model).unwrap();
        assert_eq!(net.depth(), m as usize);
        let p = mat(&model.p);
        for _ in 0..100 {
            let x = random_vec(&mut rng, d, 1.0);
            let want = kernel_oracle(model.pi.as_slice().unwrap(), &p, model.lambda, m, &x);
            let got = net.output(&augmented(&x)).unwrap()[0];
            assert!(rel_err(got, want, 1e-10) < 1e-10, "m={m}: {got} vs {want}");
        }
    }
}

#[test]
fn kernel_rejects_zero_degree() {
    let model = KernelModel {
        pi: Array1::ones(1),
        p: ndarray::Array2::ones((1, 2)),
        lambda: 0.0,
        m: 0,
    };
    assert!(matches!(from_poly_kernel(&model), Err(LpnnError::Config(_))));
}

#[test]
fn fm_network_matches_pairwise_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for case in 0..6 {
        let d = rng.random_range(1..=6);
        let r = rng.random_range(1..=4);
        let linear = case % 2 == 0;
        let model = FM2Model {
            w0: if linear { rng.random_range(-1.0..1.0) } else { 0.0 },
            w1: if linear {
                Array1::from(random_vec(&mut rng, d, 1.0))
            } else {
                Array1::zeros(d)
            },
            factors: random_matrix(&mut rng, d, r, 1.0),
        };
        let net = from_fm2(&model).unwrap();
        let v = mat(&model.factors);
        for _ in 0..100 {
            let x = random_vec(&mut rng, d, 1.0);
            let want = fm_oracle(model.w0, model.w1.as_slice().unwrap(), &v, &x);
            let got = net.output(&augmented(&x)).unwrap()[0];
            assert!(rel_err(got, want, 1e-10) < 1e-10, "{got} vs {want}");
        }
    }
}

#[test]
fn tensor_train_matches_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..10 {
        let (d0, widths) = random_shape(&mut rng, 4, 5, 3);
        let net = random_net(&mut rng, d0, &widths, false, Head::Raw);
        let cores = to_tensor_train(&net).unwrap();
        assert_eq!(cores.len(), net.depth() + 1);
        let layers = plain_layers(&net);
        for _ in 0..100 {
            let x = random_vec(&mut rng, d0, 1.0);
            let want = naive_forward(&layers, None, &x);
            let got = tt_contract(&cores, &x).unwrap();
            for (g, w) in got.iter().zip(&want) {
                assert!(rel_err(*g, *w, 1e-10) < 1e-10, "{g} vs {w}");
            }
        }
        let k = rng.random_range(0..net.output_dim());
        let single = to_tensor_train_output(&net, k).unwrap();
        assert_eq!(single.last().unwrap().dims()[0], 1);
        let x = random_vec(&mut rng, d0, 1.0);
        let want = naive_forward(&layers, None, &x)[k];
        assert!(rel_err(tt_contract(&single, &x).unwrap()[0], want, 1e-10) < 1e-10);
    }
}

#[test]
fn tensor_train_preconditions_and_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let with_b = random_net(&mut rng, 2, &[3, 1], true, Head::Raw);
    assert!(matches!(to_tensor_train(&with_b), Err(LpnnError::Precondition(_))));
    let net = random_net(&mut rng, 2, &[3, 1], false, Head::Raw);
    let cores = to_tensor_train(&net).unwrap();
    assert!(matches!(
        tt_contract(&cores, &[1.0, 2.0, 3.0]),
        Err(LpnnError::Shape(_))
    ));
    assert!(matches!(to_tensor_train_output(&net, 1), Err(LpnnError::Config(_))));
}

#[test]
fn tensor_train_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(204);
    let net = random_net(&mut rng, 3, &[4, 2], false, Head::Raw);
    let cores = to_tensor_train(&net).unwrap();
    let back = tt_from_json(&tt_to_json(&cores).unwrap()).unwrap();
    assert_eq!(cores, back);
}
