//! Central finite-difference checks of every adjoint rule (64-bit, step 1e-5,
//! elementwise relative error below 1e-4).

mod common;

use common::{gradcheck, probe, random, REL_TOL};
use poremamba_tensor::ops::{self, Mode, RunningStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_ok(name: &str, err: f64) {
    assert!(err < REL_TOL, "{name}: max relative error {err:e}");
}

#[test]
fn unary_ops() {
    for (name, kind) in [
        ("neg", ops::Unary::Neg),
        ("exp", ops::Unary::Exp),
        ("softplus", ops::Unary::Softplus),
        ("gelu", ops::Unary::Gelu),
        ("square", ops::Unary::Square),
        ("scale", ops::Unary::Scale(-1.7)),
    ] {
        let x = random(&[2, 3, 4], 1);
        let err = gradcheck(&[x], |_, v| probe(ops::unary(v[0], kind).unwrap(), 2));
        assert_ok(name, err);
    }
}

#[test]
fn relu_away_from_kink() {
    let mut x = random(&[3, 5], 3);
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.2;
        }
    }
    assert_ok("relu", gradcheck(&[x], |_, v| probe(v[0].relu().unwrap(), 4)));
}

#[test]
fn binary_ops_with_broadcast() {
    for kind in [ops::Binary::Add, ops::Binary::Sub, ops::Binary::Mul] {
        let a = random(&[2, 3, 2, 2, 2], 5);
        let b = random(&[1, 3, 1, 1, 1], 6);
        let err = gradcheck(&[a, b], |_, v| probe(ops::binary(v[0], v[1], kind).unwrap(), 7));
        assert_ok("binary", err);
        let a = random(&[1, 3, 1, 1, 1], 8);
        let b = random(&[2, 3, 2, 2, 2], 9);
        let err = gradcheck(&[a, b], |_, v| probe(ops::binary(v[0], v[1], kind).unwrap(), 10));
        assert_ok("binary (left broadcast)", err);
    }
}

#[test]
fn patch_conv_all_operands() {
    let x = random(&[2, 2, 4, 4, 4], 11);
    let w = random(&[3, 2, 2, 2, 2], 12);
    let b = random(&[3], 13);
    let err = gradcheck(&[x, w, b], |_, v| {
        probe(ops::patch_conv(v[0], v[1], Some(v[2]), 2).unwrap(), 14)
    });
    assert_ok("patch_conv", err);
}

#[test]
fn pointwise_linear_all_operands() {
    let x = random(&[2, 3, 2, 1, 2], 15);
    let w = random(&[4, 3], 16);
    let b = random(&[4], 17);
    let err = gradcheck(&[x, w, b], |_, v| {
        probe(ops::pointwise_linear(v[0], v[1], Some(v[2])).unwrap(), 18)
    });
    assert_ok("pointwise_linear", err);
    let x = random(&[3, 4], 19);
    let w = random(&[2, 4], 20);
    let err = gradcheck(&[x, w], |_, v| probe(ops::pointwise_linear(v[0], v[1], None).unwrap(), 21));
    assert_ok("pointwise_linear (dense, no bias)", err);
}

#[test]
fn matmul_with_transposes() {
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let a = if ta { random(&[2, 4, 3], 22) } else { random(&[2, 3, 4], 22) };
        let b = if tb { random(&[2, 5, 4], 23) } else { random(&[2, 4, 5], 23) };
        let err = gradcheck(&[a, b], |_, v| probe(ops::matmul_t(v[0], v[1], ta, tb).unwrap(), 24));
        assert_ok("matmul", err);
    }
}

#[test]
fn layer_norm_channel_and_last_axis() {
    let x = random(&[2, 4, 3], 25);
    let g = random(&[4], 26);
    let s = random(&[4], 27);
    let err = gradcheck(&[x, g, s], |_, v| {
        probe(ops::layer_norm(v[0], 1, v[1], v[2], 1e-5).unwrap(), 28)
    });
    assert_ok("layer_norm axis 1", err);
    let x = random(&[3, 5], 29);
    let g = random(&[5], 30);
    let s = random(&[5], 31);
    let err = gradcheck(&[x, g, s], |_, v| {
        probe(ops::layer_norm(v[0], 1, v[1], v[2], 1e-5).unwrap(), 32)
    });
    assert_ok("layer_norm last axis", err);
}

#[test]
fn batch_norm_train_and_eval() {
    let x = random(&[3, 2, 2, 1, 2], 33);
    let g = random(&[2], 34);
    let s = random(&[2], 35);
    let err = gradcheck(&[x.clone(), g.clone(), s.clone()], |_, v| {
        let mut rs = RunningStats::new(2);
        probe(ops::batch_norm(v[0], v[1], v[2], &mut rs, Mode::Train, 0.1, 1e-5).unwrap(), 36)
    });
    assert_ok("batch_norm train", err);
    let err = gradcheck(&[x, g, s], |_, v| {
        let mut rs = RunningStats {
            mean: vec![0.3, -0.2],
            var: vec![0.5, 2.0],
            tracked: 1,
        };
        probe(ops::batch_norm(v[0], v[1], v[2], &mut rs, Mode::Eval, 0.1, 1e-5).unwrap(), 37)
    });
    assert_ok("batch_norm eval", err);
}

#[test]
fn dropout_fixed_mask() {
    let x = random(&[4, 6], 38);
    let err = gradcheck(&[x], |_, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        probe(ops::dropout(v[0], 0.3, Mode::Train, &mut rng).unwrap(), 40)
    });
    assert_ok("dropout", err);
}

#[test]
fn softmax_rows() {
    let x = random(&[2, 3, 4], 41);
    assert_ok("softmax", gradcheck(&[x], |_, v| probe(ops::softmax(v[0]).unwrap(), 42)));
}

#[test]
fn pooling_head_and_loss() {
    let x = random(&[2, 3, 2, 2, 2], 43);
    assert_ok(
        "global_mean",
        gradcheck(&[x], |_, v| probe(ops::global_mean(v[0]).unwrap(), 44)),
    );
    let h = random(&[3, 4], 45);
    let w = random(&[4], 46);
    let b = random(&[1], 47);
    assert_ok(
        "linear_head",
        gradcheck(&[h, w, b], |_, v| probe(ops::linear_head(v[0], v[1], v[2]).unwrap(), 48)),
    );
    let p = random(&[5, 1], 49);
    let t = random(&[5], 50);
    assert_ok(
        "mse_loss",
        gradcheck(&[p, t], |_, v| ops::mse_loss(v[0], v[1]).unwrap()),
    );
}

#[test]
fn structural_ops() {
    let x = random(&[2, 6, 3], 51);
    assert_ok(
        "narrow",
        gradcheck(&[x.clone()], |_, v| probe(v[0].narrow(1, 2, 3).unwrap(), 52)),
    );
    assert_ok(
        "reshape",
        gradcheck(&[x], |_, v| probe(v[0].reshape(&[4, 9]).unwrap(), 53)),
    );
    let base = random(&[2, 3, 2, 4], 54);
    assert_ok(
        "trilinear_resize",
        gradcheck(&[base], |_, v| probe(ops::trilinear_resize(v[0], [5, 3, 1]).unwrap(), 55)),
    );
}

#[test]
fn composite_graph_with_shared_nodes() {
    // a node consumed twice must receive the sum of both adjoints
    let x = random(&[2, 3, 2, 2, 2], 56);
    let a = random(&[1, 3, 1, 1, 1], 57);
    let err = gradcheck(&[x, a], |_, v| {
        let sp = v[1].softplus().unwrap();
        let alpha = sp.mul(v[0]).unwrap().neg().unwrap().exp().unwrap();
        let mixed = alpha.mul(v[0]).unwrap().add(v[0].gelu().unwrap()).unwrap();
        probe(ops::global_mean(mixed).unwrap(), 58)
    });
    assert_ok("composite", err);
}
