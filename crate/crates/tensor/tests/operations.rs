mod common;

use common::random;
use poremamba_tensor::ops::{self, Mode, RunningStats};
use poremamba_tensor::{Tape, Tensor, TensorError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

#[test]
fn patchify_token_grids() {
    let tape = Tape::new();
    let x = tape.input(&Tensor::zeros(&[1, 1, 64, 64, 64]));
    let w = tape.param(&random(&[4, 1, 8, 8, 8], 1));
    let b = tape.param(&Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 0.0]).unwrap());
    let y = ops::patch_conv(x, w, Some(b), 8).unwrap();
    assert_eq!(y.shape(), vec![1, 4, 8, 8, 8]);
    // zero input: every token channel equals its bias
    let v = y.value();
    for c in 0..4 {
        assert!(v[c * 512..(c + 1) * 512].iter().all(|&t| t == [0.5, -1.0, 2.0, 0.0][c]));
    }
    let w64 = tape.param(&random(&[4, 1, 64, 64, 64], 2));
    let single = ops::patch_conv(x, w64, Some(b), 64).unwrap();
    assert_eq!(single.shape(), vec![1, 4, 1, 1, 1]);
}

#[test]
fn patchify_rejects_indivisible_axis() {
    let tape = Tape::new();
    let x = tape.input(&Tensor::zeros(&[1, 1, 8, 8, 12]));
    let w = tape.param(&Tensor::zeros(&[2, 1, 8, 8, 8]));
    match ops::patch_conv(x, w, None, 8) {
        Err(TensorError::Config(msg)) => assert!(msg.contains("axis W"), "{msg}"),
        other => panic!("expected configuration error, got {other:?}"),
    }
}

#[test]
fn patch_conv_matches_direct_convolution() {
    let (b, ci, co, n, k) = (2, 2, 3, 4, 2);
    let x = random(&[b, ci, n, n, n], 3);
    let w = random(&[co, ci, k, k, k], 4);
    let tape = Tape::new();
    let y = ops::patch_conv(tape.input(&x), tape.param(&w), None, k).unwrap();
    let m = n / k;
    let mut expect = vec![0.0; b * co * m * m * m];
    for s in 0..b {
        for o in 0..co {
            for tz in 0..m {
                for ty in 0..m {
                    for tx in 0..m {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let xi = (((s * ci + c) * n + tz * k + kz) * n + ty * k + ky) * n + tx * k + kx;
                                        let wi = (((o * ci + c) * k + kz) * k + ky) * k + kx;
                                        acc += x.data()[xi] * w.data()[wi];
                                    }
                                }
                            }
                        }
                        expect[(((s * co + o) * m + tz) * m + ty) * m + tx] = acc;
                    }
                }
            }
        }
    }
    close(&y.value(), &expect, 1e-12);
}

#[test]
fn pointwise_linear_examples() {
    let tape = Tape::new();
    let x = tape.input(&random(&[1, 64, 2, 2, 2], 5));
    let w = tape.param(&random(&[320, 64], 6));
    let y = ops::pointwise_linear(x, w, None).unwrap();
    assert_eq!(y.shape(), vec![1, 320, 2, 2, 2]);

    let zero_w = tape.param(&Tensor::zeros(&[3, 64]));
    let beta = tape.param(&Tensor::full(&[3], 1.25));
    let y = ops::pointwise_linear(x, zero_w, Some(beta)).unwrap();
    assert!(y.value().iter().all(|&v| v == 1.25));

    // per-voxel matrix-vector oracle
    let xt = random(&[2, 2, 3, 1, 2], 7);
    let wt = random(&[3, 2], 8);
    let bt = random(&[3], 9);
    let y = ops::pointwise_linear(tape.input(&xt), tape.param(&wt), Some(tape.param(&bt))).unwrap();
    let s = 6;
    let mut expect = vec![0.0; 2 * 3 * s];
    for n in 0..2 {
        for v in 0..s {
            for o in 0..3 {
                let mut acc = bt.data()[o];
                for c in 0..2 {
                    acc += wt.data()[o * 2 + c] * xt.data()[(n * 2 + c) * s + v];
                }
                expect[(n * 3 + o) * s + v] = acc;
            }
        }
    }
    close(&y.value(), &expect, 1e-12);

    let bad = tape.param(&Tensor::zeros(&[3, 5]));
    assert!(matches!(
        ops::pointwise_linear(tape.input(&xt), bad, None),
        Err(TensorError::Shape { .. })
    ));
}

#[test]
fn elementwise_examples() {
    let tape = Tape::new();
    let z = tape.input(&Tensor::zeros(&[1]));
    assert!((z.softplus().unwrap().item() - 0.693_147_180_559_945_3).abs() < 1e-15);
    assert_eq!(z.gelu().unwrap().item(), 0.0);
    let one = tape.input(&Tensor::scalar(1.0));
    // erf(1/sqrt 2) = 0.682689492137085897..., gelu(1) = (1 + erf)/2
    assert!((one.gelu().unwrap().item() - 0.841_344_746_068_542_9).abs() < 1e-12);
    let big = tape.input(&Tensor::scalar(1000.0));
    assert!(matches!(big.exp(), Err(TensorError::NonFinite { op: "exp" })));
    let a = tape.input(&Tensor::zeros(&[2, 3]));
    let b = tape.input(&Tensor::zeros(&[2, 2]));
    assert!(matches!(a.add(b), Err(TensorError::Shape { .. })));
}

#[test]
fn layer_norm_examples() {
    let tape = Tape::new();
    let gain = tape.param(&Tensor::full(&[4], 1.0));
    let shift = tape.param(&Tensor::new(vec![4], vec![0.1, 0.2, 0.3, 0.4]).unwrap());
    let c = tape.input(&Tensor::full(&[2, 4, 3], 7.0));
    let y = ops::layer_norm(c, 1, gain, shift, 1e-5).unwrap();
    let v = y.value();
    for n in 0..2 {
        for ch in 0..4 {
            for i in 0..3 {
                assert!((v[(n * 4 + ch) * 3 + i] - [0.1, 0.2, 0.3, 0.4][ch]).abs() < 1e-12);
            }
        }
    }

    // two-pass mean/variance oracle with unit gain and zero shift
    let xt = random(&[2, 4, 3], 10);
    let unit = tape.param(&Tensor::full(&[4], 1.0));
    let zero = tape.param(&Tensor::zeros(&[4]));
    let y = ops::layer_norm(tape.input(&xt), 1, unit, zero, 1e-5).unwrap();
    let yv = y.value();
    for n in 0..2 {
        for i in 0..3 {
            let col: Vec<f64> = (0..4).map(|c| xt.data()[(n * 4 + c) * 3 + i]).collect();
            let m = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
            for c in 0..4 {
                let e = (col[c] - m) / (var + 1e-5).sqrt();
                assert!((yv[(n * 4 + c) * 3 + i] - e).abs() < 1e-12);
            }
            let mean_out: f64 = (0..4).map(|c| yv[(n * 4 + c) * 3 + i]).sum::<f64>() / 4.0;
            assert!(mean_out.abs() < 1e-10);
        }
    }
    let wrong = tape.param(&Tensor::zeros(&[3]));
    assert!(ops::layer_norm(c, 1, wrong, shift, 1e-5).is_err());
}

#[test]
fn batch_norm_examples() {
    let tape = Tape::new();
    let g = tape.param(&Tensor::full(&[2], 1.0));
    let s = tape.param(&Tensor::zeros(&[2]));
    let xt = random(&[3, 2, 2, 2, 2], 11);
    let x = tape.input(&xt);

    let mut fresh = RunningStats::new(2);
    assert!(matches!(
        ops::batch_norm(x, g, s, &mut fresh, Mode::Eval, 0.1, 1e-5),
        Err(TensorError::State(_))
    ));

    let mut unit = RunningStats { mean: vec![0.0; 2], var: vec![1.0; 2], tracked: 1 };
    let y = ops::batch_norm(x, g, s, &mut unit, Mode::Eval, 0.1, 0.0).unwrap();
    close(&y.value(), xt.data(), 1e-15);

    let shift = tape.param(&Tensor::new(vec![2], vec![0.5, -0.5]).unwrap());
    let constant = tape.input(&Tensor::full(&[3, 2, 2, 2, 2], 4.0));
    let mut rs = RunningStats::new(2);
    let y = ops::batch_norm(constant, g, shift, &mut rs, Mode::Train, 0.1, 1e-5).unwrap();
    let v = y.value();
    for n in 0..3 {
        for c in 0..2 {
            assert!(v[(n * 2 + c) * 8..(n * 2 + c + 1) * 8].iter().all(|&t| (t - [0.5, -0.5][c]).abs() < 1e-12));
        }
    }

    // batch statistics over B*D*H*W samples
    let mut rs = RunningStats::new(2);
    ops::batch_norm(x, g, s, &mut rs, Mode::Train, 1.0, 1e-5).unwrap();
    for c in 0..2 {
        let vals: Vec<f64> = (0..3).flat_map(|n| xt.data()[(n * 2 + c) * 8..(n * 2 + c + 1) * 8].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / 24.0;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 23.0;
        assert!((rs.mean[c] - m).abs() < 1e-10);
        assert!((rs.var[c] - var).abs() < 1e-10);
    }
    assert_eq!(rs.tracked, 1);
}

#[test]
fn dropout_examples() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xt = random(&[10, 10], 13);
    let x = tape.input(&xt);
    for mode in [Mode::Train, Mode::Eval] {
        let y = ops::dropout(x, 0.0, mode, &mut rng).unwrap();
        close(&y.value(), xt.data(), 0.0);
    }
    let y = ops::dropout(x, 0.9, Mode::Eval, &mut rng).unwrap();
    close(&y.value(), xt.data(), 0.0);
    assert!(matches!(ops::dropout(x, 1.0, Mode::Train, &mut rng), Err(TensorError::Config(_))));

    let big = tape.input(&Tensor::full(&[1_000_000], 1.0));
    let y = ops::dropout(big, 0.7, Mode::Train, &mut rng).unwrap();
    let survivors = y.value().iter().filter(|&&v| v != 0.0).count() as f64 / 1e6;
    assert!((survivors - 0.30).abs() < 0.01, "{survivors}");
    assert!(y.value().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.3).abs() < 1e-12));
}

#[test]
fn matmul_examples() {
    let tape = Tape::new();
    let a = tape.input(&Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.input(&Tensor::new(vec![2, 1], vec![5.0, 6.0]).unwrap());
    assert_eq!(*ops::matmul(a, b).unwrap().value(), vec![17.0, 39.0]);

    let eye = tape.input(&Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap());
    let xt = random(&[3, 4], 14);
    let y = ops::matmul(eye, tape.input(&xt)).unwrap();
    close(&y.value(), xt.data(), 0.0);

    let at = random(&[3, 4], 15);
    let bt = random(&[4, 2], 16);
    let y = ops::matmul(tape.input(&at), tape.input(&bt)).unwrap();
    let mut expect = vec![0.0; 6];
    for i in 0..3 {
        for j in 0..2 {
            for k in 0..4 {
                expect[i * 2 + j] += at.data()[i * 4 + k] * bt.data()[k * 2 + j];
            }
        }
    }
    close(&y.value(), &expect, 1e-12);
    assert!(ops::matmul(tape.input(&at), tape.input(&at)).is_err());
}

#[test]
fn softmax_examples() {
    let tape = Tape::new();
    let one = tape.input(&Tensor::scalar(3.3));
    assert_eq!(*ops::softmax(one).unwrap().value(), vec![1.0]);
    let two = tape.input(&Tensor::zeros(&[2]));
    assert_eq!(*ops::softmax(two).unwrap().value(), vec![0.5, 0.5]);
    let y = ops::softmax(tape.input(&random(&[7, 9], 17).reshape(&[7, 9]).unwrap())).unwrap();
    for row in y.value().chunks(9) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn global_mean_and_head_examples() {
    let tape = Tape::new();
    let c = tape.input(&Tensor::full(&[2, 3, 8, 8, 8], 2.5));
    let m = ops::global_mean(c).unwrap();
    assert_eq!(m.shape(), vec![2, 3]);
    assert!(m.value().iter().all(|&v| (v - 2.5).abs() < 1e-15));

    let xt = random(&[1, 1, 8, 8, 8], 18);
    let m = ops::global_mean(tape.input(&xt)).unwrap();
    assert!((m.item() - xt.data().iter().sum::<f64>() / 512.0).abs() < 1e-12);

    let h = tape.input(&random(&[3, 4], 19));
    let zero = tape.param(&Tensor::zeros(&[4]));
    let b = tape.param(&Tensor::scalar(0.75));
    assert!(ops::linear_head(h, zero, b).unwrap().value().iter().all(|&v| v == 0.75));

    let unit = tape.input(&Tensor::new(vec![1, 4], vec![0.0, 0.0, 1.0, 0.0]).unwrap());
    let w = tape.param(&Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    assert_eq!(ops::linear_head(unit, w, b).unwrap().item(), 3.75);

    let ht = random(&[2, 4], 20);
    let y = ops::linear_head(tape.input(&ht), w, b).unwrap();
    for i in 0..2 {
        let d: f64 = (0..4).map(|j| ht.data()[i * 4 + j] * (j + 1) as f64).sum();
        assert!((y.value()[i] - d - 0.75).abs() < 1e-12);
    }
    let wrong = tape.param(&Tensor::zeros(&[3]));
    assert!(ops::linear_head(h, wrong, b).is_err());
}

#[test]
fn backward_examples() {
    let tape = Tape::new();
    let xt = random(&[3, 2], 21);
    let x = tape.param(&xt);
    tape.backward(x.sum().unwrap()).unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);

    tape.zero_grad();
    tape.backward(x.mul(x).unwrap().sum().unwrap()).unwrap();
    close(&x.grad().unwrap(), &xt.data().iter().map(|v| 2.0 * v).collect::<Vec<_>>(), 1e-15);

    // a second call without reset accumulates
    tape.backward(x.mul(x).unwrap().sum().unwrap()).unwrap();
    close(&x.grad().unwrap(), &xt.data().iter().map(|v| 4.0 * v).collect::<Vec<_>>(), 1e-15);

    assert!(matches!(tape.backward(x), Err(TensorError::Usage(_))));
}

#[test]
fn backward_is_linear_in_the_loss() {
    let xt = random(&[2, 3], 22);
    let grad_of = |a: f64, b: f64| {
        let tape = Tape::new();
        let x = tape.param(&xt);
        let f = x.exp().unwrap().sum().unwrap();
        let g = x.gelu().unwrap().square().unwrap().sum().unwrap();
        let loss = f.scale(a).unwrap().add(g.scale(b).unwrap()).unwrap();
        tape.backward(loss).unwrap();
        x.grad().unwrap()
    };
    let (gf, gg, gc) = (grad_of(1.0, 0.0), grad_of(0.0, 1.0), grad_of(2.5, -0.5));
    let combo: Vec<f64> = gf.iter().zip(&gg).map(|(f, g)| 2.5 * f - 0.5 * g).collect();
    close(&gc, &combo, 1e-12);
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let tape = Tape::new();
        let x = tape.param(&random(&[2, 3, 2, 2, 2], 23));
        let w = tape.param(&random(&[4, 3], 24));
        let y = ops::pointwise_linear(x, w, None).unwrap().gelu().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let y = ops::dropout(y, 0.5, Mode::Train, &mut rng).unwrap();
        let loss = ops::global_mean(y).unwrap().sum().unwrap();
        tape.backward(loss).unwrap();
        (loss.item().to_bits(), x.grad().unwrap(), w.grad().unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn trilinear_resize_examples() {
    let tape = Tape::new();
    let base = random(&[2, 3, 4, 5], 26);
    let same = ops::trilinear_resize(tape.input(&base), [3, 4, 5]).unwrap();
    close(&same.value(), base.data(), 1e-15);

    let c = ops::trilinear_resize(tape.input(&Tensor::full(&[1, 2, 2, 2], 3.0)), [5, 1, 7]).unwrap();
    assert!(c.value().iter().all(|&v| (v - 3.0).abs() < 1e-14));

    // affine field a + b z + c y + d x sampled at integer grid points
    let f = |z: f64, y: f64, x: f64| 0.5 + 1.5 * z - 0.25 * y + 2.0 * x;
    let ramp = Tensor::from_fn(&[1, 4, 4, 4], |i| f((i / 16) as f64, (i / 4 % 4) as f64, (i % 4) as f64));
    let up = ops::trilinear_resize(tape.input(&ramp), [7, 7, 7]).unwrap();
    let expect: Vec<f64> = (0..343)
        .map(|i| f((i / 49) as f64 * 0.5, (i / 7 % 7) as f64 * 0.5, (i % 7) as f64 * 0.5))
        .collect();
    close(&up.value(), &expect, 1e-12);
}

#[test]
fn symbolic_tape_counts_without_values() {
    let tape = Tape::symbolic();
    let x = tape.input_shape(&[2, 1, 8, 8, 8]);
    let w = tape.param(&Tensor::zeros(&[4, 1, 4, 4, 4]));
    let y = ops::patch_conv(x, w, None, 4).unwrap();
    let z = y.gelu().unwrap();
    let m = ops::global_mean(z).unwrap();
    assert_eq!(m.shape(), vec![2, 4]);
    assert!(m.value().is_empty());
    // patch_conv 2*4*8 + gelu 2*4*8 + global_mean 2*4
    assert_eq!(tape.footprint().activation_elements, 64 + 64 + 8);
    assert!(tape.backward(m.sum().unwrap()).is_err());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
        let tape = Tape::new();
        let n = vals.len();
        let y = ops::softmax(tape.input(&Tensor::new(vec![n], vals).unwrap())).unwrap();
        prop_assert!((y.value().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn broadcast_adjoint_is_sum_over_broadcast_axes(seed in 0u64..1000, b in 1usize..4, c in 1usize..4, s in 1usize..5) {
        let tape = Tape::new();
        let big = random(&[b, c, s], seed);
        let small = random(&[1, c, 1], seed + 1);
        let weights = random(&[b, c, s], seed + 2);
        let x = tape.param(&small);
        let y = x.mul(tape.input(&big)).unwrap().mul(tape.input(&weights)).unwrap().sum().unwrap();
        tape.backward(y).unwrap();
        let g = x.grad().unwrap();
        for ch in 0..c {
            let mut e = 0.0;
            for n in 0..b {
                for i in 0..s {
                    let j = (n * c + ch) * s + i;
                    e += big.data()[j] * weights.data()[j];
                }
            }
            prop_assert!((g[ch] - e).abs() < 1e-12);
        }
    }
}
