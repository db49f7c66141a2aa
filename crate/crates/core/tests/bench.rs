use poremamba::bench::{bench_report, count_activations, fit_loglog, BenchConfig};
use poremamba::model::{ModelConfig, VimConfig, VitConfig};
use poremamba_tensor::ops::Mode;
use poremamba_tensor::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn noisy_power_law_recovers_its_exponent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<(f64, f64)> = (1..=20)
        .map(|i| {
            let x = i as f64 * 10.0;
            let noise: f64 = rng.sample(StandardNormal);
            (x, 2.0 * x.powf(1.5) * (1.0 + 0.01 * noise))
        })
        .collect();
    let fit = fit_loglog(&pts).unwrap();
    assert!((fit.slope - 1.5).abs() < 0.05, "{fit:?}");
    assert!(fit.slope_stderr < 0.05);
}

#[test]
fn sequence_models_scale_linearly_and_quadratically() {
    let report = bench_report(&BenchConfig::default()).unwrap();
    let vim = report.fit("vim").unwrap();
    let vit = report.fit("vit").unwrap();
    assert!((0.9..=1.1).contains(&vim.tokens.slope), "{vim:?}");
    assert!((1.9..=2.1).contains(&vit.tokens.slope), "{vit:?}");
    assert!((vim.patch.slope + 3.0 * vim.tokens.slope).abs() < 1e-9);
    assert!(report.extrapolation.exceeds_budget);
    for model in ["vim", "vit"] {
        let e: Vec<u64> = report.records.iter().filter(|r| r.model == model).map(|r| r.elements).collect();
        assert!(e.windows(2).all(|w| w[0] >= w[1]), "{model}: {e:?}");
    }
}

#[test]
fn vim_footprint_has_no_quadratic_term() {
    // exact polynomial fit in L through three token counts
    let pts: Vec<(f64, f64)> = [16, 8, 4]
        .iter()
        .map(|&p| {
            let r = count_activations(&ModelConfig::Vim(VimConfig { n: 64, patch: p, ..VimConfig::default() }), 1).unwrap();
            (r.tokens as f64, r.elements as f64)
        })
        .collect();
    let [(x0, y0), (x1, y1), (x2, y2)] = [pts[0], pts[1], pts[2]];
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let quad = (d12 - d01) / (x2 - x0);
    assert!(quad.abs() < 1e-9 * d12.abs(), "quadratic coefficient {quad}");
}

#[test]
fn attention_scores_are_retained_per_block() {
    let cfg = VitConfig { n: 32, patch: 8, ..VitConfig::default() };
    let (b, l, heads) = (2usize, 64usize, cfg.heads);
    let mut net = ModelConfig::Vit(cfg.clone()).build(0).unwrap();
    let tape = Tape::symbolic();
    let vars = net.params().bind(&tape);
    let x = tape.input_shape(&[b, 1, 32, 32, 32]);
    let mut rng = poremamba::rng::stream(0, "t", 0);
    let mut pass = poremamba::model::Pass { mode: Mode::Train, rng: &mut rng };
    net.forward(&vars, x, &mut pass).unwrap();
    let scores = tape
        .trace()
        .into_iter()
        .filter(|(op, s)| *op == "softmax" && *s == [b, heads, l, l])
        .count();
    assert_eq!(scores, cfg.blocks);
}

#[test]
fn footprint_is_exact_and_linear_in_batch() {
    for model in [
        ModelConfig::Vim(VimConfig { n: 32, ..VimConfig::default() }),
        ModelConfig::Vit(VitConfig { n: 32, ..VitConfig::default() }),
    ] {
        let one = count_activations(&model, 1).unwrap();
        assert_eq!(one, count_activations(&model, 1).unwrap());
        let two = count_activations(&model, 2).unwrap();
        assert_eq!(two.elements, 2 * one.elements);
    }
}

#[test]
fn indivisible_patch_is_rejected() {
    let cfg = BenchConfig { n: 48, patches: vec![8, 32], ..BenchConfig::default() };
    assert!(bench_report(&cfg).is_err());
}
