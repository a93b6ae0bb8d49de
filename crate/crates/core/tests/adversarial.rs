use msda::adversarial::{loss_da, train_adversarial, AdvConfig};
use msda::nn::{Activation, Mlp};
use msda::stats::rmse;
use msda::{DomainData, Features};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn draw(n: usize, shift: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array1<f64>) {
    let y: Array1<f64> = (0..n).map(|_| Normal::new(0.0, 1.0).unwrap().sample(rng)).collect();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let x = Array2::from_shape_fn((n, 1), |(i, _)| y[i] + shift + noise.sample(rng));
    (x, y)
}

#[test]
fn location_shift_alignment_beats_plain_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (xs, ys) = draw(600, 0.0, &mut rng);
    let (xt, yt) = draw(600, 1.0, &mut rng);
    let src = DomainData::labeled(xs, ys).unwrap();
    let tgt = Features::new(xt.clone()).unwrap();
    let beta = Array1::ones(600);
    let base = AdvConfig { epochs: 1500, seed: 3, ..AdvConfig::default() };
    let plain = train_adversarial(&src, &tgt, beta.view(), &AdvConfig { lambda: 0.0, ..base.clone() }).unwrap();
    let adapted = train_adversarial(&src, &tgt, beta.view(), &base).unwrap();
    let r0 = rmse(plain.predict(xt.view()).unwrap().view(), yt.view());
    let r1 = rmse(adapted.predict(xt.view()).unwrap().view(), yt.view());
    println!("plain {r0} adapted {r1}");
    assert!(r1 < r0, "adapted {r1} vs plain {r0}");
}

#[test]
fn same_domain_training_keeps_gap_small_and_fit_intact() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (xs, ys) = draw(400, 0.0, &mut rng);
    let src = DomainData::labeled(xs.clone(), ys).unwrap();
    let same = Features::new(xs.clone()).unwrap();
    let beta = Array1::ones(400);
    let cfg = AdvConfig { epochs: 800, seed: 4, ..AdvConfig::default() };
    let plain = train_adversarial(&src, &same, beta.view(), &AdvConfig { lambda: 0.0, ..cfg.clone() }).unwrap();
    let adapted = train_adversarial(&src, &same, beta.view(), &cfg).unwrap();
    let gap = loss_da(&adapted.critic, &adapted.predictor, xs.view(), xs.view(), beta.view()).unwrap();

    // an untrained critic facing a shifted copy of the same features
    let mut init_rng = ChaCha8Rng::seed_from_u64(9);
    let fresh = Mlp::init(&[8, 16, 1], &[Activation::Tanh, Activation::Identity], &mut init_rng).clipped(0.1);
    let shifted = xs.mapv(|v| v + 2.0);
    let untrained = loss_da(&fresh, &adapted.predictor, xs.view(), shifted.view(), beta.view()).unwrap();
    assert!(gap.abs() < untrained.abs(), "{gap} vs {untrained}");
    assert!((adapted.j_hat - plain.j_hat).abs() <= 0.1 * plain.j_hat, "{} vs {}", adapted.j_hat, plain.j_hat);
}
