use msda::adversarial::{AdvConfig, Architecture};
use msda::label_shift::BbseConfig;
use msda::single_da::{predict, run_single_da, SingleDaConfig};
use msda::stats::rmse;
use msda::{DomainData, Features};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn draw(n: usize, mean: f64, sd: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array1<f64>) {
    let y: Array1<f64> = (0..n).map(|_| Normal::new(mean, sd).unwrap().sample(rng)).collect();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x = Array2::from_shape_fn((n, 1), |(i, _)| y[i] + 2.0 * y[i].tanh() + noise.sample(rng));
    (x, y)
}

fn config(seed: u64) -> SingleDaConfig {
    SingleDaConfig {
        max_iter: 3,
        adv: AdvConfig { epochs: 300, ..AdvConfig::default() },
        bbse: BbseConfig { num_categories: Some(4), ..BbseConfig::default() },
        seed,
        ..SingleDaConfig::default()
    }
}

#[test]
fn identical_domains_give_unit_weights_and_plain_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (xs, ys) = draw(600, 0.0, 1.0, &mut rng);
    let (xt, yt) = draw(600, 0.0, 1.0, &mut rng);
    let src = DomainData::labeled(xs, ys).unwrap();
    let tgt = Features::new(xt.clone()).unwrap();
    let cfg = config(5);
    let res = run_single_da(&src, &tgt, &cfg).unwrap();
    assert!(res.iterations <= 3);
    assert!(res.degraded.is_none());
    for v in res.importance.category_means.iter() {
        assert!((v - 1.0).abs() < 0.15, "{}", res.importance.category_means);
    }
    let plain = run_single_da(&src, &tgt, &cfg.plain()).unwrap();
    let r_da = rmse(predict(&res, xt.view()).unwrap().view(), yt.view());
    let r_plain = rmse(predict(&plain, xt.view()).unwrap().view(), yt.view());
    assert!(r_da <= 1.1 * r_plain, "adapted {r_da} plain {r_plain}");
}

#[test]
fn target_shift_weighting_beats_unweighted_fit() {
    // a linear predictor on a curved relation: the fit depends on where the
    // outcome mass sits, so reweighting towards the target matters
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (xs, ys) = draw(600, 0.0, 1.0, &mut rng);
    let (xt, yt) = draw(600, 1.0, 0.5, &mut rng);
    let src = DomainData::labeled(xs, ys).unwrap();
    let tgt = Features::new(xt.clone()).unwrap();
    let mut cfg = config(6);
    cfg.adv.architecture = Architecture::linear();
    cfg.adv.lambda = 0.0;
    cfg.adv.lr_generator = 1e-2;
    cfg.adv.epochs = 2000;
    cfg.bbse = BbseConfig::default();
    let weighted = run_single_da(&src, &tgt, &cfg).unwrap();
    let plain = run_single_da(&src, &tgt, &cfg.plain()).unwrap();
    let r_w = rmse(predict(&weighted, xt.view()).unwrap().view(), yt.view());
    let r_p = rmse(predict(&plain, xt.view()).unwrap().view(), yt.view());
    assert!(r_w < r_p, "weighted {r_w} plain {r_p}");
}

#[test]
fn seeds_fully_determine_the_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (xs, ys) = draw(200, 0.0, 1.0, &mut rng);
    let (xt, _) = draw(200, 0.5, 1.0, &mut rng);
    let src = DomainData::labeled(xs, ys).unwrap();
    let tgt = Features::new(xt).unwrap();
    let mut cfg = config(7);
    cfg.adv.epochs = 40;
    let a = run_single_da(&src, &tgt, &cfg).unwrap();
    let b = run_single_da(&src, &tgt, &cfg).unwrap();
    assert_eq!(a, b);
    cfg.seed = 8;
    let c = run_single_da(&src, &tgt, &cfg).unwrap();
    assert_ne!(a.learner, c.learner);
}
