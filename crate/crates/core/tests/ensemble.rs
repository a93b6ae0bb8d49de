use msda::adversarial::AdvConfig;
use msda::ensemble::{
    adapt_pair, build_stacking_matrix, fit_parts, predict_ensemble, CellKind, EnsembleConfig, Scheme,
};
use msda::label_shift::BbseConfig;
use msda::single_da::SingleDaConfig;
use msda::{DomainData, Features};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn domain(n: usize, mean: f64, rng: &mut ChaCha8Rng) -> DomainData {
    let y: Array1<f64> = (0..n).map(|_| Normal::new(mean, 1.0).unwrap().sample(rng)).collect();
    let noise = Normal::new(0.0, 0.3).unwrap();
    let x = Array2::from_shape_fn((n, 1), |(i, _)| 1.5 * y[i] + noise.sample(rng));
    DomainData::labeled(x, y).unwrap()
}

fn config() -> EnsembleConfig {
    EnsembleConfig {
        single: SingleDaConfig {
            max_iter: 2,
            adv: AdvConfig { epochs: 40, ..AdvConfig::default() },
            bbse: BbseConfig { num_categories: Some(3), num_knots: 5, ..BbseConfig::default() },
            ..SingleDaConfig::default()
        },
        seed: 9,
        ..EnsembleConfig::default()
    }
}

#[test]
fn pair_adaptation_never_reads_the_data_domain_outcomes() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let a = domain(200, 0.0, &mut rng);
    let b = domain(200, 0.7, &mut rng);
    let b_labels = b.labels().unwrap().clone();
    let before = b_labels.read_count();
    adapt_pair(&a, b.features(), &config().single).unwrap();
    assert_eq!(b_labels.read_count(), before);
}

#[test]
fn stacking_matrix_layout_and_constant_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let sources: Vec<_> = [0.0, 0.5, -0.5].iter().map(|&m| domain(120, m, &mut rng)).collect();
    let sm = build_stacking_matrix(&sources, &config()).unwrap();
    assert_eq!(sm.num_sources(), 3);
    assert_eq!(sm.num_columns(), 4);
    assert_eq!(sm.yhat.nrows(), 360);
    let all_y: Vec<f64> = sources.iter().flat_map(|s| s.labels().unwrap().y().to_vec()).collect();
    let mean = all_y.iter().sum::<f64>() / all_y.len() as f64;
    assert!((sm.merged_mean.unwrap() - mean).abs() < 1e-12);
    assert!(sm.yhat.column(3).iter().all(|&v| v == sm.merged_mean.unwrap()));
    assert_eq!(sm.y.to_vec(), all_y);
    for c in &sm.cells {
        let expected = if c.row == c.col { CellKind::Diagonal } else { CellKind::Adapted };
        assert_eq!(c.kind, expected, "{c:?}");
    }
    let again = build_stacking_matrix(&sources, &config()).unwrap();
    assert_eq!(sm, again);
}

#[test]
fn ensemble_prediction_is_the_weighted_component_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let sources: Vec<_> = [0.0, 0.8].iter().map(|&m| domain(150, m, &mut rng)).collect();
    let target = Features::new(domain(150, 0.4, &mut rng).features().x().to_owned()).unwrap();
    let parts = fit_parts(&sources, &target, &config(), true).unwrap();
    for scheme in [Scheme::Stack, Scheme::Similarity, Scheme::Blend] {
        let model = parts.model(scheme).unwrap();
        let sum: f64 = model.weights.sum();
        assert!((sum - 1.0).abs() < 1e-8, "{scheme:?} {}", model.weights);
        assert!(model.weights.iter().all(|&w| w >= -1e-12));
        let comps = model.component_predictions(target.x()).unwrap();
        let direct = comps.dot(&model.weights);
        assert_eq!(predict_ensemble(&model, target.x()).unwrap(), direct);
        if scheme == Scheme::Similarity {
            assert_eq!(model.weights.len(), 2);
        } else {
            assert_eq!(model.weights.len(), 3);
        }
    }
}

#[test]
fn identical_sources_share_similarity_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let base = domain(200, 0.0, &mut rng);
    let sources = vec![base.clone(), base];
    let target = Features::new(domain(200, 0.0, &mut rng).features().x().to_owned()).unwrap();
    let mut cfg = config();
    cfg.single.force_unit_weights = true;
    cfg.single.adv.epochs = 400;
    let parts = fit_parts(&sources, &target, &cfg, false).unwrap();
    let w = parts.similarity().unwrap();
    assert!((w[0] - 0.5).abs() < 0.1, "{w}");
}
