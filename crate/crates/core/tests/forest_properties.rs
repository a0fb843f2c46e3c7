use alimony_core::data::{filter_cases, generate_synthetic, Subset, SyntheticConfig};
use alimony_core::forest::{fit_forest, ForestConfig, ImportanceMethod, RandomForestModel, TreeNode};
use alimony_core::hurdle::{train_classifier, HurdleConfig};
use alimony_core::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("x{i}")).collect()
}

fn separable(n: usize, seed: u64) -> (Matrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let labels = rows.iter().map(|r| r[0] + 0.5 * r[1] > 0.0).collect();
    (Matrix::from_rows(&rows), labels)
}

fn forest(matrix: &Matrix, labels: &[bool], n_trees: usize, seed: u64) -> RandomForestModel {
    let config = ForestConfig {
        n_trees,
        seed,
        ..ForestConfig::default()
    };
    let p = matrix.ncols();
    fit_forest(matrix, labels, &names(p), &names(p), &config).unwrap()
}

#[test]
fn separable_data_has_high_oob_accuracy() {
    let (m, y) = separable(500, 1);
    let model = forest(&m, &y, 100, 1);
    let oob = model.oob_accuracy.unwrap();
    assert!(oob >= 0.95, "OOB accuracy {oob}");
}

#[test]
fn probabilities_track_the_generating_process() {
    let truth = SyntheticConfig::reference(5000, 2);
    let train = filter_cases(&generate_synthetic(&truth).unwrap(), true, Subset::All).dataset;
    let mut config = HurdleConfig::default();
    config.forest.n_trees = 200;
    config.forest.seed = 2;
    let classifier = train_classifier(&train, &config).unwrap();
    let fresh = generate_synthetic(&SyntheticConfig::reference(1000, 3)).unwrap();
    let errors: Vec<f64> = fresh
        .records
        .iter()
        .map(|r| (classifier.probability(&r.values).unwrap() - truth.grant_probability(&r.values)).abs())
        .filter(|e| e.is_finite())
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!(errors.len() > 900);
    assert!(mean <= 0.15, "mean absolute probability error {mean}");
}

#[test]
fn dominant_feature_ranks_first() {
    let mut first = 0;
    for seed in 0..20 {
        let mut truth = SyntheticConfig::reference(1000, 100 + seed);
        for f in &mut truth.features {
            f.grant_coefficient = if f.name == "marriage_years" { 0.4 } else { f.grant_coefficient * 0.2 };
        }
        truth.grant_intercept = -8.0;
        let data = filter_cases(&generate_synthetic(&truth).unwrap(), true, Subset::All).dataset;
        let mut config = HurdleConfig::default();
        config.forest.n_trees = 100;
        config.forest.seed = seed;
        let ranking = train_classifier(&data, &config)
            .unwrap()
            .importance(ImportanceMethod::FrequencyWeighted, true);
        if ranking[0].feature == "marriage_years" {
            first += 1;
        }
    }
    assert!(first >= 19, "dominant feature first in {first}/20 runs");
}

#[test]
fn structural_invariants() {
    let (m, y) = separable(300, 4);
    let model = forest(&m, &y, 30, 4);
    for tree in &model.trees {
        for node in &tree.nodes {
            if let TreeNode::Internal { impurity_decrease, .. } = node {
                assert!(*impurity_decrease > 0.0);
            }
        }
    }

    let walked: f64 = model
        .trees
        .iter()
        .map(|t| t.internal_nodes().map(|(_, n, _)| n as f64 / t.n_training as f64).sum::<f64>())
        .sum::<f64>()
        / model.trees.len() as f64;
    let total: f64 = model.importance(ImportanceMethod::FrequencyWeighted, true).iter().map(|e| e.score).sum();
    assert!((walked - total).abs() <= 1e-12 * walked, "{walked} vs {total}");

    let mut reversed = model.clone();
    reversed.trees.reverse();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let row = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        assert_eq!(
            model.predict_proba(&row).unwrap().to_bits(),
            reversed.predict_proba(&row).unwrap().to_bits()
        );
    }

    assert_eq!(forest(&m, &y, 30, 4), model);
    assert_ne!(forest(&m, &y, 30, 5), model);
}
