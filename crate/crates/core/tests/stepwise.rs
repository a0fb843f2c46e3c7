use alimony_core::linalg::Matrix;
use alimony_core::linreg::{stepwise_forward, StepwiseOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let d = Normal::new(0.0, 1.0).unwrap();
    (0..len).map(|_| d.sample(rng)).collect()
}

#[test]
fn pure_noise_rarely_enters() {
    let names: Vec<String> = (0..12).map(|j| format!("x{j}")).collect();
    let options = StepwiseOptions {
        entry_p: 0.01,
        ..StepwiseOptions::default()
    };
    let runs = 500;
    let mut empty = 0;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(200, 12, noise(&mut rng, 200 * 12));
        let y = noise(&mut rng, 200);
        let fit = stepwise_forward(&x, &y, &names, &(0..12).collect::<Vec<_>>(), &options).unwrap();
        if fit.trace.selected.is_empty() {
            empty += 1;
            assert!(fit.model.coefficients.is_empty());
        }
    }
    assert!(empty * 10 >= runs * 8, "empty selection in {empty}/{runs} runs");
}

#[test]
fn max_steps_caps_the_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Matrix::from_vec(100, 6, noise(&mut rng, 600));
    let y: Vec<f64> = (0..100).map(|i| (0..6).map(|j| (j + 1) as f64 * x.get(i, j)).sum()).collect();
    let names: Vec<String> = (0..6).map(|j| format!("x{j}")).collect();
    let options = StepwiseOptions {
        max_steps: Some(2),
        ..StepwiseOptions::default()
    };
    let fit = stepwise_forward(&x, &y, &names, &(0..6).collect::<Vec<_>>(), &options).unwrap();
    assert_eq!(fit.trace.steps.len(), 2);
    let mut chosen = fit.trace.selected.clone();
    chosen.sort_unstable();
    assert_eq!(chosen, [4, 5], "largest effects enter first");
}
