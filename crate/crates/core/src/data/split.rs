use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset};

/// Stratified split on the grant flag. Each class contributes
/// `round(test_fraction * class_size)` records to the test side, clamped so
/// both sides keep at least one of each class. Both partitions keep the
/// input record order.
pub fn train_test_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; dataset.len()];
    for class in [false, true] {
        let mut members: Vec<usize> = dataset
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.grant == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 2 {
            return Err(DataError::SmallClass {
                class,
                count: members.len(),
            });
        }
        let n_test = ((test_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        members.shuffle(&mut rng);
        for &i in &members[..n_test] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| is_test[i]);
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
