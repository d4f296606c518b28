//! Seeded train/test splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Disjoint, exhaustive split of `0..n`; the first `round(n·train_fraction)`
/// shuffled indices train.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!((0.0..=1.0).contains(&train_fraction));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (n as f64 * train_fraction).round() as usize;
    let test = order.split_off(cut);
    (order, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let (train, test) = train_test_split(103, 0.8, 4);
        assert_eq!(train.len(), 82);
        assert_eq!(test.len(), 21);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
    }

    #[test]
    fn split_depends_only_on_the_seed() {
        assert_eq!(train_test_split(50, 0.7, 1), train_test_split(50, 0.7, 1));
        assert_ne!(train_test_split(50, 0.7, 1), train_test_split(50, 0.7, 2));
    }
}
