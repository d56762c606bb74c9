//! Synthetic inputs shared by the benchmarks.

use efold::rng::SeededRng;
use efold::{Dataset, Interaction, ScoreSequence};

/// Implicit dataset with a skewed item popularity: item draws favour low
/// indices, so pruning and kNN see a realistic long tail.
pub fn synthetic_dataset(users: usize, items: usize, per_user: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let mut rows = Vec::with_capacity(users * per_user);
    for u in 0..users {
        let mut seen = std::collections::HashSet::new();
        let count = 1 + rng.below(2 * per_user);
        for _ in 0..count {
            let ceiling = rng.below(items) + 1;
            let item = rng.below(ceiling);
            if seen.insert(item) {
                rows.push(Interaction::new(format!("u{u}"), format!("i{item}"), 1.0));
            }
        }
    }
    Dataset::from_interactions(rows, true).expect("non-empty synthetic dataset")
}

/// `cells` score sequences of length `k` around 0.3 with small noise.
pub fn synthetic_sequences(cells: usize, k: usize, seed: u64) -> Vec<ScoreSequence> {
    let mut rng = SeededRng::new(seed);
    (0..cells)
        .map(|c| {
            let scores = (0..k)
                .map(|_| 0.3 + (rng.below(1000) as f64 - 500.0) * 2e-5)
                .collect();
            ScoreSequence::new("bench", &format!("alg{c}"), scores, seed).expect("valid scores")
        })
        .collect()
}
