//! Regenerates `data/qualitative_bankruptcy.csv`, the synthetic stand-in corpus.
//!
//! Every attribute is drawn independently per class from a fixed categorical
//! distribution over P/A/N, giving 143 NB rows followed by 107 B rows.
//!
//! ```text
//! cargo run -p qbr-core --example make_fixture > crates/core/data/qualitative_bankruptcy.csv
//! ```

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5142_5200;

/// `[P, A, N]` probabilities per attribute (IR, MR, FF, CR, CO, OR).
const NON_BANKRUPT: [[f64; 3]; 6] = [
    [0.40, 0.35, 0.25],
    [0.35, 0.38, 0.27],
    [0.42, 0.45, 0.13],
    [0.45, 0.45, 0.10],
    [0.52, 0.43, 0.05],
    [0.38, 0.37, 0.25],
];
const BANKRUPT: [[f64; 3]; 6] = [
    [0.22, 0.30, 0.48],
    [0.15, 0.30, 0.55],
    [0.03, 0.12, 0.85],
    [0.02, 0.14, 0.84],
    [0.00, 0.08, 0.92],
    [0.20, 0.30, 0.50],
];

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for (table, n, label) in [(NON_BANKRUPT, 143, "NB"), (BANKRUPT, 107, "B")] {
        let dists: Vec<WeightedIndex<f64>> = table
            .iter()
            .map(|p| WeightedIndex::new(p).expect("valid weights"))
            .collect();
        for _ in 0..n {
            let tokens: Vec<&str> = dists
                .iter()
                .map(|d| ["P", "A", "N"][d.sample(&mut rng)])
                .collect();
            println!("{},{label}", tokens.join(","));
        }
    }
}
