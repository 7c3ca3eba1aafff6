//! Runs the benchmark on the bundled corpus and prints the summary table.

use qbr_core::experiment::{render_checks, render_table, reproduce, ReproduceOptions};
use qbr_core::Dataset;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let opts = ReproduceOptions {
        seed,
        ..Default::default()
    };
    let report = reproduce(&Dataset::bundled(), &opts).expect("benchmark run");
    println!("SVM grid pick: c = {}, gamma = {}", report.grid.best_c, report.grid.best_gamma);
    print!("{}", render_table(&report));
    print!("{}", render_checks(&report));
}
