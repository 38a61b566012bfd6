//! Compares the hand-written gradient with central finite differences for
//! one model variant and prints the worst coordinates.
//!
//!     cargo run --release --example gradient_check -- [model name]

use feedback_code::selftest::{mixed_block, random_params};
use feedback_code::trainer::grad::NormMode;
use feedback_code::trainer::gradcheck::{check_gradient, FD_STEP};
use feedback_code::ModelSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec: ModelSpec = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "enc3/dec4-two-stage".into())
        .parse()?;
    let params = random_params(spec, 42);
    let blocks: Vec<_> = (0..8).map(|i| mixed_block(&spec, 42, i)).collect();
    let report = check_gradient(&params, &blocks, NormMode::Batch, FD_STEP)?;
    let mut coords = report.coordinates.clone();
    coords.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    println!("{spec}: {} coordinates, max relative error {:.2e}", coords.len(), report.max_rel_error());
    for c in coords.iter().take(5) {
        println!("  {:<10} analytic {:+.6e}  numeric {:+.6e}  rel {:.1e}", c.name, c.analytic, c.numeric, c.rel_error);
    }
    Ok(())
}
