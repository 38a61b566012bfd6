//! Effect of hidden-state outliers on the parity sum for the trained enc 3,
//! with noise kicks of two standard deviations at 0 dB.
//!
//!     cargo run --release --example outlier_table

use feedback_code::analysis::outlier_table;
use feedback_code::bundled;
use feedback_code::types::snr_to_sigma;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = bundled::load(bundled::ENC3_DEC4)?;
    let table = outlier_table(&params, 2.0 * snr_to_sigma(0.0));
    print!("{table}");
    println!("all rows as expected: {}", table.all_pass());
    Ok(())
}
