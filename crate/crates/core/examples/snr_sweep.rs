//! BER against forward SNR for the shipped noiseless-feedback models, written
//! as the sweep CSV that the plotting script reads.
//!
//!     cargo run --release --example snr_sweep > ber.csv

use feedback_code::ber::{sweep, StopRule, SweepGrid};
use feedback_code::bundled;
use feedback_code::FeedbackSnr;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let models = [bundled::ENC2_DEC2, bundled::ENC3_DEC3, bundled::ENC3_DEC4]
        .into_iter()
        .map(bundled::load)
        .collect::<Result<Vec<_>, _>>()?;
    let points = SweepGrid::product(&[-1.0, 0.0, 1.0, 2.0], &[FeedbackSnr::Noiseless]);
    let stop = StopRule {
        target_errors: 100,
        max_bits: 20_000_000,
        ..StopRule::default()
    };
    sweep(&models, &points, 1, &stop, true, std::io::stdout().lock())?;
    Ok(())
}
