//! BER under noisy feedback for the fine-tuned models: enc 2 against enc 3
//! with fixed and with learned knee points.
//!
//!     cargo run --release --example noisy_feedback

use feedback_code::ber::{run_ber, StopRule};
use feedback_code::bundled::{self, noisy_name, NOISY_FEEDBACK_DB};
use feedback_code::{ChannelConfig, FeedbackSnr};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stop = StopRule {
        target_errors: 100,
        ..StopRule::default()
    };
    println!("{:>8} {:>12} {:>12} {:>12}", "SNR_fb", "enc2/dec2", "enc3/dec4", "enc3 knee");
    for db in NOISY_FEEDBACK_DB {
        let fb = FeedbackSnr::Db(db);
        let mut row = Vec::new();
        for base in ["enc2_dec2", "enc3_dec4", "enc3_dec4_knee"] {
            let params = bundled::load(&noisy_name(base, fb))?;
            let channel = ChannelConfig::new(0.0, fb, 1, params.spec.block_len)?;
            row.push(run_ber(&params, &channel, &stop)?.ber);
        }
        println!("{db:>8} {:>12.3e} {:>12.3e} {:>12.3e}", row[0], row[1], row[2]);
    }
    Ok(())
}
