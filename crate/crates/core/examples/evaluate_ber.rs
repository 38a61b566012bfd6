//! Monte Carlo BER of the shipped models at 0 dB forward SNR with noiseless
//! feedback, stopping after 200 errors.
//!
//!     cargo run --release --example evaluate_ber

use feedback_code::ber::{run_ber, StopRule};
use feedback_code::bundled;
use feedback_code::{ChannelConfig, FeedbackSnr};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stop = StopRule {
        max_bits: 200_000_000,
        ..StopRule::default()
    };
    for name in [bundled::ENC2_DEC2, bundled::ENC3_DEC4] {
        let params = bundled::load(name)?;
        let channel = ChannelConfig::new(0.0, FeedbackSnr::Noiseless, 1, params.spec.block_len)?;
        let r = run_ber(&params, &channel, &stop)?;
        println!(
            "{:<22} {:>4} errors in {:>10} bits  BER {:.3e}  95% CI [{:.3e}, {:.3e}]  {:.1}s",
            r.model, r.bit_errors, r.bits, r.ber, r.ci_low, r.ci_high, r.seconds
        );
    }
    Ok(())
}
