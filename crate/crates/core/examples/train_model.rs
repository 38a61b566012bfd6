//! Trains a (enc 2, dec 2) model from scratch with a short schedule and
//! measures its bit error rate at 0 dB.
//!
//!     cargo run --release --example train_model -- [steps]

use feedback_code::ber::{run_ber, StopRule};
use feedback_code::trainer::{healthy_window_fraction, train, TrainConfig};
use feedback_code::{ChannelConfig, FeedbackSnr, ModelSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps = std::env::args().nth(1).map_or(Ok(3000), |s| s.parse())?;
    let cfg = TrainConfig {
        spec: ModelSpec::enc2_dec2(),
        steps,
        restarts: 1,
        calibration_blocks: 20_000,
        ..TrainConfig::default()
    };
    let report = train(&cfg, None)?;
    let losses: Vec<f64> = report.log.iter().map(|r| r.bce).collect();
    println!(
        "trained {} for {steps} steps: validation bce {:.5}, healthy windows {:.0}%",
        cfg.spec,
        report.final_val_bce,
        100.0 * healthy_window_fraction(&losses, 500)
    );
    println!("gains e = {:?}, k = {:?}", report.params.e, report.params.k);

    let channel = ChannelConfig::new(0.0, FeedbackSnr::Noiseless, 7, cfg.spec.block_len)?;
    let stop = StopRule {
        target_errors: 100,
        ..StopRule::default()
    };
    let ber = run_ber(&report.params, &channel, &stop)?;
    println!(
        "BER at 0 dB: {:.3e} [{:.3e}, {:.3e}] over {} bits",
        ber.ber, ber.ci_low, ber.ci_high, ber.bits
    );
    Ok(())
}
