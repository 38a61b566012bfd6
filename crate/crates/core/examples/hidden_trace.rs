//! Writes the encoder hidden states and decoder internals of one block as CSV.
//!
//!     cargo run --release --example hidden_trace -- [block index] [out dir]

use std::fs::File;
use std::path::PathBuf;

use feedback_code::bundled;
use feedback_code::encoder::write_trace_csv;
use feedback_code::{draw_block_noise, transmit, ChannelConfig, FeedbackSnr};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let index: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let dir = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let params = bundled::load(bundled::ENC3_DEC4)?;
    let channel = ChannelConfig::new(0.0, FeedbackSnr::Noiseless, 1, params.spec.block_len)?;
    let noise = draw_block_noise(&channel, index);
    let tx = transmit(&params, &noise)?;

    let enc_path = dir.join(format!("encoder_trace_{index}.csv"));
    write_trace_csv(&tx.codeword.raw, File::create(&enc_path)?)?;
    let dec_path = dir.join(format!("decoder_trace_{index}.csv"));
    tx.trace.write_csv(File::create(&dec_path)?)?;
    println!(
        "block {index}: {} bit errors, traces in {} and {}",
        tx.error_positions(&noise).len(),
        enc_path.display(),
        dec_path.display()
    );
    Ok(())
}
