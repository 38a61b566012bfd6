//! End-to-end transmission of one block through encoder, channel and decoder.

use crate::channel::{derive_seed, draw_block_noise, BlockNoise};
use crate::decoder::{decode, DecoderTrace, Received};
use crate::encoder::{encode_block, encode_raw, Codeword, PowerAccumulator};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::types::{ChannelConfig, FeedbackSnr, KneeMode};

/// Seed domain used for calibration passes.
const CALIBRATION_DOMAIN: u64 = 0xca11_b4a7;

/// Everything produced while sending one block.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub codeword: Codeword,
    pub received: Received,
    pub decoded: Vec<u8>,
    pub trace: DecoderTrace,
}

impl Transmission {
    /// Positions (0-based) where the decoded bit differs from the message.
    pub fn error_positions(&self, noise: &BlockNoise) -> Vec<usize> {
        self.decoded
            .iter()
            .zip(&noise.bits)
            .enumerate()
            .filter_map(|(t, (a, b))| (a != b).then_some(t))
            .collect()
    }
}

/// Encodes, adds forward noise and decodes.
pub fn transmit(params: &ParamSet, noise: &BlockNoise) -> Result<Transmission> {
    let codeword = encode_block(noise, params)?;
    let received = Received::through_channel(&codeword.x, &noise.n, &noise.n1, &noise.n2);
    let (decoded, trace) = decode(&received, params)?;
    Ok(Transmission {
        codeword,
        received,
        decoded,
        trace,
    })
}

/// Number of message-bit errors in one block.
pub fn block_errors(params: &ParamSet, noise: &BlockNoise) -> Result<usize> {
    let tx = transmit(params, noise)?;
    Ok(tx
        .decoded
        .iter()
        .zip(&noise.bits)
        .filter(|(a, b)| a != b)
        .count())
}

/// Rejects channel settings the model variant cannot run under.
pub fn check_channel(params: &ParamSet, cfg: &ChannelConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.block_len != params.spec.block_len {
        return Err(Error::InvalidConfig(format!(
            "channel block length {} differs from model block length {}",
            cfg.block_len, params.spec.block_len
        )));
    }
    if params.spec.knee == KneeMode::LearnedVarying && cfg.snr_fb.is_noiseless() {
        return Err(Error::InvalidConfig(
            "learned knee points are only defined with noisy feedback".into(),
        ));
    }
    Ok(())
}

/// Estimates per-(group, stream) RMS of the raw symbols over `blocks` fresh
/// blocks and freezes it into `params`.
pub fn calibrate(
    params: &mut ParamSet,
    snr_f_db: f64,
    snr_fb: FeedbackSnr,
    blocks: u64,
    seed: u64,
) -> Result<()> {
    let cfg = ChannelConfig::new(
        snr_f_db,
        snr_fb,
        derive_seed(seed, CALIBRATION_DOMAIN),
        params.spec.block_len,
    )?;
    let mut acc = PowerAccumulator::default();
    for index in 0..blocks {
        let noise = draw_block_noise(&cfg, index);
        acc.add(&encode_raw(&noise, params), params.spec.block_len);
    }
    params.calibration = Some(acc.rms());
    Ok(())
}
