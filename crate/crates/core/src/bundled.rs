//! Trained parameter files shipped in the crate's `models/` directory.

use std::path::PathBuf;

use crate::error::Result;
use crate::params::ParamSet;
use crate::types::FeedbackSnr;

/// Directory holding the shipped parameter files.
pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models")
}

/// Loads `models/<name>.json`.
pub fn load(name: &str) -> Result<ParamSet> {
    ParamSet::load(models_dir().join(format!("{name}.json")))
}

/// (enc 2, dec 2) trained at 0 dB with noiseless feedback.
pub const ENC2_DEC2: &str = "enc2_dec2";
/// (enc 3, dec 4 two-stage) trained at 0 dB with noiseless feedback.
pub const ENC3_DEC4: &str = "enc3_dec4";
/// Single-stage decoders trained on the frozen enc 3 of [`ENC3_DEC4`].
pub const ENC3_DEC2: &str = "enc3_dec2";
pub const ENC3_DEC3: &str = "enc3_dec3";
pub const ENC3_DEC4_SINGLE: &str = "enc3_dec4_single";
/// enc 3 without entanglement, trained under the frozen decoder of [`ENC3_DEC4`].
pub const ENC3_NOENT_DEC4: &str = "enc3_noent_dec4";

/// Feedback SNRs (dB) of the noisy-feedback models.
pub const NOISY_FEEDBACK_DB: [f64; 3] = [20.0, 15.0, 10.0];

/// Name of a model fine-tuned for noisy feedback, e.g. `enc3_dec4_knee_fb10`.
pub fn noisy_name(base: &str, snr_fb: FeedbackSnr) -> String {
    format!("{base}_fb{}", snr_fb.db())
}
