//! Model descriptors, channel configuration and SNR conventions.
//!
//! Signal power is normalized to one, so an SNR of `s` dB corresponds to a
//! noise standard deviation of `10^(-s/20)`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default message length.
pub const DEFAULT_BLOCK_LEN: usize = 50;

/// Noise standard deviation for an SNR given in dB.
pub fn snr_to_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

/// Inverse of [`snr_to_sigma`].
pub fn sigma_to_snr(sigma: f64) -> f64 {
    -20.0 * sigma.log10()
}

/// Order of error correction implemented by the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderOrder {
    Second,
    Third,
}

impl EncoderOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            EncoderOrder::Second => 2,
            EncoderOrder::Third => 3,
        }
    }

    pub fn from_u8(order: u8) -> Result<Self> {
        match order {
            2 => Ok(EncoderOrder::Second),
            3 => Ok(EncoderOrder::Third),
            other => Err(Error::UnsupportedModel(format!(
                "encoder order {other} (only 2 and 3 exist)"
            ))),
        }
    }
}

impl Serialize for EncoderOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for EncoderOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = u8::deserialize(d)?;
        EncoderOrder::from_u8(raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Dec2Single,
    Dec3Single,
    Dec4Single,
    Dec4TwoStage,
}

impl DecoderKind {
    /// Number of future parity-sum steps the decoder looks at (`y - 1` for `dec y`).
    pub fn lookahead(self) -> usize {
        match self {
            DecoderKind::Dec2Single => 1,
            DecoderKind::Dec3Single => 2,
            DecoderKind::Dec4Single | DecoderKind::Dec4TwoStage => 3,
        }
    }

    pub fn is_single_stage(self) -> bool {
        !matches!(self, DecoderKind::Dec4TwoStage)
    }

    /// Number of tanh branches combined by a single-stage decoder.
    pub fn branches(self) -> usize {
        match self {
            DecoderKind::Dec2Single => 5,
            DecoderKind::Dec3Single | DecoderKind::Dec4Single => 7,
            DecoderKind::Dec4TwoStage => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DecoderKind::Dec2Single => "dec2",
            DecoderKind::Dec3Single => "dec3",
            DecoderKind::Dec4Single => "dec4-single",
            DecoderKind::Dec4TwoStage => "dec4-two-stage",
        }
    }
}

/// Placement of the knee point of the first-order correction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeMode {
    FixedAtZero,
    LearnedVarying,
}

/// Which interpretable model variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub encoder_order: EncoderOrder,
    pub entanglement: bool,
    pub decoder: DecoderKind,
    pub knee: KneeMode,
    pub block_len: usize,
    pub padded_steps: usize,
}

impl ModelSpec {
    pub fn new(
        encoder_order: EncoderOrder,
        entanglement: bool,
        decoder: DecoderKind,
        knee: KneeMode,
    ) -> Result<Self> {
        ModelSpec {
            encoder_order,
            entanglement,
            decoder,
            knee,
            block_len: DEFAULT_BLOCK_LEN,
            padded_steps: 1,
        }
        .normalized()
    }

    /// The (enc 2, dec 2) single-stage model.
    pub fn enc2_dec2() -> Self {
        Self::new(
            EncoderOrder::Second,
            false,
            DecoderKind::Dec2Single,
            KneeMode::FixedAtZero,
        )
        .expect("valid spec")
    }

    /// enc 3 with entanglement and the given decoder.
    pub fn enc3(decoder: DecoderKind) -> Self {
        Self::new(EncoderOrder::Third, true, decoder, KneeMode::FixedAtZero).expect("valid spec")
    }

    /// The (enc 3, dec 4) two-stage model.
    pub fn enc3_dec4() -> Self {
        Self::enc3(DecoderKind::Dec4TwoStage)
    }

    pub fn with_block_len(mut self, block_len: usize) -> Result<Self> {
        self.block_len = block_len;
        self.normalized()
    }

    pub fn with_knee(mut self, knee: KneeMode) -> Self {
        self.knee = knee;
        self
    }

    pub fn with_entanglement(mut self, entanglement: bool) -> Self {
        self.entanglement = entanglement && self.encoder_order == EncoderOrder::Third;
        self
    }

    pub fn with_decoder(mut self, decoder: DecoderKind) -> Result<Self> {
        self.decoder = decoder;
        self.normalized()
    }

    /// Validates the combination and clears flags that have no meaning for it.
    pub fn normalized(mut self) -> Result<Self> {
        if self.encoder_order == EncoderOrder::Second {
            self.entanglement = false;
            if self.decoder != DecoderKind::Dec2Single {
                return Err(Error::UnsupportedModel(format!(
                    "enc 2 only pairs with dec2 single-stage, not {}",
                    self.decoder.label()
                )));
            }
        }
        if self.padded_steps != 1 {
            return Err(Error::UnsupportedModel(format!(
                "padded_steps = {} (only one padded zero bit is supported)",
                self.padded_steps
            )));
        }
        // Power groups {1}, {2}, {3..K-1}, {K, K+1} must be disjoint.
        if self.block_len < 4 {
            return Err(Error::UnsupportedModel(format!(
                "block length {} is below the minimum of 4",
                self.block_len
            )));
        }
        Ok(self)
    }

    /// Encoder steps including the padded bit.
    pub fn steps(&self) -> usize {
        self.block_len + self.padded_steps
    }

    /// Channel uses per block (rate 1/3 over the padded length).
    pub fn channel_uses(&self) -> usize {
        3 * self.steps()
    }

    pub fn name(&self) -> String {
        let enc = match (self.encoder_order, self.entanglement) {
            (EncoderOrder::Second, _) => "enc2",
            (EncoderOrder::Third, true) => "enc3",
            (EncoderOrder::Third, false) => "enc3-noent",
        };
        let knee = match self.knee {
            KneeMode::FixedAtZero => "",
            KneeMode::LearnedVarying => "-knee",
        };
        format!("{enc}/{}{knee}", self.decoder.label())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Parses the names produced by [`ModelSpec::name`], e.g. `enc3-noent/dec4-two-stage`.
impl std::str::FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnsupportedModel(format!("unknown model name '{s}'"));
        let (enc, dec) = s.trim().split_once('/').ok_or_else(bad)?;
        let (order, entanglement) = match enc {
            "enc2" => (EncoderOrder::Second, false),
            "enc3" => (EncoderOrder::Third, true),
            "enc3-noent" => (EncoderOrder::Third, false),
            _ => return Err(bad()),
        };
        let (dec, knee) = match dec.strip_suffix("-knee") {
            Some(d) => (d, KneeMode::LearnedVarying),
            None => (dec, KneeMode::FixedAtZero),
        };
        let decoder = match dec {
            "dec2" => DecoderKind::Dec2Single,
            "dec3" => DecoderKind::Dec3Single,
            "dec4-single" => DecoderKind::Dec4Single,
            "dec4-two-stage" | "dec4" => DecoderKind::Dec4TwoStage,
            _ => return Err(bad()),
        };
        ModelSpec::new(order, entanglement, decoder, knee)
    }
}

/// Feedback link quality. `Noiseless` is written as `inf` in files and flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackSnr {
    Noiseless,
    Db(f64),
}

impl FeedbackSnr {
    pub fn sigma(self) -> f64 {
        match self {
            FeedbackSnr::Noiseless => 0.0,
            FeedbackSnr::Db(db) => snr_to_sigma(db),
        }
    }

    pub fn is_noiseless(self) -> bool {
        self.sigma() == 0.0
    }

    pub fn db(self) -> f64 {
        match self {
            FeedbackSnr::Noiseless => f64::INFINITY,
            FeedbackSnr::Db(db) => db,
        }
    }
}

impl fmt::Display for FeedbackSnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackSnr::Noiseless => f.write_str("inf"),
            FeedbackSnr::Db(db) => write!(f, "{db}"),
        }
    }
}

impl std::str::FromStr for FeedbackSnr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("noiseless") {
            return Ok(FeedbackSnr::Noiseless);
        }
        let db: f64 = t
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("feedback SNR '{s}' is not a number")))?;
        if db == f64::INFINITY {
            Ok(FeedbackSnr::Noiseless)
        } else if db.is_finite() {
            Ok(FeedbackSnr::Db(db))
        } else {
            Err(Error::InvalidConfig(format!("feedback SNR '{s}'")))
        }
    }
}

impl Serialize for FeedbackSnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FeedbackSnr::Noiseless => s.serialize_str("inf"),
            FeedbackSnr::Db(db) => s.serialize_f64(*db),
        }
    }
}

impl<'de> Deserialize<'de> for FeedbackSnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(db) => Ok(FeedbackSnr::Db(db)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Forward/feedback channel quality plus the seed that drives noise generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Forward SNR in dB; `+inf` gives a noiseless forward link.
    pub snr_f_db: f64,
    pub snr_fb: FeedbackSnr,
    pub seed: u64,
    pub block_len: usize,
}

impl ChannelConfig {
    pub fn new(snr_f_db: f64, snr_fb: FeedbackSnr, seed: u64, block_len: usize) -> Result<Self> {
        let cfg = ChannelConfig {
            snr_f_db,
            snr_fb,
            seed,
            block_len,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noiseless_feedback(snr_f_db: f64, seed: u64) -> Self {
        ChannelConfig {
            snr_f_db,
            snr_fb: FeedbackSnr::Noiseless,
            seed,
            block_len: DEFAULT_BLOCK_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_f_db.is_nan() || self.snr_f_db == f64::NEG_INFINITY {
            return Err(Error::InvalidConfig(format!(
                "forward SNR {} dB",
                self.snr_f_db
            )));
        }
        if let FeedbackSnr::Db(db) = self.snr_fb {
            if !db.is_finite() {
                return Err(Error::InvalidConfig(format!("feedback SNR {db} dB")));
            }
        }
        if self.block_len < 4 {
            return Err(Error::InvalidConfig(format!(
                "block length {}",
                self.block_len
            )));
        }
        Ok(())
    }

    pub fn sigma_f(&self) -> f64 {
        snr_to_sigma(self.snr_f_db)
    }

    pub fn sigma_fb(&self) -> f64 {
        self.snr_fb.sigma()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for spec in [
            ModelSpec::enc2_dec2(),
            ModelSpec::enc3(DecoderKind::Dec3Single),
            ModelSpec::enc3(DecoderKind::Dec4Single),
            ModelSpec::enc3_dec4().with_entanglement(false),
            ModelSpec::enc3_dec4().with_knee(KneeMode::LearnedVarying),
        ] {
            assert_eq!(spec.name().parse::<ModelSpec>().unwrap(), spec);
        }
        assert!("enc2/dec4-two-stage".parse::<ModelSpec>().is_err());
        assert!("enc5/dec2".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(snr_to_sigma(0.0), 1.0);
        assert!((snr_to_sigma(2.0) - 0.794_328_234_724_281_5).abs() < 1e-15);
        assert!((snr_to_sigma(-1.0) - 1.122_018_454_301_963_3).abs() < 1e-15);
        assert_eq!(snr_to_sigma(f64::INFINITY), 0.0);
    }

    #[test]
    fn enc2_drops_entanglement() {
        let spec = ModelSpec::new(
            EncoderOrder::Second,
            true,
            DecoderKind::Dec2Single,
            KneeMode::FixedAtZero,
        )
        .unwrap();
        assert!(!spec.entanglement);
    }

    #[test]
    fn enc2_rejects_longer_decoders() {
        assert!(ModelSpec::new(
            EncoderOrder::Second,
            false,
            DecoderKind::Dec4TwoStage,
            KneeMode::FixedAtZero
        )
        .is_err());
    }

    #[test]
    fn feedback_snr_parsing() {
        assert_eq!("inf".parse::<FeedbackSnr>().unwrap(), FeedbackSnr::Noiseless);
        assert_eq!("10".parse::<FeedbackSnr>().unwrap(), FeedbackSnr::Db(10.0));
        assert!("nan".parse::<FeedbackSnr>().is_err());
        let json = serde_json::to_string(&FeedbackSnr::Noiseless).unwrap();
        assert_eq!(json, "\"inf\"");
        let back: FeedbackSnr = serde_json::from_str("12.5").unwrap();
        assert_eq!(back, FeedbackSnr::Db(12.5));
    }

    proptest::proptest! {
        #[test]
        fn snr_sigma_round_trip(x in -10.0f64..40.0) {
            let back = sigma_to_snr(snr_to_sigma(x));
            proptest::prop_assert!((back - x).abs() <= 1e-12);
        }
    }
}
