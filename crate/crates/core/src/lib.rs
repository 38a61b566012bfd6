//! Interpretable feedback codes over an AWGN channel with unit-delay passive
//! feedback: encoders, decoders, training, BER estimation and error forensics.

pub mod analysis;
pub mod ber;
pub mod bundled;
pub mod channel;
pub mod cli;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod model;
pub mod params;
pub mod reference;
pub mod selftest;
pub mod trainer;
pub mod types;

pub use ber::{run_ber, sweep, BerReport, GridPoint, StopRule, SweepGrid};
pub use channel::{draw_block_noise, BlockNoise};
pub use decoder::{decode, Received};
pub use encoder::{encode_block, encode_raw, Codeword};
pub use error::{Error, Result};
pub use model::{calibrate, transmit, Transmission};
pub use params::{param_count, ParamSet};
pub use trainer::{train, TrainConfig, TrainReport};
pub use types::{ChannelConfig, DecoderKind, EncoderOrder, FeedbackSnr, KneeMode, ModelSpec};
