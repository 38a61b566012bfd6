//! AWGN forward channel, unit-delay passive feedback, and per-block noise streams.
//!
//! Every block draws its bits and noise from its own ChaCha stream keyed by
//! `(seed, block index)`, so results never depend on how blocks are scheduled
//! across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::ChannelConfig;

/// A reproducible random stream identified by a seed and a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Derives an independent seed for a named purpose (training, validation, ...).
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Message bits plus unit-variance noise for one block, before SNR scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDraws {
    /// `K + 1` bits; the last one is the padded zero.
    pub bits: Vec<u8>,
    /// Forward noise: phase 1, parity 1, parity 2.
    pub forward: [Vec<f64>; 3],
    /// Feedback noise for the same three streams.
    pub feedback: [Vec<f64>; 3],
}

impl UnitDraws {
    pub fn draw(stream: RngStream, block_len: usize) -> Self {
        let steps = block_len + 1;
        let mut rng = stream.rng();
        let mut bits: Vec<u8> = (0..block_len).map(|_| rng.random::<bool>() as u8).collect();
        bits.push(0);
        let normals = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..steps).map(|_| rng.sample(StandardNormal)).collect()
        };
        let forward = [normals(&mut rng), normals(&mut rng), normals(&mut rng)];
        let feedback = [normals(&mut rng), normals(&mut rng), normals(&mut rng)];
        UnitDraws {
            bits,
            forward,
            feedback,
        }
    }

    pub fn scale(&self, sigma_f: f64, sigma_fb: f64) -> BlockNoise {
        let mul = |v: &Vec<f64>, s: f64| -> Vec<f64> {
            if s == 0.0 {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|x| x * s).collect()
            }
        };
        BlockNoise {
            bits: self.bits.clone(),
            n: mul(&self.forward[0], sigma_f),
            n1: mul(&self.forward[1], sigma_f),
            n2: mul(&self.forward[2], sigma_f),
            fb: mul(&self.feedback[0], sigma_fb),
            fb1: mul(&self.feedback[1], sigma_fb),
            fb2: mul(&self.feedback[2], sigma_fb),
        }
    }
}

/// Bits and noise realizations of one transmission episode. All arrays have
/// `K + 1` entries, indexed by 0-based encoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockNoise {
    pub bits: Vec<u8>,
    /// Phase-1 forward noise.
    pub n: Vec<f64>,
    /// Phase-2 forward noise on the two parity streams.
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    /// Feedback noise on the echoed phase-1 and parity symbols.
    pub fb: Vec<f64>,
    pub fb1: Vec<f64>,
    pub fb2: Vec<f64>,
}

impl BlockNoise {
    /// Noiseless block with the given message bits (padded zero appended).
    pub fn quiet(bits: &[u8]) -> Self {
        let steps = bits.len() + 1;
        let mut padded = bits.to_vec();
        padded.push(0);
        BlockNoise {
            bits: padded,
            n: vec![0.0; steps],
            n1: vec![0.0; steps],
            n2: vec![0.0; steps],
            fb: vec![0.0; steps],
            fb1: vec![0.0; steps],
            fb2: vec![0.0; steps],
        }
    }

    /// Message length `K` (excluding the padded bit).
    pub fn block_len(&self) -> usize {
        self.bits.len() - 1
    }

    pub fn steps(&self) -> usize {
        self.bits.len()
    }

    /// Phase-1 noise as seen by the encoder through feedback at step `t`.
    #[inline]
    pub fn eps(&self, t: usize) -> f64 {
        self.n[t] + self.fb[t]
    }

    #[inline]
    pub fn eps1(&self, t: usize) -> f64 {
        self.n1[t] + self.fb1[t]
    }

    #[inline]
    pub fn eps2(&self, t: usize) -> f64 {
        self.n2[t] + self.fb2[t]
    }

    pub fn check(&self) -> Result<()> {
        let steps = self.steps();
        for (what, v) in [
            ("phase-1 noise", &self.n),
            ("parity-1 noise", &self.n1),
            ("parity-2 noise", &self.n2),
            ("feedback noise", &self.fb),
            ("parity-1 feedback noise", &self.fb1),
            ("parity-2 feedback noise", &self.fb2),
        ] {
            if v.len() != steps {
                return Err(Error::LengthMismatch {
                    what,
                    expected: steps,
                    actual: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Bits and noise for block `block_index` under `cfg`.
pub fn draw_block_noise(cfg: &ChannelConfig, block_index: u64) -> BlockNoise {
    UnitDraws::draw(RngStream::new(cfg.seed, block_index), cfg.block_len)
        .scale(cfg.sigma_f(), cfg.sigma_fb())
}

/// Noise the encoder observes at 1-based step `i`: `(eps_i, eps1_{i-1}, eps2_{i-1})`.
/// The delayed terms are zero at `i = 1`.
pub fn effective_feedback_noise(block: &BlockNoise, i: usize) -> Result<(f64, f64, f64)> {
    let max = block.steps();
    if i == 0 || i > max {
        return Err(Error::StepOutOfRange { index: i, max });
    }
    let t = i - 1;
    let (d1, d2) = if t == 0 {
        (0.0, 0.0)
    } else {
        (block.eps1(t - 1), block.eps2(t - 1))
    };
    Ok((block.eps(t), d1, d2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FeedbackSnr;

    #[test]
    fn noiseless_feedback_is_exactly_zero() {
        let cfg = ChannelConfig::noiseless_feedback(0.0, 7);
        let b = draw_block_noise(&cfg, 3);
        for v in [&b.fb, &b.fb1, &b.fb2] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
        assert_eq!(b.n.len(), 51);
        assert_eq!(b.bits[50], 0);
    }

    #[test]
    fn draws_are_deterministic() {
        let cfg = ChannelConfig::new(0.0, FeedbackSnr::Db(10.0), 42, 50).unwrap();
        assert_eq!(draw_block_noise(&cfg, 11), draw_block_noise(&cfg, 11));
        assert_ne!(draw_block_noise(&cfg, 11), draw_block_noise(&cfg, 12));
    }

    #[test]
    fn feedback_snr_does_not_touch_forward_noise() {
        let a = ChannelConfig::new(0.0, FeedbackSnr::Db(10.0), 5, 50).unwrap();
        let b = ChannelConfig::new(0.0, FeedbackSnr::Db(20.0), 5, 50).unwrap();
        let (x, y) = (draw_block_noise(&a, 9), draw_block_noise(&b, 9));
        assert_eq!((&x.n, &x.n1, &x.n2, &x.bits), (&y.n, &y.n1, &y.n2, &y.bits));
        assert_ne!(x.fb, y.fb);
    }

    #[test]
    fn gaussian_moments() {
        let cfg = ChannelConfig::noiseless_feedback(0.0, 1);
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut count = 0.0;
        let mut index = 0;
        while count < 1e6 {
            let b = draw_block_noise(&cfg, index);
            for v in [&b.n, &b.n1, &b.n2] {
                for &x in v {
                    sum += x;
                    sq += x * x;
                    count += 1.0;
                }
            }
            index += 1;
        }
        let mean = sum / count;
        let var = sq / count - mean * mean;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn effective_noise_noiseless_and_boundary() {
        let cfg = ChannelConfig::noiseless_feedback(0.0, 3);
        let b = draw_block_noise(&cfg, 0);
        let (e, d1, d2) = effective_feedback_noise(&b, 4).unwrap();
        assert_eq!((e, d1, d2), (b.n[3], b.n1[2], b.n2[2]));
        let (_, d1, d2) = effective_feedback_noise(&b, 1).unwrap();
        assert_eq!((d1, d2), (0.0, 0.0));
        assert!(effective_feedback_noise(&b, 0).is_err());
        assert!(effective_feedback_noise(&b, 52).is_err());
    }

    #[test]
    fn effective_noise_sums_feedback() {
        let mut b = BlockNoise::quiet(&[0, 1, 0, 1]);
        b.n[2] = 0.3;
        b.fb[2] = -0.1;
        let (e, _, _) = effective_feedback_noise(&b, 3).unwrap();
        assert!((e - 0.2).abs() < 1e-15);
    }
}
