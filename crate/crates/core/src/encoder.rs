//! Interpretable feedback encoders (second and third order).
//!
//! Phase 1 sends the BPSK bits. Phase 2 sends, for every step `i`, a parity
//! pair built from a first-order term (the phase-1 noise when it opposes the
//! bit), second-order states `h4`/`h5` reacting to the previous step's noise,
//! and third-order states `h6`/`h7` that also look one step further back.

use std::io::Write;

use crate::channel::BlockNoise;
use crate::error::{Error, Result};
use crate::params::{power_group, power_group_sizes, ParamSet, POWER_GROUPS, POWER_WEIGHTS, STREAMS};
use crate::types::{EncoderOrder, KneeMode};

/// Added to mean-square power before taking the RMS so an all-zero group stays finite.
pub const RMS_FLOOR: f64 = 1e-12;

/// `1` when `x >= 0`, else `0`.
#[inline]
pub fn indicator(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn bpsk(bit: u8) -> f64 {
    2.0 * f64::from(bit) - 1.0
}

/// Hidden values of one encoder step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderState {
    pub h4: f64,
    pub h5: f64,
    pub h6: f64,
    pub h7: f64,
}

impl EncoderState {
    /// Resting values; their contributions cancel in the parity pair.
    pub const QUIESCENT: EncoderState = EncoderState {
        h4: 1.0,
        h5: -1.0,
        h6: 1.0,
        h7: 1.0,
    };

    pub fn initial() -> Self {
        Self::QUIESCENT
    }
}

/// Noise fed back from one step: phase-1 and the two parity streams, each
/// including feedback-link noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FedBackNoise {
    pub eps: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl FedBackNoise {
    pub fn at(noise: &BlockNoise, t: usize) -> Self {
        FedBackNoise {
            eps: noise.eps(t),
            eps1: noise.eps1(t),
            eps2: noise.eps2(t),
        }
    }
}

/// First-order correction term for bit `bit` given its fed-back phase-1 noise.
pub fn first_order(bit: u8, eps: f64, knee: KneeMode, lambda: [f64; 2]) -> f64 {
    let shifted = match (knee, bit) {
        (KneeMode::FixedAtZero, _) => eps,
        (KneeMode::LearnedVarying, 0) => eps + lambda[0],
        (KneeMode::LearnedVarying, _) => eps - lambda[1],
    };
    shifted * indicator(-bpsk(bit) * shifted)
}

/// Hidden state at step `i >= 2` from the state, bit and fed-back noise of step `i - 1`.
pub fn step_hidden(
    prev: &EncoderState,
    prev_bit: u8,
    prev_noise: FedBackNoise,
    params: &ParamSet,
) -> EncoderState {
    let [k1, k2, k3, k4] = params.k;
    let FedBackNoise { eps, eps1, eps2 } = prev_noise;
    let drive = -k1 * eps + k2 * eps1 - k3 * eps2;
    let (h4, h5) = if prev_bit == 0 {
        ((drive + k4).tanh(), -1.0)
    } else {
        (1.0, (drive - k4).tanh())
    };
    let (h6, h7) = match params.spec.encoder_order {
        EncoderOrder::Second => (1.0, 1.0),
        EncoderOrder::Third => {
            let [m1, m2, m3, m4, m5] = params.m;
            let m4 = if params.spec.entanglement { m4 } else { 0.0 };
            let common = m1 * eps1 + m2 * eps2;
            (
                (common + m3 * prev.h4 + m4 * prev.h7 + m5).tanh(),
                (-common - m3 * prev.h5 + m4 * prev.h6 + m5).tanh(),
            )
        }
    };
    EncoderState { h4, h5, h6, h7 }
}

/// Parity pair `(c_{i,1}, c_{i,2})` for a first-order term and hidden state.
pub fn parity_pair(first_order_term: f64, state: &EncoderState, params: &ParamSet) -> (f64, f64) {
    let [e1, e2, e3] = params.e;
    let mut shared = -e2 * (state.h4 + state.h5);
    if params.spec.encoder_order == EncoderOrder::Third {
        shared += -e3 * state.h6 + e3 * state.h7;
    }
    let fo = e1 * first_order_term;
    (fo + shared, -fo + shared)
}

/// Encoder output before power allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCodeword {
    /// Systematic symbols and the two parity streams, `K + 1` each.
    pub symbols: [Vec<f64>; STREAMS],
    pub states: Vec<EncoderState>,
    pub first_order: Vec<f64>,
}

/// Runs the encoder recurrence over a whole block.
pub fn encode_raw(noise: &BlockNoise, params: &ParamSet) -> RawCodeword {
    let steps = noise.steps();
    let mut systematic = Vec::with_capacity(steps);
    let mut c1 = Vec::with_capacity(steps);
    let mut c2 = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    let mut fos = Vec::with_capacity(steps);
    let mut state = EncoderState::initial();
    for t in 0..steps {
        if t > 0 {
            state = step_hidden(&state, noise.bits[t - 1], FedBackNoise::at(noise, t - 1), params);
        }
        let bit = noise.bits[t];
        let fo = first_order(bit, noise.eps(t), params.spec.knee, params.knee);
        let (p1, p2) = parity_pair(fo, &state, params);
        systematic.push(bpsk(bit));
        c1.push(p1);
        c2.push(p2);
        states.push(state);
        fos.push(fo);
    }
    RawCodeword {
        symbols: [systematic, c1, c2],
        states,
        first_order: fos,
    }
}

/// Power allocation followed by normalization:
/// `x = w[g][s] * c / rms[g][s] / z`, with `z` chosen so unit-RMS groups give
/// unit average power.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNorm {
    pub weights: [f64; POWER_WEIGHTS],
    pub rms: [f64; POWER_WEIGHTS],
    pub z: f64,
    pub block_len: usize,
}

impl PowerNorm {
    pub fn new(weights: [f64; POWER_WEIGHTS], rms: [f64; POWER_WEIGHTS], block_len: usize) -> Result<Self> {
        let z = weight_norm(&weights, block_len);
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidParams(
                "power weights are all zero or non-finite".into(),
            ));
        }
        if rms.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParams("normalization RMS must be positive".into()));
        }
        Ok(PowerNorm {
            weights,
            rms,
            z,
            block_len,
        })
    }

    /// Uses the calibration constants frozen into `params`.
    pub fn from_params(params: &ParamSet) -> Result<Self> {
        let rms = params.calibration.ok_or(Error::MissingCalibration)?;
        Self::new(params.power, rms, params.spec.block_len)
    }

    /// Overall gain applied to symbol `(stream, t)`.
    #[inline]
    pub fn gain(&self, stream: usize, t: usize) -> f64 {
        let idx = power_group(t, self.block_len) * STREAMS + stream;
        self.weights[idx] / (self.rms[idx] * self.z)
    }

    pub fn apply(&self, raw: &RawCodeword) -> [Vec<f64>; STREAMS] {
        std::array::from_fn(|s| {
            raw.symbols[s]
                .iter()
                .enumerate()
                .map(|(t, &c)| c * self.gain(s, t))
                .collect()
        })
    }
}

/// `sqrt(sum_g n_g * w_g^2 / N)` over all groups and streams.
pub fn weight_norm(weights: &[f64; POWER_WEIGHTS], block_len: usize) -> f64 {
    let sizes = power_group_sizes(block_len);
    let total = (3 * (block_len + 1)) as f64;
    let mut acc = 0.0;
    for g in 0..POWER_GROUPS {
        for s in 0..STREAMS {
            let w = weights[g * STREAMS + s];
            acc += sizes[g] as f64 * w * w;
        }
    }
    (acc / total).sqrt()
}

/// Running sums of squared raw symbols per (group, stream).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAccumulator {
    pub sum_sq: [f64; POWER_WEIGHTS],
    pub count: [f64; POWER_WEIGHTS],
}

impl Default for PowerAccumulator {
    fn default() -> Self {
        PowerAccumulator {
            sum_sq: [0.0; POWER_WEIGHTS],
            count: [0.0; POWER_WEIGHTS],
        }
    }
}

impl PowerAccumulator {
    pub fn add(&mut self, raw: &RawCodeword, block_len: usize) {
        for s in 0..STREAMS {
            for (t, &c) in raw.symbols[s].iter().enumerate() {
                let idx = power_group(t, block_len) * STREAMS + s;
                self.sum_sq[idx] += c * c;
                self.count[idx] += 1.0;
            }
        }
    }

    pub fn merge(&mut self, other: &PowerAccumulator) {
        for i in 0..POWER_WEIGHTS {
            self.sum_sq[i] += other.sum_sq[i];
            self.count[i] += other.count[i];
        }
    }

    pub fn rms(&self) -> [f64; POWER_WEIGHTS] {
        std::array::from_fn(|i| (self.sum_sq[i] / self.count[i].max(1.0) + RMS_FLOOR).sqrt())
    }
}

/// Power-allocated, normalized encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub raw: RawCodeword,
    pub x: [Vec<f64>; STREAMS],
}

impl Codeword {
    /// `||x||^2 / N` for this block.
    pub fn mean_power(&self) -> f64 {
        let n: usize = self.x.iter().map(Vec::len).sum();
        self.x.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64
    }
}

/// Encodes one block with the frozen normalization of `params`.
pub fn encode_block(noise: &BlockNoise, params: &ParamSet) -> Result<Codeword> {
    noise.check()?;
    if noise.block_len() != params.spec.block_len {
        return Err(Error::LengthMismatch {
            what: "message bits",
            expected: params.spec.block_len,
            actual: noise.block_len(),
        });
    }
    let norm = PowerNorm::from_params(params)?;
    let raw = encode_raw(noise, params);
    let x = norm.apply(&raw);
    Ok(Codeword { raw, x })
}

/// Writes the per-step hidden trace as `step,h4,h5,h6,h7,c1,c2` (1-based steps).
pub fn write_trace_csv<W: Write>(raw: &RawCodeword, mut out: W) -> std::io::Result<()> {
    writeln!(out, "step,h4,h5,h6,h7,c1,c2")?;
    for (t, s) in raw.states.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t + 1,
            s.h4,
            s.h5,
            s.h6,
            s.h7,
            raw.symbols[1][t],
            raw.symbols[2][t]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ModelSpec;

    fn enc3_params() -> ParamSet {
        let mut p = ParamSet::zeros(ModelSpec::enc3_dec4());
        p.e = [0.8, 0.5, 0.4];
        p.k = [1.2, 0.9, 0.9, 2.5];
        p.m = [0.7, 0.7, 0.6, 0.5, 1.5];
        p.power = [1.0; POWER_WEIGHTS];
        p
    }

    #[test]
    fn first_order_examples() {
        assert_eq!(first_order(0, -0.7, KneeMode::FixedAtZero, [0.0; 2]), 0.0);
        assert_eq!(first_order(0, 0.7, KneeMode::FixedAtZero, [0.0; 2]), 0.7);
        let v = first_order(1, -0.4, KneeMode::LearnedVarying, [0.0, 0.1]);
        assert!((v + 0.5).abs() < 1e-15);
        // indicator at exactly zero is active
        assert_eq!(indicator(0.0), 1.0);
    }

    #[test]
    fn hard_set_states() {
        let p = enc3_params();
        let noise = FedBackNoise {
            eps: 0.3,
            eps1: -0.2,
            eps2: 0.1,
        };
        let s0 = step_hidden(&EncoderState::initial(), 0, noise, &p);
        assert_eq!(s0.h5, -1.0);
        let s1 = step_hidden(&EncoderState::initial(), 1, noise, &p);
        assert_eq!(s1.h4, 1.0);
    }

    #[test]
    fn quiescent_parities_cancel() {
        let p = enc3_params();
        let (c1, c2) = parity_pair(0.0, &EncoderState::QUIESCENT, &p);
        assert_eq!((c1, c2), (0.0, 0.0));
    }

    #[test]
    fn parity_difference_isolates_first_order() {
        let p = enc3_params();
        let s = EncoderState {
            h4: 0.3,
            h5: -0.8,
            h6: 0.1,
            h7: 0.9,
        };
        let (c1, c2) = parity_pair(0.37, &s, &p);
        assert!((c1 - c2 - 2.0 * p.e[0] * 0.37).abs() < 1e-15);
    }

    #[test]
    fn no_entanglement_ignores_previous_third_order_states() {
        let mut p = enc3_params();
        p.spec = p.spec.with_entanglement(false);
        p.m[3] = 0.0;
        let noise = FedBackNoise {
            eps: 0.1,
            eps1: 0.5,
            eps2: -0.3,
        };
        let a = EncoderState {
            h4: 0.5,
            h5: -1.0,
            h6: 0.2,
            h7: -0.4,
        };
        let b = EncoderState { h6: 0.0, h7: 0.0, ..a };
        assert_eq!(step_hidden(&a, 1, noise, &p), step_hidden(&b, 1, noise, &p));
    }

    #[test]
    fn quiet_block_with_silent_hidden_gains_has_zero_parity() {
        let mut p = enc3_params();
        p.e[1] = 0.0;
        p.e[2] = 0.0;
        let noise = BlockNoise::quiet(&[1, 0, 0, 1, 1, 0, 1, 0]);
        let raw = encode_raw(&noise, &p);
        assert!(raw.symbols[1].iter().chain(&raw.symbols[2]).all(|&c| c == 0.0));
    }

    #[test]
    fn single_opposing_noise_gives_one_antisymmetric_pair() {
        let mut p = enc3_params();
        p.e[1] = 0.0;
        p.e[2] = 0.0;
        let mut noise = BlockNoise::quiet(&[0, 1, 0, 1, 1, 0]);
        noise.n[2] = 1.5; // bit 0 pushed towards 1
        let raw = encode_raw(&noise, &p);
        for t in 0..noise.steps() {
            let (c1, c2) = (raw.symbols[1][t], raw.symbols[2][t]);
            if t == 2 {
                assert!(c1 > 0.0);
                assert_eq!(c1, -c2);
            } else {
                assert_eq!((c1, c2), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn zero_weight_group_is_silent() {
        let mut p = enc3_params();
        p.power[2 * STREAMS + 1] = 0.0;
        p.calibration = Some([1.0; POWER_WEIGHTS]);
        let mut noise = BlockNoise::quiet(&[0, 1, 1, 0, 1, 0, 0, 1]);
        noise.n.iter_mut().enumerate().for_each(|(t, v)| *v = 0.3 * (t as f64 - 4.0));
        p.spec = p.spec.with_block_len(8).unwrap();
        let cw = encode_block(&noise, &p).unwrap();
        for t in 2..7 {
            assert_eq!(cw.x[1][t], 0.0);
        }
    }

    #[test]
    fn equal_weights_reduce_to_global_scaling() {
        let w = [0.7; POWER_WEIGHTS];
        let norm = PowerNorm::new(w, [1.0; POWER_WEIGHTS], 50).unwrap();
        for s in 0..STREAMS {
            for t in [0, 1, 20, 49, 50] {
                assert!((norm.gain(s, t) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn missing_calibration_is_an_error() {
        let p = enc3_params();
        let noise = BlockNoise::quiet(&[0; 50]);
        assert!(matches!(encode_block(&noise, &p), Err(Error::MissingCalibration)));
    }

    proptest::proptest! {
        #[test]
        fn parity_difference_depends_only_on_first_order(
            fo in -3.0f64..3.0,
            h4 in -1.0f64..1.0, h5 in -1.0f64..1.0, h6 in -1.0f64..1.0, h7 in -1.0f64..1.0,
            g4 in -1.0f64..1.0, g5 in -1.0f64..1.0, g6 in -1.0f64..1.0, g7 in -1.0f64..1.0,
        ) {
            let p = enc3_params();
            let a = parity_pair(fo, &EncoderState { h4, h5, h6, h7 }, &p);
            let b = parity_pair(fo, &EncoderState { h4: g4, h5: g5, h6: g6, h7: g7 }, &p);
            proptest::prop_assert!(((a.0 - a.1) - (b.0 - b.1)).abs() < 1e-12);
        }
    }
}
