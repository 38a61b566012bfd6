//! Built-in consistency suites: production code against the naive reference
//! implementations, and analytic gradients against finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{derive_seed, BlockNoise, RngStream, UnitDraws};
use crate::decoder::Received;
use crate::encoder::encode_block;
use crate::error::Result;
use crate::model::transmit;
use crate::params::{ParamSet, POWER_WEIGHTS};
use crate::reference;
use crate::trainer::grad::{bce_loss, NormMode};
use crate::trainer::gradcheck::{check_gradient, FD_STEP};
use crate::types::{snr_to_sigma, DecoderKind, EncoderOrder, KneeMode, ModelSpec};

/// Every model variant the suites cover.
pub fn variants() -> Vec<ModelSpec> {
    vec![
        ModelSpec::enc2_dec2(),
        ModelSpec::enc3(DecoderKind::Dec2Single),
        ModelSpec::enc3(DecoderKind::Dec3Single),
        ModelSpec::enc3(DecoderKind::Dec4Single),
        ModelSpec::enc3_dec4(),
        ModelSpec::enc3_dec4().with_entanglement(false),
        ModelSpec::enc3_dec4().with_knee(KneeMode::LearnedVarying),
        ModelSpec::enc2_dec2().with_knee(KneeMode::LearnedVarying),
    ]
}

/// Parameters with every scalar active, drawn away from saturation.
pub fn random_params(spec: ModelSpec, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let mut p = ParamSet::zeros(spec);
    p.e = [u(0.2, 1.0), u(0.2, 1.0), u(0.2, 1.0)];
    p.k = [u(0.3, 1.5), u(0.3, 1.5), u(0.3, 1.5), u(0.5, 2.5)];
    p.m = [u(0.2, 1.0), u(0.2, 1.0), u(0.2, 1.0), u(0.2, 1.0), u(0.5, 2.0)];
    if spec.encoder_order == EncoderOrder::Second {
        p.e[2] = 0.0;
        p.m = [0.0; 5];
    } else if !spec.entanglement {
        p.m[3] = 0.0;
    }
    if spec.knee == KneeMode::LearnedVarying {
        p.knee = [u(0.0, 0.5), u(0.0, 0.5)];
    }
    for v in p.d.iter_mut() {
        *v = u(-0.6, 0.6);
    }
    for v in p.l.iter_mut() {
        *v = u(-2.0, 2.0);
    }
    for v in p
        .alpha
        .iter_mut()
        .flatten()
        .chain(p.beta.iter_mut().flatten())
        .chain(p.gamma.iter_mut().flatten())
    {
        *v = u(-0.8, 0.8);
    }
    for v in p.r.iter_mut() {
        *v = u(-2.0, 2.0);
    }
    for v in p.power.iter_mut() {
        *v = u(0.5, 1.5);
    }
    let mut cal = [0.0; POWER_WEIGHTS];
    for v in cal.iter_mut() {
        *v = u(0.5, 2.0);
    }
    p.calibration = Some(cal);
    p
}

/// Block `index` of a mixed-condition test stream: forward SNR in {-1, 0, 2} dB,
/// feedback noiseless or 10 dB (always noisy for learned knee points).
pub fn mixed_block(spec: &ModelSpec, seed: u64, index: u64) -> BlockNoise {
    let draws = UnitDraws::draw(RngStream::new(seed, index), spec.block_len);
    let snr_f = [-1.0, 0.0, 2.0][(index % 3) as usize];
    let noisy_fb = spec.knee == KneeMode::LearnedVarying || index % 2 == 1;
    let sigma_fb = if noisy_fb { snr_to_sigma(10.0) } else { 0.0 };
    draws.scale(snr_to_sigma(snr_f), sigma_fb)
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative deviations seen for one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub model: String,
    pub blocks: u64,
    pub max_rel_symbols: f64,
    pub max_rel_soft: f64,
    pub max_rel_bce: f64,
}

impl OracleCheck {
    pub fn worst(&self) -> f64 {
        self.max_rel_symbols.max(self.max_rel_soft).max(self.max_rel_bce)
    }
}

/// Compares the production encoder and decoders with [`reference`] on
/// `blocks` random blocks per variant. Each block uses fresh random parameters
/// every 100 blocks.
pub fn oracle_equivalence(blocks: u64, seed: u64) -> Result<Vec<OracleCheck>> {
    variants()
        .into_iter()
        .enumerate()
        .map(|(v, spec)| {
            let block_seed = derive_seed(seed, 100 + v as u64);
            let per: Result<Vec<[f64; 3]>> = (0..blocks)
                .into_par_iter()
                .map(|index| {
                    let params = random_params(spec, derive_seed(block_seed, index / 100));
                    let noise = mixed_block(&spec, block_seed, index);
                    compare_block(&params, &noise)
                })
                .collect();
            let per = per?;
            let fold = |i: usize| per.iter().map(|r| r[i]).fold(0.0, f64::max);
            Ok(OracleCheck {
                model: spec.name(),
                blocks,
                max_rel_symbols: fold(0),
                max_rel_soft: fold(1),
                max_rel_bce: fold(2),
            })
        })
        .collect()
}

/// Relative deviations `[symbols, soft outputs, bce]` on one block.
pub fn compare_block(params: &ParamSet, noise: &BlockNoise) -> Result<[f64; 3]> {
    let cal = params.calibration.expect("random params carry calibration");
    let tx = transmit(params, noise)?;
    let naive_x = reference::encode(noise, params, &cal);
    // Parity symbols are differences of nearly cancelling terms, so each
    // stream is compared normwise: max |a - b| over max |b|.
    let mut sym = 0.0f64;
    for s in 0..3 {
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for t in 0..noise.steps() {
            diff = diff.max((tx.codeword.x[s][t] - naive_x[s][t + 1]).abs());
            scale = scale.max(naive_x[s][t + 1].abs());
        }
        if scale > 0.0 {
            sym = sym.max(diff / scale);
        }
    }
    // The reference decoder runs on the reference encoder's output.
    let one = |x: &[f64], n: &[f64]| -> Vec<f64> {
        std::iter::once(0.0).chain(x[1..].iter().zip(n).map(|(a, b)| a + b)).collect()
    };
    let y = one(&naive_x[0], &noise.n);
    let y1 = one(&naive_x[1], &noise.n1);
    let y2 = one(&naive_x[2], &noise.n2);
    let naive_soft = reference::decode(&y, &y1, &y2, params);
    let soft = tx.trace.soft();
    let mut dec = 0.0f64;
    for t in 0..soft.len() {
        dec = dec.max(rel(soft[t], naive_soft[t + 1]));
    }
    let k = params.spec.block_len;
    let bce = rel(
        bce_loss(soft, &noise.bits[..k]),
        reference::bce(&naive_soft[1..], &noise.bits[..k]),
    );
    Ok([sym, dec, bce])
}

/// Decoder-only comparison on arbitrary received streams (no encoder involved).
pub fn compare_decoder(params: &ParamSet, rx: &Received) -> Result<f64> {
    let (_, trace) = crate::decoder::decode(rx, params)?;
    let pad = |v: &[f64]| -> Vec<f64> { std::iter::once(0.0).chain(v.iter().copied()).collect() };
    let naive = reference::decode(&pad(&rx.y), &pad(&rx.y1), &pad(&rx.y2), params);
    Ok(trace
        .soft()
        .iter()
        .enumerate()
        .map(|(t, &s)| rel(s, naive[t + 1]))
        .fold(0.0, f64::max))
}

/// One gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub model: String,
    pub pair: usize,
    pub mode: NormMode,
    pub max_rel_error: f64,
    pub worst_coordinate: String,
}

/// Blocks per finite-difference batch.
pub const GRADCHECK_BATCH: usize = 4;

/// Learned knee points make the first-order term piecewise linear in the knee
/// parameters. A central difference that straddles a kink measures nothing,
/// so batches with a shifted phase-1 noise this close to zero are redrawn.
pub const KINK_MARGIN: f64 = 10.0 * FD_STEP;

/// Smallest distance of any shifted phase-1 noise in `blocks` from the kink
/// (infinite for fixed knees, whose kink does not move with the parameters).
pub fn knee_margin(params: &ParamSet, blocks: &[BlockNoise]) -> f64 {
    if params.spec.knee != KneeMode::LearnedVarying {
        return f64::INFINITY;
    }
    let mut margin = f64::INFINITY;
    for b in blocks {
        for t in 0..b.steps() {
            let eps = b.eps(t);
            let shifted = if b.bits[t] == 0 { eps + params.knee[0] } else { eps - params.knee[1] };
            margin = margin.min(shifted.abs());
        }
    }
    margin
}

/// Finite-difference check of every variant on `pairs` random
/// (parameters, batch) pairs, with batch statistics and frozen calibration.
pub fn gradient_suite(pairs: usize, seed: u64) -> Result<Vec<GradientCheck>> {
    let mut out = Vec::new();
    for (v, spec) in variants().into_iter().enumerate() {
        for pair in 0..pairs {
            let pair_seed = derive_seed(seed, 1000 * v as u64 + pair as u64);
            let params = random_params(spec, pair_seed);
            let batch = |first: u64| -> Vec<BlockNoise> {
                (first..first + GRADCHECK_BATCH as u64)
                    .map(|i| mixed_block(&spec, pair_seed, i))
                    .collect()
            };
            let mut first = 0;
            let mut blocks = batch(first);
            while knee_margin(&params, &blocks) < KINK_MARGIN {
                first += GRADCHECK_BATCH as u64;
                blocks = batch(first);
            }
            for mode in [NormMode::Batch, NormMode::Frozen] {
                let report = check_gradient(&params, &blocks, mode, FD_STEP)?;
                let worst = report.worst().map(|c| c.name.clone()).unwrap_or_default();
                out.push(GradientCheck {
                    model: spec.name(),
                    pair,
                    mode,
                    max_rel_error: report.max_rel_error(),
                    worst_coordinate: worst,
                });
            }
        }
    }
    Ok(out)
}

/// Encoder-only helper for tests: normalized symbols for one block.
pub fn encode_symbols(params: &ParamSet, noise: &BlockNoise) -> Result<[Vec<f64>; 3]> {
    Ok(encode_block(noise, params)?.x)
}
