//! Batch BCE loss and its exact gradient by hand-written reverse mode.
//!
//! The forward pass reuses the encoder/decoder code paths and keeps their
//! traces; the backward pass walks them in reverse. Indicator functions and
//! the hard-set `h4 = 1` / `h5 = -1` branches do not depend on parameters and
//! contribute no gradient.

use rayon::prelude::*;

use crate::channel::BlockNoise;
use crate::decoder::{
    dec4_two_stage, dec_single, single_stage_features, Received, SingleStageTrace, TwoStageTrace,
    ATANH_CLAMP,
};
use crate::encoder::{encode_raw, PowerAccumulator, PowerNorm, RawCodeword};
use crate::error::{Error, Result};
use crate::params::{power_group, power_group_sizes, ParamSet, POWER_WEIGHTS, STREAMS};
use crate::types::{EncoderOrder, KneeMode};

/// Logit bound equivalent to clamping soft outputs to `[1e-12, 1 - 1e-12]`.
pub fn logit_clamp() -> f64 {
    ((1.0 - 1e-12) / 1e-12f64).ln()
}

/// BCE of soft outputs against bits, averaged over positions, with `D`
/// clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(soft: &[f64], bits: &[u8]) -> f64 {
    let n = soft.len().min(bits.len());
    let total: f64 = soft
        .iter()
        .zip(bits)
        .map(|(&d, &b)| {
            let d = d.clamp(1e-12, 1.0 - 1e-12);
            if b == 1 {
                -d.ln()
            } else {
                -(1.0 - d).ln()
            }
        })
        .sum();
    total / n as f64
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// BCE of one logit and its derivative with respect to the logit.
#[inline]
pub fn bce_from_logit(z: f64, bit: u8) -> (f64, f64) {
    let bound = logit_clamp();
    let zc = z.clamp(-bound, bound);
    let b = f64::from(bit);
    // softplus(z) - z = softplus(-z), without the cancellation
    let loss = if bit == 0 { softplus(zc) } else { softplus(-zc) };
    let grad = if z.abs() < bound {
        1.0 / (1.0 + (-z).exp()) - b
    } else {
        0.0
    };
    (loss, grad)
}

/// How the per-(group, stream) RMS used by normalization is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// RMS of the current batch, differentiated through.
    Batch,
    /// Frozen calibration constants stored in the parameters.
    Frozen,
}

/// Mean BCE over a batch, its gradient, and the hard-decision error count.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: ParamSet,
    pub bit_errors: usize,
    pub bits: usize,
}

struct BlockPass {
    loss: f64,
    errors: usize,
    grad: ParamSet,
    /// dL/dc for the two parity streams, direct part only.
    dc: [Vec<f64>; 2],
    /// dL/drms and dL/dz contributions.
    drms: [f64; POWER_WEIGHTS],
    dz: f64,
}

fn batch_rms(raws: &[RawCodeword], block_len: usize) -> [f64; POWER_WEIGHTS] {
    let mut acc = PowerAccumulator::default();
    for raw in raws {
        acc.add(raw, block_len);
    }
    acc.rms()
}

fn norm_for(params: &ParamSet, raws: &[RawCodeword], mode: NormMode) -> Result<PowerNorm> {
    let rms = match mode {
        NormMode::Batch => batch_rms(raws, params.spec.block_len),
        NormMode::Frozen => params.calibration.ok_or(Error::MissingCalibration)?,
    };
    PowerNorm::new(params.power, rms, params.spec.block_len)
}

/// Mean BCE over the batch without gradients.
pub fn batch_loss(params: &ParamSet, blocks: &[BlockNoise], mode: NormMode) -> Result<f64> {
    let raws: Vec<RawCodeword> = blocks.iter().map(|b| encode_raw(b, params)).collect();
    let norm = norm_for(params, &raws, mode)?;
    let k = params.spec.block_len;
    let mut total = 0.0;
    for (noise, raw) in blocks.iter().zip(&raws) {
        let x = norm.apply(raw);
        let rx = Received::through_channel(&x, &noise.n, &noise.n1, &noise.n2);
        let logits = decoder_logits(&rx, params)?;
        total += logits[..k]
            .iter()
            .zip(&noise.bits)
            .map(|(&z, &b)| bce_from_logit(z, b).0)
            .sum::<f64>()
            / k as f64;
    }
    Ok(total / blocks.len() as f64)
}

fn decoder_logits(rx: &Received, params: &ParamSet) -> Result<Vec<f64>> {
    Ok(if params.spec.decoder.is_single_stage() {
        dec_single(rx, params)?.1.logits
    } else {
        dec4_two_stage(rx, params)?.1.logits
    })
}

/// Mean BCE over the batch and its gradient with respect to every scalar.
pub fn loss_and_grad(params: &ParamSet, blocks: &[BlockNoise], mode: NormMode) -> Result<LossAndGrad> {
    if blocks.is_empty() {
        return Err(Error::InvalidConfig("empty training batch".into()));
    }
    let k = params.spec.block_len;
    let batch = blocks.len() as f64;
    let raws: Vec<RawCodeword> = blocks.par_iter().map(|b| encode_raw(b, params)).collect();
    let norm = norm_for(params, &raws, mode)?;

    let passes: Vec<BlockPass> = blocks
        .par_iter()
        .zip(raws.par_iter())
        .map(|(noise, raw)| block_pass(params, &norm, noise, raw, batch))
        .collect::<Result<_>>()?;

    // Fixed-order reduction keeps results independent of thread scheduling.
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    let mut errors = 0;
    let mut drms = [0.0; POWER_WEIGHTS];
    let mut dz = 0.0;
    for p in &passes {
        grad.add_scaled(&p.grad, 1.0);
        loss += p.loss;
        errors += p.errors;
        dz += p.dz;
        for i in 0..POWER_WEIGHTS {
            drms[i] += p.drms[i];
        }
    }
    let sizes = power_group_sizes(k);
    let total_uses = (3 * (k + 1)) as f64;
    for g in 0..sizes.len() {
        for s in 0..STREAMS {
            let idx = g * STREAMS + s;
            grad.power[idx] += dz * sizes[g] as f64 * params.power[idx] / (total_uses * norm.z);
        }
    }

    // Batch statistics: rms^2 = sum c^2 / M + floor.
    let counts: [f64; POWER_WEIGHTS] =
        std::array::from_fn(|idx| sizes[idx / STREAMS] as f64 * batch);
    let encoder_grads: Vec<ParamSet> = passes
        .into_par_iter()
        .zip(raws.par_iter())
        .zip(blocks.par_iter())
        .map(|((mut p, raw), noise)| {
            if mode == NormMode::Batch {
                for (si, s) in [1usize, 2].into_iter().enumerate() {
                    for t in 0..=k {
                        let idx = power_group(t, k) * STREAMS + s;
                        p.dc[si][t] += drms[idx] * raw.symbols[s][t] / (counts[idx] * norm.rms[idx]);
                    }
                }
            }
            let mut g = params.zeros_like();
            encoder_backward(params, noise, raw, &p.dc, &mut g);
            g
        })
        .collect();
    for g in &encoder_grads {
        grad.add_scaled(g, 1.0);
    }

    let out = LossAndGrad {
        loss: loss / batch,
        grad,
        bit_errors: errors,
        bits: blocks.len() * k,
    };
    check_finite(params, &out)?;
    Ok(out)
}

fn check_finite(params: &ParamSet, out: &LossAndGrad) -> Result<()> {
    for (index, slot) in params.layout().slots.iter().enumerate() {
        if !out.grad.get(*slot).is_finite() || !out.loss.is_finite() {
            return Err(Error::NonFiniteGradient {
                index,
                name: slot.name(),
                loss: out.loss,
            });
        }
    }
    Ok(())
}

fn block_pass(
    params: &ParamSet,
    norm: &PowerNorm,
    noise: &BlockNoise,
    raw: &RawCodeword,
    batch: f64,
) -> Result<BlockPass> {
    let k = params.spec.block_len;
    let x = norm.apply(raw);
    let rx = Received::through_channel(&x, &noise.n, &noise.n1, &noise.n2);
    let mut grad = params.zeros_like();
    let mut gy = [vec![0.0; k + 1], vec![0.0; k + 1], vec![0.0; k + 1]];

    let scale = 1.0 / (k as f64 * batch);
    let mut dlogits = vec![0.0; k];
    let mut loss = 0.0;
    let mut errors = 0;
    let mut accumulate = |logits: &[f64]| {
        for t in 0..k {
            let (l, g) = bce_from_logit(logits[t], noise.bits[t]);
            loss += l;
            dlogits[t] = g * scale;
            if u8::from(logits[t] >= 0.0) != noise.bits[t] {
                errors += 1;
            }
        }
    };
    if params.spec.decoder.is_single_stage() {
        let (_, tr) = dec_single(&rx, params)?;
        accumulate(&tr.logits);
        single_stage_backward(params, &rx, &tr, &dlogits, &mut grad, &mut gy);
    } else {
        let (_, tr) = dec4_two_stage(&rx, params)?;
        accumulate(&tr.logits);
        two_stage_backward(params, &rx, &tr, &dlogits, &mut grad, &mut gy);
    }

    // x = w c / (rms z); y = x + n so dL/dx = dL/dy.
    let mut drms = [0.0; POWER_WEIGHTS];
    let mut dz = 0.0;
    let mut dc = [vec![0.0; k + 1], vec![0.0; k + 1]];
    for s in 0..STREAMS {
        for t in 0..=k {
            let idx = power_group(t, k) * STREAMS + s;
            let gx = gy[s][t];
            let c = raw.symbols[s][t];
            let xv = x[s][t];
            let denom = norm.rms[idx] * norm.z;
            grad.power[idx] += gx * c / denom;
            dz -= gx * xv / norm.z;
            drms[idx] -= gx * xv / norm.rms[idx];
            if s > 0 {
                dc[s - 1][t] = gx * norm.weights[idx] / denom;
            }
        }
    }
    Ok(BlockPass {
        loss: loss / k as f64,
        errors,
        grad,
        dc,
        drms,
        dz,
    })
}

fn scatter_parity_sum(gy: &mut [Vec<f64>; 3], t: usize, g: f64) {
    if t < gy[1].len() {
        gy[1][t] += g;
        gy[2][t] += g;
    }
}

fn single_stage_backward(
    params: &ParamSet,
    rx: &Received,
    tr: &SingleStageTrace,
    dlogits: &[f64],
    grad: &mut ParamSet,
    gy: &mut [Vec<f64>; 3],
) {
    let lookahead = params.spec.decoder.lookahead();
    let width = params.branch_width();
    let inputs = width - 1;
    let mut feats = vec![0.0; inputs];
    let mut dfeat = vec![0.0; inputs];
    for (t, &dz) in dlogits.iter().enumerate() {
        if dz == 0.0 {
            continue;
        }
        single_stage_features(rx, t, lookahead, &mut feats);
        dfeat.iter_mut().for_each(|v| *v = 0.0);
        for (j, &o) in tr.o[t].iter().enumerate() {
            grad.l[j] += dz * o;
            let da = dz * params.l[j] * (1.0 - o * o);
            let row = j * width;
            for a in 0..inputs {
                grad.d[row + a] += da * feats[a];
                dfeat[a] += da * params.d[row + a];
            }
            grad.d[row + inputs] += da;
        }
        gy[0][t] += dfeat[0];
        gy[1][t] -= dfeat[1];
        gy[2][t] += dfeat[1];
        for a in 1..=lookahead {
            scatter_parity_sum(gy, t + a, -dfeat[1 + a]);
        }
    }
}

#[inline]
fn atanh_grad(x: f64) -> f64 {
    if x.abs() < ATANH_CLAMP {
        1.0 / (1.0 - x * x)
    } else {
        0.0
    }
}

fn two_stage_backward(
    params: &ParamSet,
    rx: &Received,
    tr: &TwoStageTrace,
    dlogits: &[f64],
    grad: &mut ParamSet,
    gy: &mut [Vec<f64>; 3],
) {
    let k = dlogits.len();
    // dL/d(raw state) for fw (q = 0..3) and bk (q = 3..6), and dL/d(delta).
    let mut dstate = vec![[0.0f64; 6]; k];
    let mut ddelta = vec![[0.0f64; 6]; k];
    for t in 0..k {
        let dz = dlogits[t];
        let fwu = &tr.forward.updated[t];
        let bku = &tr.backward.updated[t];
        for q in 0..3 {
            grad.r[q] += dz * fwu[q];
            grad.r[3 + q] += dz * bku[q];
            let dfu = dz * params.r[q];
            let dbu = dz * params.r[3 + q];
            if t == 0 {
                dstate[t][q] += dfu;
            } else {
                let inner = dfu * (1.0 - fwu[q] * fwu[q]);
                ddelta[t - 1][q] += inner;
                dstate[t][q] += inner * atanh_grad(tr.fw[t][q]);
            }
            if t + 1 == k {
                dstate[t][3 + q] += dbu;
            } else {
                let inner = dbu * (1.0 - bku[q] * bku[q]);
                ddelta[t + 1][3 + q] += inner;
                dstate[t][3 + q] += inner * atanh_grad(tr.bk[t][q]);
            }
        }
    }
    for t in 0..k {
        for q in 0..3 {
            let df = ddelta[t][q];
            let db = ddelta[t][3 + q];
            for u in 0..3 {
                grad.gamma[q][u] += df * tr.fw[t][u];
                dstate[t][u] += df * params.gamma[q][u];
                grad.gamma[3 + q][u] += db * tr.bk[t][u];
                dstate[t][3 + u] += db * params.gamma[3 + q][u];
            }
        }
    }
    for t in 0..k {
        let s = [rx.parity_sum(t + 1), rx.parity_sum(t + 2), rx.parity_sum(t + 3)];
        let g = &tr.g[t];
        let mut dg = [0.0f64; 3];
        let mut ds = [0.0f64; 3];
        for q in 0..6 {
            let v = if q < 3 { tr.fw[t][q] } else { tr.bk[t][q - 3] };
            let da = dstate[t][q] * (1.0 - v * v);
            if da == 0.0 {
                continue;
            }
            let b = &params.beta[q];
            for p in 0..3 {
                grad.beta[q][p] += da * g[p];
                dg[p] += da * b[p];
            }
            for a in 0..3 {
                grad.beta[q][3 + a] -= da * s[a];
                ds[a] -= da * b[3 + a];
            }
        }
        for a in 0..3 {
            scatter_parity_sum(gy, t + 1 + a, ds[a]);
        }
        let y = rx.y[t];
        let diff = rx.parity_diff(t);
        let mut ddiff = 0.0;
        for p in 0..3 {
            let db = dg[p] * (1.0 - g[p] * g[p]);
            grad.alpha[p][0] += db * y;
            grad.alpha[p][1] -= db * diff;
            gy[0][t] += db * params.alpha[p][0];
            ddiff -= db * params.alpha[p][1];
        }
        gy[1][t] += ddiff;
        gy[2][t] -= ddiff;
    }
}

fn encoder_backward(
    params: &ParamSet,
    noise: &BlockNoise,
    raw: &RawCodeword,
    dc: &[Vec<f64>; 2],
    grad: &mut ParamSet,
) {
    let steps = noise.steps();
    let third = params.spec.encoder_order == EncoderOrder::Third;
    let entangled = third && params.spec.entanglement;
    let [e1, e2, e3] = params.e;
    let [_, _, m3, m4, _] = params.m;
    let mut dh = vec![[0.0f64; 4]; steps];
    for t in 0..steps {
        let (g1, g2) = (dc[0][t], dc[1][t]);
        let st = &raw.states[t];
        let fo = raw.first_order[t];
        grad.e[0] += (g1 - g2) * fo;
        grad.e[1] -= (g1 + g2) * (st.h4 + st.h5);
        dh[t][0] -= e2 * (g1 + g2);
        dh[t][1] -= e2 * (g1 + g2);
        if third {
            grad.e[2] -= (g1 + g2) * (st.h6 - st.h7);
            dh[t][2] -= e3 * (g1 + g2);
            dh[t][3] += e3 * (g1 + g2);
        }
        if params.spec.knee == KneeMode::LearnedVarying && fo != 0.0 {
            let dfo = e1 * (g1 - g2);
            if noise.bits[t] == 0 {
                grad.knee[0] += dfo;
            } else {
                grad.knee[1] -= dfo;
            }
        }
    }
    for t in (1..steps).rev() {
        let st = raw.states[t];
        let prev = raw.states[t - 1];
        let (eps, eps1, eps2) = (noise.eps(t - 1), noise.eps1(t - 1), noise.eps2(t - 1));
        if noise.bits[t - 1] == 0 {
            let da = dh[t][0] * (1.0 - st.h4 * st.h4);
            grad.k[0] -= da * eps;
            grad.k[1] += da * eps1;
            grad.k[2] -= da * eps2;
            grad.k[3] += da;
        } else {
            let da = dh[t][1] * (1.0 - st.h5 * st.h5);
            grad.k[0] -= da * eps;
            grad.k[1] += da * eps1;
            grad.k[2] -= da * eps2;
            grad.k[3] -= da;
        }
        if third {
            let da6 = dh[t][2] * (1.0 - st.h6 * st.h6);
            grad.m[0] += da6 * eps1;
            grad.m[1] += da6 * eps2;
            grad.m[2] += da6 * prev.h4;
            grad.m[4] += da6;
            dh[t - 1][0] += da6 * m3;
            let da7 = dh[t][3] * (1.0 - st.h7 * st.h7);
            grad.m[0] -= da7 * eps1;
            grad.m[1] -= da7 * eps2;
            grad.m[2] -= da7 * prev.h5;
            grad.m[4] += da7;
            dh[t - 1][1] -= da7 * m3;
            if entangled {
                grad.m[3] += da6 * prev.h7 + da7 * prev.h6;
                dh[t - 1][3] += da6 * m4;
                dh[t - 1][2] += da7 * m4;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        let bits = [1u8, 0, 1, 1, 0];
        let exact: Vec<f64> = bits.iter().map(|&b| f64::from(b)).collect();
        assert!(bce_loss(&exact, &bits) < 1e-11);
        let half = vec![0.5; 5];
        assert!((bce_loss(&half, &bits) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logit_form_matches_probability_form() {
        for &z in &[-30.0f64, -5.0, -0.3, 0.0, 0.7, 4.0, 26.0, 40.0] {
            let zc = z.clamp(-logit_clamp(), logit_clamp());
            for bit in [0u8, 1] {
                let (l, _) = bce_from_logit(z, bit);
                // -ln(1 - d) = ln(1 + e^z) and -ln d = ln(1 + e^-z)
                let s = if bit == 0 { zc } else { -zc };
                let exact = s.max(0.0) + (-s.abs()).exp().ln_1p();
                assert!((l - exact).abs() <= 1e-15 * exact.max(1.0), "z={z} b={bit}");
                if z.abs() <= 5.0 {
                    let d = 1.0 / (1.0 + (-z).exp());
                    let reference = bce_loss(&[d], &[bit]);
                    assert!((l - reference).abs() < 1e-12 * reference.max(1.0), "z={z} b={bit}");
                }
            }
        }
    }

    #[test]
    fn logit_gradient_matches_difference() {
        for &z in &[-3.0, -0.2, 0.0, 1.5] {
            for bit in [0u8, 1] {
                let h = 1e-6;
                let fd = (bce_from_logit(z + h, bit).0 - bce_from_logit(z - h, bit).0) / (2.0 * h);
                assert!((fd - bce_from_logit(z, bit).1).abs() < 1e-8);
            }
        }
    }
}
