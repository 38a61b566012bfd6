//! Single-stage (dec 2/3/4) and two-stage (dec 4) decoders.
//!
//! All decoders see three received streams of `K + 1` samples: the systematic
//! stream `y` and the parity streams `y1`, `y2`. Parity sums past the padded
//! step are taken as zero.

use std::io::Write;

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// atanh inputs are clamped to `[-ATANH_CLAMP, ATANH_CLAMP]`.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-12;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Hard decision: `1` iff `soft >= 0.5`.
#[inline]
pub fn hard_decision(soft: f64) -> u8 {
    u8::from(soft >= 0.5)
}

#[inline]
pub fn clamped_atanh(x: f64) -> f64 {
    x.clamp(-ATANH_CLAMP, ATANH_CLAMP).atanh()
}

/// Received systematic and parity streams of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub y: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

impl Received {
    pub fn new(y: Vec<f64>, y1: Vec<f64>, y2: Vec<f64>) -> Self {
        Received { y, y1, y2 }
    }

    /// Adds forward noise to transmitted symbols.
    pub fn through_channel(x: &[Vec<f64>; 3], n: &[f64], n1: &[f64], n2: &[f64]) -> Self {
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u + v).collect();
        Received {
            y: add(&x[0], n),
            y1: add(&x[1], n1),
            y2: add(&x[2], n2),
        }
    }

    pub fn zeros(steps: usize) -> Self {
        Received {
            y: vec![0.0; steps],
            y1: vec![0.0; steps],
            y2: vec![0.0; steps],
        }
    }

    pub fn check(&self, block_len: usize) -> Result<()> {
        let steps = block_len + 1;
        for (what, v) in [
            ("systematic stream", &self.y),
            ("parity stream 1", &self.y1),
            ("parity stream 2", &self.y2),
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

    #[inline]
    pub fn parity_diff(&self, t: usize) -> f64 {
        self.y1[t] - self.y2[t]
    }

    /// `y1[t] + y2[t]`, zero beyond the padded step.
    #[inline]
    pub fn parity_sum(&self, t: usize) -> f64 {
        if t < self.y1.len() {
            self.y1[t] + self.y2[t]
        } else {
            0.0
        }
    }
}

/// Branch activations and soft outputs of a single-stage decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleStageTrace {
    /// `o[t][j]`, `K` rows of `N_l` branches.
    pub o: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub soft: Vec<f64>,
}

/// Inputs of branch `j` at step `t`: `[y, -(y1-y2), -S(t+1), ..., -S(t+lookahead)]`.
#[inline]
pub(crate) fn single_stage_features(rx: &Received, t: usize, lookahead: usize, out: &mut [f64]) {
    out[0] = rx.y[t];
    out[1] = -rx.parity_diff(t);
    for a in 1..=lookahead {
        out[1 + a] = -rx.parity_sum(t + a);
    }
}

/// Single-stage decoding with the branch width implied by the model's decoder kind.
pub fn dec_single(rx: &Received, params: &ParamSet) -> Result<(Vec<u8>, SingleStageTrace)> {
    let spec = params.spec;
    if !spec.decoder.is_single_stage() {
        return Err(Error::UnsupportedModel(format!(
            "{} is not a single-stage decoder",
            spec.decoder.label()
        )));
    }
    rx.check(spec.block_len)?;
    let lookahead = spec.decoder.lookahead();
    let width = params.branch_width();
    let branches = params.l.len();
    let mut feats = vec![0.0; width - 1];
    let mut o = Vec::with_capacity(spec.block_len);
    let mut logits = Vec::with_capacity(spec.block_len);
    for t in 0..spec.block_len {
        single_stage_features(rx, t, lookahead, &mut feats);
        let row: Vec<f64> = (0..branches)
            .map(|j| {
                let d = params.d_row(j);
                let pre: f64 = feats.iter().zip(d).map(|(f, w)| f * w).sum::<f64>() + d[width - 1];
                pre.tanh()
            })
            .collect();
        logits.push(row.iter().zip(&params.l).map(|(o, l)| o * l).sum());
        o.push(row);
    }
    let soft: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let bits = soft.iter().map(|&d| hard_decision(d)).collect();
    Ok((bits, SingleStageTrace { o, logits, soft }))
}

/// First stage: `g[t][p] = tanh(alpha[p][0] y_t - alpha[p][1] (y1_t - y2_t))`.
pub fn stage1(rx: &Received, params: &ParamSet, block_len: usize) -> Vec<[f64; 3]> {
    (0..block_len)
        .map(|t| {
            let y = rx.y[t];
            let diff = rx.parity_diff(t);
            std::array::from_fn(|p| {
                let a = params.alpha[p];
                (a[0] * y - a[1] * diff).tanh()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// Rows of `beta`/`gamma`/`r` owned by this direction.
    pub fn offset(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 3,
        }
    }
}

/// Forward (`q = 1..3`) or backward (`q = 4..6`) states from first-stage
/// outputs and the next three parity sums.
pub fn directional_states(
    g: &[[f64; 3]],
    rx: &Received,
    params: &ParamSet,
    direction: Direction,
) -> Vec<[f64; 3]> {
    let off = direction.offset();
    g.iter()
        .enumerate()
        .map(|(t, gt)| {
            let s = [rx.parity_sum(t + 1), rx.parity_sum(t + 2), rx.parity_sum(t + 3)];
            std::array::from_fn(|q| {
                let b = &params.beta[off + q];
                let pre = b[0] * gt[0] + b[1] * gt[1] + b[2] * gt[2]
                    - b[3] * s[0]
                    - b[4] * s[1]
                    - b[5] * s[2];
                pre.tanh()
            })
        })
        .collect()
}

/// Belief adjustments `delta[t]` and updated beliefs for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefPass {
    pub delta: Vec<[f64; 3]>,
    pub updated: Vec<[f64; 3]>,
}

/// Forward: `fw'[t] = tanh(atanh(fw[t]) + delta[t-1])`; backward:
/// `bk'[t] = tanh(atanh(bk[t]) + delta[t+1])`. The first forward and last
/// backward beliefs have no neighbour and pass through unchanged.
pub fn belief_pass(states: &[[f64; 3]], params: &ParamSet, direction: Direction) -> BeliefPass {
    let off = direction.offset();
    let delta: Vec<[f64; 3]> = states
        .iter()
        .map(|s| {
            std::array::from_fn(|q| {
                let c = &params.gamma[off + q];
                c[0] * s[0] + c[1] * s[1] + c[2] * s[2]
            })
        })
        .collect();
    let len = states.len();
    let updated = (0..len)
        .map(|t| {
            let source = match direction {
                Direction::Forward => t.checked_sub(1),
                Direction::Backward => (t + 1 < len).then_some(t + 1),
            };
            match source {
                None => states[t],
                Some(u) => std::array::from_fn(|q| (clamped_atanh(states[t][q]) + delta[u][q]).tanh()),
            }
        })
        .collect();
    BeliefPass { delta, updated }
}

/// Intermediate values of the two-stage decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageTrace {
    pub g: Vec<[f64; 3]>,
    pub fw: Vec<[f64; 3]>,
    pub bk: Vec<[f64; 3]>,
    pub forward: BeliefPass,
    pub backward: BeliefPass,
    pub logits: Vec<f64>,
    pub soft: Vec<f64>,
}

/// Two-stage dec 4: first-order stage, bidirectional belief exchange, linear readout.
pub fn dec4_two_stage(rx: &Received, params: &ParamSet) -> Result<(Vec<u8>, TwoStageTrace)> {
    let spec = params.spec;
    if spec.decoder.is_single_stage() {
        return Err(Error::UnsupportedModel(format!(
            "{} is not the two-stage decoder",
            spec.decoder.label()
        )));
    }
    rx.check(spec.block_len)?;
    let g = stage1(rx, params, spec.block_len);
    let fw = directional_states(&g, rx, params, Direction::Forward);
    let bk = directional_states(&g, rx, params, Direction::Backward);
    let forward = belief_pass(&fw, params, Direction::Forward);
    let backward = belief_pass(&bk, params, Direction::Backward);
    let r = &params.r;
    let logits: Vec<f64> = forward
        .updated
        .iter()
        .zip(&backward.updated)
        .map(|(f, b)| {
            r[0] * f[0] + r[1] * f[1] + r[2] * f[2] + r[3] * b[0] + r[4] * b[1] + r[5] * b[2]
        })
        .collect();
    let soft: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let bits = soft.iter().map(|&d| hard_decision(d)).collect();
    Ok((
        bits,
        TwoStageTrace {
            g,
            fw,
            bk,
            forward,
            backward,
            logits,
            soft,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderTrace {
    Single(SingleStageTrace),
    TwoStage(TwoStageTrace),
}

impl DecoderTrace {
    pub fn soft(&self) -> &[f64] {
        match self {
            DecoderTrace::Single(t) => &t.soft,
            DecoderTrace::TwoStage(t) => &t.soft,
        }
    }

    pub fn logits(&self) -> &[f64] {
        match self {
            DecoderTrace::Single(t) => &t.logits,
            DecoderTrace::TwoStage(t) => &t.logits,
        }
    }

    /// Writes one row per decoded step (1-based), hidden values then `D,bhat`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match self {
            DecoderTrace::Single(tr) => {
                let branches = tr.o.first().map_or(0, Vec::len);
                let cols: Vec<String> = (1..=branches).map(|j| format!("o{j}")).collect();
                writeln!(out, "step,{},D,bhat", cols.join(","))?;
                for (t, row) in tr.o.iter().enumerate() {
                    let vals: Vec<String> = row.iter().map(f64::to_string).collect();
                    let d = tr.soft[t];
                    writeln!(out, "{},{},{},{}", t + 1, vals.join(","), d, hard_decision(d))?;
                }
            }
            DecoderTrace::TwoStage(tr) => {
                writeln!(
                    out,
                    "step,g1,g2,g3,fw1,fw2,fw3,bk4,bk5,bk6,dfw1,dfw2,dfw3,dbk4,dbk5,dbk6,\
                     fw1u,fw2u,fw3u,bk4u,bk5u,bk6u,D,bhat"
                )?;
                for t in 0..tr.soft.len() {
                    let mut vals = Vec::with_capacity(21);
                    for arr in [
                        &tr.g[t],
                        &tr.fw[t],
                        &tr.bk[t],
                        &tr.forward.delta[t],
                        &tr.backward.delta[t],
                        &tr.forward.updated[t],
                        &tr.backward.updated[t],
                    ] {
                        vals.extend(arr.iter().map(f64::to_string));
                    }
                    let d = tr.soft[t];
                    writeln!(out, "{},{},{},{}", t + 1, vals.join(","), d, hard_decision(d))?;
                }
            }
        }
        Ok(())
    }
}

/// Runs whichever decoder `params.spec` selects.
pub fn decode(rx: &Received, params: &ParamSet) -> Result<(Vec<u8>, DecoderTrace)> {
    if params.spec.decoder.is_single_stage() {
        dec_single(rx, params).map(|(b, t)| (b, DecoderTrace::Single(t)))
    } else {
        dec4_two_stage(rx, params).map(|(b, t)| (b, DecoderTrace::TwoStage(t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{DecoderKind, ModelSpec};

    fn small(decoder: DecoderKind) -> ParamSet {
        let spec = ModelSpec::enc3(decoder).with_block_len(6).unwrap();
        let mut p = ParamSet::zeros(spec);
        for (i, v) in p.d.iter_mut().enumerate() {
            *v = 0.1 * (i as f64 % 7.0) - 0.3;
        }
        for (i, v) in p.l.iter_mut().enumerate() {
            *v = 0.5 + 0.1 * i as f64;
        }
        for p_ in 0..3 {
            p.alpha[p_] = [1.0 + p_ as f64 * 0.2, 0.8];
        }
        for q in 0..6 {
            for c in 0..6 {
                p.beta[q][c] = 0.3 - 0.05 * (q + c) as f64;
            }
            for c in 0..3 {
                p.gamma[q][c] = 0.2 * c as f64 - 0.1 * q as f64;
            }
            p.r[q] = 1.0 - 0.3 * q as f64;
        }
        p
    }

    #[test]
    fn zero_input_single_stage_is_constant() {
        let p = small(DecoderKind::Dec3Single);
        let (_, tr) = dec_single(&Received::zeros(7), &p).unwrap();
        let width = p.branch_width();
        let expected: f64 = (0..p.l.len())
            .map(|j| p.l[j] * p.d_row(j)[width - 1].tanh())
            .sum();
        for &z in &tr.logits {
            assert!((z - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn stage1_examples() {
        let p = small(DecoderKind::Dec4TwoStage);
        let g = stage1(&Received::zeros(7), &p, 6);
        assert!(g.iter().flatten().all(|&v| v == 0.0));
        let mut rx = Received::zeros(7);
        rx.y[2] = 1.0;
        rx.y1[2] = 0.4;
        rx.y2[2] = 0.4;
        let g = stage1(&rx, &p, 6);
        for q in 0..3 {
            assert_eq!(g[2][q], p.alpha[q][0].tanh());
        }
    }

    #[test]
    fn zero_states_without_input() {
        let p = small(DecoderKind::Dec4TwoStage);
        let rx = Received::zeros(7);
        let g = stage1(&rx, &p, 6);
        let fw = directional_states(&g, &rx, &p, Direction::Forward);
        assert!(fw.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn last_step_ignores_missing_parity_sums() {
        let p = small(DecoderKind::Dec4TwoStage);
        let rx = Received::zeros(7);
        let g = vec![[0.2, -0.1, 0.4]; 6];
        let fw = directional_states(&g, &rx, &p, Direction::Forward);
        // t = 5 (i = K) reads S(6) = padded step, S(7), S(8) = 0
        let mut rx2 = rx.clone();
        rx2.y1[6] = 0.7;
        let fw2 = directional_states(&g, &rx2, &p, Direction::Forward);
        assert_ne!(fw[5], fw2[5]);
        assert_eq!(fw[..3], fw2[..3]);
    }

    #[test]
    fn belief_pass_examples() {
        let mut p = small(DecoderKind::Dec4TwoStage);
        p.gamma = [[0.0; 3]; 6];
        let states = vec![[0.3, -0.2, 0.9], [0.1, 0.5, -0.4], [0.0, 0.2, 0.6]];
        let pass = belief_pass(&states, &p, Direction::Forward);
        for (u, s) in pass.updated.iter().zip(&states) {
            for q in 0..3 {
                assert!((u[q] - s[q]).abs() < 1e-15);
            }
        }
        // fw = 0 with a delta of 1.2 coming from the previous step
        p.gamma[0] = [1.2 / 0.5, 0.0, 0.0];
        let states = vec![[0.5, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let pass = belief_pass(&states, &p, Direction::Forward);
        assert!((pass.updated[1][0] - 0.833_654_607_012_155_1).abs() < 1e-15);
        assert_eq!(pass.updated[0], states[0]);
        let back = belief_pass(&states, &p, Direction::Backward);
        assert_eq!(back.updated[1], states[1]);
    }

    #[test]
    fn zero_beliefs_decode_to_one() {
        let mut p = small(DecoderKind::Dec4TwoStage);
        p.r = [0.0; 6];
        let (bits, tr) = dec4_two_stage(&Received::zeros(7), &p).unwrap();
        assert!(tr.soft.iter().all(|&d| d == 0.5));
        assert!(bits.iter().all(|&b| b == 1));
    }

    #[test]
    fn length_mismatch_is_reported() {
        let p = small(DecoderKind::Dec2Single);
        assert!(dec_single(&Received::zeros(5), &p).is_err());
    }

    #[test]
    fn hard_decision_threshold() {
        assert_eq!(hard_decision(0.5), 1);
        assert_eq!(hard_decision(0.499_999_999), 0);
    }
}
