//! Naive re-implementations of the encoder and decoders, written directly from
//! the closed-form expressions with 1-based step indices and no shared helpers.
//! They exist only to cross-check the production code paths.

use crate::channel::BlockNoise;
use crate::params::ParamSet;
use crate::types::{DecoderKind, EncoderOrder, KneeMode};

fn ind(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Transmitted symbols `(x, x1, x2)` for steps `1..=K+1`, stored at index `i`
/// (index 0 unused).
pub fn encode(noise: &BlockNoise, params: &ParamSet, calibration: &[f64; 12]) -> [Vec<f64>; 3] {
    let kk = params.spec.block_len;
    let last = kk + 1;
    // 1-based copies; index 0 is a dummy.
    let one = |v: &[f64]| -> Vec<f64> { std::iter::once(0.0).chain(v.iter().copied()).collect() };
    let b: Vec<f64> = std::iter::once(0.0)
        .chain(noise.bits.iter().map(|&x| f64::from(x)))
        .collect();
    let n = one(&noise.n);
    let n1 = one(&noise.n1);
    let n2 = one(&noise.n2);
    let nt = one(&noise.fb);
    let nt1 = one(&noise.fb1);
    let nt2 = one(&noise.fb2);

    let e1 = params.e[0];
    let e2 = params.e[1];
    let e3 = if params.spec.encoder_order == EncoderOrder::Third {
        params.e[2]
    } else {
        0.0
    };
    let (k1, k2, k3, k4) = (params.k[0], params.k[1], params.k[2], params.k[3]);
    let (m1, m2, m3, m5) = (params.m[0], params.m[1], params.m[2], params.m[4]);
    let m4 = params.m[3];

    let mut h4 = vec![0.0; last + 1];
    let mut h5 = vec![0.0; last + 1];
    let mut h6 = vec![0.0; last + 1];
    let mut h7 = vec![0.0; last + 1];
    let mut c = vec![0.0; last + 1];
    let mut c1 = vec![0.0; last + 1];
    let mut c2 = vec![0.0; last + 1];
    for i in 1..=last {
        c[i] = 2.0 * b[i] - 1.0;
        if i == 1 {
            h4[i] = 1.0;
            h5[i] = -1.0;
            h6[i] = 1.0;
            h7[i] = 1.0;
        } else {
            let p = n[i - 1] + nt[i - 1];
            let p1 = n1[i - 1] + nt1[i - 1];
            let p2 = n2[i - 1] + nt2[i - 1];
            if b[i - 1] == 0.0 {
                h5[i] = -1.0;
                h4[i] = (-k1 * p + k2 * p1 - k3 * p2 + k4).tanh();
            } else {
                h4[i] = 1.0;
                h5[i] = (-k1 * p + k2 * p1 - k3 * p2 - k4).tanh();
            }
            if params.spec.encoder_order == EncoderOrder::Third {
                if params.spec.entanglement {
                    h6[i] = (m1 * p1 + m2 * p2 + m3 * h4[i - 1] + m4 * h7[i - 1] + m5).tanh();
                    h7[i] = (-m1 * p1 - m2 * p2 - m3 * h5[i - 1] + m4 * h6[i - 1] + m5).tanh();
                } else {
                    h6[i] = (m1 * p1 + m2 * p2 + m3 * h4[i - 1] + m5).tanh();
                    h7[i] = (-m1 * p1 - m2 * p2 - m3 * h5[i - 1] + m5).tanh();
                }
            }
        }
        let noisy = n[i] + nt[i];
        let first = match params.spec.knee {
            KneeMode::FixedAtZero => noisy * ind(-(2.0 * b[i] - 1.0) * noisy),
            KneeMode::LearnedVarying => {
                if b[i] == 0.0 {
                    let v = noisy + params.knee[0];
                    v * ind(-(2.0 * b[i] - 1.0) * v)
                } else {
                    let v = noisy - params.knee[1];
                    v * ind(-(2.0 * b[i] - 1.0) * v)
                }
            }
        };
        c1[i] = e1 * first - e2 * h4[i] - e2 * h5[i] - e3 * h6[i] + e3 * h7[i];
        c2[i] = -e1 * first - e2 * h4[i] - e2 * h5[i] - e3 * h6[i] + e3 * h7[i];
    }

    // Group of step i: {1}, {2}, {3..K-1}, {K, K+1}; weight index = group*3 + stream.
    let group = |i: usize| -> usize {
        if i == 1 {
            0
        } else if i == 2 {
            1
        } else if i <= kk - 1 {
            2
        } else {
            3
        }
    };
    let w = &params.power;
    let mut weighted_power = 0.0;
    for i in 1..=last {
        for s in 0..3 {
            weighted_power += w[group(i) * 3 + s] * w[group(i) * 3 + s];
        }
    }
    let z = (weighted_power / (3 * last) as f64).sqrt();
    let mut out = [vec![0.0; last + 1], vec![0.0; last + 1], vec![0.0; last + 1]];
    for i in 1..=last {
        let g = group(i);
        out[0][i] = w[g * 3] * c[i] / calibration[g * 3] / z;
        out[1][i] = w[g * 3 + 1] * c1[i] / calibration[g * 3 + 1] / z;
        out[2][i] = w[g * 3 + 2] * c2[i] / calibration[g * 3 + 2] / z;
    }
    out
}

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Soft outputs `D_i` for `i = 1..=K` (index 0 unused). Streams use the same
/// 1-based layout as [`encode`].
pub fn decode(y: &[f64], y1: &[f64], y2: &[f64], params: &ParamSet) -> Vec<f64> {
    let kk = params.spec.block_len;
    // parity sum with zero beyond K+1
    let ps = |i: usize| -> f64 {
        if i <= kk + 1 {
            y1[i] + y2[i]
        } else {
            0.0
        }
    };
    let mut d_out = vec![0.0; kk + 1];
    match params.spec.decoder {
        DecoderKind::Dec2Single | DecoderKind::Dec3Single | DecoderKind::Dec4Single => {
            let nl = params.l.len();
            let width = params.d.len() / nl;
            for i in 1..=kk {
                let mut acc = 0.0;
                for j in 0..nl {
                    let d = |a: usize| params.d[j * width + a - 1];
                    let pre = match params.spec.decoder {
                        DecoderKind::Dec2Single => {
                            d(1) * y[i] - d(2) * (y1[i] - y2[i]) - d(3) * ps(i + 1) + d(4)
                        }
                        DecoderKind::Dec3Single => {
                            d(1) * y[i] - d(2) * (y1[i] - y2[i]) - d(3) * ps(i + 1)
                                - d(4) * ps(i + 2)
                                + d(5)
                        }
                        _ => {
                            d(1) * y[i] - d(2) * (y1[i] - y2[i]) - d(3) * ps(i + 1)
                                - d(4) * ps(i + 2)
                                - d(5) * ps(i + 3)
                                + d(6)
                        }
                    };
                    acc += params.l[j] * pre.tanh();
                }
                d_out[i] = sig(acc);
            }
        }
        DecoderKind::Dec4TwoStage => {
            let al = &params.alpha;
            let be = &params.beta;
            let ga = &params.gamma;
            let r = &params.r;
            let mut gg = vec![[0.0; 4]; kk + 2];
            for i in 1..=kk {
                for p in 1..=3 {
                    gg[i][p] =
                        (al[p - 1][0] * y[i] - al[p - 1][1] * (y1[i] - y2[i])).tanh();
                }
            }
            // states[i][q], q = 1..6
            let mut st = vec![[0.0; 7]; kk + 2];
            for i in 1..=kk {
                for q in 1..=6 {
                    let bq = &be[q - 1];
                    let mut a = 0.0;
                    for p in 1..=3 {
                        a += bq[p - 1] * gg[i][p];
                    }
                    a = a - bq[3] * ps(i + 1) - bq[4] * ps(i + 2) - bq[5] * ps(i + 3);
                    st[i][q] = a.tanh();
                }
            }
            let at = |x: f64| -> f64 {
                let lim = 1.0 - 1e-12;
                let v = if x > lim {
                    lim
                } else if x < -lim {
                    -lim
                } else {
                    x
                };
                0.5 * ((1.0 + v) / (1.0 - v)).ln()
            };
            for i in 1..=kk {
                let mut z = 0.0;
                for q in 1..=3 {
                    let fw_new = if i == 1 {
                        st[i][q]
                    } else {
                        let delta = ga[q - 1][0] * st[i - 1][1]
                            + ga[q - 1][1] * st[i - 1][2]
                            + ga[q - 1][2] * st[i - 1][3];
                        (at(st[i][q]) + delta).tanh()
                    };
                    z += r[q - 1] * fw_new;
                }
                for q in 4..=6 {
                    let bk_new = if i == kk {
                        st[i][q]
                    } else {
                        let delta = ga[q - 1][0] * st[i + 1][4]
                            + ga[q - 1][1] * st[i + 1][5]
                            + ga[q - 1][2] * st[i + 1][6];
                        (at(st[i][q]) + delta).tanh()
                    };
                    z += r[q - 1] * bk_new;
                }
                d_out[i] = sig(z);
            }
        }
    }
    d_out
}

/// Naive BCE summation over positions.
pub fn bce(soft: &[f64], bits: &[u8]) -> f64 {
    let mut s = 0.0;
    for i in 0..soft.len() {
        let d = soft[i].max(1e-12).min(1.0 - 1e-12);
        let b = f64::from(bits[i]);
        s += b * d.ln() + (1.0 - b) * (1.0 - d).ln();
    }
    -s / soft.len() as f64
}
