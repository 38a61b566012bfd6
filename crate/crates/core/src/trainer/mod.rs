//! Training by minimizing batch BCE with Adam over simulated blocks.

pub mod grad;
pub mod gradcheck;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{derive_seed, BlockNoise, RngStream, UnitDraws};
use crate::error::{Error, Result};
use crate::model::calibrate;
use crate::params::{Group, ParamSet, POWER_WEIGHTS};
use crate::types::{snr_to_sigma, EncoderOrder, FeedbackSnr, KneeMode, ModelSpec};

pub use grad::{bce_loss, loss_and_grad, LossAndGrad, NormMode};

const TRAIN_DOMAIN: u64 = 1;
const VALID_DOMAIN: u64 = 2;
const INIT_DOMAIN: u64 = 3;
const SNR_DOMAIN: u64 = 4;

/// Which side of the link is held fixed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Freeze {
    #[default]
    Nothing,
    /// Train decoder weights only.
    Encoder,
    /// Train encoder gains, knee points and power weights only.
    Decoder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    /// Forward SNRs (dB) sampled uniformly per batch.
    pub snr_f_db: Vec<f64>,
    /// Feedback SNRs sampled uniformly per batch.
    pub snr_fb: Vec<FeedbackSnr>,
    pub batch_blocks: usize,
    pub steps: usize,
    /// Peak Adam step size.
    pub lr: f64,
    pub warmup_steps: usize,
    /// Cosine decay ends at `lr * lr_floor`.
    pub lr_floor: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Independent initializations screened before the main run.
    pub restarts: usize,
    /// Steps given to each restart during screening.
    pub restart_steps: usize,
    pub init_scale: f64,
    pub freeze: Freeze,
    pub validation_blocks: usize,
    pub eval_every: usize,
    pub calibration_blocks: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            spec: ModelSpec::enc3_dec4(),
            snr_f_db: vec![0.0],
            snr_fb: vec![FeedbackSnr::Noiseless],
            batch_blocks: 256,
            steps: 20_000,
            lr: 0.01,
            warmup_steps: 200,
            lr_floor: 0.02,
            clip_norm: 10.0,
            seed: 1,
            restarts: 5,
            restart_steps: 1_000,
            init_scale: 0.1,
            freeze: Freeze::Nothing,
            validation_blocks: 2_000,
            eval_every: 500,
            calibration_blocks: 100_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_blocks == 0 {
            return fail("batch_blocks must be at least 1");
        }
        if self.steps == 0 {
            return fail("steps must be at least 1");
        }
        if self.snr_f_db.is_empty() || self.snr_fb.is_empty() {
            return fail("SNR lists must not be empty");
        }
        if self.snr_f_db.iter().any(|s| !s.is_finite()) {
            return fail("training forward SNRs must be finite");
        }
        if self.spec.knee == KneeMode::LearnedVarying && self.snr_fb.iter().any(|s| s.is_noiseless()) {
            return fail("learned knee points need noisy feedback at every training SNR");
        }
        // negated form also rejects NaN
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) {
            return fail("lr and clip_norm must be positive");
        }
        self.spec.normalized().map(|_| ())
    }

    fn trainable(&self, params: &ParamSet) -> Vec<bool> {
        params
            .layout()
            .slots
            .iter()
            .map(|s| match self.freeze {
                Freeze::Nothing => true,
                Freeze::Encoder => !s.group.is_encoder_side(),
                Freeze::Decoder => s.group.is_encoder_side(),
            })
            .collect()
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub restart: usize,
    pub step: usize,
    pub bce: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub val_ber: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: ParamSet,
    pub log: Vec<LogRow>,
    /// Validation BCE of every screened restart.
    pub restart_scores: Vec<f64>,
    /// Screened restart that was continued.
    pub best_restart: usize,
    /// Run index of the full-length run in `log`.
    pub final_run: usize,
    pub final_val_bce: f64,
    pub final_val_ber: f64,
    /// Divergence events (restart, step, new lr).
    pub divergences: Vec<(usize, usize, f64)>,
}

impl TrainReport {
    /// Writes `step,bce,grad_norm,lr,val_ber` for the selected run.
    pub fn write_log_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,bce,grad_norm,lr,val_ber")?;
        for row in self.log.iter().filter(|r| r.restart == self.final_run) {
            let val = row.val_ber.map_or(String::new(), |v| v.to_string());
            writeln!(out, "{},{},{},{},{}", row.step, row.bce, row.grad_norm, row.lr, val)?;
        }
        Ok(())
    }
}

/// Random initialization near the quiescent basin: hidden states start close
/// to their resting values, everything else is small.
pub fn initial_params(spec: ModelSpec, init_scale: f64, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::zeros(spec);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    p.e = [u(0.3, 0.6), u(0.2, 0.4), u(0.2, 0.4)];
    p.k = [u(0.5, 1.0), u(0.5, 1.0), u(0.5, 1.0), u(2.0, 2.5)];
    if spec.encoder_order == EncoderOrder::Third {
        p.m = [u(0.3, 0.6), u(0.3, 0.6), u(0.3, 0.6), 0.0, u(1.5, 2.0)];
        if spec.entanglement {
            p.m[3] = u(0.2, 0.4);
        }
    } else {
        p.e[2] = 0.0;
    }
    for v in p.d.iter_mut().chain(p.l.iter_mut()) {
        *v = u(-init_scale, init_scale);
    }
    for v in p
        .alpha
        .iter_mut()
        .flatten()
        .chain(p.beta.iter_mut().flatten())
        .chain(p.gamma.iter_mut().flatten())
        .chain(p.r.iter_mut())
    {
        *v = u(-init_scale, init_scale);
    }
    p.power = [1.0; POWER_WEIGHTS];
    p
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64, mask: &[bool]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..x.len() {
            if !mask[i] {
                continue;
            }
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Linear warmup then cosine decay from `lr` to `lr * lr_floor`.
pub fn learning_rate(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    if step < cfg.warmup_steps {
        return cfg.lr * (step + 1) as f64 / cfg.warmup_steps as f64;
    }
    let span = total.saturating_sub(cfg.warmup_steps).max(1) as f64;
    let progress = ((step - cfg.warmup_steps) as f64 / span).min(1.0);
    let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    cfg.lr * (cfg.lr_floor + (1.0 - cfg.lr_floor) * cosine)
}

/// Simulated training batch for `step`.
pub fn training_batch(cfg: &TrainConfig, step: usize) -> Vec<BlockNoise> {
    let seed = derive_seed(cfg.seed, TRAIN_DOMAIN);
    let mut pick = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ step as u64, SNR_DOMAIN));
    let snr_f = cfg.snr_f_db[pick.random_range(0..cfg.snr_f_db.len())];
    let snr_fb = cfg.snr_fb[pick.random_range(0..cfg.snr_fb.len())];
    let (sf, sfb) = (snr_to_sigma(snr_f), snr_fb.sigma());
    let base = (step * cfg.batch_blocks) as u64;
    (0..cfg.batch_blocks as u64)
        .into_par_iter()
        .map(|j| UnitDraws::draw(RngStream::new(seed, base + j), cfg.spec.block_len).scale(sf, sfb))
        .collect()
}

/// Held-out blocks: the validation set cycles through every configured SNR pair.
pub fn validation_blocks(cfg: &TrainConfig) -> Vec<BlockNoise> {
    let seed = derive_seed(cfg.seed, VALID_DOMAIN);
    let pairs: Vec<(f64, FeedbackSnr)> = cfg
        .snr_f_db
        .iter()
        .flat_map(|&f| cfg.snr_fb.iter().map(move |&fb| (f, fb)))
        .collect();
    (0..cfg.validation_blocks as u64)
        .into_par_iter()
        .map(|j| {
            let (f, fb) = pairs[j as usize % pairs.len()];
            UnitDraws::draw(RngStream::new(seed, j), cfg.spec.block_len).scale(snr_to_sigma(f), fb.sigma())
        })
        .collect()
}

/// Validation BCE and BER with batch normalization statistics.
pub fn validate_params(params: &ParamSet, blocks: &[BlockNoise]) -> Result<(f64, f64)> {
    let out = loss_and_grad(params, blocks, NormMode::Batch)?;
    Ok((out.loss, out.bit_errors as f64 / out.bits as f64))
}

struct RunResult {
    params: ParamSet,
    val_bce: f64,
    val_ber: f64,
}

fn run(
    cfg: &TrainConfig,
    init: ParamSet,
    steps: usize,
    restart: usize,
    validation: &[BlockNoise],
    log: &mut Vec<LogRow>,
    divergences: &mut Vec<(usize, usize, f64)>,
) -> Result<RunResult> {
    let mask = cfg.trainable(&init);
    let layout = init.layout();
    let mut lr_scale = 1.0;
    let mut attempt = 0;
    'attempt: loop {
        let mut params = init.clone();
        let mut x = params.to_flat();
        let mut adam = Adam::new(x.len());
        let mut best: Option<(f64, f64, ParamSet)> = None;
        for step in 0..steps {
            let lr = learning_rate(cfg, step, steps) * lr_scale;
            let batch = training_batch(cfg, step);
            let out = match loss_and_grad(&params, &batch, NormMode::Batch) {
                Ok(out) => out,
                Err(Error::NonFiniteGradient { .. }) if attempt < 4 => {
                    attempt += 1;
                    lr_scale *= 0.5;
                    divergences.push((restart, step, cfg.lr * lr_scale));
                    continue 'attempt;
                }
                Err(e) => return Err(e),
            };
            let mut g: Vec<f64> = layout.slots.iter().map(|&s| out.grad.get(s)).collect();
            let norm = g
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| v * v)
                .sum::<f64>()
                .sqrt();
            if norm > cfg.clip_norm {
                g.iter_mut().for_each(|v| *v *= cfg.clip_norm / norm);
            }
            adam.step(&mut x, &g, lr, &mask);
            params.set_flat(&x)?;
            if !params.spec.entanglement {
                params.m[3] = 0.0;
            }
            let last = step + 1 == steps;
            let val_ber = if (step + 1) % cfg.eval_every.max(1) == 0 || last {
                let (vb, ve) = validate_params(&params, validation)?;
                if best.as_ref().is_none_or(|(b, _, _)| vb < *b) {
                    best = Some((vb, ve, params.clone()));
                }
                Some(ve)
            } else {
                None
            };
            log.push(LogRow {
                restart,
                step: step + 1,
                bce: out.loss,
                grad_norm: norm,
                lr,
                val_ber,
            });
        }
        let (val_bce, val_ber, params) = best.expect("validated at the last step");
        return Ok(RunResult {
            params,
            val_bce,
            val_ber,
        });
    }
}

/// Trains from scratch (or from `warm_start`), keeps the best restart, runs the
/// full schedule on it and freezes calibration constants.
pub fn train(cfg: &TrainConfig, warm_start: Option<&ParamSet>) -> Result<TrainReport> {
    cfg.validate()?;
    let validation = validation_blocks(cfg);
    let mut log = Vec::new();
    let mut divergences = Vec::new();
    let mut restart_scores = Vec::new();

    let inits: Vec<ParamSet> = match warm_start {
        // A changed decoder gets fresh random weights per restart; otherwise the
        // warm start is the single starting point.
        Some(p) if p.spec.decoder != cfg.spec.decoder => (0..cfg.restarts.max(1))
            .map(|r| {
                let mut init = p.clone();
                let seed = derive_seed(cfg.seed, INIT_DOMAIN + 16 * r as u64);
                adapt_warm_start(&mut init, cfg.spec, cfg.init_scale, seed).map(|_| init)
            })
            .collect::<Result<_>>()?,
        Some(p) => {
            let mut p = p.clone();
            adapt_warm_start(&mut p, cfg.spec, cfg.init_scale, cfg.seed)?;
            vec![p]
        }
        None => (0..cfg.restarts.max(1))
            .map(|r| initial_params(cfg.spec, cfg.init_scale, derive_seed(cfg.seed, INIT_DOMAIN + 16 * r as u64)))
            .collect(),
    };

    let mut best_restart = 0;
    let start = if inits.len() > 1 {
        let mut best: Option<(f64, ParamSet)> = None;
        for (r, init) in inits.into_iter().enumerate() {
            let res = run(cfg, init, cfg.restart_steps, r, &validation, &mut log, &mut divergences)?;
            restart_scores.push(res.val_bce);
            if best.as_ref().is_none_or(|(b, _)| res.val_bce < *b) {
                best_restart = r;
                best = Some((res.val_bce, res.params));
            }
        }
        best.expect("at least one restart").1
    } else {
        inits.into_iter().next().expect("one init")
    };

    let final_restart = restart_scores.len();
    let res = run(cfg, start, cfg.steps, final_restart, &validation, &mut log, &mut divergences)?;
    let mut params = res.params;
    calibrate(
        &mut params,
        cfg.snr_f_db[0],
        cfg.snr_fb[0],
        cfg.calibration_blocks,
        cfg.seed,
    )?;
    Ok(TrainReport {
        params,
        log,
        restart_scores,
        best_restart,
        final_run: final_restart,
        final_val_bce: res.val_bce,
        final_val_ber: res.val_ber,
        divergences,
    })
}

/// Converts a trained parameter set to a related variant (e.g. adds knee
/// points or drops entanglement) so it can seed another run. When the decoder
/// kind changes only the encoder side is kept and the decoder is drawn as in
/// [`initial_params`] with `seed`.
pub fn adapt_warm_start(params: &mut ParamSet, spec: ModelSpec, init_scale: f64, seed: u64) -> Result<()> {
    let spec = spec.normalized()?;
    if params.spec.encoder_order != spec.encoder_order {
        return Err(Error::InvalidConfig(format!(
            "cannot start {} from a {} parameter file",
            spec, params.spec
        )));
    }
    if params.spec.decoder != spec.decoder {
        let mut fresh = initial_params(spec, init_scale, seed);
        fresh.e = params.e;
        fresh.k = params.k;
        fresh.m = params.m;
        fresh.knee = params.knee;
        fresh.power = params.power;
        *params = fresh;
    }
    params.spec = spec;
    if !spec.entanglement {
        params.m[3] = 0.0;
    }
    if spec.knee == KneeMode::FixedAtZero {
        params.knee = [0.0; 2];
    }
    params.calibration = None;
    params.validate()
}

/// Fraction of consecutive windows whose mean loss did not rise by more than
/// two standard errors of the difference.
pub fn healthy_window_fraction(losses: &[f64], window: usize) -> f64 {
    let windows: Vec<&[f64]> = losses.chunks_exact(window).collect();
    if windows.len() < 2 {
        return 1.0;
    }
    let stats = |w: &[f64]| {
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var / n)
    };
    let ok = windows
        .windows(2)
        .filter(|pair| {
            let (m0, v0) = stats(pair[0]);
            let (m1, v1) = stats(pair[1]);
            m1 <= m0 + 2.0 * (v0 + v1).sqrt()
        })
        .count();
    ok as f64 / (windows.len() - 1) as f64
}

/// Sign a group is expected to keep; used only for reporting.
pub fn group_label(group: Group) -> &'static str {
    match group {
        Group::E | Group::K | Group::M | Group::Knee | Group::Power => "encoder",
        _ => "decoder",
    }
}
