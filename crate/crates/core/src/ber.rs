//! Monte Carlo bit-error-rate estimation and SNR sweeps.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::draw_block_noise;
use crate::error::{Error, Result};
use crate::model::{block_errors, check_channel};
use crate::params::ParamSet;
use crate::types::{ChannelConfig, FeedbackSnr, ModelSpec};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

/// Header of every sweep CSV.
pub const CSV_HEADER: &str = "model,snr_f_db,snr_fb_db,bits,errors,ber,ci_low,ci_high,seconds";

/// Wilson score interval for `errors` successes out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the bounds are exactly 0 and 1 at the extremes; avoid rounding residue
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// When to stop drawing blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopRule {
    pub target_errors: u64,
    pub min_bits: u64,
    pub max_bits: u64,
    /// Blocks simulated between stopping checks. Checks only happen at chunk
    /// boundaries, which keeps the result independent of the worker count.
    pub chunk_blocks: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            target_errors: 200,
            min_bits: 0,
            max_bits: 50_000_000,
            chunk_blocks: 4096,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_blocks == 0 {
            return Err(Error::InvalidConfig("chunk_blocks must be at least 1".into()));
        }
        if self.max_bits == 0 || self.min_bits > self.max_bits {
            return Err(Error::InvalidConfig(
                "need 0 < max_bits and min_bits <= max_bits".into(),
            ));
        }
        Ok(())
    }
}

/// Result for one (model, SNR_f, SNR_fb) point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerReport {
    pub model: String,
    pub spec: ModelSpec,
    pub params_fingerprint: u64,
    pub seed: u64,
    pub snr_f_db: f64,
    pub snr_fb: FeedbackSnr,
    pub blocks: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seconds: f64,
}

impl BerReport {
    /// True when the two 95% intervals do not overlap.
    pub fn separated_from(&self, other: &BerReport) -> bool {
        self.ci_high < other.ci_low || other.ci_high < self.ci_low
    }

    /// One CSV row; `seconds` is written as 0 when `deterministic`.
    pub fn csv_row(&self, deterministic: bool) -> String {
        let seconds = if deterministic { 0.0 } else { self.seconds };
        format!(
            "{},{},{},{},{},{:e},{:e},{:e},{:.3}",
            self.model,
            self.snr_f_db,
            self.snr_fb,
            self.bits,
            self.bit_errors,
            self.ber,
            self.ci_low,
            self.ci_high,
            seconds
        )
    }
}

/// Simulates blocks `0, 1, 2, ...` of `cfg` until the stop rule fires.
pub fn run_ber(params: &ParamSet, cfg: &ChannelConfig, stop: &StopRule) -> Result<BerReport> {
    check_channel(params, cfg)?;
    stop.validate()?;
    params.validate()?;
    if params.calibration.is_none() {
        return Err(Error::MissingCalibration);
    }
    let started = Instant::now();
    let k = params.spec.block_len as u64;
    let mut blocks = 0u64;
    let mut errors = 0u64;
    loop {
        let bits = blocks * k;
        let enough_errors = errors >= stop.target_errors && bits >= stop.min_bits;
        if enough_errors || bits >= stop.max_bits {
            break;
        }
        let remaining = (stop.max_bits - bits).div_ceil(k);
        let chunk = stop.chunk_blocks.min(remaining);
        let found: Result<Vec<usize>> = (blocks..blocks + chunk)
            .into_par_iter()
            .map(|index| block_errors(params, &draw_block_noise(cfg, index)))
            .collect();
        errors += found?.iter().map(|&e| e as u64).sum::<u64>();
        blocks += chunk;
    }
    let bits = blocks * k;
    let (ci_low, ci_high) = wilson_interval(errors, bits, Z_95);
    Ok(BerReport {
        model: params.spec.name(),
        spec: params.spec,
        params_fingerprint: params.fingerprint(),
        seed: cfg.seed,
        snr_f_db: cfg.snr_f_db,
        snr_fb: cfg.snr_fb,
        blocks,
        bits,
        bit_errors: errors,
        ber: errors as f64 / bits as f64,
        ci_low,
        ci_high,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub snr_f_db: f64,
    pub snr_fb: FeedbackSnr,
}

/// Sweep description, usually read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Paths to parameter files; each model is run at every point.
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub points: Vec<GridPoint>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub stop: StopRule,
}

fn default_seed() -> u64 {
    1
}

impl SweepGrid {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Cartesian product of forward and feedback SNR lists.
    pub fn product(snr_f_db: &[f64], snr_fb: &[FeedbackSnr]) -> Vec<GridPoint> {
        snr_fb
            .iter()
            .flat_map(|&fb| snr_f_db.iter().map(move |&f| GridPoint { snr_f_db: f, snr_fb: fb }))
            .collect()
    }
}

/// Runs every model at every point and writes one CSV row per pair.
pub fn sweep<W: Write>(
    models: &[ParamSet],
    points: &[GridPoint],
    seed: u64,
    stop: &StopRule,
    deterministic: bool,
    mut out: W,
) -> Result<Vec<BerReport>> {
    let io = |e| Error::io("<sweep output>", e);
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    let mut reports = Vec::new();
    for params in models {
        for point in points {
            let cfg = ChannelConfig::new(point.snr_f_db, point.snr_fb, seed, params.spec.block_len)?;
            let report = run_ber(params, &cfg, stop)?;
            writeln!(out, "{}", report.csv_row(deterministic)).map_err(io)?;
            reports.push(report);
        }
    }
    out.flush().map_err(io)?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_estimate() {
        let (lo, hi) = wilson_interval(200, 1_000_000, Z_95);
        let p = 2e-4;
        assert!(lo < p && p < hi);
        // error-count-targeted stopping keeps the half width within 30% of the estimate
        assert!((hi - lo) / 2.0 <= 0.3 * p);
    }

    #[test]
    fn wilson_zero_errors() {
        let (lo, hi) = wilson_interval(0, 1000, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn wilson_known_value() {
        // 10 of 100 at 95%: standard textbook interval (0.0552, 0.1744)
        let (lo, hi) = wilson_interval(10, 100, Z_95);
        assert!((lo - 0.05522).abs() < 1e-4, "{lo}");
        assert!((hi - 0.17437).abs() < 1e-4, "{hi}");
    }

    #[test]
    fn stop_rule_rejects_zero_chunk() {
        let stop = StopRule {
            chunk_blocks: 0,
            ..StopRule::default()
        };
        assert!(stop.validate().is_err());
    }

    #[test]
    fn grid_product_order() {
        let pts = SweepGrid::product(&[0.0, 1.0], &[FeedbackSnr::Noiseless, FeedbackSnr::Db(20.0)]);
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[1].snr_f_db, 1.0);
        assert_eq!(pts[2].snr_fb, FeedbackSnr::Db(20.0));
    }
}
