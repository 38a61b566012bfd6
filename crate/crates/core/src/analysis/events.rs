//! Discrepant error events: positions where model A errs and model B does not.

use std::io::Write;

use rayon::prelude::*;

use crate::channel::{draw_block_noise, BlockNoise};
use crate::error::{Error, Result};
use crate::model::{check_channel, transmit};
use crate::params::ParamSet;
use crate::types::ChannelConfig;

/// Half width of the feature window around an error position.
pub const HALF_WINDOW: usize = 4;
/// Window length `2 * HALF_WINDOW + 1`.
pub const WINDOW: usize = 2 * HALF_WINDOW + 1;
/// Features per event: bits, n, n1, n2 over the window.
pub const FEATURES: usize = 4 * WINDOW;

/// Signal kinds stored per window offset.
pub const KINDS: [&str; 4] = ["b", "n", "n1", "n2"];

/// One position where A decodes wrongly and B correctly, with the noise around it.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEvent {
    pub block: u64,
    /// 1-based position of the error, `5 <= i <= K - 4`.
    pub position: usize,
    /// Window features laid out kind-major: `b[-4..=4], n[..], n1[..], n2[..]`.
    pub features: [f64; FEATURES],
}

impl ErrorEvent {
    pub fn bit(&self) -> f64 {
        self.features[feature_index("b", 0)]
    }

    /// Value of `kind` at window offset `offset` (relative to the error).
    pub fn get(&self, kind: &str, offset: isize) -> f64 {
        self.features[feature_index(kind, offset)]
    }
}

/// Column index of `kind` at `offset` in [`ErrorEvent::features`].
pub fn feature_index(kind: &str, offset: isize) -> usize {
    let k = KINDS.iter().position(|&x| x == kind).expect("known feature kind");
    assert!(offset.unsigned_abs() <= HALF_WINDOW, "offset {offset} outside window");
    k * WINDOW + (offset + HALF_WINDOW as isize) as usize
}

/// Human-readable feature names such as `n1[i+1]`.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURES);
    for kind in KINDS {
        for off in -(HALF_WINDOW as isize)..=HALF_WINDOW as isize {
            names.push(match off {
                0 => format!("{kind}[i]"),
                o if o > 0 => format!("{kind}[i+{o}]"),
                o => format!("{kind}[i{o}]"),
            });
        }
    }
    names
}

fn window(noise: &BlockNoise, t: usize) -> [f64; FEATURES] {
    let mut f = [0.0; FEATURES];
    for (w, s) in (t - HALF_WINDOW..=t + HALF_WINDOW).enumerate() {
        f[w] = f64::from(noise.bits[s]);
        f[WINDOW + w] = noise.n[s];
        f[2 * WINDOW + w] = noise.n1[s];
        f[3 * WINDOW + w] = noise.n2[s];
    }
    f
}

/// Events in one block, boundary positions excluded.
pub fn block_events(a: &ParamSet, b: &ParamSet, noise: &BlockNoise, block: u64) -> Result<Vec<ErrorEvent>> {
    let tx_a = transmit(a, noise)?;
    let tx_b = transmit(b, noise)?;
    let k = noise.block_len();
    let mut out = Vec::new();
    for t in HALF_WINDOW..k - HALF_WINDOW {
        let bit = noise.bits[t];
        if tx_a.decoded[t] != bit && tx_b.decoded[t] == bit {
            out.push(ErrorEvent {
                block,
                position: t + 1,
                features: window(noise, t),
            });
        }
    }
    Ok(out)
}

/// Scans blocks `0, 1, ...` of `cfg` until `count` events are found or
/// `max_blocks` blocks have been checked. Returns exactly `count` events when
/// enough exist, in block order.
pub fn collect_discrepant(
    a: &ParamSet,
    b: &ParamSet,
    cfg: &ChannelConfig,
    count: usize,
    max_blocks: u64,
) -> Result<Vec<ErrorEvent>> {
    check_channel(a, cfg)?;
    check_channel(b, cfg)?;
    if a.spec.block_len != b.spec.block_len {
        return Err(Error::InvalidConfig("models use different block lengths".into()));
    }
    if a.spec.block_len < WINDOW + 1 {
        return Err(Error::InvalidConfig("block too short for the feature window".into()));
    }
    const CHUNK: u64 = 8192;
    let mut events = Vec::new();
    let mut next = 0u64;
    while events.len() < count && next < max_blocks {
        let end = (next + CHUNK).min(max_blocks);
        let found: Result<Vec<Vec<ErrorEvent>>> = (next..end)
            .into_par_iter()
            .map(|index| block_events(a, b, &draw_block_noise(cfg, index), index))
            .collect();
        events.extend(found?.into_iter().flatten());
        next = end;
    }
    events.truncate(count);
    Ok(events)
}

/// Writes `block,position,<feature names>`.
pub fn write_events_csv<W: Write>(events: &[ErrorEvent], mut out: W) -> std::io::Result<()> {
    writeln!(out, "block,position,{}", feature_names().join(","))?;
    for e in events {
        let values: Vec<String> = e.features.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{},{}", e.block, e.position, values.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_match_indices() {
        let names = feature_names();
        assert_eq!(names.len(), FEATURES);
        assert_eq!(names[feature_index("b", 0)], "b[i]");
        assert_eq!(names[feature_index("n1", 1)], "n1[i+1]");
        assert_eq!(names[feature_index("n", -4)], "n[i-4]");
    }
}
