//! Hidden-state outliers and their effect on the one-step parity sum.

use std::fmt;
use std::io::Write;

use crate::channel::BlockNoise;
use crate::encoder::{encode_raw, EncoderState, RawCodeword};
use crate::params::ParamSet;

/// Step (0-based) at which each scenario is observed.
const TARGET: usize = 10;

/// Hidden state singled out by a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenState {
    H4,
    H5,
    H6,
    H7,
}

impl HiddenState {
    fn read(self, s: &EncoderState) -> f64 {
        match self {
            HiddenState::H4 => s.h4,
            HiddenState::H5 => s.h5,
            HiddenState::H6 => s.h6,
            HiddenState::H7 => s.h7,
        }
    }

    fn name(self) -> &'static str {
        match self {
            HiddenState::H4 => "h4",
            HiddenState::H5 => "h5",
            HiddenState::H6 => "h6",
            HiddenState::H7 => "h7",
        }
    }
}

/// Noise placed at one step relative to the observed step: `(offset, n, n1, n2)`
/// in units of the magnitude.
type Kick = (usize, f64, f64, f64);

/// One scenario of the outlier table.
#[derive(Debug, Clone, Copy)]
pub struct OutlierCase {
    pub label: &'static str,
    /// Message bit used for every position of the scenario block.
    pub bit: u8,
    pub kicks: &'static [Kick],
    pub state: HiddenState,
    /// +1 when the state should rise, -1 when it should fall.
    pub state_direction: f64,
    /// +1 when the parity sum should rise, -1 when it should fall.
    pub sum_direction: f64,
}

/// The six rows, observed at step `i`; offsets count steps back from `i`.
pub const CASES: [OutlierCase; 6] = [
    OutlierCase {
        label: "b[i-1]=0, n[i-1]++, n1[i-1]--, n2[i-1]++",
        bit: 0,
        kicks: &[(1, 1.0, -1.0, 1.0)],
        state: HiddenState::H4,
        state_direction: -1.0,
        sum_direction: 1.0,
    },
    OutlierCase {
        label: "h4[i-1]<1, n1[i-1]--, n2[i-1]--",
        bit: 0,
        kicks: &[(2, 1.0, -1.0, 1.0), (1, 0.0, -1.0, -1.0)],
        state: HiddenState::H6,
        state_direction: -1.0,
        sum_direction: 1.0,
    },
    OutlierCase {
        label: "h7[i-1]<1, n1[i-1]--, n2[i-1]--",
        bit: 0,
        kicks: &[(2, 0.0, 1.0, 1.0), (1, 0.0, -1.0, -1.0)],
        state: HiddenState::H6,
        state_direction: -1.0,
        sum_direction: 1.0,
    },
    OutlierCase {
        label: "b[i-1]=1, n[i-1]--, n1[i-1]++, n2[i-1]--",
        bit: 1,
        kicks: &[(1, -1.0, 1.0, -1.0)],
        state: HiddenState::H5,
        state_direction: 1.0,
        sum_direction: -1.0,
    },
    OutlierCase {
        label: "h5[i-1]>-1, n1[i-1]++, n2[i-1]++",
        bit: 1,
        kicks: &[(2, -1.0, 1.0, -1.0), (1, 0.0, 1.0, 1.0)],
        state: HiddenState::H7,
        state_direction: -1.0,
        sum_direction: -1.0,
    },
    OutlierCase {
        label: "h6[i-1]<1, n1[i-1]++, n2[i-1]++",
        bit: 1,
        kicks: &[(2, 0.0, -1.0, -1.0), (1, 0.0, 1.0, 1.0)],
        state: HiddenState::H7,
        state_direction: -1.0,
        sum_direction: -1.0,
    },
];

/// Result for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierRow {
    pub label: &'static str,
    pub state: &'static str,
    pub quiet_state: f64,
    pub state_value: f64,
    pub quiet_sum: f64,
    pub sum: f64,
    pub expected_sum_direction: f64,
    /// True when the parity sum moved at all.
    pub flagged: bool,
    /// True when both the state and the parity sum moved in the stated direction.
    pub pass: bool,
}

impl OutlierRow {
    pub fn sum_delta(&self) -> f64 {
        self.sum - self.quiet_sum
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierTable {
    pub magnitude: f64,
    pub rows: Vec<OutlierRow>,
}

impl OutlierTable {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,condition,state,quiet_state,state_value,quiet_sum,sum,delta,expected,pass")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                out,
                "{},\"{}\",{},{},{},{},{},{},{},{}",
                i + 1,
                r.label,
                r.state,
                r.quiet_state,
                r.state_value,
                r.quiet_sum,
                r.sum,
                r.sum_delta(),
                if r.expected_sum_direction > 0.0 { "up" } else { "down" },
                r.pass
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for OutlierTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "outlier table at magnitude {}", self.magnitude)?;
        writeln!(
            f,
            "{:>3}  {:<44} {:>5} {:>10} {:>10} {:>11} {:>5} {:>5}",
            "row", "condition", "state", "quiet", "value", "sum delta", "want", "pass"
        )?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                f,
                "{:>3}  {:<44} {:>5} {:>10.5} {:>10.5} {:>+11.5} {:>5} {:>5}",
                i + 1,
                r.label,
                r.state,
                r.quiet_state,
                r.state_value,
                r.sum_delta(),
                if r.expected_sum_direction > 0.0 { "up" } else { "down" },
                if r.pass { "yes" } else { "no" }
            )?;
        }
        Ok(())
    }
}

/// Block of constant bits with the scenario's noise kicks applied (noiseless feedback).
pub fn scenario_block(case: &OutlierCase, block_len: usize, magnitude: f64) -> BlockNoise {
    let mut noise = BlockNoise::quiet(&vec![case.bit; block_len]);
    for &(back, n, n1, n2) in case.kicks {
        let t = TARGET - back;
        noise.n[t] = n * magnitude;
        noise.n1[t] = n1 * magnitude;
        noise.n2[t] = n2 * magnitude;
    }
    noise
}

fn parity_sum(raw: &RawCodeword, t: usize) -> f64 {
    raw.symbols[1][t] + raw.symbols[2][t]
}

/// Evaluates every row at noise amplitude `magnitude` (e.g. `2 * sigma_f`).
pub fn outlier_table(params: &ParamSet, magnitude: f64) -> OutlierTable {
    let k = params.spec.block_len.max(TARGET + 2);
    let rows = CASES
        .iter()
        .map(|case| {
            let quiet = encode_raw(&scenario_block(case, k, 0.0), params);
            let kicked = encode_raw(&scenario_block(case, k, magnitude), params);
            let quiet_state = case.state.read(&quiet.states[TARGET]);
            let state_value = case.state.read(&kicked.states[TARGET]);
            let quiet_sum = parity_sum(&quiet, TARGET);
            let sum = parity_sum(&kicked, TARGET);
            let delta = sum - quiet_sum;
            let state_moved = (state_value - quiet_state) * case.state_direction > 0.0;
            OutlierRow {
                label: case.label,
                state: case.state.name(),
                quiet_state,
                state_value,
                quiet_sum,
                sum,
                expected_sum_direction: case.sum_direction,
                flagged: delta.abs() > 1e-12,
                pass: state_moved && delta * case.sum_direction > 0.0,
            }
        })
        .collect();
    OutlierTable { magnitude, rows }
}
