//! Learned scalars of one model variant, their flat layout and the JSON file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DecoderKind, EncoderOrder, KneeMode, ModelSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Power-allocation groups: positions {1}, {2}, {3..K-1}, {K, K+1}.
pub const POWER_GROUPS: usize = 4;
/// Streams: phase-1 systematic symbols, parity 1, parity 2.
pub const STREAMS: usize = 3;
pub const POWER_WEIGHTS: usize = POWER_GROUPS * STREAMS;

/// Power group of 0-based step `t` for a block of `block_len` message bits.
pub fn power_group(t: usize, block_len: usize) -> usize {
    match t {
        0 => 0,
        1 => 1,
        _ if t + 1 >= block_len => 3,
        _ => 2,
    }
}

/// Number of positions per stream that fall into each power group.
pub fn power_group_sizes(block_len: usize) -> [usize; POWER_GROUPS] {
    [1, 1, block_len - 3, 2]
}

/// Every learned scalar of a model. Groups a variant does not use stay at zero
/// and are excluded from its [`ParamLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub spec: ModelSpec,
    /// First/second/third-order parity gains `e1, e2, e3`.
    pub e: [f64; 3],
    /// Second-order hidden-state coefficients `k1..k4`.
    pub k: [f64; 4],
    /// Third-order hidden-state coefficients `m1..m5`.
    pub m: [f64; 5],
    /// Knee offsets `lambda1` (bit 0) and `lambda2` (bit 1).
    pub knee: [f64; 2],
    /// Single-stage branch weights, `branches x width` row-major; the last
    /// column of each row is the bias.
    pub d: Vec<f64>,
    /// Single-stage output mixing weights.
    pub l: Vec<f64>,
    pub alpha: [[f64; 2]; 3],
    pub beta: [[f64; 6]; 6],
    pub gamma: [[f64; 3]; 6],
    pub r: [f64; 6],
    /// Power weights indexed `group * 3 + stream`.
    pub power: [f64; POWER_WEIGHTS],
    /// Frozen per-(group, stream) RMS of the raw symbols.
    pub calibration: Option<[f64; POWER_WEIGHTS]>,
}

impl ParamSet {
    pub fn zeros(spec: ModelSpec) -> Self {
        let (branches, width) = single_stage_shape(spec.decoder);
        ParamSet {
            spec,
            e: [0.0; 3],
            k: [0.0; 4],
            m: [0.0; 5],
            knee: [0.0; 2],
            d: vec![0.0; branches * width],
            l: vec![0.0; branches],
            alpha: [[0.0; 2]; 3],
            beta: [[0.0; 6]; 6],
            gamma: [[0.0; 3]; 6],
            r: [0.0; 6],
            power: [0.0; POWER_WEIGHTS],
            calibration: None,
        }
    }

    /// Same shape as `self`, every scalar zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ParamSet::zeros(self.spec)
    }

    /// Width of one single-stage branch row (inputs plus bias).
    pub fn branch_width(&self) -> usize {
        single_stage_shape(self.spec.decoder).1
    }

    pub fn d_row(&self, j: usize) -> &[f64] {
        let w = self.branch_width();
        &self.d[j * w..(j + 1) * w]
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::for_spec(&self.spec)
    }

    pub fn get(&self, slot: Slot) -> f64 {
        match slot.group {
            Group::E => self.e[slot.index],
            Group::K => self.k[slot.index],
            Group::M => self.m[slot.index],
            Group::Knee => self.knee[slot.index],
            Group::D => self.d[slot.index],
            Group::L => self.l[slot.index],
            Group::Alpha => self.alpha[slot.index / 2][slot.index % 2],
            Group::Beta => self.beta[slot.index / 6][slot.index % 6],
            Group::Gamma => self.gamma[slot.index / 3][slot.index % 3],
            Group::R => self.r[slot.index],
            Group::Power => self.power[slot.index],
        }
    }

    pub fn get_mut(&mut self, slot: Slot) -> &mut f64 {
        match slot.group {
            Group::E => &mut self.e[slot.index],
            Group::K => &mut self.k[slot.index],
            Group::M => &mut self.m[slot.index],
            Group::Knee => &mut self.knee[slot.index],
            Group::D => &mut self.d[slot.index],
            Group::L => &mut self.l[slot.index],
            Group::Alpha => &mut self.alpha[slot.index / 2][slot.index % 2],
            Group::Beta => &mut self.beta[slot.index / 6][slot.index % 6],
            Group::Gamma => &mut self.gamma[slot.index / 3][slot.index % 3],
            Group::R => &mut self.r[slot.index],
            Group::Power => &mut self.power[slot.index],
        }
    }

    /// Trainable scalars in layout order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layout().slots.iter().map(|&s| self.get(s)).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let layout = self.layout();
        if values.len() != layout.len() {
            return Err(Error::LengthMismatch {
                what: "flat parameter vector",
                expected: layout.len(),
                actual: values.len(),
            });
        }
        for (&slot, &v) in layout.slots.iter().zip(values) {
            *self.get_mut(slot) = v;
        }
        Ok(())
    }

    /// Adds `scale * other` to every scalar (including unused groups).
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for slot in ParamLayout::all_slots(&self.spec) {
            *self.get_mut(slot) += scale * other.get(slot);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for slot in ParamLayout::all_slots(&self.spec) {
            *self.get_mut(slot) *= factor;
        }
    }

    /// Checks finiteness and structural constraints.
    pub fn validate(&self) -> Result<()> {
        let spec = self.spec.normalized()?;
        let (branches, width) = single_stage_shape(spec.decoder);
        if self.d.len() != branches * width || self.l.len() != branches {
            return Err(Error::InvalidParams(format!(
                "single-stage weights have shape {}x? / {} but {} needs {branches}x{width}",
                self.d.len(),
                self.l.len(),
                spec.decoder.label()
            )));
        }
        for slot in ParamLayout::all_slots(&spec) {
            let v = self.get(slot);
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{} is not finite ({v})",
                    slot.name()
                )));
            }
        }
        if let Some(cal) = &self.calibration {
            if let Some(bad) = cal.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
                return Err(Error::InvalidParams(format!(
                    "calibration constant {bad} must be finite and positive"
                )));
            }
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the trainable values and calibration (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for v in self.to_flat() {
            feed(v);
        }
        if let Some(cal) = &self.calibration {
            cal.iter().copied().for_each(&mut feed);
        }
        h
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ParamFile::from_params(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, ParamFileError> {
        let file: ParamFile = serde_json::from_str(text).map_err(ParamFileError::Syntax)?;
        file.into_params().map_err(ParamFileError::Content)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            ParamFileError::Syntax(source) => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            ParamFileError::Content(err) => err,
        })
    }
}

#[derive(Debug)]
pub enum ParamFileError {
    Syntax(serde_json::Error),
    Content(Error),
}

impl std::fmt::Display for ParamFileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamFileError::Syntax(e) => write!(f, "{e}"),
            ParamFileError::Content(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ParamFileError {}

fn single_stage_shape(decoder: DecoderKind) -> (usize, usize) {
    if decoder.is_single_stage() {
        // y_i, parity difference, one column per parity-sum lookahead, bias
        (decoder.branches(), decoder.lookahead() + 3)
    } else {
        (0, 0)
    }
}

/// Named block of learned scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    E,
    K,
    M,
    Knee,
    D,
    L,
    Alpha,
    Beta,
    Gamma,
    R,
    Power,
}

impl Group {
    /// Parameters owned by the transmitter.
    pub fn is_encoder_side(self) -> bool {
        matches!(
            self,
            Group::E | Group::K | Group::M | Group::Knee | Group::Power
        )
    }
}

/// One learned scalar: a group and a flat index inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub group: Group,
    pub index: usize,
}

impl Slot {
    pub fn name(&self) -> String {
        let i = self.index;
        match self.group {
            Group::E => format!("e{}", i + 1),
            Group::K => format!("k{}", i + 1),
            Group::M => format!("m{}", i + 1),
            Group::Knee => format!("lambda{}", i + 1),
            Group::D => format!("d[{}]", i),
            Group::L => format!("l{}", i + 1),
            Group::Alpha => format!("alpha{},{}", i / 2 + 1, i % 2 + 1),
            Group::Beta => format!("beta{},{}", i / 6 + 1, i % 6 + 1),
            Group::Gamma => format!("gamma{},{}", i / 3 + 1, i % 3 + 1),
            Group::R => format!("r{}", i + 1),
            Group::Power => format!("w{}", i + 1),
        }
    }
}

/// Ordered list of the trainable scalars of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub slots: Vec<Slot>,
}

impl ParamLayout {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        let mut slots = Vec::new();
        let mut push = |group: Group, range: std::ops::Range<usize>| {
            slots.extend(range.map(|index| Slot { group, index }));
        };
        match spec.encoder_order {
            EncoderOrder::Second => {
                push(Group::E, 0..2);
                push(Group::K, 0..4);
            }
            EncoderOrder::Third => {
                push(Group::E, 0..3);
                push(Group::K, 0..4);
                if spec.entanglement {
                    push(Group::M, 0..5);
                } else {
                    // m4 only couples h6 and h7 across steps
                    push(Group::M, 0..3);
                    push(Group::M, 4..5);
                }
            }
        }
        if spec.knee == KneeMode::LearnedVarying {
            push(Group::Knee, 0..2);
        }
        if spec.decoder.is_single_stage() {
            let (branches, width) = single_stage_shape(spec.decoder);
            push(Group::D, 0..branches * width);
            push(Group::L, 0..branches);
        } else {
            push(Group::Alpha, 0..6);
            push(Group::Beta, 0..36);
            push(Group::Gamma, 0..18);
            push(Group::R, 0..6);
        }
        push(Group::Power, 0..POWER_WEIGHTS);
        ParamLayout { slots }
    }

    /// Every scalar storage location of a spec, trainable or not.
    fn all_slots(spec: &ModelSpec) -> Vec<Slot> {
        let (branches, width) = single_stage_shape(spec.decoder);
        let sizes = [
            (Group::E, 3),
            (Group::K, 4),
            (Group::M, 5),
            (Group::Knee, 2),
            (Group::D, branches * width),
            (Group::L, branches),
            (Group::Alpha, 6),
            (Group::Beta, 36),
            (Group::Gamma, 18),
            (Group::R, 6),
            (Group::Power, POWER_WEIGHTS),
        ];
        sizes
            .iter()
            .flat_map(|&(group, n)| (0..n).map(move |index| Slot { group, index }))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.slots.iter().map(Slot::name).collect()
    }
}

/// Exact number of trainable scalars of a variant.
pub fn param_count(spec: &ModelSpec) -> Result<usize> {
    let spec = spec.normalized()?;
    Ok(ParamLayout::for_spec(&spec).len())
}

/// On-disk form: one named array per parameter group.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    schema_version: u32,
    model_spec: ModelSpec,
    e: Vec<f64>,
    k: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    knee: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<Vec<f64>>,
    power: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    calibration: Option<Vec<f64>>,
}

impl ParamFile {
    fn from_params(p: &ParamSet) -> Self {
        let spec = p.spec;
        let third = spec.encoder_order == EncoderOrder::Third;
        let e_len = if third { 3 } else { 2 };
        let rows = |m: &[f64], width: usize| -> Vec<Vec<f64>> {
            m.chunks(width).map(<[f64]>::to_vec).collect()
        };
        let single = spec.decoder.is_single_stage();
        ParamFile {
            schema_version: SCHEMA_VERSION,
            model_spec: spec,
            e: p.e[..e_len].to_vec(),
            k: p.k.to_vec(),
            m: third.then(|| p.m.to_vec()),
            knee: (spec.knee == KneeMode::LearnedVarying).then(|| p.knee.to_vec()),
            d: single.then(|| rows(&p.d, p.branch_width())),
            l: single.then(|| p.l.clone()),
            alpha: (!single).then(|| p.alpha.iter().map(|r| r.to_vec()).collect()),
            beta: (!single).then(|| p.beta.iter().map(|r| r.to_vec()).collect()),
            gamma: (!single).then(|| p.gamma.iter().map(|r| r.to_vec()).collect()),
            r: (!single).then(|| p.r.to_vec()),
            power: p.power.to_vec(),
            calibration: p.calibration.map(|c| c.to_vec()),
        }
    }

    fn into_params(self) -> Result<ParamSet> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidParams(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let spec = self.model_spec.normalized()?;
        let third = spec.encoder_order == EncoderOrder::Third;
        let single = spec.decoder.is_single_stage();
        let mut p = ParamSet::zeros(spec);

        fn fill(dst: &mut [f64], src: &[f64], what: &'static str) -> Result<()> {
            if src.len() != dst.len() {
                return Err(Error::LengthMismatch {
                    what,
                    expected: dst.len(),
                    actual: src.len(),
                });
            }
            dst.copy_from_slice(src);
            Ok(())
        }
        fn fill_rows<const W: usize>(
            dst: &mut [[f64; W]],
            src: &[Vec<f64>],
            what: &'static str,
        ) -> Result<()> {
            if src.len() != dst.len() {
                return Err(Error::LengthMismatch {
                    what,
                    expected: dst.len(),
                    actual: src.len(),
                });
            }
            for (d, s) in dst.iter_mut().zip(src) {
                fill(d, s, what)?;
            }
            Ok(())
        }
        fn need<T>(v: Option<T>, what: &str, spec: &ModelSpec) -> Result<T> {
            v.ok_or_else(|| Error::InvalidParams(format!("{spec} requires field '{what}'")))
        }
        fn forbid<T>(v: &Option<T>, what: &str, spec: &ModelSpec) -> Result<()> {
            match v {
                Some(_) => Err(Error::InvalidParams(format!(
                    "field '{what}' does not belong to {spec}"
                ))),
                None => Ok(()),
            }
        }

        let e_len = if third { 3 } else { 2 };
        fill(&mut p.e[..e_len], &self.e, "e")?;
        fill(&mut p.k, &self.k, "k")?;
        if third {
            fill(&mut p.m, &need(self.m, "m", &spec)?, "m")?;
            if !spec.entanglement && p.m[3] != 0.0 {
                return Err(Error::InvalidParams(
                    "m4 must be 0 when entanglement is disabled".into(),
                ));
            }
        } else {
            forbid(&self.m, "m", &spec)?;
        }
        match spec.knee {
            KneeMode::LearnedVarying => fill(&mut p.knee, &need(self.knee, "knee", &spec)?, "knee")?,
            KneeMode::FixedAtZero => forbid(&self.knee, "knee", &spec)?,
        }
        if single {
            let width = p.branch_width();
            let d = need(self.d, "d", &spec)?;
            if d.len() != p.l.len() {
                return Err(Error::LengthMismatch {
                    what: "d rows",
                    expected: p.l.len(),
                    actual: d.len(),
                });
            }
            for (j, row) in d.iter().enumerate() {
                fill(&mut p.d[j * width..(j + 1) * width], row, "d row")?;
            }
            fill(&mut p.l, &need(self.l, "l", &spec)?, "l")?;
            forbid(&self.alpha, "alpha", &spec)?;
            forbid(&self.beta, "beta", &spec)?;
            forbid(&self.gamma, "gamma", &spec)?;
            forbid(&self.r, "r", &spec)?;
        } else {
            fill_rows(&mut p.alpha, &need(self.alpha, "alpha", &spec)?, "alpha")?;
            fill_rows(&mut p.beta, &need(self.beta, "beta", &spec)?, "beta")?;
            fill_rows(&mut p.gamma, &need(self.gamma, "gamma", &spec)?, "gamma")?;
            fill(&mut p.r, &need(self.r, "r", &spec)?, "r")?;
            forbid(&self.d, "d", &spec)?;
            forbid(&self.l, "l", &spec)?;
        }
        fill(&mut p.power, &self.power, "power")?;
        if let Some(cal) = self.calibration {
            let mut c = [0.0; POWER_WEIGHTS];
            fill(&mut c, &cal, "calibration")?;
            p.calibration = Some(c);
        }
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{DecoderKind, KneeMode};

    #[test]
    fn documented_parameter_counts() {
        let spec = ModelSpec::enc3_dec4();
        assert_eq!(param_count(&spec).unwrap(), 90);
        assert_eq!(
            param_count(&spec.with_knee(KneeMode::LearnedVarying)).unwrap(),
            92
        );
        let power = ParamLayout::for_spec(&spec)
            .slots
            .iter()
            .filter(|s| s.group == Group::Power)
            .count();
        assert_eq!(power, 12);
    }

    #[test]
    fn enc2_dec2_count_enumerates_fields() {
        // encoder {e1, e2, k1..k4} + 5 branches x (3 inputs + bias) + 5 mixing + 12 power
        let expected = 6 + 5 * 4 + 5 + 12;
        assert_eq!(param_count(&ModelSpec::enc2_dec2()).unwrap(), expected);
        assert_eq!(expected, 43);
    }

    #[test]
    fn other_variant_counts() {
        let enc3 = 12;
        let power = 12;
        let cases = [
            (DecoderKind::Dec2Single, 5 * 4 + 5),
            (DecoderKind::Dec3Single, 7 * 5 + 7),
            (DecoderKind::Dec4Single, 7 * 6 + 7),
        ];
        for (dec, decoder_params) in cases {
            let spec = ModelSpec::enc3(dec);
            assert_eq!(param_count(&spec).unwrap(), enc3 + decoder_params + power);
        }
        let noent = ModelSpec::enc3_dec4().with_entanglement(false);
        assert_eq!(param_count(&noent).unwrap(), 89);
    }

    #[test]
    fn slot_names_unique() {
        let layout = ParamLayout::for_spec(&ModelSpec::enc3_dec4());
        let mut names = layout.names();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 90);
    }

    #[test]
    fn unknown_field_rejected() {
        let p = ParamSet::zeros(ModelSpec::enc2_dec2());
        let mut json: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        json["surprise"] = serde_json::json!([1.0]);
        assert!(ParamSet::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn foreign_group_rejected() {
        let p = ParamSet::zeros(ModelSpec::enc2_dec2());
        let mut json: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        json["r"] = serde_json::json!([0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(ParamSet::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let p = ParamSet::zeros(ModelSpec::enc2_dec2());
        let mut json: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        json["schema_version"] = serde_json::json!(99);
        assert!(ParamSet::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut p = ParamSet::zeros(ModelSpec::enc2_dec2());
        p.k[2] = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn power_groups_partition_steps() {
        let k = 50;
        let mut counts = [0usize; POWER_GROUPS];
        for t in 0..=k {
            counts[power_group(t, k)] += 1;
        }
        assert_eq!(counts, power_group_sizes(k));
        assert_eq!(power_group(k - 1, k), 3);
        assert_eq!(power_group(k - 2, k), 2);
    }

    proptest::proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            values in proptest::collection::vec(-1e3f64..1e3, 92),
            cal in proptest::collection::vec(1e-3f64..10.0, 12),
            variant in 0usize..4,
        ) {
            let spec = match variant {
                0 => ModelSpec::enc2_dec2(),
                1 => ModelSpec::enc3_dec4(),
                2 => ModelSpec::enc3_dec4().with_knee(KneeMode::LearnedVarying),
                _ => ModelSpec::enc3(DecoderKind::Dec3Single),
            };
            let mut p = ParamSet::zeros(spec);
            let n = p.layout().len();
            p.set_flat(&values[..n]).unwrap();
            let mut c = [0.0; POWER_WEIGHTS];
            c.copy_from_slice(&cal);
            p.calibration = Some(c);
            let back = ParamSet::from_json(&p.to_json()).unwrap();
            proptest::prop_assert_eq!(back.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            proptest::prop_assert_eq!(back, p);
        }
    }
}
