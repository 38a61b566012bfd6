//! Central finite-difference check of the analytic gradient.

use crate::channel::BlockNoise;
use crate::error::Result;
use crate::params::ParamSet;

use super::grad::{batch_loss, loss_and_grad, NormMode};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Gradient magnitudes below this are compared in absolute terms. Central
/// differences at `FD_STEP` carry a truncation error of about `FD_STEP^2 f'''/6`,
/// around 1e-9 here, so smaller components cannot be resolved to 1e-5 relative.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CoordinateCheck {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coordinates: Vec<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.coordinates
            .iter()
            .map(|c| c.rel_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CoordinateCheck> {
        self.coordinates
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - n| / max(|a|, |n|)`, or `|a - n| / MAGNITUDE_FLOOR` when both are tiny.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares every trainable coordinate against a central difference with step `step`.
pub fn check_gradient(
    params: &ParamSet,
    blocks: &[BlockNoise],
    mode: NormMode,
    step: f64,
) -> Result<GradCheckReport> {
    let analytic = loss_and_grad(params, blocks, mode)?.grad;
    let mut coordinates = Vec::new();
    for slot in params.layout().slots {
        let mut plus = params.clone();
        *plus.get_mut(slot) += step;
        let mut minus = params.clone();
        *minus.get_mut(slot) -= step;
        let numeric = (batch_loss(&plus, blocks, mode)? - batch_loss(&minus, blocks, mode)?) / (2.0 * step);
        let a = analytic.get(slot);
        coordinates.push(CoordinateCheck {
            name: slot.name(),
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        });
    }
    Ok(GradCheckReport { coordinates })
}
