//! Pearson correlation of window features against the erroneous bit.

use std::io::Write;

use super::events::{feature_index, feature_names, ErrorEvent, FEATURES};

/// Correlation of one feature with `b[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCorrelation {
    pub name: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrelationReport {
    pub events: usize,
    pub features: Vec<FeatureCorrelation>,
    /// Features dropped because one side had zero variance.
    pub skipped: Vec<String>,
}

impl CorrelationReport {
    pub fn rho(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|f| f.name == name).map(|f| f.rho)
    }

    /// Features sorted by decreasing |rho|.
    pub fn ranked(&self) -> Vec<&FeatureCorrelation> {
        let mut v: Vec<_> = self.features.iter().collect();
        v.sort_by(|a, b| b.rho.abs().total_cmp(&a.rho.abs()));
        v
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "feature,rho")?;
        for f in &self.features {
            writeln!(out, "{},{}", f.name, f.rho)?;
        }
        for s in &self.skipped {
            writeln!(out, "{s},")?;
        }
        Ok(())
    }
}

/// Pearson correlation, or `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlates `b[i]` with every window feature.
pub fn correlate(events: &[ErrorEvent]) -> CorrelationReport {
    let names = feature_names();
    let target: Vec<f64> = events.iter().map(|e| e.features[feature_index("b", 0)]).collect();
    let mut report = CorrelationReport {
        events: events.len(),
        ..Default::default()
    };
    for (j, name) in names.into_iter().enumerate().take(FEATURES) {
        let column: Vec<f64> = events.iter().map(|e| e.features[j]).collect();
        match pearson(&target, &column) {
            Some(rho) => report.features.push(FeatureCorrelation { name, rho }),
            None => report.skipped.push(name),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_anti() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(pearson(&x, &x), Some(1.0));
        let y = [-2.0, -4.0, -6.0, -8.0];
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_is_skipped() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
    }

    #[test]
    fn affine_invariance() {
        let x = [0.3, -1.2, 2.5, 0.7, -0.1];
        let y = [1.0, 0.0, 1.0, 1.0, 0.0];
        let x2: Vec<f64> = x.iter().map(|v| 3.5 * v - 7.0).collect();
        let a = pearson(&x, &y).unwrap();
        let b = pearson(&x2, &y).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
