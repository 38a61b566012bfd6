//! Lloyd's k-means with k-means++ seeding and deterministic restarts.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::events::{feature_index, ErrorEvent};

/// Restarts used by the analysis pipeline.
pub const DEFAULT_RESTARTS: usize = 50;
const MAX_ITERATIONS: usize = 1000;

/// The five noise features the clustering runs on.
pub const CLUSTER_FEATURES: [(&str, isize); 5] = [("n", 0), ("n1", 0), ("n2", 0), ("n1", 1), ("n2", 1)];
pub const CLUSTER_FEATURE_NAMES: [&str; 5] = ["n[i]", "n1[i]", "n2[i]", "n1[i+1]", "n2[i+1]"];

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
    pub iterations: usize,
    /// Objective after every Lloyd iteration of the kept restart.
    pub history: Vec<f64>,
}

impl KMeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn write_centroids_csv<W: Write>(&self, names: &[&str], mut out: W) -> std::io::Result<()> {
        writeln!(out, "cluster,size,{}", names.join(","))?;
        let sizes = self.cluster_sizes();
        for (c, centroid) in self.centroids.iter().enumerate() {
            let values: Vec<String> = centroid.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{c},{},{}", sizes[c], values.join(","))?;
        }
        Ok(())
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d[i] = d[i].min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansResult {
    let dim = points[0].len();
    let k = centroids.len();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            // An empty cluster keeps its previous centroid.
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let mut changed = false;
        let mut inertia = 0.0;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (c, d) = nearest(p, &centroids);
            if c != *a {
                changed = true;
                *a = c;
            }
            inertia += d;
        }
        history.push(inertia);
        if !changed || iterations >= MAX_ITERATIONS {
            return KMeansResult {
                centroids,
                assignments,
                inertia,
                iterations,
                history,
            };
        }
    }
}

/// Best of `restarts` k-means runs by inertia; the first run wins ties.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::TooFewPoints { k, points: points.len() });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidConfig("points have different dimensions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, seed_plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// The five-feature vectors clustered by the analysis.
pub fn cluster_points(events: &[ErrorEvent]) -> Vec<Vec<f64>> {
    events
        .iter()
        .map(|e| CLUSTER_FEATURES.iter().map(|&(k, o)| e.features[feature_index(k, o)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 0.0]];
        let r = kmeans(&pts, 1, 3, 7).unwrap();
        assert!((r.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((r.centroids[0][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![vec![0.0]];
        assert!(matches!(kmeans(&pts, 2, 1, 0), Err(Error::TooFewPoints { k: 2, points: 1 })));
    }

    #[test]
    fn objective_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let r = kmeans(&pts, 4, 5, 11).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let c = vec![vec![1.0], vec![-1.0]];
        assert_eq!(nearest(&[0.0], &c).0, 0);
    }
}
