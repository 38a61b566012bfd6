//! Collects positions where (enc 2, dec 2) errs but (enc 3, dec 4) decodes
//! correctly, then ranks window features by correlation with the bit and
//! clusters the dominant noise features.
//!
//!     cargo run --release --example error_forensics -- [events]

use feedback_code::analysis::kmeans::DEFAULT_RESTARTS;
use feedback_code::analysis::{cluster_points, collect_discrepant, correlate, kmeans, CLUSTER_FEATURE_NAMES};
use feedback_code::bundled;
use feedback_code::{ChannelConfig, FeedbackSnr};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let count = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse())?;
    let a = bundled::load(bundled::ENC2_DEC2)?;
    let b = bundled::load(bundled::ENC3_DEC4)?;
    let channel = ChannelConfig::new(0.0, FeedbackSnr::Noiseless, 11, a.spec.block_len)?;
    let events = collect_discrepant(&a, &b, &channel, count, 50_000_000)?;
    println!("{} discrepant events", events.len());

    let corr = correlate(&events);
    println!("\nlargest |rho| with b[i]:");
    for f in corr.ranked().iter().skip(1).take(8) {
        println!("  {:<8} {:+.3}", f.name, f.rho);
    }

    let clusters = kmeans(&cluster_points(&events), 2, DEFAULT_RESTARTS, 5)?;
    println!("\ncentroids ({}):", CLUSTER_FEATURE_NAMES.join(", "));
    for (c, (centroid, size)) in clusters.centroids.iter().zip(clusters.cluster_sizes()).enumerate() {
        let vals: Vec<String> = centroid.iter().map(|v| format!("{v:+.2}")).collect();
        println!("  {c}: [{}]  {size} events", vals.join(", "));
    }
    Ok(())
}
