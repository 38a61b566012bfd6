use feedback_code::analysis::{
    cluster_points, collect_discrepant, correlate, feature_index, kmeans, outlier_table,
};
use feedback_code::bundled;
use feedback_code::{ChannelConfig, FeedbackSnr};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn channel(seed: u64) -> ChannelConfig {
    ChannelConfig::new(-1.0, FeedbackSnr::Noiseless, seed, 50).unwrap()
}

#[test]
fn identical_models_have_no_discrepant_events() {
    let a = bundled::load(bundled::ENC2_DEC2).unwrap();
    let events = collect_discrepant(&a, &a, &channel(1), 10, 20_000).unwrap();
    assert!(events.is_empty());
}

#[test]
fn requested_count_is_exact_and_windows_are_interior() {
    let a = bundled::load(bundled::ENC2_DEC2).unwrap();
    let b = bundled::load(bundled::ENC3_DEC4).unwrap();
    let events = collect_discrepant(&a, &b, &channel(2), 25, 1_000_000).unwrap();
    assert_eq!(events.len(), 25);
    for e in &events {
        assert!((5..=46).contains(&e.position));
        let bit = e.bit();
        assert!(bit == 0.0 || bit == 1.0);
    }
    let corr = correlate(&events);
    assert_eq!(corr.rho("b[i]"), Some(1.0));
}

#[test]
fn swapped_roles_give_disjoint_events() {
    let a = bundled::load(bundled::ENC2_DEC2).unwrap();
    let b = bundled::load(bundled::ENC3_DEC4).unwrap();
    let ab = collect_discrepant(&a, &b, &channel(3), usize::MAX, 30_000).unwrap();
    let ba = collect_discrepant(&b, &a, &channel(3), usize::MAX, 30_000).unwrap();
    assert!(!ab.is_empty());
    for e in &ab {
        assert!(!ba.iter().any(|f| f.block == e.block && f.position == e.position));
    }
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let centres = [[4.0, -4.0, 4.0], [-4.0, 4.0, -4.0]];
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for i in 0..400 {
        let c = i % 2;
        points.push(centres[c].iter().map(|m| m + noise.sample(&mut rng)).collect::<Vec<f64>>());
        labels.push(c);
    }
    let r = kmeans(&points, 2, 10, 1).unwrap();
    let flip = r.assignments[0] != labels[0];
    for (a, l) in r.assignments.iter().zip(&labels) {
        assert_eq!(*a, if flip { 1 - l } else { *l });
    }
    let fewer = kmeans(&points, 2, 1, 1).unwrap();
    assert!(r.inertia <= fewer.inertia);
}

#[test]
fn cluster_points_pick_the_five_noise_features() {
    let a = bundled::load(bundled::ENC2_DEC2).unwrap();
    let b = bundled::load(bundled::ENC3_DEC4).unwrap();
    let events = collect_discrepant(&a, &b, &channel(4), 3, 1_000_000).unwrap();
    let pts = cluster_points(&events);
    assert_eq!(pts[0].len(), 5);
    assert_eq!(pts[0][0], events[0].features[feature_index("n", 0)]);
    assert_eq!(pts[0][4], events[0].features[feature_index("n2", 1)]);
}

#[test]
fn quiet_scenarios_flag_nothing() {
    let p = bundled::load(bundled::ENC3_DEC4).unwrap();
    let table = outlier_table(&p, 0.0);
    assert!(table.rows.iter().all(|r| !r.flagged && !r.pass));
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
}
