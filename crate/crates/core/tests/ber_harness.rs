use feedback_code::ber::{run_ber, sweep, GridPoint, StopRule, SweepGrid, CSV_HEADER};
use feedback_code::bundled;
use feedback_code::params::ParamSet;
use feedback_code::{ChannelConfig, FeedbackSnr};

fn enc2() -> ParamSet {
    bundled::load(bundled::ENC2_DEC2).unwrap()
}

fn small_stop(target: u64) -> StopRule {
    StopRule {
        target_errors: target,
        max_bits: 5_000_000,
        chunk_blocks: 512,
        ..StopRule::default()
    }
}

#[test]
fn noiseless_forward_link_has_no_errors() {
    let p = enc2();
    let cfg = ChannelConfig::new(f64::INFINITY, FeedbackSnr::Noiseless, 1, 50).unwrap();
    let stop = StopRule {
        max_bits: 100_000,
        ..small_stop(1)
    };
    let r = run_ber(&p, &cfg, &stop).unwrap();
    assert_eq!(r.bit_errors, 0);
    assert_eq!(r.ber, 0.0);
    assert_eq!(r.bits, r.blocks * 50);
    assert!(r.bits >= 100_000);
}

#[test]
fn silent_decoder_guesses_at_chance() {
    let mut p = enc2();
    p.d.iter_mut().for_each(|v| *v = 0.0);
    p.l.iter_mut().for_each(|v| *v = 0.0);
    let cfg = ChannelConfig::new(0.0, FeedbackSnr::Noiseless, 3, 50).unwrap();
    let stop = StopRule {
        target_errors: u64::MAX,
        max_bits: 1_000_000,
        ..StopRule::default()
    };
    let r = run_ber(&p, &cfg, &stop).unwrap();
    assert_eq!(r.bits, 1_000_000);
    assert!((r.ber - 0.5).abs() < 0.01, "{}", r.ber);
}

#[test]
fn stops_on_error_target_and_brackets_estimate() {
    let p = enc2();
    let cfg = ChannelConfig::new(-1.0, FeedbackSnr::Noiseless, 5, 50).unwrap();
    let r = run_ber(&p, &cfg, &small_stop(100)).unwrap();
    assert!(r.bit_errors >= 100);
    assert!(r.bits < 5_000_000);
    assert!(r.ci_low <= r.ber && r.ber <= r.ci_high);
    assert_eq!(r.ber, r.bit_errors as f64 / r.bits as f64);
}

#[test]
fn min_bits_is_honoured() {
    let p = enc2();
    let cfg = ChannelConfig::new(-1.0, FeedbackSnr::Noiseless, 5, 50).unwrap();
    let stop = StopRule {
        min_bits: 3_000_000,
        ..small_stop(10)
    };
    let r = run_ber(&p, &cfg, &stop).unwrap();
    assert!(r.bits >= 3_000_000);
}

#[test]
fn result_does_not_depend_on_worker_count() {
    let p = enc2();
    let cfg = ChannelConfig::new(0.0, FeedbackSnr::Db(15.0), 9, 50).unwrap();
    let run = |workers| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        let mut r = pool.install(|| run_ber(&p, &cfg, &small_stop(50))).unwrap();
        r.seconds = 0.0;
        r
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn empty_grid_writes_header_only() {
    let mut out = Vec::new();
    let reports = sweep(&[enc2()], &[], 1, &small_stop(10), true, &mut out).unwrap();
    assert!(reports.is_empty());
    assert_eq!(String::from_utf8(out).unwrap(), format!("{CSV_HEADER}\n"));
}

#[test]
fn sweep_rows_follow_schema() {
    let models = [enc2(), bundled::load(bundled::ENC3_DEC4).unwrap()];
    let points = SweepGrid::product(&[-1.0, 0.0, 1.0, 2.0], &[FeedbackSnr::Noiseless]);
    let stop = small_stop(20);
    let mut first = Vec::new();
    sweep(&models, &points, 1, &stop, true, &mut first).unwrap();
    let mut second = Vec::new();
    sweep(&models, &points, 1, &stop, true, &mut second).unwrap();
    assert_eq!(first, second, "deterministic sweeps must be byte-identical");

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for model in ["enc2/dec2", "enc3/dec4-two-stage"] {
        assert_eq!(rows.iter().filter(|r| r[0] == model).count(), 4);
    }
    for r in &rows {
        assert_eq!(r.len(), 9);
        assert_eq!(r[2], "inf");
        let num = |i: usize| r[i].parse::<f64>().unwrap();
        let (bits, errors, ber) = (num(3), num(4), num(5));
        assert!((ber - errors / bits).abs() <= 1e-12 * ber.max(1e-300));
        assert!(num(6) <= ber && ber <= num(7));
        assert_eq!(num(8), 0.0);
    }
}

#[test]
fn grid_file_round_trip() {
    let grid = SweepGrid {
        models: vec!["a.json".into()],
        points: vec![
            GridPoint {
                snr_f_db: 0.0,
                snr_fb: FeedbackSnr::Noiseless,
            },
            GridPoint {
                snr_f_db: 0.0,
                snr_fb: FeedbackSnr::Db(10.0),
            },
        ],
        seed: 4,
        stop: StopRule::default(),
    };
    let text = serde_json::to_string(&grid).unwrap();
    assert!(text.contains("\"inf\""));
    let back: SweepGrid = serde_json::from_str(&text).unwrap();
    assert_eq!(back, grid);
}
