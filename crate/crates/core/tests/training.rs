use feedback_code::trainer::{adapt_warm_start, healthy_window_fraction, learning_rate, train, Freeze, TrainConfig};
use feedback_code::{bundled, DecoderKind, FeedbackSnr, KneeMode, ModelSpec};

fn quick(spec: ModelSpec, steps: usize) -> TrainConfig {
    TrainConfig {
        spec,
        steps,
        batch_blocks: 64,
        restarts: 1,
        warmup_steps: 20,
        eval_every: 50,
        validation_blocks: 256,
        calibration_blocks: 2000,
        ..TrainConfig::default()
    }
}

#[test]
fn short_run_reduces_loss() {
    let report = train(&quick(ModelSpec::enc2_dec2(), 300), None).unwrap();
    let first: f64 = report.log[..20].iter().map(|r| r.bce).sum::<f64>() / 20.0;
    let last: f64 = report.log[report.log.len() - 20..].iter().map(|r| r.bce).sum::<f64>() / 20.0;
    assert!(last < 0.5 * first, "{first} -> {last}");
    assert!(report.params.calibration.is_some());
    let mut csv = Vec::new();
    report.write_log_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("step,bce,grad_norm,lr,val_ber\n"));
    assert_eq!(text.lines().count(), 301);
}

#[test]
fn training_is_deterministic() {
    let cfg = quick(ModelSpec::enc2_dec2(), 40);
    let a = train(&cfg, None).unwrap();
    let b = train(&cfg, None).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn frozen_encoder_is_untouched() {
    let base = bundled::load(bundled::ENC3_DEC4).unwrap();
    let mut cfg = quick(ModelSpec::enc3(DecoderKind::Dec3Single), 30);
    cfg.freeze = Freeze::Encoder;
    let report = train(&cfg, Some(&base)).unwrap();
    let p = report.params;
    assert_eq!((p.e, p.k, p.m, p.power), (base.e, base.k, base.m, base.power));
    assert_eq!(p.spec.decoder, DecoderKind::Dec3Single);
}

#[test]
fn frozen_decoder_without_entanglement_keeps_m4_zero() {
    let base = bundled::load(bundled::ENC3_DEC4).unwrap();
    let mut cfg = quick(ModelSpec::enc3_dec4().with_entanglement(false), 30);
    cfg.freeze = Freeze::Decoder;
    let p = train(&cfg, Some(&base)).unwrap().params;
    assert_eq!(p.m[3], 0.0);
    assert_eq!((p.alpha, p.beta, p.gamma, p.r), (base.alpha, base.beta, base.gamma, base.r));
    assert_ne!(p.e, base.e);
}

#[test]
fn learned_knee_needs_noisy_feedback() {
    let cfg = quick(ModelSpec::enc3_dec4().with_knee(KneeMode::LearnedVarying), 10);
    assert!(cfg.validate().is_err());
    let ok = TrainConfig {
        snr_fb: vec![FeedbackSnr::Db(10.0)],
        ..cfg
    };
    assert!(ok.validate().is_ok());
}

#[test]
fn warm_start_rejects_other_encoder_order() {
    let mut p = bundled::load(bundled::ENC2_DEC2).unwrap();
    assert!(adapt_warm_start(&mut p, ModelSpec::enc3_dec4(), 0.1, 1).is_err());
}

#[test]
fn schedule_warms_up_and_decays() {
    let cfg = TrainConfig::default();
    assert!(learning_rate(&cfg, 0, 1000) < learning_rate(&cfg, 199, 1000));
    assert!((learning_rate(&cfg, 200, 1000) - cfg.lr).abs() < 1e-12);
    let end = learning_rate(&cfg, 999, 1000);
    assert!(end < 0.05 * cfg.lr && end >= cfg.lr * cfg.lr_floor);
}

#[test]
fn health_check_tolerates_noise_but_not_divergence() {
    let falling: Vec<f64> = (0..2000).map(|i| 1.0 / (1.0 + i as f64 / 100.0) + 0.01 * ((i * 7919) % 13) as f64 / 13.0).collect();
    assert_eq!(healthy_window_fraction(&falling, 500), 1.0);
    let mut rising = falling.clone();
    rising[1500..].iter_mut().for_each(|v| *v += 1.0);
    assert!(healthy_window_fraction(&rising, 500) < 1.0);
}
