use feedback_code::bundled;
use feedback_code::channel::BlockNoise;
use feedback_code::params::param_count;
use feedback_code::selftest::{mixed_block, random_params};
use feedback_code::trainer::{initial_params, validate_params, validation_blocks, TrainConfig};
use feedback_code::{calibrate, encode_block, FeedbackSnr, KneeMode, ModelSpec, ParamSet};

#[test]
fn bundled_models_have_expected_sizes() {
    for (name, count) in [
        (bundled::ENC2_DEC2, 43),
        (bundled::ENC3_DEC4, 90),
        (bundled::ENC3_DEC2, 49),
        (bundled::ENC3_DEC3, 66),
        (bundled::ENC3_DEC4_SINGLE, 73),
        (bundled::ENC3_NOENT_DEC4, 89),
        ("enc3_dec4_knee_fb10", 92),
    ] {
        let p = bundled::load(name).unwrap();
        assert_eq!(param_count(&p.spec).unwrap(), count, "{name}");
        assert!(p.calibration.is_some(), "{name}");
    }
}

#[test]
fn bundled_model_file_round_trips_exactly() {
    let p = bundled::load(bundled::ENC3_DEC4).unwrap();
    let back = ParamSet::from_json(&p.to_json()).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.fingerprint(), p.fingerprint());
}

fn perturb(noise: &mut BlockNoise, from_phase1: usize, from_phase2: usize) {
    for t in 0..noise.steps() {
        if t >= from_phase1 {
            noise.n[t] += 0.7;
            noise.fb[t] -= 0.4;
        }
        if t >= from_phase2 {
            noise.n1[t] -= 0.9;
            noise.n2[t] += 0.5;
            noise.fb1[t] += 0.3;
            noise.fb2[t] -= 0.2;
        }
    }
}

#[test]
fn encoder_is_causal() {
    let spec = ModelSpec::enc3_dec4().with_knee(KneeMode::LearnedVarying);
    let params = random_params(spec, 8);
    let base = mixed_block(&spec, 8, 1);
    let x0 = encode_block(&base, &params).unwrap().x;
    for i in [0usize, 7, 30, 49] {
        let mut noise = base.clone();
        perturb(&mut noise, i + 1, i);
        let x1 = encode_block(&noise, &params).unwrap().x;
        for s in 0..3 {
            assert_eq!(x0[s][..=i], x1[s][..=i], "stream {s} step {i}");
        }
        assert_ne!(x0[1], x1[1]);
    }
}

#[test]
fn calibrated_random_encoder_meets_power_constraint() {
    let mut p = random_params(ModelSpec::enc3_dec4(), 4);
    calibrate(&mut p, 0.0, FeedbackSnr::Noiseless, 20_000, 5).unwrap();
    let cfg = feedback_code::ChannelConfig::new(0.0, FeedbackSnr::Noiseless, 77, 50).unwrap();
    let blocks = 20_000;
    let mean: f64 = (0..blocks)
        .map(|i| {
            let noise = feedback_code::draw_block_noise(&cfg, i);
            encode_block(&noise, &p).unwrap().mean_power()
        })
        .sum::<f64>()
        / blocks as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn training_beats_initialization_on_held_out_blocks() {
    let cfg = TrainConfig {
        spec: ModelSpec::enc2_dec2(),
        validation_blocks: 2000,
        ..TrainConfig::default()
    };
    let blocks = validation_blocks(&cfg);
    let mut fresh = initial_params(cfg.spec, cfg.init_scale, 1);
    calibrate(&mut fresh, 0.0, FeedbackSnr::Noiseless, 20_000, 5).unwrap();
    let (fresh_bce, _) = validate_params(&fresh, &blocks).unwrap();
    let (trained_bce, trained_ber) = validate_params(&bundled::load(bundled::ENC2_DEC2).unwrap(), &blocks).unwrap();
    assert!(trained_bce < 0.05 * fresh_bce, "{trained_bce} vs {fresh_bce}");
    assert!(trained_ber < 1e-3, "{trained_ber}");
}
