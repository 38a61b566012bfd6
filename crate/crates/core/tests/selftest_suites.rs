use feedback_code::selftest::{gradient_suite, oracle_equivalence};

#[test]
fn oracle_small() {
    for check in oracle_equivalence(500, 3).unwrap() {
        println!("{check:?}");
        assert!(check.worst() <= 1e-12, "{check:?}");
    }
}

#[test]
fn gradients_small() {
    let mut worst = 0.0f64;
    for check in gradient_suite(2, 5).unwrap() {
        println!("{check:?}");
        worst = worst.max(check.max_rel_error);
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn knee_margin_sees_the_kink() {
    use feedback_code::selftest::{knee_margin, mixed_block, random_params};
    use feedback_code::{KneeMode, ModelSpec};
    let spec = ModelSpec::enc2_dec2().with_knee(KneeMode::LearnedVarying);
    let mut p = random_params(spec, 3);
    let block = mixed_block(&spec, 3, 0);
    let t = 5;
    let eps = block.eps(t);
    if block.bits[t] == 0 {
        p.knee[0] = -eps;
    } else {
        p.knee[1] = eps;
    }
    assert!(knee_margin(&p, std::slice::from_ref(&block)) < 1e-15);
    let fixed = random_params(ModelSpec::enc2_dec2(), 3);
    assert_eq!(knee_margin(&fixed, &[block]), f64::INFINITY);
}
