use fragaudit::datakit::synth_blobs;
use fragaudit::exppp::{self, ExpPPParams, VerifyConfig};
use fragaudit::measures::MeasureConfig;
use fragaudit::netcore::NetSpec;

fn setup() -> (NetSpec, fragaudit::datakit::Dataset, fragaudit::datakit::Dataset) {
    let spec = NetSpec::scale_invariant(&[10, 32, 32, 4]);
    let all = synth_blobs(400, 10, 4, 4.0, 11).unwrap();
    let (train, test) = all.split(200).unwrap();
    (spec, train, test)
}

#[test]
fn equivalence_holds_at_t200() {
    let (spec, train, _) = setup();
    let cfg = VerifyConfig::default();
    let configs = [
        (0.0, 0.9),
        (0.0, 0.8),
        (0.0, 0.6),
        (5e-4, 0.85),
    ];
    for (lambda, alpha) in configs {
        let params = ExpPPParams { eta0: 0.01, gamma: 0.9, lambda, alpha };
        let d = exppp::derive(&params).unwrap();
        assert!(d.remark_ok);
        let r = exppp::verify_equivalence(&spec, &train, &params, &cfg).unwrap().report;
        assert!(
            r.passed,
            "alpha {alpha} lambda {lambda}: deviation {} logits {} first fail {:?}",
            r.max_deviation, r.max_logit_diff, r.first_failing_step
        );
        assert!(r.max_grad_scale_err < 1e-6);
        assert!(r.seconds < 10.0);
    }
}

#[test]
fn inflation_endpoint_ratios() {
    let (spec, train, test) = setup();
    let params = ExpPPParams { eta0: 0.01, gamma: 0.9, lambda: 0.0, alpha: 0.9 };
    let mcfg = MeasureConfig {
        only: Some(vec!["PARAM_NORM".into(), "PARAMS".into(), "FRO_DIST".into(), "PATH_NORM".into()]),
        ..MeasureConfig::default()
    };
    let r = exppp::inflation_demo(&spec, &train, &test, &params, &VerifyConfig::default(), &mcfg).unwrap();
    assert!(r.equivalence_passed);
    assert_eq!(r.test_error_a, r.test_error_b);
    let pn = r.ratios["PARAM_NORM"].unwrap();
    assert!((pn / r.expected_norm_ratio - 1.0).abs() <= 1e-6, "ratio {pn} vs {}", r.expected_norm_ratio);
    assert_eq!(r.ratios["PARAMS"], Some(1.0));
}
