use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regfair::audits::{audit_calibration, audit_covariance_mc};
use regfair::dist::{OutcomeDist, OutcomeSpace};
use regfair::omni::*;
use regfair::population::{fixture_two_point, Hypothesis, HypothesisClass, PopulationInstance, Predictor};
use regfair::{Error, Rational, Scalar};

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn squared_loss() -> LossFunction<Rational> {
    let ys = [q(0, 1), q(1, 2), q(1, 1)];
    let table = (0..2)
        .map(|o| ys.iter().map(|y| (q(o, 1) - y.clone()) * (q(o, 1) - y.clone())).collect())
        .collect();
    LossFunction::new("sq", vec!["0".into(), "0.5".into(), "1".into()], table).unwrap()
}

/// Calibrated predictor whose hypotheses are constant on level sets, so
/// every conditional covariance vanishes.
fn calibrated_instance(seed: u64) -> (PopulationInstance<Rational>, HypothesisClass, Predictor<Rational>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 9;
    let groups = 3;
    let group: Vec<usize> = (0..n).map(|j| j % groups).collect();
    let p: Vec<Rational> = (0..n).map(|_| q(rng.gen_range(0..=8), 8)).collect();
    let truth = p.iter().map(|x| OutcomeDist::bernoulli(x.clone()).unwrap()).collect();
    let pop = PopulationInstance::new(
        (0..n).map(|j| j.to_string()).collect(),
        vec![q(1, n as i64); n],
        truth,
        OutcomeSpace::binary(),
    )
    .unwrap();
    let mean: Vec<Rational> = (0..groups)
        .map(|g| (0..n).filter(|&j| group[j] == g).map(|j| p[j].clone()).sum::<Rational>() / q(3, 1))
        .collect();
    let pred = Predictor::new(
        (0..n)
            .map(|j| OutcomeDist::bernoulli(mean[group[j]].clone()).unwrap())
            .collect(),
    )
    .unwrap();
    let range: Vec<String> = vec!["0".into(), "0.5".into(), "1".into()];
    let hyps = (0..3)
        .map(|h| {
            let per: Vec<usize> = (0..groups).map(|_| rng.gen_range(0..3)).collect();
            Hypothesis::new(format!("c{h}"), range.clone(), (0..n).map(|j| per[group[j]]).collect()).unwrap()
        })
        .collect();
    (pop, HypothesisClass::new(hyps, false).unwrap(), pred)
}

#[test]
fn covariance_path_on_convex_loss() {
    for seed in 0..30 {
        let (pop, class, pred) = calibrated_instance(seed);
        assert!(audit_calibration(&pop, &pred).unwrap().value.is_zero_tol());
        assert!(audit_covariance_mc(&pop, &pred, &class).unwrap().value.is_zero_tol());
        let r = omni_audit(&pop, &pred, &[squared_loss()], &class).unwrap();
        assert!(r.value.is_zero_tol(), "seed {seed}: {}", r.value);
    }
}

#[test]
fn two_point_gap_within_bound() {
    let (pop, class, pred) = fixture_two_point();
    let class = HypothesisClass::new(
        class
            .hypotheses()
            .iter()
            .map(|h| Hypothesis::new(h.name(), vec!["0".into(), "1".into()], h.values().to_vec()).unwrap())
            .collect(),
        false,
    )
    .unwrap();
    let losses = [LossFunction::zero_one(pop.outcomes())];
    let b = omni_bound_check(&pop, &pred, &losses, &class).unwrap();
    // Post-processing copies the point masses: loss ½ against constant ½.
    assert_eq!(b.omni, q(0, 1));
    assert_eq!(b.calibration, q(1, 2));
    assert_eq!(b.multi_accuracy, q(0, 1));
    assert!(b.holds);
    let r = omni_audit(&pop, &pred, &losses, &class).unwrap();
    assert_eq!(r.breakdown.len(), 1);
    assert_eq!(r.witness["loss"], "zero-one");
}

#[test]
fn bayes_rule_in_class_ties() {
    let (pop, _, _) = calibrated_instance(3);
    let truth = pop.truth_predictor();
    let loss = LossFunction::zero_one(pop.outcomes());
    let bayes: Vec<usize> = truth.values().iter().map(|v| post_process(&loss, v)).collect();
    let class = HypothesisClass::new(vec![Hypothesis::new("bayes", vec!["0".into(), "1".into()], bayes).unwrap()], false).unwrap();
    let r = omni_audit(&pop, &truth, &[loss], &class).unwrap();
    assert!(r.value.is_zero_tol());
    assert!(r.breakdown[0].1.is_zero_tol());
}

#[test]
fn range_outside_actions_is_rejected() {
    let (pop, _, pred) = calibrated_instance(1);
    let class = HypothesisClass::new(
        vec![Hypothesis::new("c", vec!["maybe".into()], vec![0; pop.len()]).unwrap()],
        false,
    )
    .unwrap();
    let r = omni_audit(&pop, &pred, &[LossFunction::zero_one(pop.outcomes())], &class);
    assert!(matches!(r, Err(Error::RangeMismatch(_))));
}

#[test]
fn calibration_transfer_at_zero() {
    let (pop, _, pred) = calibrated_instance(7);
    let loss = squared_loss();
    let acts: Vec<usize> = pred.values().iter().map(|v| post_process(&loss, v)).collect();
    let (real, modeled) = expected_losses(&pop, &pred, &loss, &acts).unwrap();
    assert_eq!(real, modeled);
}
