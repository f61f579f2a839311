use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regfair::audits::audit_multi_accuracy;
use regfair::construct::*;
use regfair::dist::{make_coordinate_grid, OutcomeDist, OutcomeSpace, SimplexGrid};
use regfair::noregret::{UpdateKind, UpdateRule};
use regfair::oi::{audit_oi, make_family, oi_advantage, DistRef, FamilyParams, Tabulated};
use regfair::population::{
    fixture_two_point, random_instance, sample, HypothesisClass, PopulationInstance, Predictor, RandomSpec,
};
use regfair::{Error, Rational, Scalar};

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// One individual with `p* = Bern(0.3)`, `p̃ = Bern(0.7)` and `A = 1[o = 1]`,
/// so `Δ_A = 0.4`.
fn shifted_coin() -> (PopulationInstance<Rational>, Predictor<Rational>, DistRef<Rational>) {
    let pop = PopulationInstance::new(
        vec!["x".into()],
        vec![q(1, 1)],
        vec![OutcomeDist::bernoulli(q(3, 10)).unwrap()],
        OutcomeSpace::binary(),
    )
    .unwrap();
    let pred = Predictor::new(vec![OutcomeDist::bernoulli(q(7, 10)).unwrap()]).unwrap();
    let a: DistRef<Rational> = Arc::new(Tabulated {
        name: "A".into(),
        table: vec![vec![q(0, 1), q(1, 1)]],
    });
    (pop, pred, a)
}

#[test]
fn wal_returns_the_advantaged_member() {
    let (pop, pred, a) = shifted_coin();
    assert_eq!(oi_advantage(&pop, &pred, a.as_ref()).unwrap(), q(2, 5));
    let fam = make_family(
        FamilyParams::Explicit {
            members: vec![a.clone(), Arc::new(regfair::oi::Negated(a.clone()))],
            closed_under_negation: true,
        },
        &HypothesisClass::constant(1),
    )
    .unwrap();
    let cfg = WalConfig::new(0.2, 0.1, 2f64.ln()).unwrap();
    assert_eq!(cfg.n, (8.0 * (4.0f64 / 0.1).ln() / 0.01).ceil() as u64);
    let mut hits = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = sample(&pop, &mut rng, cfg.n as usize).unwrap();
        if let Some((found, _)) = wal_erm_samples(&fam, &cfg, &pop, &samples, &pred).unwrap() {
            if found.name() == "A" {
                hits += 1;
            }
        }
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn wal_on_ground_truth_is_harmless() {
    let (pop, _, a) = shifted_coin();
    let truth = pop.truth_predictor();
    let fam = make_family(
        FamilyParams::Explicit {
            members: vec![a.clone(), Arc::new(regfair::oi::Negated(a))],
            closed_under_negation: true,
        },
        &HypothesisClass::constant(1),
    )
    .unwrap();
    let cfg = WalConfig::new(0.2, 0.1, 2f64.ln()).unwrap();
    let mut ok = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let samples = sample(&pop, &mut rng, cfg.n as usize).unwrap();
        match wal_erm_samples(&fam, &cfg, &pop, &samples, &truth).unwrap() {
            None => ok += 1,
            Some((found, _)) => {
                if oi_advantage(&pop, &truth, found.as_ref()).unwrap() <= q(1, 10) {
                    ok += 1
                }
            }
        }
    }
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn sampled_from_ground_truth_returns_at_once() {
    let (pop, class, _) = fixture_two_point();
    let fam = make_family(FamilyParams::Mc(SimplexGrid::coordinate(2, 4).unwrap()), &class).unwrap();
    let rule = sampled_rule(UpdateKind::Mwu, 0.2, 2).unwrap();
    let cfg = WalConfig::for_family(0.2, 0.1, &fam).unwrap();
    let truth = pop.truth_predictor();
    let (p, tr) = construct_sampled(&pop, &fam, 0.2, &rule, &cfg, 7, Some(&truth)).unwrap();
    assert_eq!(p, truth);
    assert!(tr.iterations.is_empty());
    assert_eq!(tr.sample_count, cfg.n);
}

#[test]
fn sampled_transcripts_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let spec = RandomSpec {
        individuals: 6,
        outcomes: 2,
        hypotheses: 2,
        ..RandomSpec::default()
    };
    let (pop, class, _) = random_instance(&mut rng, &spec).unwrap();
    // The ε = 0.2 coordinate grid over two outcomes is empty.
    assert!(matches!(
        make_coordinate_grid::<Rational>(2, 0.2),
        Err(Error::PrecisionTooCoarse(0))
    ));
    let fam = make_family(FamilyParams::Mc(SimplexGrid::coordinate(2, 4).unwrap()), &class).unwrap();
    let rule = sampled_rule(UpdateKind::Mwu, 0.2, 2).unwrap();
    let cfg = WalConfig::for_family(0.2, 0.1, &fam).unwrap();
    let a = construct_sampled(&pop, &fam, 0.2, &rule, &cfg, 3, None).unwrap().1;
    let b = construct_sampled(&pop, &fam, 0.2, &rule, &cfg, 3, None).unwrap().1;
    assert_eq!(a.to_json().to_string(), b.to_json().to_string());
    assert_eq!(a.sample_count, cfg.n * (a.iterations.len() as u64 + 1));
}

#[test]
fn exact_pgd_respects_its_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = RandomSpec {
        individuals: 8,
        outcomes: 3,
        hypotheses: 3,
        ..RandomSpec::default()
    };
    let (pop, class, pred) = random_instance(&mut rng, &spec).unwrap();
    let fam = make_family(FamilyParams::Mc(make_coordinate_grid(3, 0.1).unwrap()), &class).unwrap();
    let rule = UpdateRule::for_accuracy(UpdateKind::Pgd, 0.1, 3).unwrap();
    let (p, tr) = construct_exact(&pop, &fam, &q(1, 10), &rule, Some(&pred)).unwrap();
    assert!((tr.iterations.len() as f64) < tr.iteration_bound.max(1.0));
    assert!(tr.iteration_bound <= 2.0 * 3.0 / 0.01);
    assert!(audit_oi(&pop, &p, &fam).unwrap().value <= q(1, 10));
}

#[test]
fn mwu_rejects_unreachable_start() {
    let (pop, class, pred) = fixture_two_point();
    let fam = make_family(FamilyParams::Mc(SimplexGrid::coordinate(2, 2).unwrap()), &class).unwrap();
    let rule = UpdateRule::for_accuracy(UpdateKind::Mwu, 0.1, 2).unwrap();
    // Point masses give infinite divergence from the half-half truth.
    assert!(matches!(
        construct_exact(&pop, &fam, &q(1, 10), &rule, Some(&pred)),
        Err(Error::Construction(_))
    ));
}

#[test]
fn label_full_slice_event_on_point_masses() {
    let (_, _, pred) = fixture_two_point();
    let grid = SimplexGrid::coordinate(2, 1).unwrap();
    let event = SliceEvent::Explicit((0..grid.size()).map(|g| (1usize, g)).collect());
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        assert_eq!(label(1, 0, &pred, &grid, &event, &mut rng).unwrap(), 1);
    }
}

#[test]
fn randomized_selection_requires_closed_class() {
    let (pop, class, pred) = fixture_two_point();
    let grid = SimplexGrid::coordinate(2, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = select_distinguisher_randomized(&pop, &pred, &class, &grid, 0.1, 0.1, &FiniteClassErm, &mut rng);
    assert!(matches!(r, Err(Error::Domain(_))));
}

#[test]
fn low_degree_one_matches_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let spec = RandomSpec {
        individuals: 10,
        outcomes: 4,
        hypotheses: 1,
        ..RandomSpec::default()
    };
    let (pop, _, _) = random_instance(&mut rng, &spec).unwrap();
    let class = HypothesisClass::constant(pop.len());
    let (p, tr) = construct_low_degree(&pop, &class, 1, 0.05, &LowDegreeMode::Exact, None).unwrap();
    assert!(tr.iterations.len() as f64 <= 2.0 * 4f64.ln() / 0.0025);
    // Degree one against the constant class is the marginal per outcome.
    for o in 0..pop.ell() {
        let real: Rational = (0..pop.len()).map(|j| pop.weight(j).clone() * pop.truth()[j].get(o).clone()).sum();
        let modeled: Rational = (0..pop.len()).map(|j| pop.weight(j).clone() * p.get(j).get(o).clone()).sum();
        assert!((real - modeled).abs() <= q(1, 20));
    }
    let truth = pop.truth_predictor();
    let (same, tr) = construct_low_degree(&pop, &class, 1, 0.05, &LowDegreeMode::Exact, Some(&truth)).unwrap();
    assert_eq!(same, truth);
    assert!(tr.iterations.is_empty());
}

#[test]
fn low_degree_bounds_scale_with_log_ell() {
    let mut observed = Vec::new();
    for ell in [4usize, 8] {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + ell as u64);
        let spec = RandomSpec {
            individuals: 8,
            outcomes: ell,
            hypotheses: 2,
            ..RandomSpec::default()
        };
        let (pop, class, _) = random_instance(&mut rng, &spec).unwrap();
        let (_, tr) = construct_low_degree(&pop, &class, 2, 0.1, &LowDegreeMode::Exact, None).unwrap();
        assert!((tr.iterations.len() as f64) < tr.iteration_bound.max(1.0));
        observed.push(tr.iteration_bound);
    }
    // Uniform starts give E[KL] ≤ ln ℓ, so the bounds stay within ln 8/ln 4.
    assert!(observed[0] <= 2.0 * 4f64.ln() / 0.01 + 1e-9);
    assert!(observed[1] <= 2.0 * 8f64.ln() / 0.01 + 1e-9);
    assert!(((2.0 * 8f64.ln()) / (2.0 * 4f64.ln()) - 1.5).abs() < 1e-12);
}

#[test]
fn low_degree_sampled_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let spec = RandomSpec {
        individuals: 6,
        outcomes: 3,
        hypotheses: 2,
        ..RandomSpec::default()
    };
    let (pop, class, _) = random_instance(&mut rng, &spec).unwrap();
    let mode = LowDegreeMode::Sampled {
        beta: 0.1,
        seed: 9,
        vc: Some(2),
    };
    let (p, tr) = construct_low_degree(&pop, &class, 2, 0.2, &mode, None).unwrap();
    let per = WalConfig::from_vc(0.2, 0.1, 2, 2.0 * (3.0f64 / 0.2).ln() + 3f64.ln()).unwrap().n;
    assert_eq!(tr.sample_count, per * (tr.iterations.len() as u64 + 1));
    assert!(tr.iterations.len() as f64 <= 8.0 * 3f64.ln() / 0.04);
    let fam = make_family(FamilyParams::LowDegree { k: 2, ell: 3 }, &class).unwrap();
    let _ = audit_oi(&pop, &p, &fam).unwrap();
}

#[test]
fn exact_constructor_reduces_multi_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let spec = RandomSpec {
        individuals: 10,
        outcomes: 2,
        hypotheses: 4,
        ..RandomSpec::default()
    };
    let (pop, class, _) = random_instance(&mut rng, &spec).unwrap();
    let fam = make_family(FamilyParams::Mc(make_coordinate_grid(2, 0.05).unwrap()), &class).unwrap();
    let rule = UpdateRule::for_accuracy(UpdateKind::Mwu, 0.05, 2).unwrap();
    let (p, _) = construct_exact(&pop, &fam, &q(1, 20), &rule, None).unwrap();
    let eta = fam.grid().unwrap().eta().clone();
    assert!(audit_multi_accuracy(&pop, &p, &class).unwrap().value <= q(1, 20) + eta);
    assert!(p.values().iter().all(|v| v.weights().iter().all(|w| w.to_f64() >= 0.0)));
}
