//! End-to-end acceptance run. Prints one `PASS`/`FAIL` line per criterion
//! and fails if any criterion fails.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regfair::audits::*;
use regfair::construct::*;
use regfair::dist::*;
use regfair::graph::*;
use regfair::noregret::*;
use regfair::oi::*;
use regfair::omni::*;
use regfair::population::*;
use regfair::{Eps, Error, Rational, Scalar};

type Outcome = std::result::Result<String, String>;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_monotone_chain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..200 {
        let spec = RandomSpec {
            individuals: rng.gen_range(1..=20),
            outcomes: rng.gen_range(2..=4),
            hypotheses: rng.gen_range(1..=10),
            range_size: rng.gen_range(1..=3),
            levels: rng.gen_range(1..=5),
            granularity: 10,
        };
        let (pop, class, pred) = random_instance(&mut rng, &spec).map_err(|e| e.to_string())?;
        let ma = audit_multi_accuracy(&pop, &pred, &class).unwrap().value;
        let mc = audit_multi_calibration(&pop, &pred, &class).unwrap().value;
        let smc = audit_strict_multi_calibration(&pop, &pred, &class).unwrap().value;
        ensure(ma <= mc && mc <= smc, || format!("instance {i}: {ma} {mc} {smc}"))?;
    }
    Ok("200 instances".into())
}

fn c2_grid_closed_forms() -> Outcome {
    let mut prev: Option<Rational> = None;
    for m in 10..=60i64 {
        let (pop, class, pred) = fixture_grid_population(m as usize).unwrap();
        let mc = audit_multi_calibration(&pop, &pred, &class).unwrap().value;
        let smc = audit_strict_multi_calibration(&pop, &pred, &class).unwrap().value;
        let mc_form = (1..=m).map(|k| q(2 * k * (m - k), m * m * m)).max().unwrap();
        let smc_form = q(m * m - 1, 3 * m * m);
        ensure(mc == mc_form, || format!("m={m}: mc {mc} vs {mc_form}"))?;
        ensure(smc == smc_form, || format!("m={m}: smc {smc} vs {smc_form}"))?;
        ensure(smc < q(1, 3), || format!("m={m}: smc {smc} not below 1/3"))?;
        if let Some(p) = &prev {
            ensure(&smc > p, || format!("m={m}: not increasing"))?;
        }
        if m == 50 {
            ensure(mc == q(1, 100), || format!("m=50 mc {mc}"))?;
            ensure(smc == q(41650, 125000), || format!("m=50 smc {smc}"))?;
        }
        prev = Some(smc);
    }
    Ok("m = 10..60 exact".into())
}

fn c3_two_point() -> Outcome {
    let (pop, class, pred) = fixture_two_point();
    let ma = audit_multi_accuracy(&pop, &pred, &class).unwrap().value;
    let mc = audit_multi_calibration(&pop, &pred, &class).unwrap().value;
    ensure(ma == q(0, 1), || format!("ma {ma}"))?;
    ensure(mc == q(1, 2) && mc > q(1, 3), || format!("mc {mc}"))?;
    Ok("ma 0, mc 1/2".into())
}

fn c4_discretization() -> Outcome {
    let grid: SimplexGrid<Rational> = SimplexGrid::coordinate(2, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100 {
        let n = rng.gen_range(2..=12);
        let (h, lv) = (rng.gen_range(1..=4), rng.gen_range(1..=5));
        let (pop, class, pred) = random_binary_instance(&mut rng, n, h, lv).unwrap();
        let (lhs, rhs) = discretization_bound(&pop, &pred, &class, &grid).unwrap();
        ensure(lhs <= rhs, || format!("instance {i}: {lhs} > {rhs}"))?;
        worst = worst.max((lhs - rhs).to_f64());
    }
    Ok(format!("100 instances, max lhs - rhs {worst:.4}"))
}

fn adaptive_losses(rule: &UpdateRule, rounds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut d = rule.initial.clone();
    let mut out = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        // Charge the heaviest outcome, with noise elsewhere.
        let top = (0..d.len()).max_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap()).unwrap();
        let l: Vec<f64> = (0..d.len()).map(|o| if o == top { 1.0 } else { rng.gen::<f64>() * 0.5 }).collect();
        d = update(rule, &d, &l);
        out.push(l);
    }
    out
}

fn c5_regret() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = f64::NEG_INFINITY;
    for kind in [UpdateKind::Mwu, UpdateKind::Pgd] {
        for i in 0..100 {
            let ell = rng.gen_range(2..=6);
            let rounds = rng.gen_range(1..=1000);
            let eta = rng.gen_range(0.01..1.0);
            let rule = UpdateRule::uniform(kind, eta, ell).unwrap();
            let losses = if i % 2 == 0 {
                adaptive_losses(&rule, rounds, &mut rng)
            } else {
                (0..rounds).map(|_| (0..ell).map(|_| rng.gen::<f64>()).collect()).collect()
            };
            let r = measure_regret(&rule, &losses).unwrap();
            let bound = regret_bound(&rule, &losses);
            ensure(r.avg_regret <= bound + 1e-9, || format!("{kind:?} case {i}: {} > {bound}", r.avg_regret))?;
            if kind == UpdateKind::Mwu {
                let h = hedge_bound(&rule, rounds);
                ensure(r.avg_regret <= h + 1e-9, || format!("hedge case {i}: {} > {h}", r.avg_regret))?;
            }
            worst = worst.max(r.avg_regret - bound);
        }
    }
    Ok(format!("200 sequences, max regret - bound {worst:.3e}"))
}

fn c6_exact_constructor() -> Outcome {
    let grid: SimplexGrid<Rational> = make_coordinate_grid(8, 0.1).unwrap();
    let bound = (2.0 * 8f64.ln() / 0.01).ceil() as usize;
    ensure(bound == 416, || format!("bound {bound}"))?;
    let rule = UpdateRule::for_accuracy(UpdateKind::Mwu, 0.1, 8).unwrap();
    let mut most = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let spec = RandomSpec {
            individuals: rng.gen_range(4..=10),
            outcomes: 8,
            hypotheses: rng.gen_range(1..=4),
            ..RandomSpec::default()
        };
        let (pop, class, _) = random_instance(&mut rng, &spec).unwrap();
        let fam = make_family(FamilyParams::Mc(grid.clone()), &class).unwrap();
        let (p, tr) = construct_exact(&pop, &fam, &q(1, 10), &rule, None).map_err(|e| e.to_string())?;
        let audit = audit_oi(&pop, &p, &fam).unwrap().value;
        ensure(tr.iterations.len() <= bound, || format!("seed {seed}: {} iterations", tr.iterations.len()))?;
        ensure(audit <= q(1, 10), || format!("seed {seed}: audit {audit}"))?;
        most = most.max(tr.iterations.len());
    }
    Ok(format!("50 runs, at most {most} of {bound} iterations"))
}

fn c7_sampled_constructor() -> Outcome {
    let (eps, beta): (f64, f64) = (0.15, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = RandomSpec {
        individuals: 10,
        outcomes: 4,
        hypotheses: 6,
        ..RandomSpec::default()
    };
    let (pop, class, _) = random_instance(&mut rng, &spec).unwrap();
    let grid: SimplexGrid<Rational> = make_coordinate_grid(4, eps).unwrap();
    let fam = make_family(FamilyParams::Mc(grid.clone()), &class).unwrap();
    // |𝒜| = |𝒞| · 2^{|𝒴|ℓ|𝒢|}, counted independently of the family.
    let cells = (class.range_size() * 4) as f64 * grid.size() as f64;
    let ln_a = 6f64.ln() + cells * 2f64.ln();
    let per = (8.0 * ((2.0f64).ln() + ln_a - beta.ln()) / (eps / 2.0).powi(2)).ceil() as u64;
    let cfg = WalConfig::for_family(eps, beta, &fam).unwrap();
    ensure(cfg.n == per, || format!("per-call count {} vs {per}", cfg.n))?;
    let rule = sampled_rule(UpdateKind::Mwu, eps, 4).unwrap();
    let cap = sampled_iteration_cap(&rule, eps);
    let mut good = 0;
    let mut failures = Vec::new();
    for seed in 0..20 {
        match construct_sampled(&pop, &fam, eps, &rule, &cfg, seed, None) {
            Ok((p, tr)) => {
                let audit = audit_oi(&pop, &p, &fam).unwrap().value;
                let iters = tr.iterations.len() as u64;
                ensure(tr.sample_count == per * (iters + 1), || format!("seed {seed}: {} samples", tr.sample_count))?;
                ensure(iters as f64 <= cap, || format!("seed {seed}: {iters} > cap {cap}"))?;
                if audit.to_f64() <= eps {
                    good += 1;
                } else {
                    failures.push(format!("{seed}:{}", audit.to_decimal()));
                }
            }
            Err(Error::SampledFailure(_)) => failures.push(format!("{seed}:cap")),
            Err(e) => return Err(e.to_string()),
        }
    }
    ensure(good >= 18, || format!("{good}/20 good; {failures:?}"))?;
    Ok(format!("{good}/20 runs within 0.15, n = {per}, cap {cap}"))
}

fn c8_randomized_selection() -> Outcome {
    let (pop, _, pred) = fixture_two_point();
    let class = HypothesisClass::with_complements(vec![Hypothesis::indicator("all", &[true, true])]).unwrap();
    let grid: SimplexGrid<Rational> = SimplexGrid::coordinate(2, 1).unwrap();
    let (eps_prime, beta) = (1.0 / 32.0, 0.1);
    let truth = pop.truth_predictor();
    let (mut found, mut quiet) = (0, 0);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let s = select_distinguisher_randomized(&pop, &pred, &class, &grid, eps_prime, beta, &FiniteClassErm, &mut rng)
            .map_err(|e| e.to_string())?;
        if let Some(a) = s.distinguisher {
            if oi_advantage(&pop, &pred, a.as_ref()).unwrap() > q(0, 1) {
                found += 1;
            }
        }
        let s = select_distinguisher_randomized(&pop, &truth, &class, &grid, eps_prime, beta, &FiniteClassErm, &mut rng)
            .map_err(|e| e.to_string())?;
        match s.distinguisher {
            None => quiet += 1,
            Some(a) => {
                if oi_advantage(&pop, &truth, a.as_ref()).unwrap().to_f64() <= eps_prime / 2.0 {
                    quiet += 1
                }
            }
        }
    }
    ensure(found >= 18 && quiet >= 18, || format!("found {found}/20, quiet {quiet}/20"))?;
    Ok(format!("found {found}/20, quiet {quiet}/20"))
}

fn random_partition(n: usize, min_parts: usize, rng: &mut ChaCha8Rng) -> VertexPartition {
    let parts = rng.gen_range(min_parts..=n.min(4));
    let mut lists = vec![Vec::new(); parts];
    for v in 0..n {
        // The first vertices seed every part so none is empty.
        let k = if v < parts { v } else { rng.gen_range(0..parts) };
        lists[k].push(v);
    }
    VertexPartition::new(n, lists).unwrap()
}

fn c9_delta_identity() -> Outcome {
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0u64;
    for gi in 0..50 {
        let g = DiGraph::random(n, 0.5, &mut rng).unwrap();
        let p = random_partition(n, 1, &mut rng);
        let (pop, _) = graph_to_instance(&g).unwrap();
        let pred = partition_to_predictor(&g, &p).unwrap();
        let m = p.len();
        let dens: Vec<Vec<Rational>> = p
            .masks()
            .iter()
            .map(|&a| p.masks().iter().map(|&b| edge_stats(&g, a, b).unwrap().density).collect())
            .collect();
        let mut levels: Vec<Rational> = dens.iter().flatten().cloned().collect();
        levels.sort();
        levels.dedup();
        for s in 0..1u64 << n {
            for t in 0..1u64 << n {
                let res: Vec<Vec<Rational>> =
                    (0..m).map(|j| (0..m).map(|k| block_residual(&g, &p, s, t, j, k)).collect()).collect();
                let total: Rational = res.iter().flatten().cloned().sum();
                ensure(delta_stv(&pop, &pred, n, s, t, None) == total, || format!("graph {gi}: total at {s:b},{t:b}"))?;
                for v in &levels {
                    let want: Rational = (0..m)
                        .flat_map(|j| (0..m).map(move |k| (j, k)))
                        .filter(|&(j, k)| &dens[j][k] == v)
                        .map(|(j, k)| res[j][k].clone())
                        .sum();
                    ensure(delta_stv(&pop, &pred, n, s, t, Some(v)) == want, || {
                        format!("graph {gi}: level {v} at {s:b},{t:b}")
                    })?;
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} (S, T, v) triples"))
}

fn gnp_graphs() -> Vec<DiGraph> {
    (0..20)
        .map(|i| DiGraph::random(12, 0.5, &mut ChaCha8Rng::seed_from_u64(1000 + i)).unwrap())
        .collect()
}

/// `refine_intermediate` at ε = 0.3 on [`gnp_graphs`], shared by two criteria.
fn refined() -> &'static [(VertexPartition, RefineTranscript)] {
    static CELL: OnceLock<Vec<(VertexPartition, RefineTranscript)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let eps = Eps::new(q(3, 10)).unwrap();
        gnp_graphs()
            .iter()
            .map(|g| refine_intermediate(g, &eps, &RefineMode::Direct).unwrap())
            .collect()
    })
}

fn c10_refine() -> Outcome {
    let eps = Eps::new(q(3, 10)).unwrap();
    let gain = q(9, 400);
    let part_bound = 12f64.min(4f64.powf(1.0 / 0.09));
    let mut most = 0;
    for (i, (g, (p, tr))) in gnp_graphs().iter().zip(refined()).enumerate() {
        ensure(check_intermediate(g, &p, &eps).unwrap().pass, || format!("graph {i}: not intermediate"))?;
        ensure(p.len() as f64 <= part_bound, || format!("graph {i}: {} parts", p.len()))?;
        for st in &tr.steps {
            let d = st.energy_after.clone() - st.energy_before.clone();
            ensure(d >= gain, || format!("graph {i}: {} step gained {d}", st.trigger))?;
        }
        most = most.max(p.len());
    }
    Ok(format!("20 graphs, at most {most} parts"))
}

fn c11_hierarchy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let levels = [q(1, 20), q(1, 10), q(1, 5), q(3, 10), q(1, 2)];
    let mut cases = 0;
    let mut szem = 0;
    for (i, (g, (r, _))) in gnp_graphs().iter().zip(refined()).enumerate() {
        let mut parts = vec![VertexPartition::trivial(12), VertexPartition::singletons(12), r.clone()];
        parts.extend((0..3).map(|_| random_partition(12, 2, &mut rng)));
        for p in &parts {
            let (st_max, _, _) = max_st_irregularity(g, p).unwrap();
            let st_max = st_max / q(144, 1);
            let (fk, _, _) = frieze_kannan_defect(g, p).unwrap();
            ensure(fk <= st_max, || format!("graph {i}: FK defect {fk} above max irreg_ST {st_max}"))?;
            for e in &levels {
                let eps = Eps::new(e.clone()).unwrap();
                // Also covers intermediate at ε and at √ε.
                let eq = equivalence_bounds(g, p, &eps).unwrap();
                ensure(eq.forward_holds && eq.converse_holds, || format!("graph {i}: equivalence at {e}: {eq:?}"))?;
                if check_szemeredi_irregularity(g, p, &eps).unwrap().pass {
                    szem += 1;
                    ensure(eq.intermediate_at_sqrt, || format!("graph {i}: Szemerédi at {e} without intermediate at its root"))?;
                }
                if eq.intermediate {
                    let two = Eps::new(e.clone() * q(2, 1)).unwrap();
                    ensure(check_frieze_kannan(g, p, &two).unwrap().pass, || format!("graph {i}: intermediate at {e} without FK"))?;
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} (partition, ε) cases, {szem} Szemerédi-regular"))
}

fn c12_xor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let gadget = single_edge_gadget();
    let mut cases = 0;
    for n1 in 1..=6usize {
        for _ in 0..5 {
            let g1 = DiGraph::random(n1, rng.gen_range(0.0..1.0), &mut rng).unwrap();
            let x = xor_product(&g1, &gadget).unwrap();
            let p = pair_partition(n1).unwrap();
            for &a in p.masks() {
                for &b in p.masks() {
                    let d = edge_stats(&x, a, b).unwrap().density;
                    ensure(d == q(1, 2), || format!("n1={n1}: density {d}"))?;
                }
            }
            let s = set_of(&(0..n1).map(|v| 2 * v + 1).collect::<Vec<_>>());
            let n2 = (2 * n1 * 2 * n1) as i64;
            let v = partition_st_irregularity(&x, &p, s, s).unwrap();
            ensure(v == q(n2, 8), || format!("n1={n1}: {v} vs {n2}/8"))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} products"))
}

fn random_loss(rng: &mut ChaCha8Rng, outcomes: &OutcomeSpace, i: usize) -> LossFunction<Rational> {
    let ell = outcomes.len();
    let table = (0..ell).map(|_| (0..ell).map(|_| q(rng.gen_range(0..=10), 10)).collect()).collect();
    LossFunction::new(format!("l{i}"), outcomes.labels().to_vec(), table).unwrap()
}

fn c13_omni() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut tight = 0;
    for i in 0..100 {
        let ell = rng.gen_range(2..=3);
        let spec = RandomSpec {
            individuals: rng.gen_range(1..=12),
            outcomes: ell,
            hypotheses: rng.gen_range(1..=5),
            range_size: rng.gen_range(1..=ell),
            levels: rng.gen_range(1..=4),
            granularity: 10,
        };
        let (pop, class, pred) = random_instance(&mut rng, &spec).unwrap();
        let mut losses = vec![LossFunction::zero_one(pop.outcomes())];
        for k in 1..rng.gen_range(1..=4) {
            losses.push(random_loss(&mut rng, pop.outcomes(), k));
        }
        let b = omni_bound_check(&pop, &pred, &losses, &class).unwrap();
        ensure(b.omni <= b.calibration.clone() + b.multi_accuracy.clone(), || format!("instance {i}: {:?}", b.to_json()))?;
        if b.omni > q(0, 1) {
            tight += 1;
        }
        let t = omni_bound_check(&pop, &pop.truth_predictor(), &losses, &class).unwrap();
        ensure(t.omni == q(0, 1) && t.calibration == q(0, 1) && t.multi_accuracy == q(0, 1), || {
            format!("instance {i}: truth {:?}", t.to_json())
        })?;
    }
    Ok(format!("100 instances, {tight} with a positive gap"))
}

fn c14_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for i in 0..100 {
        let n = rng.gen_range(1..=12);
        let raw = |rng: &mut ChaCha8Rng| -> Vec<Rational> {
            let mut v: Vec<i64> = (0..n).map(|_| rng.gen_range(0..10)).collect();
            v[0] += 1;
            let t = v.iter().sum::<i64>();
            v.into_iter().map(|x| q(x, t)).collect()
        };
        let (a, b) = (raw(&mut rng), raw(&mut rng));
        let x = stat_distance(&a, &b).unwrap();
        let y = stat_distance_subset_oracle(&a, &b).unwrap();
        ensure(x == y, || format!("distance case {i}: {x} vs {y}"))?;
    }
    let grid: SimplexGrid<Rational> = SimplexGrid::coordinate(2, 2).unwrap();
    for i in 0..100 {
        let (n, h, lv) = (rng.gen_range(2..=8), rng.gen_range(1..=3), rng.gen_range(1..=4));
        let (pop, class, pred) = random_binary_instance(&mut rng, n, h, lv).unwrap();
        let fam = make_family(FamilyParams::Mc(grid.clone()), &class).unwrap();
        let closed = audit_oi(&pop, &pred, &fam).unwrap().value;
        let brute = mc_audit_by_events(&pop, &pred, &class, &grid).unwrap();
        ensure(closed == brute, || format!("mc case {i}: {closed} vs {brute}"))?;
    }
    for i in 0..100 {
        let g = DiGraph::random(12, rng.gen_range(0.1..0.9), &mut rng).unwrap();
        let (nx, ny) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let x = set_of(&(0..nx).collect::<Vec<_>>());
        let y = set_of(&(12 - ny..12).collect::<Vec<_>>());
        let fast = irregularity(&g, x, y).unwrap();
        let naive = irregularity_naive(&g, x, y).unwrap();
        ensure(fast == naive, || format!("irregularity case {i}: {fast} vs {naive}"))?;
    }
    Ok("300 cases agree".into())
}

#[test]
fn acceptance() {
    let criteria: Vec<(u32, &str, u64, fn() -> Outcome)> = vec![
        (1, "monotone audit chain", 30, c1_monotone_chain),
        (2, "grid fixture closed forms", 10, c2_grid_closed_forms),
        (3, "two-point fixture", 1, c3_two_point),
        (4, "discretization inequality", 30, c4_discretization),
        (5, "regret bounds", 30, c5_regret),
        (6, "exact constructor", 300, c6_exact_constructor),
        (7, "sampled constructor", 300, c7_sampled_constructor),
        (8, "randomized selection", 120, c8_randomized_selection),
        (9, "block identity", 120, c9_delta_identity),
        (10, "intermediate partitioner", 300, c10_refine),
        (11, "regularity hierarchy", 300, c11_hierarchy),
        (12, "xor product", 60, c12_xor),
        (13, "omniprediction bound", 60, c13_omni),
        (14, "oracle equivalences", 180, c14_oracles),
    ];
    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let result = match result {
            Ok(m) if took > Duration::from_secs(limit) => Err(format!("{m}; over the {limit}s limit")),
            r => r,
        };
        // Straight to the handle so the lines survive output capture.
        let line = match result {
            Ok(m) => format!("PASS {id:>2} {name}: {m} ({:.2}s)", took.as_secs_f64()),
            Err(m) => {
                failed.push(id);
                format!("FAIL {id:>2} {name}: {m} ({:.2}s)", took.as_secs_f64())
            }
        };
        writeln!(std::io::stderr(), "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
