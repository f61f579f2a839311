use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use regfair::audits::*;
use regfair::construct::*;
use regfair::dist::{make_coordinate_grid, SimplexGrid};
use regfair::graph::*;
use regfair::noregret::{UpdateKind, UpdateRule};
use regfair::oi::{audit_oi, make_family, DistinguisherFamily, FamilyParams};
use regfair::omni::{omni_audit, omni_bound_check, LossFunction};
use regfair::population::*;
use regfair::{Eps, Error, Rational, Result, Scalar};

use crate::schema::{instance_json, parse_instance, predictor_json, Instance};
use crate::{AuditKind, CondKind, ConstructMode, FamilyKind, FixtureKind, GraphTask, RefineKind, RuleKind};

/// `ε` from a decimal flag, read exactly: `0.1` means `1/10`.
pub fn exact_eps(eps: f64) -> Result<Eps> {
    let r = Rational::parse_decimal(&format!("{eps}"))?;
    if r <= Rational::zero() {
        return Err(Error::Invalid(format!("epsilon must be positive, got {eps}")));
    }
    Eps::new(r)
}

fn need<'a, T>(x: Option<&'a T>, what: &str) -> Result<&'a T> {
    x.ok_or_else(|| Error::Domain(format!("the instance has no {what}")))
}

pub struct FamilyArgs {
    pub kind: FamilyKind,
    pub epsilon: f64,
    pub grid_m: Option<u32>,
    pub degree: usize,
}

fn grid<T: Scalar>(ell: usize, a: &FamilyArgs) -> Result<SimplexGrid<T>> {
    match a.grid_m {
        Some(m) => SimplexGrid::coordinate(ell, m),
        None => make_coordinate_grid(ell, a.epsilon),
    }
}

fn family<T: Scalar>(pop: &PopulationInstance<T>, class: &HypothesisClass, a: &FamilyArgs) -> Result<DistinguisherFamily<T>> {
    let params = match a.kind {
        FamilyKind::Basic => FamilyParams::Basic(grid(pop.ell(), a)?),
        FamilyKind::Mc => FamilyParams::Mc(grid(pop.ell(), a)?),
        FamilyKind::Smc => FamilyParams::Smc(grid(pop.ell(), a)?),
        FamilyKind::Lowdegree => FamilyParams::LowDegree {
            k: a.degree,
            ell: pop.ell(),
        },
    };
    make_family(params, class)
}

fn load_losses<T: Scalar>(files: &[Value], pop: &PopulationInstance<T>) -> Result<Vec<LossFunction<T>>> {
    if files.is_empty() {
        return Ok(vec![LossFunction::zero_one(pop.outcomes())]);
    }
    files.iter().map(|v| LossFunction::from_json(v, pop.outcomes())).collect()
}

pub struct AuditArgs {
    pub kind: AuditKind,
    pub family: FamilyArgs,
    pub conditional: CondKind,
    pub losses: Vec<Value>,
}

pub fn audit<T: Scalar>(v: &Value, a: &AuditArgs) -> Result<Value> {
    let Instance { pop, class, predictor } = parse_instance::<T>(v)?;
    let pred = need(predictor.as_ref(), "predictor")?;
    let class = || need(class.as_ref(), "hypotheses");
    let report = match a.kind {
        AuditKind::Ma => audit_multi_accuracy(&pop, pred, class()?)?,
        AuditKind::Mc => audit_multi_calibration(&pop, pred, class()?)?,
        AuditKind::Smc => audit_strict_multi_calibration(&pop, pred, class()?)?,
        AuditKind::Cal => audit_calibration(&pop, pred)?,
        AuditKind::Cov => audit_covariance_mc(&pop, pred, class()?)?,
        AuditKind::Oi => audit_oi(&pop, pred, &family(&pop, class()?, &a.family)?)?,
        AuditKind::Omni => omni_audit(&pop, pred, &load_losses(&a.losses, &pop)?, class()?)?,
        AuditKind::Conditional => {
            let kind = match a.conditional {
                CondKind::Ma => ConditionalKind::Ma,
                CondKind::Mc => ConditionalKind::Mc,
                CondKind::Smc => ConditionalKind::Smc,
            };
            let r = check_conditional(&pop, pred, class()?, &exact_eps(a.family.epsilon)?, kind)?;
            return Ok(json!({
                "kind": format!("conditional-{:?}", r.kind).to_lowercase(),
                "epsilon": a.family.epsilon,
                "pass": r.pass,
                "witness": r.witness,
            }));
        }
    };
    Ok(report.to_json())
}

pub fn omni<T: Scalar>(v: &Value, losses: &[Value]) -> Result<Value> {
    let Instance { pop, class, predictor } = parse_instance::<T>(v)?;
    let pred = need(predictor.as_ref(), "predictor")?;
    let class = need(class.as_ref(), "hypotheses")?;
    let losses = load_losses(losses, &pop)?;
    let bound = omni_bound_check(&pop, pred, &losses, class)?;
    let audit = omni_audit(&pop, pred, &losses, class)?;
    Ok(json!({ "bound": bound.to_json(), "audit": audit.to_json() }))
}

pub struct ConstructArgs {
    pub family: FamilyArgs,
    pub rule: RuleKind,
    pub mode: ConstructMode,
    pub seed: Option<u64>,
    pub beta: f64,
    pub warm_start: bool,
}

/// The constructed predictor and transcript, or the transcript of a sampled
/// run that hit its cap.
pub enum Constructed {
    Done(Value),
    Failed(Value, String),
}

pub fn construct<T: Scalar>(v: &Value, a: &ConstructArgs) -> Result<Constructed> {
    let Instance { pop, class, predictor } = parse_instance::<T>(v)?;
    let class = need(class.as_ref(), "hypotheses")?;
    let start = if a.warm_start {
        Some(need(predictor.as_ref(), "predictor")?)
    } else {
        None
    };
    let kind = match a.rule {
        RuleKind::Mwu => UpdateKind::Mwu,
        RuleKind::Pgd => UpdateKind::Pgd,
    };
    let eps = a.family.epsilon;
    let seed = || {
        a.seed
            .ok_or_else(|| Error::Domain("sampled mode needs --seed".into()))
    };
    let result = if a.family.kind == FamilyKind::Lowdegree {
        if kind != UpdateKind::Mwu {
            return Err(Error::Domain("the low-degree constructor uses the mwu rule".into()));
        }
        let mode = match a.mode {
            ConstructMode::Exact => LowDegreeMode::Exact,
            ConstructMode::Sampled => LowDegreeMode::Sampled {
                beta: a.beta,
                seed: seed()?,
                vc: None,
            },
        };
        construct_low_degree(&pop, class, a.family.degree, eps, &mode, start)
    } else {
        let fam = family(&pop, class, &a.family)?;
        match a.mode {
            ConstructMode::Exact => {
                let rule = UpdateRule::for_accuracy(kind, eps, pop.ell())?;
                let e = T::parse_decimal(&format!("{eps}"))?;
                construct_exact(&pop, &fam, &e, &rule, start)
            }
            ConstructMode::Sampled => {
                let rule = sampled_rule(kind, eps, pop.ell())?;
                let cfg = WalConfig::for_family(eps, a.beta, &fam)?;
                construct_sampled(&pop, &fam, eps, &rule, &cfg, seed()?, start)
            }
        }
    };
    match result {
        Ok((pred, tr)) => Ok(Constructed::Done(json!({
            "predictor": predictor_json(&pred, &pop),
            "transcript": tr.to_json(),
        }))),
        Err(Error::SampledFailure(tr)) => {
            let msg = Error::SampledFailure(tr.clone()).to_string();
            Ok(Constructed::Failed(json!({ "error": msg, "transcript": tr.to_json() }), msg))
        }
        Err(e) => Err(e),
    }
}

pub struct GraphArgs {
    pub task: GraphTask,
    pub epsilon: f64,
    pub partition: Option<Value>,
    pub refine: RefineKind,
    pub restarts: usize,
    pub seed: u64,
}

fn load_partition(g: &DiGraph, v: Option<&Value>) -> Result<VertexPartition> {
    let Some(v) = v else {
        return Ok(VertexPartition::trivial(g.n()));
    };
    let lists = v
        .as_array()
        .ok_or_else(|| Error::Parse("a partition is a list of vertex lists".into()))?
        .iter()
        .map(|part| {
            part.as_array()
                .ok_or_else(|| Error::Parse("a partition is a list of vertex lists".into()))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|x| x as usize)
                        .ok_or_else(|| Error::Parse(format!("bad vertex {x}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    VertexPartition::new(g.n(), lists)
}

pub fn graph(g: &DiGraph, a: &GraphArgs) -> Result<Value> {
    let p = load_partition(g, a.partition.as_ref())?;
    let eps = || exact_eps(a.epsilon);
    let out = match a.task {
        GraphTask::CheckFk => check_frieze_kannan(g, &p, &eps()?)?.to_json(),
        GraphTask::CheckInt => check_intermediate(g, &p, &eps()?)?.to_json(),
        GraphTask::CheckSz => check_szemeredi(g, &p, &eps()?)?.to_json(),
        GraphTask::CheckSzIrreg => check_szemeredi_irregularity(g, &p, &eps()?)?.to_json(),
        GraphTask::Equivalence => {
            let r = equivalence_bounds(g, &p, &eps()?)?;
            json!({
                "intermediate": r.intermediate,
                "max_st_irregularity": r.max_st_irregularity.to_decimal(),
                "forward_holds": r.forward_holds,
                "converse_premise": r.converse_premise,
                "intermediate_at_sqrt": r.intermediate_at_sqrt,
                "converse_holds": r.converse_holds,
            })
        }
        GraphTask::Refine => {
            let mode = match a.refine {
                RefineKind::Direct => RefineMode::Direct,
                RefineKind::Sigma => RefineMode::Sigma(CutMode::Exact),
                RefineKind::Alternating => RefineMode::Alternating {
                    restarts: a.restarts,
                    seed: a.seed,
                },
            };
            let e = eps()?;
            let (part, tr) = refine_intermediate(g, &e, &mode)?;
            let check = if g.n() <= 14 {
                check_intermediate(g, &part, &e)?.to_json()
            } else {
                Value::Null
            };
            json!({ "partition": part.to_json(), "parts": part.len(), "transcript": tr.to_json(), "check": check })
        }
        GraphTask::Correspond => {
            let (pop, rect) = graph_to_instance(g)?;
            let pred = partition_to_predictor(g, &p)?;
            let class = if g.n() <= 6 { Some(rect.materialize()?) } else { None };
            let audits = if g.n() <= 8 {
                let r = rectangle_audits(&pop, &pred, g.n())?;
                json!({ "ma": r.ma.to_decimal(), "mc": r.mc.to_decimal(), "smc": r.smc.to_decimal() })
            } else {
                Value::Null
            };
            json!({ "instance": instance_json(&pop, class.as_ref(), Some(&pred)), "rectangle_audits": audits })
        }
    };
    Ok(out)
}

pub struct FixtureArgs {
    pub kind: FixtureKind,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub individuals: usize,
    pub outcomes: usize,
    pub hypotheses: usize,
    pub levels: usize,
}

pub fn fixture(a: &FixtureArgs) -> Result<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let inst = |(pop, class, pred): (PopulationInstance<Rational>, HypothesisClass, Predictor<Rational>)| {
        instance_json(&pop, Some(&class), Some(&pred))
    };
    Ok(match a.kind {
        FixtureKind::TwoPoint => inst(fixture_two_point()),
        FixtureKind::Grid => inst(fixture_grid_population(a.m)?),
        FixtureKind::Random => {
            let spec = RandomSpec {
                individuals: a.individuals,
                outcomes: a.outcomes,
                hypotheses: a.hypotheses,
                levels: a.levels,
                ..RandomSpec::default()
            };
            inst(random_instance(&mut rng, &spec)?)
        }
        FixtureKind::RandomBinary => inst(random_binary_instance(&mut rng, a.individuals, a.hypotheses, a.levels)?),
        FixtureKind::Gnp => DiGraph::random(a.n, a.p, &mut rng)?.to_json(),
        FixtureKind::Xor => {
            let g1 = DiGraph::random(a.n, a.p, &mut rng)?;
            let x = xor_product(&g1, &single_edge_gadget())?;
            json!({ "graph": x.to_json(), "partition": pair_partition(a.n)?.to_json() })
        }
    })
}
