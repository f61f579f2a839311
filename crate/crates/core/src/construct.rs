//! Predictor construction by no-regret updates against best-responding or
//! learned distinguishers.
//!
//! Updates run in `f64` and each new value is snapped to the dyadic lattice
//! `2⁻⁴⁰ℤ` with coordinates summing to exactly one, so every predictor the
//! loops hand to an audit is exact.

use std::sync::Arc;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde_json::{json, Value};

use crate::dist::{OutcomeDist, SimplexGrid};
use crate::error::{Error, Result};
use crate::noregret::{divergence, update, UpdateKind, UpdateRule};
use crate::oi::{
    audit_oi, best_response, make_family, oi_advantage, Access, DistRef, Distinguisher, DistinguisherFamily,
    FamilyParams,
};
use crate::population::{sample_counts, Hypothesis, HypothesisClass, PopulationInstance, Predictor};
use crate::scalar::{Rational, Scalar};

const SNAP_BITS: u32 = 40;

/// One accepted update.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub witness: Value,
    /// Exact advantage of the chosen distinguisher on the pre-update predictor.
    pub advantage: String,
    /// Advantage measured on the samples, in sampled modes.
    pub empirical_advantage: Option<f64>,
    /// Audit value of the post-update predictor.
    pub audit_after: Option<String>,
    pub samples: u64,
}

/// Record of a construction run.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub mode: String,
    pub rule: String,
    pub epsilon: String,
    pub iterations: Vec<IterationRecord>,
    /// The theorem bound the iteration count is held to.
    pub iteration_bound: f64,
    pub final_predictor: Vec<Vec<String>>,
    pub final_audit: Option<String>,
    pub sample_count: u64,
    pub seed: Option<u64>,
}

impl Transcript {
    fn new(mode: &str, rule: &UpdateRule, eps: String, bound: f64, seed: Option<u64>) -> Self {
        Transcript {
            mode: mode.into(),
            rule: match rule.kind {
                UpdateKind::Pgd => "pgd".into(),
                UpdateKind::Mwu => "mwu".into(),
            },
            epsilon: eps,
            iterations: Vec::new(),
            iteration_bound: bound,
            final_predictor: Vec::new(),
            final_audit: None,
            sample_count: 0,
            seed,
        }
    }

    pub fn to_json(&self) -> Value {
        let iterations: Vec<Value> = self
            .iterations
            .iter()
            .map(|it| {
                json!({
                    "witness": it.witness,
                    "advantage": it.advantage,
                    "empirical_advantage": it.empirical_advantage,
                    "audit_after": it.audit_after,
                    "samples": it.samples,
                })
            })
            .collect();
        json!({
            "mode": self.mode,
            "rule": self.rule,
            "epsilon": self.epsilon,
            "iteration_bound": self.iteration_bound,
            "iterations": iterations,
            "final_predictor": self.final_predictor,
            "final_audit": self.final_audit,
            "sample_count": self.sample_count,
            "seed": self.seed,
        })
    }

    fn finish<T: Scalar>(&mut self, pred: &Predictor<T>) {
        self.final_predictor = pred
            .values()
            .iter()
            .map(|v| v.weights().iter().map(|w| w.to_decimal()).collect())
            .collect();
    }
}

/// Rounds a point of the simplex to `2⁻⁴⁰ℤ`, summing to exactly one. Positive
/// coordinates stay positive.
pub fn snap_to_lattice(v: &[f64]) -> Vec<Rational> {
    let scale = 1i64 << SNAP_BITS;
    let mut k: Vec<i64> = v
        .iter()
        .map(|&x| {
            let r = (x.max(0.0) * scale as f64).round() as i64;
            if x > 0.0 {
                r.max(1)
            } else {
                r
            }
        })
        .collect();
    let residual = scale - k.iter().sum::<i64>();
    let top = (0..k.len()).max_by_key(|&o| (k[o], std::cmp::Reverse(o))).unwrap_or(0);
    k[top] += residual;
    let den = BigInt::from(scale);
    k.into_iter()
        .map(|x| Rational::from_bigints(BigInt::from(x), den.clone()))
        .collect()
}

fn apply_update<T: Scalar>(
    rule: &UpdateRule,
    pred: &Predictor<T>,
    a: &dyn Distinguisher<T>,
) -> Result<Predictor<T>> {
    let ell = rule.ell();
    let mut values = Vec::with_capacity(pred.len());
    for j in 0..pred.len() {
        let d: Vec<f64> = pred.get(j).weights().iter().map(|w| w.to_f64()).collect();
        let loss: Vec<f64> = (0..ell).map(|o| a.eval(j, o, pred).to_f64().clamp(0.0, 1.0)).collect();
        let next = snap_to_lattice(&update(rule, &d, &loss));
        values.push(OutcomeDist::new(next.iter().map(T::from_rational).collect())?);
    }
    Predictor::new(values)
}

fn start_predictor<T: Scalar>(
    pop: &PopulationInstance<T>,
    rule: &UpdateRule,
    start: Option<&Predictor<T>>,
) -> Result<Predictor<T>> {
    if rule.ell() != pop.ell() {
        return Err(Error::Construction(format!(
            "update rule over {} outcomes, population has {}",
            rule.ell(),
            pop.ell()
        )));
    }
    match start {
        Some(p) => {
            p.check_against(pop)?;
            Ok(p.clone())
        }
        None => {
            let v = OutcomeDist::new(snap_to_lattice(&rule.initial).iter().map(T::from_rational).collect())?;
            Ok(Predictor::constant(pop.len(), v))
        }
    }
}

/// `E_j[D(p*_j, p̃⁽¹⁾_j)]` under the rule's divergence.
pub fn initial_divergence<T: Scalar>(pop: &PopulationInstance<T>, kind: UpdateKind, start: &Predictor<T>) -> f64 {
    (0..pop.len())
        .map(|j| {
            let p: Vec<f64> = pop.truth()[j].weights().iter().map(|w| w.to_f64()).collect();
            let q: Vec<f64> = start.get(j).weights().iter().map(|w| w.to_f64()).collect();
            pop.weight(j).to_f64() * divergence(kind, &p, &q)
        })
        .sum()
}

/// `2(L/ε)² · E[D(p*, p̃⁽¹⁾)]`.
pub fn exact_iteration_bound(l: f64, eps: f64, expected_divergence: f64) -> f64 {
    2.0 * (l / eps).powi(2) * expected_divergence
}

/// Runs best response and update until the family's audit is at most `ε`.
///
/// Starts from `start` when given, otherwise from the rule's initial point at
/// every individual. The rule's step size is used as is; see
/// [`UpdateRule::for_accuracy`].
pub fn construct_exact<T: Scalar>(
    pop: &PopulationInstance<T>,
    fam: &DistinguisherFamily<T>,
    eps: &T,
    rule: &UpdateRule,
    start: Option<&Predictor<T>>,
) -> Result<(Predictor<T>, Transcript)> {
    let mut pred = start_predictor(pop, rule, start)?;
    let d0 = initial_divergence(pop, rule.kind, &pred);
    if rule.kind == UpdateKind::Mwu && !d0.is_finite() {
        return Err(Error::Construction(
            "multiplicative weights cannot reach the ground truth from this start".into(),
        ));
    }
    let bound = exact_iteration_bound(rule.dual_norm_bound(), eps.to_f64(), d0);
    let mut tr = Transcript::new("exact", rule, eps.to_decimal(), bound, None);
    loop {
        let (a, adv) = best_response(pop, &pred, fam)?;
        if let Some(last) = tr.iterations.last_mut() {
            last.audit_after = Some(adv.to_decimal());
        }
        if adv <= *eps {
            tr.final_audit = Some(adv.to_decimal());
            break;
        }
        if tr.iterations.len() as f64 >= bound {
            return Err(Error::InternalInvariant(format!(
                "exact construction exceeded its bound of {bound:.1} iterations"
            )));
        }
        tr.iterations.push(IterationRecord {
            witness: a.witness_json(),
            advantage: adv.to_decimal(),
            empirical_advantage: None,
            audit_after: None,
            samples: 0,
        });
        pred = apply_update(rule, &pred, a.as_ref())?;
    }
    tr.finish(&pred);
    Ok((pred, tr))
}

/// Parameters of the empirical-risk weak agnostic learner.
#[derive(Clone, Debug, PartialEq)]
pub struct WalConfig {
    pub eps: f64,
    pub beta: f64,
    /// Samples drawn per call.
    pub n: u64,
    /// Acceptance threshold on the empirical advantage.
    pub tau: f64,
}

impl WalConfig {
    /// `n = ⌈8 ln(2|𝒜|/β)/(ε/2)²⌉` and `τ = 3ε/4`.
    ///
    /// Each sample contributes a summand in `[−1, 1]`; at this `n`, Hoeffding
    /// and a union bound keep every empirical advantage within `ε/4` of the
    /// truth with probability `1 − β`, so `τ` separates `> ε` from `≤ ε/2`.
    pub fn new(eps: f64, beta: f64, ln_family_size: f64) -> Result<Self> {
        if !(eps > 0.0) || !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("need ε > 0 and 0 < β < 1"));
        }
        let n = (8.0 * (2f64.ln() + ln_family_size - beta.ln()) / (eps / 2.0).powi(2)).ceil();
        Self::with_samples(eps, beta, n as u64)
    }

    /// Sample count driven by a VC bound `d` plus extra log-cardinality
    /// `ln_extra` for a finite factor: `⌈8 (d + ln_extra + ln(2/β))/(ε/2)²⌉`.
    pub fn from_vc(eps: f64, beta: f64, vc: u32, ln_extra: f64) -> Result<Self> {
        if !(eps > 0.0) || !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("need ε > 0 and 0 < β < 1"));
        }
        let n = (8.0 * (vc as f64 + ln_extra + (2.0 / beta).ln()) / (eps / 2.0).powi(2)).ceil();
        Self::with_samples(eps, beta, n as u64)
    }

    pub fn with_samples(eps: f64, beta: f64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("need at least one sample per call"));
        }
        Ok(WalConfig {
            eps,
            beta,
            n,
            tau: 0.75 * eps,
        })
    }

    pub fn for_family<T: Scalar>(eps: f64, beta: f64, fam: &DistinguisherFamily<T>) -> Result<Self> {
        Self::new(eps, beta, fam.ln_member_count())
    }
}

/// Exact law of the sampled `(i, o*_i)` pairs from tallied counts.
pub fn empirical_population<T: Scalar>(pop: &PopulationInstance<T>, counts: &[Vec<u64>]) -> Result<PopulationInstance<T>> {
    let n: u64 = counts.iter().flatten().sum();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let nn = n as i64;
    let mut weights = Vec::with_capacity(pop.len());
    let mut truth = Vec::with_capacity(pop.len());
    for (j, row) in counts.iter().enumerate() {
        let nj: u64 = row.iter().sum();
        weights.push(T::from_ratio(nj as i64, nn));
        if nj == 0 {
            truth.push(pop.truth()[j].clone());
        } else {
            truth.push(OutcomeDist::new_unchecked(
                row.iter().map(|&c| T::from_ratio(c as i64, nj as i64)).collect(),
            ));
        }
    }
    Ok(pop.with_law(weights, truth))
}

/// The empirical-advantage maximizer if its empirical advantage exceeds `τ`.
pub fn wal_erm<T: Scalar>(
    fam: &DistinguisherFamily<T>,
    cfg: &WalConfig,
    empirical: &PopulationInstance<T>,
    pred: &Predictor<T>,
) -> Result<Option<(DistRef<T>, T)>> {
    let (a, adv) = best_response(empirical, pred, fam)?;
    Ok((adv.to_f64() > cfg.tau).then_some((a, adv)))
}

/// [`wal_erm`] on explicit samples `(individual, outcome)`.
pub fn wal_erm_samples<T: Scalar>(
    fam: &DistinguisherFamily<T>,
    cfg: &WalConfig,
    pop: &PopulationInstance<T>,
    samples: &[(usize, usize)],
    pred: &Predictor<T>,
) -> Result<Option<(DistRef<T>, T)>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut counts = vec![vec![0u64; pop.ell()]; pop.len()];
    for &(j, o) in samples {
        counts[j][o] += 1;
    }
    wal_erm(fam, cfg, &empirical_population(pop, &counts)?, pred)
}

/// `⌈8 L² sup_x D(x, p̃⁽¹⁾) / ε²⌉`: the update cap for sampled runs, at
/// step `(ε/2)/L²` and true advantage at least `ε/2` per accepted update.
pub fn sampled_iteration_cap(rule: &UpdateRule, eps: f64) -> f64 {
    let ell = rule.ell();
    let worst = (0..ell)
        .map(|o| {
            let mut e = vec![0.0; ell];
            e[o] = 1.0;
            divergence(rule.kind, &e, &rule.initial)
        })
        .fold(0.0, f64::max);
    (8.0 * rule.dual_norm_bound().powi(2) * worst / (eps * eps)).ceil()
}

/// Construction with a sample-based weak agnostic learner.
///
/// `rule` should carry the step `(ε/2)/L²`; see [`sampled_rule`]. Exceeding
/// the cap returns [`Error::SampledFailure`] with the transcript.
pub fn construct_sampled<T: Scalar>(
    pop: &PopulationInstance<T>,
    fam: &DistinguisherFamily<T>,
    eps: f64,
    rule: &UpdateRule,
    cfg: &WalConfig,
    seed: u64,
    start: Option<&Predictor<T>>,
) -> Result<(Predictor<T>, Transcript)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pred = start_predictor(pop, rule, start)?;
    let cap = sampled_iteration_cap(rule, eps);
    let mut tr = Transcript::new("sampled", rule, format!("{eps}"), cap, Some(seed));
    loop {
        let counts = sample_counts(pop, &mut rng, cfg.n);
        tr.sample_count += cfg.n;
        let emp = empirical_population(pop, &counts)?;
        let found = wal_erm(fam, cfg, &emp, &pred)?;
        let Some((a, emp_adv)) = found else {
            break;
        };
        if tr.iterations.len() as f64 >= cap {
            tr.finish(&pred);
            tr.final_audit = Some(audit_oi(pop, &pred, fam)?.value.to_decimal());
            return Err(Error::SampledFailure(Box::new(tr)));
        }
        let true_adv = oi_advantage(pop, &pred, a.as_ref())?;
        pred = apply_update(rule, &pred, a.as_ref())?;
        tr.iterations.push(IterationRecord {
            witness: a.witness_json(),
            advantage: true_adv.to_decimal(),
            empirical_advantage: Some(emp_adv.to_f64()),
            audit_after: None,
            samples: cfg.n,
        });
    }
    tr.final_audit = Some(audit_oi(pop, &pred, fam)?.value.to_decimal());
    tr.finish(&pred);
    Ok((pred, tr))
}

/// The uniform-start rule with step `(ε/2)/L²` used by sampled runs.
pub fn sampled_rule(kind: UpdateKind, eps: f64, ell: usize) -> Result<UpdateRule> {
    UpdateRule::for_accuracy(kind, eps / 2.0, ell)
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A subset of `{1} × 𝒪 × 𝒢`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SliceEvent {
    Empty,
    Full,
    Explicit(std::collections::BTreeSet<(usize, u128)>),
    /// Each `(o, g)` is included independently with probability ½, through a
    /// keyed mixing function, so the event never has to be listed.
    Random { seed: u64 },
}

impl SliceEvent {
    pub fn contains(&self, o: usize, g: u128) -> bool {
        match self {
            SliceEvent::Empty => false,
            SliceEvent::Full => true,
            SliceEvent::Explicit(s) => s.contains(&(o, g)),
            SliceEvent::Random { seed } => {
                let h = mix64(seed ^ mix64(o as u64 ^ mix64(g as u64 ^ mix64((g >> 64) as u64))));
                h & 1 == 1
            }
        }
    }
}

/// `1[(1, o′, p̂_j) ∈ E] − 1[(1, o, p̂_j) ∈ E]` with `o′ ~ p̃_j`.
pub fn label<T: Scalar, R: Rng + ?Sized>(
    j: usize,
    o: usize,
    pred: &Predictor<T>,
    grid: &SimplexGrid<T>,
    event: &SliceEvent,
    rng: &mut R,
) -> Result<i8> {
    let g = grid.nearest(pred.get(j))?.index;
    let w: Vec<f64> = pred.get(j).weights().iter().map(|x| x.to_f64()).collect();
    let dist = rand_distr::WeightedIndex::new(&w).map_err(|e| Error::invalid(e.to_string()))?;
    let o2 = dist.sample(rng);
    Ok(event.contains(o2, g) as i8 - event.contains(o, g) as i8)
}

/// `A_{c,E}` for an event inside the `c = 1` slice.
#[derive(Debug)]
pub struct SliceEventIndicator<T: Scalar> {
    pub hypothesis: Arc<Hypothesis>,
    pub one: usize,
    pub event: SliceEvent,
    pub grid: Arc<SimplexGrid<T>>,
}

impl<T: Scalar> Distinguisher<T> for SliceEventIndicator<T> {
    fn name(&self) -> String {
        format!("slice-event[{}]", self.hypothesis.name())
    }
    fn access(&self) -> Access {
        Access::Sample
    }
    fn eval(&self, j: usize, o: usize, pred: &Predictor<T>) -> T {
        if self.hypothesis.value(j) != self.one {
            return T::zero();
        }
        let g = self.grid.nearest(pred.get(j)).expect("grid over the predictor's outcomes").index;
        if self.event.contains(o, g) {
            T::one()
        } else {
            T::zero()
        }
    }
    fn witness_json(&self) -> Value {
        let event = match &self.event {
            SliceEvent::Random { seed } => json!({ "random_seed": seed }),
            SliceEvent::Empty => json!("empty"),
            SliceEvent::Full => json!("full"),
            SliceEvent::Explicit(s) => json!(s.iter().map(|(o, g)| json!([o, g.to_string()])).collect::<Vec<_>>()),
        };
        json!({ "hypothesis": self.hypothesis.name(), "event": event })
    }
}

/// A weak agnostic learner for a class of set indicators on labels in
/// `[−1, 1]`.
pub trait ClassLearner: Send + Sync {
    /// Labeled samples needed per call.
    fn samples(&self, class: &HypothesisClass, eps: f64, beta: f64) -> u64;
    /// Given per-individual label sums over `n` samples, a member whose
    /// empirical correlation `Σ_j c_j Y_j / n` exceeds `3ε/4`.
    fn learn(&self, class: &HypothesisClass, label_sums: &[i64], n: u64, eps: f64) -> Option<usize>;
}

fn erm(class: &HypothesisClass, label_sums: &[i64], n: u64, eps: f64) -> Option<usize> {
    let mut best: Option<(usize, i64)> = None;
    for (c, h) in class.hypotheses().iter().enumerate() {
        let one = h.one_index()?;
        let score: i64 = h
            .values()
            .iter()
            .zip(label_sums)
            .filter(|(&v, _)| v == one)
            .map(|(_, &y)| y)
            .sum();
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((c, score));
        }
    }
    let (c, score) = best?;
    (score as f64 / n as f64 > 0.75 * eps).then_some(c)
}

/// ERM with the finite-class count `⌈8 ln(2|𝒞|/β)/(ε/2)²⌉`.
#[derive(Clone, Debug, Default)]
pub struct FiniteClassErm;

impl ClassLearner for FiniteClassErm {
    fn samples(&self, class: &HypothesisClass, eps: f64, beta: f64) -> u64 {
        (8.0 * (2.0 * class.len() as f64 / beta).ln() / (eps / 2.0).powi(2)).ceil() as u64
    }
    fn learn(&self, class: &HypothesisClass, label_sums: &[i64], n: u64, eps: f64) -> Option<usize> {
        erm(class, label_sums, n, eps)
    }
}

/// ERM with a caller-supplied VC bound `d`: `⌈8 (d + ln(2/β))/(ε/2)²⌉`.
#[derive(Clone, Debug)]
pub struct VcErm {
    pub vc: u32,
}

impl ClassLearner for VcErm {
    fn samples(&self, _: &HypothesisClass, eps: f64, beta: f64) -> u64 {
        (8.0 * (self.vc as f64 + (2.0 / beta).ln()) / (eps / 2.0).powi(2)).ceil() as u64
    }
    fn learn(&self, class: &HypothesisClass, label_sums: &[i64], n: u64, eps: f64) -> Option<usize> {
        erm(class, label_sums, n, eps)
    }
}

/// Largest `|𝒳|` accepted by [`brute_force_vc`].
pub const VC_LIMIT: usize = 16;

/// VC dimension of a class of set indicators by checking every subset.
pub fn brute_force_vc(class: &HypothesisClass) -> Result<u32> {
    class.require_indicators()?;
    let n = class.hypotheses()[0].len();
    if n > VC_LIMIT {
        return Err(Error::EnumerationLimit {
            what: "individuals for VC computation",
            size: n,
            limit: VC_LIMIT,
        });
    }
    let masks: Vec<u32> = class
        .hypotheses()
        .iter()
        .map(|h| {
            let m = h.members().expect("indicator");
            m.iter().enumerate().filter(|(_, &b)| b).fold(0u32, |acc, (i, _)| acc | 1 << i)
        })
        .collect();
    let mut best = 0;
    for set in 0u32..(1u32 << n) {
        let size = set.count_ones();
        if size <= best || (1u64 << size) > masks.len() as u64 {
            continue;
        }
        let traces: std::collections::BTreeSet<u32> = masks.iter().map(|m| m & set).collect();
        if traces.len() as u64 == 1u64 << size {
            best = size;
        }
    }
    Ok(best)
}

/// Rounds of [`select_distinguisher_randomized`]: `⌈8 ln(1/β)⌉`.
pub fn selection_rounds(beta: f64) -> u64 {
    (8.0 * (1.0 / beta).ln()).ceil().max(1.0) as u64
}

/// Outcome of [`select_distinguisher_randomized`].
#[derive(Debug)]
pub struct Selection<T: Scalar> {
    pub distinguisher: Option<DistRef<T>>,
    pub rounds_used: u64,
    pub samples: u64,
}

/// Random-event search for a multi-calibration violation that touches the
/// class only through `learner`.
pub fn select_distinguisher_randomized<T: Scalar, R: Rng + ?Sized>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
    grid: &SimplexGrid<T>,
    eps_prime: f64,
    beta: f64,
    learner: &dyn ClassLearner,
    rng: &mut R,
) -> Result<Selection<T>> {
    pop.require_binary()?;
    class.require_indicators()?;
    if !class.closed_under_complement() {
        return Err(Error::domain("randomized selection needs a complement-closed class"));
    }
    pred.check_against(pop)?;
    let rounds = selection_rounds(beta);
    let per_round = learner.samples(class, eps_prime, beta / rounds as f64);
    let grid_idx: Vec<u128> = pred
        .values()
        .iter()
        .map(|v| grid.nearest(v).map(|g| g.index))
        .collect::<Result<_>>()?;
    let shared = Arc::new(grid.clone());
    let mut samples = 0;
    for s in 1..=rounds {
        let event = SliceEvent::Random { seed: rng.gen() };
        let counts = sample_counts(pop, rng, per_round);
        samples += per_round;
        let mut sums = vec![0i64; pop.len()];
        for (j, row) in counts.iter().enumerate() {
            let g = grid_idx[j];
            for (o, &n) in row.iter().enumerate() {
                if n == 0 {
                    continue;
                }
                // Draw the n modeled outcomes o' at once.
                let mut left = n;
                let mut mass = 1.0;
                for (o2, w) in pred.get(j).weights().iter().enumerate() {
                    if left == 0 {
                        break;
                    }
                    let p = w.to_f64();
                    let share = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
                    let k = if o2 + 1 == pop.ell() || share >= 1.0 {
                        left
                    } else if share <= 0.0 {
                        0
                    } else {
                        Binomial::new(left, share).expect("valid binomial").sample(rng)
                    };
                    left -= k;
                    mass -= p;
                    let lab = event.contains(o2, g) as i64 - event.contains(o, g) as i64;
                    sums[j] += lab * k as i64;
                }
            }
        }
        if let Some(c) = learner.learn(class, &sums, per_round, eps_prime) {
            let h = class.hypotheses()[c].clone();
            let one = h.one_index().expect("indicator");
            return Ok(Selection {
                distinguisher: Some(Arc::new(SliceEventIndicator {
                    hypothesis: h,
                    one,
                    event,
                    grid: shared,
                })),
                rounds_used: s,
                samples,
            });
        }
    }
    Ok(Selection {
        distinguisher: None,
        rounds_used: rounds,
        samples,
    })
}

/// `ε′ = ε / (8 √(ℓ|𝒢|))`.
pub fn randomized_eps_prime(eps: f64, ell: usize, grid_size: u128) -> f64 {
    eps / (8.0 * (ell as f64 * grid_size as f64).sqrt())
}

/// How [`construct_low_degree`] finds violations.
#[derive(Clone, Debug)]
pub enum LowDegreeMode {
    Exact,
    /// `vc` switches the per-call count to the VC form with
    /// `k ln(ℓ/ε) + ln ℓ` for the monomial and outcome factors.
    Sampled { beta: f64, seed: u64, vc: Option<u32> },
}

/// Degree-`k` multi-calibration by multiplicative weights from the uniform
/// start.
pub fn construct_low_degree<T: Scalar>(
    pop: &PopulationInstance<T>,
    class: &HypothesisClass,
    k: usize,
    eps: f64,
    mode: &LowDegreeMode,
    start: Option<&Predictor<T>>,
) -> Result<(Predictor<T>, Transcript)> {
    let fam = make_family(FamilyParams::LowDegree { k, ell: pop.ell() }, class)?;
    match mode {
        LowDegreeMode::Exact => {
            let rule = UpdateRule::for_accuracy(UpdateKind::Mwu, eps, pop.ell())?;
            let e = T::parse_decimal(&format!("{eps}"))?;
            construct_exact(pop, &fam, &e, &rule, start)
        }
        LowDegreeMode::Sampled { beta, seed, vc } => {
            let rule = sampled_rule(UpdateKind::Mwu, eps, pop.ell())?;
            let ell = pop.ell() as f64;
            let cfg = match vc {
                Some(d) => WalConfig::from_vc(eps, *beta, *d, k as f64 * (ell / eps).ln() + ell.ln())?,
                None => WalConfig::for_family(eps, *beta, &fam)?,
            };
            construct_sampled(pop, &fam, eps, &rule, &cfg, *seed, start)
        }
    }
}
