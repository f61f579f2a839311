//! Distinguishers, distinguisher families and outcome-indistinguishability
//! audits with exact best responses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use serde_json::{json, Value};

use crate::audits::{level_label, strict_from_cells, Aggregate, AuditReport, CellTables};
use crate::dist::{OutcomeDist, SimplexGrid};
use crate::error::{Error, Result};
use crate::population::{discretize, Hypothesis, HypothesisClass, LevelSets, PopulationInstance, Predictor};
use crate::scalar::Scalar;

/// Largest explicit family [`audit_oi`] will enumerate.
pub const EXPLICIT_FAMILY_LIMIT: usize = 1_000_000;

/// What a distinguisher may read of the predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    /// Only the value `p̃_j` at the individual being judged.
    Sample,
    /// The whole predictor.
    Full,
}

/// A `[0, 1]`-valued test `A(j, o, p̃)`.
pub trait Distinguisher<T: Scalar>: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn access(&self) -> Access;
    fn eval(&self, j: usize, o: usize, pred: &Predictor<T>) -> T;
    fn witness_json(&self) -> Value;
}

pub type DistRef<T> = Arc<dyn Distinguisher<T>>;

/// `E[A(i, õ_i, p̃)] − E[A(i, o*_i, p̃)]`.
pub fn oi_advantage<T: Scalar>(pop: &PopulationInstance<T>, pred: &Predictor<T>, a: &dyn Distinguisher<T>) -> Result<T> {
    pred.check_against(pop)?;
    let mut acc = T::zero();
    for j in 0..pop.len() {
        let mut inner = T::zero();
        for o in 0..pop.ell() {
            let gap = pred.get(j).get(o).clone() - pop.truth()[j].get(o).clone();
            if gap.is_zero_tol() {
                continue;
            }
            inner += gap * a.eval(j, o, pred);
        }
        acc += pop.weight(j).clone() * inner;
    }
    Ok(acc)
}

/// `1 − A`, whose advantage is `−Δ_A`.
#[derive(Debug)]
pub struct Negated<T: Scalar>(pub DistRef<T>);

impl<T: Scalar> Distinguisher<T> for Negated<T> {
    fn name(&self) -> String {
        format!("1-{}", self.0.name())
    }
    fn access(&self) -> Access {
        self.0.access()
    }
    fn eval(&self, j: usize, o: usize, pred: &Predictor<T>) -> T {
        T::one() - self.0.eval(j, o, pred)
    }
    fn witness_json(&self) -> Value {
        json!({ "negated": self.0.witness_json() })
    }
}

/// The constant distinguisher `A ≡ value`.
#[derive(Debug)]
pub struct Constant<T>(pub T);

impl<T: Scalar> Distinguisher<T> for Constant<T> {
    fn name(&self) -> String {
        format!("const({})", self.0)
    }
    fn access(&self) -> Access {
        Access::Sample
    }
    fn eval(&self, _: usize, _: usize, _: &Predictor<T>) -> T {
        self.0.clone()
    }
    fn witness_json(&self) -> Value {
        json!({ "constant": self.0.to_decimal() })
    }
}

/// A distinguisher given by a table `A(j, o)` that ignores the predictor.
#[derive(Debug)]
pub struct Tabulated<T> {
    pub name: String,
    pub table: Vec<Vec<T>>,
}

impl<T: Scalar> Distinguisher<T> for Tabulated<T> {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn access(&self) -> Access {
        Access::Sample
    }
    fn eval(&self, j: usize, o: usize, _: &Predictor<T>) -> T {
        self.table[j][o].clone()
    }
    fn witness_json(&self) -> Value {
        json!({ "name": self.name })
    }
}

/// A cell `(y, o, g)` of `𝒴 × 𝒪 × 𝒢`, with `g` a grid index.
pub type Cell = (usize, usize, u128);

fn cell_json<T: Scalar>(h: &Hypothesis, grid: &SimplexGrid<T>, outcomes: Option<&[String]>, cell: &Cell) -> Value {
    let (y, o, g) = *cell;
    let point = grid
        .point_at(g)
        .map(|p| level_label(&p))
        .unwrap_or_else(|_| g.to_string());
    let o_label = outcomes.and_then(|l| l.get(o).cloned()).unwrap_or_else(|| o.to_string());
    json!([h.range()[y], o_label, point])
}

/// `A_{c,E}(j, o, p̃) = 1[(c_j, o, p̂_j) ∈ E]`; a single cell gives the
/// members of the basic family.
#[derive(Debug)]
pub struct EventIndicator<T: Scalar> {
    pub hypothesis: Arc<Hypothesis>,
    pub event: BTreeSet<Cell>,
    pub grid: Arc<SimplexGrid<T>>,
}

impl<T: Scalar> Distinguisher<T> for EventIndicator<T> {
    fn name(&self) -> String {
        format!("event[{}; {} cells]", self.hypothesis.name(), self.event.len())
    }
    fn access(&self) -> Access {
        Access::Sample
    }
    fn eval(&self, j: usize, o: usize, pred: &Predictor<T>) -> T {
        let g = self.grid.nearest(pred.get(j)).expect("grid over the predictor's outcomes").index;
        if self.event.contains(&(self.hypothesis.value(j), o, g)) {
            T::one()
        } else {
            T::zero()
        }
    }
    fn witness_json(&self) -> Value {
        let cells: Vec<Value> = self
            .event
            .iter()
            .map(|c| cell_json(&self.hypothesis, &self.grid, None, c))
            .collect();
        json!({ "hypothesis": self.hypothesis.name(), "event_cells": cells })
    }
}

/// `A_{c⃗,E}(j, o, p̃) = 1[(c⃗(p̂_j)_j, o, p̂_j) ∈ E]`, with one hypothesis per
/// grid point. Grid points not listed use `fallback`.
#[derive(Debug)]
pub struct StrictEvent<T: Scalar> {
    pub per_point: BTreeMap<u128, Arc<Hypothesis>>,
    pub fallback: Arc<Hypothesis>,
    pub event: BTreeSet<Cell>,
    pub grid: Arc<SimplexGrid<T>>,
}

impl<T: Scalar> StrictEvent<T> {
    fn hyp(&self, g: u128) -> &Arc<Hypothesis> {
        self.per_point.get(&g).unwrap_or(&self.fallback)
    }
}

impl<T: Scalar> Distinguisher<T> for StrictEvent<T> {
    fn name(&self) -> String {
        format!("strict-event[{} points; {} cells]", self.per_point.len(), self.event.len())
    }
    fn access(&self) -> Access {
        Access::Sample
    }
    fn eval(&self, j: usize, o: usize, pred: &Predictor<T>) -> T {
        let g = self.grid.nearest(pred.get(j)).expect("grid over the predictor's outcomes").index;
        if self.event.contains(&(self.hyp(g).value(j), o, g)) {
            T::one()
        } else {
            T::zero()
        }
    }
    fn witness_json(&self) -> Value {
        let parts: Vec<Value> = self
            .per_point
            .iter()
            .map(|(&g, h)| {
                let cells: Vec<Value> = self
                    .event
                    .iter()
                    .filter(|c| c.2 == g)
                    .map(|c| cell_json(h, &self.grid, None, c))
                    .collect();
                json!({ "hypothesis": h.name(), "event_cells": cells })
            })
            .collect();
        json!({ "per_point": parts })
    }
}

/// `A(j, o, p̃) = c(j) · 1[o = o₀] · Π_t p̃_j(t)` over a multiset of
/// coordinates `t` of size below `k`.
#[derive(Debug)]
pub struct Monomial<T> {
    pub hypothesis: Arc<Hypothesis>,
    values: Vec<T>,
    pub indices: Vec<usize>,
    pub outcome: usize,
}

impl<T: Scalar> Monomial<T> {
    pub fn new(hypothesis: Arc<Hypothesis>, indices: Vec<usize>, outcome: usize) -> Result<Self> {
        let values = hypothesis.numeric_values::<T>()?;
        Ok(Monomial {
            hypothesis,
            values,
            indices,
            outcome,
        })
    }

    fn weight(&self, v: &OutcomeDist<T>) -> T {
        let mut acc = T::one();
        for &t in &self.indices {
            acc *= v.get(t).clone();
        }
        acc
    }
}

impl<T: Scalar> Distinguisher<T> for Monomial<T> {
    fn name(&self) -> String {
        format!("mono[{}; {:?}; o={}]", self.hypothesis.name(), self.indices, self.outcome)
    }
    fn access(&self) -> Access {
        Access::Sample
    }
    fn eval(&self, j: usize, o: usize, pred: &Predictor<T>) -> T {
        if o != self.outcome {
            return T::zero();
        }
        self.values[j].clone() * self.weight(pred.get(j))
    }
    fn witness_json(&self) -> Value {
        json!({
            "hypothesis": self.hypothesis.name(),
            "monomial_indices": self.indices,
            "outcome": self.outcome,
        })
    }
}

/// Parameters of [`make_family`].
#[derive(Clone, Debug)]
pub enum FamilyParams<T: Scalar> {
    Explicit {
        members: Vec<DistRef<T>>,
        closed_under_negation: bool,
    },
    Basic(SimplexGrid<T>),
    Mc(SimplexGrid<T>),
    Smc(SimplexGrid<T>),
    LowDegree {
        k: usize,
        ell: usize,
    },
}

#[derive(Clone, Debug)]
enum Kind<T: Scalar> {
    Explicit(Vec<DistRef<T>>),
    Basic,
    Mc,
    Smc,
    LowDegree { k: usize, ell: usize },
}

/// A family of distinguishers, implicit except for the explicit kind.
#[derive(Clone, Debug)]
pub struct DistinguisherFamily<T: Scalar> {
    kind: Kind<T>,
    class: HypothesisClass,
    grid: Option<Arc<SimplexGrid<T>>>,
    closed_under_negation: bool,
}

pub fn make_family<T: Scalar>(params: FamilyParams<T>, class: &HypothesisClass) -> Result<DistinguisherFamily<T>> {
    let class = class.clone();
    let (kind, grid, neg) = match params {
        FamilyParams::Explicit {
            members,
            closed_under_negation,
        } => {
            if members.is_empty() {
                return Err(Error::Construction("an explicit family needs members".into()));
            }
            (Kind::Explicit(members), None, closed_under_negation)
        }
        FamilyParams::Basic(g) => (Kind::Basic, Some(Arc::new(g)), false),
        FamilyParams::Mc(g) => (Kind::Mc, Some(Arc::new(g)), true),
        FamilyParams::Smc(g) => (Kind::Smc, Some(Arc::new(g)), true),
        FamilyParams::LowDegree { k, ell } => {
            if k == 0 {
                return Err(Error::Construction("monomial degree bound k must be at least 1".into()));
            }
            if ell < 2 {
                return Err(Error::Construction("outcome space needs at least two outcomes".into()));
            }
            (Kind::LowDegree { k, ell }, None, false)
        }
    };
    Ok(DistinguisherFamily {
        kind,
        class,
        grid,
        closed_under_negation: neg,
    })
}

/// Multisets of `{0..ell}` of size below `k`, in nondecreasing order.
pub fn monomials(ell: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 1..k {
        let mut next = Vec::new();
        for m in &frontier {
            let start = m.last().copied().unwrap_or(0);
            for t in start..ell {
                let mut e: Vec<usize> = m.clone();
                e.push(t);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Number of monomials of degree below `k` in `ell` variables.
pub fn monomial_count(ell: usize, k: usize) -> BigUint {
    let mut total = BigUint::from(0u8);
    for d in 0..k {
        let mut c = BigUint::from(1u8);
        for i in 0..d {
            c = c * BigUint::from(ell + i) / BigUint::from(i + 1);
        }
        total += c;
    }
    total
}

impl<T: Scalar> DistinguisherFamily<T> {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Explicit(_) => "explicit",
            Kind::Basic => "basic",
            Kind::Mc => "mc",
            Kind::Smc => "smc",
            Kind::LowDegree { .. } => "lowdegree",
        }
    }

    pub fn class(&self) -> &HypothesisClass {
        &self.class
    }

    pub fn grid(&self) -> Option<&SimplexGrid<T>> {
        self.grid.as_deref()
    }

    pub fn closed_under_negation(&self) -> bool {
        self.closed_under_negation
    }

    fn ell(&self) -> Option<usize> {
        match &self.kind {
            Kind::LowDegree { ell, .. } => Some(*ell),
            _ => self.grid.as_ref().map(|g| g.ell()),
        }
    }

    /// `ln |𝒜|`, finite even when `|𝒜|` is astronomically large.
    pub fn ln_member_count(&self) -> f64 {
        let c = self.class.len() as f64;
        let y = self.class.range_size() as f64;
        let ell = self.ell().unwrap_or(0) as f64;
        let g = self.grid.as_ref().map_or(0.0, |g| g.size() as f64);
        let ln2 = std::f64::consts::LN_2;
        match &self.kind {
            Kind::Explicit(m) => (m.len() as f64).ln(),
            Kind::Basic => (c * y * ell * g).ln(),
            Kind::Mc => c.ln() + y * ell * g * ln2,
            Kind::Smc => g * c.ln() + y * ell * g * ln2,
            Kind::LowDegree { k, ell } => {
                let m = monomial_count(*ell, *k).to_string().parse::<f64>().unwrap_or(f64::INFINITY);
                c.ln() + m.ln() + (*ell as f64).ln()
            }
        }
    }

    /// `|𝒜|`, or `None` when it has more than `max_bits` bits.
    pub fn member_count(&self, max_bits: u64) -> Option<BigUint> {
        let c = BigUint::from(self.class.len());
        let y = self.class.range_size() as u64;
        let ell = self.ell().unwrap_or(0) as u64;
        let g = self.grid.as_ref().map_or(BigUint::from(0u8), |g| g.size_big());
        let exp = || -> Option<u64> {
            let e = BigUint::from(y * ell) * &g;
            let e: u64 = e.try_into().ok()?;
            (e <= max_bits).then_some(e)
        };
        let out = match &self.kind {
            Kind::Explicit(m) => BigUint::from(m.len()),
            Kind::Basic => c * BigUint::from(y * ell) * g.clone(),
            Kind::Mc => c << exp()?,
            Kind::Smc => {
                let gs: u32 = g.clone().try_into().ok()?;
                if (self.class.len() as f64).log2() * gs as f64 > max_bits as f64 {
                    return None;
                }
                num_traits::pow(c, gs as usize) << exp()?
            }
            Kind::LowDegree { k, ell } => c * monomial_count(*ell, *k) * BigUint::from(*ell),
        };
        (out.bits() <= max_bits).then_some(out)
    }

    fn check(&self, pop: &PopulationInstance<T>) -> Result<()> {
        self.class.check_against(pop)?;
        if let Some(ell) = self.ell() {
            if ell != pop.ell() {
                return Err(Error::Construction(format!(
                    "family built for {ell} outcomes, population has {}",
                    pop.ell()
                )));
            }
        }
        Ok(())
    }
}

/// Level sets keyed by grid point, with the grid index of each level.
fn grid_levels<T: Scalar>(pred: &Predictor<T>, grid: &SimplexGrid<T>) -> Result<(LevelSets<T>, Vec<u128>)> {
    let (hat, idx) = discretize(pred, grid)?;
    let mut pos: BTreeMap<u128, usize> = BTreeMap::new();
    let mut levels = Vec::new();
    let mut keys = Vec::new();
    let mut of = Vec::with_capacity(idx.len());
    for (j, &g) in idx.iter().enumerate() {
        let next = levels.len();
        let lv = *pos.entry(g).or_insert(next);
        if lv == next {
            levels.push(hat.get(j).clone());
            keys.push(g);
        }
        of.push(lv);
    }
    Ok((LevelSets { levels, of }, keys))
}

/// Signed advantage of every member of an implicit cell-based family.
struct GridCells<T> {
    cells: CellTables<T>,
    keys: Vec<u128>,
}

fn grid_cells<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    fam: &DistinguisherFamily<T>,
) -> Result<GridCells<T>> {
    let grid = fam.grid.as_ref().expect("grid family");
    let (levels, keys) = grid_levels(pred, grid)?;
    let cells = CellTables::build_with(pop, pred, &fam.class, levels)?;
    Ok(GridCells { cells, keys })
}

/// Advantages of all low-degree members, indexed `[c][monomial][o]`.
fn lowdegree_table<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    fam: &DistinguisherFamily<T>,
    k: usize,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<Vec<T>>>)> {
    let ell = pop.ell();
    let monos = monomials(ell, k);
    let work = monos.len().saturating_mul(fam.class.len()).saturating_mul(ell);
    if work > EXPLICIT_FAMILY_LIMIT {
        return Err(Error::EnumerationLimit {
            what: "low-degree family",
            size: work,
            limit: EXPLICIT_FAMILY_LIMIT,
        });
    }
    let cvals: Vec<Vec<T>> = fam
        .class
        .hypotheses()
        .iter()
        .map(|h| h.numeric_values::<T>())
        .collect::<Result<_>>()?;
    let d: Vec<Vec<T>> = (0..pop.len())
        .map(|j| {
            (0..ell)
                .map(|o| pop.weight(j).clone() * (pred.get(j).get(o).clone() - pop.truth()[j].get(o).clone()))
                .collect()
        })
        .collect();
    let mut table = vec![vec![vec![T::zero(); ell]; monos.len()]; fam.class.len()];
    for (mi, m) in monos.iter().enumerate() {
        let w: Vec<T> = (0..pop.len())
            .map(|j| m.iter().fold(T::one(), |acc, &t| acc * pred.get(j).get(t).clone()))
            .collect();
        for (c, cv) in cvals.iter().enumerate() {
            for o in 0..ell {
                let mut acc = T::zero();
                for j in 0..pop.len() {
                    if cv[j].is_zero_tol() || w[j].is_zero_tol() {
                        continue;
                    }
                    acc += cv[j].clone() * w[j].clone() * d[j][o].clone();
                }
                table[c][mi][o] = acc;
            }
        }
    }
    Ok((monos, table))
}

/// `max_{A ∈ 𝒜} |Δ_A|`, without enumerating implicit families.
pub fn audit_oi<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    fam: &DistinguisherFamily<T>,
) -> Result<AuditReport<T>> {
    fam.check(pop)?;
    pred.check_against(pop)?;
    let kind = format!("oi-{}", fam.kind_name());
    let names = |c: usize| fam.class.hypotheses()[c].name().to_string();
    let report = |breakdown: Vec<(String, T)>, agg, witness| {
        let mut r = AuditReport {
            kind: kind.clone(),
            value: T::zero(),
            witness,
            breakdown,
            aggregate: agg,
        };
        r.value = r.recompute();
        r
    };
    match &fam.kind {
        Kind::Explicit(members) => {
            if members.len() > EXPLICIT_FAMILY_LIMIT {
                return Err(Error::EnumerationLimit {
                    what: "explicit family",
                    size: members.len(),
                    limit: EXPLICIT_FAMILY_LIMIT,
                });
            }
            let mut breakdown = Vec::with_capacity(members.len());
            for a in members {
                breakdown.push((a.name(), oi_advantage(pop, pred, a.as_ref())?.abs()));
            }
            let witness = breakdown
                .iter()
                .enumerate()
                .fold(None::<usize>, |b, (i, (_, v))| match b {
                    Some(k) if breakdown[k].1 >= *v => Some(k),
                    _ => Some(i),
                })
                .map_or(Value::Null, |i| members[i].witness_json());
            Ok(report(breakdown, Aggregate::Max, witness))
        }
        Kind::Basic => {
            let gc = grid_cells(pop, pred, fam)?;
            let mut breakdown = Vec::with_capacity(fam.class.len());
            for c in 0..fam.class.len() {
                let best = gc.cells.diff[c]
                    .iter()
                    .flatten()
                    .flatten()
                    .map(|x| x.abs())
                    .fold(T::zero(), T::max_of);
                breakdown.push((names(c), best));
            }
            let (a, _) = best_response(pop, pred, fam)?;
            Ok(report(breakdown, Aggregate::Max, a.witness_json()))
        }
        Kind::Mc => {
            let gc = grid_cells(pop, pred, fam)?;
            let breakdown = (0..fam.class.len()).map(|c| (names(c), gc.cells.mc(c))).collect();
            let (a, _) = best_response(pop, pred, fam)?;
            Ok(report(breakdown, Aggregate::Max, a.witness_json()))
        }
        Kind::Smc => {
            let gc = grid_cells(pop, pred, fam)?;
            let mut r = strict_from_cells(&gc.cells, &fam.class, &kind);
            let (a, _) = best_response(pop, pred, fam)?;
            r.witness = a.witness_json();
            Ok(r)
        }
        Kind::LowDegree { k, .. } => {
            let (_, table) = lowdegree_table(pop, pred, fam, *k)?;
            let breakdown = table
                .iter()
                .enumerate()
                .map(|(c, per)| (names(c), per.iter().flatten().map(|x| x.abs()).fold(T::zero(), T::max_of)))
                .collect();
            let (a, _) = best_response(pop, pred, fam)?;
            Ok(report(breakdown, Aggregate::Max, a.witness_json()))
        }
    }
}

fn signed<T: Scalar>(a: DistRef<T>, adv: T) -> (DistRef<T>, T) {
    if adv < T::zero() {
        (Arc::new(Negated(a)), -adv)
    } else {
        (a, adv)
    }
}

/// A member attaining `max |Δ_A|`, oriented so its signed advantage is
/// nonnegative. Ties go to the earliest member.
pub fn best_response<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    fam: &DistinguisherFamily<T>,
) -> Result<(DistRef<T>, T)> {
    fam.check(pop)?;
    pred.check_against(pop)?;
    match &fam.kind {
        Kind::Explicit(members) => {
            let mut best: Option<(usize, T)> = None;
            for (i, a) in members.iter().enumerate() {
                let adv = oi_advantage(pop, pred, a.as_ref())?;
                if best.as_ref().map_or(true, |(_, b)| adv.abs() > b.abs()) {
                    best = Some((i, adv));
                }
            }
            let (i, adv) = best.expect("nonempty family");
            Ok(signed(members[i].clone(), adv))
        }
        Kind::Basic => {
            let gc = grid_cells(pop, pred, fam)?;
            let mut best: Option<(usize, Cell, T)> = None;
            for (c, per_y) in gc.cells.diff.iter().enumerate() {
                for (y, per_lv) in per_y.iter().enumerate() {
                    for (lv, per_o) in per_lv.iter().enumerate() {
                        for (o, x) in per_o.iter().enumerate() {
                            if best.as_ref().map_or(true, |b| x.abs() > b.2.abs()) {
                                best = Some((c, (y, o, gc.keys[lv]), x.clone()));
                            }
                        }
                    }
                }
            }
            let grid = fam.grid.clone().expect("grid family");
            let (c, cell, adv) = best.unwrap_or((0, (0, 0, 0), T::zero()));
            let a: DistRef<T> = Arc::new(EventIndicator {
                hypothesis: fam.class.hypotheses()[c].clone(),
                event: BTreeSet::from([cell]),
                grid,
            });
            Ok(signed(a, adv))
        }
        Kind::Mc => {
            let gc = grid_cells(pop, pred, fam)?;
            let values: Vec<T> = (0..fam.class.len()).map(|c| gc.cells.mc(c)).collect();
            let c = first_max(&values);
            let event = positive_cells(&gc.cells.diff[c], &gc.keys, None);
            let a: DistRef<T> = Arc::new(EventIndicator {
                hypothesis: fam.class.hypotheses()[c].clone(),
                event,
                grid: fam.grid.clone().expect("grid family"),
            });
            Ok((a, values[c].clone()))
        }
        Kind::Smc => {
            let gc = grid_cells(pop, pred, fam)?;
            let mut per_point = BTreeMap::new();
            let mut event = BTreeSet::new();
            let mut total = T::zero();
            for lv in 0..gc.keys.len() {
                let gaps: Vec<T> = (0..fam.class.len()).map(|c| gc.cells.level_gap(c, lv)).collect();
                let c = first_max(&gaps);
                total += &gaps[c];
                per_point.insert(gc.keys[lv], fam.class.hypotheses()[c].clone());
                event.extend(positive_cells(&gc.cells.diff[c], &gc.keys, Some(lv)));
            }
            let a: DistRef<T> = Arc::new(StrictEvent {
                per_point,
                fallback: fam.class.hypotheses()[0].clone(),
                event,
                grid: fam.grid.clone().expect("grid family"),
            });
            Ok((a, total))
        }
        Kind::LowDegree { k, .. } => {
            let (monos, table) = lowdegree_table(pop, pred, fam, *k)?;
            let mut best: Option<(usize, usize, usize, T)> = None;
            for (c, per_m) in table.iter().enumerate() {
                for (mi, per_o) in per_m.iter().enumerate() {
                    for (o, x) in per_o.iter().enumerate() {
                        if best.as_ref().map_or(true, |b| x.abs() > b.3.abs()) {
                            best = Some((c, mi, o, x.clone()));
                        }
                    }
                }
            }
            let (c, mi, o, adv) = best.expect("nonempty family");
            let a: DistRef<T> = Arc::new(Monomial::new(fam.class.hypotheses()[c].clone(), monos[mi].clone(), o)?);
            Ok(signed(a, adv))
        }
    }
}

fn first_max<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Cells where `Pr[(c, õ, p̂) = a] > Pr[(c, o*, p̂) = a]`.
fn positive_cells<T: Scalar>(diff: &[Vec<Vec<T>>], keys: &[u128], only: Option<usize>) -> BTreeSet<Cell> {
    let mut out = BTreeSet::new();
    for (y, per_lv) in diff.iter().enumerate() {
        for (lv, per_o) in per_lv.iter().enumerate() {
            if only.is_some_and(|l| l != lv) {
                continue;
            }
            for (o, x) in per_o.iter().enumerate() {
                if x.gt_tol(&T::zero()) {
                    out.insert((y, o, keys[lv]));
                }
            }
        }
    }
    out
}

/// `max_{c, E} |Δ_{A_{c,E}}|` by enumerating every event `E ⊆ 𝒴 × 𝒪 × 𝒢`
/// and evaluating each distinguisher pointwise.
pub fn mc_audit_by_events<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
    grid: &SimplexGrid<T>,
) -> Result<T> {
    let cells: Vec<Cell> = {
        let mut v = Vec::new();
        for y in 0..class.range_size() {
            for o in 0..pop.ell() {
                for g in 0..grid.size() {
                    v.push((y, o, g));
                }
            }
        }
        v
    };
    if cells.len() > 16 {
        return Err(Error::EnumerationLimit {
            what: "event cells",
            size: cells.len(),
            limit: 16,
        });
    }
    let grid = Arc::new(grid.clone());
    let mut best = T::zero();
    for h in class.hypotheses() {
        for mask in 0u32..(1 << cells.len()) {
            let event = cells
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, c)| *c)
                .collect();
            let a = EventIndicator {
                hypothesis: h.clone(),
                event,
                grid: grid.clone(),
            };
            let adv = oi_advantage(pop, pred, &a)?.abs();
            if adv > best {
                best = adv;
            }
        }
    }
    Ok(best)
}
