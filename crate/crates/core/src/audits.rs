//! Exact audits for multi-accuracy, multi-calibration and their variants.
//!
//! All of the distance-based audits read off one table per hypothesis `c`:
//!
//! `cells[y][v][o] = Σ_j μ_j · 1[c_j = y, p̃_j = v] · (p̃_j(o) − p*_j(o))`
//!
//! which is the signed difference of the joints of `(c_i, p̃_i, õ_i)` and
//! `(c_i, p̃_i, o*_i)`. [`reference`] recomputes each audit from explicit
//! joint tables instead.

use serde_json::{json, Value};

use crate::dist::OutcomeDist;
use crate::error::Result;
use crate::population::{discretize, HypothesisClass, LevelSets, PopulationInstance, Predictor};
use crate::scalar::{Eps, Scalar};

/// How an audit value is recovered from its breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregate {
    Max,
    Sum,
}

/// Result of one audit.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport<T> {
    pub kind: String,
    pub value: T,
    pub witness: Value,
    pub breakdown: Vec<(String, T)>,
    pub aggregate: Aggregate,
}

impl<T: Scalar> AuditReport<T> {
    /// Recomputes the value from the breakdown.
    pub fn recompute(&self) -> T {
        match self.aggregate {
            Aggregate::Sum => self.breakdown.iter().map(|(_, v)| v.clone()).sum(),
            Aggregate::Max => self
                .breakdown
                .iter()
                .map(|(_, v)| v.clone())
                .fold(T::zero(), T::max_of),
        }
    }

    pub fn to_json(&self) -> Value {
        let breakdown: serde_json::Map<String, Value> = self
            .breakdown
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.to_decimal())))
            .collect();
        json!({
            "kind": self.kind,
            "value": self.value.to_decimal(),
            "witness": self.witness,
            "breakdown": breakdown,
        })
    }

    fn from_breakdown(kind: &str, breakdown: Vec<(String, T)>, aggregate: Aggregate, witness: Value) -> Self {
        let mut r = AuditReport {
            kind: kind.to_string(),
            value: T::zero(),
            witness,
            breakdown,
            aggregate,
        };
        r.value = r.recompute();
        r
    }
}

/// Decimal rendering of a predicted value, used as a level label.
pub fn level_label<T: Scalar>(v: &OutcomeDist<T>) -> String {
    let parts: Vec<String> = v.weights().iter().map(|w| w.to_decimal()).collect();
    format!("({})", parts.join(","))
}

/// Signed cell differences of every hypothesis, grouped by level set.
#[derive(Clone, Debug)]
pub struct CellTables<T> {
    pub levels: LevelSets<T>,
    /// `Pr[p̃_i = v]` per level.
    pub level_mass: Vec<T>,
    /// `[c][y][v][o]` signed differences.
    pub diff: Vec<Vec<Vec<Vec<T>>>>,
    /// `[c][y][v]` masses `Pr[c_i = y, p̃_i = v]`.
    pub mass: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> CellTables<T> {
    pub fn build(pop: &PopulationInstance<T>, pred: &Predictor<T>, class: &HypothesisClass) -> Result<Self> {
        Self::build_with(pop, pred, class, LevelSets::of(pred))
    }

    /// Differences taken against `pred` but grouped by the given levels.
    pub fn build_with(
        pop: &PopulationInstance<T>,
        pred: &Predictor<T>,
        class: &HypothesisClass,
        levels: LevelSets<T>,
    ) -> Result<Self> {
        pred.check_against(pop)?;
        class.check_against(pop)?;
        let nl = levels.len();
        let ell = pop.ell();
        let r = class.range_size();
        let d: Vec<Vec<T>> = (0..pop.len())
            .map(|j| {
                let w = pop.weight(j);
                (0..ell)
                    .map(|o| w.clone() * (pred.get(j).get(o).clone() - pop.truth()[j].get(o).clone()))
                    .collect()
            })
            .collect();
        let mut tot = vec![vec![T::zero(); ell]; nl];
        let mut level_mass = vec![T::zero(); nl];
        for j in 0..pop.len() {
            let lv = levels.of[j];
            level_mass[lv] += pop.weight(j);
            for o in 0..ell {
                tot[lv][o] += &d[j][o];
            }
        }
        let mut diff = Vec::with_capacity(class.len());
        let mut mass = Vec::with_capacity(class.len());
        for h in class.hypotheses() {
            // Only individuals off the most common value are visited; that
            // value's cells are the level totals minus the rest.
            let mut freq = vec![0usize; r];
            for &y in h.values() {
                freq[y] += 1;
            }
            let mode = (0..r).max_by_key(|&y| (freq[y], std::cmp::Reverse(y))).unwrap_or(0);
            let mut cd = vec![vec![vec![T::zero(); ell]; nl]; r];
            let mut cm = vec![vec![T::zero(); nl]; r];
            for (j, &y) in h.values().iter().enumerate() {
                if y == mode {
                    continue;
                }
                let lv = levels.of[j];
                cm[y][lv] += pop.weight(j);
                for o in 0..ell {
                    cd[y][lv][o] += &d[j][o];
                }
            }
            for lv in 0..nl {
                let mut rest_mass = level_mass[lv].clone();
                for y in (0..r).filter(|&y| y != mode) {
                    rest_mass -= &cm[y][lv];
                }
                cm[mode][lv] = rest_mass;
                for o in 0..ell {
                    let mut rest = tot[lv][o].clone();
                    for y in (0..r).filter(|&y| y != mode) {
                        rest -= &cd[y][lv][o];
                    }
                    cd[mode][lv][o] = rest;
                }
            }
            diff.push(cd);
            mass.push(cm);
        }
        Ok(CellTables {
            levels,
            level_mass,
            diff,
            mass,
        })
    }

    fn half() -> T {
        T::from_ratio(1, 2)
    }

    /// `δ((c_i, õ_i), (c_i, o*_i))` for hypothesis `c`.
    pub fn ma(&self, c: usize) -> T {
        let cd = &self.diff[c];
        let mut acc = T::zero();
        for per_y in cd {
            let ell = per_y.first().map_or(0, |v| v.len());
            for o in 0..ell {
                let s: T = per_y.iter().map(|v| v[o].clone()).sum();
                acc += s.abs();
            }
        }
        acc * Self::half()
    }

    /// `Pr[p̃ = v] · δ((c_i, õ_i), (c_i, o*_i) | p̃_i = v)`.
    pub fn level_gap(&self, c: usize, lv: usize) -> T {
        let mut acc = T::zero();
        for per_y in &self.diff[c] {
            for x in &per_y[lv] {
                acc += x.abs();
            }
        }
        acc * Self::half()
    }

    /// `δ((c_i, õ_i, p̃_i), (c_i, o*_i, p̃_i))` for hypothesis `c`.
    pub fn mc(&self, c: usize) -> T {
        (0..self.levels.len()).map(|lv| self.level_gap(c, lv)).sum()
    }
}

fn argmax<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.map_or(true, |b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn per_hypothesis<T: Scalar>(kind: &str, class: &HypothesisClass, values: Vec<T>) -> AuditReport<T> {
    let witness = match argmax(&values) {
        Some(i) => json!({ "hypothesis": class.hypotheses()[i].name() }),
        None => Value::Null,
    };
    let breakdown = class
        .hypotheses()
        .iter()
        .zip(values)
        .map(|(h, v)| (h.name().to_string(), v))
        .collect();
    AuditReport::from_breakdown(kind, breakdown, Aggregate::Max, witness)
}

/// `max_c δ((c_i, õ_i), (c_i, o*_i))`.
pub fn audit_multi_accuracy<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
) -> Result<AuditReport<T>> {
    let cells = CellTables::build(pop, pred, class)?;
    let values = (0..class.len()).map(|c| cells.ma(c)).collect();
    Ok(per_hypothesis("ma", class, values))
}

/// `max_c δ((c_i, õ_i, p̃_i), (c_i, o*_i, p̃_i))`.
pub fn audit_multi_calibration<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
) -> Result<AuditReport<T>> {
    let cells = CellTables::build(pop, pred, class)?;
    let values = (0..class.len()).map(|c| cells.mc(c)).collect();
    Ok(per_hypothesis("mc", class, values))
}

/// `E_v[max_c δ((c_i, õ_i), (c_i, o*_i) | p̃_i = v)]`, broken down by level.
pub fn audit_strict_multi_calibration<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
) -> Result<AuditReport<T>> {
    let cells = CellTables::build(pop, pred, class)?;
    Ok(strict_from_cells(&cells, class, "smc"))
}

pub(crate) fn strict_from_cells<T: Scalar>(cells: &CellTables<T>, class: &HypothesisClass, kind: &str) -> AuditReport<T> {
    let mut breakdown = Vec::with_capacity(cells.levels.len());
    let mut best_hyp = Vec::with_capacity(cells.levels.len());
    for lv in 0..cells.levels.len() {
        let gaps: Vec<T> = (0..class.len()).map(|c| cells.level_gap(c, lv)).collect();
        let c = argmax(&gaps).unwrap_or(0);
        best_hyp.push(c);
        breakdown.push((level_label(&cells.levels.levels[lv]), gaps[c].clone()));
    }
    let values: Vec<T> = breakdown.iter().map(|(_, v)| v.clone()).collect();
    let witness = match argmax(&values) {
        Some(lv) => json!({
            "hypothesis": class.hypotheses()[best_hyp[lv]].name(),
            "level": breakdown[lv].0,
        }),
        None => Value::Null,
    };
    AuditReport::from_breakdown(kind, breakdown, Aggregate::Sum, witness)
}

/// `δ((õ_i, p̃_i), (o*_i, p̃_i))`.
pub fn audit_calibration<T: Scalar>(pop: &PopulationInstance<T>, pred: &Predictor<T>) -> Result<AuditReport<T>> {
    let class = HypothesisClass::constant(pop.len());
    let mut r = audit_multi_calibration(pop, pred, &class)?;
    r.kind = "cal".into();
    Ok(r)
}

/// `max_c E|Cov(c_i, o*_i | p̃_i)|` for binary outcomes and `[0, 1]`-valued
/// hypotheses.
pub fn audit_covariance_mc<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
) -> Result<AuditReport<T>> {
    pop.require_binary()?;
    pred.check_against(pop)?;
    class.check_against(pop)?;
    let levels = LevelSets::of(pred);
    let nl = levels.len();
    let mut values = Vec::with_capacity(class.len());
    for h in class.hypotheses() {
        let c = h.numeric_values::<T>()?;
        let mut w = vec![T::zero(); nl];
        let mut co = vec![T::zero(); nl];
        let mut cs = vec![T::zero(); nl];
        let mut os = vec![T::zero(); nl];
        for j in 0..pop.len() {
            let lv = levels.of[j];
            let mu = pop.weight(j).clone();
            let o1 = pop.truth()[j].get(1).clone();
            w[lv] += &mu;
            co[lv] += mu.clone() * c[j].clone() * o1.clone();
            cs[lv] += mu.clone() * c[j].clone();
            os[lv] += mu * o1;
        }
        // Pr[v] · |Cov| = |Σμ c o − (Σμ c)(Σμ o)/Σμ|
        let mut acc = T::zero();
        for lv in 0..nl {
            if w[lv].is_zero_tol() {
                continue;
            }
            acc += (co[lv].clone() - cs[lv].clone() * os[lv].clone() / w[lv].clone()).abs();
        }
        values.push(acc);
    }
    Ok(per_hypothesis("cov", class, values))
}

/// One entry `∇_{S,v}` of a violation profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ViolationEntry<T> {
    pub hypothesis: usize,
    pub level: usize,
    /// `Pr[i ∈ S, p̃_i = v]`.
    pub mass: T,
    /// `|Pr[o*_i = 1 | i ∈ S, p̃_i = v] − v(1)|`.
    pub nabla: T,
    /// Unnormalized `Pr[i ∈ S, p̃_i = v] · ∇_{S,v}`.
    pub weighted: T,
}

/// Every `∇_{S,v}` with positive conditioning mass.
#[derive(Clone, Debug)]
pub struct ViolationProfile<T> {
    pub levels: Vec<OutcomeDist<T>>,
    pub level_mass: Vec<T>,
    /// `Pr[i ∈ S]` per hypothesis.
    pub set_mass: Vec<T>,
    pub entries: Vec<ViolationEntry<T>>,
}

pub fn violation_profile<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
) -> Result<ViolationProfile<T>> {
    pop.require_binary()?;
    class.require_indicators()?;
    let cells = CellTables::build(pop, pred, class)?;
    let mut entries = Vec::new();
    let mut set_mass = Vec::with_capacity(class.len());
    for (c, h) in class.hypotheses().iter().enumerate() {
        let one = h.one_index().expect("indicator");
        let mut sm = T::zero();
        for lv in 0..cells.levels.len() {
            let mass = cells.mass[c][one][lv].clone();
            sm += &mass;
            if mass.is_zero_tol() {
                continue;
            }
            // cells hold Σ μ (v(1) − p*(1)) over S ∩ {p̃ = v}
            let weighted = cells.diff[c][one][lv][1].abs();
            entries.push(ViolationEntry {
                hypothesis: c,
                level: lv,
                nabla: weighted.clone() / mass.clone(),
                mass,
                weighted,
            });
        }
        set_mass.push(sm);
    }
    Ok(ViolationProfile {
        levels: cells.levels.levels,
        level_mass: cells.level_mass,
        set_mass,
        entries,
    })
}

/// Which conditional definition [`check_conditional`] tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionalKind {
    Ma,
    Mc,
    Smc,
}

/// Pass/fail of a conditional definition with its witness.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalReport {
    pub kind: ConditionalKind,
    pub pass: bool,
    pub witness: Value,
}

/// Checks the conditional form of multi-accuracy, multi-calibration or
/// strict multi-calibration at tolerance `ε`.
///
/// MC uses the canonical `S'`: the union of the slices `S ∩ {p̃ = v}` with
/// `∇_{S,v} ≤ ε`. SMC uses the canonical `V`: the levels at which every `S`
/// with `Pr[S | v] ≥ ε` has `∇_{S,v} ≤ ε`.
pub fn check_conditional<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
    eps: &Eps,
    kind: ConditionalKind,
) -> Result<ConditionalReport> {
    let prof = violation_profile(pop, pred, class)?;
    let name = |c: usize| class.hypotheses()[c].name().to_string();
    let label = |lv: usize| level_label(&prof.levels[lv]);
    let good = |e: &ViolationEntry<T>| eps.admits_scaled(&e.weighted, &e.mass);
    let report = |pass: bool, witness: Value| ConditionalReport { kind, pass, witness };
    match kind {
        ConditionalKind::Ma => {
            let cells = CellTables::build(pop, pred, class)?;
            for (c, h) in class.hypotheses().iter().enumerate() {
                if !eps.reached_scaled(&prof.set_mass[c], &T::one()) {
                    continue;
                }
                let one = h.one_index().expect("indicator");
                let gap: T = cells.diff[c][one].iter().map(|v| v[1].clone()).sum();
                if !eps.admits_scaled(&gap.abs(), &prof.set_mass[c]) {
                    return Ok(report(false, json!({ "hypothesis": name(c) })));
                }
            }
            Ok(report(true, Value::Null))
        }
        ConditionalKind::Mc => {
            let mut slices = Vec::new();
            for c in 0..class.len() {
                let s_mass = &prof.set_mass[c];
                if !eps.reached_scaled(s_mass, &T::one()) {
                    continue;
                }
                let mine: Vec<&ViolationEntry<T>> = prof.entries.iter().filter(|e| e.hypothesis == c).collect();
                let bad: T = mine.iter().filter(|e| !good(e)).map(|e| e.mass.clone()).sum();
                if !eps.admits_scaled(&bad, s_mass) {
                    let first = mine.iter().find(|e| !good(e)).expect("a bad slice");
                    return Ok(report(
                        false,
                        json!({ "hypothesis": name(c), "level": label(first.level) }),
                    ));
                }
                let kept: Vec<String> = mine.iter().filter(|e| good(e)).map(|e| label(e.level)).collect();
                slices.push(json!({ "hypothesis": name(c), "levels": kept }));
            }
            Ok(report(true, json!({ "subsets": slices })))
        }
        ConditionalKind::Smc => {
            let mut outside = T::zero();
            let mut first_bad = None;
            let mut kept = Vec::new();
            for lv in 0..prof.levels.len() {
                let violator = prof.entries.iter().find(|e| {
                    e.level == lv && eps.reached_scaled(&e.mass, &prof.level_mass[lv]) && !good(e)
                });
                match violator {
                    Some(e) => {
                        outside += &prof.level_mass[lv];
                        first_bad.get_or_insert((e.hypothesis, lv));
                    }
                    None => kept.push(label(lv)),
                }
            }
            if eps.admits(&outside) {
                Ok(report(true, json!({ "levels": kept })))
            } else {
                let (c, lv) = first_bad.expect("a bad level");
                Ok(report(false, json!({ "hypothesis": name(c), "level": label(lv) })))
            }
        }
    }
}

/// Both sides of `SMC(p̂) ≤ |𝒢|·MC(p̃) + η` for the discretization `p̂` of `p̃`.
pub fn discretization_bound<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    class: &HypothesisClass,
    grid: &crate::dist::SimplexGrid<T>,
) -> Result<(T, T)> {
    let (hat, _) = discretize(pred, grid)?;
    let lhs = audit_strict_multi_calibration(pop, &hat, class)?.value;
    let size = T::parse_decimal(&grid.size().to_string())?;
    let rhs = size * audit_multi_calibration(pop, pred, class)?.value + T::from_rational(grid.eta());
    Ok((lhs, rhs))
}

/// Audits recomputed from explicit joint tables and statistical distance.
pub mod reference {
    use super::*;
    use crate::dist::{conditional_distance_profile, table_distance};
    use crate::population::joint_table;

    pub fn multi_accuracy<T: Scalar>(
        pop: &PopulationInstance<T>,
        pred: &Predictor<T>,
        class: &HypothesisClass,
    ) -> Result<Vec<T>> {
        class
            .hypotheses()
            .iter()
            .map(|h| {
                let c = |j: usize| h.value(j);
                let (x, y) = joint_table(pop, pred, &[&c])?;
                table_distance(&x, &y)
            })
            .collect()
    }

    pub fn multi_calibration<T: Scalar>(
        pop: &PopulationInstance<T>,
        pred: &Predictor<T>,
        class: &HypothesisClass,
    ) -> Result<Vec<T>> {
        let levels = LevelSets::of(pred);
        class
            .hypotheses()
            .iter()
            .map(|h| {
                let c = |j: usize| h.value(j);
                let v = |j: usize| levels.of[j];
                let (x, y) = joint_table(pop, pred, &[&c, &v])?;
                table_distance(&x, &y)
            })
            .collect()
    }

    pub fn strict_multi_calibration<T: Scalar>(
        pop: &PopulationInstance<T>,
        pred: &Predictor<T>,
        class: &HypothesisClass,
    ) -> Result<T> {
        let levels = LevelSets::of(pred);
        let mut best = vec![T::zero(); levels.len()];
        for h in class.hypotheses() {
            let c = |j: usize| h.value(j);
            let v = |j: usize| levels.of[j];
            let (x, y) = joint_table(pop, pred, &[&v, &c])?;
            for (z, d) in conditional_distance_profile(&x, &y, &[0])? {
                if d > best[z[0]] {
                    best[z[0]] = d;
                }
            }
        }
        let mut mass = vec![T::zero(); levels.len()];
        for j in 0..pop.len() {
            mass[levels.of[j]] += pop.weight(j);
        }
        Ok(best.into_iter().zip(mass).map(|(b, m)| b * m).sum())
    }

    /// `E|Cov(c, o* | p̃)|` from conditional expectations, one hypothesis.
    pub fn covariance<T: Scalar>(
        pop: &PopulationInstance<T>,
        pred: &Predictor<T>,
        values: &[T],
    ) -> T {
        let levels = LevelSets::of(pred);
        let mut acc = T::zero();
        for lv in 0..levels.len() {
            let members: Vec<usize> = (0..pop.len()).filter(|&j| levels.of[j] == lv).collect();
            let w: T = members.iter().map(|&j| pop.weight(j).clone()).sum();
            if w.is_zero_tol() {
                continue;
            }
            let e = |f: &dyn Fn(usize) -> T| -> T {
                members.iter().map(|&j| pop.weight(j).clone() * f(j)).sum::<T>() / w.clone()
            };
            let eco = e(&|j| values[j].clone() * pop.truth()[j].get(1).clone());
            let ec = e(&|j| values[j].clone());
            let eo = e(&|j| pop.truth()[j].get(1).clone());
            acc += w.clone() * (eco - ec * eo).abs();
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{fixture_grid_population, fixture_two_point};
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn two_point_values() {
        let (pop, class, pred) = fixture_two_point();
        assert_eq!(audit_multi_accuracy(&pop, &pred, &class).unwrap().value, q(0, 1));
        assert_eq!(audit_multi_calibration(&pop, &pred, &class).unwrap().value, q(1, 2));
        assert_eq!(audit_strict_multi_calibration(&pop, &pred, &class).unwrap().value, q(1, 2));
        assert_eq!(audit_calibration(&pop, &pred).unwrap().value, q(1, 2));
        let truth = pop.truth_predictor();
        for r in [
            audit_multi_accuracy(&pop, &truth, &class).unwrap(),
            audit_multi_calibration(&pop, &truth, &class).unwrap(),
            audit_strict_multi_calibration(&pop, &truth, &class).unwrap(),
        ] {
            assert_eq!(r.value, q(0, 1));
        }
        let marginal = pop.marginal_predictor();
        assert_eq!(audit_calibration(&pop, &marginal).unwrap().value, q(0, 1));
    }

    #[test]
    fn two_point_profile() {
        let (pop, class, pred) = fixture_two_point();
        let prof = violation_profile(&pop, &pred, &class).unwrap();
        assert_eq!(prof.entries.len(), 2);
        for e in &prof.entries {
            assert_eq!(e.nabla, q(1, 2));
        }
        let eps = Eps::new(q(3, 10)).unwrap();
        let mc = check_conditional(&pop, &pred, &class, &eps, ConditionalKind::Mc).unwrap();
        assert!(!mc.pass);
        let ma = check_conditional(&pop, &pred, &class, &eps, ConditionalKind::Ma).unwrap();
        assert!(ma.pass);
    }

    #[test]
    fn grid_fixture_level_violation() {
        let m = 10;
        let (pop, class, pred) = fixture_grid_population(m).unwrap();
        let cells = CellTables::build(&pop, &pred, &class).unwrap();
        for k in 1..=m {
            let lv = cells.levels.of[(k - 1) * m];
            let v = q(k as i64, m as i64);
            let per_level = cells.level_gap(k - 1, lv) / cells.level_mass[lv].clone();
            assert_eq!(per_level, q(2, 1) * v.clone() * (q(1, 1) - v));
        }
    }

    #[test]
    fn grid_fixture_closed_forms() {
        let (pop, class, pred) = fixture_grid_population(50).unwrap();
        assert_eq!(audit_multi_calibration(&pop, &pred, &class).unwrap().value, q(1, 100));
        let smc = audit_strict_multi_calibration(&pop, &pred, &class).unwrap();
        assert_eq!(smc.value, q(41650, 125000));
        assert_eq!(smc.recompute(), smc.value);
    }

    #[test]
    fn report_json_shape() {
        let (pop, class, pred) = fixture_two_point();
        let r = audit_multi_calibration(&pop, &pred, &class).unwrap();
        let j = r.to_json();
        assert_eq!(j["value"], "0.5");
        assert_eq!(j["kind"], "mc");
        assert_eq!(j["witness"]["hypothesis"], "all");
    }

    #[test]
    fn covariance_singletons() {
        let (pop, class, _) = fixture_grid_population(4).unwrap();
        let truth = pop.truth_predictor();
        // Outcomes are deterministic, so o* is constant on each level set.
        let all = HypothesisClass::constant(pop.len());
        assert_eq!(audit_covariance_mc(&pop, &truth, &all).unwrap().value, q(0, 1));
        let r = audit_covariance_mc(&pop, &truth, &class).unwrap();
        assert_eq!(r.value, q(0, 1));
    }
}
