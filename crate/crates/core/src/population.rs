//! Finite populations, predictors, hypothesis classes, sampling and the
//! separating fixtures.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution, WeightedIndex};

use crate::dist::{JointTable, OutcomeDist, OutcomeSpace, SimplexGrid};
use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

/// The joint law of `(i, o*_i)` over a finite set of individuals.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationInstance<T> {
    ids: Vec<String>,
    weights: Vec<T>,
    truth: Vec<OutcomeDist<T>>,
    outcomes: OutcomeSpace,
}

impl<T: Scalar> PopulationInstance<T> {
    pub fn new(
        ids: Vec<String>,
        weights: Vec<T>,
        truth: Vec<OutcomeDist<T>>,
        outcomes: OutcomeSpace,
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("a population needs at least one individual"));
        }
        if weights.len() != ids.len() || truth.len() != ids.len() {
            return Err(Error::invalid("ids, weights and ground truth differ in length"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if !ids.iter().all(|id| seen.insert(id)) {
            return Err(Error::invalid("individual ids must be distinct"));
        }
        if weights.iter().any(|w| *w < T::zero()) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let total: T = weights.iter().cloned().sum();
        let ok = if T::EXACT {
            total == T::one()
        } else {
            (total.to_f64() - 1.0).abs() <= 1e-12
        };
        if !ok {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        if truth.iter().any(|p| p.len() != outcomes.len()) {
            return Err(Error::invalid("ground truth over the wrong outcome space"));
        }
        Ok(PopulationInstance {
            ids,
            weights,
            truth,
            outcomes,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ell(&self) -> usize {
        self.outcomes.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, j: usize) -> &T {
        &self.weights[j]
    }

    pub fn truth(&self) -> &[OutcomeDist<T>] {
        &self.truth
    }

    pub fn outcomes(&self) -> &OutcomeSpace {
        &self.outcomes
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// The ground truth as a predictor.
    pub fn truth_predictor(&self) -> Predictor<T> {
        Predictor {
            values: self.truth.clone(),
        }
    }

    /// Constant predictor equal to the population's outcome marginal.
    pub fn marginal_predictor(&self) -> Predictor<T> {
        let mut m = vec![T::zero(); self.ell()];
        for (w, p) in self.weights.iter().zip(&self.truth) {
            for (acc, x) in m.iter_mut().zip(p.weights()) {
                *acc += w.clone() * x.clone();
            }
        }
        Predictor::constant(self.len(), OutcomeDist::new_unchecked(m))
    }

    pub fn require_binary(&self) -> Result<()> {
        if self.outcomes.is_binary() {
            Ok(())
        } else {
            Err(Error::domain("this operation needs the outcome space {0, 1}"))
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> PopulationInstance<U> {
        PopulationInstance {
            ids: self.ids.clone(),
            weights: self.weights.iter().map(f).collect(),
            truth: self.truth.iter().map(|p| p.map(f)).collect(),
            outcomes: self.outcomes.clone(),
        }
    }

    pub fn to_f64(&self) -> PopulationInstance<f64> {
        self.map(|x| x.to_f64())
    }

    /// Same individuals with new weights and ground truth.
    pub(crate) fn with_law(&self, weights: Vec<T>, truth: Vec<OutcomeDist<T>>) -> Self {
        PopulationInstance {
            ids: self.ids.clone(),
            weights,
            truth,
            outcomes: self.outcomes.clone(),
        }
    }
}

/// A total map from individuals to outcome distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor<T> {
    values: Vec<OutcomeDist<T>>,
}

impl<T: Scalar> Predictor<T> {
    pub fn new(values: Vec<OutcomeDist<T>>) -> Result<Self> {
        if let Some(first) = values.first() {
            if values.iter().any(|v| v.len() != first.len()) {
                return Err(Error::invalid("predictor values over different outcome spaces"));
            }
        }
        Ok(Predictor { values })
    }

    pub fn constant(n: usize, value: OutcomeDist<T>) -> Self {
        Predictor {
            values: vec![value; n],
        }
    }

    pub fn values(&self) -> &[OutcomeDist<T>] {
        &self.values
    }

    pub fn get(&self, j: usize) -> &OutcomeDist<T> {
        &self.values[j]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> Predictor<U> {
        Predictor {
            values: self.values.iter().map(|p| p.map(f)).collect(),
        }
    }

    pub fn to_f64(&self) -> Predictor<f64> {
        self.map(|x| x.to_f64())
    }

    pub fn check_against(&self, pop: &PopulationInstance<T>) -> Result<()> {
        if self.values.len() != pop.len() {
            return Err(Error::invalid(format!(
                "predictor covers {} individuals, population has {}",
                self.values.len(),
                pop.len()
            )));
        }
        if self.values.iter().any(|v| v.len() != pop.ell()) {
            return Err(Error::invalid("predictor over the wrong outcome space"));
        }
        Ok(())
    }
}

/// Rounds every value of `pred` to its nearest grid point, ties going to the
/// earliest point in grid order. Returns the grid index of each value too.
pub fn discretize<T: Scalar>(pred: &Predictor<T>, grid: &SimplexGrid<T>) -> Result<(Predictor<T>, Vec<u128>)> {
    let mut values = Vec::with_capacity(pred.len());
    let mut index = Vec::with_capacity(pred.len());
    for v in pred.values() {
        let g = grid.nearest(v)?;
        index.push(g.index);
        values.push(g.point);
    }
    Ok((Predictor { values }, index))
}

/// Partition of the individuals by predicted value.
#[derive(Clone, Debug)]
pub struct LevelSets<T> {
    /// Distinct predicted values in order of first appearance.
    pub levels: Vec<OutcomeDist<T>>,
    /// Level index of every individual.
    pub of: Vec<usize>,
}

impl<T: Scalar> LevelSets<T> {
    /// Exact equality under exact backends; values within the float
    /// tolerance share a level otherwise.
    pub fn of(pred: &Predictor<T>) -> Self {
        let mut levels: Vec<OutcomeDist<T>> = Vec::new();
        let mut of = Vec::with_capacity(pred.len());
        if T::EXACT {
            let mut index: BTreeMap<Vec<Rational>, usize> = BTreeMap::new();
            for v in pred.values() {
                let key: Vec<Rational> = v.weights().iter().map(|w| w.to_rational().expect("exact")).collect();
                let next = levels.len();
                let id = *index.entry(key).or_insert(next);
                if id == next {
                    levels.push(v.clone());
                }
                of.push(id);
            }
        } else {
            for v in pred.values() {
                match levels.iter().position(|l| l.approx_eq(v)) {
                    Some(id) => of.push(id),
                    None => {
                        of.push(levels.len());
                        levels.push(v.clone());
                    }
                }
            }
        }
        LevelSets { levels, of }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// A function from individuals to a finite ordered range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypothesis {
    name: String,
    range: Vec<String>,
    values: Vec<usize>,
}

impl Hypothesis {
    pub fn new(name: impl Into<String>, range: Vec<String>, values: Vec<usize>) -> Result<Self> {
        let name = name.into();
        if range.is_empty() {
            return Err(Error::invalid(format!("hypothesis {name} has an empty range")));
        }
        if values.iter().any(|&v| v >= range.len()) {
            return Err(Error::invalid(format!("hypothesis {name} takes a value outside its range")));
        }
        Ok(Hypothesis { name, range, values })
    }

    /// Indicator of a set of individuals, with range `{0, 1}`.
    pub fn indicator(name: impl Into<String>, members: &[bool]) -> Self {
        Hypothesis {
            name: name.into(),
            range: vec!["0".into(), "1".into()],
            values: members.iter().map(|&b| b as usize).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn range(&self) -> &[String] {
        &self.range
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn value(&self, j: usize) -> usize {
        self.values[j]
    }

    pub fn label(&self, j: usize) -> &str {
        &self.range[self.values[j]]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the range element `1` for set indicators.
    pub fn one_index(&self) -> Option<usize> {
        if !self.is_indicator() {
            return None;
        }
        self.range
            .iter()
            .position(|l| l.parse::<Rational>().ok() == Some(Rational::integer(1)))
    }

    /// True when the range is exactly `{0, 1}`.
    pub fn is_indicator(&self) -> bool {
        if self.range.len() != 2 {
            return false;
        }
        let mut nums: Vec<Rational> = match self.range.iter().map(|l| l.parse()).collect() {
            Ok(v) => v,
            Err(_) => return false,
        };
        nums.sort();
        nums == [Rational::integer(0), Rational::integer(1)]
    }

    /// Membership vector of the set `{j : c_j = 1}`.
    pub fn members(&self) -> Result<Vec<bool>> {
        let one = self
            .one_index()
            .ok_or_else(|| Error::domain(format!("hypothesis {} is not a set indicator", self.name)))?;
        Ok(self.values.iter().map(|&v| v == one).collect())
    }

    /// Range elements parsed as numbers in `[0, 1]`.
    pub fn numeric_range<T: Scalar>(&self) -> Result<Vec<T>> {
        self.range
            .iter()
            .map(|l| {
                let v = T::parse_decimal(l).map_err(|_| {
                    Error::domain(format!("hypothesis {} has non-numeric value {l:?}", self.name))
                })?;
                if v < T::zero() || v > T::one() {
                    return Err(Error::domain(format!(
                        "hypothesis {} has value {l} outside [0, 1]",
                        self.name
                    )));
                }
                Ok(v)
            })
            .collect()
    }

    /// Per-individual numeric values.
    pub fn numeric_values<T: Scalar>(&self) -> Result<Vec<T>> {
        let r = self.numeric_range::<T>()?;
        Ok(self.values.iter().map(|&v| r[v].clone()).collect())
    }

    /// Pointwise complement of a set indicator.
    pub fn complement(&self) -> Result<Hypothesis> {
        let members = self.members()?;
        let flipped: Vec<bool> = members.iter().map(|b| !b).collect();
        Ok(Hypothesis::indicator(format!("not({})", self.name), &flipped))
    }
}

/// A finite list of hypotheses sharing one range.
#[derive(Clone, Debug)]
pub struct HypothesisClass {
    hypotheses: Vec<Arc<Hypothesis>>,
    closed_under_complement: bool,
}

impl HypothesisClass {
    pub fn new(hypotheses: Vec<Hypothesis>, closed_under_complement: bool) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::invalid("a hypothesis class needs at least one hypothesis"));
        }
        let range = hypotheses[0].range().to_vec();
        let n = hypotheses[0].len();
        for h in &hypotheses {
            if h.range() != range.as_slice() {
                return Err(Error::invalid(format!(
                    "hypothesis {} has a different range than {}",
                    h.name(),
                    hypotheses[0].name()
                )));
            }
            if h.len() != n {
                return Err(Error::invalid(format!("hypothesis {} has the wrong length", h.name())));
            }
        }
        if closed_under_complement {
            for h in &hypotheses {
                let comp = h.complement()?.members()?;
                if !hypotheses.iter().any(|g| g.members().ok().as_ref() == Some(&comp)) {
                    return Err(Error::invalid(format!(
                        "class flagged complement-closed lacks the complement of {}",
                        h.name()
                    )));
                }
            }
        }
        Ok(HypothesisClass {
            hypotheses: hypotheses.into_iter().map(Arc::new).collect(),
            closed_under_complement,
        })
    }

    /// The class together with every missing complement.
    pub fn with_complements(hypotheses: Vec<Hypothesis>) -> Result<Self> {
        let mut all = hypotheses;
        let mut i = 0;
        while i < all.len() {
            let comp = all[i].complement()?;
            let target = comp.members()?;
            if !all.iter().any(|g| g.members().ok().as_ref() == Some(&target)) {
                all.push(comp);
            }
            i += 1;
        }
        Self::new(all, true)
    }

    /// `{1_𝒳}` over `n` individuals.
    pub fn constant(n: usize) -> Self {
        HypothesisClass {
            hypotheses: vec![Arc::new(Hypothesis::indicator("all", &vec![true; n]))],
            closed_under_complement: false,
        }
    }

    pub fn hypotheses(&self) -> &[Arc<Hypothesis>] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn closed_under_complement(&self) -> bool {
        self.closed_under_complement
    }

    pub fn range(&self) -> &[String] {
        self.hypotheses[0].range()
    }

    pub fn range_size(&self) -> usize {
        self.range().len()
    }

    pub fn all_indicators(&self) -> bool {
        self.hypotheses.iter().all(|h| h.is_indicator())
    }

    pub fn require_indicators(&self) -> Result<()> {
        if self.all_indicators() {
            Ok(())
        } else {
            Err(Error::domain("this operation needs set-indicator hypotheses with range {0, 1}"))
        }
    }

    pub fn check_against<T: Scalar>(&self, pop: &PopulationInstance<T>) -> Result<()> {
        if self.hypotheses[0].len() != pop.len() {
            return Err(Error::invalid(format!(
                "hypotheses cover {} individuals, population has {}",
                self.hypotheses[0].len(),
                pop.len()
            )));
        }
        Ok(())
    }
}

/// Per-individual projection used to build joint tables.
pub type Projection<'a> = &'a dyn Fn(usize) -> usize;

/// Exact joint laws of `(projections…, õ_i)` and `(projections…, o*_i)`.
///
/// Keys list the projections in order followed by the outcome index.
pub fn joint_table<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    projections: &[Projection<'_>],
) -> Result<(JointTable<T>, JointTable<T>)> {
    pred.check_against(pop)?;
    let arity = projections.len() + 1;
    let mut tilde = JointTable::new(arity);
    let mut star = JointTable::new(arity);
    for j in 0..pop.len() {
        let prefix: Vec<usize> = projections.iter().map(|f| f(j)).collect();
        let w = pop.weight(j);
        for o in 0..pop.ell() {
            let mut key = prefix.clone();
            key.push(o);
            tilde.add(key.clone(), w.clone() * pred.get(j).get(o).clone());
            star.add(key, w.clone() * pop.truth()[j].get(o).clone());
        }
    }
    Ok((tilde, star))
}

/// `n` i.i.d. draws of `(i, o*_i)` as index pairs.
pub fn sample<T: Scalar, R: Rng + ?Sized>(
    pop: &PopulationInstance<T>,
    rng: &mut R,
    n: usize,
) -> Result<Vec<(usize, usize)>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let who = WeightedIndex::new(pop.weights().iter().map(|w| w.to_f64()))
        .map_err(|e| Error::invalid(format!("cannot sample individuals: {e}")))?;
    let outcome: Vec<WeightedIndex<f64>> = pop
        .truth()
        .iter()
        .map(|p| WeightedIndex::new(p.weights().iter().map(|w| w.to_f64())))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(format!("cannot sample outcomes: {e}")))?;
    Ok((0..n)
        .map(|_| {
            let j = who.sample(rng);
            (j, outcome[j].sample(rng))
        })
        .collect())
}

/// Counts `N[j][o]` of `n` i.i.d. draws of `(i, o*_i)`.
///
/// Has the law of tallying [`sample`], drawn as a multinomial through
/// sequential binomials so the cost does not grow with `n`.
pub fn sample_counts<T: Scalar, R: Rng + ?Sized>(
    pop: &PopulationInstance<T>,
    rng: &mut R,
    n: u64,
) -> Vec<Vec<u64>> {
    let ell = pop.ell();
    let mut probs = Vec::with_capacity(pop.len() * ell);
    for (w, p) in pop.weights().iter().zip(pop.truth()) {
        for x in p.weights() {
            probs.push((w.clone() * x.clone()).to_f64().max(0.0));
        }
    }
    let mut remaining_mass: f64 = probs.iter().sum();
    let mut remaining = n;
    let mut flat = vec![0u64; probs.len()];
    for (a, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let share = if remaining_mass > 0.0 { (p / remaining_mass).clamp(0.0, 1.0) } else { 0.0 };
        let last_positive = probs[a + 1..].iter().all(|&q| q <= 0.0);
        let k = if last_positive || share >= 1.0 {
            remaining
        } else if share <= 0.0 {
            0
        } else {
            Binomial::new(remaining, share).expect("valid binomial").sample(rng)
        };
        flat[a] = k;
        remaining -= k;
        remaining_mass -= p;
    }
    flat.chunks(ell).map(|c| c.to_vec()).collect()
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// `𝒳 = {0, 1}`, `o* | i ~ Bern(½)`, `𝒞 = {1_𝒳}` and `p̃_j = j`.
///
/// The predictor is multi-accurate but far from multi-calibrated.
pub fn fixture_two_point() -> (PopulationInstance<Rational>, HypothesisClass, Predictor<Rational>) {
    let half = Rational::new(1, 2);
    let pop = PopulationInstance::new(
        labels(2),
        vec![half.clone(), half.clone()],
        vec![OutcomeDist::bernoulli(half.clone()).unwrap(); 2],
        OutcomeSpace::binary(),
    )
    .expect("valid fixture");
    let pred = Predictor {
        values: vec![OutcomeDist::point_mass(2, 0), OutcomeDist::point_mass(2, 1)],
    };
    (pop, HypothesisClass::constant(2), pred)
}

/// `𝒳 = [m] × [m]` with `o*_i = 1[i₁ ≥ i₂]`, `c_k(j) = 1[j₁ = k, j₂ ≤ k]`
/// and `p̃_j = j₁/m`.
///
/// Individual `(a, b)` with `a, b ∈ {1..m}` has id `"a,b"` and index
/// `(a−1)·m + (b−1)`.
pub fn fixture_grid_population(
    m: usize,
) -> Result<(PopulationInstance<Rational>, HypothesisClass, Predictor<Rational>)> {
    if m < 2 {
        return Err(Error::invalid("the grid fixture needs m ≥ 2"));
    }
    let n = m * m;
    let w = Rational::new(1, n as i64);
    let mut ids = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(n);
    for a in 1..=m {
        let level = OutcomeDist::bernoulli(Rational::new(a as i64, m as i64)).unwrap();
        for b in 1..=m {
            ids.push(format!("{a},{b}"));
            truth.push(OutcomeDist::point_mass(2, (a >= b) as usize));
            pred.push(level.clone());
        }
    }
    let pop = PopulationInstance::new(ids, vec![w; n], truth, OutcomeSpace::binary())?;
    let hyps = (1..=m)
        .map(|k| {
            let members: Vec<bool> = (0..n)
                .map(|idx| {
                    let (a, b) = (idx / m + 1, idx % m + 1);
                    a == k && b <= k
                })
                .collect();
            Hypothesis::indicator(format!("c{k}"), &members)
        })
        .collect();
    Ok((pop, HypothesisClass::new(hyps, false)?, Predictor { values: pred }))
}

/// Parameters of [`random_instance`].
#[derive(Clone, Debug)]
pub struct RandomSpec {
    pub individuals: usize,
    pub outcomes: usize,
    pub hypotheses: usize,
    /// Size of the shared hypothesis range; 2 gives set indicators.
    pub range_size: usize,
    /// Number of distinct predicted values; individuals share them.
    pub levels: usize,
    /// Largest integer used before normalizing random weights.
    pub granularity: i64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            individuals: 8,
            outcomes: 2,
            hypotheses: 4,
            range_size: 2,
            levels: 4,
            granularity: 8,
        }
    }
}

fn random_dist<R: Rng + ?Sized>(rng: &mut R, ell: usize, g: i64) -> OutcomeDist<Rational> {
    loop {
        let raw: Vec<i64> = (0..ell).map(|_| rng.gen_range(0..=g)).collect();
        let total: i64 = raw.iter().sum();
        if total > 0 {
            return OutcomeDist::new(raw.iter().map(|&x| Rational::new(x, total)).collect()).unwrap();
        }
    }
}

/// Random exact instance with a predictor whose values repeat across
/// individuals, so level sets are nontrivial.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &RandomSpec,
) -> Result<(PopulationInstance<Rational>, HypothesisClass, Predictor<Rational>)> {
    if spec.individuals == 0 || spec.outcomes < 2 || spec.hypotheses == 0 || spec.range_size == 0 {
        return Err(Error::invalid("degenerate random instance parameters"));
    }
    let n = spec.individuals;
    let g = spec.granularity.max(1);
    let raw: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=g)).collect();
    let total: i64 = raw.iter().sum();
    let weights = raw.iter().map(|&x| Rational::new(x, total)).collect();
    let truth = (0..n).map(|_| random_dist(rng, spec.outcomes, g)).collect();
    let pop = PopulationInstance::new(labels(n), weights, truth, OutcomeSpace::numbered(spec.outcomes)?)?;
    let pool: Vec<OutcomeDist<Rational>> =
        (0..spec.levels.max(1)).map(|_| random_dist(rng, spec.outcomes, g)).collect();
    let pred = Predictor {
        values: (0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect(),
    };
    let range = labels(spec.range_size);
    let hyps = (0..spec.hypotheses)
        .map(|h| {
            let values = (0..n).map(|_| rng.gen_range(0..spec.range_size)).collect();
            Hypothesis::new(format!("h{h}"), range.clone(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pop, HypothesisClass::new(hyps, false)?, pred))
}

/// Random binary instance whose indicator class is closed under complement.
pub fn random_binary_instance<R: Rng + ?Sized>(
    rng: &mut R,
    individuals: usize,
    hypotheses: usize,
    levels: usize,
) -> Result<(PopulationInstance<Rational>, HypothesisClass, Predictor<Rational>)> {
    let spec = RandomSpec {
        individuals,
        outcomes: 2,
        hypotheses,
        range_size: 2,
        levels,
        granularity: 8,
    };
    let (pop, class, pred) = random_instance(rng, &spec)?;
    let hyps = class.hypotheses().iter().map(|h| (**h).clone()).collect();
    Ok((pop, HypothesisClass::with_complements(hyps)?, pred))
}
