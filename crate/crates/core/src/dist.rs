//! Outcome spaces, distributions over outcomes, statistical distance and
//! simplex grids.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

/// Largest support enumerated by [`stat_distance_subset_oracle`].
pub const SUBSET_ORACLE_LIMIT: usize = 22;
/// Largest grid that [`SimplexGrid::points`] will materialize.
pub const GRID_MATERIALIZE_LIMIT: u128 = 2_000_000;

const DIST_TOL: f64 = 1e-12;

/// Ordered finite set of outcome labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    labels: Vec<String>,
}

impl OutcomeSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::invalid("an outcome space needs at least two outcomes"));
        }
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::invalid("outcome labels must be distinct"));
        }
        Ok(OutcomeSpace { labels })
    }

    /// Outcomes `"0"`, `"1"`, ..., `"ℓ-1"`.
    pub fn numbered(ell: usize) -> Result<Self> {
        Self::new((0..ell).map(|o| o.to_string()).collect())
    }

    pub fn binary() -> Self {
        Self::numbered(2).expect("two labels")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// True for the outcome space `{0, 1}` in that order.
    pub fn is_binary(&self) -> bool {
        self.labels.len() == 2
            && self.labels[0].parse::<Rational>().ok() == Some(Rational::integer(0))
            && self.labels[1].parse::<Rational>().ok() == Some(Rational::integer(1))
    }
}

/// A point of the simplex over an outcome space.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDist<T> {
    weights: Vec<T>,
}

impl<T: Scalar> OutcomeDist<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid("a distribution needs at least two outcomes"));
        }
        if weights.iter().any(|w| *w < T::zero()) {
            return Err(Error::invalid("distribution weights must be nonnegative"));
        }
        let total: T = weights.iter().cloned().sum();
        let ok = if T::EXACT {
            total == T::one()
        } else {
            (total.to_f64() - 1.0).abs() <= DIST_TOL
        };
        if !ok {
            return Err(Error::invalid(format!("distribution weights sum to {total}, not 1")));
        }
        Ok(OutcomeDist { weights })
    }

    pub(crate) fn new_unchecked(weights: Vec<T>) -> Self {
        OutcomeDist { weights }
    }

    pub fn point_mass(ell: usize, o: usize) -> Self {
        let mut w = vec![T::zero(); ell];
        w[o] = T::one();
        OutcomeDist { weights: w }
    }

    pub fn uniform(ell: usize) -> Self {
        OutcomeDist {
            weights: vec![T::from_ratio(1, ell as i64); ell],
        }
    }

    /// Binary distribution with `Pr[1] = p`.
    pub fn bernoulli(p: T) -> Result<Self> {
        Self::new(vec![T::one() - p.clone(), p])
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<T> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, o: usize) -> &T {
        &self.weights[o]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> OutcomeDist<U> {
        OutcomeDist {
            weights: self.weights.iter().map(f).collect(),
        }
    }

    pub fn to_f64(&self) -> OutcomeDist<f64> {
        self.map(|w| w.to_f64())
    }

    pub fn approx_eq(&self, other: &Self) -> bool {
        self.weights.len() == other.weights.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.eq_tol(b))
    }
}

/// Statistical distance `½ Σ |p(a) − q(a)|` between aligned mass vectors.
pub fn stat_distance<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(format!(
            "supports of size {} and {}",
            p.len(),
            q.len()
        )));
    }
    let total: T = p.iter().zip(q).map(|(a, b)| (a.clone() - b.clone()).abs()).sum();
    Ok(total / T::from_int(2))
}

/// Statistical distance as `max_A |p(A) − q(A)|` by enumerating every event.
pub fn stat_distance_subset_oracle<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(format!(
            "supports of size {} and {}",
            p.len(),
            q.len()
        )));
    }
    let n = p.len();
    if n > SUBSET_ORACLE_LIMIT {
        return Err(Error::EnumerationLimit {
            what: "support",
            size: n,
            limit: SUBSET_ORACLE_LIMIT,
        });
    }
    let diff: Vec<T> = p.iter().zip(q).map(|(a, b)| a.clone() - b.clone()).collect();
    // Gray-code walk: each step toggles one atom in or out of the event.
    let mut inside = vec![false; n];
    let mut running = T::zero();
    let mut best = T::zero();
    for step in 1u64..(1u64 << n) {
        let atom = step.trailing_zeros() as usize;
        if inside[atom] {
            running -= &diff[atom];
        } else {
            running += &diff[atom];
        }
        inside[atom] = !inside[atom];
        let value = running.abs();
        if value > best {
            best = value;
        }
    }
    Ok(best)
}

/// Finite joint distribution over tuples of small integer codes.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable<T> {
    arity: usize,
    masses: BTreeMap<Vec<usize>, T>,
}

impl<T: Scalar> JointTable<T> {
    pub fn new(arity: usize) -> Self {
        JointTable {
            arity,
            masses: BTreeMap::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn add(&mut self, key: Vec<usize>, mass: T) {
        debug_assert_eq!(key.len(), self.arity);
        if mass.is_zero_tol() && T::EXACT {
            return;
        }
        match self.masses.get_mut(&key) {
            Some(m) => *m += mass,
            None => {
                self.masses.insert(key, mass);
            }
        }
    }

    pub fn get(&self, key: &[usize]) -> T {
        self.masses.get(key).cloned().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &T)> {
        self.masses.iter()
    }

    pub fn total(&self) -> T {
        self.masses.values().cloned().sum()
    }

    /// Marginal on the listed coordinates.
    pub fn marginal(&self, coords: &[usize]) -> JointTable<T> {
        let mut out = JointTable::new(coords.len());
        for (k, m) in &self.masses {
            out.add(coords.iter().map(|&c| k[c]).collect(), m.clone());
        }
        out
    }

    /// Masses of both tables aligned over the union of their supports.
    pub fn aligned(&self, other: &JointTable<T>) -> Result<(Vec<T>, Vec<T>)> {
        if self.arity != other.arity {
            return Err(Error::SupportMismatch(format!(
                "tables of arity {} and {}",
                self.arity, other.arity
            )));
        }
        let keys: BTreeSet<&Vec<usize>> = self.masses.keys().chain(other.masses.keys()).collect();
        Ok(keys
            .into_iter()
            .map(|k| (self.get(k), other.get(k)))
            .unzip())
    }
}

/// Statistical distance between two joint tables over the same tuple space.
pub fn table_distance<T: Scalar>(x: &JointTable<T>, y: &JointTable<T>) -> Result<T> {
    let (p, q) = x.aligned(y)?;
    stat_distance(&p, &q)
}

/// `δ(X, Y | Z = z)` for every `z` of positive mass.
///
/// `z_coords` lists the tuple positions forming `Z` in both tables.
pub fn conditional_distance_profile<T: Scalar>(
    joint_x: &JointTable<T>,
    joint_y: &JointTable<T>,
    z_coords: &[usize],
) -> Result<BTreeMap<Vec<usize>, T>> {
    if joint_x.arity != joint_y.arity {
        return Err(Error::SupportMismatch("tables of different arity".into()));
    }
    if z_coords.iter().any(|&c| c >= joint_x.arity) {
        return Err(Error::invalid("conditioning coordinate out of range"));
    }
    let zx = joint_x.marginal(z_coords);
    let zy = joint_y.marginal(z_coords);
    let (px, py) = zx.aligned(&zy)?;
    if px.iter().zip(&py).any(|(a, b)| !a.eq_tol(b)) {
        let keys: BTreeSet<&Vec<usize>> = zx.masses.keys().chain(zy.masses.keys()).collect();
        let bad = keys
            .into_iter()
            .find(|k| !zx.get(k).eq_tol(&zy.get(k)))
            .cloned()
            .unwrap_or_default();
        return Err(Error::ConditioningMismatch(format!("{bad:?}")));
    }
    let mut gaps: BTreeMap<Vec<usize>, T> = BTreeMap::new();
    let keys: BTreeSet<&Vec<usize>> = joint_x.masses.keys().chain(joint_y.masses.keys()).collect();
    for k in keys {
        let z: Vec<usize> = z_coords.iter().map(|&c| k[c]).collect();
        let d = (joint_x.get(k) - joint_y.get(k)).abs();
        *gaps.entry(z).or_insert_with(T::zero) += d;
    }
    let mut out = BTreeMap::new();
    for (z, mass) in zx.masses {
        if mass.is_zero_tol() {
            continue;
        }
        let gap = gaps.remove(&z).unwrap_or_else(T::zero);
        out.insert(z, gap / (T::from_int(2) * mass));
    }
    Ok(out)
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

fn binomial_big(n: u64, k: u64) -> BigUint {
    let k = k.min(n.saturating_sub(k));
    let mut acc = BigUint::from(1u8);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
enum GridKind<T> {
    Coordinate { m: u32 },
    Explicit(Vec<OutcomeDist<T>>),
}

/// A finite subset of the simplex with a certified covering radius.
///
/// Coordinate grids `{0, 1/m, …, 1}^ℓ ∩ Δ` are never materialized; their
/// points are listed in lexicographic order of `(k_{ℓ−1}, …, k_0)`, so for
/// binary outcomes the order follows the positive-outcome coordinate upward.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexGrid<T> {
    ell: usize,
    eta: Rational,
    kind: GridKind<T>,
}

/// A grid point together with its position in the grid's list order.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint<T> {
    pub index: u128,
    pub point: OutcomeDist<T>,
}

/// Denominator `⌊(1/(eε) − 1)(ℓ − 1)⌋` of the coordinate grid for precision `ε`.
pub fn coordinate_grid_denominator(ell: usize, eps: f64) -> i64 {
    ((1.0 / (std::f64::consts::E * eps) - 1.0) * (ell as f64 - 1.0)).floor() as i64
}

/// Coordinate grid for precision `ε`, with `η = (ℓ−1)/m`.
pub fn make_coordinate_grid<T: Scalar>(ell: usize, eps: f64) -> Result<SimplexGrid<T>> {
    if !(eps > 0.0) {
        return Err(Error::invalid("grid precision must be positive"));
    }
    let m = coordinate_grid_denominator(ell, eps);
    if m < 1 {
        return Err(Error::PrecisionTooCoarse(m));
    }
    SimplexGrid::coordinate(ell, m as u32)
}

impl<T: Scalar> SimplexGrid<T> {
    /// Coordinate grid with an explicit denominator `m`.
    pub fn coordinate(ell: usize, m: u32) -> Result<Self> {
        if ell < 2 {
            return Err(Error::invalid("grids need at least two outcomes"));
        }
        if m < 1 {
            return Err(Error::PrecisionTooCoarse(m as i64));
        }
        Ok(SimplexGrid {
            ell,
            eta: Rational::new(ell as i64 - 1, m as i64),
            kind: GridKind::Coordinate { m },
        })
    }

    /// Grid made of the given points.
    ///
    /// The covering radius is computed exactly for binary outcomes and set to
    /// the trivial bound 1 otherwise.
    pub fn explicit(points: Vec<OutcomeDist<T>>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("a grid needs at least one point"))?;
        let ell = first.len();
        if points.iter().any(|p| p.len() != ell) {
            return Err(Error::invalid("grid points over different outcome spaces"));
        }
        let eta = if ell == 2 {
            binary_covering_radius(&points)?
        } else {
            Rational::integer(1)
        };
        Ok(SimplexGrid {
            ell,
            eta,
            kind: GridKind::Explicit(points),
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn eta(&self) -> &Rational {
        &self.eta
    }

    pub fn denominator(&self) -> Option<u32> {
        match self.kind {
            GridKind::Coordinate { m } => Some(m),
            GridKind::Explicit(_) => None,
        }
    }

    /// Number of points; saturates for astronomically large grids.
    pub fn size(&self) -> u128 {
        match &self.kind {
            GridKind::Coordinate { m } => {
                binomial(*m as u64 + self.ell as u64 - 1, self.ell as u64 - 1).unwrap_or(u128::MAX)
            }
            GridKind::Explicit(p) => p.len() as u128,
        }
    }

    pub fn size_big(&self) -> BigUint {
        match &self.kind {
            GridKind::Coordinate { m } => binomial_big(*m as u64 + self.ell as u64 - 1, self.ell as u64 - 1),
            GridKind::Explicit(p) => BigUint::from(p.len()),
        }
    }

    /// All points in list order.
    pub fn points(&self) -> Result<Vec<OutcomeDist<T>>> {
        match &self.kind {
            GridKind::Explicit(p) => Ok(p.clone()),
            GridKind::Coordinate { m } => {
                let size = self.size();
                if size > GRID_MATERIALIZE_LIMIT {
                    return Err(Error::EnumerationLimit {
                        what: "grid points",
                        size: size.min(usize::MAX as u128) as usize,
                        limit: GRID_MATERIALIZE_LIMIT as usize,
                    });
                }
                let mut out = Vec::with_capacity(size as usize);
                let mut k = vec![0u32; self.ell];
                k[0] = *m;
                loop {
                    out.push(self.from_counts(&k));
                    if !next_composition(&mut k) {
                        break;
                    }
                }
                Ok(out)
            }
        }
    }

    fn from_counts(&self, k: &[u32]) -> OutcomeDist<T> {
        let m = self.denominator().expect("coordinate grid") as i64;
        OutcomeDist::new_unchecked(k.iter().map(|&c| T::from_ratio(c as i64, m)).collect())
    }

    fn rank(&self, k: &[u32]) -> u128 {
        let mut remaining = k.iter().map(|&c| c as u64).sum::<u64>();
        let mut rank = 0u128;
        for i in (1..k.len()).rev() {
            for v in 0..k[i] as u64 {
                rank += binomial(remaining - v + i as u64 - 1, i as u64 - 1).unwrap_or(u128::MAX);
            }
            remaining -= k[i] as u64;
        }
        rank
    }

    /// The point at position `index` in list order.
    pub fn point_at(&self, index: u128) -> Result<OutcomeDist<T>> {
        if index >= self.size() {
            return Err(Error::invalid(format!("grid index {index} out of range")));
        }
        match &self.kind {
            GridKind::Explicit(points) => Ok(points[index as usize].clone()),
            GridKind::Coordinate { m } => {
                let mut k = vec![0u32; self.ell];
                let mut remaining = *m as u64;
                let mut rest = index;
                for i in (1..self.ell).rev() {
                    let mut v = 0u64;
                    loop {
                        let block = binomial(remaining - v + i as u64 - 1, i as u64 - 1).unwrap_or(u128::MAX);
                        if rest < block {
                            break;
                        }
                        rest -= block;
                        v += 1;
                    }
                    k[i] = v as u32;
                    remaining -= v;
                }
                k[0] = remaining as u32;
                Ok(self.from_counts(&k))
            }
        }
    }

    /// The grid point nearest to `p` in statistical distance; ties go to the
    /// earliest point in list order.
    pub fn nearest(&self, p: &OutcomeDist<T>) -> Result<GridPoint<T>> {
        if p.len() != self.ell {
            return Err(Error::SupportMismatch(format!(
                "distribution over {} outcomes, grid over {}",
                p.len(),
                self.ell
            )));
        }
        match &self.kind {
            GridKind::Explicit(points) => {
                let mut best: Option<(usize, T)> = None;
                for (i, g) in points.iter().enumerate() {
                    let d = stat_distance(p.weights(), g.weights())?;
                    if best.as_ref().map_or(true, |(_, b)| d.clone() + T::tol() < *b) {
                        best = Some((i, d));
                    }
                }
                let (i, _) = best.expect("nonempty grid");
                Ok(GridPoint {
                    index: i as u128,
                    point: points[i].clone(),
                })
            }
            GridKind::Coordinate { m } => {
                let k = nearest_counts(p.weights(), *m);
                Ok(GridPoint {
                    index: self.rank(&k),
                    point: self.from_counts(&k),
                })
            }
        }
    }

    /// Brute-force nearest point by scanning the whole list.
    pub fn nearest_by_scan(&self, p: &OutcomeDist<T>) -> Result<GridPoint<T>> {
        let points = self.points()?;
        let mut best: Option<(usize, T)> = None;
        for (i, g) in points.iter().enumerate() {
            let d = stat_distance(p.weights(), g.weights())?;
            if best.as_ref().map_or(true, |(_, b)| d.clone() + T::tol() < *b) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("nonempty grid");
        Ok(GridPoint {
            index: i as u128,
            point: points[i].clone(),
        })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> SimplexGrid<U> {
        SimplexGrid {
            ell: self.ell,
            eta: self.eta.clone(),
            kind: match &self.kind {
                GridKind::Coordinate { m } => GridKind::Coordinate { m: *m },
                GridKind::Explicit(p) => GridKind::Explicit(p.iter().map(|d| d.map(f)).collect()),
            },
        }
    }
}

/// Largest-remainder rounding of `m·p` onto compositions of `m`.
///
/// Flooring every coordinate and handing the missing units to the largest
/// fractional parts minimizes the L1 distance; among equal fractional parts
/// the lower coordinates receive the units, which selects the earliest
/// optimal point in list order.
fn nearest_counts<T: Scalar>(p: &[T], m: u32) -> Vec<u32> {
    let mt = T::from_int(m as i64);
    let mut counts = Vec::with_capacity(p.len());
    let mut fracs = Vec::with_capacity(p.len());
    for w in p {
        let scaled = mt.clone() * w.clone();
        let fl = floor_scalar(&scaled).clamp(0, m as i64);
        fracs.push(scaled - T::from_int(fl));
        counts.push(fl as u32);
    }
    let assigned: u32 = counts.iter().sum();
    let missing = m.saturating_sub(assigned) as usize;
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        fracs[b]
            .partial_cmp(&fracs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &o in order.iter().take(missing) {
        counts[o] += 1;
    }
    // Float inputs that sum slightly above one can overshoot.
    let mut excess = counts.iter().sum::<u32>().saturating_sub(m);
    for &o in order.iter().rev() {
        if excess == 0 {
            break;
        }
        if counts[o] > 0 {
            counts[o] -= 1;
            excess -= 1;
        }
    }
    counts
}

fn floor_scalar<T: Scalar>(x: &T) -> i64 {
    match x.to_rational() {
        Some(r) => {
            use num_traits::ToPrimitive;
            r.floor().to_i64().unwrap_or(i64::MAX)
        }
        None => x.to_f64().floor() as i64,
    }
}

/// Advances `k` to the next composition in lexicographic order of
/// `(k_{ℓ−1}, …, k_0)`; returns false after the last one.
fn next_composition(k: &mut [u32]) -> bool {
    let ell = k.len();
    // Find the lowest position i ≥ 1 that can take one unit from below.
    let mut below: u32 = k[0];
    for i in 1..ell {
        if below > 0 {
            k[i] += 1;
            let rest = below - 1;
            for c in k.iter_mut().take(i) {
                *c = 0;
            }
            k[0] = rest;
            return true;
        }
        below += k[i];
    }
    false
}

fn binary_covering_radius<T: Scalar>(points: &[OutcomeDist<T>]) -> Result<Rational> {
    let mut xs: Vec<Rational> = points
        .iter()
        .map(|p| {
            p.get(1)
                .to_rational()
                .or_else(|| Rational::from_f64(p.get(1).to_f64()))
                .ok_or_else(|| Error::invalid("non-finite grid coordinate"))
        })
        .collect::<Result<_>>()?;
    xs.sort();
    let mut eta = xs[0].clone();
    let last = Rational::integer(1) - xs[xs.len() - 1].clone();
    if last > eta {
        eta = last;
    }
    for w in xs.windows(2) {
        let half = (w[1].clone() - w[0].clone()) / Rational::integer(2);
        if half > eta {
            eta = half;
        }
    }
    Ok(eta)
}
