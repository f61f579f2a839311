//! Directed-graph regularity: statistics, exact checkers, a cut oracle, the
//! intermediate partition refinement and the translation to and from
//! populations over vertex pairs.
//!
//! Vertex sets are `u64` masks, so graphs have at most 64 vertices; every
//! exhaustive routine carries a tighter limit. Statistics are computed on
//! integers scaled by a common denominator and returned as [`Rational`].

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::dist::{OutcomeDist, OutcomeSpace};
use crate::error::{Error, Result};
use crate::population::{Hypothesis, HypothesisClass, PopulationInstance, Predictor};
use crate::scalar::{Eps, Rational, Scalar};

pub type VertexSet = u64;

pub const MAX_VERTICES: usize = 64;
/// Smaller side of a pair for [`irregularity`] and [`check_regular_pair`].
pub const PAIR_SIDE_LIMIT: usize = 22;
/// Vertex limit of [`check_frieze_kannan`] and exact [`cut_oracle`].
pub const FK_LIMIT: usize = 20;
/// Vertex limit of the all-`(S, T)` scans.
pub const ST_LIMIT: usize = 14;
/// Vertex limit of [`rectangle_audits`].
pub const RECTANGLE_LIMIT: usize = 8;
/// Vertex limit for materializing the rectangle class.
pub const RECTANGLE_CLASS_LIMIT: usize = 6;
/// Part limit of the literal sign-pattern search.
pub const SIGMA_PART_LIMIT: usize = 3;

fn ratio(num: i128, den: i128) -> Rational {
    Rational::from_bigints(BigInt::from(num), BigInt::from(den))
}

fn pc(x: u64) -> i64 {
    x.count_ones() as i64
}

/// The mask of a list of vertices.
pub fn set_of(vertices: &[usize]) -> VertexSet {
    vertices.iter().fold(0, |m, &v| m | 1u64 << v)
}

/// Vertices of a mask in increasing order.
pub fn members(mut s: VertexSet) -> Vec<usize> {
    let mut out = Vec::with_capacity(s.count_ones() as usize);
    while s != 0 {
        out.push(s.trailing_zeros() as usize);
        s &= s - 1;
    }
    out
}

pub fn full_set(n: usize) -> VertexSet {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// The `idx`-th subset of `mask`: bit `i` of `idx` selects the `i`-th member.
fn deposit(mut idx: u64, mut mask: u64) -> u64 {
    let mut out = 0;
    while mask != 0 {
        let low = mask & mask.wrapping_neg();
        if idx & 1 == 1 {
            out |= low;
        }
        idx >>= 1;
        mask ^= low;
    }
    out
}

fn limit(what: &'static str, size: usize, max: usize) -> Result<()> {
    if size > max {
        Err(Error::EnumerationLimit { what, size, limit: max })
    } else {
        Ok(())
    }
}

/// A directed graph on `[n]`; loops allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    out: Vec<u64>,
    inn: Vec<u64>,
}

impl DiGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        limit("graph vertices", n, MAX_VERTICES)?;
        let mut out = vec![0u64; n];
        let mut inn = vec![0u64; n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) outside [{n}]")));
            }
            out[u] |= 1 << v;
            inn[v] |= 1 << u;
        }
        Ok(DiGraph { n, out, inn })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, &[])
    }

    /// Every ordered pair, loops included.
    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|u| (0..n).map(move |v| (u, v))).collect();
        Self::new(n, &edges)
    }

    /// Each ordered pair, loops included, independently with probability `p`.
    pub fn random<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        Self::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> VertexSet {
        full_set(self.n)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out[u] >> v & 1 == 1
    }

    pub fn out_set(&self, u: usize) -> VertexSet {
        self.out[u]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|u| members(self.out[u]).into_iter().map(move |v| (u, v)))
            .collect()
    }

    pub fn edge_count(&self) -> u64 {
        self.out.iter().map(|m| m.count_ones() as u64).sum()
    }

    /// `e(S, T)`.
    pub fn e(&self, s: VertexSet, t: VertexSet) -> i64 {
        members(s).into_iter().map(|u| pc(self.out[u] & t)).sum()
    }

    pub fn to_json(&self) -> Value {
        json!({ "n": self.n, "edges": self.edges().iter().map(|&(u, v)| json!([u, v])).collect::<Vec<_>>() })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let n = v
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse("graph needs an integer \"n\"".into()))? as usize;
        let edges = v
            .get("edges")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("graph needs an \"edges\" array".into()))?
            .iter()
            .map(|e| {
                let pair = e.as_array().filter(|a| a.len() == 2);
                match pair.map(|a| (a[0].as_u64(), a[1].as_u64())) {
                    Some((Some(u), Some(v))) => Ok((u as usize, v as usize)),
                    _ => Err(Error::Parse(format!("bad edge {e}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, &edges)
    }

    /// JSON `{n, edges}` or whitespace-separated `u v` lines. In the text form
    /// an optional first line `n <count>` fixes the vertex count, otherwise it
    /// is one more than the largest endpoint; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let v: Value = serde_json::from_str(trimmed).map_err(|e| Error::Parse(e.to_string()))?;
            return Self::from_json(&v);
        }
        let mut n = None;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad vertex {s:?}", lineno + 1)))
            };
            match toks.as_slice() {
                ["n", c] if edges.is_empty() && n.is_none() => n = Some(num(c)?),
                [u, v] => edges.push((num(u)?, num(v)?)),
                _ => return Err(Error::Parse(format!("line {}: expected two vertices", lineno + 1))),
            }
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
        Self::new(n, &edges)
    }
}

/// Disjoint nonempty parts covering `[n]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexPartition {
    n: usize,
    parts: Vec<VertexSet>,
}

impl VertexPartition {
    pub fn new(n: usize, parts: Vec<Vec<usize>>) -> Result<Self> {
        Self::from_masks(
            n,
            parts
                .iter()
                .map(|p| {
                    if p.iter().any(|&v| v >= n) {
                        Err(Error::invalid("partition vertex out of range"))
                    } else {
                        Ok(set_of(p))
                    }
                })
                .collect::<Result<_>>()?,
        )
    }

    pub fn from_masks(n: usize, mut parts: Vec<VertexSet>) -> Result<Self> {
        limit("graph vertices", n, MAX_VERTICES)?;
        let mut seen = 0u64;
        for &p in &parts {
            if p == 0 {
                return Err(Error::invalid("partition parts must be nonempty"));
            }
            if p & seen != 0 {
                return Err(Error::invalid("partition parts must be disjoint"));
            }
            seen |= p;
        }
        if seen != full_set(n) {
            return Err(Error::invalid("partition parts must cover every vertex"));
        }
        parts.sort_by_key(|p| p.trailing_zeros());
        Ok(VertexPartition { n, parts })
    }

    pub fn trivial(n: usize) -> Self {
        VertexPartition {
            n,
            parts: if n == 0 { vec![] } else { vec![full_set(n)] },
        }
    }

    pub fn singletons(n: usize) -> Self {
        VertexPartition {
            n,
            parts: (0..n).map(|v| 1u64 << v).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn masks(&self) -> &[VertexSet] {
        &self.parts
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        self.parts.iter().map(|&p| members(p)).collect()
    }

    pub fn part_of(&self) -> Vec<usize> {
        let mut of = vec![0; self.n];
        for (j, &p) in self.parts.iter().enumerate() {
            for v in members(p) {
                of[v] = j;
            }
        }
        of
    }

    /// Common refinement with the sets in `by`; empty cells are dropped.
    pub fn refine(&self, by: &[VertexSet]) -> Self {
        let mut parts = self.parts.clone();
        for &s in by {
            parts = parts
                .into_iter()
                .flat_map(|p| [p & s, p & !s])
                .filter(|&p| p != 0)
                .collect();
        }
        parts.sort_by_key(|p| p.trailing_zeros());
        VertexPartition { n: self.n, parts }
    }

    pub fn to_json(&self) -> Value {
        json!(self.to_lists())
    }

    fn check(&self, g: &DiGraph) -> Result<()> {
        if self.n != g.n {
            return Err(Error::invalid(format!(
                "partition over {} vertices, graph has {}",
                self.n, g.n
            )));
        }
        Ok(())
    }
}

/// Edge count and density between two vertex sets.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeStats {
    pub count: u64,
    pub density: Rational,
}

pub fn edge_stats(g: &DiGraph, s: VertexSet, t: VertexSet) -> Result<EdgeStats> {
    let count = g.e(s, t) as u64;
    if s == 0 || t == 0 {
        return Err(Error::DensityUndefined { count });
    }
    Ok(EdgeStats {
        count,
        density: ratio(count as i128, pc(s) as i128 * pc(t) as i128),
    })
}

/// `irreg(X, Y)`, enumerating subsets of the smaller side and splitting the
/// other side by the sign of its residual.
pub fn irregularity(g: &DiGraph, x: VertexSet, y: VertexSet) -> Result<Rational> {
    if x == 0 || y == 0 {
        return Err(Error::DensityUndefined { count: g.e(x, y) as u64 });
    }
    let (nx, ny) = (pc(x) as i128, pc(y) as i128);
    let total = g.e(x, y) as i128;
    let scale = nx * ny;
    // Enumerate the smaller side; rows of the other side are scored against it.
    let (small, big, adj) = if ny <= nx { (y, x, &g.out) } else { (x, y, &g.inn) };
    limit("irregularity smaller side", pc(small) as usize, PAIR_SIDE_LIMIT)?;
    let rows = members(big);
    let k = pc(small) as u32;
    let best = (0..1u64 << k)
        .into_par_iter()
        .map(|idx| {
            let t = deposit(idx, small);
            let nt = pc(t) as i128;
            let (mut pos, mut neg) = (0i128, 0i128);
            for &u in &rows {
                let r = pc(adj[u] & t) as i128 * scale - total * nt;
                if r > 0 {
                    pos += r;
                } else {
                    neg -= r;
                }
            }
            pos.max(neg)
        })
        .max()
        .unwrap_or(0);
    Ok(ratio(best, scale))
}

/// `irreg(X, Y)` by enumerating every `(S, T)`.
pub fn irregularity_naive(g: &DiGraph, x: VertexSet, y: VertexSet) -> Result<Rational> {
    if x == 0 || y == 0 {
        return Err(Error::DensityUndefined { count: g.e(x, y) as u64 });
    }
    limit("naive irregularity side", pc(x).max(pc(y)) as usize, 10)?;
    let (nx, ny) = (pc(x) as i128, pc(y) as i128);
    let total = g.e(x, y) as i128;
    let mut best = 0i128;
    for i in 0..1u64 << nx {
        let s = deposit(i, x);
        for k in 0..1u64 << ny {
            let t = deposit(k, y);
            let v = (g.e(s, t) as i128 * nx * ny - total * pc(s) as i128 * pc(t) as i128).abs();
            best = best.max(v);
        }
    }
    Ok(ratio(best, nx * ny))
}

/// `irreg_{S,T}(X, Y)`; zero when `X` or `Y` is empty.
pub fn st_irregularity(g: &DiGraph, x: VertexSet, y: VertexSet, s: VertexSet, t: VertexSet) -> Rational {
    if x == 0 || y == 0 {
        return Rational::zero();
    }
    let (nx, ny) = (pc(x) as i128, pc(y) as i128);
    let (a, b) = (s & x, t & y);
    let v = g.e(a, b) as i128 * nx * ny - g.e(x, y) as i128 * pc(a) as i128 * pc(b) as i128;
    ratio(v.abs(), nx * ny)
}

/// `irreg(𝒫)`.
pub fn partition_irregularity(g: &DiGraph, p: &VertexPartition) -> Result<Rational> {
    p.check(g)?;
    let mut sum = Rational::zero();
    for &a in p.masks() {
        for &b in p.masks() {
            sum += irregularity(g, a, b)?;
        }
    }
    Ok(sum)
}

/// `irreg_{S,T}(𝒫)`.
pub fn partition_st_irregularity(g: &DiGraph, p: &VertexPartition, s: VertexSet, t: VertexSet) -> Result<Rational> {
    p.check(g)?;
    Ok(p.masks()
        .iter()
        .flat_map(|&a| p.masks().iter().map(move |&b| (a, b)))
        .map(|(a, b)| st_irregularity(g, a, b, s, t))
        .sum())
}

/// Outcome of [`check_regular_pair`].
#[derive(Clone, Debug, PartialEq)]
pub struct PairCheck {
    pub regular: bool,
    /// A violating `(S, T)` when not regular.
    pub witness: Option<(VertexSet, VertexSet)>,
}

/// Exact `ε`-regularity of `(X, Y)`.
///
/// For fixed `T` and `|S| = s`, the density gap is extreme at the `s` rows
/// with the most or the fewest edges into `T`, so only one side is enumerated.
pub fn check_regular_pair(g: &DiGraph, x: VertexSet, y: VertexSet, eps: &Eps) -> Result<PairCheck> {
    if x == 0 || y == 0 {
        return Err(Error::DensityUndefined { count: g.e(x, y) as u64 });
    }
    let swap = pc(x) < pc(y);
    let (rows_set, cols_set, adj) = if swap { (y, x, &g.inn) } else { (x, y, &g.out) };
    limit("regular-pair smaller side", pc(cols_set) as usize, PAIR_SIDE_LIMIT)?;
    let (nr, nc) = (pc(rows_set) as i128, pc(cols_set) as i128);
    let total = g.e(x, y) as i128;
    let rows = members(rows_set);
    let k = nc as u32;
    let found = (1..1u64 << k).into_par_iter().find_map_first(|idx| {
        let t = deposit(idx, cols_set);
        let nt = pc(t) as i128;
        if eps.cmp_scaled_int(nt, nc) == std::cmp::Ordering::Less {
            return None;
        }
        let mut deg: Vec<(i128, usize)> = rows.iter().map(|&u| (pc(adj[u] & t) as i128, u)).collect();
        deg.sort();
        let mut low = 0i128;
        let mut high = 0i128;
        for s in 1..=rows.len() {
            low += deg[s - 1].0;
            high += deg[rows.len() - s].0;
            let si = s as i128;
            if eps.cmp_scaled_int(si, nr) == std::cmp::Ordering::Less {
                continue;
            }
            let scale = si * nt * nr * nc;
            for (e, pick_high) in [(high, true), (low, false)] {
                let gap = (e * nr * nc - total * si * nt).abs();
                if !eps.admits_scaled_int(gap, scale) {
                    let chosen: Vec<usize> = if pick_high {
                        deg[rows.len() - s..].iter().map(|d| d.1).collect()
                    } else {
                        deg[..s].iter().map(|d| d.1).collect()
                    };
                    let sset = set_of(&chosen);
                    return Some(if swap { (t, sset) } else { (sset, t) });
                }
            }
        }
        None
    });
    Ok(PairCheck {
        regular: found.is_none(),
        witness: found,
    })
}

/// Outcome of a partition-level regularity check.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub pass: bool,
    /// The checked quantity divided by `|V|²`.
    pub value: Rational,
    /// `value − ε`; positive on failure.
    pub slack: f64,
    pub witness: Value,
}

impl RegularityReport {
    fn new(pass: bool, value: Rational, eps: &Eps, witness: Value) -> Self {
        let slack = value.to_f64() - eps.to_f64();
        RegularityReport {
            pass,
            value,
            slack,
            witness,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "pass": self.pass,
            "value": self.value.to_decimal(),
            "slack": self.slack,
            "witness": self.witness,
        })
    }
}

fn n2(g: &DiGraph) -> i128 {
    (g.n as i128) * (g.n as i128)
}

/// Szemerédi `ε`-regularity: irregular pairs cover at most `ε|V|²`.
pub fn check_szemeredi(g: &DiGraph, p: &VertexPartition, eps: &Eps) -> Result<RegularityReport> {
    p.check(g)?;
    let mut mass = 0i128;
    let mut bad = Vec::new();
    for (j, &a) in p.masks().iter().enumerate() {
        for (k, &b) in p.masks().iter().enumerate() {
            let c = check_regular_pair(g, a, b, eps)?;
            if let Some((s, t)) = c.witness {
                mass += pc(a) as i128 * pc(b) as i128;
                bad.push(json!({ "pair": [j, k], "s": members(s), "t": members(t) }));
            }
        }
    }
    let pass = eps.admits_scaled_int(mass, n2(g));
    Ok(RegularityReport::new(pass, ratio(mass, n2(g)), eps, json!(bad)))
}

/// The irregularity form of Szemerédi regularity: `irreg(𝒫) ≤ ε|V|²`.
pub fn check_szemeredi_irregularity(g: &DiGraph, p: &VertexPartition, eps: &Eps) -> Result<RegularityReport> {
    let total = partition_irregularity(g, p)?;
    let value = total / ratio(n2(g), 1);
    let pass = eps.admits(&value);
    Ok(RegularityReport::new(pass, value, eps, Value::Null))
}

/// Per-partition block counts and a common scale `Q` making every
/// `Q·d(V_j, V_k)` an integer.
struct Blocks {
    parts: Vec<VertexSet>,
    of: Vec<usize>,
    size: Vec<i128>,
    e: Vec<Vec<i128>>,
    q: i128,
    /// `Q·d(V_j, V_k)`.
    w: Vec<Vec<i128>>,
}

impl Blocks {
    fn new(g: &DiGraph, p: &VertexPartition) -> Self {
        let parts = p.masks().to_vec();
        let size: Vec<i128> = parts.iter().map(|&x| pc(x) as i128).collect();
        let e: Vec<Vec<i128>> = parts
            .iter()
            .map(|&a| parts.iter().map(|&b| g.e(a, b) as i128).collect())
            .collect();
        let l = size.iter().fold(1i128, |acc, &s| acc.lcm(&s));
        let q = l * l;
        let w = (0..parts.len())
            .map(|j| (0..parts.len()).map(|k| e[j][k] * q / (size[j] * size[k])).collect())
            .collect();
        Blocks {
            parts,
            of: p.part_of(),
            size,
            e,
            q,
            w,
        }
    }

    fn m(&self) -> usize {
        self.parts.len()
    }
}

/// Maximizes `Σ_j score_j(S ∩ V_j, T)` over all `S, T ⊆ V`.
///
/// The objective separates over parts once `T` is fixed, so each `S ∩ V_j`
/// is optimized alone. `score(j, |S_j|, e(S_j, T ∩ V_k) for each k, |T ∩ V_k|
/// for each k)` must vanish when `S_j` is empty.
fn scan_partition<F>(g: &DiGraph, b: &Blocks, score: F) -> (i128, VertexSet, VertexSet)
where
    F: Fn(usize, i128, &[i128], &[i128]) -> i128 + Sync,
{
    let m = b.m();
    (0..1u64 << g.n)
        .into_par_iter()
        .map(|t| {
            let tk: Vec<i128> = b.parts.iter().map(|&p| pc(p & t) as i128).collect();
            let mut total = 0i128;
            let mut smask = 0u64;
            for j in 0..m {
                let verts = members(b.parts[j]);
                let deg: Vec<Vec<i128>> = verts
                    .iter()
                    .map(|&u| b.parts.iter().map(|&p| pc(g.out[u] & p & t) as i128).collect())
                    .collect();
                let count = 1usize << verts.len();
                let mut rows = vec![0i128; count * m];
                let (mut best, mut arg) = (0i128, 0usize);
                for sub in 1..count {
                    let low = sub.trailing_zeros() as usize;
                    let prev = sub & (sub - 1);
                    for k in 0..m {
                        rows[sub * m + k] = rows[prev * m + k] + deg[low][k];
                    }
                    let sc = score(j, sub.count_ones() as i128, &rows[sub * m..sub * m + m], &tk);
                    if sc > best {
                        best = sc;
                        arg = sub;
                    }
                }
                total += best;
                smask |= deposit(arg as u64, b.parts[j]);
            }
            (total, smask, t)
        })
        .reduce(
            || (-1, 0, 0),
            |a, c| {
                if c.0 > a.0 || (c.0 == a.0 && c.2 < a.2) {
                    c
                } else {
                    a
                }
            },
        )
}

/// `max_{S,T} irreg_{S,T}(𝒫)` with a maximizing `(S, T)`, exactly.
pub fn max_st_irregularity(g: &DiGraph, p: &VertexPartition) -> Result<(Rational, VertexSet, VertexSet)> {
    p.check(g)?;
    limit("vertices for (S, T) search", g.n, ST_LIMIT)?;
    if g.n == 0 {
        return Ok((Rational::zero(), 0, 0));
    }
    let b = Blocks::new(g, p);
    let (best, s, t) = scan_partition(g, &b, |j, s, e, tk| {
        (0..b.m()).map(|k| (e[k] * b.q - b.w[j][k] * s * tk[k]).abs()).sum()
    });
    Ok((ratio(best, b.q), s, t))
}

/// Intermediate `ε`-regularity: for every `(S, T)`, pairs that are not
/// `(S, T, ε)`-regular carry at most `ε|V|²` of `|S ∩ V_j||T ∩ V_k|`.
pub fn check_intermediate(g: &DiGraph, p: &VertexPartition, eps: &Eps) -> Result<RegularityReport> {
    p.check(g)?;
    limit("vertices for intermediate check", g.n, ST_LIMIT)?;
    if g.n == 0 {
        return Ok(RegularityReport::new(true, Rational::zero(), eps, Value::Null));
    }
    let b = Blocks::new(g, p);
    if b.m() == 1 {
        let (mass, s, t) = single_part_intermediate(g, b.e[0][0], eps);
        return Ok(RegularityReport::new(
            eps.admits_scaled_int(mass, n2(g)),
            ratio(mass, n2(g)),
            eps,
            json!({ "s": members(s), "t": members(t) }),
        ));
    }
    let (mass, s, t) = scan_partition(g, &b, |j, s, e, tk| {
        let mut sum = 0i128;
        for k in 0..b.m() {
            if tk[k] == 0 {
                continue;
            }
            let sj = b.size[j] * b.size[k];
            let gap = (e[k] * sj - b.e[j][k] * s * tk[k]).abs();
            if eps.cmp_scaled_int(gap, s * tk[k] * sj) == std::cmp::Ordering::Greater {
                sum += s * tk[k];
            }
        }
        sum
    });
    let pass = eps.admits_scaled_int(mass, n2(g));
    Ok(RegularityReport::new(
        pass,
        ratio(mass, n2(g)),
        eps,
        json!({ "s": members(s), "t": members(t) }),
    ))
}

/// The one-part case of [`check_intermediate`]. For fixed `T` and `|S|`,
/// `|e(S, T)| V|² − e(V, V)|S||T||` is largest at the `|S|` vertices of
/// highest or of lowest degree into `T`, so sorting degrees replaces the
/// subset scan.
fn single_part_intermediate(g: &DiGraph, total: i128, eps: &Eps) -> (i128, VertexSet, VertexSet) {
    let nn = n2(g);
    let mut best = (-1i128, 0u64, 0u64);
    for t in 0..1u64 << g.n {
        let nt = pc(t) as i128;
        let mut order: Vec<(i128, usize)> = (0..g.n).map(|u| (pc(g.out[u] & t) as i128, u)).collect();
        order.sort();
        let (mut low, mut high) = (0i128, 0i128);
        let (mut low_set, mut high_set) = (0u64, 0u64);
        let mut found = (0i128, 0u64);
        for s in 1..=g.n {
            let (dl, ul) = order[s - 1];
            let (dh, uh) = order[g.n - s];
            low += dl;
            low_set |= 1 << ul;
            high += dh;
            high_set |= 1 << uh;
            let si = s as i128;
            let bound = si * nt * nn;
            let expected = total * si * nt;
            for (e, set) in [(high, high_set), (low, low_set)] {
                let gap = (e * nn - expected).abs();
                if eps.cmp_scaled_int(gap, bound) == std::cmp::Ordering::Greater {
                    found = (si * nt, set);
                    break;
                }
            }
        }
        if found.0 > best.0 {
            best = (found.0, found.1, t);
        }
    }
    best
}

/// [`check_intermediate`] restricted to `samples` random `(S, T)` pairs.
/// Not exhaustive: a pass only means no sampled pair violated.
pub fn spot_check_intermediate<R: Rng + ?Sized>(
    g: &DiGraph,
    p: &VertexPartition,
    eps: &Eps,
    samples: usize,
    rng: &mut R,
) -> Result<RegularityReport> {
    p.check(g)?;
    let b = Blocks::new(g, p);
    let all = g.vertices();
    let mut worst = (-1i128, 0u64, 0u64);
    for _ in 0..samples {
        let s = rng.gen::<u64>() & all;
        let t = rng.gen::<u64>() & all;
        let mut mass = 0i128;
        for j in 0..b.m() {
            for k in 0..b.m() {
                let (a, c) = (pc(s & b.parts[j]) as i128, pc(t & b.parts[k]) as i128);
                if a == 0 || c == 0 {
                    continue;
                }
                let sj = b.size[j] * b.size[k];
                let gap = (g.e(s & b.parts[j], t & b.parts[k]) as i128 * sj - b.e[j][k] * a * c).abs();
                if eps.cmp_scaled_int(gap, a * c * sj) == std::cmp::Ordering::Greater {
                    mass += a * c;
                }
            }
        }
        if mass > worst.0 {
            worst = (mass, s, t);
        }
    }
    let mass = worst.0.max(0);
    Ok(RegularityReport::new(
        eps.admits_scaled_int(mass, n2(g)),
        ratio(mass, n2(g)),
        eps,
        json!({ "s": members(worst.1), "t": members(worst.2), "exhaustive": false, "samples": samples }),
    ))
}

/// Frieze–Kannan `ε`-regularity:
/// `|e(S, T) − Σ d(V_j, V_k)|S ∩ V_j||T ∩ V_k|| ≤ ε|V|²` for all `S, T`.
pub fn check_frieze_kannan(g: &DiGraph, p: &VertexPartition, eps: &Eps) -> Result<RegularityReport> {
    let (value, s, t) = frieze_kannan_defect(g, p)?;
    let pass = eps.admits(&value);
    Ok(RegularityReport::new(pass, value, eps, json!({ "s": members(s), "t": members(t) })))
}

/// `max_{S,T} |e(S, T) − Σ d(V_j, V_k)|S ∩ V_j||T ∩ V_k|| / |V|²` and a
/// maximizer.
pub fn frieze_kannan_defect(g: &DiGraph, p: &VertexPartition) -> Result<(Rational, VertexSet, VertexSet)> {
    p.check(g)?;
    limit("vertices for Frieze-Kannan check", g.n, FK_LIMIT)?;
    if g.n == 0 {
        return Ok((Rational::zero(), 0, 0));
    }
    let b = Blocks::new(g, p);
    let (best, s, t) = (0..1u64 << g.n)
        .into_par_iter()
        .map(|t| {
            let base: Vec<i128> = (0..b.m())
                .map(|j| (0..b.m()).map(|k| b.w[j][k] * pc(t & b.parts[k]) as i128).sum())
                .collect();
            let (mut pos, mut neg, mut spos, mut sneg) = (0i128, 0i128, 0u64, 0u64);
            for u in 0..g.n {
                let r = pc(g.out[u] & t) as i128 * b.q - base[b.of[u]];
                if r > 0 {
                    pos += r;
                    spos |= 1 << u;
                } else if r < 0 {
                    neg -= r;
                    sneg |= 1 << u;
                }
            }
            if pos >= neg {
                (pos, spos, t)
            } else {
                (neg, sneg, t)
            }
        })
        .reduce(
            || (-1, 0, 0),
            |a, c| {
                if c.0 > a.0 || (c.0 == a.0 && c.2 < a.2) {
                    c
                } else {
                    a
                }
            },
        );
    Ok((ratio(best, b.q * n2(g)), s, t))
}

/// Both directions of the equivalence between intermediate regularity and
/// bounded `(S, T)`-irregularity, checked on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub intermediate: bool,
    /// `max_{S,T} irreg_{S,T}(𝒫) / |V|²`.
    pub max_st_irregularity: Rational,
    /// Intermediate at `ε` implies the maximum is at most `2ε`.
    pub forward_holds: bool,
    pub converse_premise: bool,
    /// Intermediate regularity at `√ε`.
    pub intermediate_at_sqrt: bool,
    /// A maximum of at most `ε` implies intermediate regularity at `√ε`.
    pub converse_holds: bool,
}

pub fn equivalence_bounds(g: &DiGraph, p: &VertexPartition, eps: &Eps) -> Result<EquivalenceReport> {
    let inter = check_intermediate(g, p, eps)?.pass;
    let (max, _, _) = max_st_irregularity(g, p)?;
    let value = max / ratio(n2(g).max(1), 1);
    let two = eps.scaled(&Rational::integer(2));
    let forward_holds = !inter || two.admits(&value);
    let converse_premise = eps.admits(&value);
    let at_sqrt = check_intermediate(g, p, &eps.sqrt_of())?.pass;
    Ok(EquivalenceReport {
        intermediate: inter,
        max_st_irregularity: value,
        forward_holds,
        converse_premise,
        intermediate_at_sqrt: at_sqrt,
        converse_holds: !converse_premise || at_sqrt,
    })
}

/// A cut `S × T` and `|Σ_{S×T} M|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut<T> {
    pub s: VertexSet,
    pub t: VertexSet,
    pub value: T,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CutMode {
    /// Every `T`, with the best `S` for each sign.
    Exact,
    /// Alternating best responses from `T = V` and `restarts` random starts;
    /// ends at a local optimum.
    Alternating { restarts: usize, seed: u64 },
}

fn check_table<T: Scalar>(m: &[Vec<T>]) -> Result<usize> {
    let n = m.len();
    if m.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("cut table must be square"));
    }
    limit("cut table size", n, MAX_VERTICES)?;
    Ok(n)
}

/// Approximately maximizes `|Σ_{(u,w) ∈ S×T} M(u, w)|`.
pub fn cut_oracle<T: Scalar>(m: &[Vec<T>], mode: &CutMode) -> Result<Cut<T>> {
    let n = check_table(m)?;
    match mode {
        CutMode::Exact => {
            limit("vertices for exact cut", n, FK_LIMIT)?;
            let mut col = vec![T::zero(); n];
            let mut t = 0u64;
            let mut best = Cut {
                s: 0,
                t: 0,
                value: T::zero(),
            };
            for i in 0u64..1u64 << n {
                if i > 0 {
                    let w = i.trailing_zeros() as usize;
                    t ^= 1 << w;
                    let adding = t >> w & 1 == 1;
                    for (u, c) in col.iter_mut().enumerate() {
                        if adding {
                            *c += &m[u][w];
                        } else {
                            *c -= &m[u][w];
                        }
                    }
                }
                let (mut pos, mut neg, mut sp, mut sn) = (T::zero(), T::zero(), 0u64, 0u64);
                for (u, c) in col.iter().enumerate() {
                    if *c > T::zero() {
                        pos += c;
                        sp |= 1 << u;
                    } else if *c < T::zero() {
                        neg -= c;
                        sn |= 1 << u;
                    }
                }
                if pos > best.value {
                    best = Cut { s: sp, t, value: pos };
                }
                if neg > best.value {
                    best = Cut { s: sn, t, value: neg };
                }
            }
            Ok(best)
        }
        CutMode::Alternating { restarts, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let all = full_set(n);
            let mut best = Cut {
                s: 0,
                t: 0,
                value: T::zero(),
            };
            for r in 0..=*restarts {
                let start = if r == 0 { all } else { rng.gen::<u64>() & all };
                for sign in [T::one(), -T::one()] {
                    let c = alternate(m, start, &sign);
                    if c.value > best.value {
                        best = c;
                    }
                }
            }
            Ok(best)
        }
    }
}

fn alternate<T: Scalar>(m: &[Vec<T>], start: VertexSet, sign: &T) -> Cut<T> {
    let n = m.len();
    let mut t = start;
    let mut s;
    let mut current = T::zero();
    loop {
        // Best S for this T under the sign, then best T for that S.
        let rows: Vec<T> = (0..n)
            .map(|u| members(t).into_iter().map(|w| m[u][w].clone() * sign.clone()).sum())
            .collect();
        s = (0..n).filter(|&u| rows[u] > T::zero()).fold(0u64, |acc, u| acc | 1 << u);
        let cols: Vec<T> = (0..n)
            .map(|w| members(s).into_iter().map(|u| m[u][w].clone() * sign.clone()).sum())
            .collect();
        let nt = (0..n).filter(|&w| cols[w] > T::zero()).fold(0u64, |acc, w| acc | 1 << w);
        let value: T = members(nt).into_iter().map(|w| cols[w].clone()).sum();
        if value > current {
            current = value;
            t = nt;
        } else {
            break;
        }
    }
    Cut { s, t, value: current }
}

/// `σ_{jk}(1_E − d(V_j, V_k))` on `V_j × V_k`.
pub fn signed_residual(g: &DiGraph, p: &VertexPartition, sigma: &[Vec<i8>]) -> Result<Vec<Vec<Rational>>> {
    p.check(g)?;
    let b = Blocks::new(g, p);
    Ok((0..g.n)
        .map(|u| {
            (0..g.n)
                .map(|w| {
                    let (j, k) = (b.of[u], b.of[w]);
                    let r = ratio(g.has_edge(u, w) as i128 * b.q - b.w[j][k], b.q);
                    if sigma[j][k] < 0 {
                        -r
                    } else {
                        r
                    }
                })
                .collect()
        })
        .collect())
}

/// The refinement loop's search over every sign pattern `σ ∈ {±1}^{m×m}`,
/// with [`cut_oracle`] on each signed residual table. Returns the best
/// `irreg_{S,T}(𝒫)` found, unscaled.
pub fn sigma_search(g: &DiGraph, p: &VertexPartition, mode: &CutMode) -> Result<(Rational, VertexSet, VertexSet)> {
    let m = p.len();
    limit("parts for sign-pattern search", m, SIGMA_PART_LIMIT)?;
    let mut best = (Rational::zero(), 0, 0);
    for bits in 0u64..1u64 << (m * m) {
        let sigma: Vec<Vec<i8>> = (0..m)
            .map(|j| (0..m).map(|k| if bits >> (j * m + k) & 1 == 1 { -1 } else { 1 }).collect())
            .collect();
        let cut = cut_oracle(&signed_residual(g, p, &sigma)?, mode)?;
        let v = partition_st_irregularity(g, p, cut.s, cut.t)?;
        if v > best.0 {
            best = (v, cut.s, cut.t);
        }
    }
    Ok(best)
}

/// Mean-square block density `Σ_{j,k} (|V_j||V_k|/|V|²)·d(V_j, V_k)²`.
pub fn energy(g: &DiGraph, p: &VertexPartition) -> Result<Rational> {
    p.check(g)?;
    let b = Blocks::new(g, p);
    let mut sum = Rational::zero();
    for j in 0..b.m() {
        for k in 0..b.m() {
            sum += ratio(b.e[j][k] * b.e[j][k], b.size[j] * b.size[k]);
        }
    }
    Ok(sum / ratio(n2(g).max(1), 1))
}

/// How [`refine_intermediate`] looks for a violating `(S, T)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RefineMode {
    /// Exact maximization of `irreg_{S,T}(𝒫)`; `n ≤ 14`.
    Direct,
    /// The literal loop over sign patterns; needs every intermediate
    /// partition to have at most three parts.
    Sigma(CutMode),
    /// Local search from the block-residual sign pattern of a start cut.
    Alternating { restarts: usize, seed: u64 },
}

/// One refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineStep {
    /// `"search"` when `irreg_{S,T}(𝒫) > ½ε|V|²`, `"check"` when the exact
    /// intermediate check failed.
    pub trigger: &'static str,
    pub s: VertexSet,
    pub t: VertexSet,
    /// `irreg_{S,T}(𝒫)/|V|²` for search steps, irregular mass over `|V|²`
    /// for check steps.
    pub value: Rational,
    pub parts_before: usize,
    pub parts_after: usize,
    pub energy_before: Rational,
    pub energy_after: Rational,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RefineTranscript {
    pub steps: Vec<RefineStep>,
    /// Whether the final partition was verified by the exact check.
    pub verified: bool,
}

impl RefineTranscript {
    pub fn to_json(&self) -> Value {
        json!({
            "verified": self.verified,
            "steps": self.steps.iter().map(|s| json!({
                "trigger": s.trigger,
                "s": members(s.s),
                "t": members(s.t),
                "value": s.value.to_decimal(),
                "parts_before": s.parts_before,
                "parts_after": s.parts_after,
                "energy_before": s.energy_before.to_decimal(),
                "energy_after": s.energy_after.to_decimal(),
            })).collect::<Vec<_>>(),
        })
    }
}

fn alternating_st(g: &DiGraph, p: &VertexPartition, restarts: usize, seed: u64) -> Result<(Rational, VertexSet, VertexSet)> {
    let m = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = g.vertices();
    let mut best = (Rational::zero(), 0, 0);
    for r in 0..=restarts {
        let (mut s, mut t) = if r == 0 { (all, all) } else { (rng.gen::<u64>() & all, rng.gen::<u64>() & all) };
        let mut current = partition_st_irregularity(g, p, s, t)?;
        loop {
            let b = Blocks::new(g, p);
            let sigma: Vec<Vec<i8>> = (0..m)
                .map(|j| {
                    (0..m)
                        .map(|k| {
                            let (a, c) = (s & b.parts[j], t & b.parts[k]);
                            let r = g.e(a, c) as i128 * b.q - b.w[j][k] * pc(a) as i128 * pc(c) as i128;
                            if r < 0 {
                                -1
                            } else {
                                1
                            }
                        })
                        .collect()
                })
                .collect();
            let table = signed_residual(g, p, &sigma)?;
            let cut = alternate(&table, t, &Rational::one());
            let v = partition_st_irregularity(g, p, cut.s, cut.t)?;
            if v > current {
                current = v;
                s = cut.s;
                t = cut.t;
            } else {
                break;
            }
        }
        if current > best.0 {
            best = (current, s, t);
        }
    }
    Ok(best)
}

/// Refines the trivial partition until no violation is found.
///
/// A step fires when the search finds `irreg_{S,T}(𝒫) > ½ε|V|²`, or, for
/// `n ≤ 14`, when the exact intermediate check fails; either way `𝒫` is
/// replaced by its common refinement with `S` and `T`. Each step must raise
/// [`energy`] by at least `ε²/4` (search) or `ε³` (check); this is asserted.
pub fn refine_intermediate(g: &DiGraph, eps: &Eps, mode: &RefineMode) -> Result<(VertexPartition, RefineTranscript)> {
    let mut p = VertexPartition::trivial(g.n);
    let mut tr = RefineTranscript::default();
    if g.n == 0 {
        tr.verified = true;
        return Ok((p, tr));
    }
    let nn = ratio(n2(g), 1);
    let half = eps.scaled(&Rational::new(1, 2));
    loop {
        let (irr, s, t) = match mode {
            RefineMode::Direct => max_st_irregularity(g, &p)?,
            RefineMode::Sigma(cut) => sigma_search(g, &p, cut)?,
            RefineMode::Alternating { restarts, seed } => alternating_st(g, &p, *restarts, *seed)?,
        };
        let value = irr / nn.clone();
        let mut step = None;
        if !half.admits(&value) {
            step = Some(("search", s, t, value));
        } else if g.n <= ST_LIMIT {
            let check = check_intermediate(g, &p, eps)?;
            if !check.pass {
                let s = set_of(&json_members(&check.witness["s"]));
                let t = set_of(&json_members(&check.witness["t"]));
                step = Some(("check", s, t, check.value));
            } else {
                tr.verified = true;
            }
        }
        let Some((trigger, s, t, value)) = step else {
            break;
        };
        let before = energy(g, &p)?;
        let next = p.refine(&[s, t]);
        let after = energy(g, &next)?;
        let gain = after.clone() - before.clone();
        let ok = match trigger {
            "search" => eps.pow_le(2, &(gain.clone() * Rational::integer(4))),
            _ => eps.pow_le(3, &gain),
        };
        if !ok || next.len() == p.len() {
            return Err(Error::InternalInvariant(format!(
                "refinement step gained only {gain} energy"
            )));
        }
        tr.steps.push(RefineStep {
            trigger,
            s,
            t,
            value,
            parts_before: p.len(),
            parts_after: next.len(),
            energy_before: before,
            energy_after: after,
        });
        p = next;
    }
    Ok((p, tr))
}

fn json_members(v: &Value) -> Vec<usize> {
    v.as_array()
        .map(|a| a.iter().filter_map(|x| x.as_u64().map(|x| x as usize)).collect())
        .unwrap_or_default()
}

/// Population over vertex pairs: individual `(u, v)` has index `u·n + v`,
/// id `"u,v"`, weight `1/n²` and outcome `1[(u, v) ∈ E]`.
pub fn graph_to_instance(g: &DiGraph) -> Result<(PopulationInstance<Rational>, RectangleClass)> {
    let n = g.n;
    if n == 0 {
        return Err(Error::invalid("graph has no vertices"));
    }
    let w = Rational::new(1, (n * n) as i64);
    let mut ids = Vec::with_capacity(n * n);
    let mut truth = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in 0..n {
            ids.push(format!("{u},{v}"));
            truth.push(OutcomeDist::point_mass(2, g.has_edge(u, v) as usize));
        }
    }
    let pop = PopulationInstance::new(ids, vec![w; n * n], truth, OutcomeSpace::binary())?;
    Ok((pop, RectangleClass { n }))
}

/// `{1_{S×T} : S, T ⊆ V}`, kept implicit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RectangleClass {
    pub n: usize,
}

impl RectangleClass {
    /// All `4ⁿ` rectangles as explicit hypotheses, named `"S×T"` with the
    /// sets written as bit masks.
    pub fn materialize(&self) -> Result<HypothesisClass> {
        limit("vertices for explicit rectangle class", self.n, RECTANGLE_CLASS_LIMIT)?;
        let n = self.n;
        let mut hyps = Vec::with_capacity(1 << (2 * n));
        for s in 0u64..1 << n {
            for t in 0u64..1 << n {
                let members: Vec<bool> = (0..n * n).map(|h| s >> (h / n) & 1 == 1 && t >> (h % n) & 1 == 1).collect();
                hyps.push(Hypothesis::indicator(format!("{s:b}x{t:b}"), &members));
            }
        }
        HypothesisClass::new(hyps, false)
    }
}

/// The block-density predictor: `d(V_j, V_k)` on `V_j × V_k`.
pub fn partition_to_predictor(g: &DiGraph, p: &VertexPartition) -> Result<Predictor<Rational>> {
    p.check(g)?;
    let b = Blocks::new(g, p);
    let n = g.n;
    let mut values = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in 0..n {
            let (j, k) = (b.of[u], b.of[v]);
            values.push(OutcomeDist::bernoulli(ratio(b.e[j][k], b.size[j] * b.size[k]))?);
        }
    }
    Predictor::new(values)
}

/// Recovers `𝒫` from a predictor over vertex pairs whose level sets are
/// exactly the blocks `V_j × V_k` of one partition.
pub fn predictor_to_partition(n: usize, pred: &Predictor<Rational>) -> Result<VertexPartition> {
    if pred.len() != n * n {
        return Err(Error::invalid(format!("expected {} vertex pairs, got {}", n * n, pred.len())));
    }
    limit("graph vertices", n, MAX_VERTICES)?;
    let mut levels: BTreeMap<&[Rational], (u64, u64, usize)> = BTreeMap::new();
    for h in 0..n * n {
        let e = levels.entry(pred.get(h).weights()).or_insert((0, 0, 0));
        e.0 |= 1 << (h / n);
        e.1 |= 1 << (h % n);
        e.2 += 1;
    }
    let describe = |w: &[Rational]| w.iter().map(|x| x.to_decimal()).collect::<Vec<_>>().join(",");
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for (w, &(a, b, count)) in &levels {
        if pc(a) as usize * pc(b) as usize != count {
            return Err(Error::Structural(format!(
                "level set at ({}) is not a product of vertex sets",
                describe(w)
            )));
        }
        rows.push(a);
        cols.push(b);
    }
    let mut parts: Vec<u64> = rows.clone();
    parts.extend(&cols);
    parts.sort_unstable();
    parts.dedup();
    let p = VertexPartition::from_masks(n, parts)
        .map_err(|_| Error::Structural("level-set factors do not form one partition".into()))?;
    if levels.len() != p.len() * p.len() {
        let (w, _) = levels.iter().next().expect("nonempty");
        return Err(Error::Structural(format!(
            "{} level sets for {} parts; level ({}) spans several blocks",
            levels.len(),
            p.len(),
            describe(w)
        )));
    }
    Ok(p)
}

/// `Δ_{S,T,v}(p̃) = Σ_{h ∈ S×T, p̃_h = v} (p*_h − p̃_h)` on outcome 1, or the
/// sum over all of `S × T` when `v` is `None`.
pub fn delta_stv(
    pop: &PopulationInstance<Rational>,
    pred: &Predictor<Rational>,
    n: usize,
    s: VertexSet,
    t: VertexSet,
    v: Option<&Rational>,
) -> Rational {
    let mut sum = Rational::zero();
    for u in members(s) {
        for w in members(t) {
            let h = u * n + w;
            let ph = pred.get(h).get(1);
            if v.map_or(true, |v| v == ph) {
                sum += pop.truth()[h].get(1).clone() - ph.clone();
            }
        }
    }
    sum
}

/// `e(S ∩ V_j, T ∩ V_k) − d(V_j, V_k)|S ∩ V_j||T ∩ V_k|`.
pub fn block_residual(g: &DiGraph, p: &VertexPartition, s: VertexSet, t: VertexSet, j: usize, k: usize) -> Rational {
    let (x, y) = (p.masks()[j], p.masks()[k]);
    let (a, b) = (s & x, t & y);
    let (nx, ny) = (pc(x) as i128, pc(y) as i128);
    ratio(
        g.e(a, b) as i128 * nx * ny - g.e(x, y) as i128 * pc(a) as i128 * pc(b) as i128,
        nx * ny,
    )
}

/// Multi-accuracy, multi-calibration and strict multi-calibration audits of
/// a binary predictor over vertex pairs against the rectangle class,
/// computed from the `Δ_{S,T,v}` sums over every `S, T`.
#[derive(Clone, Debug, PartialEq)]
pub struct RectangleAudits {
    pub ma: Rational,
    pub mc: Rational,
    pub smc: Rational,
}

/// Requires `n ≤ 8` and outcome-1 values whose common denominator fits `i64`.
pub fn rectangle_audits(pop: &PopulationInstance<Rational>, pred: &Predictor<Rational>, n: usize) -> Result<RectangleAudits> {
    limit("vertices for rectangle audits", n, RECTANGLE_LIMIT)?;
    if pop.len() != n * n || pred.len() != n * n {
        return Err(Error::invalid("population and predictor must cover all vertex pairs"));
    }
    pop.require_binary()?;
    let mut den = BigInt::from(1);
    for h in 0..n * n {
        den = den.lcm(pred.get(h).get(1).denom());
        den = den.lcm(pop.truth()[h].get(1).denom());
    }
    let d: i128 = i128::try_from(den.clone())
        .ok()
        .filter(|d| *d < i64::MAX as i128)
        .ok_or_else(|| Error::invalid("predictor denominators too large"))?;
    let scaled = |x: &Rational| -> i128 {
        i128::try_from((x.clone() * ratio(d, 1)).floor()).expect("bounded by the common denominator")
    };
    let mut level_of = BTreeMap::new();
    for h in 0..n * n {
        let next = level_of.len();
        level_of.entry(pred.get(h).get(1).clone()).or_insert(next);
    }
    let nl = level_of.len();
    let lv: Vec<usize> = (0..n * n).map(|h| level_of[pred.get(h).get(1)]).collect();
    let resid: Vec<i128> = (0..n * n)
        .map(|h| scaled(pop.truth()[h].get(1)) - scaled(pred.get(h).get(1)))
        .collect();
    let mut whole = vec![0i128; nl];
    for h in 0..n * n {
        whole[lv[h]] += resid[h];
    }
    let whole_sum: i128 = whole.iter().sum();
    let (ma, mc, per_level) = (0u64..1 << n)
        .into_par_iter()
        .map(|t| {
            let mut rows = vec![vec![0i128; nl]; n];
            for (u, row) in rows.iter_mut().enumerate() {
                for w in members(t) {
                    row[lv[u * n + w]] += resid[u * n + w];
                }
            }
            let mut ma = 0i128;
            let mut mc = 0i128;
            let mut per = vec![0i128; nl];
            let mut acc = vec![0i128; nl];
            for s in 0u64..1 << n {
                for x in acc.iter_mut() {
                    *x = 0;
                }
                for u in members(s) {
                    for l in 0..nl {
                        acc[l] += rows[u][l];
                    }
                }
                let tot: i128 = acc.iter().sum();
                ma = ma.max(tot.abs() + (whole_sum - tot).abs());
                let mut sum = 0i128;
                for l in 0..nl {
                    let gap = acc[l].abs() + (whole[l] - acc[l]).abs();
                    sum += gap;
                    per[l] = per[l].max(gap);
                }
                mc = mc.max(sum);
            }
            (ma, mc, per)
        })
        .reduce(
            || (0, 0, vec![0; nl]),
            |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.iter().zip(&b.2).map(|(x, y)| *x.max(y)).collect()),
        );
    let scale = d * n2_of(n);
    Ok(RectangleAudits {
        ma: ratio(ma, scale),
        mc: ratio(mc, scale),
        smc: ratio(per_level.iter().sum(), scale),
    })
}

fn n2_of(n: usize) -> i128 {
    (n * n) as i128
}

/// `V′ = V₁ × V₂` with `(v, b) ↦ v·|V₂| + b`; `((v₁, b₁), (v₂, b₂))` is an
/// edge when exactly one of `(v₁, v₂) ∈ E₁`, `(b₁, b₂) ∈ E₂` holds.
pub fn xor_product(g1: &DiGraph, g2: &DiGraph) -> Result<DiGraph> {
    let (n1, n2) = (g1.n, g2.n);
    let mut edges = Vec::new();
    for v1 in 0..n1 {
        for b1 in 0..n2 {
            for v2 in 0..n1 {
                for b2 in 0..n2 {
                    if g1.has_edge(v1, v2) != g2.has_edge(b1, b2) {
                        edges.push((v1 * n2 + b1, v2 * n2 + b2));
                    }
                }
            }
        }
    }
    DiGraph::new(n1 * n2, &edges)
}

/// The single undirected edge on two vertices, as the pair of arcs
/// `(0, 1)` and `(1, 0)`.
pub fn single_edge_gadget() -> DiGraph {
    DiGraph::new(2, &[(0, 1), (1, 0)]).expect("two vertices")
}

/// `{(v, 0), (v, 1)}` for each `v` of the first factor.
pub fn pair_partition(n1: usize) -> Result<VertexPartition> {
    VertexPartition::new(2 * n1, (0..n1).map(|v| vec![2 * v, 2 * v + 1]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn eps(n: i64, d: i64) -> Eps {
        Eps::new(q(n, d)).unwrap()
    }

    fn cycle4() -> DiGraph {
        DiGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap()
    }

    #[test]
    fn edge_stats_examples() {
        let k = DiGraph::complete(5).unwrap();
        assert_eq!(edge_stats(&k, 0b11, 0b11100).unwrap().density, q(1, 1));
        let e = DiGraph::empty(5).unwrap();
        assert_eq!(edge_stats(&e, 0b11, 0b11).unwrap().density, q(0, 1));
        let c = cycle4();
        let st = edge_stats(&c, 0b1111, 0b1111).unwrap();
        assert_eq!((st.count, st.density), (4, q(1, 4)));
        assert!(matches!(edge_stats(&c, 0, 1), Err(Error::DensityUndefined { count: 0 })));
    }

    #[test]
    fn irregularity_examples() {
        let k = DiGraph::complete(6).unwrap();
        assert_eq!(irregularity(&k, 0b111, 0b111000).unwrap(), q(0, 1));
        let g = DiGraph::new(2, &[(0, 1)]).unwrap();
        // d = 1/4; S = {0}, T = {1} gives |1 − 1/4| = 3/4.
        assert_eq!(irregularity(&g, 0b11, 0b11).unwrap(), q(3, 4));
        assert_eq!(irregularity_naive(&g, 0b11, 0b11).unwrap(), q(3, 4));
    }

    #[test]
    fn st_irregularity_examples() {
        let c = cycle4();
        assert_eq!(st_irregularity(&c, 0b11, 0b1100, 0b1100, 0b1111), q(0, 1));
        assert_eq!(st_irregularity(&c, 0b11, 0b1110, 0b1111, 0b1111), q(0, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = DiGraph::random(6, 0.5, &mut rng).unwrap();
        let (x, y) = (0b000111, 0b111100);
        let mut best = q(0, 1);
        for s in 0..64 {
            for t in 0..64 {
                best = best.max(st_irregularity(&g, x, y, s, t));
            }
        }
        assert_eq!(best, irregularity(&g, x, y).unwrap());
    }

    #[test]
    fn partition_sums_vanish() {
        let k = DiGraph::complete(5).unwrap();
        let p = VertexPartition::new(5, vec![vec![0, 1], vec![2, 3, 4]]).unwrap();
        assert_eq!(partition_irregularity(&k, &p).unwrap(), q(0, 1));
        assert_eq!(partition_st_irregularity(&k, &p, 0b101, 0b11).unwrap(), q(0, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = DiGraph::random(5, 0.5, &mut rng).unwrap();
        let s = VertexPartition::singletons(5);
        assert_eq!(partition_irregularity(&g, &s).unwrap(), q(0, 1));
        assert_eq!(partition_st_irregularity(&g, &s, 0b10110, 0b01101).unwrap(), q(0, 1));
    }

    #[test]
    fn trivial_partition_st_max_is_irregularity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = DiGraph::random(8, 0.5, &mut rng).unwrap();
        let p = VertexPartition::trivial(8);
        let (m, s, t) = max_st_irregularity(&g, &p).unwrap();
        assert_eq!(m, irregularity(&g, 0xff, 0xff).unwrap());
        assert_eq!(partition_st_irregularity(&g, &p, s, t).unwrap(), m);
    }

    #[test]
    fn regular_pair_examples() {
        let k = DiGraph::complete(4).unwrap();
        assert!(check_regular_pair(&k, 0b11, 0b1100, &eps(1, 100)).unwrap().regular);
        // Half graph: a_i → b_j iff i ≤ j.
        let h = DiGraph::new(4, &[(0, 2), (0, 3), (1, 3)]).unwrap();
        let c = check_regular_pair(&h, 0b11, 0b1100, &eps(1, 10)).unwrap();
        assert!(!c.regular);
        let (s, t) = c.witness.unwrap();
        let gap = edge_stats(&h, s, t).unwrap().density - q(3, 4);
        assert!(gap.abs() > q(1, 10));
        assert!(check_regular_pair(&h, 0b11, 0b1100, &eps(1, 1)).unwrap().regular);
    }

    #[test]
    fn single_part_intermediate_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let g = DiGraph::random(7, 0.5, &mut rng).unwrap();
            let total = g.e(g.vertices(), g.vertices()) as i128;
            for e in [eps(1, 20), eps(1, 5), Eps::sqrt(q(1, 10)).unwrap()] {
                let mut mass = 0i128;
                for s in 0..1u64 << 7 {
                    for t in 0..1u64 << 7 {
                        let (ns, nt) = (s.count_ones() as i128, t.count_ones() as i128);
                        let gap = (g.e(s, t) as i128 * 49 - total * ns * nt).abs();
                        if e.cmp_scaled_int(gap, ns * nt * 49) == std::cmp::Ordering::Greater {
                            mass = mass.max(ns * nt);
                        }
                    }
                }
                let r = check_intermediate(&g, &VertexPartition::trivial(7), &e).unwrap();
                assert_eq!(r.value, q(mass as i64, 49));
            }
        }
    }

    #[test]
    fn trivial_graphs_pass_everything() {
        for g in [DiGraph::complete(6).unwrap(), DiGraph::empty(6).unwrap()] {
            let p = VertexPartition::new(6, vec![vec![0, 5], vec![1, 2], vec![3, 4]]).unwrap();
            let e = eps(1, 50);
            assert!(check_szemeredi(&g, &p, &e).unwrap().pass);
            assert!(check_frieze_kannan(&g, &p, &e).unwrap().pass);
            assert!(check_intermediate(&g, &p, &e).unwrap().pass);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = DiGraph::random(6, 0.5, &mut rng).unwrap();
        assert!(check_szemeredi(&g, &VertexPartition::singletons(6), &eps(1, 1000)).unwrap().pass);
    }

    #[test]
    fn frieze_kannan_trivial_partition_failure() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = DiGraph::random(10, 0.5, &mut rng).unwrap();
        let p = VertexPartition::trivial(10);
        let r = check_frieze_kannan(&g, &p, &eps(1, 100)).unwrap();
        assert!(!r.pass);
        assert_eq!(r.value, irregularity(&g, 0x3ff, 0x3ff).unwrap() / q(100, 1));
    }

    #[test]
    fn cut_oracle_examples() {
        let ones = vec![vec![q(1, 1); 4]; 4];
        let c = cut_oracle(&ones, &CutMode::Exact).unwrap();
        assert_eq!((c.s, c.t, c.value), (0b1111, 0b1111, q(16, 1)));
        let zeros = vec![vec![q(0, 1); 4]; 4];
        assert_eq!(cut_oracle(&zeros, &CutMode::Exact).unwrap().value, q(0, 1));
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<Vec<Rational>> = (0..8)
                .map(|_| (0..8).map(|_| if rng.gen_bool(0.5) { q(1, 1) } else { q(-1, 1) }).collect())
                .collect();
            let exact = cut_oracle(&m, &CutMode::Exact).unwrap().value;
            let alt = cut_oracle(&m, &CutMode::Alternating { restarts: 4, seed }).unwrap().value;
            assert!(alt.clone() * q(2, 1) >= exact && alt <= exact);
        }
    }

    #[test]
    fn sigma_search_matches_direct() {
        for seed in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DiGraph::random(7, 0.5, &mut rng).unwrap();
            let p = VertexPartition::new(7, vec![vec![0, 3, 5], vec![1, 2], vec![4, 6]]).unwrap();
            let (direct, _, _) = max_st_irregularity(&g, &p).unwrap();
            let (sigma, _, _) = sigma_search(&g, &p, &CutMode::Exact).unwrap();
            assert_eq!(direct, sigma);
        }
    }

    #[test]
    fn refine_examples() {
        let k = DiGraph::complete(6).unwrap();
        let (p, tr) = refine_intermediate(&k, &eps(1, 4), &RefineMode::Direct).unwrap();
        assert_eq!(p, VertexPartition::trivial(6));
        assert!(tr.steps.is_empty());
        let mut edges = Vec::new();
        for c in [0usize, 4] {
            for u in c..c + 4 {
                for v in c..c + 4 {
                    edges.push((u, v));
                }
            }
        }
        let g = DiGraph::new(8, &edges).unwrap();
        let (p, _) = refine_intermediate(&g, &eps(1, 4), &RefineMode::Direct).unwrap();
        assert!(p.masks().iter().all(|&m| m & 0x0f == 0 || m & 0xf0 == 0));
        assert!(check_intermediate(&g, &p, &eps(1, 4)).unwrap().pass);
    }

    #[test]
    fn instance_examples() {
        let (pop, class) = graph_to_instance(&DiGraph::empty(3).unwrap()).unwrap();
        assert!(pop.truth().iter().all(|d| d.get(0) == &q(1, 1)));
        assert_eq!(class.n, 3);
        let (pop, _) = graph_to_instance(&DiGraph::new(3, &[(1, 2)]).unwrap()).unwrap();
        let ones: Vec<usize> = (0..9).filter(|&h| pop.truth()[h].get(1) == &q(1, 1)).collect();
        assert_eq!(ones, vec![5]);
    }

    #[test]
    fn predictor_round_trip() {
        let k = DiGraph::complete(3).unwrap();
        let pred = partition_to_predictor(&k, &VertexPartition::new(3, vec![vec![0], vec![1, 2]]).unwrap()).unwrap();
        assert!(pred.values().iter().all(|v| v.get(1) == &q(1, 1)));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = DiGraph::random(5, 0.5, &mut rng).unwrap();
        let s = partition_to_predictor(&g, &VertexPartition::singletons(5)).unwrap();
        for h in 0..25 {
            assert_eq!(s.get(h).get(1), &q(g.has_edge(h / 5, h % 5) as i64, 1));
        }
        // Distinct block densities 1, 1/4, 0 and 1/2.
        let g = DiGraph::new(4, &[(0, 0), (0, 1), (1, 0), (1, 1), (0, 2), (2, 2), (2, 3)]).unwrap();
        let p = VertexPartition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let pred = partition_to_predictor(&g, &p).unwrap();
        assert_eq!(predictor_to_partition(4, &pred).unwrap(), p);
        let constant = Predictor::constant(4, OutcomeDist::bernoulli(q(1, 3)).unwrap());
        assert_eq!(predictor_to_partition(2, &constant).unwrap(), VertexPartition::trivial(2));
    }

    #[test]
    fn shared_density_is_structural_failure() {
        // Blocks V1×V1 and V2×V2 share density 1; the rest are 0.
        let g = DiGraph::new(4, &[(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)]).unwrap();
        let p = VertexPartition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let pred = partition_to_predictor(&g, &p).unwrap();
        assert!(matches!(predictor_to_partition(4, &pred), Err(Error::Structural(_))));
    }

    #[test]
    fn xor_examples() {
        let gad = single_edge_gadget();
        let e = xor_product(&DiGraph::empty(3).unwrap(), &gad).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                assert_eq!(e.has_edge(a, b), a % 2 != b % 2);
            }
        }
        let k = xor_product(&DiGraph::complete(3).unwrap(), &gad).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                assert_eq!(k.has_edge(a, b), a % 2 == b % 2);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = DiGraph::random(4, 0.5, &mut rng).unwrap();
        let x = xor_product(&g, &gad).unwrap();
        let p = pair_partition(4).unwrap();
        for &a in p.masks() {
            for &b in p.masks() {
                assert_eq!(edge_stats(&x, a, b).unwrap().density, q(1, 2));
            }
        }
    }

    #[test]
    fn parse_formats() {
        let g = DiGraph::parse("n 4\n0 1\n# comment\n2 3\n").unwrap();
        assert_eq!((g.n(), g.edges()), (4, vec![(0, 1), (2, 3)]));
        let j = DiGraph::parse(&g.to_json().to_string()).unwrap();
        assert_eq!(j, g);
        assert!(DiGraph::parse("0 9 1").is_err());
        assert_eq!(DiGraph::parse("1 2").unwrap().n(), 3);
    }
}
